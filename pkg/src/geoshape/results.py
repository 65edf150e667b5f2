"""Result rows, CSV persistence and per-figure data bundles."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path

BASELINE = "baseline"


@dataclass
class ResultRow:
    power_dbm: float
    span_count: int
    model_kind: str  # training kind, or "baseline" for QAM / external files
    label: str
    M: int
    mi_bit_4d: float
    mi_std_error: float
    kappa: float
    kappa3: float
    snr_db: float
    path: str  # "model" or "ssf"
    model_mi_diff: float = float("nan")  # ssf MI minus model MI, ssf rows only
    seed: int = 0
    config_hash: str = ""
    error: str = ""


HEADER = [f.name for f in fields(ResultRow)]
_TYPES = {f.name: f.type for f in fields(ResultRow)}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in HEADER])
    return buf.getvalue()


def _conv(name: str, raw: str):
    kind = _TYPES[name]
    if kind in ("float", float):
        return float(raw) if raw != "" else float("nan")
    if kind in ("int", int):
        return int(raw)
    return raw


def rows_from_csv(text: str, source: str = "") -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{source or 'csv'}: empty file") from None
    missing = [h for h in HEADER if h not in header]
    if missing:
        raise ValueError(f"{source or 'csv'}: missing columns {missing}")
    pos = {h: header.index(h) for h in HEADER}
    return [ResultRow(**{h: _conv(h, rec[pos[h]]) for h in HEADER}) for rec in reader if rec]


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows(path, rows):
    atomic_write(path, rows_to_csv(rows))


def read_rows(path) -> list[ResultRow]:
    return rows_from_csv(Path(path).read_text(), source=str(path))


def table_to_csv(header: list[str], records: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        w.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# figure bundles


def _key(r: ResultRow):
    return (r.path, r.span_count, r.M, r.model_kind, r.label, r.power_dbm)


def _valid(rows):
    return sorted((r for r in rows if not r.error and not math.isnan(r.mi_bit_4d)), key=_key)


def _baselines(rows):
    """(path, spans, M, power) -> MI of the square-QAM row."""
    out = {}
    for r in rows:
        if r.model_kind == BASELINE and r.label == f"{r.M}-QAM":
            out[(r.path, r.span_count, r.M, r.power_dbm)] = r.mi_bit_4d
    return out


def mi_vs_power(rows):
    header = ["path", "span_count", "M", "model_kind", "label", "power_dbm", "mi_bit_4d", "mi_std_error"]
    recs = [[r.path, r.span_count, r.M, r.model_kind, r.label, r.power_dbm, r.mi_bit_4d, r.mi_std_error]
            for r in _valid(rows)]
    return header, recs


def gain_vs_power(rows):
    """Learned MI minus same-M QAM MI at the same power, spans and path."""
    rows = _valid(rows)
    base = _baselines(rows)
    header = ["path", "span_count", "M", "model_kind", "label", "power_dbm", "mi_bit_4d",
              "qam_mi_bit_4d", "gain_bit_4d"]
    recs = []
    for r in rows:
        if r.model_kind == BASELINE:
            continue
        ref = base.get((r.path, r.span_count, r.M, r.power_dbm))
        if ref is None:
            continue
        recs.append([r.path, r.span_count, r.M, r.model_kind, r.label, r.power_dbm,
                     r.mi_bit_4d, ref, r.mi_bit_4d - ref])
    return header, recs


def moments_vs_power(rows):
    header = ["path", "span_count", "M", "model_kind", "label", "power_dbm", "kappa", "kappa3"]
    recs = [[r.path, r.span_count, r.M, r.model_kind, r.label, r.power_dbm, r.kappa, r.kappa3]
            for r in _valid(rows) if r.model_kind != BASELINE]
    return header, recs


def gain_vs_spans(rows):
    """Per (path, M, training kind, spans): best learned MI minus best QAM MI over power."""
    rows = _valid(rows)
    best: dict = {}
    qam_best: dict = {}
    for r in rows:
        if r.model_kind == BASELINE:
            if r.label == f"{r.M}-QAM":
                k = (r.path, r.M, r.span_count)
                if k not in qam_best or r.mi_bit_4d > qam_best[k][0]:
                    qam_best[k] = (r.mi_bit_4d, r.power_dbm)
            continue
        k = (r.path, r.M, r.model_kind, r.span_count)
        if k not in best or r.mi_bit_4d > best[k][0]:
            best[k] = (r.mi_bit_4d, r.power_dbm)
    header = ["path", "M", "model_kind", "span_count", "opt_power_dbm", "mi_bit_4d",
              "qam_opt_power_dbm", "qam_mi_bit_4d", "gain_bit_4d"]
    recs = []
    for (path, M, kind, spans), (mi, p) in sorted(best.items()):
        q = qam_best.get((path, M, spans))
        if q is None:
            continue
        recs.append([path, M, kind, spans, p, mi, q[1], q[0], mi - q[0]])
    return header, recs


FIGURES = {
    "fig2_mi_vs_power": mi_vs_power,
    "fig3_gain_vs_power": gain_vs_power,
    "fig4_moments_vs_power": moments_vs_power,
    "fig4_gain_vs_spans": gain_vs_spans,
}


def figure_bundles(rows) -> dict[str, str]:
    return {name: table_to_csv(*fn(rows)) for name, fn in FIGURES.items()}


def row_dict(r: ResultRow) -> dict:
    return asdict(r)
