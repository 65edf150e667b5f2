"""Command-line entry points: train, evaluate, ssf-validate, figures."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channel as ch
from . import metrics, results, ssf
from .config import ConfigError, RunConfig, load_config, seed_array, train_kinds, train_seeds, with_seed
from .trainer import TrainingError, train

log = logging.getLogger("geoshape")


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _meta(cfg: RunConfig, **extra) -> str:
    meta = {"seed": cfg.seed, "config_hash": cfg.config_hash, **extra}
    return json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n"


def _row(cfg: RunConfig, power, spans, kind, c: metrics.Constellation, path: str, ev=None,
         mi=None, error: str = "") -> results.ResultRow:
    row = results.ResultRow(float(power), int(spans), kind, c.label if c else "", c.M if c else 0,
                            float("nan"), float("nan"), float("nan"), float("nan"), float("nan"),
                            path, seed=cfg.seed, config_hash=cfg.config_hash, error=error)
    if ev is not None:
        row.mi_bit_4d, row.mi_std_error = ev.mi.value, ev.mi.std_error
        row.kappa, row.kappa3, row.snr_db = ev.kappa, ev.kappa3, ev.snr_db
    return row


def _eval_params(cfg: RunConfig, power, spans) -> ch.ChannelParams:
    link = cfg.link_for(spans)
    return ch.ChannelParams.for_link(link, power, cfg.evaluate.kind, cfg.coefficients(spans))


# ---------------------------------------------------------------------------
# train


def _train_point(task):
    cfg, power, spans, kind, seed = task
    tcfg = replace(cfg.train, model_kind=kind, seed=seed)
    label = f"{tcfg.M}-{kind}-{power:g}dBm-{spans}sp-s{seed}"
    link = cfg.link_for(spans)
    params = ch.ChannelParams.for_link(link, power, kind, cfg.coefficients(spans))
    try:
        res = train(tcfg, params, label=label)
    except (TrainingError, ValueError) as exc:
        return label, None, None, f"{type(exc).__name__}: {exc}"
    ev = metrics.evaluate(res.constellation, _eval_params(cfg, power, spans),
                          samples=cfg.evaluate.samples, seed=seed_array(cfg.seed, spans, 0))
    return label, res, ev, ""


def cmd_train(cfg: RunConfig, out: Path, jobs: int) -> int:
    tasks = [(cfg, p, n, k, s) for (p, n) in cfg.sweep.grid()
             for k in train_kinds(cfg) for s in train_seeds(cfg)]
    rows = []
    for (_, power, spans, kind, seed), (label, res, ev, err) in zip(tasks, _map(_train_point, tasks, jobs)):
        if res is None:
            log.error("%s failed: %s", label, err)
            rows.append(results.ResultRow(power, spans, kind, label, cfg.train.M, *[float("nan")] * 5,
                                          "model", seed=cfg.seed, config_hash=cfg.config_hash,
                                          error=err))
            continue
        d = out / label
        results.atomic_write(d / "constellation.txt", metrics.format_constellation(res.constellation))
        results.atomic_write(d / "loss.csv", results.table_to_csv(["iteration", "loss"],
                                                                  [list(t) for t in res.loss_trace]))
        results.atomic_write(d / "meta.json", _meta(cfg, train_seed=seed, power_dbm=power,
                                                    span_count=spans, config=res.config,
                                                    kappa=res.kappa, kappa3=res.kappa3))
        rows.append(_row(cfg, power, spans, kind, res.constellation, "model", ev))
    results.write_rows(out / "train_summary.csv", rows)
    results.atomic_write(out / "train_summary.meta.json", _meta(cfg, command="train"))
    failed = sum(1 for r in rows if r.error)
    print(f"trained {len(rows) - failed}/{len(rows)} grid points -> {out}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# evaluate


def _load_all(paths, extra_qam) -> tuple[list[metrics.Constellation], list[str]]:
    consts, errors = [], []
    for p in paths:
        try:
            consts.append(metrics.load_constellation(p))
        except (OSError, ValueError) as exc:
            errors.append(f"{p}: {exc}")
            log.error("skipping %s: %s", p, exc)
    consts += [metrics.qam(m) for m in extra_qam]
    labels = [c.label for c in consts]
    dupes = sorted({x for x in labels if labels.count(x) > 1})
    if dupes:
        raise ConfigError(f"duplicate constellation labels: {dupes}")
    return consts, errors


def _kind_of(c: metrics.Constellation) -> str:
    for kind in ch.MODEL_KINDS:
        if f"-{kind}-" in c.label:
            return kind
    return results.BASELINE


def _eval_point(task):
    cfg, c, power, spans = task
    ev = metrics.evaluate(c, _eval_params(cfg, power, spans), samples=cfg.evaluate.samples,
                          seed=seed_array(cfg.seed, spans, 0))
    return _row(cfg, power, spans, _kind_of(c), c, "model", ev)


def cmd_evaluate(cfg: RunConfig, paths, out: Path, jobs: int) -> int:
    consts, errors = _load_all(paths, cfg.evaluate.qam)
    tasks = [(cfg, c, p, n) for c in consts for (p, n) in cfg.sweep.grid()]
    rows = _map(_eval_point, tasks, jobs)
    results.write_rows(out / "evaluate.csv", rows)
    results.atomic_write(out / "evaluate.meta.json", _meta(cfg, command="evaluate", parse_errors=errors))
    print(f"evaluated {len(consts)} constellations x {len(cfg.sweep.grid())} grid points -> {out}")
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# ssf-validate


def _ssf_point(task):
    cfg, c, power, spans, coeffs = task
    link = cfg.link_for(spans)
    sim_seed = seed_array(cfg.seed, spans, int(round(power * 1000)))
    scfg = cfg.ssf.build(link, power, sim_seed)
    try:
        rx, mi = ssf.simulate(c, scfg)
    except (ssf.SimulationError, ValueError) as exc:
        return _row(cfg, power, spans, _kind_of(c), c, "ssf",
                    error=f"{type(exc).__name__} at {power} dBm / {spans} spans: {exc}"), sim_seed
    params = ch.ChannelParams.for_link(link, power, cfg.evaluate.kind, coeffs)
    model = metrics.evaluate(c, params, samples=cfg.evaluate.samples, seed=seed_array(cfg.seed, spans, 0))
    kappa, kappa3 = c.moments()
    row = _row(cfg, power, spans, _kind_of(c), c, "ssf")
    row.mi_bit_4d, row.mi_std_error = mi.value, mi.std_error
    row.kappa, row.kappa3 = kappa, kappa3
    row.snr_db = float(-10 * np.log10(mi.sigma2))
    row.model_mi_diff = mi.value - model.mi.value
    return row, sim_seed


def cmd_ssf_validate(cfg: RunConfig, paths, out: Path, jobs: int) -> int:
    consts, errors = _load_all(paths, cfg.evaluate.qam)
    coeffs = {n: cfg.coefficients(n) for n in cfg.sweep.span_counts}
    calibration = {}
    if cfg.ssf.calibrate:
        ref = next((c for c in consts if c.label == cfg.ssf.calibration_label), consts[0] if consts else None)
        if ref is None:
            raise ConfigError("calibration needs at least one constellation")
        for n in cfg.sweep.span_counts:
            scfg = cfg.ssf.build(cfg.link_for(n), cfg.ssf.calibration_power, seed_array(cfg.seed, n, 7))
            coeffs[n], measured = ssf.calibrate_coefficients(ref, scfg, coeffs[n])
            calibration[n] = {"reference": ref.label, "measured_sigma2_mw": measured,
                              "chi": [coeffs[n].chi1, coeffs[n].chi2, coeffs[n].chi3]}
    tasks = [(cfg, c, p, n, coeffs[n]) for c in consts for (p, n) in cfg.sweep.grid()]
    outcome = _map(_ssf_point, tasks, jobs)
    rows = [r for r, _ in outcome]
    seeds = {f"{r.label}@{r.power_dbm:g}dBm/{r.span_count}sp": s for r, s in outcome}
    results.write_rows(out / "ssf.csv", rows)
    results.atomic_write(out / "ssf.meta.json", _meta(cfg, command="ssf-validate", simulation_seeds=seeds,
                                                      calibration=calibration, parse_errors=errors))
    print(f"simulated {len(rows)} points -> {out}")
    return 1 if errors or any(r.error for r in rows) else 0


# ---------------------------------------------------------------------------
# figures


def cmd_figures(csv_paths, out: Path) -> int:
    rows = []
    for p in csv_paths:
        rows += results.read_rows(p)
    for name, text in results.figure_bundles(rows).items():
        results.atomic_write(out / f"{name}.csv", text)
    print(f"wrote {len(results.FIGURES)} figure bundles -> {out}")
    return 0


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, needs_config: bool = True):
    p.add_argument("--config", required=needs_config, help="run configuration (INI)")
    p.add_argument("--out", help="output directory (default: [run] output)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid points")
    p.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoshape", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="train constellations over the sweep grid"))
    p = sub.add_parser("evaluate", help="channel-model MI of constellation files over the grid")
    p.add_argument("constellations", nargs="*")
    _common(p)
    p = sub.add_parser("ssf-validate", help="split-step simulation MI of constellation files")
    p.add_argument("constellations", nargs="*")
    _common(p)
    p = sub.add_parser("figures", help="per-figure CSV bundles from result CSVs")
    p.add_argument("results", nargs="+")
    _common(p, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "figures":
            for p in args.results:
                results.read_rows(p)  # header check before writing anything
            if args.dry_run:
                print("inputs ok")
                return 0
            return cmd_figures(args.results, Path(args.out or "figures"))
        cfg = with_seed(load_config(args.config), args.seed).validate()
        out = Path(args.out or cfg.output)
        if args.dry_run:
            print(f"config ok (hash {cfg.config_hash}, seed {cfg.seed})")
            return 0
        if args.command == "train":
            return cmd_train(cfg, out, args.jobs)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.constellations, out, args.jobs)
        return cmd_ssf_validate(cfg, args.constellations, out, args.jobs)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
