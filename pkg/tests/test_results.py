import math

import pytest

from geoshape import results as rs


def _row(power, kind, label, mi, M=16, path="model", kappa=1.3):
    return rs.ResultRow(power, 20, kind, label, M, mi, 0.01, kappa, 1.9, 12.0, path)


def test_csv_round_trip_keeps_floats_and_nan():
    rows = [_row(0.1, "NLIN", "a", 1 / 3), _row(1.0, rs.BASELINE, "16-QAM", float("nan"))]
    rows[0].error = "boom, with comma"
    back = rs.rows_from_csv(rs.rows_to_csv(rows))
    assert rs.rows_to_csv(back) == rs.rows_to_csv(rows)
    assert back[0].mi_bit_4d == 1 / 3 and back[0].error == "boom, with comma"
    assert math.isnan(back[1].mi_bit_4d) and back[1].label == "16-QAM"


def test_missing_columns_rejected():
    with pytest.raises(ValueError, match="missing columns"):
        rs.rows_from_csv("power_dbm,label\n0,x\n")
    with pytest.raises(ValueError, match="empty"):
        rs.rows_from_csv("")


def test_atomic_write_creates_parents(tmp_path):
    target = tmp_path / "a" / "b" / "x.csv"
    rs.atomic_write(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in target.parent.iterdir()] == ["x.csv"]


def test_gain_bundles():
    rows = [_row(p, rs.BASELINE, "16-QAM", 7.0 - abs(p), kappa=1.32) for p in (-1.0, 0.0, 1.0)]
    rows += [_row(p, "NLIN", f"l{p}", 7.1 - abs(p) / 2) for p in (-1.0, 0.0, 1.0)]
    rows.append(_row(2.0, "NLIN", "failed", float("nan")))
    header, recs = rs.gain_vs_power(rows)
    gains = [r[header.index("gain_bit_4d")] for r in recs]
    assert gains == pytest.approx([0.6, 0.1, 0.6])
    header, recs = rs.gain_vs_spans(rows)
    assert len(recs) == 1 and recs[0][header.index("gain_bit_4d")] == pytest.approx(0.1)
    header, recs = rs.moments_vs_power(rows)
    assert all(r[header.index("model_kind")] == "NLIN" for r in recs) and len(recs) == 3


def test_bundles_do_not_depend_on_row_order():
    rows = [_row(p, "NLIN", f"l{p}", 7.0) for p in (1.0, -1.0, 0.0)]
    assert rs.figure_bundles(rows) == rs.figure_bundles(rows[::-1])
    assert set(rs.figure_bundles(rows)) == set(rs.FIGURES)
