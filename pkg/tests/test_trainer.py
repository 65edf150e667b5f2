import numpy as np
import pytest

from geoshape import autodiff as ad
from geoshape import channel as ch
from geoshape import metrics as mt
from geoshape import trainer as tr


def _params(kind=ch.NLIN, power_dbm=0.0, coeffs=None):
    return ch.ChannelParams.for_link(ch.LinkConfig(), power_dbm, kind, coeffs)


def test_sample_one_hot():
    s = tr.sample_one_hot(8, 1000, 0)
    assert s.shape == (1000, 8) and np.all(s.sum(axis=1) == 1)
    assert set(np.unique(s)) == {0.0, 1.0}
    assert np.array_equal(s, tr.sample_one_hot(8, 1000, 0))
    assert np.all(s.sum(axis=0) > 80)


def test_normalize_power_gives_unit_energy():
    pts = ad.leaf(np.random.default_rng(0).standard_normal((16, 2)) * 5, trainable=True)
    out = tr.normalize_power(pts)
    assert mt.Constellation(out.value).mean_energy() == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ch.ChannelError):
        tr.normalize_power(ad.leaf(np.zeros((4, 2))))


def test_end_to_end_gradient_m8():
    cfg = tr.TrainConfig(M=8, hidden_widths=[8, 8], seed=3)
    state = tr.init_state(cfg, _params(power_dbm=3.0))
    batch = tr.sample_one_hot(8, 16, 1)
    noise = np.random.default_rng(2).standard_normal((16, 2))
    loss, _, kappa, _ = tr.build_loss(state, batch, noise)
    assert kappa is not None
    assert ad.check_gradients(loss, state.encoder.parameters() + state.decoder.parameters()) < 1e-5


def test_moment_gradient_reaches_encoder():
    cfg = tr.TrainConfig(M=8, hidden_widths=[8], seed=0)
    params = _params(power_dbm=5.0)
    state = tr.init_state(cfg, params)
    pts = tr.constellation_node(state)
    kappa, _ = ch.moments(pts)
    grads = ad.backward(kappa)
    assert np.any(grads[state.encoder.layers[0].weights] != 0)


def test_initial_loss_near_log_m():
    cfg = tr.TrainConfig(M=16, iterations=1, seed=0, trace_every=1)
    res = tr.train(cfg, _params())
    assert res.loss_trace[0][1] == pytest.approx(np.log(16), rel=0.15)


def test_zero_learning_rate_freezes_constellation():
    cfg = tr.TrainConfig(M=8, iterations=5, learning_rate=0.0, seed=1)
    res = tr.train(cfg, _params())
    state = tr.init_state(cfg, _params())
    assert np.array_equal(res.constellation.points, tr.extract_constellation(state).points)


def test_training_is_deterministic():
    cfg = tr.TrainConfig(M=8, iterations=30, seed=4)
    a = tr.train(cfg, _params())
    b = tr.train(cfg, _params())
    assert np.array_equal(a.constellation.points, b.constellation.points)
    assert a.loss_trace == b.loss_trace


def test_gn_matches_nlin_without_moment_terms():
    coeffs = ch.NLINCoefficients(1.5e4, 0.0, 0.0)
    runs = [tr.train(tr.TrainConfig(M=8, iterations=40, seed=2, model_kind=k),
                     _params(k, 4.0, coeffs)) for k in ch.MODEL_KINDS]
    assert np.array_equal(runs[0].constellation.points, runs[1].constellation.points)


def test_result_is_unit_power():
    res = tr.train(tr.TrainConfig(M=16, iterations=20, seed=0), _params())
    res.constellation.validate()
    assert (res.kappa, res.kappa3) == pytest.approx(res.constellation.moments())
    assert res.config["chi"][0] == _params().coefficients.chi1


def test_m4_learns_qpsk_like_geometry():
    cfg = tr.TrainConfig(M=4, iterations=1500, batch_size=256, learning_rate=5e-3, seed=0)
    res = tr.train(cfg, _params(power_dbm=-8.0))
    d = res.constellation.min_distance()
    assert d == pytest.approx(mt.qam(4).min_distance(), rel=0.05)


def test_training_error_carries_trace():
    params = _params()
    params.power = float("nan")
    with pytest.raises((tr.TrainingError, ch.ChannelError)):
        tr.train(tr.TrainConfig(M=4, iterations=3), params)


@pytest.mark.parametrize("bad", [dict(M=2), dict(N=3), dict(batch_size=0), dict(optimizer="x"),
                                 dict(learning_rate=-1.0), dict(model_kind="SPM")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        tr.TrainConfig(**bad).validate()


def test_sweep_records_failures_and_continues():
    spec = tr.SweepSpec([-2.0, 0.0], [20])
    cfg = tr.TrainConfig(M=4, iterations=5)
    table = {20: ch.NLINCoefficients(1e4, 0.4e4, 200.0)}
    out = tr.sweep(spec, cfg, ch.LinkConfig(), table, eval_samples=2000)
    assert [r.power_dbm for r, _ in out] == [-2.0, 0.0]
    assert all(not r.error and np.isfinite(r.mi) for r, _ in out)
    with pytest.raises(ValueError, match="no NLIN coefficients"):
        tr.sweep(tr.SweepSpec([0.0], [30]), cfg, ch.LinkConfig(), table)
    with pytest.raises(ValueError):
        tr.SweepSpec([12.0], [20]).validate()
