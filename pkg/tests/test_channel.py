import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoshape import autodiff as ad
from geoshape import channel as ch
from geoshape import metrics as mt
from oracles import ase_oracle_mw, brute_moments, square_qam_complex


def _params(kind=ch.NLIN, power_dbm=0.0, coeffs=None, link=None):
    return ch.ChannelParams.for_link(link or ch.LinkConfig(), power_dbm, kind, coeffs)


def test_qpsk_moments_exact():
    assert mt.qam(4).moments() == (1.0, 1.0)


def test_16qam_moments_match_oracle():
    k, k3 = mt.qam(16).moments()
    ok, ok3 = brute_moments(square_qam_complex(16))
    assert abs(k - ok) < 1e-12 and abs(k3 - ok3) < 1e-12
    assert abs(k - 1.32) < 1e-12 and abs(k3 - 1.96) < 1e-12


@pytest.mark.parametrize("M", [64, 256])
def test_larger_qam_moments_match_oracle(M):
    k, k3 = mt.qam(M).moments()
    ok, ok3 = brute_moments(square_qam_complex(M))
    assert k == pytest.approx(ok, abs=1e-12) and k3 == pytest.approx(ok3, abs=1e-12)


def test_moments_are_scale_invariant():
    pts = np.random.default_rng(0).standard_normal((32, 2))
    assert np.allclose(ch.moments(pts), ch.moments(3.7 * pts), rtol=1e-13)


def test_moments_of_zero_constellation_raise():
    with pytest.raises(ch.ChannelError):
        ch.moments(np.zeros((4, 2)))


def test_ase_matches_one_line_oracle():
    link = ch.LinkConfig()
    ref = ase_oracle_mw(link.span_count, link.span_length, link.attenuation, link.noise_figure,
                        link.symbol_rate, link.center_wavelength)
    assert ch.ase_variance(link) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("spans", [5, 20, 50])
def test_ase_is_linear_in_spans(spans):
    base = ch.ase_variance(ch.LinkConfig(span_count=1))
    assert ch.ase_variance(ch.LinkConfig(span_count=spans)) == pytest.approx(spans * base, rel=1e-12)


def test_nlin_cubic_law():
    c = ch.default_coefficients(20)
    lo = ch.nlin_variance(1.0, 1.32, 1.96, c)
    hi = ch.nlin_variance(2.0, 1.32, 1.96, c)
    assert hi / lo == pytest.approx(8.0, rel=1e-13)


def test_gn_ignores_moments():
    c = ch.default_coefficients(20)
    assert ch.nlin_variance(1.5, 1.0, 1.0, c, ch.GN) == ch.nlin_variance(1.5, 2.0, 5.0, c, ch.GN)


def test_gn_equals_nlin_without_moment_terms():
    c = ch.NLINCoefficients(1.2e4, 0.0, 0.0)
    for k, k3 in [(1.0, 1.0), (1.32, 1.96), (1.38, 2.2)]:
        assert ch.nlin_variance(2.0, k, k3, c, ch.NLIN) == ch.nlin_variance(2.0, k, k3, c, ch.GN)


def test_variance_derivative_wrt_kappa():
    c = ch.default_coefficients(20)
    p = 1.7
    kappa = ad.leaf(1.3, trainable=True)
    kappa3 = ad.leaf(1.9, trainable=True)
    g = ad.backward(ch.nlin_variance(p, kappa, kappa3, c))
    assert float(g[kappa]) == pytest.approx(p ** 3 * c.chi2 * 1e-6, rel=1e-13)
    assert float(g[kappa3]) == pytest.approx(p ** 3 * c.chi3 * 1e-6, rel=1e-13)


def test_negative_nlin_variance_raises():
    with pytest.raises(ch.ChannelError, match="negative"):
        ch.nlin_variance(1.0, 0.0, 0.0, ch.NLINCoefficients(1.0, 10.0, 0.0))


@pytest.mark.parametrize("bad", [
    dict(span_count=0), dict(span_length=-1.0), dict(attenuation=-0.1), dict(nonlinear_coefficient=0.0),
    dict(symbol_rate=0.0), dict(wdm_channels=0)])
def test_link_validation(bad):
    with pytest.raises(ch.ChannelError):
        ch.LinkConfig(**bad).validate()


def test_params_validation():
    with pytest.raises(ch.ChannelError):
        ch.ChannelParams("XPM", 1.0, 0.01).validate()
    with pytest.raises(ch.ChannelError):
        ch.ChannelParams(ch.NLIN, 0.0, 0.01).validate()


def test_channel_apply_noise_variance_and_mean():
    params = _params(power_dbm=2.0)
    k, k3 = mt.qam(16).moments()
    x = np.zeros((400_000, 2))
    y = ch.channel_apply(x, params, k, k3, noise_seed=5).value
    target = ch.total_variance(params, k, k3) / params.power
    assert np.mean(np.sum(y ** 2, axis=1)) == pytest.approx(target, rel=0.01)
    assert abs(np.mean(y)) < 0.01 * np.sqrt(target)


def test_channel_apply_is_seeded():
    params = _params()
    x = mt.qam(16).points
    a = ch.channel_apply(x, params, 1.32, 1.96, noise_seed=3).value
    b = ch.channel_apply(x, params, 1.32, 1.96, noise_seed=3).value
    assert np.array_equal(a, b)


def test_effective_snr_slopes():
    link = ch.LinkConfig()
    k, k3 = mt.qam(16).moments()
    low = [ch.effective_snr(_params(power_dbm=p), k, k3) for p in (-20.0, -19.0)]
    high = [ch.effective_snr(_params(power_dbm=p), k, k3) for p in (14.0, 15.0)]
    assert low[1] - low[0] == pytest.approx(1.0, abs=0.02)
    assert high[1] - high[0] == pytest.approx(-2.0, abs=0.02)
    assert ch.ase_variance(link) > 0


def test_effective_snr_is_unimodal():
    k, k3 = mt.qam(64).moments()
    snr = np.array([ch.effective_snr(_params(power_dbm=p), k, k3) for p in np.arange(-10, 10.01, 0.25)])
    peak = int(np.argmax(snr))
    assert np.all(np.diff(snr[:peak + 1]) > 0) and np.all(np.diff(snr[peak:]) < 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(1.0, 2.0), st.floats(1.0, 4.0))
def test_lower_kappa_never_hurts_snr(p, k, k3):
    a = ch.effective_snr(_params(power_dbm=p), k, k3)
    b = ch.effective_snr(_params(power_dbm=p), k + 0.1, k3)
    assert a >= b


def test_default_table_scaling():
    t = ch.default_chi_table()
    assert sorted(t) == list(range(5, 60, 5))
    assert t[40].chi1 / t[20].chi1 == pytest.approx(2 ** 1.1)
    assert t[20].chi2 / t[20].chi1 == pytest.approx(0.4)


def test_dbm_conversions():
    assert ch.dbm_to_mw(0.0) == 1.0
    assert ch.mw_to_dbm(10.0) == pytest.approx(10.0)
