"""GN and NLIN fiber-channel models as additive Gaussian noise.

Conventions: constellations carry unit average energy per complex symbol and
the launch power ``P`` (mW, per WDM channel) only scales the noise, so the
noise seen by a unit-power constellation has variance ``sigma2_total / P``
per complex symbol. NLIN coefficients are stored in W^-2 and converted here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

PLANCK = 6.62607015e-34  # J s
LIGHT_SPEED = 299792458.0  # m/s

GN = "GN"
NLIN = "NLIN"
MODEL_KINDS = (GN, NLIN)


class ChannelError(ValueError):
    pass


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(p_mw)


@dataclass
class LinkConfig:
    span_count: int = 20
    span_length: float = 100.0  # km
    attenuation: float = 0.2  # dB/km
    dispersion: float = 16.46  # ps/(nm km)
    nonlinear_coefficient: float = 1.3  # 1/(W km)
    symbol_rate: float = 32.0  # GBd
    channel_spacing: float = 50.0  # GHz
    wdm_channels: int = 5
    center_wavelength: float = 1550.0  # nm
    noise_figure: float = 5.0  # dB

    def validate(self):
        if int(self.span_count) != self.span_count or self.span_count < 1:
            raise ChannelError(f"span_count must be an integer >= 1, got {self.span_count}")
        if int(self.wdm_channels) != self.wdm_channels or self.wdm_channels < 1:
            raise ChannelError(f"wdm_channels must be an integer >= 1, got {self.wdm_channels}")
        for name in ("span_length", "attenuation", "dispersion", "nonlinear_coefficient",
                     "symbol_rate", "channel_spacing", "center_wavelength", "noise_figure"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ChannelError(f"{name} must be positive, got {value}")
        return self

    @property
    def span_loss_db(self) -> float:
        return self.attenuation * self.span_length

    @property
    def span_gain(self) -> float:
        """Linear amplifier gain that exactly undoes one span's loss."""
        return 10.0 ** (self.span_loss_db / 10.0)

    @property
    def carrier_frequency(self) -> float:
        return LIGHT_SPEED / (self.center_wavelength * 1e-9)

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in ps^2/km."""
        lam = self.center_wavelength * 1e-9
        d_si = self.dispersion * 1e-6  # s/m^2
        return -d_si * lam ** 2 / (2 * np.pi * LIGHT_SPEED) * 1e27


@dataclass
class NLINCoefficients:
    chi1: float
    chi2: float = 0.0
    chi3: float = 0.0

    def validate(self):
        if not np.isfinite(self.chi1) or self.chi1 <= 0:
            raise ChannelError(f"chi1 must be positive, got {self.chi1}")
        if not (np.isfinite(self.chi2) and np.isfinite(self.chi3)):
            raise ChannelError("chi2 and chi3 must be finite")
        return self

    def scaled(self, factor: float) -> "NLINCoefficients":
        return NLINCoefficients(self.chi1 * factor, self.chi2 * factor, self.chi3 * factor)


# Illustrative coefficients for the default 5 x 32 GBd, 50 GHz link (W^-2).
# chi1 at 20 spans comes from a single split-step calibration run; the other
# span counts scale as spans**1.1 and the modulation terms keep fixed ratios
# chi2/chi1 = 0.4, chi3/chi1 = 0.02. Not derived from perturbation integrals.
DEFAULT_CHI1_20_SPANS = 1.73e4
DEFAULT_CHI2_RATIO = 0.4
DEFAULT_CHI3_RATIO = 0.02


def default_coefficients(span_count: int) -> NLINCoefficients:
    chi1 = DEFAULT_CHI1_20_SPANS * (span_count / 20.0) ** 1.1
    return NLINCoefficients(chi1, DEFAULT_CHI2_RATIO * chi1, DEFAULT_CHI3_RATIO * chi1)


def default_chi_table(span_counts=range(5, 60, 5)) -> dict[int, NLINCoefficients]:
    return {int(n): default_coefficients(int(n)) for n in span_counts}


@dataclass
class ChannelParams:
    model_kind: str
    power: float  # mW per channel
    sigma2_ase: float  # mW
    coefficients: NLINCoefficients = field(default_factory=lambda: default_coefficients(20))

    def validate(self):
        if self.model_kind not in MODEL_KINDS:
            raise ChannelError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if not self.power > 0:
            raise ChannelError(f"launch power must be positive, got {self.power}")
        if not self.sigma2_ase > 0:
            raise ChannelError(f"sigma2_ase must be positive, got {self.sigma2_ase}")
        self.coefficients.validate()
        return self

    @classmethod
    def for_link(cls, link: LinkConfig, power_dbm: float, model_kind: str = NLIN,
                 coefficients: NLINCoefficients | None = None) -> "ChannelParams":
        coeffs = coefficients or default_coefficients(link.span_count)
        return cls(model_kind, float(dbm_to_mw(power_dbm)), ase_variance(link), coeffs).validate()


# ---------------------------------------------------------------------------


def moments(points):
    """Normalized 4th and 6th moments of a constellation.

    ``points`` is [M, N] with N even; each (x, y) column pair is one complex
    symbol and all pairs are pooled with uniform weight. Returns tape nodes
    when given a node, floats otherwise.
    """
    on_tape = isinstance(points, ad.Node)
    p = points if on_tape else ad.constant(points)
    a2 = ad.abs2_pairs(p)
    m2 = ad.reduce_mean(a2)
    if float(m2.value) <= 0.0:
        raise ChannelError("moments of an all-zero constellation are undefined")
    a4 = ad.square(a2)
    m4 = ad.reduce_mean(a4)
    m6 = ad.reduce_mean(ad.mul(a4, a2))
    m2sq = ad.square(m2)
    kappa = ad.div(m4, m2sq)
    kappa3 = ad.div(m6, ad.mul(m2sq, m2))
    if on_tape:
        return kappa, kappa3
    return float(kappa.value), float(kappa3.value)


def ase_variance(link: LinkConfig) -> float:
    """Accumulated ASE power (mW, both polarizations) in the symbol-rate bandwidth."""
    for name in ("span_length", "attenuation", "symbol_rate", "center_wavelength", "noise_figure"):
        if not getattr(link, name) > 0:
            raise ChannelError(f"{name} must be positive, got {getattr(link, name)}")
    if int(link.span_count) != link.span_count or link.span_count < 1:
        raise ChannelError(f"span_count must be an integer >= 1, got {link.span_count}")
    photon = PLANCK * link.carrier_frequency
    nf = 10.0 ** (link.noise_figure / 10.0)
    per_span = (link.span_gain - 1.0) * photon * nf * link.symbol_rate * 1e9
    return link.span_count * per_span * 1e3


def _nlin_factor(kappa, kappa3, coeffs: NLINCoefficients, model_kind: str):
    """chi1 + chi2 (kappa - 2) + chi3 kappa3 (W^-2); chi1 alone for GN."""
    if model_kind == GN:
        return coeffs.chi1
    if isinstance(kappa, ad.Node) or isinstance(kappa3, ad.Node):
        return ad.add(ad.add(coeffs.chi1, ad.mul(coeffs.chi2, ad.sub(kappa, 2.0))),
                      ad.mul(coeffs.chi3, kappa3))
    return coeffs.chi1 + coeffs.chi2 * (kappa - 2.0) + coeffs.chi3 * kappa3


def nlin_variance(power, kappa, kappa3, coeffs: NLINCoefficients, model_kind: str = NLIN):
    """NLIN variance in mW for launch power in mW."""
    if model_kind not in MODEL_KINDS:
        raise ChannelError(f"unknown model kind {model_kind!r}")
    factor = _nlin_factor(kappa, kappa3, coeffs, model_kind)
    scale = power ** 3 * 1e-6  # mW^3 * W^-2 -> mW
    value = float(factor.value) if isinstance(factor, ad.Node) else float(factor)
    if value < 0:
        k = float(kappa.value) if isinstance(kappa, ad.Node) else kappa
        k3 = float(kappa3.value) if isinstance(kappa3, ad.Node) else kappa3
        raise ChannelError(
            f"negative NLIN variance for kappa={k}, kappa3={k3}, "
            f"chi=({coeffs.chi1}, {coeffs.chi2}, {coeffs.chi3})")
    if isinstance(factor, ad.Node):
        return ad.mul(factor, scale)
    return factor * scale


def total_variance(params: ChannelParams, kappa, kappa3):
    nl = nlin_variance(params.power, kappa, kappa3, params.coefficients, params.model_kind)
    if isinstance(nl, ad.Node):
        return ad.add(nl, params.sigma2_ase)
    return nl + params.sigma2_ase


def channel_apply(x, params: ChannelParams, kappa, kappa3, noise_seed=None, noise=None):
    """y = x + sqrt(sigma2_total / P) * eps, split evenly over each complex pair.

    ``noise`` may supply the standard-normal draws directly; otherwise they are
    generated from ``noise_seed``. Gradients reach x and, via the variance,
    kappa and kappa3.
    """
    x = x if isinstance(x, ad.Node) else ad.constant(x)
    if noise is None:
        noise = np.random.default_rng(noise_seed).standard_normal(x.shape)
    var = total_variance(params, kappa, kappa3)
    var_value = float(var.value) if isinstance(var, ad.Node) else float(var)
    if not np.isfinite(var_value):
        raise ChannelError(f"non-finite noise variance {var_value}")
    if var_value == 0.0:
        return x
    scale = 0.5 / params.power
    per_dim = ad.mul(var, scale) if isinstance(var, ad.Node) else var * scale
    if isinstance(per_dim, ad.Node):
        return ad.add(x, ad.mul(ad.sqrt(per_dim), noise))
    return ad.add(x, np.sqrt(per_dim) * noise)


def effective_snr(params: ChannelParams, kappa: float = 1.0, kappa3: float = 1.0) -> float:
    var = total_variance(params, kappa, kappa3)
    return float(10.0 * np.log10(params.power / var))
