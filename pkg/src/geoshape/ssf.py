"""Dual-polarization WDM split-step Fourier simulation and receiver.

Internal units: time in ps, frequency in THz, distance in km, power in W.
Waveforms are periodic (circular) over the whole symbol block, so pulse
shaping, dispersion and matched filtering are exact FFT-domain products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import channel as ch
from . import metrics

MANAKOV_FACTOR = 8.0 / 9.0


class SimulationError(RuntimeError):
    pass


class AliasingError(SimulationError):
    pass


class SynchronizationError(SimulationError):
    pass


@dataclass
class SSFConfig:
    link: ch.LinkConfig = field(default_factory=ch.LinkConfig)
    samples_per_symbol: int = 16
    symbols_per_channel: int = 2 ** 14
    steps_per_span: int = 50
    rrc_rolloff: float = 0.05
    launch_power: float = 0.0  # dBm per channel
    seed: int = 0
    ase: bool = True

    def validate(self):
        link = self.link
        for name in ("symbol_rate", "channel_spacing", "center_wavelength", "span_length"):
            if not getattr(link, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("attenuation", "nonlinear_coefficient", "dispersion"):
            if getattr(link, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if link.span_count < 1 or link.wdm_channels < 1:
            raise ValueError("span_count and wdm_channels must be >= 1")
        if self.steps_per_span < 10:
            raise ValueError(f"steps_per_span must be >= 10, got {self.steps_per_span}")
        if not 0.0 <= self.rrc_rolloff <= 1.0:
            raise ValueError(f"rrc_rolloff must be in [0, 1], got {self.rrc_rolloff}")
        if self.symbols_per_channel < 1 or self.samples_per_symbol < 2:
            raise ValueError("need symbols_per_channel >= 1 and samples_per_symbol >= 2")
        fs = self.samples_per_symbol * self.link.symbol_rate
        occupied = self.link.wdm_channels * self.link.channel_spacing
        if fs < occupied:
            raise AliasingError(f"sample rate {fs} GHz below WDM bandwidth {occupied} GHz")
        edge = (self.link.wdm_channels - 1) / 2 * self.link.channel_spacing \
            + (1 + self.rrc_rolloff) * self.link.symbol_rate / 2
        if edge > fs / 2:
            raise AliasingError(f"outer channel edge {edge} GHz beyond Nyquist {fs / 2} GHz")
        return self

    @property
    def sample_rate(self) -> float:
        """THz (samples per ps)."""
        return self.samples_per_symbol * self.link.symbol_rate * 1e-3

    @property
    def n_samples(self) -> int:
        return self.samples_per_symbol * self.symbols_per_channel

    @property
    def power_w(self) -> float:
        return float(ch.dbm_to_mw(self.launch_power)) * 1e-3


@dataclass
class FieldGrid:
    x: np.ndarray
    y: np.ndarray
    sample_rate: float  # THz
    center_frequency: float  # Hz, optical carrier of the zero-frequency bin

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ValueError("polarizations must have the same length")

    @property
    def fields(self) -> np.ndarray:
        return np.stack([self.x, self.y])

    def energy(self) -> float:
        """Sum of |E|^2 over samples and polarizations."""
        return float(np.sum(np.abs(self.x) ** 2) + np.sum(np.abs(self.y) ** 2))

    def mean_power(self) -> float:
        """W, both polarizations."""
        return self.energy() / self.x.size

    def copy(self) -> "FieldGrid":
        return FieldGrid(self.x.copy(), self.y.copy(), self.sample_rate, self.center_frequency)


@dataclass
class TxRecord:
    """What was sent: symbol indices [channels, pols, symbols] and the scaling."""
    indices: np.ndarray
    points: np.ndarray  # [M, N] unit-energy constellation
    channel_bins: list[int]
    amplitude: float  # sqrt(W) per polarization per unit symbol

    def symbols(self, channel: int) -> np.ndarray:
        """Complex unit-energy symbols [2, symbols] of one WDM channel."""
        pts = self.points[:, 0::2] + 1j * self.points[:, 1::2]
        idx = self.indices[channel]
        if pts.shape[1] == 1:
            return pts[idx, 0]
        return np.stack([pts[idx[0], 0], pts[idx[0], 1]])


def frequency_grid(n: int, sample_rate: float) -> np.ndarray:
    """FFT-ordered frequencies in THz."""
    return sfft.fftfreq(n, d=1.0 / sample_rate)


def rrc_spectrum(freq: np.ndarray, symbol_rate: float, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude response, 1 at DC. freq and symbol_rate in the same unit."""
    f = np.abs(freq)
    lo = (1 - rolloff) * symbol_rate / 2
    hi = (1 + rolloff) * symbol_rate / 2
    out = np.zeros_like(f)
    out[f <= lo] = 1.0
    band = (f > lo) & (f <= hi)
    if rolloff > 0:
        rc = 0.5 * (1 + np.cos(np.pi / (rolloff * symbol_rate) * (f[band] - lo)))
        out[band] = np.sqrt(rc)
    return out


def _channel_bins(cfg: SSFConfig) -> list[int]:
    link = cfg.link
    df = link.symbol_rate / cfg.symbols_per_channel  # GHz per bin
    bins = []
    for c in range(link.wdm_channels):
        offset = (c - (link.wdm_channels - 1) / 2) * link.channel_spacing
        b = offset / df
        if abs(b - round(b)) > 1e-9:
            raise AliasingError(
                f"channel offset {offset} GHz is not a multiple of the {df} GHz frequency bin")
        bins.append(int(round(b)))
    return bins


def modulate(constellation: metrics.Constellation, cfg: SSFConfig, data_seed=None):
    """Draw symbols per channel and polarization, RRC-shape and place on the WDM grid.

    Returns (FieldGrid, TxRecord). Each channel carries ``cfg.launch_power``
    in expectation, split evenly over the two polarizations.
    """
    cfg.validate()
    link = cfg.link
    rng = np.random.default_rng(cfg.seed if data_seed is None else data_seed)
    pts = constellation.points
    pairs = constellation.N // 2
    if pairs not in (1, 2):
        raise ValueError("only 2D (per polarization) or 4D (joint) constellations fit two polarizations")
    n, sps, nsym = cfg.n_samples, cfg.samples_per_symbol, cfg.symbols_per_channel
    freq = frequency_grid(n, cfg.sample_rate)
    shaping = sps * rrc_spectrum(freq, link.symbol_rate * 1e-3, cfg.rrc_rolloff)
    amplitude = math.sqrt(cfg.power_w / 2)
    bins = _channel_bins(cfg)
    cpts = pts[:, 0::2] + 1j * pts[:, 1::2]
    spectrum = np.zeros((2, n), dtype=complex)
    indices = np.empty((link.wdm_channels, 2 if pairs == 1 else 1, nsym), dtype=np.int64)
    for c in range(link.wdm_channels):
        if pairs == 1:
            idx = rng.integers(0, constellation.M, size=(2, nsym))
            sym = cpts[idx, 0]
        else:
            idx = rng.integers(0, constellation.M, size=(1, nsym))
            sym = cpts[idx[0]].T
        indices[c] = idx
        up = np.zeros((2, n), dtype=complex)
        up[:, ::sps] = amplitude * sym
        spectrum += np.roll(sfft.fft(up, axis=1) * shaping, bins[c], axis=1)
    wave = sfft.ifft(spectrum, axis=1)
    grid = FieldGrid(wave[0], wave[1], cfg.sample_rate, link.carrier_frequency)
    return grid, TxRecord(indices, pts.copy(), bins, amplitude)


def cw_field(power_w: float, n: int, sample_rate: float, carrier: float = 1.934e14) -> FieldGrid:
    """Continuous wave of total power ``power_w`` split evenly over both polarizations."""
    a = math.sqrt(power_w / 2)
    return FieldGrid(np.full(n, a, dtype=complex), np.full(n, a, dtype=complex), sample_rate, carrier)


def _fiber(link: ch.LinkConfig):
    for name in ("span_length", "attenuation", "nonlinear_coefficient"):
        if getattr(link, name) < 0:
            raise ValueError(f"{name} must be >= 0")
    if link.span_count < 1:
        raise ValueError("span_count must be >= 1")
    alpha = link.attenuation * math.log(10) / 10  # 1/km, power
    return alpha, link.beta2, link.nonlinear_coefficient


def propagate(field: FieldGrid, link: ch.LinkConfig, steps_per_span: int = 50,
              noise_seed=None, ase: bool = True) -> FieldGrid:
    """Manakov split-step propagation over all spans with lumped amplification.

    Each step is linear half-step, nonlinear phase rotation (exact for the
    attenuated power within the step), linear half-step; adjacent half-steps
    are merged. Amplifiers restore the span loss and add ASE when ``ase``.
    Zero dispersion, attenuation or nonlinearity are accepted.
    """
    alpha, beta2, gamma = _fiber(link)
    h = link.span_length / steps_per_span
    omega = 2 * np.pi * frequency_grid(field.x.size, field.sample_rate)
    lin = 1j * beta2 / 2 * omega ** 2 - alpha / 2
    half = np.exp(lin * h / 2)
    full = half * half
    # integral of exp(-alpha z) over the step, referenced to its midpoint
    leff = h if alpha == 0 else 2 * math.sinh(alpha * h / 2) / alpha
    nl = MANAKOV_FACTOR * gamma * leff
    gain = math.exp(alpha * link.span_length)
    rng = np.random.default_rng(noise_seed)
    nf = 10 ** (link.noise_figure / 10)
    # per polarization: (G - 1) h nu NF / 2 over the simulated bandwidth
    noise_var = (gain - 1) * ch.PLANCK * link.carrier_frequency * nf / 2 * field.sample_rate * 1e12

    u = np.stack([field.x, field.y])
    energy = float(np.sum(np.abs(u) ** 2))
    for span in range(link.span_count):
        spec = sfft.fft(u, axis=1) * half
        for step in range(steps_per_span):
            u = sfft.ifft(spec, axis=1)
            if gamma:
                power = u.real ** 2 + u.imag ** 2
                u *= np.exp(1j * nl * (power[0] + power[1]))
            spec = sfft.fft(u, axis=1)
            spec *= full if step < steps_per_span - 1 else half
            new_energy = float(np.sum(spec.real ** 2 + spec.imag ** 2)) / u.shape[1]
            if not math.isfinite(new_energy) or new_energy > 10 * energy:
                raise SimulationError(f"energy blow-up in span {span + 1}, step {step + 1}")
            energy = new_energy
        u = sfft.ifft(spec, axis=1) * math.sqrt(gain)
        if ase and gain > 1:
            u = u + math.sqrt(noise_var / 2) * (rng.standard_normal(u.shape)
                                                + 1j * rng.standard_normal(u.shape))
        energy = float(np.sum(np.abs(u) ** 2))
    return FieldGrid(u[0], u[1], field.sample_rate, field.center_frequency)


@dataclass
class ReceivedSymbols:
    received: np.ndarray  # [pols, symbols] complex, unit-energy scale
    transmitted: np.ndarray  # [pols, symbols] complex
    indices: np.ndarray  # [pols or 1, symbols]
    phase: np.ndarray  # removed phase per polarization (rad)


def receive(field: FieldGrid, cfg: SSFConfig, record: TxRecord,
            channel: int | None = None) -> ReceivedSymbols:
    """Ideal coherent receiver for one WDM channel (the center one by default).

    Full CD compensation, matched RRC filter, sampling at the symbol
    instants, scaling back to unit energy and data-aided removal of a
    constant phase per polarization.
    """
    link = cfg.link
    c = link.wdm_channels // 2 if channel is None else channel
    n, sps = field.x.size, cfg.samples_per_symbol
    spec = sfft.fft(field.fields, axis=1)
    freq = frequency_grid(n, field.sample_rate)
    omega = 2 * np.pi * freq
    total_length = link.span_count * link.span_length
    # undo dispersion at the absolute frequency, then bring the channel to baseband
    spec *= np.exp(-1j * link.beta2 / 2 * omega ** 2 * total_length)
    spec = np.roll(spec, -record.channel_bins[c], axis=1)
    spec *= rrc_spectrum(freq, link.symbol_rate * 1e-3, cfg.rrc_rolloff)
    rx = sfft.ifft(spec, axis=1)[:, ::sps] / record.amplitude
    tx = record.symbols(c)
    corr = np.sum(rx * np.conj(tx), axis=1)
    quality = np.abs(corr) / np.sqrt(np.sum(np.abs(rx) ** 2, axis=1) * np.sum(np.abs(tx) ** 2, axis=1))
    if np.any(~np.isfinite(quality)) or np.any(quality < 0.5):
        raise SynchronizationError(f"correlation with transmitted symbols too low: {quality}")
    phase = np.angle(corr)
    rx = rx * np.exp(-1j * phase)[:, None]
    return ReceivedSymbols(rx, tx, record.indices[c], phase)


def remove_phase(rx: np.ndarray, tx: np.ndarray) -> np.ndarray:
    """Rotate each row of rx by the data-aided mean phase against tx."""
    corr = np.sum(rx * np.conj(tx), axis=1)
    return rx * np.exp(-1j * np.angle(corr))[:, None]


def fitted_variance(rx: ReceivedSymbols) -> np.ndarray:
    """Complex noise variance per polarization."""
    return np.mean(np.abs(rx.received - rx.transmitted) ** 2, axis=1)


def mi_from_samples(rx: ReceivedSymbols, constellation: metrics.Constellation) -> metrics.MIEstimate:
    """Mismatched Gaussian-receiver MI using per-polarization fitted variances.

    Standard error is taken over 10 contiguous blocks of symbols.
    """
    nsym = rx.received.shape[1]
    if nsym < 1000:
        raise ValueError(f"need at least 1000 symbols for an MI estimate, got {nsym}")
    sigma2 = np.maximum(fitted_variance(rx), 1e-15)
    pts = constellation.points
    M = constellation.M
    if constellation.N == 2:
        terms = []
        for pol in range(rx.received.shape[0]):
            y = np.column_stack([rx.received[pol].real, rx.received[pol].imag])
            terms.append(metrics.log2_partition(pts, y, rx.indices[pol], sigma2[pol]))
        per_sym = np.sum(terms, axis=0)  # bits summed over the two pols -> per 4D
        mi4d_samples = 2 * math.log2(M) - per_sym
    else:
        y = np.column_stack([rx.received[0].real, rx.received[0].imag,
                             rx.received[1].real, rx.received[1].imag])
        mi4d_samples = math.log2(M) - metrics.log2_partition(pts, y, rx.indices[0], sigma2)
    blocks = np.array([b.mean() for b in np.array_split(mi4d_samples, 10)])
    value = float(mi4d_samples.mean())
    return metrics.MIEstimate(value=value, per2d=value / 2,
                              std_error=float(blocks.std(ddof=1) / math.sqrt(len(blocks))),
                              samples=int(nsym), sigma2=float(np.mean(sigma2)))


def simulate(constellation: metrics.Constellation, cfg: SSFConfig, noise_seed=None):
    """modulate -> propagate -> receive; returns (ReceivedSymbols, MIEstimate)."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    field, record = modulate(constellation, cfg, data_seed=int(seeds[0]))
    out = propagate(field, cfg.link, cfg.steps_per_span,
                    noise_seed=int(seeds[1]) if noise_seed is None else noise_seed, ase=cfg.ase)
    rx = receive(out, cfg, record)
    return rx, mi_from_samples(rx, constellation)


def calibrate_coefficients(constellation: metrics.Constellation, cfg: SSFConfig,
                           base: ch.NLINCoefficients | None = None):
    """Scale NLIN coefficients so the model matches one split-step run.

    Runs the simulation at ``cfg.launch_power``, measures the total noise
    variance of the received center channel, subtracts the modeled ASE and
    rescales ``base`` (all three coefficients by one factor, so their ratios
    are kept) until the model reproduces the measured NLIN variance for this
    constellation's moments. Returns (coefficients, measured sigma2 in mW).
    """
    base = base or ch.default_coefficients(cfg.link.span_count)
    rx, _ = simulate(constellation, cfg)
    power_mw = float(ch.dbm_to_mw(cfg.launch_power))
    measured = float(np.mean(fitted_variance(rx))) * power_mw
    nlin = measured - ch.ase_variance(cfg.link)
    if nlin <= 0:
        raise SimulationError(f"measured noise {measured} mW does not exceed ASE; cannot calibrate")
    kappa, kappa3 = constellation.moments()
    model = ch.nlin_variance(power_mw, kappa, kappa3, base, ch.NLIN)
    return base.scaled(nlin / model), measured
