"""Constellations, Monte-Carlo mutual information and per-channel evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import channel as ch

DEFAULT_MI_SAMPLES = 200_000


class ConstellationParseError(ValueError):
    def __init__(self, line: int, message: str, path=None):
        where = f"{path}:" if path else ""
        super().__init__(f"{where}line {line}: {message}")
        self.line = line


@dataclass
class Constellation:
    points: np.ndarray  # [M, N]
    label: str = ""
    renormalized: bool = False

    def __post_init__(self):
        self.points = np.array(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] % 2:
            raise ValueError(f"points must be [M, N] with N even, got {self.points.shape}")

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    def mean_energy(self) -> float:
        """Average energy per complex symbol."""
        return float(np.sum(self.points ** 2) / (self.M * self.N / 2))

    def min_distance(self) -> float:
        d = np.sqrt(np.sum((self.points[:, None, :] - self.points[None, :, :]) ** 2, axis=-1))
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())

    def moments(self) -> tuple[float, float]:
        return ch.moments(self.points)

    def as_complex(self) -> np.ndarray:
        return self.points[:, 0::2] + 1j * self.points[:, 1::2]

    def validate(self, tol: float = 1e-9):
        if abs(self.mean_energy() - 1.0) > tol:
            raise ValueError(f"{self.label or 'constellation'}: mean energy {self.mean_energy()} != 1")
        if self.min_distance() <= 0.0:
            raise ValueError(f"{self.label or 'constellation'}: repeated points")
        return self


def normalize(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    energy = np.sum(points ** 2) / (points.shape[0] * points.shape[1] / 2)
    if energy <= 0:
        raise ValueError("cannot normalize a zero-energy constellation")
    return points / np.sqrt(energy)


def canonicalize(points: np.ndarray) -> np.ndarray:
    """Remove global phase and label order from a 2D constellation.

    Rotates so the highest-energy point (first one on ties) sits on the
    positive real axis, then sorts points lexicographically.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[1] != 2:
        raise ValueError("canonical form is defined for N == 2")
    z = points[:, 0] + 1j * points[:, 1]
    ref = z[int(np.argmax(np.abs(z)))]
    if abs(ref) > 0:
        z = z * np.conj(ref) / abs(ref)
    out = np.column_stack([z.real, z.imag])
    return out[np.lexsort((out[:, 1], out[:, 0]))]


def qam(M: int) -> Constellation:
    """Square M-QAM with unit average energy, points in lexicographic order."""
    side = int(round(math.sqrt(M)))
    if M < 4 or side * side != M or M & (M - 1):
        raise ValueError(f"square QAM needs M = 4, 16, 64, 256, ...; got {M}")
    levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
    re, im = np.meshgrid(levels, levels, indexing="ij")
    pts = normalize(np.column_stack([re.ravel(), im.ravel()]))
    return Constellation(pts, label=f"{M}-QAM")


@dataclass
class MIEstimate:
    value: float  # bit per 4D
    per2d: float  # bit per 2D
    std_error: float  # bit per 4D
    samples: int
    sigma2: float


def log2_partition(points: np.ndarray, y: np.ndarray, idx: np.ndarray, sigma2) -> np.ndarray:
    """log2 sum_j exp((|y - x_idx|^2 - |y - x_j|^2) / sigma2) for each row of y.

    ``sigma2`` is the complex noise variance, either a scalar or one value per
    (x, y) coordinate pair. Rows are processed in chunks to bound memory.
    """
    M, N = points.shape
    scale = np.repeat(1.0 / np.sqrt(np.broadcast_to(np.asarray(sigma2, float), (N // 2,))), 2)
    pts = points * scale
    q = np.sum(pts * pts, axis=1)
    idx = np.asarray(idx)
    out = np.empty(y.shape[0])
    chunk = max(1, 2_000_000 // M)
    for lo in range(0, y.shape[0], chunk):
        ys = y[lo:lo + chunk] * scale
        # |y - x_j|^2 - |y|^2; the own-symbol term then cancels exactly
        t = q[None, :] - 2.0 * (ys @ pts.T)
        own = t[np.arange(t.shape[0]), idx[lo:lo + chunk]]
        out[lo:lo + chunk] = logsumexp(own[:, None] - t, axis=1)
    return out / math.log(2.0)


def mi_montecarlo(c: Constellation, sigma2: float, samples: int = DEFAULT_MI_SAMPLES,
                  seed: int = 0, batches: int = 10) -> MIEstimate:
    """MI of the discrete-input complex Gaussian channel by Monte Carlo.

    ``sigma2`` is the noise variance per complex dimension for a unit-energy
    constellation. Every point gets the same number of noise draws, so two
    constellations of equal shape evaluated with one seed share their noise.
    The standard error comes from the spread across ``batches``.
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    points = c.points
    M, N = points.shape
    per_point = max(batches, -(-samples // M))
    per_batch = -(-per_point // batches)
    rng = np.random.default_rng(seed)
    idx = np.repeat(np.arange(M), per_batch)
    means = []
    for _ in range(batches):
        noise = rng.standard_normal((M * per_batch, N)) * math.sqrt(sigma2 / 2)
        y = points[idx] + noise
        means.append(math.log2(M) - float(np.mean(log2_partition(points, y, idx, sigma2))))
    means = np.array(means)
    mi = float(means.mean())
    se = float(means.std(ddof=1) / math.sqrt(batches)) if batches > 1 else float("nan")
    pairs = N // 2
    per2d = mi / pairs
    return MIEstimate(value=2 * per2d, per2d=per2d, std_error=2 * se / pairs,
                      samples=batches * per_batch * M, sigma2=sigma2)


@dataclass
class EvalRow:
    mi: MIEstimate
    kappa: float
    kappa3: float
    snr_db: float
    sigma2_total: float = field(default=float("nan"))  # mW


def evaluate(c: Constellation, params: ch.ChannelParams, samples: int = DEFAULT_MI_SAMPLES,
             seed: int = 0) -> EvalRow:
    """MI of ``c`` under ``params`` with noise set by c's own moments."""
    params.validate()
    kappa, kappa3 = c.moments()
    var = ch.total_variance(params, kappa, kappa3)
    mi = mi_montecarlo(c, var / params.power, samples=samples, seed=seed)
    return EvalRow(mi, kappa, kappa3, float(10 * np.log10(params.power / var)), var)


def gain(learned: EvalRow | MIEstimate, baseline: EvalRow | MIEstimate) -> float:
    """MI difference in bit/4D."""
    a = learned.mi if isinstance(learned, EvalRow) else learned
    b = baseline.mi if isinstance(baseline, EvalRow) else baseline
    return a.value - b.value


# ---------------------------------------------------------------------------
# file format: "M N" header then M rows of N floats; '#' comments allowed


def format_constellation(c: Constellation) -> str:
    lines = []
    if c.label:
        lines.append(f"# label: {c.label}")
    lines.append(f"{c.M} {c.N}")
    lines += [" ".join(repr(float(v)) for v in row) for row in c.points]
    return "\n".join(lines) + "\n"


def parse_constellation(text: str, label: str = "", path=None) -> Constellation:
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("label:") and not label:
                label = line[1:].strip()[len("label:"):].strip()
            continue
        fields = line.split()
        if header is None:
            try:
                if len(fields) != 2:
                    raise ValueError
                header = (int(fields[0]), int(fields[1]))
            except ValueError:
                raise ConstellationParseError(
                    lineno, f"expected header 'M N' (point count, real dimensions), got {line!r}",
                    path) from None
            if header[0] < 1 or header[1] < 2 or header[1] % 2:
                raise ConstellationParseError(lineno, f"invalid header M={header[0]} N={header[1]}", path)
            continue
        if len(fields) != header[1]:
            raise ConstellationParseError(lineno, f"expected {header[1]} values, got {len(fields)}", path)
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise ConstellationParseError(lineno, f"non-numeric value in {line!r}", path) from None
    if header is None:
        raise ConstellationParseError(1, "missing header 'M N' (point count, real dimensions)", path)
    if len(rows) != header[0]:
        raise ConstellationParseError(lineno if rows else 1,
                                      f"expected {header[0]} points, found {len(rows)}", path)
    pts = np.array(rows)
    c = Constellation(pts, label=label)
    if abs(c.mean_energy() - 1.0) > 1e-9:
        warnings.warn(f"{path or 'constellation'}: mean energy {c.mean_energy():.6g}, renormalizing")
        c = Constellation(normalize(pts), label=label, renormalized=True)
    return c


def save_constellation(c: Constellation, path):
    Path(path).write_text(format_constellation(c))


def load_constellation(path, label: str = "") -> Constellation:
    path = Path(path)
    c = parse_constellation(path.read_text(), label=label, path=path)
    c.label = c.label or path.stem
    return c
