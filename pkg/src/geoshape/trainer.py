"""Auto-encoder training around a differentiable channel model.

One step: encode the whole codebook, normalize it to unit energy, take its
moments, look up the batch symbols, add channel noise, decode and score with
cross-entropy against the transmitted one-hots.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import channel as ch
from . import metrics
from .nn import MLP, MLPSpec, decode, encode, init_mlp, make_optimizer

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass
class TrainConfig:
    M: int = 64
    N: int = 2
    batch_size: int = 512
    iterations: int = 20_000
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    model_kind: str = ch.NLIN
    hidden_widths: list[int] = field(default_factory=lambda: [32, 32])
    trace_every: int = 100

    def validate(self):
        if not 4 <= self.M <= 1024:
            raise ValueError(f"M must be in [4, 1024], got {self.M}")
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be a positive even number, got {self.N}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.model_kind not in ch.MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        return self


@dataclass
class SweepSpec:
    launch_powers: list[float]  # dBm
    span_counts: list[int]

    def validate(self):
        if not self.launch_powers or not self.span_counts:
            raise ValueError("sweep needs at least one power and one span count")
        for p in self.launch_powers:
            if not -10.0 <= p <= 10.0:
                raise ValueError(f"launch power {p} dBm outside [-10, 10]")
        for n in self.span_counts:
            if int(n) != n or n < 1:
                raise ValueError(f"span count must be a positive integer, got {n}")
        return self

    def grid(self) -> list[tuple[float, int]]:
        return [(float(p), int(n)) for n in self.span_counts for p in self.launch_powers]


@dataclass
class TrainedResult:
    constellation: metrics.Constellation
    loss_trace: list[tuple[int, float]]
    kappa: float
    kappa3: float
    config: dict


@dataclass
class TrainState:
    encoder: MLP
    decoder: MLP
    optimizer: object
    channel: ch.ChannelParams
    M: int
    codebook: np.ndarray  # identity [M, M]
    step: int = 0


def sample_one_hot(M: int, batch_size: int, seed) -> np.ndarray:
    """[B, M] one-hot rows with uniformly drawn symbol indices."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.integers(0, M, size=batch_size)
    out = np.zeros((batch_size, M))
    out[np.arange(batch_size), idx] = 1.0
    return out


def normalize_power(points: ad.Node) -> ad.Node:
    """Scale [M, N] points to unit mean energy per complex symbol, on the tape."""
    M, N = points.shape
    energy = ad.mul(ad.reduce_sum(ad.square(points)), 2.0 / (M * N))
    if float(energy.value) <= 0.0:
        raise ch.ChannelError("cannot normalize a zero-energy constellation")
    return ad.div(points, ad.sqrt(energy))


def init_state(config: TrainConfig, channel: ch.ChannelParams) -> TrainState:
    config.validate()
    channel.validate()
    seeds = np.random.SeedSequence(config.seed).generate_state(2)
    enc = init_mlp(MLPSpec(config.M, config.N, list(config.hidden_widths), "relu",
                           int(seeds[0])))
    dec = init_mlp(MLPSpec(config.N, config.M, list(config.hidden_widths), "relu",
                           int(seeds[1])))
    opt = make_optimizer(config.optimizer, enc.parameters() + dec.parameters(),
                         config.learning_rate,
                         **({"beta1": config.beta1, "beta2": config.beta2}
                            if config.optimizer == "adam" else {}))
    return TrainState(enc, dec, opt, channel, config.M, np.eye(config.M))


def constellation_node(state: TrainState) -> ad.Node:
    return normalize_power(encode(state.encoder, state.codebook))


def build_loss(state: TrainState, batch: np.ndarray, noise: np.ndarray):
    """Forward graph for one step. Returns (loss, points, kappa, kappa3)."""
    points = constellation_node(state)
    if state.channel.model_kind == ch.NLIN:
        kappa, kappa3 = ch.moments(points)
    else:
        kappa = kappa3 = None
    x = ad.matmul(batch, points)
    y = ch.channel_apply(x, state.channel, kappa, kappa3, noise=noise)
    logits = decode(state.decoder, y)
    loss = ad.softmax_cross_entropy(logits, batch)
    return loss, points, kappa, kappa3


def train_step(state: TrainState, batch: np.ndarray, noise_seed) -> tuple[TrainState, float]:
    noise = np.random.default_rng(noise_seed).standard_normal((batch.shape[0], state.encoder.output_width))
    loss, points, kappa, kappa3 = build_loss(state, batch, noise)
    value = float(loss.value)
    if not math.isfinite(value):
        k = float(kappa.value) if kappa is not None else float("nan")
        k3 = float(kappa3.value) if kappa3 is not None else float("nan")
        var = ch.total_variance(state.channel, k, k3) if kappa is not None else \
            ch.total_variance(state.channel, 1.0, 1.0)
        raise TrainingError(
            f"non-finite loss at iteration {state.step}: kappa={k}, kappa3={k3}, sigma2={var}")
    grads = ad.backward(loss)
    state.optimizer.step(grads)
    state.step += 1
    return state, value


def extract_constellation(state: TrainState, label: str = "") -> metrics.Constellation:
    points = constellation_node(state).value
    # re-normalize in numpy so the stored copy is unit power to rounding
    return metrics.Constellation(metrics.normalize(points), label=label)


def train(config: TrainConfig, channel: ch.ChannelParams, label: str = "") -> TrainedResult:
    """Train one auto-encoder; reproducible from ``config.seed``."""
    channel = ch.ChannelParams(config.model_kind, channel.power, channel.sigma2_ase,
                               channel.coefficients)
    state = init_state(config, channel)
    seq = np.random.SeedSequence(config.seed)
    batch_rng = np.random.default_rng(seq.spawn(1)[0])
    noise_base = int(np.random.SeedSequence([config.seed, 1]).generate_state(1)[0])
    trace: list[tuple[int, float]] = []
    for it in range(config.iterations):
        batch = sample_one_hot(config.M, config.batch_size, batch_rng)
        try:
            _, loss = train_step(state, batch, (noise_base, it))
        except TrainingError as exc:
            raise TrainingError(str(exc), trace) from None
        if it % config.trace_every == 0 or it == config.iterations - 1:
            trace.append((it, loss))
    c = extract_constellation(state, label)
    kappa, kappa3 = c.moments()
    echo = asdict(config)
    echo.update(power_mw=channel.power, sigma2_ase=channel.sigma2_ase,
                chi=[channel.coefficients.chi1, channel.coefficients.chi2,
                     channel.coefficients.chi3])
    return TrainedResult(c, trace, kappa, kappa3, echo)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    power_dbm: float
    span_count: int
    model_kind: str
    label: str
    mi: float = float("nan")  # bit/4D
    mi_std_error: float = float("nan")
    kappa: float = float("nan")
    kappa3: float = float("nan")
    snr_db: float = float("nan")
    error: str = ""


def _sweep_point(args):
    power_dbm, spans, link, coeffs, config, eval_kind, eval_samples = args
    link = ch.LinkConfig(**{**asdict(link), "span_count": spans})
    label = f"{config.M}-{config.model_kind}-{power_dbm:g}dBm-{spans}sp-s{config.seed}"
    row = SweepRow(power_dbm, spans, config.model_kind, label)
    try:
        params = ch.ChannelParams.for_link(link, power_dbm, config.model_kind, coeffs)
        result = train(config, params, label=label)
        eval_params = ch.ChannelParams.for_link(link, power_dbm, eval_kind, coeffs)
        ev = metrics.evaluate(result.constellation, eval_params, samples=eval_samples)
        row.mi, row.mi_std_error = ev.mi.value, ev.mi.std_error
        row.kappa, row.kappa3, row.snr_db = ev.kappa, ev.kappa3, ev.snr_db
        return row, result
    except Exception as exc:  # recorded per grid point, sweep continues
        log.warning("grid point %s failed: %s", label, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        return row, None


def sweep(spec: SweepSpec, config: TrainConfig, link: ch.LinkConfig,
          chi_table: dict[int, ch.NLINCoefficients], eval_kind: str = ch.NLIN,
          jobs: int = 1, eval_samples: int = metrics.DEFAULT_MI_SAMPLES):
    """Train one model per (power, span count); returns [(SweepRow, TrainedResult | None)]."""
    spec.validate()
    config.validate()
    tasks = []
    for power, spans in spec.grid():
        if spans not in chi_table:
            raise ValueError(f"no NLIN coefficients for {spans} spans")
        tasks.append((power, spans, link, chi_table[spans], config, eval_kind, eval_samples))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
