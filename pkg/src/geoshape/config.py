"""Sectioned key-value run configuration (INI syntax).

Example::

    [run]
    seed = 0
    output = results

    [link]
    span_count = 20

    [channel]
    kind = NLIN
    # W^-2, "chi1, chi2, chi3" per span count; or: chi_table = default
    chi.20 = 17300, 6920, 346

    [train]
    M = 64
    iterations = 20000
    kinds = NLIN, GN
    seeds = 0, 1

    [sweep]
    launch_powers = -5:5:1
    span_counts = 20

Every key is optional; missing keys take the library defaults.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import channel as ch
from .ssf import SimulationError, SSFConfig
from .trainer import SweepSpec, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalSettings:
    samples: int = 200_000
    qam: list[int] = field(default_factory=list)
    kind: str = ch.NLIN


@dataclass
class SSFSettings:
    samples_per_symbol: int = 16
    symbols_per_channel: int = 2 ** 14
    steps_per_span: int = 50
    rrc_rolloff: float = 0.05
    ase: bool = True
    calibrate: bool = False
    calibration_power: float = 0.0
    calibration_label: str = ""

    def build(self, link: ch.LinkConfig, power_dbm: float, seed: int) -> SSFConfig:
        return SSFConfig(link=link, samples_per_symbol=self.samples_per_symbol,
                         symbols_per_channel=self.symbols_per_channel,
                         steps_per_span=self.steps_per_span, rrc_rolloff=self.rrc_rolloff,
                         launch_power=power_dbm, seed=seed, ase=self.ase)


@dataclass
class RunConfig:
    link: ch.LinkConfig = field(default_factory=ch.LinkConfig)
    model_kind: str = ch.NLIN
    chi_table: dict[int, ch.NLINCoefficients] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_kinds: list[str] = field(default_factory=list)
    train_seeds: list[int] = field(default_factory=list)
    sweep: SweepSpec = field(default_factory=lambda: SweepSpec([0.0], [20]))
    ssf: SSFSettings = field(default_factory=SSFSettings)
    evaluate: EvalSettings = field(default_factory=EvalSettings)
    output: str = "results"
    seed: int = 0
    source: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]

    def link_for(self, spans: int) -> ch.LinkConfig:
        return ch.LinkConfig(**{**self.link.__dict__, "span_count": int(spans)})

    def coefficients(self, spans: int) -> ch.NLINCoefficients:
        try:
            return self.chi_table[int(spans)]
        except KeyError:
            raise ConfigError(f"[channel] has no chi coefficients for {spans} spans") from None

    def validate(self):
        try:
            self.link.validate()
            self.train.validate()
            self.sweep.validate()
            for kind in self.train_kinds + [self.model_kind, self.evaluate.kind]:
                if kind not in ch.MODEL_KINDS:
                    raise ConfigError(f"unknown model kind {kind!r}")
            if not self.chi_table:
                raise ConfigError(
                    "[channel] needs chi coefficients (chi.<spans> = chi1, chi2, chi3 or chi_table = default)")
            for spans in self.sweep.span_counts:
                self.coefficients(spans).validate()
            for m in self.evaluate.qam:
                from .metrics import qam
                qam(m)
            if self.evaluate.samples < 100:
                raise ConfigError("[evaluate] samples must be >= 100")
            for spans in self.sweep.span_counts:
                for p in self.sweep.launch_powers:
                    self.ssf.build(self.link_for(spans), p, self.seed).validate()
        except ConfigError:
            raise
        except (ValueError, SimulationError) as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _parse_list(text: str, conv=float) -> list:
    text = text.strip()
    if not text:
        return []
    if ":" in text and "," not in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [conv(round(start + k * step, 10)) for k in range(n)]
    return [conv(v.strip()) for v in text.split(",") if v.strip()]


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _fill(obj, section: configparser.SectionProxy, name: str, skip=()):
    known = {f.name: f for f in fields(obj)}
    for key, raw in section.items():
        if key in skip:
            continue
        attr = key if key in known else key.upper() if key.upper() in known else None
        if attr is None:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        current = getattr(obj, attr)
        try:
            if isinstance(current, bool):
                value = _parse_bool(raw)
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            elif isinstance(current, list):
                value = _parse_list(raw, int)
            else:
                value = raw.strip()
        except ValueError:
            raise ConfigError(f"[{name}] {key}: cannot parse {raw!r}") from None
        setattr(obj, attr, value)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = RunConfig(source=text)
    allowed = {"run", "link", "channel", "train", "sweep", "ssf", "evaluate"}
    for name in parser.sections():
        if name not in allowed:
            raise ConfigError(f"unknown section [{name}]")

    if parser.has_section("run"):
        run = parser["run"]
        for key in run:
            if key not in ("seed", "output"):
                raise ConfigError(f"[run] unknown key {key!r}")
        cfg.seed = int(run.get("seed", cfg.seed))
        cfg.output = run.get("output", cfg.output)
    if parser.has_section("link"):
        _fill(cfg.link, parser["link"], "link")
    if parser.has_section("channel"):
        sec = parser["channel"]
        cfg.model_kind = sec.get("kind", cfg.model_kind).strip()
        for key, raw in sec.items():
            if key == "kind":
                continue
            if key == "chi_table":
                if raw.strip() != "default":
                    raise ConfigError("[channel] chi_table only accepts 'default'")
                for n, c in ch.default_chi_table().items():
                    cfg.chi_table.setdefault(n, c)
                continue
            if not key.startswith("chi."):
                raise ConfigError(f"[channel] unknown key {key!r}")
            try:
                spans = int(key[4:])
                vals = _parse_list(raw, float)
            except ValueError:
                raise ConfigError(f"[channel] {key}: cannot parse {raw!r}") from None
            if len(vals) != 3:
                raise ConfigError(f"[channel] {key}: expected chi1, chi2, chi3")
            cfg.chi_table[spans] = ch.NLINCoefficients(*vals)
    cfg.train.model_kind = cfg.model_kind
    if parser.has_section("train"):
        sec = parser["train"]
        _fill(cfg.train, sec, "train", skip=("kinds", "seeds"))
        if "kinds" in sec:
            cfg.train_kinds = [k.strip() for k in sec["kinds"].split(",") if k.strip()]
        if "seeds" in sec:
            cfg.train_seeds = _parse_list(sec["seeds"], int)
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        for key in sec:
            if key not in ("launch_powers", "span_counts"):
                raise ConfigError(f"[sweep] unknown key {key!r}")
        try:
            powers = _parse_list(sec.get("launch_powers", "0"), float)
            spans = _parse_list(sec.get("span_counts", "20"), int)
        except ValueError as exc:
            raise ConfigError(f"[sweep] {exc}") from None
        cfg.sweep = SweepSpec(powers, spans)
    if parser.has_section("ssf"):
        _fill(cfg.ssf, parser["ssf"], "ssf")
    if parser.has_section("evaluate"):
        _fill(cfg.evaluate, parser["evaluate"], "evaluate")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is not None:
        cfg.seed = int(seed)
        cfg.source += f"\n# seed override {seed}\n"
    return cfg


def train_seeds(cfg: RunConfig) -> list[int]:
    return cfg.train_seeds or [cfg.seed]


def train_kinds(cfg: RunConfig) -> list[str]:
    return cfg.train_kinds or [cfg.model_kind]


def seed_array(*parts) -> int:
    # negative parts (e.g. milli-dBm powers) wrap into uint32 so they stay distinct
    return int(np.random.SeedSequence([int(p) % 2 ** 32 for p in parts]).generate_state(1)[0])
