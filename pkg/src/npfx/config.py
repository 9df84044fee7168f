"""JSON run configuration shared by every CLI subcommand."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .eval.tracking import PolarCalibration
from .model.config import ModelConfig, TrainConfig
from .odesolve import SolverConfig
from .sequence import canonical_mode
from .synthdata.generator import PRESETS, DomainSpec, preset


class ConfigError(ValueError):
    pass


def _strict(cls, d, section: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r}: {exc}") from None


@dataclass
class DataConfig:
    domain: str = "domain-A"  # preset name, or a key of RunConfig.domains
    windows: int = 500
    window_len: int = 10
    dir: str | None = None  # dataset directory (written by gen, read by the rest)
    input: str | None = None  # single NPFX1 sequence for impute and flow

    def __post_init__(self) -> None:
        if self.windows < 1 or self.window_len < 2:
            raise ValueError("need windows >= 1 and window_len >= 2")


@dataclass
class MaskConfig:
    rate: float = 0.5
    mode: str = "interp"
    query_times: list | None = None  # impute at these times instead of masking

    def __post_init__(self) -> None:
        if not 0 < self.rate < 1:
            raise ValueError(f"rate must be in (0, 1), got {self.rate}")
        self.mode = canonical_mode(self.mode)
        if self.query_times is not None:
            self.query_times = [float(t) for t in self.query_times]


@dataclass
class MetricConfig:
    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0


@dataclass
class OutputConfig:
    report: str | None = None
    dir: str | None = None
    model: str | None = None  # model file written by train and read by the other commands
    timestamps: bool = True  # False drops wall-clock fields from reports


@dataclass
class EvalConfig:
    baselines: list | None = None  # bench imputers; None means every baseline
    tolerances: list = field(default_factory=lambda: [1e-5, 1e-3, 0.5])
    jobs: int | None = None  # None uses the available CPUs

    def __post_init__(self) -> None:
        self.tolerances = [float(t) for t in self.tolerances]
        if not self.tolerances or min(self.tolerances) <= 0:
            raise ValueError("tolerances must be a nonempty list of positive numbers")
        if self.jobs is not None and self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")


@dataclass
class RunConfig:
    seed: int | None = None
    domains: dict = field(default_factory=dict)  # extra named DomainSpecs
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    tracking: PolarCalibration = field(default_factory=PolarCalibration)
    eval: EvalConfig = field(default_factory=EvalConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        seed = d.get("seed")
        if seed is not None and (not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
        domains = {}
        for name, spec in (d.get("domains") or {}).items():
            domains[name] = _strict(DomainSpec, spec, f"domains.{name}")
        return cls(
            seed=seed,
            domains=domains,
            data=_strict(DataConfig, d.get("data"), "data"),
            model=_strict(ModelConfig, d.get("model"), "model"),
            train=_strict(TrainConfig, d.get("train"), "train"),
            mask=_strict(MaskConfig, d.get("mask"), "mask"),
            solver=_strict(SolverConfig, d.get("solver"), "solver"),
            metrics=_strict(MetricConfig, d.get("metrics"), "metrics"),
            tracking=_strict(PolarCalibration, d.get("tracking"), "tracking"),
            eval=_strict(EvalConfig, d.get("eval"), "eval"),
            outputs=_strict(OutputConfig, d.get("outputs"), "outputs"),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def domain_spec(self, name: str | None = None) -> DomainSpec:
        name = name or self.data.domain
        if name in self.domains:
            return self.domains[name]
        if name in PRESETS:
            return preset(name)
        raise ConfigError(f"unknown domain {name!r}; known: {sorted(set(PRESETS) | set(self.domains))}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "domains": {k: v.to_dict() for k, v in self.domains.items()},
            "data": asdict(self.data),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "mask": asdict(self.mask),
            "solver": self.solver.to_dict(),
            "metrics": asdict(self.metrics),
            "tracking": self.tracking.to_dict(),
            "eval": asdict(self.eval),
            "outputs": asdict(self.outputs),
        }
