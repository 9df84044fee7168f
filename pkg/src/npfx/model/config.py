from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..odesolve import SolverConfig


def _reject_unknown(cls, d: dict) -> None:
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")


@dataclass
class ModelConfig:
    frame_shape: tuple = (32, 32, 1)  # H, W, C
    embed_channels: int = 16
    latent_channels: int = 16
    downsample: int = 4
    dynamics_hidden: int = 32
    head_channels: int = 16
    lambda_shrink: float = 0.05
    lambda_residual: float = 0.5
    lambda_content: float = 1.0
    shrink_a: float = 10.0
    shrink_c: float = 0.2
    time_norm: str = "interval"  # "interval": unit = the window's mean sampling interval
    time_scale: float = 40.0  # model time units per second when time_norm is "fixed"
    reverse_order: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        self.frame_shape = tuple(int(n) for n in self.frame_shape)
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)
        H, W, _ = self.frame_shape
        if self.downsample != 4:
            raise ValueError("the embedding stack downsamples by exactly 4")
        if H % self.downsample or W % self.downsample:
            raise ValueError(
                f"frame {H}x{W} not divisible by downsampling factor {self.downsample}")
        if min(self.lambda_shrink, self.lambda_residual, self.lambda_content) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.shrink_a <= 0 or self.shrink_c < 0:
            raise ValueError("shrinkage needs a > 0 and c >= 0")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be > 0")
        if self.time_norm not in ("interval", "fixed"):
            raise ValueError(f"time_norm must be 'interval' or 'fixed', got {self.time_norm!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame_shape"] = list(self.frame_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        _reject_unknown(cls, d)
        return cls(**d)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 1e-3
    decay: float = 0.99
    drop_rate: float = 0.5
    mode: str = "interp"
    seed: int = 0
    clip_norm: float = 5.0
    solver: SolverConfig | None = None  # None trains with the model's solver

    def __post_init__(self) -> None:
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)
        if not 0 < self.drop_rate < 1:
            raise ValueError(f"drop_rate must be in (0, 1), got {self.drop_rate}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.mode not in ("interp", "extrap"):
            raise ValueError(f"training mode must be interp or extrap, got {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        _reject_unknown(cls, d)
        return cls(**d)
