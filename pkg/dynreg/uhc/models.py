from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from django.conf import settings

from dynreg.exceptions import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class UHCConfig:
    """Training and evaluation knobs of the controller; defaults are the settings constants."""

    gamma: float = settings.UHC_GAMMA
    gae_lambda: float = settings.UHC_GAE_LAMBDA
    batch_size: int = settings.UHC_BATCH_SIZE
    value_lr: float = settings.UHC_VALUE_LR
    policy_lr: float = settings.UHC_POLICY_LR
    clip_eps: float = settings.UHC_CLIP_EPS
    cov_std: float = settings.UHC_COV_STD
    temperature: float = settings.UHC_TEMPERATURE
    episode_len: int = settings.UHC_EPISODE_LEN
    termination_threshold: float = settings.TERMINATION_THRESHOLD
    ppo_epochs: int = settings.UHC_PPO_EPOCHS
    minibatch_size: int = settings.UHC_MINIBATCH_SIZE
    iterations: int = settings.UHC_ITERATIONS
    num_primitives: int = settings.UHC_NUM_PRIMITIVES
    primitive_hidden: tuple = settings.UHC_PRIMITIVE_HIDDEN
    composer_hidden: tuple = settings.UHC_COMPOSER_HIDDEN
    value_hidden: tuple = settings.UHC_VALUE_HIDDEN
    force_scale: float = settings.RESIDUAL_FORCE_SCALE
    torque_scale: float = settings.RESIDUAL_TORQUE_SCALE
    num_workers: int = settings.NUM_THREADS
    checkpoint_every: int = 50
    seed: int = settings.SEED

    def __post_init__(self):
        for name in ("primitive_hidden", "composer_hidden", "value_hidden"):
            object.__setattr__(self, name, tuple(int(n) for n in getattr(self, name)))
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}", key="gamma")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}", key="temperature")
        if self.episode_len < 2:
            raise ConfigError(f"episode_len must be at least 2, got {self.episode_len}", key="episode_len")
        if self.batch_size < 1 or self.num_workers < 1:
            raise ConfigError("batch_size and num_workers must be positive", key="batch_size")
        if self.cov_std <= 0:
            raise ConfigError(f"cov_std must be positive, got {self.cov_std}", key="cov_std")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})

    def with_changes(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class UHCAction:
    """Residual PD offsets for every joint angle plus the residual root wrench η (action units)."""

    pd_offsets: np.ndarray
    wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        offsets = np.array(self.pd_offsets, dtype=float).reshape(-1)
        wrench = np.array(self.wrench, dtype=float).reshape(-1)
        if wrench.shape != (6,):
            raise ShapeError(f"residual wrench needs 6 components, got {wrench.size}")
        if not (np.all(np.isfinite(offsets)) and np.all(np.isfinite(wrench))):
            raise DomainError("controller action has non-finite entries")
        object.__setattr__(self, "pd_offsets", offsets)
        object.__setattr__(self, "wrench", wrench)

    @classmethod
    def from_vector(cls, vector, num_angles):
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size != num_angles + 6:
            raise ShapeError(f"action vector has {vector.size} entries, expected {num_angles + 6}")
        return cls(vector[:num_angles], vector[num_angles:])

    @classmethod
    def zeros(cls, num_angles):
        return cls(np.zeros(num_angles))

    def as_vector(self):
        return np.concatenate([self.pd_offsets, self.wrench])


@dataclass
class Episode:
    """One controller rollout.

    `states` holds the simulated state after every step, the initial state first.
    `fell` means the tracking error crossed the termination threshold or the
    simulation diverged.
    """

    clip: str
    start: int
    transitions: list = field(default_factory=list)
    states: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    fell: bool = False
    diverged: bool = False
    bootstrap_value: float = 0.0

    @property
    def length(self):
        return len(self.transitions)

    @property
    def total_reward(self):
        return float(sum(t.reward for t in self.transitions))
