from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from django.conf import settings

from dynreg.exceptions import ConfigError, DomainError, InsufficientDataError, ShapeError
from humanoid_model.models import ObjectClass

# one-hot order of the object class slot
CONTEXT_CLASSES = (ObjectClass.CHAIR, ObjectClass.BOX, ObjectClass.OBSTACLE, ObjectClass.NONE)
OBJECT_SLOT = len(CONTEXT_CLASSES) + 3 + 4
CAMERA_SLOT = 7


@dataclass(frozen=True)
class KinConfig:
    """Training knobs of the kinematic policy; defaults are the settings constants."""

    gamma: float = settings.KIN_GAMMA
    gae_lambda: float = settings.KIN_GAE_LAMBDA
    batch_size: int = settings.KIN_BATCH_SIZE
    value_lr: float = settings.KIN_VALUE_LR
    policy_lr: float = settings.KIN_POLICY_LR
    clip_eps: float = settings.KIN_CLIP_EPS
    cov_std: float = settings.KIN_COV_STD
    rl_epochs: int = settings.KIN_RL_EPOCHS
    sl_epochs: int = settings.KIN_SL_EPOCHS
    sl_lr: float = settings.KIN_SL_LR
    sl_memory: int = settings.KIN_SL_MEMORY
    warm_start: bool = settings.KIN_WARM_START
    warm_start_epochs: int = settings.KIN_WARM_START_EPOCHS
    iterations: int = settings.KIN_ITERATIONS
    episode_len: int = settings.KIN_EPISODE_LEN
    minibatch_size: int = settings.UHC_MINIBATCH_SIZE
    gru_hidden: int = settings.KIN_GRU_HIDDEN
    mlp_hidden: tuple = settings.KIN_MLP_HIDDEN
    init_gru_hidden: int = settings.KIN_INIT_GRU_HIDDEN
    init_mlp_hidden: tuple = settings.KIN_INIT_MLP_HIDDEN
    value_hidden: tuple = settings.KIN_VALUE_HIDDEN
    phi_dim: int = settings.PHI_DIM
    termination_threshold: float = settings.TERMINATION_THRESHOLD
    failsafe_threshold: float = settings.FAILSAFE_THRESHOLD
    num_workers: int = settings.NUM_THREADS
    checkpoint_every: int = 10
    seed: int = settings.SEED

    def __post_init__(self):
        for name in ("mlp_hidden", "init_mlp_hidden", "value_hidden"):
            object.__setattr__(self, name, tuple(int(n) for n in getattr(self, name)))
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}", key="gamma")
        if self.episode_len < 2:
            raise ConfigError(f"episode_len must be at least 2, got {self.episode_len}", key="episode_len")
        if self.cov_std <= 0:
            raise ConfigError(f"cov_std must be positive, got {self.cov_std}", key="cov_std")
        if min(self.batch_size, self.sl_memory, self.num_workers, self.gru_hidden, self.phi_dim) < 1:
            raise ConfigError("batch_size, sl_memory, num_workers, gru_hidden and phi_dim must be positive")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})

    def with_changes(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


def object_one_hot(object_class):
    """One-hot over chair, box, obstacle, none."""
    object_class = ObjectClass(object_class)
    out = np.zeros(len(CONTEXT_CLASSES))
    out[CONTEXT_CLASSES.index(object_class)] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class SceneContext:
    """Per-frame inputs of the kinematic policy.

    Object slots of class `none` are zero whatever the arrays hold.
    """

    object_class: str
    object_positions: np.ndarray
    object_rotations: np.ndarray
    camera: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "object_class", ObjectClass(self.object_class).value)
        camera = np.array(self.camera, dtype=float)
        phi = np.array(self.phi, dtype=float)
        count = camera.shape[0] if camera.ndim == 2 else 0
        if count == 0:
            raise InsufficientDataError("scene context has no frames")
        if camera.shape != (count, CAMERA_SLOT) or phi.ndim != 2 or phi.shape[0] != count:
            raise ShapeError(f"camera {camera.shape} and phi {phi.shape} must share {count} frames")
        positions = np.zeros((count, 3)) if self.object_positions is None else np.array(self.object_positions, float)
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (count, 1)) if self.object_rotations is None \
            else np.array(self.object_rotations, float)
        if positions.shape != (count, 3) or rotations.shape != (count, 4):
            raise ShapeError(f"object channels {positions.shape}, {rotations.shape} do not cover {count} frames")
        if self.object_class == ObjectClass.NONE.value:
            positions, rotations = np.zeros_like(positions), np.zeros_like(rotations)
        object.__setattr__(self, "object_positions", positions)
        object.__setattr__(self, "object_rotations", rotations)
        object.__setattr__(self, "camera", camera)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_clip(cls, clip):
        if not clip.has_context:
            raise InsufficientDataError(f"clip {clip.name!r} has no camera and feature channels")
        return cls(clip.object_class, clip.object_positions, clip.object_rotations, clip.camera, clip.phi)

    @property
    def num_frames(self):
        return self.camera.shape[0]

    @property
    def phi_dim(self):
        return self.phi.shape[1]

    @property
    def has_object(self):
        return self.object_class != ObjectClass.NONE.value


@dataclass(frozen=True, eq=False)
class KinStepInput:
    """Agent-centric step input: root orientation, joint angles, next φ, object and camera."""

    root_rot: np.ndarray
    joint_angles: np.ndarray
    phi: np.ndarray
    object_state: np.ndarray
    camera: np.ndarray

    def __post_init__(self):
        if np.asarray(self.object_state).size != OBJECT_SLOT or np.asarray(self.camera).size != CAMERA_SLOT:
            raise ShapeError("object slot needs 11 values and camera slot 7")

    @staticmethod
    def size(num_angles, phi_dim):
        return 4 + num_angles + phi_dim + OBJECT_SLOT + CAMERA_SLOT

    def as_vector(self):
        vector = np.concatenate([self.root_rot, self.joint_angles, self.phi, self.object_state, self.camera])
        if not np.all(np.isfinite(vector)):
            raise DomainError("kinematic step input has non-finite entries")
        return vector


@dataclass(frozen=True, eq=False)
class KinStepOutput:
    """Root angular and linear velocity in the agent frame plus next-frame joint angles."""

    ang_vel: np.ndarray
    lin_vel: np.ndarray
    joint_angles: np.ndarray

    @classmethod
    def from_vector(cls, vector, num_angles):
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size != 6 + num_angles:
            raise ShapeError(f"step output has {vector.size} entries, expected {6 + num_angles}")
        return cls(vector[:3], vector[3:6], vector[6:])

    def as_vector(self):
        return np.concatenate([self.ang_vel, self.lin_vel, self.joint_angles])


@dataclass(eq=False)
class SupervisedEpisode:
    """Recorded inputs of one rollout and what the supervised loss compares them with.

    inputs[t] was built from previous[t]; the prediction integrated from
    previous[t] is scored against targets[t] (the ground truth of the next
    frame). object_positions[t] is the object at that frame, or None.

    A rollout that fed its own predictions back also keeps its SceneContext
    and start pose; the loss then re-runs it from `start` so the gradient
    follows every fed-back pose. Without them (poses fed back from the
    simulator) inputs and previous poses are constants.
    """

    clip: str
    inputs: np.ndarray
    previous: list
    targets: list
    object_positions: np.ndarray = None
    hidden: np.ndarray = None
    aux: dict = field(default_factory=dict)
    context: SceneContext = None
    start: object = None

    @property
    def self_fed(self):
        return self.context is not None and self.start is not None

    def __len__(self):
        return len(self.targets)
