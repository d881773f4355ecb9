from dataclasses import asdict, dataclass, field

import numpy as np
from django.conf import settings

from dynreg.exceptions import DomainError

# Column order of the printed table, then the extra columns.
TABLE_COLUMNS = (
    ("success", "S_inter"),
    ("root_error", "E_root"),
    ("mpjpe", "E_mpjpe"),
    ("accel_error", "E_acc"),
    ("foot_sliding", "FS"),
    ("penetration", "PT"),
    ("camera_error", "E_cam"),
)
METRICS = tuple(name for name, _ in TABLE_COLUMNS) + ("failsafe_resets",)


@dataclass
class SequenceMetrics:
    """Scores of one evaluated clip.

    Units: mpjpe and foot_sliding and penetration in mm, accel_error in
    mm/frame², root_error and camera_error are Frobenius norms.
    """

    clip: str
    action: str = ""
    success: int = 1
    root_error: float = 0.0
    mpjpe: float = 0.0
    accel_error: float = 0.0
    foot_sliding: float = 0.0
    penetration: float = 0.0
    camera_error: float = 0.0
    failsafe_resets: int = 0
    frames: int = 0
    fell: bool = False
    per_joint_mpjpe: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.success not in (0, 1):
            raise DomainError(f"success must be 0 or 1, got {self.success}")
        for name in METRICS:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DomainError(f"{name} of clip {self.clip!r} must be finite and non-negative, got {value}")

    def as_dict(self):
        return asdict(self)


@dataclass
class MetricsReport:
    sequences: list = field(default_factory=list)
    seed: int = None
    config_hash: str = ""
    format_version: str = settings.FORMAT_VERSION

    def __len__(self):
        return len(self.sequences)

    def aggregate(self):
        """Arithmetic mean of every metric over the sequences."""
        if not self.sequences:
            return {name: 0.0 for name in METRICS}
        return {name: float(np.mean([getattr(s, name) for s in self.sequences])) for name in METRICS}

    def success_by_action(self):
        actions = sorted({s.action for s in self.sequences})
        return {
            action: float(np.mean([s.success for s in self.sequences if s.action == action]))
            for action in actions
        }

    def per_joint(self):
        """Mean per-joint MPJPE (mm) over the sequences that report a breakdown."""
        totals, counts = {}, {}
        for sequence in self.sequences:
            for joint, value in sequence.per_joint_mpjpe.items():
                totals[joint] = totals.get(joint, 0.0) + value
                counts[joint] = counts.get(joint, 0) + 1
        return {joint: totals[joint] / counts[joint] for joint in totals}

    def as_dict(self):
        return {
            "format_version": self.format_version,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "sequences": [s.as_dict() for s in self.sequences],
            "aggregate": self.aggregate(),
            "success_by_action": self.success_by_action(),
        }
