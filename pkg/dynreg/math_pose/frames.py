from dataclasses import dataclass

import numpy as np

from .models import Quat
from .rotations import as_wxyz, heading_angle, quat_multiply, wrap_angle, yaw_matrix, yaw_quat


@dataclass(frozen=True, eq=False)
class AgentFrame:
    """World frame with the agent's heading and position taken out.

    A world point p maps to Rz(−ψ)(p − origin). The controller keeps the root
    height (origin z = 0); the kinematic policy subtracts the full root position.
    """

    heading: float
    origin: np.ndarray

    @classmethod
    def of(cls, pose, keep_height=True):
        origin = pose.root_pos.copy()
        if keep_height:
            origin[2] = 0.0
        return cls(float(heading_angle(pose.root_rot)), origin)

    @property
    def matrix(self):
        """Rotation taking world vectors into the agent frame."""
        return yaw_matrix(-self.heading)

    def point(self, points):
        return (np.asarray(points, dtype=float) - self.origin) @ self.matrix.T

    def vector(self, vectors):
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def quat(self, quats):
        """Orientation(s) re-expressed in the agent frame, canonical wxyz."""
        q = quats.array if isinstance(quats, Quat) else np.asarray(quats, dtype=float)
        return quat_multiply(yaw_quat(-self.heading).array, q)

    def heading_of(self, rot):
        """Heading of `rot` relative to this frame, wrapped to (−π, π]."""
        return float(wrap_angle(heading_angle(as_wxyz(rot)) - self.heading))
