"""Exception hierarchy shared by every app.

Management commands translate these into exit codes:
ConfigError and MissingDependencyError -> 1, AcceptanceError -> 3,
any other DynregError -> 2.
"""


class DynregError(Exception):
    """Base class for pipeline errors."""

    exit_code = 2
    kind = "runtime"

    def as_record(self):
        return {"error": str(self), "kind": self.kind, "exit_code": self.exit_code}


class InvalidRotationError(DynregError):
    kind = "invalid_rotation"


class GimbalLockError(InvalidRotationError):
    kind = "gimbal_lock"


class ShapeError(DynregError):
    kind = "shape"


class InsufficientDataError(DynregError):
    kind = "insufficient_data"


class DomainError(DynregError):
    kind = "domain"


class ConfigError(DynregError):
    exit_code = 1
    kind = "config"

    def __init__(self, message, path=None, key=None):
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.key = key

    def as_record(self):
        record = super().as_record()
        record.update(path=self.path, key=self.key)
        return record


class TopologyError(ConfigError):
    kind = "topology"


class MissingDependencyError(DynregError):
    exit_code = 1
    kind = "missing_dependency"


class SimulationDivergedError(DynregError):
    kind = "simulation_diverged"

    def __init__(self, message, substep):
        super().__init__(f"{message} (substep {substep})")
        self.substep = substep


class DegenerateComposerError(DynregError):
    kind = "degenerate_composer"


class EmptyBufferError(DynregError):
    kind = "empty_buffer"


class NonFiniteLossError(DynregError):
    kind = "non_finite_loss"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def as_record(self):
        record = super().as_record()
        record["diagnostics"] = self.diagnostics
        return record


class CheckpointError(DynregError):
    kind = "checkpoint"


class CheckpointCorruptError(CheckpointError):
    kind = "checkpoint_corrupt"


class CheckpointVersionError(CheckpointError):
    kind = "checkpoint_version"


class UnknownActionError(DynregError):
    kind = "unknown_action"


class AcceptanceError(DynregError):
    exit_code = 3
    kind = "acceptance"
