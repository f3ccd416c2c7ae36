"""Exception types shared across the toolkit."""


class TraincostError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(TraincostError):
    """A document (network JSON, space JSON) is malformed."""


class ValidationError(TraincostError):
    """A structural invariant of a network description is violated."""

    def __init__(self, rule: str, layer_id: str | None = None, detail: str = ""):
        self.rule = rule
        self.layer_id = layer_id
        msg = rule if layer_id is None else f"{rule} (layer '{layer_id}')"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class PruneError(TraincostError):
    """Pruning configuration cannot be applied to the network."""


class PlanError(TraincostError):
    """Invalid profiling-plan inputs (bad level, duplicate entries)."""


class CsvError(TraincostError):
    """Malformed measurement CSV; carries the offending row number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class JoinError(TraincostError):
    """A record cannot be joined to a network or requested target."""


class FitError(TraincostError):
    """Forest training rejected its inputs."""


class ShapeError(TraincostError):
    """Feature row does not match the model's expected features."""


class IoError(TraincostError):
    """A model file could not be read or written."""


class VersionError(TraincostError):
    """A model file carries an unsupported format or version tag."""


class ChecksumError(TraincostError):
    """A model file is corrupt, truncated, or fails its checksum."""


class EvalError(TraincostError):
    """Evaluation is impossible (for example a zero-valued measurement)."""


class InfeasibleError(TraincostError):
    """No candidate satisfying the constraints was found within budget."""
