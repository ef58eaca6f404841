class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class ConfigError(ValueError):
    """Invalid or contradictory configuration; CLI maps this to exit code 2."""


class LabelError(ValueError):
    """Invalid annotation, e.g. a degenerate ground-truth box."""


class TrainingError(RuntimeError):
    """Training halted, e.g. on a non-finite loss."""
