"""Exception types shared across the package."""


class SpatialOpeError(ValueError):
    """Base class for all errors raised by this package."""


class InvalidConfigError(SpatialOpeError):
    """A configuration value is out of range or inconsistent."""


class InvalidArchitectureError(InvalidConfigError):
    """A network architecture specification is unusable (e.g. zero-width layer)."""


class ShapeError(SpatialOpeError):
    """An array argument does not have the shape the operation requires."""


class DegenerateNeighborhoodError(SpatialOpeError):
    """An operation that requires a non-empty neighborhood received an empty one."""


class InvalidInputError(SpatialOpeError):
    """Input data violates an operation precondition."""
