"""Exception types shared across the package."""


class SpikecostError(Exception):
    """Base class for all package errors."""


class InputDomainError(SpikecostError, ValueError):
    """A value lies outside the domain an operation accepts."""


class StructuralError(SpikecostError, ValueError):
    """Shapes, layer lists or identifiers do not line up."""


class StateError(SpikecostError, RuntimeError):
    """A record or accumulator is missing entries it should have."""


class ValidationError(SpikecostError, ValueError):
    """A file or config failed schema or invariant validation."""


class IncompleteProfileError(ValidationError):
    """A sparsity profile has no data for some layer."""


class CapacityError(SpikecostError, ValueError):
    """A working set does not fit the scratchpad it is mapped to."""

    def __init__(self, message: str, required: int, available: int):
        super().__init__(f"{message}: requires {required} bytes, capacity is {available} bytes")
        self.required = required
        self.available = available
