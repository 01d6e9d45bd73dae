"""Exception hierarchy shared by all ishap modules."""


class IshapError(Exception):
    """Base class for all errors raised by ishap."""


class SpecError(IshapError, ValueError):
    """Malformed model spec, dataset or configuration."""


class DimensionError(IshapError, ValueError):
    """Point or dataset width does not match the model."""


class ModelProtocolError(IshapError, RuntimeError):
    """External predictor died or replied with something unusable."""


class ExactModeGuardError(IshapError):
    """A connected component is too large for exhaustive search."""

    def __init__(self, component, limit):
        self.component = tuple(component)
        self.limit = limit
        super().__init__(
            f"component too large for exact mode: {len(self.component)} nodes "
            f"(limit {limit}): {list(self.component)}"
        )
