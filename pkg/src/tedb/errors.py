"""Exception types shared across the toolkit."""


class DataError(ValueError):
    """Malformed input data: datasets, vector files, binary containers."""


class ShapeError(ValueError):
    """Incompatible array shapes passed to a graph operation."""


class NumericError(RuntimeError):
    """Non-finite values encountered during training or optimization."""

    def __init__(self, message, step=None, lr=None, loss=None):
        super().__init__(message)
        self.step = step
        self.lr = lr
        self.loss = loss


class ConfigError(ValueError):
    """Invalid run configuration; message lists every violation found."""
