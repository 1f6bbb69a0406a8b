"""Exception hierarchy shared by the separation kernels and the CLI."""


class BssError(RuntimeError):
    """Base class for failures raised while separating a mixture."""


class SingularMatrixError(BssError):
    """A per-frequency system could not be solved."""

    def __init__(self, message, freqs=None):
        super().__init__(message)
        self.freqs = [] if freqs is None else list(freqs)


class NonFiniteError(BssError):
    """NaN or Inf appeared in the demixing state."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
