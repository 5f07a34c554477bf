class NumericalFailure(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""
