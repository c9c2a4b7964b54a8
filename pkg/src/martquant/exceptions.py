class ConvergenceError(RuntimeError):
    """An iterative search stopped before meeting its tolerance.

    ``last`` holds the final iterate so callers can inspect or reuse it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ConvexOrderError(ValueError):
    """No martingale coupling exists: by Strassen's theorem the pair is not in convex order."""
