"""Exception types shared across the package.

Every numerical precondition that can fail at runtime maps to one of these.
They all carry the offending scalar so callers can log it.
"""


class ShapeMismatch(ValueError):
    """Operand dimensions do not line up."""


class DimensionError(ValueError):
    """A structural dimension request is impossible (e.g. rank > min(m, n))."""


class NotSymmetric(ValueError):
    def __init__(self, asymmetry: float, message: str = ""):
        self.asymmetry = float(asymmetry)
        super().__init__(message or f"matrix is not symmetric (||M - M^T||_F = {asymmetry:.3e})")


class NonPositiveSpectrum(ValueError):
    def __init__(self, lambda_min: float):
        self.lambda_min = float(lambda_min)
        super().__init__(f"matrix is not positive definite (lambda_min = {lambda_min:.3e})")


class RankDeficient(ValueError):
    def __init__(self, sigma_min: float, message: str = ""):
        self.sigma_min = float(sigma_min)
        super().__init__(message or f"matrix is rank deficient (sigma_min = {sigma_min:.3e})")


class ZeroMatrix(ValueError):
    def __init__(self, message: str = "singular pair of an all-zero matrix is undefined"):
        super().__init__(message)


class RankTooHigh(ValueError):
    def __init__(self, sigma_next: float, rank: int):
        self.sigma_next = float(sigma_next)
        self.rank = int(rank)
        super().__init__(
            f"input exceeds rank {rank} (sigma_{rank + 1} = {sigma_next:.3e} is not negligible)"
        )


class StepTooLarge(RuntimeError):
    def __init__(self, step_norm: float, k: int | None = None):
        self.step_norm = float(step_norm)
        self.k = k
        at = f" at step {k}" if k is not None else ""
        super().__init__(
            f"eta * ||Rtilde|| = {step_norm:.3e} exceeds 2/3{at}; "
            "the logarithm expansion behind the flow interpolant is no longer valid"
        )
