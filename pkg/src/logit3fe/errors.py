"""Exception hierarchy shared by every module."""


class Logit3FEError(Exception):
    """Base class for all package errors."""


class DataError(Logit3FEError):
    """Input data violates the panel contract."""


class DuplicateKey(DataError):
    def __init__(self, key, row=None):
        self.key = key
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"duplicate (i, j, t) key {key!r}{where}")


class NonBinaryOutcome(DataError):
    def __init__(self, row, value):
        self.row = row
        self.value = value
        super().__init__(f"row {row}: outcome {value!r} is not 0 or 1")


class NonFiniteRegressor(DataError):
    def __init__(self, row, k, value=None):
        self.row = row
        self.k = k
        self.value = value
        super().__init__(f"row {row}: regressor {k!r} is not a finite number ({value!r})")


class NoInformativeData(DataError):
    """Pruning uninformative cells left nothing to estimate."""


class EstimationError(Logit3FEError):
    """Numerical estimation failed."""


class NonConvergence(EstimationError):
    def __init__(self, what, iterations, delta):
        self.what = what
        self.iterations = iterations
        self.delta = delta
        super().__init__(f"{what} did not converge after {iterations} iterations (last delta {delta:.3e})")


class CollinearRegressors(EstimationError):
    """Regressors are (near) collinear once the fixed effects are projected out."""


class DegenerateCell(EstimationError):
    """A fixed-effect cell has (numerically) zero total weight."""


class SingularW(EstimationError):
    """The profile Hessian estimate cannot be inverted reliably."""


class SingularHessian(EstimationError):
    """The dense penalized Hessian is not positive definite."""


class TooLargeForDense(Logit3FEError):
    """Panel exceeds the dense oracle size cap."""


class AsymmetricPanel(Logit3FEError):
    """Closed-form Hessian checks need a balanced panel with I = J = T."""
