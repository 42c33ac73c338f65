"""Exception types shared across the package.

The CLI maps these onto exit codes: validation failures exit 1, numeric /
budget failures exit 2, failed verification runs exit 3.
"""


class ValidationError(ValueError):
    """Bad user input: malformed family parameters, grids, or CLI flags."""


class NumericalError(RuntimeError):
    """A numeric procedure could not meet its accuracy or budget contract.

    Raised e.g. when adaptive quadrature does not converge, when a
    covariance matrix needs more diagonal jitter than the policy allows,
    or when an enumeration budget is exhausted.
    """
