"""Exception types shared across the package."""


class InvalidParamsError(ValueError):
    """A configuration or parameter set violates its documented invariants."""


class NonConvergentError(RuntimeError):
    """Landscape synthesis kept producing a border minimum after all retries."""


class SingularSystemError(RuntimeError):
    """The penalized spline normal equations are rank-deficient."""


class OutOfDomainError(ValueError):
    """A query point lies outside the closed domain box."""


class TooLargeError(ValueError):
    """Problem size exceeds what brute-force enumeration supports."""


class NoAliveSourceError(RuntimeError):
    """Reactivation was requested but no surviving particle is available."""


class AnsatzInfeasibleError(RuntimeError):
    """The ansatz placement rule admits no candidate start point."""


class DegenerateRangeError(ValueError):
    """Best and worst reference values coincide; relative error is undefined."""
