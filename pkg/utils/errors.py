class WesterveltError(Exception):
    """Base class for every error raised by the lab"""


class ConfigError(WesterveltError, ValueError):
    """Invalid configuration or constructor argument, tagged with the offending field"""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionMismatch(WesterveltError, ValueError):
    """Operand sizes or grids do not agree"""


class ParabolicityViolation(WesterveltError):
    """The state left the region sup|u| <= m < 1/(2k) where the problem is parabolic"""

    def __init__(self, node, value, bound, time=None):
        self.node = node
        self.value = value
        self.bound = bound
        self.time = time
        where = "" if time is None else f" at t={time:.6g}"
        super().__init__(
            f"parabolicity violated{where}: |u|={abs(value):.6g} at node {node} exceeds {bound:.6g}"
        )


class SingularMu(WesterveltError, ZeroDivisionError):
    """lambda*b - c^2 vanishes, so mu(lambda) is undefined"""


class NumericalFailure(WesterveltError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result"""


class SingularResolvent(NumericalFailure):
    """lambda is (numerically) in the spectrum of the discrete block operator"""


class ConvergenceError(NumericalFailure):
    """An iterative eigensolver did not converge"""


class LinearSolveError(NumericalFailure):
    """A sparse linear solve failed or missed its residual tolerance"""


class DegenerateFit(NumericalFailure):
    """Not enough usable data to fit an exponential decay rate"""
