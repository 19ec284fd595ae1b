"""Exception types raised by the fitting, inference and tuning routines."""


class MQError(Exception):
    """Base class for all mqreg errors."""


class SingularDesign(MQError, ValueError):
    """The design matrix (or a sandwich bread matrix) is rank deficient."""


class DegenerateScale(MQError, ArithmeticError):
    """A scale estimate collapsed to zero."""


class DegenerateEfficiency(MQError, ArithmeticError):
    """The efficiency factor is undefined (all standardized residuals zero)."""


class NoConvergence(MQError, RuntimeError):
    """An iterative procedure reached its iteration cap."""


class DimensionMismatch(MQError, ValueError):
    """Array shapes are inconsistent."""
