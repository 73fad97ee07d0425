"""Exception types raised across the package."""


class HomflowError(Exception):
    """Base class for all package errors."""


class UnsupportedDimension(HomflowError, ValueError):
    pass


class EmptyWindow(HomflowError, ValueError):
    pass


class Disconnected(HomflowError):
    """No path joins the requested vertices."""


class NotAPath(HomflowError, ValueError):
    pass


class NotSimple(HomflowError, ValueError):
    pass


class DegreeTooHigh(HomflowError, ValueError):
    pass


class LPInfeasible(HomflowError, RuntimeError):
    """An LP that cannot be infeasible was reported infeasible."""


class MassImbalance(HomflowError, ValueError):
    pass


class GraphMismatch(HomflowError, ValueError):
    pass


class ScaleMismatch(HomflowError, ValueError):
    pass


class AnchorTooFar(HomflowError):
    """Some integer site has no vertex within the certified gap radius."""


class AnchorMissing(HomflowError):
    pass


class DegenerateOrthotope(HomflowError, ValueError):
    pass


class Infeasible(HomflowError):
    pass


class TooManyFreeVariables(HomflowError, ValueError):
    pass


class EtaOutOfRange(HomflowError, ValueError):
    pass
