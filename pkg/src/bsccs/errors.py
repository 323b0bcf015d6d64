"""Exception types raised across the package."""


class BSCCSError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(BSCCSError, ValueError):
    """Invalid case-series input or an empty dataset."""


class IngestError(BSCCSError, ValueError):
    """Malformed raw exposure/event/observation input."""


class EngineError(BSCCSError, ArithmeticError):
    """Numerical failure in the likelihood engine (overflow, broken invariants)."""


class StepError(BSCCSError, ArithmeticError):
    """The one-dimensional Newton step is undefined."""


class SelectionError(BSCCSError, RuntimeError):
    """Every cross-validation cell failed."""


class BootstrapError(BSCCSError, RuntimeError):
    """No bootstrap replicate converged."""
