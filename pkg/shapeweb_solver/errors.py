class ShapeWebError(ValueError):
    """
    Base class for all numerical and input errors raised by shapeweb_solver.

    Inputs:
    -------
    message : str
        Human readable description
    point : np.ndarray or float (optional)
        Shape point or parameter value at which the error occurred
    """
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DomainError(ShapeWebError):
    pass


class SingularConfiguration(ShapeWebError):
    pass


class RepeatedEigenvalue(ShapeWebError):
    pass


class DegenerateShape(ShapeWebError):
    pass


class EmptyLeaf(ShapeWebError):
    pass


class NoConvergence(ShapeWebError):
    pass


class AbnormalAt(ShapeWebError):
    pass


class NoRoot(ShapeWebError):
    pass


class NotOnLocus(ShapeWebError):
    pass


class BranchLost(ShapeWebError):
    pass


class NotAnRE(ShapeWebError):
    pass


class ConfigError(ShapeWebError):
    pass
