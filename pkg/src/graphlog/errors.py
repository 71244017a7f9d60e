"""Exception hierarchy shared by all graphlog modules."""


class GraphLogError(Exception):
    """Base class for every error raised by graphlog."""


# graph construction / queries
class GraphError(GraphLogError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NonpositiveWeight(GraphError):
    pass


class NonpositiveMeasure(GraphError):
    pass


class AsymmetricWeight(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class UnknownVertex(GraphError, KeyError):
    def __str__(self):  # KeyError quotes its argument otherwise
        return Exception.__str__(self)


class InsufficientMaterialization(GraphError):
    pass


# function spaces and hypotheses
class InvalidExponent(GraphLogError, ValueError):
    pass


class NonzeroBoundary(GraphLogError, ValueError):
    pass


class NonpositivePotential(GraphLogError, ValueError):
    pass


class PotentialBelowMinusOne(GraphLogError, ValueError):
    pass


class MissingAlpha(GraphLogError, ValueError):
    pass


# functionals
class InvalidEpsilon(GraphLogError, ValueError):
    pass


class ZeroFunction(GraphLogError, ValueError):
    pass


class SupportOutsideTruncation(GraphLogError, ValueError):
    pass


# solvers
class SolverError(GraphLogError, RuntimeError):
    pass


class SingularJacobian(SolverError):
    pass


class NotConverged(SolverError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class CollapseToZero(SolverError):
    pass


class PathCollapse(SolverError):
    pass


class NoNewSolution(SolverError):
    pass


# exhaustion
class LocalSolveFailed(SolverError):
    def __init__(self, k, message=""):
        super().__init__(f"local solve failed on B_{k}" + (f": {message}" if message else ""))
        self.k = k


class NoConvergenceInRange(SolverError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# configuration / io
class ConfigError(GraphLogError, ValueError):
    pass


class UnknownFlag(ConfigError):
    pass


class MissingRequired(ConfigError):
    def __init__(self, field):
        super().__init__(f"missing required option: {field}")
        self.field = field


class MalformedFile(ConfigError):
    pass


class EmitError(GraphLogError, IOError):
    pass
