"""Exception hierarchy shared by all modules."""


class PwaLyapError(Exception):
    """Base class for every error raised by the package."""


# geometry
class GeometryError(PwaLyapError):
    pass


class DegenerateCell(GeometryError):
    pass


class DegeneratePointSet(GeometryError):
    pass


class NoEligibleEdge(GeometryError):
    pass


class VertexOutsideCell(GeometryError):
    pass


# model
class ModelError(PwaLyapError):
    pass


class NonpositiveSamplingTime(ModelError):
    pass


class OriginOutsideDomain(ModelError):
    pass


class StartOutsideDomain(ModelError):
    pass


class InvalidPartition(ModelError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


# linear programming
class LpError(PwaLyapError):
    pass


class MalformedProgram(LpError):
    pass


class NotOptimal(LpError):
    pass


# refinement
class RefinementError(PwaLyapError):
    pass


class BadWeights(RefinementError):
    pass


class NoSlackCells(RefinementError):
    pass


class DegenerateCrossing(RefinementError):
    pass


class ZeroVectorField(RefinementError):
    pass


class PointOffBoundary(RefinementError):
    pass


# engine
class EmptyRecords(PwaLyapError):
    pass


class CertificateViolation(PwaLyapError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


# io
class DimensionUnsupported(PwaLyapError):
    pass


class FormatError(PwaLyapError):
    """Raised for unreadable or schema-violating input files."""
