class MpcError(Exception):
    pass

class NumericalFailure(MpcError):
    pass

class SingularKKT(MpcError):
    pass

class EnumerationTooLarge(MpcError):
    pass

class NoKktPoint(MpcError):
    pass

class DimensionMismatch(MpcError):
    pass

class NoConvergence(MpcError):
    pass

class MismatchedProblem(MpcError):
    pass

class RegionBudgetExceeded(MpcError):
    pass

class LPFailure(MpcError):
    pass

class WitnessMissing(MpcError):
    pass

class EmptyMeasurement(MpcError):
    pass

class LengthMismatch(MpcError):
    pass

class DegenerateData(MpcError):
    pass

class NearSingularAttitude(MpcError):
    pass

class SimDiverged(MpcError):

    def __init__(
        self,
        message: str,
        log = None
    ) -> None:

        super().__init__(message)
        self.log = log
