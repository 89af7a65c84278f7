"""Exception hierarchy shared by all modules."""


class LangevinLabError(Exception):
    """Base class for every error raised by this package."""


class NumericalFailure(LangevinLabError):
    """A computation produced non-finite or otherwise unusable numbers."""


# objective
class ZeroMatrix(LangevinLabError, ValueError):
    pass


class NoProjection(LangevinLabError):
    pass


class NoAdmissibleSamples(LangevinLabError):
    pass


# sde_sim
class Diverged(NumericalFailure):
    """A trajectory left the finite range.

    ``snapshots`` holds whatever was recorded before the divergence, with a
    final snapshot flagged ``diverged=True``.
    """

    def __init__(self, path_index, t, snapshots=None):
        super().__init__(f"path {path_index} diverged at t={t:g}")
        self.path_index = path_index
        self.t = t
        self.snapshots = list(snapshots or [])


# estimators
class EmptyEnsemble(LangevinLabError, ValueError):
    pass


# bounds
class InadmissibleSigma(LangevinLabError, ValueError):
    pass


class ZeroEventProbability(LangevinLabError, ValueError):
    pass


class StepTooLarge(LangevinLabError, ValueError):
    pass


# fokker_planck
class WeightUnderflow(NumericalFailure):
    pass


class CFLViolation(LangevinLabError, ValueError):
    pass


class SolverDivergence(NumericalFailure):
    pass


class OrderTooHigh(LangevinLabError, ValueError):
    pass


class WindowTooShort(LangevinLabError, ValueError):
    pass


class TimeMismatch(LangevinLabError, ValueError):
    pass


# nn_local_pl
class ShapeMismatch(LangevinLabError, ValueError):
    pass


# expcli
class ConfigInvalid(LangevinLabError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class MissingData(LangevinLabError):
    pass


class NoOverlap(LangevinLabError):
    pass
