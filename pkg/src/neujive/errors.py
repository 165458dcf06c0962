"""Exception and warning types shared across the package."""


class NeujiveError(Exception):
    """Base class for all package errors."""


# --- sphere geometry ---

class NonTangent(NeujiveError):
    """Tangent-vector argument is not orthogonal to its base point."""


class OutOfInjectivity(NeujiveError):
    """Tangent vector is too long for the exponential map to be injective."""


class AntipodalPoint(NeujiveError):
    """Log map requested at (numerically) antipodal points."""


class AntipodalAmbiguity(NeujiveError):
    """Rotation between antipodal directions needs an explicit plane."""


class PoleDegenerate(NeujiveError):
    """Projection onto a subsphere is ill-defined at the axis poles."""


# --- pre-shapes / alignment ---

class DegenerateShape(NeujiveError):
    """Landmark configuration has zero centroid size or coincident points."""


# --- nested-sphere fitting ---

class DegenerateData(NeujiveError):
    """All points coincide; no subsphere can be fitted."""


class ScoreOutOfRange(NeujiveError):
    """A score pushes the reconstruction past a pole of its level."""


class DimensionMismatch(NeujiveError):
    """Input dimensions do not match the fitted model or each other."""


# --- block decomposition ---

class RankTooLarge(NeujiveError):
    """Requested rank exceeds what the block supports."""


class NotCentered(NeujiveError):
    """Block rows are not centered; centering is the caller's job."""


# --- pipeline ---

class CaseMismatch(NeujiveError):
    """Blocks do not share the same cases in the same order."""


class EmptyGroup(NeujiveError):
    """A group required by the operation has no cases."""


# --- inference ---

class DegeneratePermutationSpread(NeujiveError):
    """Permutation statistics have zero spread; z-score undefined."""


class SingleClassTest(NeujiveError):
    """Test set contains only one class."""


class InsufficientClassSize(NeujiveError):
    """Class sizes cannot support the requested partition."""


class IndexOutOfRange(NeujiveError):
    """Landmark index outside the configuration."""


# --- non-fatal conditions ---

class NeujiveWarning(UserWarning):
    """Base class for package warnings."""


class RankDeficient(NeujiveWarning):
    """Cross-covariance is rank deficient; rotation tie broken by convention."""


class UnderDetermined(NeujiveWarning):
    """Too few points for a well-determined subsphere fit."""


class NoConvergence(NeujiveWarning):
    """Iteration budget exhausted before the tolerance was met."""


class NoDescent(NeujiveWarning):
    """Line search failed to find a descent step; best iterate returned."""
