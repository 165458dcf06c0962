"""Pre-shapes and generalized Procrustes alignment.

A pre-shape is a landmark configuration with translation and scale removed:
centered at the origin and divided by its centroid size (Frobenius norm of
the centered landmark matrix), so it lives on the unit sphere S^{M*D-1}.
Rotation is removed separately, by iterative alignment of a population to its
Procrustes mean; reflections are never allowed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateShape, NoConvergence, RankDeficient

GPA_TOL = 1e-9
GPA_MAX_ITER = 200


@dataclass(frozen=True)
class LandmarkConfig:
    """One object's landmarks: an M x D coordinate matrix plus identifiers."""

    points: np.ndarray
    case_id: str
    object_label: str = "obj"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be an M x D matrix, got shape {pts.shape}")
        m, d = pts.shape
        if m < 3 or d not in (2, 3):
            raise ValueError(f"need M >= 3 landmarks in 2 or 3 dimensions, got {m} x {d}")
        diffs = pts[:, None, :] - pts[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) == 0.0:
            raise DegenerateShape(f"{self.case_id}: coincident landmarks")
        object.__setattr__(self, "points", pts)

    @property
    def n_landmarks(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PreShape:
    """Centered, unit-size landmark vector on the pre-shape sphere.

    ``coords`` is the row-major flattening of the M x D centered, normalized
    matrix. The removed translation and scale, and any rotation applied
    during alignment, are kept so the original frame can be recovered.
    """

    coords: np.ndarray
    n_landmarks: int
    ambient_dim: int
    centroid_size: float
    removed_translation: np.ndarray
    applied_rotation: np.ndarray
    case_id: str = ""
    object_label: str = "obj"

    def matrix(self) -> np.ndarray:
        return self.coords.reshape(self.n_landmarks, self.ambient_dim)

    def rotated(self, rotation: np.ndarray) -> "PreShape":
        """Apply a further rotation (landmarks right-multiplied by R^T)."""
        mat = self.matrix() @ rotation.T
        return PreShape(
            coords=mat.ravel(),
            n_landmarks=self.n_landmarks,
            ambient_dim=self.ambient_dim,
            centroid_size=self.centroid_size,
            removed_translation=self.removed_translation,
            applied_rotation=rotation @ self.applied_rotation,
            case_id=self.case_id,
            object_label=self.object_label,
        )


@dataclass(frozen=True)
class AlignedPopulation:
    """Result of GPA on one block: aligned pre-shapes and their mean."""

    preshapes: list[PreShape]
    procrustes_mean: PreShape
    iterations_used: int
    final_change: float
    objective_history: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def mean_centroid_size(self) -> float:
        return float(np.mean([p.centroid_size for p in self.preshapes]))

    def coordinate_matrix(self) -> np.ndarray:
        """Stacked pre-shape coordinates, one column per case ((M*D) x n)."""
        return np.column_stack([p.coords for p in self.preshapes])


def to_preshape(cfg: LandmarkConfig) -> PreShape:
    """Remove translation and scale; the result lies on the unit sphere."""
    pts = cfg.points
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    size = float(np.linalg.norm(centered))
    if size == 0.0:
        raise DegenerateShape(f"{cfg.case_id}: zero centroid size")
    return PreShape(
        coords=(centered / size).ravel(),
        n_landmarks=cfg.n_landmarks,
        ambient_dim=cfg.ambient_dim,
        centroid_size=size,
        removed_translation=centroid,
        applied_rotation=np.eye(cfg.ambient_dim),
        case_id=cfg.case_id,
        object_label=cfg.object_label,
    )


def deterministic_svd(a: np.ndarray):
    """Full SVD with a fixed sign convention on the right singular vectors.

    Each row of Vt gets its largest-magnitude entry made positive (first such
    entry on ties); the corresponding U column flips in tandem so the product
    is unchanged. Removes the sign ambiguity so repeated runs are identical.
    """
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def optimal_rotation(a: PreShape, b: PreShape) -> np.ndarray:
    """Rotation R (det +1) minimizing ||A R^T - B||_F over rotations.

    Standard orthogonal-Procrustes solution from the SVD of the D x D
    cross-covariance, with the reflection corrected by flipping the last
    singular pair when needed.
    """
    if (a.n_landmarks, a.ambient_dim) != (b.n_landmarks, b.ambient_dim):
        raise ValueError("pre-shapes must have matching landmark counts and dimension")
    c = a.matrix().T @ b.matrix()
    u, s, vt = deterministic_svd(c)
    d = c.shape[0]
    if np.sum(s > 1e-12 * max(s[0], 1e-300)) < d - 1:
        warnings.warn("cross-covariance rank below D-1; rotation tie broken "
                      "by the SVD sign convention", RankDeficient)
    r = vt.T @ u.T
    if np.linalg.det(r) < 0:
        vt = vt.copy()
        vt[-1] *= -1.0
        r = vt.T @ u.T
    return r


def procrustes_objective(preshapes: list[PreShape], mean_coords: np.ndarray) -> float:
    return float(sum(np.sum((p.coords - mean_coords) ** 2) for p in preshapes))


def gpa(block: list[LandmarkConfig], tol: float = GPA_TOL,
        max_iter: int = GPA_MAX_ITER) -> AlignedPopulation:
    """Generalized Procrustes alignment of one block.

    Converts every configuration to a pre-shape, then alternates rotating
    each case to the current mean with re-estimating the mean as the
    renormalized average. Both steps decrease the summed squared distance to
    the mean, so the recorded objective is non-increasing. The mean is
    initialized at the first case, which is immaterial for the monotone
    objective.
    """
    if len(block) < 2:
        raise ValueError("GPA needs at least two configurations")
    shapes = [to_preshape(c) for c in block]
    md = {(p.n_landmarks, p.ambient_dim) for p in shapes}
    if len(md) != 1:
        raise ValueError("all configurations must share M and D")

    mean = shapes[0].coords.copy()
    history: list[float] = []
    change = np.inf
    iters = 0
    mean_shape_like = shapes[0]
    for iters in range(1, max_iter + 1):
        mean_pre = PreShape(
            coords=mean, n_landmarks=mean_shape_like.n_landmarks,
            ambient_dim=mean_shape_like.ambient_dim, centroid_size=1.0,
            removed_translation=np.zeros(mean_shape_like.ambient_dim),
            applied_rotation=np.eye(mean_shape_like.ambient_dim),
        )
        shapes = [p.rotated(optimal_rotation(p, mean_pre)) for p in shapes]
        history.append(procrustes_objective(shapes, mean))
        new_mean = np.mean([p.coords for p in shapes], axis=0)
        nrm = float(np.linalg.norm(new_mean))
        if nrm == 0.0:
            raise DegenerateShape("population average collapsed to zero")
        new_mean /= nrm
        change = float(np.linalg.norm(new_mean - mean))
        mean = new_mean
        if change < tol:
            break
    history.append(procrustes_objective(shapes, mean))

    converged = change < 1e-6
    if not converged:
        warnings.warn(f"GPA stopped after {iters} iterations with change {change:.3e}",
                      NoConvergence)
    mean_pre = PreShape(
        coords=mean, n_landmarks=mean_shape_like.n_landmarks,
        ambient_dim=mean_shape_like.ambient_dim, centroid_size=1.0,
        removed_translation=np.zeros(mean_shape_like.ambient_dim),
        applied_rotation=np.eye(mean_shape_like.ambient_dim),
        case_id="<mean>", object_label=mean_shape_like.object_label,
    )
    return AlignedPopulation(
        preshapes=shapes, procrustes_mean=mean_pre, iterations_used=iters,
        final_change=change, objective_history=history, converged=converged,
    )
