"""Principal nested spheres: backward dimension reduction on hyperspheres.

Starting from data on S^{d-1}, a best-fitting subsphere (axis, radius) is
found at each dimension by minimizing summed squared signed geodesic
residuals; points are projected onto it and carried isometrically (rescaled
by 1/sin r) to the unit sphere one dimension lower, down to S^1 where the
circular mean is taken. Signed residuals per level, commensurated by the
product of higher-level sines so they approximate arc lengths on the
original sphere, are the Euclidean scores; the mapping is exactly invertible
when every level is kept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateData, DimensionMismatch, ScoreOutOfRange, UnderDetermined
from .sphere import (
    Subsphere,
    frechet_mean,
    project_rows,
    rotate_a_to_b,
    signed_residual_rows,
    unit_rows,
)

FIT_TOL = 1e-9
FIT_MAX_ITER = 500
GREAT_SNAP = 1e-9


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def _north(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[-1] = 1.0
    return e


def _wrap_angle(x):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def _objective(pts: np.ndarray, v: np.ndarray, force_great: bool):
    dist = np.arccos(np.clip(pts @ v, -1.0, 1.0))
    r = np.pi / 2 if force_great else float(dist.mean())
    f = dist - r
    return float(f @ f), r, dist


def _gauss_newton_fit(pts, v, force_great, tol, max_iter):
    """Alternate radius refresh with damped Gauss-Newton steps on the axis."""
    v = v / np.linalg.norm(v)
    lam = 1e-3
    obj, r, dist = _objective(pts, v, force_great)
    for _ in range(max_iter):
        cosd = np.clip(pts @ v, -1.0, 1.0)
        sind = np.sqrt(np.maximum(1.0 - cosd**2, 0.0))
        mask = sind > 1e-12
        u = np.zeros_like(pts)
        u[mask] = (pts[mask] - cosd[mask, None] * v) / sind[mask, None]
        f = dist - r
        a = u.T @ u
        g = u.T @ f
        accepted = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(a + lam * np.eye(len(v)), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            delta -= (delta @ v) * v
            step = float(np.linalg.norm(delta))
            if step >= np.pi:
                delta *= (np.pi - 1e-6) / step
                step = np.pi - 1e-6
            if step == 0.0:
                break
            v_try = np.cos(step) * v + np.sin(step) * delta / step
            v_try /= np.linalg.norm(v_try)
            obj_try, r_try, dist_try = _objective(pts, v_try, force_great)
            if obj_try <= obj:
                v, obj_new, r, dist = v_try, obj_try, r_try, dist_try
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e12:
                break
        if not accepted:
            break
        if abs(obj - obj_new) < tol:
            obj = obj_new
            break
        obj = obj_new
    return v, r, obj


def fit_subsphere(points, force_great: bool = False, tol: float = FIT_TOL,
                  max_iter: int = FIT_MAX_ITER) -> Subsphere:
    """Best-fitting subsphere of the points' sphere, in least-squares sense.

    The axis is initialized at the smallest eigenvector of the centered
    extrinsic covariance and tried with both signs to dodge the mirror local
    minimum. Radii above pi/2 are folded back by flipping the axis; at a
    great subsphere the leftover sign freedom is fixed by making the axis'
    largest-magnitude coordinate positive.
    """
    pts = unit_rows(points)
    n, ambient = pts.shape
    if n < (ambient - 1) + 2:
        warnings.warn(f"{n} points on a {ambient - 1}-sphere is under-determined",
                      UnderDetermined)
    spread = np.arccos(np.clip(pts @ pts[0], -1.0, 1.0))
    if float(spread.max()) < 1e-9:
        raise DegenerateData("all points coincide")

    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, eigvecs = np.linalg.eigh(cov)
    v0 = _canonical_sign(eigvecs[:, 0])

    candidates = []
    for v_init in (v0, -v0):
        v, r, obj = _gauss_newton_fit(pts, v_init, force_great, tol, max_iter)
        candidates.append((obj, tuple(v), v, r))
    candidates.sort(key=lambda c: (c[0], c[1]))
    _, _, v, r = candidates[0]

    if r > np.pi / 2:
        v, r = -v, np.pi - r
    if np.pi / 2 - r < GREAT_SNAP:
        v, r = _canonical_sign(v), np.pi / 2
    return Subsphere(axis=v, radius=max(r, 1e-12))


def _canonical_great_sphere(point: np.ndarray) -> Subsphere:
    """Great subsphere through ``point`` with a deterministic axis.

    Used when a level's data collapse to a single point and no fit exists.
    """
    d = point.size
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        a = e - (e @ point) * point
        nrm = float(np.linalg.norm(a))
        if nrm > 1e-9:
            return Subsphere(axis=_canonical_sign(a / nrm), radius=np.pi / 2)
    raise RuntimeError("unreachable")


def circle_frechet_mean_angle(angles: np.ndarray) -> float:
    """Global minimizer of summed squared arc length on the circle.

    The objective is piecewise quadratic in the candidate mean, with breaks
    at the antipode of every data point; scanning each segment's vertex plus
    all breakpoints and data points finds the exact global minimum.
    """
    base = np.mod(np.asarray(angles, dtype=float), 2.0 * np.pi)
    n = base.size
    if n == 0:
        raise ValueError("no angles given")
    breaks = np.sort(np.mod(base + np.pi, 2.0 * np.pi))
    candidates = list(breaks) + list(base)
    for i in range(n):
        lo = breaks[i]
        hi = breaks[(i + 1) % n] + (2.0 * np.pi if i == n - 1 else 0.0)
        if hi - lo <= 0.0:
            continue
        mid = 0.5 * (lo + hi)
        vertex = mid + float(np.mean(_wrap_angle(base - mid)))
        if lo < vertex < hi:
            candidates.append(vertex)
    cand = np.mod(np.asarray(candidates), 2.0 * np.pi)
    cand.sort()
    costs = np.array([float(np.sum(_wrap_angle(base - c) ** 2)) for c in cand])
    return float(cand[int(np.argmin(costs))])


@dataclass(frozen=True)
class PnsLevel:
    """One fitted subsphere plus the rotation realizing its embed map."""

    subsphere: Subsphere
    rotation: np.ndarray
    residuals: np.ndarray | None = None

    @property
    def sin_radius(self) -> float:
        return float(np.sin(self.subsphere.radius))


@dataclass(frozen=True)
class PnsModel:
    """Fitted hierarchy from S^{d-1} down to the circular mean on S^1.

    ``levels`` holds the d-2 subsphere fits (top dimension first); the final
    S^1 stage is the circular mean at ``circle_mean_angle``. ``scale_factors``
    commensurate level-l residuals by the product of higher-level sines;
    row l of any score matrix is the level-l signed residual times
    ``scale_factors[l]``.
    """

    sphere_dim: int
    levels: list[PnsLevel]
    circle_mean_angle: float
    backward_mean: np.ndarray
    scale_factors: np.ndarray
    circle_residuals: np.ndarray | None = None
    training_scores: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_score_rows(self) -> int:
        return self.sphere_dim - 1

    def circle_mean_point(self) -> np.ndarray:
        return np.array([np.cos(self.circle_mean_angle), np.sin(self.circle_mean_angle)])


def _embed_down(proj_points: np.ndarray, level: PnsLevel) -> np.ndarray:
    rotated = proj_points @ level.rotation.T
    down = rotated[:, :-1] / level.sin_radius
    norms = np.linalg.norm(down, axis=1)
    return down / np.maximum(norms, 1e-300)[:, None]


def _lift_up(point: np.ndarray, level: PnsLevel, residual: float) -> np.ndarray:
    angle = level.subsphere.radius + residual
    if abs(angle) >= np.pi:
        raise ScoreOutOfRange(f"residual {residual!r} pushes past a pole")
    lifted = np.concatenate([np.sin(angle) * point, [np.cos(angle)]])
    return level.rotation.T @ lifted


def pns_fit(points, force_great: bool = False) -> PnsModel:
    """Fit the full nested-sphere hierarchy to points on S^{d-1}."""
    pts = unit_rows(points)
    n, d = pts.shape
    if n < 2:
        raise ValueError("need at least two points")

    levels: list[PnsLevel] = []
    current = pts
    for ambient in range(d, 2, -1):
        try:
            sub = fit_subsphere(current, force_great=force_great)
        except DegenerateData:
            sub = _canonical_great_sphere(current[0])
        resid = signed_residual_rows(current, sub)
        rot = rotate_a_to_b(sub.axis, _north(ambient), plane=np.eye(ambient)[0])
        level = PnsLevel(subsphere=sub, rotation=rot, residuals=resid)
        levels.append(level)
        current = _embed_down(project_rows(current, sub), level)

    angles = np.arctan2(current[:, 1], current[:, 0])
    mean_angle = circle_frechet_mean_angle(angles)
    circle_resid = np.asarray(_wrap_angle(angles - mean_angle), dtype=float)

    sines = np.array([lv.sin_radius for lv in levels])
    scale_factors = np.concatenate([[1.0], np.cumprod(sines)]) if len(sines) \
        else np.array([1.0])

    skeleton = PnsModel(
        sphere_dim=d, levels=levels, circle_mean_angle=float(mean_angle),
        backward_mean=np.zeros(d), scale_factors=scale_factors,
    )
    backward = pns_inverse(skeleton, np.zeros(d - 1))
    raw = np.vstack([lv.residuals for lv in levels] + [circle_resid]) if levels \
        else circle_resid[None, :]
    return replace(skeleton, backward_mean=backward, circle_residuals=circle_resid,
                   training_scores=raw * scale_factors[:, None])


def pns_scores(model: PnsModel, points, n_levels: int | None = None) -> np.ndarray:
    """Euclidean score coordinates: one row per level, one column per case."""
    pts = unit_rows(np.atleast_2d(points))
    if pts.shape[1] != model.sphere_dim:
        raise DimensionMismatch(
            f"points live in R^{pts.shape[1]}, model expects R^{model.sphere_dim}")
    rows = []
    current = pts
    for level in model.levels:
        rows.append(signed_residual_rows(current, level.subsphere))
        current = _embed_down(project_rows(current, level.subsphere), level)
    angles = np.arctan2(current[:, 1], current[:, 0])
    rows.append(_wrap_angle(angles - model.circle_mean_angle))
    scores = np.vstack(rows) * model.scale_factors[:, None]
    if n_levels is not None:
        if not 1 <= n_levels <= model.n_score_rows:
            raise DimensionMismatch(f"kept levels must be in [1, {model.n_score_rows}]")
        scores = scores[:n_levels]
    return scores


def pns_inverse(model: PnsModel, scores) -> np.ndarray:
    """Pull a score column back to a point on the original sphere.

    Missing trailing levels are treated as zero residual, so a short score
    vector lands on the corresponding nested subsphere.
    """
    s = np.asarray(scores, dtype=float).ravel()
    if s.size > model.n_score_rows:
        raise DimensionMismatch(f"got {s.size} scores for {model.n_score_rows} levels")
    full = np.zeros(model.n_score_rows)
    full[:s.size] = s
    resid = full / model.scale_factors

    angle = model.circle_mean_angle + resid[-1]
    point = np.array([np.cos(angle), np.sin(angle)])
    for level, xi in zip(reversed(model.levels), reversed(resid[:-1])):
        point = _lift_up(point, level, float(xi))
    return point / np.linalg.norm(point)


def pns_inverse_matrix(model: PnsModel, score_matrix) -> np.ndarray:
    """Column-wise pullback; returns one sphere point per row."""
    cols = np.atleast_2d(np.asarray(score_matrix, dtype=float))
    return np.vstack([pns_inverse(model, cols[:, j]) for j in range(cols.shape[1])])


def tangent_pca(points, n_components: int | None = None):
    """Tangent-space PCA baseline: log map at the intrinsic mean, then PCA.

    Returns (mean, components, scores); components are rows in the ambient
    space, scores are component-by-case. This is the classical
    Euclideanization the nested-sphere construction is compared against.
    """
    pts = unit_rows(points)
    mean = frechet_mean(pts)
    c = np.clip(pts @ mean, -1.0, 1.0)
    theta = np.arccos(c)
    sin_t = np.sin(theta)
    w = np.where(sin_t > 1e-12, theta / np.maximum(sin_t, 1e-300), 1.0)
    tangent = (pts - c[:, None] * mean) * w[:, None]
    tangent -= tangent.mean(axis=0)
    u, s, vt = np.linalg.svd(tangent, full_matrices=False)
    k = n_components or min(pts.shape[0], pts.shape[1] - 1)
    comps = vt[:k]
    return mean, comps, (tangent @ comps.T).T


def model_to_dict(model: PnsModel) -> dict:
    """JSON-ready structure: axes, radii, scale factors, mean."""
    return {
        "sphere_dim": model.sphere_dim,
        "levels": [
            {"axis": lv.subsphere.axis.tolist(), "radius": lv.subsphere.radius}
            for lv in model.levels
        ],
        "circle_mean_angle": model.circle_mean_angle,
        "scale_factors": model.scale_factors.tolist(),
        "backward_mean": model.backward_mean.tolist(),
    }


def model_from_dict(doc: dict) -> PnsModel:
    """Rebuild a model; embed rotations are recomputed deterministically."""
    d = int(doc["sphere_dim"])
    levels = []
    for lv, ambient in zip(doc["levels"], range(d, 2, -1)):
        sub = Subsphere(axis=np.array(lv["axis"], dtype=float), radius=float(lv["radius"]))
        rot = rotate_a_to_b(sub.axis, _north(ambient), plane=np.eye(ambient)[0])
        levels.append(PnsLevel(subsphere=sub, rotation=rot))
    return PnsModel(
        sphere_dim=d,
        levels=levels,
        circle_mean_angle=float(doc["circle_mean_angle"]),
        backward_mean=np.array(doc["backward_mean"], dtype=float),
        scale_factors=np.array(doc["scale_factors"], dtype=float),
    )
