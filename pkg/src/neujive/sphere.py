"""Primitive operations on unit hyperspheres S^{d-1}.

Points are plain numpy vectors of unit Euclidean norm; tangent vectors are
vectors orthogonal to their base point. Everything here is a pure function,
safe to share across threads. Inner products feeding ``arccos`` are always
clamped to [-1, 1] so coincident or antipodal inputs never produce NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AntipodalAmbiguity,
    AntipodalPoint,
    NonTangent,
    OutOfInjectivity,
    PoleDegenerate,
)

# Constructors renormalize below this deviation and reject above it: tolerate
# I/O rounding without hiding genuinely bad data.
NORM_SLACK = 1e-6
TANGENT_TOL = 1e-10
ANTIPODAL_TOL = 1e-12
POLE_TOL = 1e-9


def unit_vector(x) -> np.ndarray:
    """Validate and renormalize a would-be point on the sphere.

    Accepts vectors whose norm deviates from 1 by less than ``NORM_SLACK``
    and returns the exactly normalized copy; rejects anything farther off.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError(f"expected a vector of length >= 2, got shape {x.shape}")
    norm = float(np.linalg.norm(x))
    if abs(norm - 1.0) >= NORM_SLACK:
        raise ValueError(f"vector norm {norm!r} is not within {NORM_SLACK} of 1")
    return x / norm


def unit_rows(points) -> np.ndarray:
    """Validate an (n, d) array of sphere points, renormalizing each row."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError(f"expected an (n, d>=2) array, got shape {pts.shape}")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(norms - 1.0) >= NORM_SLACK):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"row norms deviate from 1 by up to {worst!r}")
    return pts / norms[:, None]


@dataclass(frozen=True)
class Subsphere:
    """A subsphere of S^{d-1}: points at geodesic angle ``radius`` from ``axis``.

    ``radius`` is constrained to (0, pi/2]; a radius of pi/2 is a great
    subsphere. The parameterization with radius > pi/2 is redundant (flip the
    axis), so it is rejected.
    """

    axis: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "axis", unit_vector(self.axis))
        r = float(self.radius)
        if not 0.0 < r <= np.pi / 2 + 1e-12:
            raise ValueError(f"subsphere radius must be in (0, pi/2], got {r!r}")
        object.__setattr__(self, "radius", min(r, np.pi / 2))

    @property
    def ambient_dim(self) -> int:
        return self.axis.size


def geodesic_distance(a, b) -> float:
    """Arc length between two unit vectors, in [0, pi]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))


def exp_map(base, v) -> np.ndarray:
    """Follow the geodesic from ``base`` with initial velocity ``v``.

    ``v`` must be tangent at ``base`` (orthogonal to it) and shorter than pi.
    """
    base = np.asarray(base, dtype=float)
    v = np.asarray(v, dtype=float)
    dot = float(v @ base)
    if abs(dot) > max(TANGENT_TOL, TANGENT_TOL * np.linalg.norm(v)):
        raise NonTangent(f"tangent component along base is {dot!r}")
    norm = float(np.linalg.norm(v))
    if norm >= np.pi:
        raise OutOfInjectivity(f"tangent norm {norm!r} >= pi")
    if norm == 0.0:
        return base.copy()
    return np.cos(norm) * base + np.sin(norm) * v / norm


def log_map(base, p) -> np.ndarray:
    """Tangent vector at ``base`` whose exp_map lands on ``p``.

    Undefined at the antipode of ``base``.
    """
    base = np.asarray(base, dtype=float)
    p = np.asarray(p, dtype=float)
    c = float(np.clip(p @ base, -1.0, 1.0))
    if c <= -1.0 + ANTIPODAL_TOL:
        raise AntipodalPoint("log map undefined at the antipode")
    theta = np.arccos(c)
    if theta == 0.0:
        return np.zeros_like(base)
    perp = p - c * base
    return theta * perp / np.linalg.norm(perp)


def rotate_a_to_b(a, b, plane=None) -> np.ndarray:
    """Rotation (det +1) taking ``a`` to ``b``, identity on their complement.

    For antipodal ``a``, ``b`` the rotation plane is ambiguous; pass ``plane``
    (any vector not collinear with ``a``) to resolve it, otherwise
    :class:`AntipodalAmbiguity` is raised.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.size
    c = float(np.clip(a @ b, -1.0, 1.0))
    if c >= 1.0 - ANTIPODAL_TOL:
        return np.eye(d)
    if c <= -1.0 + ANTIPODAL_TOL:
        if plane is None:
            raise AntipodalAmbiguity("a and b are antipodal; supply a rotation plane")
        w = np.asarray(plane, dtype=float)
        w = w - (w @ a) * a
        wn = float(np.linalg.norm(w))
        if wn < ANTIPODAL_TOL:
            raise AntipodalAmbiguity("plane vector is collinear with a")
        w /= wn
        # Half-turn in span{a, w}: two -1 eigenvalues, det stays +1.
        return np.eye(d) - 2.0 * np.outer(a, a) - 2.0 * np.outer(w, w)
    w = b - c * a
    w /= np.linalg.norm(w)
    theta = np.arccos(c)
    s, cm1 = np.sin(theta), np.cos(theta) - 1.0
    return np.eye(d) + s * (np.outer(w, a) - np.outer(a, w)) \
        + cm1 * (np.outer(a, a) + np.outer(w, w))


def project_to_subsphere(p, s: Subsphere) -> np.ndarray:
    """Closest point to ``p`` on the subsphere, along their great circle.

    Raises :class:`PoleDegenerate` when ``p`` sits (numerically) at either
    pole of the axis, where every subsphere point is equidistant; callers
    should fall back on :func:`subsphere_pole_point`.
    """
    p = np.asarray(p, dtype=float)
    rho = geodesic_distance(p, s.axis)
    if rho < POLE_TOL or np.pi - rho < POLE_TOL:
        raise PoleDegenerate(f"point at angle {rho!r} from the axis")
    r = s.radius
    out = (np.sin(r) * p + np.sin(rho - r) * s.axis) / np.sin(rho)
    return out / np.linalg.norm(out)


def subsphere_pole_point(s: Subsphere) -> np.ndarray:
    """Deterministic tie-break target for pole-degenerate projections.

    Moves from the axis along the first canonical basis direction that has a
    nonzero projection onto the tangent space at the axis.
    """
    d = s.ambient_dim
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        t = e - (e @ s.axis) * s.axis
        tn = float(np.linalg.norm(t))
        if tn > 1e-9:
            return exp_map(s.axis, s.radius * t / tn)
    raise RuntimeError("unreachable: axis cannot shadow every basis direction")


def project_rows(points, s: Subsphere) -> np.ndarray:
    """Row-wise subsphere projection with the documented pole tie-break."""
    points = np.asarray(points, dtype=float)
    out = np.empty_like(points)
    for i, p in enumerate(points):
        try:
            out[i] = project_to_subsphere(p, s)
        except PoleDegenerate:
            out[i] = subsphere_pole_point(s)
    return out


def signed_residual(p, s: Subsphere) -> float:
    """Signed angle from the subsphere: positive outside (farther from axis).

    The sign convention is a package convention; common usage only fixes the
    magnitude.
    """
    return geodesic_distance(p, s.axis) - s.radius


def signed_residual_rows(points, s: Subsphere) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return np.arccos(np.clip(points @ s.axis, -1.0, 1.0)) - s.radius


def frechet_mean(points, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Intrinsic mean by iterated log/exp averaging (tangent-space baseline).

    Converges for data within a geodesic ball of radius < pi/2, which covers
    every use in this package; used as the comparison point for the
    nested-sphere backward mean.
    """
    pts = unit_rows(points)
    mean = pts.sum(axis=0)
    nrm = np.linalg.norm(mean)
    mean = pts[0].copy() if nrm < 1e-12 else mean / nrm
    for _ in range(max_iter):
        c = np.clip(pts @ mean, -1.0, 1.0)
        theta = np.arccos(c)
        sin_t = np.sin(theta)
        w = np.where(sin_t > 1e-12, theta / np.maximum(sin_t, 1e-300), 1.0)
        tangent = (pts - c[:, None] * mean) * w[:, None]
        step = tangent.mean(axis=0)
        step -= (step @ mean) * mean
        if np.linalg.norm(step) < tol:
            break
        mean = exp_map(mean, step if np.linalg.norm(step) < np.pi else
                       step * (np.pi - 1e-9) / np.linalg.norm(step))
    return mean


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector: base point plus a direction orthogonal to it."""

    base: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", unit_vector(self.base))
        d = np.asarray(self.direction, dtype=float)
        if d.shape != self.base.shape:
            raise ValueError("direction and base must have the same length")
        if abs(float(d @ self.base)) > max(TANGENT_TOL, TANGENT_TOL * np.linalg.norm(d)):
            raise NonTangent("direction is not orthogonal to base")
        object.__setattr__(self, "direction", d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.direction))
