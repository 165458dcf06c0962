"""Angle-based joint and individual variation decomposition of Euclidean blocks.

Each block is a features-by-cases matrix with centered rows. Per block, a
truncated SVD keeps the leading signal; the row spaces of the truncated right
singular matrices are the score spaces. Stacking those bases and taking one
more SVD yields candidate joint directions in case space; directions whose
stacked singular values clear the selection policy span the joint basis J.
The block then splits as X = X_hat J^T J + (X_hat - joint) + (X - X_hat).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotCentered, RankTooLarge
from .preshape import deterministic_svd

CENTER_TOL = 1e-6


@dataclass(frozen=True)
class EuclideanBlock:
    """A features-by-cases data block with centered rows."""

    data: np.ndarray
    block_id: str = "block"

    def __post_init__(self):
        x = np.asarray(self.data, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"block must be a 2-D matrix, got shape {x.shape}")
        worst = float(np.max(np.abs(x.mean(axis=1)))) if x.size else 0.0
        if worst > CENTER_TOL:
            raise NotCentered(f"{self.block_id}: row means up to {worst:.3e}")
        object.__setattr__(self, "data", x)

    @property
    def n_cases(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LowRankBlock:
    """Truncated SVD of one block: U_hat diag(S_hat) Vt_hat."""

    u_hat: np.ndarray
    s_hat: np.ndarray
    vt_hat: np.ndarray
    initial_rank: int

    def matrix(self) -> np.ndarray:
        return (self.u_hat * self.s_hat) @ self.vt_hat


@dataclass(frozen=True)
class JointBasis:
    """Orthonormal rows spanning the shared score subspace of R^n."""

    j_hat: np.ndarray
    squared_singular_values: np.ndarray
    threshold_used: float | None

    @property
    def rank(self) -> int:
        return self.j_hat.shape[0]


@dataclass(frozen=True)
class BlockDecomposition:
    """Additive split of one block: joint + individual + residual."""

    joint: np.ndarray
    individual: np.ndarray
    residual: np.ndarray
    basis: JointBasis
    block_id: str = "block"

    def total(self) -> np.ndarray:
        return self.joint + self.individual + self.residual


# --- selection policies ---

@dataclass(frozen=True)
class FixedRank:
    rank: int


@dataclass(frozen=True)
class AngleThreshold:
    max_angle: float  # radians


@dataclass(frozen=True)
class RandomDirection:
    """Keep directions whose stacked squared singular value beats a Monte
    Carlo null built from uniformly random subspaces of the same ranks."""

    quantile: float = 0.95
    n_sim: int = 400


JointRankPolicy = FixedRank | AngleThreshold | RandomDirection


def policy_to_dict(policy: JointRankPolicy) -> dict:
    if isinstance(policy, FixedRank):
        return {"policy": "fixed", "rank": policy.rank}
    if isinstance(policy, AngleThreshold):
        return {"policy": "angle_threshold", "max_angle": policy.max_angle}
    return {"policy": "random_direction", "quantile": policy.quantile,
            "n_sim": policy.n_sim}


def policy_from_dict(doc: dict) -> JointRankPolicy:
    kind = doc["policy"]
    if kind == "fixed":
        return FixedRank(rank=int(doc["rank"]))
    if kind == "angle_threshold":
        return AngleThreshold(max_angle=float(doc["max_angle"]))
    if kind == "random_direction":
        return RandomDirection(quantile=float(doc.get("quantile", 0.95)),
                               n_sim=int(doc.get("n_sim", 400)))
    raise ValueError(f"unknown joint-rank policy {kind!r}")


def low_rank_approx(block: EuclideanBlock | np.ndarray, rank: int) -> LowRankBlock:
    """Best rank-r Frobenius approximation via truncated SVD."""
    if not isinstance(block, EuclideanBlock):
        block = EuclideanBlock(data=block)
    x = block.data
    if not 1 <= rank <= min(x.shape):
        raise RankTooLarge(f"rank {rank} invalid for a {x.shape[0]} x {x.shape[1]} block")
    u, s, vt = deterministic_svd(x)
    return LowRankBlock(u_hat=u[:, :rank], s_hat=s[:rank], vt_hat=vt[:rank],
                        initial_rank=rank)


@dataclass(frozen=True)
class PrincipalAngleResult:
    angles: np.ndarray          # ascending, one per possible joint direction
    directions: np.ndarray      # right singular vectors of the stack, as rows
    squared_singular_values: np.ndarray


def principal_angles(bases: list[np.ndarray]) -> PrincipalAngleResult:
    """Principal angle analysis of the stacked score bases.

    For two blocks the stacked squared singular values are 1 + cos(theta_i)
    exactly, so theta_i = arccos(sigma_i^2 - 1). For three or more blocks no
    pairwise reading exists; angles are reported as arccos(sigma_i / sqrt(K))
    as an interpretation aid, while the directions remain the right singular
    vectors either way.
    """
    if not bases:
        raise ValueError("need at least one score basis")
    n = bases[0].shape[1]
    for b in bases:
        if b.ndim != 2 or b.shape[1] != n:
            raise DimensionMismatch("score bases must share the case count")
    stack = np.vstack(bases)
    _, svals, vt = deterministic_svd(stack)
    sq = svals**2
    k = len(bases)
    max_r = min(b.shape[0] for b in bases)
    if k == 2:
        cos = np.clip(sq[:max_r] - 1.0, -1.0, 1.0)
    else:
        cos = np.clip(svals[:max_r] / np.sqrt(k), -1.0, 1.0)
    angles = np.arccos(cos)
    return PrincipalAngleResult(angles=angles, directions=vt,
                                squared_singular_values=sq)


def _random_direction_null(r_ks, n, n_sim, rng) -> np.ndarray:
    """Largest stacked squared singular value under independent subspaces."""
    out = np.empty(n_sim)
    for i in range(n_sim):
        rows = []
        for r in r_ks:
            g = rng.normal(size=(n, r))
            q, _ = np.linalg.qr(g)
            rows.append(q.T)
        svals = np.linalg.svd(np.vstack(rows), compute_uv=False)
        out[i] = svals[0] ** 2
    return out


def select_joint_rank(stacked_sq_singvals, r_ks, n, policy: JointRankPolicy,
                      seed: int = 0) -> tuple[int, float | None]:
    """Number of joint directions to keep, plus the threshold applied.

    Zero is a legal outcome: it means no significant shared variation.
    """
    sq = np.asarray(stacked_sq_singvals, dtype=float)
    max_r = int(min(r_ks))
    k = len(r_ks)
    if isinstance(policy, FixedRank):
        if policy.rank < 0:
            raise ValueError("fixed joint rank must be >= 0")
        return min(policy.rank, max_r), None
    if isinstance(policy, AngleThreshold):
        if k == 2:
            threshold = 1.0 + np.cos(policy.max_angle)
        else:
            threshold = k * np.cos(policy.max_angle) ** 2
        return int(np.sum(sq[:max_r] > threshold)), float(threshold)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0xA11CE,)))
    null = _random_direction_null(r_ks, n, policy.n_sim, rng)
    threshold = float(np.quantile(null, policy.quantile))
    return int(np.sum(sq[:max_r] > threshold)), threshold


def decompose(blocks: list[EuclideanBlock | np.ndarray], ranks: list[int],
              policy: JointRankPolicy = RandomDirection(),
              seed: int = 0) -> list[BlockDecomposition]:
    """Full decomposition of multiple blocks sharing the same cases.

    Per block: joint = X_hat J^T J, individual = X_hat - joint,
    residual = X - X_hat, all carrying the shared joint basis.
    """
    blocks = [b if isinstance(b, EuclideanBlock) else EuclideanBlock(data=b)
              for b in blocks]
    ns = {b.n_cases for b in blocks}
    if len(ns) != 1:
        raise DimensionMismatch(f"blocks disagree on case count: {sorted(ns)}")
    n = ns.pop()
    if len(ranks) != len(blocks):
        raise ValueError("need one initial rank per block")

    low = [low_rank_approx(b, r) for b, r in zip(blocks, ranks)]
    paa = principal_angles([lr.vt_hat for lr in low])
    r, threshold = select_joint_rank(paa.squared_singular_values,
                                     [lr.initial_rank for lr in low], n,
                                     policy, seed=seed)
    j_hat = paa.directions[:r] if r > 0 else np.zeros((0, n))
    basis = JointBasis(j_hat=j_hat,
                       squared_singular_values=paa.squared_singular_values[:r],
                       threshold_used=threshold)

    out = []
    for b, lr in zip(blocks, low):
        x_hat = lr.matrix()
        joint = (x_hat @ j_hat.T) @ j_hat if r > 0 else np.zeros_like(x_hat)
        out.append(BlockDecomposition(
            joint=joint, individual=x_hat - joint, residual=b.data - x_hat,
            basis=basis, block_id=b.block_id,
        ))
    return out


def scree_gap_rank(x: np.ndarray, max_rank: int | None = None) -> int:
    """Default initial-rank heuristic: largest relative drop in the spectrum."""
    s = np.linalg.svd(np.asarray(x, dtype=float), compute_uv=False)
    s = s[s > 1e-12 * max(s[0], 1e-300)]
    limit = len(s) if max_rank is None else min(len(s), max_rank)
    if limit <= 1:
        return max(limit, 1)
    drops = (s[:limit - 1] - s[1:limit]) / s[:limit - 1]
    return int(np.argmax(drops)) + 1


def subspace_distance(j_hat: np.ndarray, vt_hat: np.ndarray) -> float:
    """Largest principal-angle sine between span(J) and a score space."""
    if j_hat.shape[0] == 0:
        return 0.0
    cos = np.linalg.svd(j_hat @ vt_hat.T, compute_uv=False)
    smallest = float(np.clip(cos[min(j_hat.shape[0], vt_hat.shape[0]) - 1], -1.0, 1.0))
    return float(np.sqrt(max(0.0, 1.0 - smallest**2)))
