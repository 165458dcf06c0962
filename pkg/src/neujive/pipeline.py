"""End-to-end composition: alignment, Euclideanization, block decomposition,
and the pullback that carries score-space structure back to landmarks.

Per block the stages are: optional Procrustes alignment of the landmark
population; nested-sphere fit and scores; row centering with the means
stored; then the shared joint/individual/residual split across blocks. The
pullback inverts the chain exactly when every level and full ranks are kept,
so the decomposition is lossless by construction and the joint part alone
can be mapped to representative shapes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ajive import (
    BlockDecomposition,
    JointBasis,
    JointRankPolicy,
    RandomDirection,
    decompose,
    policy_from_dict,
    policy_to_dict,
    scree_gap_rank,
)
from .errors import CaseMismatch, EmptyGroup
from .pns import PnsModel, pns_fit, pns_inverse, pns_scores
from .preshape import LandmarkConfig, gpa, to_preshape


@dataclass(frozen=True)
class NeujiveConfig:
    """Pipeline settings; the seed is recorded in every output.

    ``initial_ranks`` defaults to the scree-gap heuristic per block.
    ``pns_levels`` truncates the kept score rows per block (default: all,
    which makes the pullback exact). Score rows are always centered, with
    the removed means stored for the pullback. ``align`` applies Procrustes
    alignment before Euclideanization; the two-group construction requires
    turning it off, since its group contrast is exactly the alignment.
    """

    initial_ranks: tuple[int, ...] | None = None
    joint_rank_policy: JointRankPolicy = field(default_factory=RandomDirection)
    pns_levels: tuple[int, ...] | None = None
    rng_seed: int = 0
    align: bool = True
    restore_scale: bool = False

    def __post_init__(self):
        if self.initial_ranks is not None:
            ranks = tuple(int(r) for r in self.initial_ranks)
            if any(r < 1 for r in ranks):
                raise ValueError("initial ranks must be >= 1")
            object.__setattr__(self, "initial_ranks", ranks)
        if self.pns_levels is not None:
            levels = tuple(int(l) for l in self.pns_levels)
            if any(l < 1 for l in levels):
                raise ValueError("kept level counts must be >= 1")
            object.__setattr__(self, "pns_levels", levels)


def config_to_dict(cfg: NeujiveConfig) -> dict:
    return {
        "initial_ranks": list(cfg.initial_ranks) if cfg.initial_ranks else None,
        "joint_rank_policy": policy_to_dict(cfg.joint_rank_policy),
        "pns_levels": list(cfg.pns_levels) if cfg.pns_levels else None,
        "rng_seed": cfg.rng_seed,
        "align": cfg.align,
        "restore_scale": cfg.restore_scale,
    }


def config_from_dict(doc: dict) -> NeujiveConfig:
    return NeujiveConfig(
        initial_ranks=tuple(doc["initial_ranks"]) if doc.get("initial_ranks") else None,
        joint_rank_policy=policy_from_dict(doc["joint_rank_policy"]),
        pns_levels=tuple(doc["pns_levels"]) if doc.get("pns_levels") else None,
        rng_seed=int(doc.get("rng_seed", 0)),
        align=bool(doc.get("align", True)),
        restore_scale=bool(doc.get("restore_scale", False)),
    )


@dataclass(frozen=True)
class BlockResult:
    """Everything the pullback needs for one block."""

    block_id: str
    pns_model: PnsModel
    score_means: np.ndarray
    decomposition: BlockDecomposition
    kept_levels: int
    n_landmarks: int | None = None
    ambient_dim: int | None = None
    mean_centroid_size: float | None = None

    @property
    def joint_scores(self) -> np.ndarray:
        """Joint component in centered score space (kept levels x cases)."""
        return self.decomposition.joint


@dataclass(frozen=True)
class NeujiveResult:
    blocks: list[BlockResult]
    joint_basis: JointBasis
    case_ids: list[str]
    config: NeujiveConfig
    input_digest: str

    @property
    def joint_rank(self) -> int:
        return self.joint_basis.rank

    @property
    def n_cases(self) -> int:
        return len(self.case_ids)


def _digest(point_blocks: list[np.ndarray], case_ids: list[str]) -> str:
    h = hashlib.sha256()
    for b in point_blocks:
        h.update(np.ascontiguousarray(b, dtype=float).tobytes())
        h.update(str(b.shape).encode())
    h.update("\x1f".join(case_ids).encode())
    return h.hexdigest()


def neujive_on_spheres(point_blocks: list[np.ndarray], cfg: NeujiveConfig,
                       case_ids: list[str] | None = None,
                       block_ids: list[str] | None = None,
                       block_meta: list[dict] | None = None) -> NeujiveResult:
    """Run the score-space pipeline on blocks of points already on spheres.

    ``point_blocks[k]`` is (n, d_k) with unit rows. This is the common core:
    the landmark entry point reduces to it after alignment.
    """
    k_blocks = len(point_blocks)
    if k_blocks == 0:
        raise ValueError("no blocks given")
    ns = {b.shape[0] for b in point_blocks}
    if len(ns) != 1:
        raise CaseMismatch(f"blocks disagree on case count: {sorted(ns)}")
    n = ns.pop()
    if case_ids is None:
        case_ids = [f"case{i:04d}" for i in range(n)]
    if len(case_ids) != n:
        raise CaseMismatch("case id list does not match the case count")
    if block_ids is None:
        block_ids = [f"block{k}" for k in range(k_blocks)]
    meta = block_meta or [{} for _ in range(k_blocks)]

    models, score_blocks, means, kept = [], [], [], []
    for k, pts in enumerate(point_blocks):
        model = pns_fit(pts)
        levels = model.n_score_rows if cfg.pns_levels is None \
            else min(cfg.pns_levels[k], model.n_score_rows)
        z = pns_scores(model, pts, n_levels=levels)
        mu = z.mean(axis=1)
        models.append(model)
        score_blocks.append(z - mu[:, None])
        means.append(mu)
        kept.append(levels)

    if cfg.initial_ranks is None:
        ranks = [scree_gap_rank(z) for z in score_blocks]
    else:
        if len(cfg.initial_ranks) != k_blocks:
            raise ValueError("need one initial rank per block")
        ranks = [min(r, min(z.shape)) for r, z in zip(cfg.initial_ranks, score_blocks)]

    parts = decompose(score_blocks, ranks=ranks, policy=cfg.joint_rank_policy,
                      seed=cfg.rng_seed)
    blocks = [
        BlockResult(block_id=block_ids[k], pns_model=models[k],
                    score_means=means[k], decomposition=parts[k],
                    kept_levels=kept[k], **meta[k])
        for k in range(k_blocks)
    ]
    return NeujiveResult(blocks=blocks, joint_basis=parts[0].basis,
                         case_ids=list(case_ids), config=cfg,
                         input_digest=_digest(point_blocks, list(case_ids)))


def neujive(blocks: list[list[LandmarkConfig]], cfg: NeujiveConfig) -> NeujiveResult:
    """Full landmark pipeline across K blocks sharing the same cases."""
    if not blocks:
        raise ValueError("no blocks given")
    ids = [cfg_.case_id for cfg_ in blocks[0]]
    for blk in blocks[1:]:
        if [c.case_id for c in blk] != ids:
            raise CaseMismatch("blocks must list the same case ids in the same order")

    point_blocks, meta, block_ids = [], [], []
    for blk in blocks:
        if cfg.align:
            aligned = gpa(blk)
            shapes = aligned.preshapes
        else:
            shapes = [to_preshape(c) for c in blk]
        point_blocks.append(np.vstack([p.coords for p in shapes]))
        meta.append({
            "n_landmarks": shapes[0].n_landmarks,
            "ambient_dim": shapes[0].ambient_dim,
            "mean_centroid_size": float(np.mean([p.centroid_size for p in shapes])),
        })
        block_ids.append(blk[0].object_label)
    return neujive_on_spheres(point_blocks, cfg, case_ids=ids,
                              block_ids=block_ids, block_meta=meta)


def _pullback_columns(block: BlockResult, score_columns: np.ndarray) -> np.ndarray:
    cols = np.atleast_2d(np.asarray(score_columns, dtype=float))
    if cols.shape[0] > block.kept_levels:
        raise ValueError(
            f"score columns have {cols.shape[0]} rows, block keeps "
            f"{block.kept_levels} levels")
    if cols.shape[0] < block.kept_levels:
        pad = np.zeros((block.kept_levels - cols.shape[0], cols.shape[1]))
        cols = np.vstack([cols, pad])
    restored = cols + block.score_means[:, None]
    return np.vstack([pns_inverse(block.pns_model, restored[:, j])
                      for j in range(restored.shape[1])])


def pullback_scores(result: NeujiveResult, block: int, score_columns,
                    restore_scale: bool | None = None,
                    case_ids: list[str] | None = None) -> list[LandmarkConfig]:
    """Map centered score columns of one block back to landmark shapes.

    The stored row means are added back before inversion, so passing a joint
    component column reproduces the joint-only shape. Outputs are unit-size
    pre-shapes unless scale restoration (population mean centroid size) is
    requested here or in the config.
    """
    br = result.blocks[block]
    if br.n_landmarks is None:
        raise ValueError("block was not built from landmarks; use pullback_points")
    if restore_scale is None:
        restore_scale = result.config.restore_scale
    points = _pullback_columns(br, score_columns)
    scale = br.mean_centroid_size if restore_scale else 1.0
    out = []
    for j, row in enumerate(points):
        cid = case_ids[j] if case_ids else f"recon{j:04d}"
        mat = (row * scale).reshape(br.n_landmarks, br.ambient_dim)
        out.append(LandmarkConfig(points=mat, case_id=cid,
                                  object_label=br.block_id))
    return out


def pullback_points(result: NeujiveResult, block: int, score_columns) -> np.ndarray:
    """Sphere-space pullback: one unit vector per score column."""
    return _pullback_columns(result.blocks[block], score_columns)


def reconstruct_block(result: NeujiveResult, block: int) -> np.ndarray:
    """Invert the full decomposition (joint + individual + residual) of a
    block; with all levels kept this reproduces the input pre-shapes."""
    br = result.blocks[block]
    total = br.decomposition.total()
    return _pullback_columns(br, total)


def group_difference_map(result: NeujiveResult, labels,
                         restore_scale: bool | None = None) -> list[np.ndarray]:
    """Per-landmark distance between group-mean joint reconstructions.

    For each block, the joint score columns are averaged within each label
    group, pulled back to landmark space, and compared landmark by landmark.
    Units are pre-shape units, or source units under scale restoration.
    """
    labels = np.asarray(labels)
    if labels.size != result.n_cases:
        raise CaseMismatch("labels must align with the case list")
    mask_pos = labels == 1
    mask_neg = labels == 0
    if not mask_pos.any() or not mask_neg.any():
        raise EmptyGroup("both label groups must be non-empty")

    out = []
    for k, br in enumerate(result.blocks):
        joint = br.decomposition.joint
        mean_pos = joint[:, mask_pos].mean(axis=1, keepdims=True)
        mean_neg = joint[:, mask_neg].mean(axis=1, keepdims=True)
        recon = pullback_scores(result, k, np.hstack([mean_pos, mean_neg]),
                                restore_scale=restore_scale,
                                case_ids=["group_pos", "group_neg"])
        diff = recon[0].points - recon[1].points
        out.append(np.linalg.norm(diff, axis=1))
    return out
