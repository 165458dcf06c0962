"""Inference on joint components: permutation testing, linear classification
with repeated holdouts, and the comparison feature sets.

The permutation test uses the mean-difference statistic: the Euclidean norm
of the difference between class-mean feature columns, which equals the mean
difference of the data projected on the unit mean-difference direction. The
classifier is the smooth large-margin loss (1 - u below 1/2, 1/(4u) above),
convex in (w, b), trained by gradient descent with backtracking; the closed
form mean-difference classifier is kept as a cross-check of the optimizer
plumbing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegeneratePermutationSpread,
    EmptyGroup,
    InsufficientClassSize,
    NoDescent,
    SingleClassTest,
)
from .pipeline import NeujiveConfig, neujive
from .pns import pns_fit, pns_scores
from .preshape import LandmarkConfig, to_preshape


@dataclass(frozen=True)
class LabeledScores:
    """Feature columns with binary labels; rows are features."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels).astype(int)
        if x.shape[1] != y.size:
            raise ValueError(f"{x.shape[1]} columns vs {y.size} labels")
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_cases(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "LabeledScores":
        return LabeledScores(features=self.features[:, idx], labels=self.labels[idx])


@dataclass(frozen=True)
class DiProPermResult:
    observed_md: float
    permutation_mds: np.ndarray
    p_value: float
    z_score: float
    n_perm: int
    seed: int


def _mean_difference(features: np.ndarray, labels: np.ndarray) -> float:
    pos = features[:, labels == 1]
    neg = features[:, labels == 0]
    return float(np.linalg.norm(pos.mean(axis=1) - neg.mean(axis=1)))


def diproperm(scores: LabeledScores, n_perm: int = 1000, seed: int = 0) -> DiProPermResult:
    """Mean-difference permutation test with an empirical p-value.

    Labels are permuted uniformly; p is the exact fraction of permuted
    statistics at or above the observed one, z the usual standardization.
    """
    if n_perm < 100:
        raise ValueError("use at least 100 permutations")
    y = scores.labels
    if np.sum(y == 1) < 2 or np.sum(y == 0) < 2:
        raise EmptyGroup("need at least two cases per class")
    observed = _mean_difference(scores.features, y)
    rng = np.random.default_rng(seed)
    perms = np.empty(n_perm)
    for i in range(n_perm):
        perms[i] = _mean_difference(scores.features, rng.permutation(y))
    sd = float(perms.std(ddof=0))
    if sd == 0.0:
        raise DegeneratePermutationSpread("permutation statistics are constant")
    return DiProPermResult(
        observed_md=observed,
        permutation_mds=perms,
        p_value=float(np.sum(perms >= observed)) / n_perm,
        z_score=(observed - float(perms.mean())) / sd,
        n_perm=n_perm,
        seed=seed,
    )


# --- linear classification ---

@dataclass(frozen=True)
class LinearClassifier:
    w: np.ndarray
    intercept: float
    regularization: float
    loss: str
    converged: bool = True

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        return self.w @ np.atleast_2d(features) + self.intercept


def _margin_loss(u):
    # The clamp only affects the branch np.where discards.
    safe = np.maximum(u, 0.5)
    return np.where(u <= 0.5, 1.0 - u, 1.0 / (4.0 * safe))


def _margin_loss_grad(u):
    safe = np.maximum(u, 0.5)
    return np.where(u <= 0.5, -1.0, -1.0 / (4.0 * safe**2))


def train_dwd(train: LabeledScores, regularization: float = 1e-2,
              loss: str = "dwd", tol: float = 1e-8,
              max_iter: int = 5000) -> LinearClassifier:
    """Train the large-margin linear classifier.

    Minimizes mean margin loss plus ridge on w; the objective is convex so
    any stationary point is global. ``loss="mean_difference"`` returns the
    closed-form class-mean-difference direction instead.
    """
    if regularization <= 0:
        raise ValueError("regularization must be positive")
    x, y01 = train.features, train.labels
    if np.sum(y01 == 1) == 0 or np.sum(y01 == 0) == 0:
        raise EmptyGroup("both classes needed for training")
    y = np.where(y01 == 1, 1.0, -1.0)
    mu_pos = x[:, y01 == 1].mean(axis=1)
    mu_neg = x[:, y01 == 0].mean(axis=1)

    if loss == "mean_difference":
        w = mu_pos - mu_neg
        b = -float(w @ (mu_pos + mu_neg)) / 2.0
        return LinearClassifier(w=w, intercept=b, regularization=regularization,
                                loss=loss)
    if loss != "dwd":
        raise ValueError(f"unknown loss {loss!r}")

    n = train.n_cases
    w = (mu_pos - mu_neg) / max(np.linalg.norm(mu_pos - mu_neg), 1e-12)
    b = -float(w @ (mu_pos + mu_neg)) / 2.0

    def objective(w_, b_):
        u = y * (w_ @ x + b_)
        return float(np.mean(_margin_loss(u)) + regularization * (w_ @ w_))

    obj = objective(w, b)
    converged = False
    for _ in range(max_iter):
        u = y * (w @ x + b)
        g = _margin_loss_grad(u) * y / n
        grad_w = x @ g + 2.0 * regularization * w
        grad_b = float(np.sum(g))
        gnorm2 = float(grad_w @ grad_w) + grad_b**2
        if gnorm2 < 1e-24:
            converged = True
            break
        step = 1.0
        accepted = False
        for _ in range(60):
            w_try = w - step * grad_w
            b_try = b - step * grad_b
            obj_try = objective(w_try, b_try)
            if obj_try <= obj - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            warnings.warn("line search stalled; returning best iterate", NoDescent)
            break
        w, b = w_try, b_try
        if abs(obj - obj_try) < tol:
            obj = obj_try
            converged = True
            break
        obj = obj_try
    return LinearClassifier(w=w, intercept=float(b), regularization=regularization,
                            loss=loss, converged=converged)


def roc_auc(clf: LinearClassifier, test: LabeledScores) -> float:
    """Rank-based (Mann-Whitney) area under the ROC curve; ties count half."""
    return roc_auc_from_values(clf.decision_values(test.features), test.labels)


def roc_auc_from_values(values, labels) -> float:
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassTest("test set must contain both classes")
    ranks = rankdata(values)
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(clf: LinearClassifier, test: LabeledScores) -> float:
    pred = (clf.decision_values(test.features) > 0).astype(int)
    return float(np.mean(pred == test.labels))


# --- repeated holdouts with inner selection ---

DEFAULT_LAMBDA_GRID = tuple(np.logspace(-4, 1, 6))


@dataclass(frozen=True)
class HarnessConfig:
    """Settings for the repeated-holdout evaluation.

    The default round count is the full reproduction protocol; property
    tests run far fewer rounds. ``test_fraction=None`` uses tenth-sized test
    splits, mirroring the partition into ten roughly equal subsets per
    class. The inner split selects the feature variant (e.g. initial rank)
    and the regularization on validation performance before retraining on
    all non-test cases.
    """

    n_rounds: int = 1000
    test_fraction: float | None = None
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    seed: int = 0
    metric: str = "auc"  # or "accuracy"

    def resolved_test_fraction(self) -> float:
        return 0.1 if self.test_fraction is None else self.test_fraction


@dataclass(frozen=True)
class HoldoutReport:
    per_round_scores: np.ndarray
    mean_score: float
    selected_ranks: list
    selected_lambdas: list[float]
    n_rounds: int
    seed: int
    metric: str
    transductive: bool = True


def _stratified_split(labels, fraction, rng):
    """Indices for a stratified held-out subset; remainders go to the larger
    class first."""
    idx_pos = np.flatnonzero(labels == 1)
    idx_neg = np.flatnonzero(labels == 0)
    exact = fraction * labels.size
    n_pos = int(np.floor(fraction * idx_pos.size))
    n_neg = int(np.floor(fraction * idx_neg.size))
    leftovers = int(round(exact)) - (n_pos + n_neg)
    order = sorted([(idx_pos.size, 1), (idx_neg.size, 0)], reverse=True)
    for _, cls in order:
        if leftovers <= 0:
            break
        if cls == 1 and n_pos < idx_pos.size - 1:
            n_pos += 1
            leftovers -= 1
        elif cls == 0 and n_neg < idx_neg.size - 1:
            n_neg += 1
            leftovers -= 1
    if n_pos < 1 or n_neg < 1:
        raise InsufficientClassSize("a class is too small for this partition")
    take = np.concatenate([rng.permutation(idx_pos)[:n_pos],
                           rng.permutation(idx_neg)[:n_neg]])
    mask = np.zeros(labels.size, dtype=bool)
    mask[take] = True
    return mask


def _score(clf, data, metric):
    return roc_auc(clf, data) if metric == "auc" else accuracy(clf, data)


def _center_train_apply(train, other):
    mu = train.features.mean(axis=1, keepdims=True)
    return (LabeledScores(train.features - mu, train.labels),
            LabeledScores(other.features - mu, other.labels))


def holdout_harness(features: LabeledScores | dict, cfg: HarnessConfig) -> HoldoutReport:
    """Repeated stratified holdouts with inner variant/penalty selection.

    ``features`` is either one labeled feature set, or a mapping from a
    variant key (typically the initial rank) to feature sets over the same
    cases. The decomposition feeding these features is computed once on all
    cases, so the protocol is transductive; see ``strict_holdout_features``
    for the inductive alternative.
    """
    variants = features if isinstance(features, dict) else {None: features}
    keys = list(variants.keys())
    labels = variants[keys[0]].labels
    for v in variants.values():
        if not np.array_equal(v.labels, labels):
            raise ValueError("all feature variants must share the labels")

    frac = cfg.resolved_test_fraction()
    scores, sel_ranks, sel_lams = [], [], []
    for rnd in range(cfg.n_rounds):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                           spawn_key=(rnd,)))
        test_mask = _stratified_split(labels, frac, rng)
        trainval_idx = np.flatnonzero(~test_mask)
        test_idx = np.flatnonzero(test_mask)

        inner_labels = labels[trainval_idx]
        val_mask_rel = _stratified_split(inner_labels, frac, rng)
        tr_idx = trainval_idx[~val_mask_rel]
        val_idx = trainval_idx[val_mask_rel]

        best_score, best_key, best_lam = -np.inf, keys[0], cfg.lambda_grid[0]
        for key in keys:
            data = variants[key]
            tr, val = _center_train_apply(data.subset(tr_idx), data.subset(val_idx))
            for lam in cfg.lambda_grid:
                clf = train_dwd(tr, regularization=lam)
                s = _score(clf, val, cfg.metric)
                if s > best_score:
                    best_score, best_key, best_lam = s, key, lam
        data = variants[best_key]
        tr_full, test = _center_train_apply(data.subset(trainval_idx),
                                            data.subset(test_idx))
        clf = train_dwd(tr_full, regularization=best_lam)
        scores.append(_score(clf, test, cfg.metric))
        sel_ranks.append(best_key)
        sel_lams.append(float(best_lam))

    arr = np.asarray(scores)
    return HoldoutReport(per_round_scores=arr, mean_score=float(arr.mean()),
                         selected_ranks=sel_ranks, selected_lambdas=sel_lams,
                         n_rounds=cfg.n_rounds, seed=cfg.seed, metric=cfg.metric)


def strict_holdout_features(blocks: list[list[LandmarkConfig]], labels,
                            train_idx, cfg: NeujiveConfig, block: int = 0):
    """Inductive variant, not the published protocol: decompose the training
    cases only and project held-out cases through the training feature-space
    basis of the joint component. Held-out shapes enter the training frame by
    rotating their pre-shapes to the training backward mean (skipped when
    alignment is off).

    Returns (train_features, test_features) for one block.
    """
    from .preshape import optimal_rotation

    labels = np.asarray(labels).astype(int)
    n = len(blocks[0])
    train_idx = np.asarray(train_idx, dtype=int)
    test_idx = np.setdiff1d(np.arange(n), train_idx)

    train_blocks = [[blk[i] for i in train_idx] for blk in blocks]
    res = neujive(train_blocks, cfg)
    br = res.blocks[block]

    # Feature-space basis of the training joint component.
    u, s, _ = np.linalg.svd(br.decomposition.joint, full_matrices=False)
    keep = int(np.sum(s > 1e-10 * max(s[0], 1e-300))) if s.size else 0
    basis = u[:, :keep]

    mean_shape = br.pns_model.backward_mean.reshape(br.n_landmarks, br.ambient_dim)
    rows = []
    for i in test_idx:
        pre = to_preshape(blocks[block][i])
        if cfg.align:
            target = type(pre)(
                coords=mean_shape.ravel(), n_landmarks=br.n_landmarks,
                ambient_dim=br.ambient_dim, centroid_size=1.0,
                removed_translation=np.zeros(br.ambient_dim),
                applied_rotation=np.eye(br.ambient_dim))
            pre = pre.rotated(optimal_rotation(pre, target))
        rows.append(pre.coords)
    z_test = pns_scores(br.pns_model, np.vstack(rows), n_levels=br.kept_levels)
    z_test = z_test - br.score_means[:, None]

    train_feats = basis.T @ br.decomposition.joint
    test_feats = basis.T @ z_test
    return (LabeledScores(train_feats, labels[train_idx]),
            LabeledScores(test_feats, labels[test_idx]))


# --- comparison feature sets ---

def baseline_features(blocks: list[list[LandmarkConfig]], labels, kind: str,
                      ranks: list[int] | None = None,
                      policy=None, seed: int = 0) -> list[LabeledScores]:
    """Feature sets the joint pipeline is compared against.

    ``concat_landmarks`` and ``concat_pns`` concatenate across blocks and
    return a single feature set; ``euclidean_ajive`` and ``spherical_ajive``
    return one per block (that block's joint component). Euclidean uses raw
    centered coordinates; spherical uses pre-shape coordinates treated as
    Euclidean.
    """
    from .ajive import decompose as ajive_decompose

    labels = np.asarray(labels).astype(int)
    if kind == "concat_landmarks":
        mats = [np.column_stack([to_preshape(c).coords for c in blk])
                for blk in blocks]
        return [LabeledScores(np.vstack(mats), labels)]
    if kind == "concat_pns":
        rows = []
        for blk in blocks:
            pre = np.vstack([to_preshape(c).coords for c in blk])
            model = pns_fit(pre)
            rows.append(pns_scores(model, pre))
        return [LabeledScores(np.vstack(rows), labels)]
    if kind in ("euclidean_ajive", "spherical_ajive"):
        mats = []
        for blk in blocks:
            if kind == "euclidean_ajive":
                m = np.column_stack([c.points.ravel() for c in blk])
            else:
                m = np.column_stack([to_preshape(c).coords for c in blk])
            mats.append(m - m.mean(axis=1, keepdims=True))
        if ranks is None:
            from .ajive import scree_gap_rank
            ranks = [scree_gap_rank(m) for m in mats]
        if policy is None:
            from .ajive import RandomDirection
            policy = RandomDirection()
        parts = ajive_decompose(mats, ranks=ranks, policy=policy, seed=seed)
        return [LabeledScores(p.joint, labels) for p in parts]
    raise ValueError(f"unknown baseline kind {kind!r}")


def fit_circle_2d(points) -> tuple[np.ndarray, float, float]:
    """Algebraic circle fit in the plane; returns (center, radius, rms).

    rms is the root-mean-square of (distance to center - radius), the
    geometric misfit used to compare joint structures against a circular
    pattern.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError("expects n x 2 points")
    x, y = pts[:, 0], pts[:, 1]
    a = np.column_stack([2 * x, 2 * y, np.ones(len(x))])
    b = x**2 + y**2
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy, c = sol
    radius = float(np.sqrt(max(c + cx**2 + cy**2, 0.0)))
    d = np.hypot(x - cx, y - cy)
    rms = float(np.sqrt(np.mean((d - radius) ** 2)))
    return np.array([cx, cy]), radius, rms


def principal_plane(matrix: np.ndarray) -> np.ndarray:
    """Top-2 principal-plane coordinates of a features-by-cases matrix,
    one row per case. Degenerate second directions come out as zeros."""
    m = np.asarray(matrix, dtype=float)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    coords = (vt[:2] * s[:2, None]).T if s.size >= 2 else \
        np.column_stack([vt[0] * s[0], np.zeros(m.shape[1])])
    return coords
