"""File formats: landmark CSV, label CSV, run configuration, result JSON.

Landmark files are long-format CSV with the header
``case_id,object_label,point_index,x,y[,z]``, one row per landmark, sorted
by (case_id, object_label, point_index) on write. Every (case, object) pair
must carry the identical point-index set, which is the correspondence
requirement across cases. Structured results serialize to JSON with matrices
stored row-major alongside their shape; floats use shortest round-trip
representation so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .ajive import BlockDecomposition, JointBasis
from .errors import NeujiveError
from .inference import DiProPermResult, HoldoutReport
from .pipeline import (
    BlockResult,
    NeujiveResult,
    config_from_dict,
    config_to_dict,
)
from .pns import model_from_dict, model_to_dict
from .preshape import LandmarkConfig

LANDMARK_HEADER = ["case_id", "object_label", "point_index", "x", "y", "z"]


class FormatError(NeujiveError):
    """Malformed or inconsistent input file."""


def dump_json(doc: dict, path: str | Path) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- matrices ---

def matrix_to_doc(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=float)
    return {"shape": list(m.shape), "data": m.ravel().tolist()}


def matrix_from_doc(doc: dict) -> np.ndarray:
    return np.asarray(doc["data"], dtype=float).reshape(doc["shape"])


# --- landmark CSV ---

def write_landmarks(blocks: list[list[LandmarkConfig]], path: str | Path) -> None:
    """Write one or more blocks into a single long-format CSV."""
    rows = []
    for block in blocks:
        for cfg in block:
            for idx, pt in enumerate(cfg.points):
                rows.append((cfg.case_id, cfg.object_label, idx, *pt))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    dim = len(rows[0]) - 3 if rows else 2
    header = LANDMARK_HEADER[: 3 + dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            writer.writerow([r[0], r[1], r[2]] + [repr(float(v)) for v in r[3:]])


def write_direction_blocks(blocks: dict[str, tuple[list[str], np.ndarray]],
                           path: str | Path) -> None:
    """Write sphere-direction blocks (one point per case) in the landmark
    CSV format, point index 0 throughout."""
    rows = []
    for label, (case_ids, pts) in blocks.items():
        for cid, p in zip(case_ids, np.atleast_2d(pts)):
            rows.append((cid, label, 0, *p))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    dim = len(rows[0]) - 3
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LANDMARK_HEADER[: 3 + dim])
        for r in rows:
            writer.writerow([r[0], r[1], r[2]] + [repr(float(v)) for v in r[3:]])


def read_landmark_table(path: str | Path) -> dict[str, tuple[list[str], np.ndarray]]:
    """Read a landmark CSV into per-label (case_ids, n x M x dim) tables.

    Case order within each block follows first appearance in the file, which
    matches the sorted order produced by :func:`write_landmarks`. Every
    (case, object) pair must carry the identical point-index set.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header[:3] != LANDMARK_HEADER[:3] or len(header) not in (5, 6):
            raise FormatError(f"{path}: unexpected header {header!r}")
        dim = len(header) - 3
        raw: dict[tuple[str, str], dict[int, np.ndarray]] = {}
        case_order: dict[str, list[str]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + dim:
                raise FormatError(f"{path}:{lineno}: expected {3 + dim} fields")
            case_id, label = row[0], row[1]
            try:
                idx = int(row[2])
                coords = np.array([float(v) for v in row[3:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            key = (label, case_id)
            points = raw.setdefault(key, {})
            if idx in points:
                raise FormatError(f"{path}:{lineno}: duplicate point {idx} "
                                  f"for {case_id}/{label}")
            points[idx] = coords
            case_order.setdefault(label, [])
            if case_id not in case_order[label]:
                case_order[label].append(case_id)

    if not raw:
        raise FormatError(f"{path}: no landmark rows")
    table: dict[str, tuple[list[str], np.ndarray]] = {}
    for label, cases in case_order.items():
        expected: frozenset | None = None
        mats = []
        for case_id in cases:
            points = raw[(label, case_id)]
            idx_set = frozenset(points)
            if expected is None:
                expected = idx_set
            elif idx_set != expected:
                raise FormatError(
                    f"{path}: case {case_id}/{label} has point indices "
                    f"{sorted(idx_set)}, expected {sorted(expected)}")
            mats.append(np.vstack([points[i] for i in sorted(points)]))
        table[label] = (cases, np.stack(mats))
    return table


def table_to_configs(table: dict, label: str) -> list[LandmarkConfig]:
    case_ids, mats = table[label]
    return [LandmarkConfig(points=m, case_id=cid, object_label=label)
            for cid, m in zip(case_ids, mats)]


def read_landmarks(path: str | Path) -> dict[str, list[LandmarkConfig]]:
    """Read a landmark CSV into blocks of configurations keyed by label."""
    table = read_landmark_table(path)
    return {label: table_to_configs(table, label) for label in table}


def write_labels(case_ids: list[str], labels, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "label"])
        for cid, lab in zip(case_ids, labels):
            writer.writerow([cid, int(lab)])


def read_labels(path: str | Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["case_id", "label"]:
            raise FormatError(f"{path}: expected header case_id,label")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1] not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: labels must be 0 or 1")
            out[row[0]] = int(row[1])
    if not out:
        raise FormatError(f"{path}: no label rows")
    return out


def write_matrix_csv(matrix: np.ndarray, path: str | Path,
                     row_prefix: str = "row") -> None:
    """Plot-feed CSV: one line per matrix row, cases as columns."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + [f"case{j}" for j in range(m.shape[1])])
        for i, row in enumerate(m):
            writer.writerow([f"{row_prefix}{i}"] + [repr(float(v)) for v in row])


def write_series_csv(values, path: str | Path, name: str = "value") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", name])
        for i, v in enumerate(np.asarray(values, dtype=float).ravel()):
            writer.writerow([i, repr(float(v))])


# --- run configuration ---

RUN_CONFIG_KEYS = {
    "initial_ranks", "joint_rank_policy", "pns_levels", "rng_seed", "align",
    "restore_scale", "n_perm", "n_rounds", "test_fraction", "lambda_grid",
    "metric",
}


def read_run_config(path: str | Path) -> dict:
    """Load and strictly validate a run-configuration JSON document."""
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    unknown = set(doc) - RUN_CONFIG_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown config keys {sorted(unknown)}")
    if "joint_rank_policy" in doc and not isinstance(doc["joint_rank_policy"], dict):
        raise FormatError(f"{path}: joint_rank_policy must be an object")
    for key in ("rng_seed", "n_perm", "n_rounds"):
        if key in doc and not isinstance(doc[key], int):
            raise FormatError(f"{path}: {key} must be an integer")
    return doc


def config_digest(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# --- structured results ---

def _basis_to_doc(basis: JointBasis) -> dict:
    return {
        "j_hat": matrix_to_doc(basis.j_hat),
        "squared_singular_values": basis.squared_singular_values.tolist(),
        "threshold_used": basis.threshold_used,
    }


def _basis_from_doc(doc: dict) -> JointBasis:
    return JointBasis(
        j_hat=matrix_from_doc(doc["j_hat"]),
        squared_singular_values=np.asarray(doc["squared_singular_values"]),
        threshold_used=doc["threshold_used"],
    )


def _decomposition_to_doc(dec: BlockDecomposition) -> dict:
    return {
        "joint": matrix_to_doc(dec.joint),
        "individual": matrix_to_doc(dec.individual),
        "residual": matrix_to_doc(dec.residual),
        "block_id": dec.block_id,
    }


def result_to_doc(result: NeujiveResult) -> dict:
    return {
        "config": config_to_dict(result.config),
        "case_ids": result.case_ids,
        "input_digest": result.input_digest,
        "joint_rank": result.joint_rank,
        "joint_basis": _basis_to_doc(result.joint_basis),
        "blocks": [
            {
                "block_id": br.block_id,
                "pns_model": model_to_dict(br.pns_model),
                "score_means": br.score_means.tolist(),
                "kept_levels": br.kept_levels,
                "n_landmarks": br.n_landmarks,
                "ambient_dim": br.ambient_dim,
                "mean_centroid_size": br.mean_centroid_size,
                "decomposition": _decomposition_to_doc(br.decomposition),
            }
            for br in result.blocks
        ],
    }


def result_from_doc(doc: dict) -> NeujiveResult:
    basis = _basis_from_doc(doc["joint_basis"])
    blocks = []
    for bd in doc["blocks"]:
        dec = BlockDecomposition(
            joint=matrix_from_doc(bd["decomposition"]["joint"]),
            individual=matrix_from_doc(bd["decomposition"]["individual"]),
            residual=matrix_from_doc(bd["decomposition"]["residual"]),
            basis=basis,
            block_id=bd["decomposition"]["block_id"],
        )
        blocks.append(BlockResult(
            block_id=bd["block_id"],
            pns_model=model_from_dict(bd["pns_model"]),
            score_means=np.asarray(bd["score_means"], dtype=float),
            decomposition=dec,
            kept_levels=int(bd["kept_levels"]),
            n_landmarks=bd["n_landmarks"],
            ambient_dim=bd["ambient_dim"],
            mean_centroid_size=bd["mean_centroid_size"],
        ))
    return NeujiveResult(
        blocks=blocks,
        joint_basis=basis,
        case_ids=list(doc["case_ids"]),
        config=config_from_dict(doc["config"]),
        input_digest=doc["input_digest"],
    )


def diproperm_to_doc(res: DiProPermResult, provenance: dict | None = None) -> dict:
    doc = {
        "observed_md": res.observed_md,
        "p_value": res.p_value,
        "z_score": res.z_score,
        "n_perm": res.n_perm,
        "seed": res.seed,
    }
    if provenance:
        doc["provenance"] = provenance
    return doc


def holdout_report_to_doc(report: HoldoutReport,
                          provenance: dict | None = None) -> dict:
    doc = {
        "metric": report.metric,
        "mean_score": report.mean_score,
        "n_rounds": report.n_rounds,
        "seed": report.seed,
        "transductive": report.transductive,
        "per_round_scores": report.per_round_scores.tolist(),
        "selected_ranks": [r if r is None else int(r)
                           for r in report.selected_ranks],
        "selected_lambdas": report.selected_lambdas,
    }
    if provenance:
        doc["provenance"] = provenance
    return doc
