"""Command-line surface tying the pipeline together.

Subcommands: simulate, gpa, pns, decompose, diproperm, classify, reconstruct.
Exit codes: 0 success, 1 usage error, 2 data validation failure, 3 numerical
failure (the error class name goes to standard error). Report paths write
figures next to their delimited outputs unless --no-figures is given.

Heavy imports happen inside the handlers so --threads can cap the BLAS
thread pools before numpy is loaded.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_seed() -> int:
    return int(os.environ.get("NEUJIVE_SEED", "0"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neujive",
                     description="Joint variation analysis of multi-block "
                                 "landmark shape data")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap internal (BLAS) parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate synthetic datasets")
    p.add_argument("--scenario", choices=["circle", "twogroup"], required=True)
    p.add_argument("--n", type=int, default=50,
                   help="cases (circle) or base population size (twogroup)")
    p.add_argument("--sigma", type=float, default=None,
                   help="noise scale (default 0.1 circle, 0.06 twogroup)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("gpa", help="align one block with generalized Procrustes")
    p.add_argument("--input", required=True, help="landmark CSV")
    p.add_argument("--object", default=None, help="object label (default: first)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("pns", help="fit nested spheres to an aligned block")
    p.add_argument("--input", required=True, help="landmark CSV")
    p.add_argument("--object", default=None)
    p.add_argument("--no-align", action="store_true",
                   help="use raw pre-shapes without Procrustes alignment")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("decompose", help="full joint/individual/residual pipeline")
    p.add_argument("--input", required=True,
                   help="landmark CSV holding every block")
    p.add_argument("--config", default=None, help="run-configuration JSON")
    p.add_argument("--ranks", type=int, nargs="+", default=None,
                   help="initial rank per block (default: scree heuristic)")
    p.add_argument("--joint-rank", type=int, default=None,
                   help="fix the joint rank instead of the random-direction policy")
    p.add_argument("--no-align", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("diproperm", help="mean-difference permutation test")
    p.add_argument("--decomposition", required=True, help="decompose output JSON")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--block", default="all",
                   help="block index to test, or 'all' to stack joint components")
    p.add_argument("--n-perm", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("classify", help="repeated-holdout classification report")
    p.add_argument("--decomposition", default=None,
                   help="decompose output JSON (fixed-rank features)")
    p.add_argument("--input", default=None,
                   help="landmark CSV; with --rank-grid the decomposition is "
                        "re-run per candidate rank and the harness selects")
    p.add_argument("--rank-grid", type=int, nargs="+", default=None)
    p.add_argument("--no-align", action="store_true")
    p.add_argument("--labels", required=True)
    p.add_argument("--block", default="0")
    p.add_argument("--n-rounds", type=int, default=1000)
    p.add_argument("--test-fraction", type=float, default=None,
                   help="default: tenth-sized stratified test splits")
    p.add_argument("--metric", choices=["auc", "accuracy"], default="auc")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("reconstruct", help="group-difference map per landmark")
    p.add_argument("--decomposition", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--restore-scale", action="store_true",
                   help="report distances in source units")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(seed, extra=None) -> dict:
    from .io import config_digest
    doc = dict(extra or {})
    doc["seed"] = seed
    return {"seed": seed, "config_digest": config_digest(doc)}


# --- handlers ---

def _cmd_simulate(args) -> int:
    from . import io, plots
    from .simulate import (CircleSimConfig, make_twogroup_blocks,
                           simulate_circle_blocks, synthetic_skull_population)

    seed = args.seed if args.seed is not None else _default_seed()
    out = _outdir(args)
    if args.scenario == "circle":
        sigma = 0.1 if args.sigma is None else args.sigma
        cfg = CircleSimConfig(n=args.n, sigma=sigma, seed=seed)
        sim = simulate_circle_blocks(cfg)
        # Direction data: one point per case, stored in the landmark format.
        io.write_direction_blocks(
            {f"block{k + 1}": (
                [f"case{i:04d}" for i in range(cfg.n)], sim.blocks[k])
             for k in range(len(sim.blocks))},
            out / "dataset.csv")
        io.write_series_csv(sim.theta, out / "theta.csv", name="theta")
        io.dump_json({"scenario": "circle", "n": cfg.n, "sigma": sigma,
                      "a_k": list(cfg.a_k),
                      "provenance": _provenance(seed, {"scenario": "circle"})},
                     out / "simulate.json")
        if not args.no_figures:
            plots.plot_sphere_blocks(sim.blocks, sim.theta, out / "dataset.png")
    else:
        noise = 0.06 if args.sigma is None else args.sigma
        pop = synthetic_skull_population(n_cases=args.n, seed=seed, noise=noise)
        data = make_twogroup_blocks(pop)
        io.write_landmarks([data.block1, data.block2], out / "dataset.csv")
        io.write_labels(data.case_ids, data.labels, out / "labels.csv")
        io.dump_json({"scenario": "twogroup", "n_base": args.n, "noise": noise,
                      "modified_landmark": data.modified_landmark,
                      "displacement": data.displacement,
                      "rotation_angle": data.rotation_angle,
                      "provenance": _provenance(seed, {"scenario": "twogroup"})},
                     out / "simulate.json")
        if not args.no_figures:
            from .preshape import to_preshape
            pre = [to_preshape(c) for c in data.block1]
            plots.plot_aligned_shapes(pre, pre[0], out / "dataset.png")
    print(f"wrote {out}/dataset.csv")
    return EXIT_OK


def _cmd_gpa(args) -> int:
    from . import io, plots
    from .preshape import LandmarkConfig, gpa

    out = _outdir(args)
    blocks = io.read_landmarks(args.input)
    label = args.object or next(iter(blocks))
    if label not in blocks:
        raise io.FormatError(f"object {label!r} not in {sorted(blocks)}")
    result = gpa(blocks[label])
    aligned = [LandmarkConfig(points=p.matrix(), case_id=p.case_id,
                              object_label=label)
               for p in result.preshapes]
    io.write_landmarks([aligned], out / "aligned.csv")
    mean_cfg = LandmarkConfig(points=result.procrustes_mean.matrix(),
                              case_id="<mean>", object_label=label)
    io.write_landmarks([[mean_cfg]], out / "mean.csv")
    io.dump_json({
        "object": label,
        "iterations_used": result.iterations_used,
        "final_change": result.final_change,
        "converged": result.converged,
        "objective_history": result.objective_history,
        "mean_centroid_size": result.mean_centroid_size,
    }, out / "gpa.json")
    if not args.no_figures:
        plots.plot_aligned_shapes(result.preshapes, result.procrustes_mean,
                                  out / "aligned.png")
    print(f"aligned {len(aligned)} cases of {label!r} in "
          f"{result.iterations_used} iterations")
    return EXIT_OK


def _cmd_pns(args) -> int:
    import numpy as np

    from . import io, plots
    from .pns import model_to_dict, pns_fit, pns_scores
    from .preshape import gpa, to_preshape

    out = _outdir(args)
    blocks = io.read_landmarks(args.input)
    label = args.object or next(iter(blocks))
    if label not in blocks:
        raise io.FormatError(f"object {label!r} not in {sorted(blocks)}")
    if args.no_align:
        shapes = [to_preshape(c) for c in blocks[label]]
    else:
        shapes = gpa(blocks[label]).preshapes
    pts = np.vstack([p.coords for p in shapes])
    model = pns_fit(pts)
    scores = pns_scores(model, pts)
    io.dump_json({"object": label, "aligned": not args.no_align,
                  "model": model_to_dict(model)}, out / "pns_model.json")
    io.write_matrix_csv(scores, out / "scores.csv", row_prefix="level")
    if not args.no_figures:
        plots.plot_scores(scores, out / "scores.png", title=f"{label} scores")
    print(f"fitted {model.n_score_rows}-level hierarchy on {label!r}")
    return EXIT_OK


def _table_to_result(table, cfg):
    """Run the pipeline on a parsed landmark table; single-point cases are
    treated as unit directions and routed through the sphere entry point."""
    import numpy as np

    from .errors import CaseMismatch
    from .io import FormatError
    from .pipeline import neujive, neujive_on_spheres

    labels = list(table)
    if not labels:
        raise FormatError("no blocks in input")
    n_cases = len(table[labels[0]][0])
    if n_cases < 2:
        raise CaseMismatch(f"need at least 2 cases, got {n_cases}")
    if all(table[label][1].shape[1] == 1 for label in labels):
        case_lists = [table[label][0] for label in labels]
        if any(cl != case_lists[0] for cl in case_lists[1:]):
            raise CaseMismatch("blocks must list the same case ids in order")
        point_blocks = [np.asarray(table[label][1][:, 0, :]) for label in labels]
        norms = [np.linalg.norm(b, axis=1) for b in point_blocks]
        if any(np.any(np.abs(nn - 1) > 1e-6) for nn in norms):
            raise FormatError("single-point cases must be unit directions")
        return neujive_on_spheres(point_blocks, cfg,
                                  case_ids=case_lists[0], block_ids=labels)
    from .io import table_to_configs
    blocks = [table_to_configs(table, label) for label in labels]
    return neujive(blocks, cfg)


def _cmd_decompose(args) -> int:
    from . import io, plots
    from .ajive import FixedRank, RandomDirection, policy_from_dict
    from .pipeline import NeujiveConfig

    out = _outdir(args)
    seed = args.seed if args.seed is not None else _default_seed()
    policy = RandomDirection()
    ranks = tuple(args.ranks) if args.ranks else None
    align = not args.no_align
    if args.config:
        doc = io.read_run_config(args.config)
        if "joint_rank_policy" in doc:
            policy = policy_from_dict(doc["joint_rank_policy"])
        if doc.get("initial_ranks") and ranks is None:
            ranks = tuple(doc["initial_ranks"])
        if "align" in doc:
            align = bool(doc["align"])
        if "rng_seed" in doc and args.seed is None:
            seed = int(doc["rng_seed"])
    if args.joint_rank is not None:
        policy = FixedRank(args.joint_rank)
    cfg = NeujiveConfig(initial_ranks=ranks, joint_rank_policy=policy,
                        rng_seed=seed, align=align)

    result = _table_to_result(io.read_landmark_table(args.input), cfg)

    doc = io.result_to_doc(result)
    doc["provenance"] = _provenance(seed, io.config_to_dict(cfg))
    io.dump_json(doc, out / "decomposition.json")
    for k, br in enumerate(result.blocks):
        io.write_matrix_csv(br.decomposition.joint,
                            out / f"joint_scores_block{k}.csv")
        io.write_matrix_csv(br.decomposition.individual,
                            out / f"individual_scores_block{k}.csv")
        io.write_matrix_csv(br.decomposition.residual,
                            out / f"residual_scores_block{k}.csv")
    if not args.no_figures:
        for k, br in enumerate(result.blocks):
            plots.plot_component_heatmaps(br.decomposition,
                                          out / f"components_block{k}.png",
                                          block_id=br.block_id)
            from .inference import principal_plane
            plots.plot_scores(principal_plane(br.decomposition.joint).T,
                              out / f"joint_plane_block{k}.png",
                              title=f"{br.block_id} joint structure")
    print(f"joint rank {result.joint_rank} across {len(result.blocks)} blocks")
    return EXIT_OK


def _load_decomposition_features(dec_path, labels_path, block):
    import numpy as np

    from . import io
    from .inference import LabeledScores

    result = io.result_from_doc(io.load_json(dec_path))
    label_map = io.read_labels(labels_path)
    missing = [cid for cid in result.case_ids if cid not in label_map]
    if missing:
        raise io.FormatError(f"labels missing for cases {missing[:5]}")
    y = np.array([label_map[cid] for cid in result.case_ids], dtype=int)
    if block == "all":
        feats = np.vstack([br.decomposition.joint for br in result.blocks])
    else:
        feats = result.blocks[int(block)].decomposition.joint
    return result, LabeledScores(features=feats, labels=y)


def _cmd_diproperm(args) -> int:
    from . import io, plots
    from .inference import diproperm

    out = _outdir(args)
    seed = args.seed if args.seed is not None else _default_seed()
    result, data = _load_decomposition_features(args.decomposition, args.labels,
                                                args.block)
    res = diproperm(data, n_perm=args.n_perm, seed=seed)
    io.dump_json(io.diproperm_to_doc(res, provenance=_provenance(
        seed, {"block": args.block, "n_perm": args.n_perm,
               "decomposition": result.input_digest})),
        out / "diproperm.json")
    io.write_series_csv(res.permutation_mds, out / "permutation_stats.csv",
                        name="mean_difference")
    if not args.no_figures:
        plots.plot_permutation_density(res.permutation_mds, res.observed_md,
                                       out / "permutation_density.png")
    print(f"p={res.p_value} z={res.z_score:.3f}")
    return EXIT_OK


def _cmd_classify(args) -> int:
    import numpy as np

    from . import io, plots
    from .inference import HarnessConfig, LabeledScores, holdout_harness
    from .pipeline import NeujiveConfig

    out = _outdir(args)
    seed = args.seed if args.seed is not None else _default_seed()
    if args.rank_grid:
        if not args.input:
            raise io.FormatError("--rank-grid needs --input with the landmarks")
        table = io.read_landmark_table(args.input)
        label_map = io.read_labels(args.labels)
        variants = {}
        digest = None
        for rank in args.rank_grid:
            cfg_r = NeujiveConfig(initial_ranks=(rank,) * len(table),
                                  rng_seed=seed, align=not args.no_align)
            res_r = _table_to_result(table, cfg_r)
            digest = res_r.input_digest
            y = np.array([label_map[cid] for cid in res_r.case_ids], dtype=int)
            if args.block == "all":
                feats = np.vstack([br.decomposition.joint for br in res_r.blocks])
            else:
                feats = res_r.blocks[int(args.block)].decomposition.joint
            variants[rank] = LabeledScores(features=feats, labels=y)
        data = variants
    else:
        if not args.decomposition:
            raise io.FormatError("give either --decomposition or "
                                 "--input with --rank-grid")
        result, data = _load_decomposition_features(args.decomposition,
                                                    args.labels, args.block)
        digest = result.input_digest
    cfg = HarnessConfig(n_rounds=args.n_rounds, test_fraction=args.test_fraction,
                        seed=seed, metric=args.metric)
    report = holdout_harness(data, cfg)
    io.dump_json(io.holdout_report_to_doc(report, provenance=_provenance(
        seed, {"block": args.block, "n_rounds": args.n_rounds,
               "metric": args.metric, "decomposition": digest})),
        out / "classify.json")
    io.write_series_csv(report.per_round_scores, out / "round_scores.csv",
                        name=args.metric)
    if not args.no_figures:
        plots.plot_score_histogram(report.per_round_scores,
                                   out / "round_scores.png",
                                   xlabel=args.metric)
    print(f"mean {args.metric} {report.mean_score:.4f} over "
          f"{report.n_rounds} rounds")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    import numpy as np

    from . import io, plots
    from .pipeline import group_difference_map, pullback_scores

    out = _outdir(args)
    result = io.result_from_doc(io.load_json(args.decomposition))
    label_map = io.read_labels(args.labels)
    missing = [cid for cid in result.case_ids if cid not in label_map]
    if missing:
        raise io.FormatError(f"labels missing for cases {missing[:5]}")
    y = np.array([label_map[cid] for cid in result.case_ids], dtype=int)
    dists = group_difference_map(result, y, restore_scale=args.restore_scale)

    rows = []
    for k, (br, d) in enumerate(zip(result.blocks, dists)):
        for i, v in enumerate(d):
            rows.append((br.block_id, i, v))
    with open(out / "landmark_distances.csv", "w", newline="",
              encoding="utf-8") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["object_label", "point_index", "distance"])
        for r in rows:
            writer.writerow([r[0], r[1], repr(float(r[2]))])
    io.dump_json({
        "restore_scale": bool(args.restore_scale),
        "blocks": [{"block_id": br.block_id,
                    "max_distance_landmark": int(np.argmax(d)),
                    "distances": d.tolist()}
                   for br, d in zip(result.blocks, dists)],
        "provenance": _provenance(0, {"decomposition": result.input_digest}),
    }, out / "reconstruct.json")
    if not args.no_figures:
        for k, (br, d) in enumerate(zip(result.blocks, dists)):
            joint = br.decomposition.joint
            mean_col = joint.mean(axis=1, keepdims=True)
            shape = pullback_scores(result, k, mean_col,
                                    restore_scale=args.restore_scale)[0]
            plots.plot_distance_map(shape.points, d,
                                    out / f"distance_map_block{k}.png",
                                    block_id=br.block_id)
    print("wrote landmark_distances.csv")
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "gpa": _cmd_gpa,
    "pns": _cmd_pns,
    "decompose": _cmd_decompose,
    "diproperm": _cmd_diproperm,
    "classify": _cmd_classify,
    "reconstruct": _cmd_reconstruct,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(max(1, args.threads))

    import numpy as np

    from . import errors
    from .io import FormatError

    validation_errors = (
        FormatError, errors.DegenerateShape, errors.CaseMismatch,
        errors.DimensionMismatch, errors.EmptyGroup, errors.IndexOutOfRange,
        errors.SingleClassTest, errors.InsufficientClassSize,
        errors.RankTooLarge, errors.NotCentered, OSError,
    )
    try:
        return _HANDLERS[args.command](args)
    except validation_errors as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (errors.NeujiveError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, IndexError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
