import json

import numpy as np
import pytest

from neujive import io
from neujive.cli import main
from neujive.preshape import LandmarkConfig
from neujive.simulate import make_twogroup_blocks, synthetic_skull_population


@pytest.fixture()
def twogroup_files(tmp_path):
    pop = synthetic_skull_population(n_cases=15, seed=2)
    data = make_twogroup_blocks(pop)
    dataset = tmp_path / "dataset.csv"
    labels = tmp_path / "labels.csv"
    io.write_landmarks([data.block1, data.block2], dataset)
    io.write_labels(data.case_ids, data.labels, labels)
    return dataset, labels


class TestCsvRoundTrip:
    def test_landmark_round_trip_identity(self, tmp_path):
        pop = synthetic_skull_population(n_cases=6, seed=1)
        path = tmp_path / "pop.csv"
        io.write_landmarks([pop], path)
        back = io.read_landmarks(path)["obj1"]
        assert [c.case_id for c in back] == [c.case_id for c in pop]
        for a, b in zip(pop, back):
            np.testing.assert_array_equal(a.points, b.points)

    def test_direction_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(9, 3))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        ids = [f"case{i:04d}" for i in range(9)]
        path = tmp_path / "dirs.csv"
        io.write_direction_blocks({"blk": (ids, pts)}, path)
        table = io.read_landmark_table(path)
        got_ids, got = table["blk"]
        assert got_ids == ids
        np.testing.assert_array_equal(got[:, 0, :], pts)

    def test_correspondence_violation_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "case_id,object_label,point_index,x,y\n"
            "a,obj,0,0.0,0.0\na,obj,1,1.0,0.0\na,obj,2,0.0,1.0\n"
            "b,obj,0,0.0,0.0\nb,obj,1,1.0,0.0\nb,obj,5,0.0,1.0\n")
        with pytest.raises(io.FormatError):
            io.read_landmark_table(path)

    def test_labels_round_trip(self, tmp_path):
        path = tmp_path / "labels.csv"
        io.write_labels(["a", "b", "c"], [0, 1, 1], path)
        assert io.read_labels(path) == {"a": 0, "b": 1, "c": 1}


class TestRunConfig:
    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"rng_seed": 1, "bogus": 2}')
        with pytest.raises(io.FormatError):
            io.read_run_config(path)

    def test_valid_config_accepted(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"rng_seed": 1, "initial_ranks": [2, 2], '
                        '"joint_rank_policy": {"policy": "fixed", "rank": 1}}')
        doc = io.read_run_config(path)
        assert doc["rng_seed"] == 1


class TestEndToEnd:
    def test_circle_simulate_then_decompose(self, tmp_path):
        sim_dir = tmp_path / "sim"
        dec_dir = tmp_path / "dec"
        assert main(["simulate", "--scenario", "circle", "--n", "50",
                     "--sigma", "0.1", "--seed", "7",
                     "--out", str(sim_dir)]) == 0
        assert (sim_dir / "dataset.csv").exists()
        assert (sim_dir / "dataset.png").exists()
        assert main(["decompose", "--input", str(sim_dir / "dataset.csv"),
                     "--ranks", "2", "2", "--seed", "7",
                     "--out", str(dec_dir)]) == 0
        doc = io.load_json(dec_dir / "decomposition.json")
        # The shared latent angle must be detected as joint structure.
        assert doc["joint_rank"] >= 1
        assert (dec_dir / "joint_scores_block0.csv").exists()
        assert (dec_dir / "components_block0.png").exists()

    def test_twogroup_full_chain(self, twogroup_files, tmp_path):
        dataset, labels = twogroup_files
        dec = tmp_path / "dec"
        assert main(["decompose", "--input", str(dataset), "--ranks", "6", "6",
                     "--joint-rank", "2", "--no-align", "--seed", "1",
                     "--out", str(dec)]) == 0
        dip = tmp_path / "dip"
        assert main(["diproperm", "--decomposition",
                     str(dec / "decomposition.json"), "--labels", str(labels),
                     "--n-perm", "200", "--seed", "1", "--out", str(dip)]) == 0
        doc = io.load_json(dip / "diproperm.json")
        assert 0.0 <= doc["p_value"] <= 1.0
        assert (dip / "permutation_stats.csv").exists()
        assert (dip / "permutation_density.png").exists()

        cls = tmp_path / "cls"
        assert main(["classify", "--decomposition",
                     str(dec / "decomposition.json"), "--labels", str(labels),
                     "--block", "0", "--n-rounds", "5", "--test-fraction",
                     "0.2", "--metric", "accuracy", "--seed", "1",
                     "--out", str(cls)]) == 0
        assert (cls / "round_scores.csv").exists()
        assert (cls / "round_scores.png").exists()

        rec = tmp_path / "rec"
        assert main(["reconstruct", "--decomposition",
                     str(dec / "decomposition.json"), "--labels", str(labels),
                     "--out", str(rec)]) == 0
        assert (rec / "landmark_distances.csv").exists()
        assert (rec / "distance_map_block0.png").exists()

    def test_classify_rank_grid(self, twogroup_files, tmp_path):
        dataset, labels = twogroup_files
        out = tmp_path / "rg"
        assert main(["classify", "--input", str(dataset), "--rank-grid", "2",
                     "4", "--no-align", "--labels", str(labels), "--block",
                     "0", "--n-rounds", "5", "--test-fraction", "0.2",
                     "--metric", "accuracy", "--seed", "3", "--no-figures",
                     "--out", str(out)]) == 0
        doc = io.load_json(out / "classify.json")
        assert set(doc["selected_ranks"]) <= {2, 4}
        assert len(doc["per_round_scores"]) == 5

    def test_decompose_with_config_file(self, twogroup_files, tmp_path):
        dataset, _ = twogroup_files
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text('{"rng_seed": 4, "initial_ranks": [3, 3], '
                            '"joint_rank_policy": {"policy": "fixed", "rank": 2}, '
                            '"align": false}\n')
        out = tmp_path / "out"
        assert main(["decompose", "--input", str(dataset), "--config",
                     str(cfg_path), "--no-figures", "--out", str(out)]) == 0
        doc = io.load_json(out / "decomposition.json")
        assert doc["joint_rank"] == 2
        assert doc["config"]["rng_seed"] == 4
        assert doc["config"]["align"] is False

    def test_gpa_and_pns_commands(self, twogroup_files, tmp_path):
        dataset, _ = twogroup_files
        gpa_dir = tmp_path / "gpa"
        assert main(["gpa", "--input", str(dataset), "--object", "obj1",
                     "--out", str(gpa_dir)]) == 0
        doc = io.load_json(gpa_dir / "gpa.json")
        hist = doc["objective_history"]
        assert all(a >= b - 1e-12 for a, b in zip(hist, hist[1:]))
        assert (gpa_dir / "aligned.csv").exists()

        pns_dir = tmp_path / "pns"
        assert main(["pns", "--input", str(gpa_dir / "aligned.csv"),
                     "--object", "obj1", "--out", str(pns_dir)]) == 0
        model_doc = io.load_json(pns_dir / "pns_model.json")
        assert model_doc["model"]["sphere_dim"] == 16
        assert (pns_dir / "scores.csv").exists()

    def test_planted_shift_gives_zero_p(self, tmp_path):
        # Separated groups through the whole pipeline: both blocks carry the
        # same planted group shift, with independent shape noise otherwise.
        def planted_block(seed, label):
            base = synthetic_skull_population(n_cases=12, seed=seed,
                                              orientation_jitter=0.05)
            out = [LandmarkConfig(points=c.points, case_id=f"c{i:03d}",
                                  object_label=label)
                   for i, c in enumerate(base)]
            for i, c in enumerate(base):
                pts = c.points.copy()
                pts[0] += 1.5
                out.append(LandmarkConfig(points=pts, case_id=f"c{i + 12:03d}",
                                          object_label=label))
            return out

        block = planted_block(11, "obj1")
        block2 = planted_block(12, "obj2")
        dataset = tmp_path / "planted.csv"
        labels_path = tmp_path / "labels.csv"
        io.write_landmarks([block, block2], dataset)
        io.write_labels([c.case_id for c in block],
                        [0] * 12 + [1] * 12, labels_path)
        dec = tmp_path / "dec"
        assert main(["decompose", "--input", str(dataset), "--ranks", "4", "4",
                     "--joint-rank", "2", "--no-align", "--seed", "2",
                     "--out", str(dec)]) == 0
        dip = tmp_path / "dip"
        assert main(["diproperm", "--decomposition",
                     str(dec / "decomposition.json"), "--labels",
                     str(labels_path), "--n-perm", "1000", "--seed", "2",
                     "--out", str(dip)]) == 0
        doc = io.load_json(dip / "diproperm.json")
        assert doc["p_value"] == 0.0


class TestExitCodes:
    def test_usage_error_is_one(self):
        assert main(["simulate", "--scenario", "bogus", "--out", "/tmp/x"]) == 1

    def test_missing_file_is_two(self, tmp_path):
        assert main(["decompose", "--input", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "out")]) == 2

    def test_single_case_is_two(self, tmp_path):
        pop = synthetic_skull_population(n_cases=3, seed=4)[:1]
        path = tmp_path / "one.csv"
        io.write_landmarks([pop], path)
        assert main(["decompose", "--input", str(path),
                     "--out", str(tmp_path / "out")]) == 2

    def test_reconstruct_on_direction_data_is_two(self, tmp_path):
        sim = tmp_path / "sim"
        dec = tmp_path / "dec"
        assert main(["simulate", "--scenario", "circle", "--n", "20",
                     "--seed", "1", "--no-figures", "--out", str(sim)]) == 0
        assert main(["decompose", "--input", str(sim / "dataset.csv"),
                     "--ranks", "2", "2", "--seed", "1", "--no-figures",
                     "--out", str(dec)]) == 0
        labels = tmp_path / "labels.csv"
        io.write_labels([f"case{i:04d}" for i in range(20)],
                        [0, 1] * 10, labels)
        # Direction blocks have no landmark structure to reconstruct.
        assert main(["reconstruct", "--decomposition",
                     str(dec / "decomposition.json"), "--labels", str(labels),
                     "--out", str(tmp_path / "rec")]) == 2

    def test_mismatched_blocks_is_two(self, tmp_path):
        pop = synthetic_skull_population(n_cases=4, seed=5)
        b2 = [LandmarkConfig(points=c.points, case_id=f"other_{c.case_id}",
                             object_label="obj2") for c in pop]
        path = tmp_path / "mismatch.csv"
        io.write_landmarks([pop, b2], path)
        assert main(["decompose", "--input", str(path), "--no-align",
                     "--out", str(tmp_path / "out")]) == 2


class TestDeterminism:
    def test_decompose_outputs_byte_identical(self, twogroup_files, tmp_path):
        dataset, _ = twogroup_files
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["decompose", "--input", str(dataset), "--ranks",
                         "5", "5", "--no-align", "--seed", "9",
                         "--no-figures", "--out", str(out)]) == 0
            outs.append((out / "decomposition.json").read_bytes())
        assert outs[0] == outs[1]

    def test_diproperm_outputs_byte_identical(self, twogroup_files, tmp_path):
        dataset, labels = twogroup_files
        dec = tmp_path / "dec"
        main(["decompose", "--input", str(dataset), "--ranks", "5", "5",
              "--no-align", "--seed", "9", "--no-figures", "--out", str(dec)])
        payloads = []
        for name in ("p", "q"):
            out = tmp_path / name
            assert main(["diproperm", "--decomposition",
                         str(dec / "decomposition.json"), "--labels",
                         str(labels), "--n-perm", "150", "--seed", "5",
                         "--no-figures", "--out", str(out)]) == 0
            payloads.append((out / "diproperm.json").read_bytes()
                            + (out / "permutation_stats.csv").read_bytes())
        assert payloads[0] == payloads[1]

    def test_env_seed_fallback(self, twogroup_files, tmp_path, monkeypatch):
        dataset, _ = twogroup_files
        monkeypatch.setenv("NEUJIVE_SEED", "31")
        out1, out2 = tmp_path / "e1", tmp_path / "e2"
        for out in (out1, out2):
            assert main(["decompose", "--input", str(dataset), "--ranks",
                         "4", "4", "--no-align", "--no-figures",
                         "--out", str(out)]) == 0
        a = io.load_json(out1 / "decomposition.json")
        assert a["provenance"]["seed"] == 31
