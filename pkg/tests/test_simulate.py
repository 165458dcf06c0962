import numpy as np
import pytest

from neujive.errors import IndexOutOfRange
from neujive.pns import fit_subsphere
from neujive.preshape import to_preshape
from neujive.simulate import (
    CircleSimConfig,
    circle_distance_to_truth,
    make_twogroup_blocks,
    simulate_circle_blocks,
    simulate_single_circle,
    synthetic_skull_population,
)


class TestCircleBlocks:
    def test_noiseless_points_on_exact_circles(self):
        cfg = CircleSimConfig(n=40, a_k=(1.0, 0.6), sigma=0.0, seed=1)
        sim = simulate_circle_blocks(cfg)
        for k, blk in enumerate(sim.blocks):
            np.testing.assert_allclose(np.linalg.norm(blk, axis=1), 1.0, atol=1e-12)
            d = circle_distance_to_truth(blk, cfg, block=k)
            assert np.max(d) < 1e-10
            sub = fit_subsphere(blk)
            assert abs(sub.radius - abs(cfg.a_k[k])) < 1e-8

    def test_theta_support(self):
        cfg = CircleSimConfig(n=200, sigma=0.1, seed=2)
        sim = simulate_circle_blocks(cfg)
        assert np.min(sim.theta) >= 0.0
        assert np.max(sim.theta) <= 1.5 * np.pi
        assert np.max(sim.theta) - np.min(sim.theta) <= 1.5 * np.pi

    def test_shared_latent_at_zero_noise(self):
        # Undoing each block's rotation must give matching angular positions.
        cfg = CircleSimConfig(n=30, a_k=(0.9, 0.5), sigma=0.0, seed=3)
        sim = simulate_circle_blocks(cfg)
        angles = []
        for k, blk in enumerate(sim.blocks):
            from neujive.sphere import rotate_a_to_b
            pole = cfg.poles()[k]
            rot = rotate_a_to_b(pole, np.array([0.0, 0.0, 1.0]),
                                plane=np.eye(3)[0])
            local = blk @ rot.T
            angles.append(np.arctan2(local[:, 1], local[:, 0]))
        np.testing.assert_allclose(np.unwrap(angles[0]), np.unwrap(angles[1]),
                                   atol=1e-9)
        np.testing.assert_allclose(np.mod(angles[0], 2 * np.pi),
                                   np.mod(sim.theta, 2 * np.pi), atol=1e-9)

    def test_seed_determinism(self):
        cfg = CircleSimConfig(n=25, sigma=0.2, seed=7)
        a = simulate_circle_blocks(cfg)
        b = simulate_circle_blocks(cfg)
        for x, y in zip(a.blocks, b.blocks):
            assert np.array_equal(x, y)
        assert np.array_equal(a.theta, b.theta)

    def test_noise_scaling_monotone(self):
        rms = []
        for sigma in (0.05, 0.1, 0.2):
            vals = []
            for seed in range(3):
                cfg = CircleSimConfig(n=100, a_k=(1.0, 0.6), sigma=sigma,
                                      seed=seed)
                sim = simulate_circle_blocks(cfg)
                d = circle_distance_to_truth(sim.blocks[0], cfg, block=0)
                vals.append(np.sqrt(np.mean(d**2)))
            rms.append(np.mean(vals))
        assert rms[0] < rms[1] < rms[2]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CircleSimConfig(n=2)
        with pytest.raises(ValueError):
            CircleSimConfig(a_k=(1.0, 0.0))
        with pytest.raises(ValueError):
            CircleSimConfig(sigma=-0.1)

    def test_single_circle_variant(self):
        sim = simulate_single_circle(n=50, sigma=0.0, seed=4)
        assert len(sim.blocks) == 1
        d = circle_distance_to_truth(sim.blocks[0], sim.config, block=0)
        assert np.max(d) < 1e-10

    def test_large_noise_still_fits(self):
        sim = simulate_single_circle(n=60, sigma=1.0, seed=5)
        sub = fit_subsphere(sim.blocks[0])
        assert np.isfinite(sub.radius) and 0 < sub.radius <= np.pi / 2
        assert np.all(np.isfinite(sub.axis))


class TestTwoGroupBlocks:
    def test_zero_modification_matches_block1(self):
        pop = synthetic_skull_population(n_cases=8, seed=6)
        data = make_twogroup_blocks(pop, displacement=0.0, rotation_angle=0.0)
        for c1, c2 in zip(data.block1, data.block2):
            np.testing.assert_allclose(c1.points, c2.points, atol=1e-9)

    def test_layout_and_labels(self):
        pop = synthetic_skull_population(n_cases=9, seed=7)
        data = make_twogroup_blocks(pop)
        assert len(data.block1) == len(data.block2) == 18
        np.testing.assert_array_equal(data.labels,
                                      [0] * 9 + [1] * 9)
        assert data.case_ids[:9] == [f"raw_s{i:03d}" for i in range(9)]
        assert [c.case_id for c in data.block2] == data.case_ids

    def test_aligned_half_is_rotation_of_raw_half(self):
        pop = synthetic_skull_population(n_cases=7, seed=8)
        data = make_twogroup_blocks(pop)
        n = 7
        for i in range(n):
            raw = to_preshape(data.block1[i])
            ali = to_preshape(data.block1[n + i])
            # Same shape up to rotation: full Procrustes distance ~ 0.
            c = raw.matrix().T @ ali.matrix()
            u, s, vt = np.linalg.svd(c)
            assert np.isclose(np.sum(s), 1.0, atol=1e-9)  # cos of distance

    def test_modified_landmark_moved_outward(self):
        pop = synthetic_skull_population(n_cases=6, seed=9)
        data = make_twogroup_blocks(pop, landmark_index=2, displacement=0.5,
                                    rotation_angle=0.0)
        for base, mod in zip(pop, data.block2[:6]):
            centroid = base.points.mean(axis=0)
            before = np.linalg.norm(base.points[2] - centroid)
            after = np.linalg.norm(mod.points[2] - mod.points.mean(axis=0))
            assert after > before

    def test_bad_landmark_index(self):
        pop = synthetic_skull_population(n_cases=5, seed=10)
        with pytest.raises(IndexOutOfRange):
            make_twogroup_blocks(pop, landmark_index=99)


def test_population_generator_determinism():
    a = synthetic_skull_population(n_cases=5, seed=11)
    b = synthetic_skull_population(n_cases=5, seed=11)
    for x, y in zip(a, b):
        assert np.array_equal(x.points, y.points)
