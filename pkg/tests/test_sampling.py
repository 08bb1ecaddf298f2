import itertools

import numpy as np
import pytest

from klrecon.core import GradientTable, KSpaceVolume, VolumeShape
from klrecon.sampling import (
    QSubset,
    SamplingMask,
    apply_undersampling,
    generate_vd_mask,
    select_q_subset,
)


def ksvol(nx=16, ny=16, nz=2, nq=4, seed=0):
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((nq - 1, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    gtab = GradientTable(
        np.vstack([np.zeros((1, 3)), dirs]),
        np.concatenate([[0.0], np.full(nq - 1, 1000.0)]),
    )
    data = rng.standard_normal((nx, ny, nz, nq)) + 1j * rng.standard_normal((nx, ny, nz, nq))
    return KSpaceVolume(data, gtab)


def center_disk_indices(nx, ny, center_radius):
    half = min(nx, ny) / 2.0
    dx = np.arange(nx)[:, None] - nx // 2
    dy = np.arange(ny)[None, :] - ny // 2
    return np.hypot(dx, dy) / half <= center_radius


class TestGenerateVdMask:
    def test_af1_is_all_true(self):
        mask = generate_vd_mask(VolumeShape(16, 16, 1, 3), af_target=1.0, seed=5)
        assert mask.pattern.all()
        assert mask.achieved_af == 1.0

    def test_af4_reaches_target_and_keeps_center(self):
        shape = VolumeShape(64, 64, 1, 4)
        mask = generate_vd_mask(shape, af_target=4.0, center_radius=0.08, seed=7)
        assert 3.6 <= mask.achieved_af <= 4.4
        disk = center_disk_indices(64, 64, 0.08)
        assert disk.sum() == 21  # the disk inscribed in the central 5x5 block
        for q in range(4):
            assert mask.pattern[:, :, q][disk].all()

    @pytest.mark.parametrize("af", [2.0, 4.0, 6.0, 8.0])
    def test_af_grid_within_ten_percent(self, af):
        mask = generate_vd_mask(VolumeShape(64, 64, 1, 2), af_target=af, seed=3)
        achieved = mask.pattern.size / mask.pattern.sum()
        assert abs(achieved - af) <= 0.1 * af

    def test_deterministic(self):
        shape = VolumeShape(48, 48, 1, 3)
        a = generate_vd_mask(shape, af_target=4.0, seed=11)
        b = generate_vd_mask(shape, af_target=4.0, seed=11)
        assert np.array_equal(a.pattern, b.pattern)

    def test_seeds_differ(self):
        shape = VolumeShape(48, 48, 1, 3)
        a = generate_vd_mask(shape, af_target=4.0, seed=11)
        b = generate_vd_mask(shape, af_target=4.0, seed=12)
        assert not np.array_equal(a.pattern, b.pattern)

    def test_per_direction_draws_independent_planes(self):
        shape = VolumeShape(48, 48, 1, 3)
        mask = generate_vd_mask(shape, af_target=4.0, seed=2, per_direction=True)
        assert not np.array_equal(mask.pattern[:, :, 0], mask.pattern[:, :, 1])
        shared = generate_vd_mask(shape, af_target=4.0, seed=2, per_direction=False)
        assert np.array_equal(shared.pattern[:, :, 0], shared.pattern[:, :, 1])

    def test_dc_always_sampled(self):
        for af, seed in [(2.0, 0), (8.0, 4), (6.0, 9)]:
            mask = generate_vd_mask(VolumeShape(32, 40, 1, 2), af_target=af, seed=seed)
            assert mask.pattern[16, 20].all()

    def test_infeasible_center_budget_names_bound(self):
        # a large center disk caps the achievable AF; error reports the cap
        with pytest.raises(ValueError, match="caps the acceleration factor"):
            generate_vd_mask(VolumeShape(32, 32, 1, 1), af_target=100.0, center_radius=0.4, seed=0)

    def test_rejects_bad_arguments(self):
        shape = VolumeShape(32, 32, 1, 1)
        with pytest.raises(ValueError):
            generate_vd_mask(shape, af_target=0.5)
        with pytest.raises(ValueError):
            generate_vd_mask(shape, af_target=4.0, center_radius=0.7)
        with pytest.raises(ValueError):
            generate_vd_mask(shape, af_target=4.0, decay=0.0)


class TestSelectQSubset:
    def test_identity_subset(self):
        vol = ksvol(nq=5)
        qs = select_q_subset(vol.gtab, 5, seed=1)
        assert np.array_equal(qs.indices, np.arange(5))

    def test_paper_regime_counts(self):
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((81, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        gtab = GradientTable(
            np.vstack([np.zeros((8, 3)), dirs]),
            np.concatenate([np.zeros(8), np.full(81, 1000.0)]),
        )
        qs = select_q_subset(gtab, 45, seed=4)
        assert qs.nq_sub == 45 and qs.indices.size == 45
        b0_kept = np.intersect1d(qs.indices, np.arange(8))
        assert b0_kept.size == 8  # all b0 retained
        assert (qs.indices >= 8).sum() == 37

    def test_icosahedral_half_shell_brute_force(self):
        phi = (1 + np.sqrt(5)) / 2
        verts = np.array(
            [
                [0, 1, phi],
                [0, -1, phi],
                [1, phi, 0],
                [-1, phi, 0],
                [phi, 0, 1],
                [-phi, 0, 1],
            ],
            dtype=float,
        )
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        gtab = GradientTable(
            np.vstack([np.zeros((1, 3)), verts]),
            np.concatenate([[0.0], np.full(6, 1000.0)]),
        )

        def min_pair_angle(triple):
            angles = []
            for i, j in itertools.combinations(triple, 2):
                c = abs(verts[i] @ verts[j])
                angles.append(np.arccos(min(c, 1.0)))
            return min(angles)

        best = max(min_pair_angle(t) for t in itertools.combinations(range(6), 3))
        for seed in range(5):
            qs = select_q_subset(gtab, 4, seed=seed)
            chosen = [i - 1 for i in qs.indices if i >= 1]
            assert min_pair_angle(chosen) >= best - 1e-9

    def test_deterministic(self):
        vol = ksvol(nq=8)
        a = select_q_subset(vol.gtab, 5, seed=3)
        b = select_q_subset(vol.gtab, 5, seed=3)
        assert np.array_equal(a.indices, b.indices)

    def test_below_b0_count_rejected(self):
        rng = np.random.default_rng(1)
        dirs = rng.standard_normal((4, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        gtab = GradientTable(
            np.vstack([np.zeros((3, 3)), dirs]),
            np.concatenate([np.zeros(3), np.full(4, 1000.0)]),
        )
        with pytest.raises(ValueError, match="b0"):
            select_q_subset(gtab, 2, seed=0)

    def test_indices_strictly_increasing(self):
        vol = ksvol(nq=8)
        qs = select_q_subset(vol.gtab, 5, seed=9)
        assert np.all(np.diff(qs.indices) > 0)


class TestApplyUndersampling:
    def test_all_true_mask_is_identity(self):
        vol = ksvol()
        mask = SamplingMask(np.ones((16, 16, 4), dtype=bool), 1.0, 0.08, 0)
        out = apply_undersampling(vol, mask)
        assert np.array_equal(out.data, vol.data)

    def test_masked_entries_exactly_zero_and_rest_bit_identical(self):
        vol = ksvol()
        rng = np.random.default_rng(5)
        pattern = rng.random((16, 16, 4)) < 0.5
        mask = SamplingMask(pattern, 2.0, 0.08, 0)
        out = apply_undersampling(vol, mask)
        kept = pattern[:, :, None, :] & np.ones(vol.data.shape, dtype=bool)
        assert np.array_equal(out.data[kept], vol.data[kept])
        zeroed = out.data[~kept]
        assert np.all(zeroed == 0)
        # exact +0.0 bits, not -0.0
        assert np.all(np.signbit(zeroed.real) == False)  # noqa: E712

    def test_idempotent(self):
        vol = ksvol()
        mask = generate_vd_mask(vol.shape, af_target=3.0, seed=1)
        once = apply_undersampling(vol, mask)
        twice = apply_undersampling(once, mask)
        assert np.array_equal(once.data, twice.data)

    def test_energy_fraction_tracks_mask_fraction(self):
        vol = ksvol(nx=32, ny=32, nz=2, nq=4, seed=7)
        mask = generate_vd_mask(vol.shape, af_target=4.0, seed=2)
        out = apply_undersampling(vol, mask)
        ratio = np.sum(np.abs(out.data) ** 2) / np.sum(np.abs(vol.data) ** 2)
        frac = mask.sampled_fraction
        assert abs(ratio - frac) <= 0.2 * frac

    def test_energy_strictly_decreases_unless_all_true(self):
        vol = ksvol()
        pattern = np.ones((16, 16, 4), dtype=bool)
        pattern[0, 0, 0] = False
        mask = SamplingMask(pattern, 1.0, 0.08, 0)
        out = apply_undersampling(vol, mask)
        assert np.sum(np.abs(out.data) ** 2) < np.sum(np.abs(vol.data) ** 2)

    def test_q_subsetting_reduces_dimension(self):
        vol = ksvol(nq=6)
        qs = select_q_subset(vol.gtab, 4, seed=0)
        mask = SamplingMask(np.ones((16, 16, 4), dtype=bool), 1.0, 0.08, 0)
        out = apply_undersampling(vol, mask, qs)
        assert out.data.shape == (16, 16, 2, 4)
        assert out.gtab.nq == 4
        assert np.array_equal(out.data, vol.data[:, :, :, qs.indices])

    def test_shape_mismatch_rejected(self):
        vol = ksvol()
        mask = SamplingMask(np.ones((8, 16, 4), dtype=bool), 1.0, 0.08, 0)
        with pytest.raises(ValueError, match="does not match"):
            apply_undersampling(vol, mask)

    def test_qsubset_nq_mismatch_rejected(self):
        vol = ksvol(nq=6)
        qs = QSubset(np.array([0, 1, 2]), 5, 3)
        mask = SamplingMask(np.ones((16, 16, 3), dtype=bool), 1.0, 0.08, 0)
        with pytest.raises(ValueError, match="nq"):
            apply_undersampling(vol, mask, qs)
