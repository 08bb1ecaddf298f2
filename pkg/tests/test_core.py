import numpy as np
import pytest

from klrecon.core import (
    DwiVolume,
    GradientTable,
    KSpaceVolume,
    VolumeShape,
    fft2_per_slice,
    fft2c,
    ifft2_per_slice,
)


def simple_gtab(nq=3, n_b0=1):
    rng = np.random.default_rng(11)
    dirs = rng.standard_normal((nq - n_b0, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    directions = np.vstack([np.zeros((n_b0, 3)), dirs])
    bvalues = np.concatenate([np.zeros(n_b0), np.full(nq - n_b0, 1000.0)])
    return GradientTable(directions, bvalues)


class TestGradientTable:
    def test_basic_properties(self):
        gtab = simple_gtab(nq=5, n_b0=2)
        assert gtab.nq == 5
        assert list(gtab.b0_indices) == [0, 1]

    def test_rejects_non_unit_directions(self):
        dirs = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
        with pytest.raises(ValueError, match="unit norm"):
            GradientTable(dirs, np.array([0.0, 1000.0]))

    def test_requires_b0(self):
        dirs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(ValueError, match="b0"):
            GradientTable(dirs, np.array([1000.0, 1000.0]))

    def test_rejects_length_mismatch(self):
        dirs = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="does not match"):
            GradientTable(dirs, np.array([0.0]))

    def test_subset(self):
        gtab = simple_gtab(nq=6, n_b0=1)
        sub = gtab.subset([0, 2, 4])
        assert sub.nq == 3
        assert np.allclose(sub.directions, gtab.directions[[0, 2, 4]])


class TestVolumeShape:
    def test_parse(self):
        shape = VolumeShape.parse("64x64x4x24")
        assert shape.as_tuple() == (64, 64, 4, 24)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            VolumeShape.parse("64x64")
        with pytest.raises(ValueError):
            VolumeShape.parse("64x64xAx24")

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            VolumeShape(0, 4, 4, 4)


class TestVolumeContainers:
    def test_shape_mismatch_rejected(self):
        gtab = simple_gtab(nq=3)
        data = np.zeros((4, 4, 2, 5), dtype=complex)
        with pytest.raises(ValueError, match="q dimension"):
            DwiVolume(data, gtab)
        with pytest.raises(ValueError, match="q dimension"):
            KSpaceVolume(data, gtab)

    def test_nonfinite_rejected(self):
        gtab = simple_gtab(nq=3)
        data = np.zeros((4, 4, 1, 3), dtype=complex)
        data[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            DwiVolume(data, gtab)

    def test_non_4d_rejected(self):
        gtab = simple_gtab(nq=3)
        with pytest.raises(ValueError, match="4D"):
            DwiVolume(np.zeros((4, 4, 3), dtype=complex), gtab)


class TestFourierPair:
    def test_constant_image_concentrates_at_dc(self):
        gtab = simple_gtab(nq=1, n_b0=1)
        data = np.ones((4, 4, 1, 1), dtype=complex)
        kspace = fft2_per_slice(DwiVolume(data, gtab))
        spectrum = kspace.data[:, :, 0, 0]
        assert abs(spectrum[2, 2] - 4.0) < 1e-12
        off_dc = spectrum.copy()
        off_dc[2, 2] = 0.0
        assert np.abs(off_dc).max() < 1e-12

    def test_dc_only_inverts_to_constant(self):
        gtab = simple_gtab(nq=1, n_b0=1)
        kdata = np.zeros((4, 4, 1, 1), dtype=complex)
        kdata[2, 2, 0, 0] = 4.0
        image = ifft2_per_slice(KSpaceVolume(kdata, gtab))
        assert np.abs(image.data - 1.0).max() < 1e-12

    def test_zero_kspace_gives_zero_image(self):
        gtab = simple_gtab(nq=2)
        kdata = np.zeros((6, 6, 2, 2), dtype=complex)
        image = ifft2_per_slice(KSpaceVolume(kdata, gtab))
        assert np.abs(image.data).max() == 0.0

    def test_round_trip_random_volume(self):
        rng = np.random.default_rng(0)
        gtab = simple_gtab(nq=3)
        data = rng.standard_normal((8, 8, 2, 3)) + 1j * rng.standard_normal((8, 8, 2, 3))
        volume = DwiVolume(data, gtab)
        back = ifft2_per_slice(fft2_per_slice(volume))
        rel = np.linalg.norm(back.data - data) / np.linalg.norm(data)
        assert rel < 1e-10

    def test_parseval_direct_summation_oracle(self):
        rng = np.random.default_rng(1)
        gtab = simple_gtab(nq=2)
        data = rng.standard_normal((8, 8, 2, 2)) + 1j * rng.standard_normal((8, 8, 2, 2))
        kspace = fft2_per_slice(DwiVolume(data, gtab))
        # oracle: plain elementwise summation of squared magnitudes
        image_energy = sum(abs(v) ** 2 for v in data.ravel())
        kspace_energy = sum(abs(v) ** 2 for v in kspace.data.ravel())
        assert abs(image_energy - kspace_energy) / image_energy < 1e-10

    def test_unitarity_preserves_inner_products(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.standard_normal((8, 8, 1, 2)) + 1j * rng.standard_normal((8, 8, 1, 2))
            y = rng.standard_normal((8, 8, 1, 2)) + 1j * rng.standard_normal((8, 8, 1, 2))
            lhs = np.vdot(fft2c(x), fft2c(y))
            rhs = np.vdot(x, y)
            assert abs(lhs - rhs) / abs(rhs) < 1e-9

    def test_odd_sized_grid_round_trip(self):
        rng = np.random.default_rng(3)
        gtab = simple_gtab(nq=2)
        data = rng.standard_normal((7, 5, 1, 2)) + 1j * rng.standard_normal((7, 5, 1, 2))
        back = ifft2_per_slice(fft2_per_slice(DwiVolume(data, gtab)))
        assert np.linalg.norm(back.data - data) / np.linalg.norm(data) < 1e-10
