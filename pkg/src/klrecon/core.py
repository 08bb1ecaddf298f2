"""Shared data containers and the unitary Fourier operator pair.

Volumes are 4D complex arrays with axes (x, y, z, q): two in-plane axes,
slice axis, and diffusion-direction axis. K-space and image space use the
same container shape; the transform between them is a centered, unitary 2D
FFT applied independently per (z, q) slice, so Parseval holds exactly and
the DC coefficient sits at (nx // 2, ny // 2).

All containers are treated as immutable after construction and are safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GradientTable",
    "VolumeShape",
    "DwiVolume",
    "KSpaceVolume",
    "fft2c",
    "ifft2c",
    "fft2_per_slice",
    "ifft2_per_slice",
]

_UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class GradientTable:
    """Diffusion sampling scheme: unit directions plus b-values (s/mm^2).

    Entries with bvalue == 0 are b0 (non-diffusion-weighted) images; at
    least one must be present. Every direction with bvalue > 0 must be a
    unit vector.
    """

    directions: np.ndarray
    bvalues: np.ndarray

    def __post_init__(self):
        directions = np.asarray(self.directions, dtype=np.float64)
        bvalues = np.asarray(self.bvalues, dtype=np.float64)
        if directions.ndim != 2 or directions.shape[1] != 3:
            raise ValueError(f"directions must be (nq, 3), got {directions.shape}")
        if bvalues.ndim != 1 or bvalues.shape[0] != directions.shape[0]:
            raise ValueError(
                f"bvalues length {bvalues.shape} does not match "
                f"directions {directions.shape}"
            )
        weighted = bvalues > 0
        norms = np.linalg.norm(directions[weighted], axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > _UNIT_NORM_TOL:
            raise ValueError("diffusion-weighted directions must have unit norm")
        if not np.any(bvalues == 0):
            raise ValueError("gradient table needs at least one b0 entry")
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "bvalues", bvalues)

    @property
    def nq(self) -> int:
        return self.bvalues.shape[0]

    @property
    def b0_mask(self) -> np.ndarray:
        return self.bvalues == 0

    @property
    def b0_indices(self) -> np.ndarray:
        return np.flatnonzero(self.b0_mask)

    def subset(self, indices) -> "GradientTable":
        """Gradient table restricted to the given q indices."""
        idx = np.asarray(indices, dtype=int)
        return GradientTable(self.directions[idx], self.bvalues[idx])


@dataclass(frozen=True)
class VolumeShape:
    """Dimensions (nx, ny, nz, nq) of a 4D volume; all must be >= 1."""

    nx: int
    ny: int
    nz: int
    nq: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "nq"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.nx, self.ny, self.nz, self.nq)

    @classmethod
    def parse(cls, text: str) -> "VolumeShape":
        """Parse 'NXxNYxNZxNQ', e.g. '64x64x4x24'."""
        parts = text.lower().split("x")
        if len(parts) != 4:
            raise ValueError(f"shape must have 4 components, got {text!r}")
        try:
            nx, ny, nz, nq = (int(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"shape components must be integers: {text!r}") from exc
        return cls(nx, ny, nz, nq)


def _check_volume(data: np.ndarray, gtab: GradientTable, kind: str) -> np.ndarray:
    data = np.asarray(data, dtype=np.complex128)
    if data.ndim != 4:
        raise ValueError(f"{kind} data must be 4D (nx, ny, nz, nq), got {data.shape}")
    if data.shape[3] != gtab.nq:
        raise ValueError(
            f"{kind} q dimension {data.shape[3]} does not match "
            f"gradient table nq={gtab.nq}"
        )
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{kind} data contains NaN or Inf")
    return data


@dataclass(frozen=True)
class DwiVolume:
    """4D complex image-domain volume (nx, ny, nz, nq) bound to a GradientTable."""

    data: np.ndarray
    gtab: GradientTable

    def __post_init__(self):
        object.__setattr__(self, "data", _check_volume(self.data, self.gtab, "image"))

    @property
    def shape(self) -> VolumeShape:
        return VolumeShape(*self.data.shape)


@dataclass(frozen=True)
class KSpaceVolume:
    """4D complex spatial-frequency volume (nx, ny, nz, nq), DC at array center."""

    data: np.ndarray
    gtab: GradientTable

    def __post_init__(self):
        object.__setattr__(self, "data", _check_volume(self.data, self.gtab, "k-space"))

    @property
    def shape(self) -> VolumeShape:
        return VolumeShape(*self.data.shape)


def fft2c(arr: np.ndarray) -> np.ndarray:
    """Centered unitary 2D FFT over the first two axes.

    Orthonormal scaling (1/sqrt(nx*ny) both ways) so the transform is
    unitary; trailing axes are carried along unchanged.
    """
    shifted = np.fft.ifftshift(arr, axes=(0, 1))
    spectrum = np.fft.fft2(shifted, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(spectrum, axes=(0, 1))


def ifft2c(arr: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`fft2c`."""
    shifted = np.fft.ifftshift(arr, axes=(0, 1))
    image = np.fft.ifft2(shifted, axes=(0, 1), norm="ortho")
    return np.fft.fftshift(image, axes=(0, 1))


def fft2_per_slice(volume: DwiVolume) -> KSpaceVolume:
    """Transform image volume to k-space, independently per (z, q) slice."""
    return KSpaceVolume(fft2c(volume.data), volume.gtab)


def ifft2_per_slice(kspace: KSpaceVolume) -> DwiVolume:
    """Transform k-space volume to image domain, independently per (z, q) slice."""
    return DwiVolume(ifft2c(kspace.data), kspace.gtab)
