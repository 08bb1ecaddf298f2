"""Synthetic ground truth: meniscus-like anatomy with known per-voxel tensors.

The anatomy is a C-shaped annulus (a 300-degree arc between two concentric
circles) of anisotropic tissue whose principal diffusion axis runs
tangentially around the arc, embedded in isotropic tissue inside an
elliptical support, with zero signal outside. Diffusion-weighted signals
follow the single-tensor forward model S_q = S0 * exp(-b_q g_q^T D g_q),
so every quantitative map has a closed-form reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DwiVolume, GradientTable, KSpaceVolume, VolumeShape, fft2_per_slice
from .dti import TensorMap, derive_maps

__all__ = [
    "PhantomSpec",
    "spiral_directions",
    "phantom_gradient_table",
    "generate_phantom",
    "forward_kspace",
]

# annulus eigenvalues (mm^2/s): strong tangential anisotropy
LAMBDA_PARALLEL = 1.7e-3
LAMBDA_PERP = 3e-4
# isotropic background tissue diffusivity (mm^2/s)
BACKGROUND_DIFFUSIVITY = 1.0e-3

_MIN_INPLANE = 32
_ARC_SPAN_DEG = 300.0


@dataclass(frozen=True)
class PhantomSpec:
    """Acquisition-like parameters for the synthetic volume.

    n_directions diffusion-weighted directions at the given b-value plus
    ceil(n_directions / 10) b0 entries; noise_sigma is the complex Gaussian
    noise standard deviation relative to the tissue S0 of 1.
    """

    nx: int = 64
    ny: int = 64
    nz: int = 4
    n_directions: int = 24
    b_value: float = 1000.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_directions < 6:
            raise ValueError(f"need >= 6 diffusion directions, got {self.n_directions}")
        if self.b_value <= 0:
            raise ValueError(f"b_value must be > 0, got {self.b_value}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def n_b0(self) -> int:
        return math.ceil(self.n_directions / 10)

    @property
    def shape(self) -> VolumeShape:
        return VolumeShape(self.nx, self.ny, self.nz, self.n_directions + self.n_b0)


def spiral_directions(n: int) -> np.ndarray:
    """n deterministic unit vectors from a golden-angle spiral on the sphere."""
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    radius = np.sqrt(np.maximum(1.0 - z**2, 0.0))
    azimuth = k * (math.pi * (3.0 - math.sqrt(5.0)))
    dirs = np.stack([radius * np.cos(azimuth), radius * np.sin(azimuth), z], axis=1)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def phantom_gradient_table(n_directions: int, b_value: float) -> GradientTable:
    """b0 entries first, then the spiral directions at the given b-value."""
    n_b0 = math.ceil(n_directions / 10)
    directions = np.vstack([np.zeros((n_b0, 3)), spiral_directions(n_directions)])
    bvalues = np.concatenate([np.zeros(n_b0), np.full(n_directions, float(b_value))])
    return GradientTable(directions, bvalues)


def _tissue_geometry(nx: int, ny: int):
    """Masks and tangent angles for the annulus / background / support regions."""
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    x = np.arange(nx)[:, None] - cx
    y = np.arange(ny)[None, :] - cy
    half = min(nx, ny) / 2.0

    radius = np.hypot(x, y)
    angle = np.arctan2(y, x)

    support = (x / (0.92 * nx / 2.0)) ** 2 + (y / (0.92 * ny / 2.0)) ** 2 <= 1.0
    in_ring = (radius >= 0.42 * half) & (radius <= 0.72 * half)
    # the 60-degree gap of the C sits symmetrically around angle 0
    gap_half = math.radians((360.0 - _ARC_SPAN_DEG) / 2.0)
    annulus = in_ring & (np.abs(angle) >= gap_half) & support
    return support, annulus, angle


def _tensor_field(nx: int, ny: int, nz: int):
    """Per-voxel tensor components (nx, ny, nz, 6) plus region masks."""
    support, annulus, angle = _tissue_geometry(nx, ny)
    tangent_x = -np.sin(angle)
    tangent_y = np.cos(angle)

    plane = np.zeros((nx, ny, 6))
    background = support & ~annulus
    for i in range(3):
        plane[background, i] = BACKGROUND_DIFFUSIVITY

    delta = LAMBDA_PARALLEL - LAMBDA_PERP
    plane[annulus, 0] = LAMBDA_PERP + delta * tangent_x[annulus] ** 2
    plane[annulus, 1] = LAMBDA_PERP + delta * tangent_y[annulus] ** 2
    plane[annulus, 2] = LAMBDA_PERP
    plane[annulus, 3] = delta * (tangent_x * tangent_y)[annulus]

    tensors = np.repeat(plane[:, :, None, :], nz, axis=2)
    support3 = np.repeat(support[:, :, None], nz, axis=2)
    return tensors, support3


def generate_phantom(spec: PhantomSpec) -> tuple[DwiVolume, TensorMap]:
    """Simulate the diffusion-weighted volume and its ground-truth tensor map.

    Deterministic for a fixed seed; complex Gaussian noise (std
    ``noise_sigma``) is added independently per voxel and direction when
    requested. S0 is exactly 1 in tissue and 0 outside the support.
    """
    if min(spec.nx, spec.ny) < _MIN_INPLANE:
        raise ValueError(
            f"in-plane dims must be >= {_MIN_INPLANE} to contain the annulus, "
            f"got {spec.nx}x{spec.ny}"
        )
    gtab = phantom_gradient_table(spec.n_directions, spec.b_value)
    tensors, support = _tensor_field(spec.nx, spec.ny, spec.nz)

    g = gtab.directions
    # quadratic form g^T D g per voxel and direction, from the 6 components
    quad = (
        tensors[..., 0, None] * g[:, 0] ** 2
        + tensors[..., 1, None] * g[:, 1] ** 2
        + tensors[..., 2, None] * g[:, 2] ** 2
        + 2 * tensors[..., 3, None] * g[:, 0] * g[:, 1]
        + 2 * tensors[..., 4, None] * g[:, 0] * g[:, 2]
        + 2 * tensors[..., 5, None] * g[:, 1] * g[:, 2]
    )
    s0 = support.astype(np.float64)
    signals = s0[..., None] * np.exp(-gtab.bvalues * quad)

    data = signals.astype(np.complex128)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        scale = spec.noise_sigma / math.sqrt(2.0)
        noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        data = data + scale * noise

    truth = DwiVolume(data, gtab)
    tmap = derive_maps(tensors, s0, support)
    return truth, tmap


def forward_kspace(truth: DwiVolume) -> KSpaceVolume:
    """Fully sampled k-space of the ground-truth volume (unitary per-slice FFT)."""
    return fft2_per_slice(truth)
