"""Kernel low-rank reconstruction from undersampled k-space.

The pipeline has three stages: (1) harvest training voxel profiles along q
directly from the aliased zero-filled volume — no separate low-resolution
calibration data is needed, because aliasing artifacts perturb mainly the
minor kernel components while the leading ones stay stable; (2) fit a
polynomial-kernel PCA basis once, globally; (3) per slice, alternate
projection of every foreground voxel's magnitude profile onto the learned
basis (pre-imaging it back to signal space) with hard k-space data
consistency, ending on a consistency step so measured locations are
reproduced exactly.

Phases are re-estimated each iteration from the low-frequency content of
the current iterate (the densely sampled k-space center pins them down);
magnitude profiles of background voxels pass through untouched, since the
basis is trained on foreground tissue only.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DwiVolume, KSpaceVolume, fft2c, ifft2c
from .dti import foreground_mask
from .kpca import KernelModel, KernelParams, kpca_fit, kpca_project, preimage
from .sampling import SamplingMask

__all__ = [
    "KlrConfig",
    "worker_count",
    "training_locations",
    "profiles_at",
    "harvest_training",
    "fit_from_aliased",
    "klr_reconstruct_slice",
    "klr_reconstruct_volume",
]


@dataclass(frozen=True)
class KlrConfig:
    """Training-set size, kernel parameters, rank, and iteration limits.

    phase_radius is the k-space Gaussian radius (in samples) of the
    smooth-phase estimate reattached to the denoised magnitudes; set it to
    None to reuse the raw phase of the current iterate instead.
    """

    n_train: int = 2000
    params: KernelParams = field(default_factory=KernelParams)
    rank_r: int = 8
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    phase_radius: float | None = 3.0

    def __post_init__(self):
        if self.n_train < self.rank_r:
            raise ValueError(
                f"n_train ({self.n_train}) must be >= rank_r ({self.rank_r})"
            )
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.phase_radius is not None and self.phase_radius <= 0:
            raise ValueError(f"phase_radius must be > 0 or None, got {self.phase_radius}")


def worker_count() -> int:
    """Worker cap from the KLR_THREADS environment variable (0 or unset = auto)."""
    raw = os.environ.get("KLR_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value <= 0:
        return min(4, os.cpu_count() or 1)
    return value


def training_locations(aliased: DwiVolume, cfg: KlrConfig) -> np.ndarray:
    """Flat voxel indices of the harvested training set, seeded-deterministic.

    Locations are drawn uniformly without replacement from the foreground
    (mean-over-q magnitude above 5% of the volume's maximum mean) across all
    slices. If the foreground is smaller than n_train the draw falls back to
    sampling with replacement and warns.
    """
    fg = foreground_mask(aliased, mode="mean")
    candidates = np.flatnonzero(fg.ravel())
    if candidates.size == 0:
        raise ValueError("aliased volume has an empty foreground; cannot harvest training data")
    rng = np.random.default_rng(cfg.seed)
    if candidates.size < cfg.n_train:
        warnings.warn(
            f"foreground has {candidates.size} voxels < n_train={cfg.n_train}; "
            "sampling with replacement",
            stacklevel=2,
        )
        return candidates[rng.integers(candidates.size, size=cfg.n_train)]
    return candidates[rng.choice(candidates.size, size=cfg.n_train, replace=False)]


def profiles_at(volume: DwiVolume, locations: np.ndarray) -> np.ndarray:
    """Magnitude q-profiles at flat voxel indices, as columns (nq, n)."""
    nq = volume.gtab.nq
    flat = np.abs(volume.data).reshape(-1, nq)
    return flat[locations].T.copy()


def harvest_training(aliased: DwiVolume, cfg: KlrConfig) -> np.ndarray:
    """Training matrix (nq, n_train) of magnitude profiles from the aliased volume."""
    return profiles_at(aliased, training_locations(aliased, cfg))


def fit_from_aliased(aliased: DwiVolume, cfg: KlrConfig) -> KernelModel:
    """Harvest profiles and fit the kernel basis, scaling by the median norm."""
    X = harvest_training(aliased, cfg)
    norms = np.linalg.norm(X, axis=0)
    median = float(np.median(norms))
    scale = median if median > 0 else 1.0
    return kpca_fit(X, cfg.params, cfg.rank_r, scale=scale)


def _smooth_phase(x: np.ndarray, radius: float) -> np.ndarray:
    """Unit phasors of the Gaussian-low-passed slice (nx, ny, nq)."""
    nx, ny = x.shape[0], x.shape[1]
    dx = np.arange(nx)[:, None] - nx // 2
    dy = np.arange(ny)[None, :] - ny // 2
    window = np.exp(-0.5 * (np.hypot(dx, dy) / radius) ** 2)
    smooth = ifft2c(fft2c(x) * window[:, :, None])
    mag = np.abs(smooth)
    return np.where(mag > 0, smooth / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)


def _iterate_phase(x: np.ndarray) -> np.ndarray:
    mag = np.abs(x)
    return np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)


def _replace_profiles(model: KernelModel, mags: np.ndarray, fg: np.ndarray) -> np.ndarray:
    """Low-rank pre-image of every foreground profile; background untouched.

    All-zero profiles also pass through (their pre-image is ill-posed for
    even kernel degree).
    """
    out = mags.copy()
    live = fg & np.any(mags > 0, axis=-1)
    if not np.any(live):
        return out
    profiles = mags[live].T
    out[live] = preimage(model, kpca_project(model, profiles)).T
    return out


def klr_reconstruct_slice(
    kslice: np.ndarray,
    mask: SamplingMask,
    model: KernelModel,
    cfg: KlrConfig,
    foreground: np.ndarray | None = None,
) -> np.ndarray:
    """Reconstruct one slice (nx, ny, nq) from its undersampled k-space.

    Iterates low-rank profile replacement followed by hard replacement of
    the sampled k-space locations, starting from the zero-filled inverse
    FFT. The consistency step always runs last, so the output's FFT matches
    the measured data exactly on sampled locations. ``foreground`` marks the
    in-plane voxels whose profiles go through the kernel basis; by default
    it is derived from the zero-filled slice itself.
    """
    kslice = np.asarray(kslice, dtype=np.complex128)
    nx, ny, nq = kslice.shape
    if mask.pattern.shape != (nx, ny, nq):
        raise ValueError(
            f"mask pattern {mask.pattern.shape} does not match slice dims {(nx, ny, nq)}"
        )
    if model.rank_r > nq:
        raise ValueError(f"model rank {model.rank_r} exceeds the number of directions {nq}")
    if model.nq != nq:
        raise ValueError(f"model was trained on nq={model.nq}, slice has nq={nq}")

    pattern = mask.pattern
    measured = np.where(pattern, kslice, 0.0)
    x = ifft2c(measured)
    if foreground is None:
        mean_mag = np.abs(x).mean(axis=-1)
        foreground = mean_mag > 0.05 * mean_mag.max()

    for _ in range(cfg.max_iters):
        mags = np.abs(x)
        smoothed_mags = _replace_profiles(model, mags, foreground)
        if cfg.phase_radius is None:
            phase = _iterate_phase(x)
        else:
            phase = _smooth_phase(x, cfg.phase_radius)
        k = fft2c(smoothed_mags * phase)
        x_new = ifft2c(np.where(pattern, measured, k))
        denom = float(np.linalg.norm(x))
        change = float(np.linalg.norm(x_new - x)) / denom if denom > 0 else np.inf
        x = x_new
        if change < cfg.tol:
            break
    return x


def klr_reconstruct_volume(
    kvol: KSpaceVolume,
    mask: SamplingMask,
    cfg: KlrConfig,
    model: KernelModel | None = None,
) -> DwiVolume:
    """Full-volume reconstruction: train once globally, reconstruct per slice.

    A precomputed ``model`` skips the harvest/fit stage (useful for basis
    experiments); otherwise the basis is learned from the zero-filled
    aliased volume itself. Slices are independent and run on a small thread
    pool capped by the KLR_THREADS environment variable.
    """
    nx, ny, nz, nq = kvol.data.shape
    if mask.pattern.shape != (nx, ny, nq):
        raise ValueError(
            f"mask pattern {mask.pattern.shape} does not match k-space dims {(nx, ny, nq)}"
        )
    measured = np.where(mask.pattern[:, :, None, :], kvol.data, 0.0)
    aliased = DwiVolume(ifft2c(measured), kvol.gtab)
    if model is None:
        model = fit_from_aliased(aliased, cfg)
    if model.rank_r > nq:
        raise ValueError(f"model rank {model.rank_r} exceeds the number of directions {nq}")
    fg = foreground_mask(aliased, mode="mean")

    def recon_slice(z: int) -> np.ndarray:
        return klr_reconstruct_slice(
            measured[:, :, z, :], mask, model, cfg, foreground=fg[:, :, z]
        )

    workers = min(worker_count(), nz)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(recon_slice, range(nz)))
    else:
        results = [recon_slice(z) for z in range(nz)]
    return DwiVolume(np.stack(results, axis=2), kvol.gtab)
