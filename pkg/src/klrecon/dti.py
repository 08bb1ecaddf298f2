"""Per-voxel diffusion tensor fitting and derived scalar maps (FA, MD, color).

The tensor is fitted by ordinary log-linear least squares: for each voxel,
ln S_q = ln S0 - b_q * g_q^T D g_q is solved for (ln S0, Dxx, Dyy, Dzz,
Dxy, Dxz, Dyz). The fit is exact on noiseless tensor-model data. FA and MD
are computed after clamping eigenvalues at zero so both stay in valid
ranges on noisy input; the stored tensors themselves are the raw fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DwiVolume

__all__ = [
    "TensorMap",
    "foreground_mask",
    "fit_tensor_volume",
    "fa_of",
    "md_of",
    "color_map",
    "tensors_to_matrices",
]

# storage order of the six unique tensor components
TENSOR_COMPONENTS = ("xx", "yy", "zz", "xy", "xz", "yz")

_FOREGROUND_FRACTION = 0.05


@dataclass(frozen=True)
class TensorMap:
    """Per-voxel diffusion tensors plus derived maps.

    tensors: (nx, ny, nz, 6) in the order (xx, yy, zz, xy, xz, yz), mm^2/s;
    s0: fitted non-weighted signal; fa in [0, 1]; md >= 0 (mm^2/s);
    rgb: direction-encoded color in [0, 1]^3; foreground: the voxels the
    fit was performed on (background voxels carry zero tensors).
    """

    tensors: np.ndarray
    s0: np.ndarray
    fa: np.ndarray
    md: np.ndarray
    rgb: np.ndarray
    foreground: np.ndarray


def tensors_to_matrices(tensors: np.ndarray) -> np.ndarray:
    """Expand (..., 6) component arrays to full symmetric (..., 3, 3) matrices."""
    tensors = np.asarray(tensors, dtype=np.float64)
    out = np.zeros(tensors.shape[:-1] + (3, 3))
    out[..., 0, 0] = tensors[..., 0]
    out[..., 1, 1] = tensors[..., 1]
    out[..., 2, 2] = tensors[..., 2]
    out[..., 0, 1] = out[..., 1, 0] = tensors[..., 3]
    out[..., 0, 2] = out[..., 2, 0] = tensors[..., 4]
    out[..., 1, 2] = out[..., 2, 1] = tensors[..., 5]
    return out


def foreground_mask(volume: DwiVolume, mode: str = "b0") -> np.ndarray:
    """Voxels whose reference magnitude exceeds 5% of the volume maximum.

    mode 'b0' averages the b0 magnitudes (used for tensor fitting); mode
    'mean' averages all q entries (used when harvesting training profiles).
    """
    mag = np.abs(volume.data)
    if mode == "b0":
        ref = mag[..., volume.gtab.b0_mask].mean(axis=-1)
    elif mode == "mean":
        ref = mag.mean(axis=-1)
    else:
        raise ValueError(f"unknown foreground mode {mode!r}")
    return ref > _FOREGROUND_FRACTION * ref.max()


def _design_matrix(gtab) -> np.ndarray:
    g = gtab.directions
    b = gtab.bvalues
    cols = np.stack(
        [
            np.ones_like(b),
            -b * g[:, 0] ** 2,
            -b * g[:, 1] ** 2,
            -b * g[:, 2] ** 2,
            -2 * b * g[:, 0] * g[:, 1],
            -2 * b * g[:, 0] * g[:, 2],
            -2 * b * g[:, 1] * g[:, 2],
        ],
        axis=1,
    )
    return cols


def _clamped_eigvals(tensors: np.ndarray) -> np.ndarray:
    return np.maximum(np.linalg.eigvalsh(tensors_to_matrices(tensors)), 0.0)


def _fa_from_eigvals(lam: np.ndarray) -> np.ndarray:
    mean = lam.mean(axis=-1, keepdims=True)
    num = np.sum((lam - mean) ** 2, axis=-1)
    den = np.sum(lam**2, axis=-1)
    out = np.zeros_like(den)
    nz = den > 0
    out[nz] = np.sqrt(1.5 * num[nz] / den[nz])
    return np.clip(out, 0.0, 1.0)


def fa_of(tensor: np.ndarray) -> np.ndarray:
    """Fractional anisotropy of symmetric tensor(s), shape (..., 3, 3) or (..., 6).

    Eigenvalues are clamped at zero first; the all-zero tensor maps to 0.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.shape[-1] == 6 and (tensor.ndim == 1 or tensor.shape[-2:] != (3, 3)):
        tensor = tensors_to_matrices(tensor)
    lam = np.maximum(np.linalg.eigvalsh(tensor), 0.0)
    fa = _fa_from_eigvals(lam)
    return fa if fa.ndim else float(fa)


def md_of(tensor: np.ndarray) -> np.ndarray:
    """Mean diffusivity: trace/3 of the eigenvalue-clamped tensor(s)."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.shape[-1] == 6 and (tensor.ndim == 1 or tensor.shape[-2:] != (3, 3)):
        tensor = tensors_to_matrices(tensor)
    lam = np.maximum(np.linalg.eigvalsh(tensor), 0.0)
    md = lam.mean(axis=-1)
    return md if md.ndim else float(md)


def _principal_rgb(tensors: np.ndarray, fa: np.ndarray) -> np.ndarray:
    """Direction-encoded color: FA * |principal eigenvector|, clamped to [0, 1]."""
    mats = tensors_to_matrices(tensors)
    _, vecs = np.linalg.eigh(mats)
    principal = vecs[..., :, -1]
    return np.clip(fa[..., None] * np.abs(principal), 0.0, 1.0)


def color_map(tmap: TensorMap) -> np.ndarray:
    """Recompute the direction-encoded RGB volume from a tensor map."""
    return _principal_rgb(tmap.tensors, tmap.fa)


def derive_maps(tensors: np.ndarray, s0: np.ndarray, foreground: np.ndarray) -> TensorMap:
    """Assemble a TensorMap, deriving FA/MD/RGB from the given tensor field."""
    lam = _clamped_eigvals(tensors)
    fa = _fa_from_eigvals(lam)
    md = lam.mean(axis=-1)
    rgb = _principal_rgb(tensors, fa)
    return TensorMap(
        tensors=tensors,
        s0=np.asarray(s0, dtype=np.float64),
        fa=fa,
        md=md,
        rgb=rgb,
        foreground=np.asarray(foreground, dtype=bool),
    )


def fit_tensor_volume(dwi: DwiVolume) -> TensorMap:
    """Log-linear least-squares tensor fit over the foreground voxels.

    Non-positive magnitudes are replaced by the smallest positive magnitude
    of the same voxel profile before taking logs; voxels with no positive
    signal at all are treated as background. Background voxels get a zero
    tensor.
    """
    gtab = dwi.gtab
    n_weighted = int(np.count_nonzero(~gtab.b0_mask))
    if n_weighted < 6:
        raise ValueError(f"tensor fit needs >= 6 diffusion-weighted directions, got {n_weighted}")
    A = _design_matrix(gtab)
    if np.linalg.matrix_rank(A) < 7:
        raise ValueError(
            "gradient scheme is degenerate: design matrix rank "
            f"{np.linalg.matrix_rank(A)} < 7 (directions do not span 3-space)"
        )

    mag = np.abs(dwi.data)
    fg = foreground_mask(dwi, mode="b0")
    profiles = mag[fg]

    has_signal = np.any(profiles > 0, axis=1)
    safe = profiles.copy()
    if np.any(has_signal):
        floors = np.where(profiles > 0, profiles, np.inf).min(axis=1)
        rows = has_signal
        safe[rows] = np.where(profiles[rows] > 0, profiles[rows], floors[rows, None])

    shape = dwi.data.shape[:3]
    tensors = np.zeros(shape + (6,))
    s0 = np.zeros(shape)
    if np.any(has_signal):
        theta = np.log(safe[has_signal]) @ np.linalg.pinv(A).T
        fit_fg = np.zeros((profiles.shape[0], 7))
        fit_fg[has_signal] = theta
        tensors[fg] = fit_fg[:, 1:]
        s0_fg = np.zeros(profiles.shape[0])
        s0_fg[has_signal] = np.exp(fit_fg[has_signal, 0])
        s0[fg] = s0_fg

    fg_eff = fg.copy()
    fg_eff[fg] = has_signal
    return derive_maps(tensors, s0, fg_eff)
