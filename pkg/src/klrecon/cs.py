"""Compressed-sensing baseline: in-plane wavelet sparsity plus total
variation along the diffusion axis, solved by an accelerated proximal
gradient method with a monotonicity safeguard.

Objective:  ||M F x - z||^2  +  lambda_w * ||W x||_1  +  lambda_tv * TV_q(x)

where F is the unitary centered per-slice 2D FFT, M the sampling mask, W an
orthonormal 2-level in-plane Haar transform (the final approximation band
is left unpenalized), and TV_q the anisotropic total variation of each
voxel profile along q. The two proximal operators are applied sequentially;
the TV proximal runs a fixed number of dual-ascent steps on the 1-D chains.

Soft thresholding is complex-valued: magnitudes shrink, phases survive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DwiVolume, KSpaceVolume, fft2c, ifft2c
from .sampling import SamplingMask

__all__ = [
    "CsConfig",
    "CsResult",
    "haar2_forward",
    "haar2_inverse",
    "soft_threshold",
    "tv_prox_q",
    "tv_q",
    "objective_value",
    "cs_reconstruct",
]

_HAAR_LEVELS = 2
_TV_INNER_ITERS = 20
_DESCENT_SLACK = 1e-9
_MAX_BACKTRACKS = 20


@dataclass(frozen=True)
class CsConfig:
    """Solver weights and limits; step is relative to the unit-norm operator."""

    lambda_wavelet: float = 0.0
    lambda_tv: float = 0.0
    max_iters: int = 200
    step: float = 1.0
    tol: float = 1e-6

    def __post_init__(self):
        if self.lambda_wavelet < 0 or self.lambda_tv < 0:
            raise ValueError("regularization weights must be >= 0")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class CsResult:
    """Solver diagnostics: iterations used, objective trace, final change."""

    iterations: int
    objectives: np.ndarray
    final_rel_change: float


def _pad_amounts(n: int, multiple: int) -> tuple[int, int]:
    extra = (-n) % multiple
    return extra // 2, extra - extra // 2


def haar2_forward(arr: np.ndarray, levels: int = _HAAR_LEVELS) -> np.ndarray:
    """Orthonormal 2D Haar transform of the first two axes, packed in place.

    Dims not divisible by 2**levels are zero-padded symmetrically, which
    keeps the transform an isometry; the inverse crops back.
    """
    block = 2**levels
    (px0, px1), (py0, py1) = _pad_amounts(arr.shape[0], block), _pad_amounts(arr.shape[1], block)
    if px0 + px1 + py0 + py1:
        pad = [(px0, px1), (py0, py1)] + [(0, 0)] * (arr.ndim - 2)
        arr = np.pad(arr, pad)
    out = arr.astype(np.complex128, copy=True)
    nx, ny = out.shape[0], out.shape[1]
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for _ in range(levels):
        sub = out[:nx, :ny].copy()
        lo_x = (sub[0:nx:2] + sub[1:nx:2]) * inv_sqrt2
        hi_x = (sub[0:nx:2] - sub[1:nx:2]) * inv_sqrt2
        stacked = np.concatenate([lo_x, hi_x], axis=0)
        lo_y = (stacked[:, 0:ny:2] + stacked[:, 1:ny:2]) * inv_sqrt2
        hi_y = (stacked[:, 0:ny:2] - stacked[:, 1:ny:2]) * inv_sqrt2
        out[:nx, :ny] = np.concatenate([lo_y, hi_y], axis=1)
        nx //= 2
        ny //= 2
    return out


def haar2_inverse(coeffs: np.ndarray, shape: tuple[int, int], levels: int = _HAAR_LEVELS) -> np.ndarray:
    """Invert :func:`haar2_forward`, cropping to the original in-plane shape."""
    out = coeffs.astype(np.complex128, copy=True)
    block = 2**levels
    sizes = [(out.shape[0] // 2**k, out.shape[1] // 2**k) for k in range(levels, 0, -1)]
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for nx2, ny2 in sizes:
        nx, ny = 2 * nx2, 2 * ny2
        sub = out[:nx, :ny].copy()
        lo_y, hi_y = sub[:, :ny2], sub[:, ny2:ny]
        merged = np.empty_like(sub)
        merged[:, 0:ny:2] = (lo_y + hi_y) * inv_sqrt2
        merged[:, 1:ny:2] = (lo_y - hi_y) * inv_sqrt2
        lo_x, hi_x = merged[:nx2], merged[nx2:nx]
        restored = np.empty_like(sub)
        restored[0:nx:2] = (lo_x + hi_x) * inv_sqrt2
        restored[1:nx:2] = (lo_x - hi_x) * inv_sqrt2
        out[:nx, :ny] = restored
    (px0, _), (py0, _) = _pad_amounts(shape[0], block), _pad_amounts(shape[1], block)
    return out[px0 : px0 + shape[0], py0 : py0 + shape[1]]


def _detail_mask(shape: tuple[int, int], levels: int = _HAAR_LEVELS) -> np.ndarray:
    """True on detail coefficients; the final approximation band stays False."""
    mask = np.ones(shape, dtype=bool)
    mask[: shape[0] // 2**levels, : shape[1] // 2**levels] = False
    return mask


def soft_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    """Complex soft threshold: shrink magnitudes by ``threshold``, keep phase."""
    mag = np.abs(values)
    factor = np.maximum(mag - threshold, 0.0)
    out = np.zeros_like(values)
    nz = mag > 0
    out[nz] = values[nz] * (factor[nz] / mag[nz])
    return out


def tv_q(arr: np.ndarray) -> float:
    """Anisotropic total variation along the last (q) axis."""
    if arr.shape[-1] < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(arr, axis=-1))))


def _dual_transpose(p: np.ndarray) -> np.ndarray:
    """Adjoint of the forward difference along the last axis."""
    out = np.empty(p.shape[:-1] + (p.shape[-1] + 1,), dtype=p.dtype)
    out[..., 0] = -p[..., 0]
    out[..., -1] = p[..., -1]
    out[..., 1:-1] = p[..., :-1] - p[..., 1:]
    return out


def tv_prox_q(arr: np.ndarray, weight: float, n_iters: int = _TV_INNER_ITERS) -> np.ndarray:
    """Proximal map of weight * TV along the last axis via dual ascent.

    Runs a fixed number of projected-gradient steps on the dual of every
    1-D voxel chain simultaneously.
    """
    if weight <= 0 or arr.shape[-1] < 2:
        return arr
    p = np.zeros(arr.shape[:-1] + (arr.shape[-1] - 1,), dtype=np.complex128)
    x = np.empty_like(arr)
    step = 1.0 / (4.0 * weight)
    for _ in range(n_iters):
        np.multiply(_dual_transpose(p), -weight, out=x)
        x += arr
        p += step * (x[..., 1:] - x[..., :-1])
        # branchless projection onto the unit-modulus ball
        p /= np.maximum(np.abs(p), 1.0)
    np.multiply(_dual_transpose(p), -weight, out=x)
    x += arr
    return x


def _masked_fft(x: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    return np.where(pattern[:, :, None, :], fft2c(x), 0.0)


def objective_value(
    x: np.ndarray,
    z: np.ndarray,
    mask: SamplingMask,
    cfg: CsConfig,
) -> float:
    """Composite objective at x for measured (masked) k-space z."""
    if x.shape != z.shape:
        raise ValueError(f"image {x.shape} and k-space {z.shape} shapes differ")
    nx, ny, _, nq = x.shape
    if mask.pattern.shape != (nx, ny, nq):
        raise ValueError(
            f"mask pattern {mask.pattern.shape} does not match volume dims {(nx, ny, nq)}"
        )
    residual = _masked_fft(x, mask.pattern) - np.where(mask.pattern[:, :, None, :], z, 0.0)
    value = float(np.sum(np.abs(residual) ** 2))
    if cfg.lambda_wavelet > 0:
        coeffs = haar2_forward(x)
        detail = _detail_mask(coeffs.shape[:2])
        value += cfg.lambda_wavelet * float(np.sum(np.abs(coeffs[detail])))
    if cfg.lambda_tv > 0:
        value += cfg.lambda_tv * tv_q(x)
    return value


def _apply_proxes(v: np.ndarray, cfg: CsConfig, t: float) -> np.ndarray:
    """Sequential proximal steps for the wavelet and TV terms."""
    out = v
    if cfg.lambda_wavelet > 0:
        coeffs = haar2_forward(out)
        detail = _detail_mask(coeffs.shape[:2])
        thresholded = coeffs.copy()
        thresholded[detail] = soft_threshold(coeffs[detail], t * cfg.lambda_wavelet)
        out = haar2_inverse(thresholded, out.shape[:2])
    if cfg.lambda_tv > 0:
        out = tv_prox_q(out, t * cfg.lambda_tv)
    return out


def cs_reconstruct(
    kvol: KSpaceVolume,
    mask: SamplingMask,
    cfg: CsConfig,
    return_info: bool = False,
):
    """Reconstruct the volume from undersampled k-space.

    Accelerated proximal gradient from the zero-filled inverse FFT; momentum
    is dropped and the step halved whenever a candidate would raise the
    objective beyond a small slack, so the objective trace is non-increasing.
    Returns the final iterate regardless of convergence (with diagnostics
    when ``return_info`` is set).
    """
    nx, ny, _, nq = kvol.data.shape
    if mask.pattern.shape != (nx, ny, nq):
        raise ValueError(
            f"mask pattern {mask.pattern.shape} does not match k-space dims {(nx, ny, nq)}"
        )
    pattern = mask.pattern[:, :, None, :]
    z = np.where(pattern, kvol.data, 0.0)

    x = ifft2c(z)
    y = x
    t_mom = 1.0
    objectives = [objective_value(x, z, mask, cfg)]
    final_rel = np.inf
    iterations = 0

    for _ in range(cfg.max_iters):
        iterations += 1
        step = cfg.step
        candidate = None
        for _ in range(_MAX_BACKTRACKS):
            grad = ifft2c(np.where(pattern, fft2c(y), 0.0) - z)
            candidate = _apply_proxes(y - step * grad, cfg, 0.5 * step)
            cand_obj = objective_value(candidate, z, mask, cfg)
            if cand_obj <= objectives[-1] + _DESCENT_SLACK:
                break
            # drop momentum first, then shrink the step
            if y is not x:
                y = x
                t_mom = 1.0
            else:
                step *= 0.5
        else:
            candidate = x
            cand_obj = objectives[-1]

        x_norm = float(np.linalg.norm(x))
        final_rel = float(np.linalg.norm(candidate - x)) / x_norm if x_norm > 0 else np.inf
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
        y = candidate + ((t_mom - 1.0) / t_next) * (candidate - x)
        x = candidate
        t_mom = t_next
        objectives.append(cand_obj)
        if final_rel < cfg.tol:
            break

    volume = DwiVolume(x, kvol.gtab)
    if return_info:
        return volume, CsResult(iterations, np.asarray(objectives), final_rel)
    return volume
