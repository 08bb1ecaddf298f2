"""Reconstruction quality metrics and the method-comparison benchmark grid.

NMSE and PSNR are computed on voxel magnitudes; FA and MD accuracy is
summarized as histograms of absolute per-voxel errors over the foreground,
always against maps derived from the fully sampled reference volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DwiVolume, KSpaceVolume, ifft2_per_slice
from .cs import CsConfig, cs_reconstruct
from .dti import TensorMap, fit_tensor_volume, foreground_mask
from .klr import KlrConfig, klr_reconstruct_volume
from .kpca import KernelParams
from .sampling import QSubset, SamplingMask, apply_undersampling, select_q_subset

__all__ = [
    "Histogram",
    "MetricsReport",
    "BenchmarkConfig",
    "nmse",
    "psnr",
    "map_error_histogram",
    "benchmark",
    "reports_to_csv",
    "histogram_to_csv",
]

PSNR_CAP_DB = 300.0
_DEFAULT_BINS = 32


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin histogram: n+1 edges and n counts."""

    edges: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    """One benchmark grid cell: method x acceleration factor x q-mode."""

    method: str
    af: float
    q_mode: str
    nmse: float
    psnr_db: float
    fa_err_hist: Histogram | None = None
    md_err_hist: Histogram | None = None


def _magnitude_pair(reference: DwiVolume, test: DwiVolume):
    if reference.data.shape != test.data.shape:
        raise ValueError(
            f"volume shapes differ: {reference.data.shape} vs {test.data.shape}"
        )
    ref = np.abs(reference.data)
    if not np.any(ref > 0):
        raise ValueError("reference volume is all zero")
    return ref, np.abs(test.data)


def nmse(reference: DwiVolume, test: DwiVolume) -> float:
    """Normalized mean squared magnitude error: ||ref - test||^2 / ||ref||^2."""
    ref, tst = _magnitude_pair(reference, test)
    return float(np.sum((ref - tst) ** 2) / np.sum(ref**2))


def psnr(reference: DwiVolume, test: DwiVolume) -> float:
    """Peak signal-to-noise ratio in dB; exact equality is capped at 300 dB.

    The peak is the reference maximum magnitude, so the metric depends on
    the test volume only through the MSE.
    """
    ref, tst = _magnitude_pair(reference, test)
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0:
        return PSNR_CAP_DB
    value = 10.0 * np.log10(float(ref.max()) ** 2 / mse)
    return float(min(value, PSNR_CAP_DB))


def map_error_histogram(
    ref_map: np.ndarray,
    test_map: np.ndarray,
    foreground: np.ndarray,
    n_bins: int = _DEFAULT_BINS,
) -> Histogram:
    """Histogram of absolute per-voxel errors over the foreground.

    Bins are uniform on [0, max observed error]; counts sum to the number of
    foreground voxels.
    """
    ref_map = np.asarray(ref_map, dtype=np.float64)
    test_map = np.asarray(test_map, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=bool)
    if ref_map.shape != test_map.shape or ref_map.shape != foreground.shape:
        raise ValueError("map and foreground shapes must match")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    errors = np.abs(ref_map[foreground] - test_map[foreground])
    if errors.size == 0:
        raise ValueError("foreground is empty")
    top = float(errors.max())
    if top == 0:
        top = 1.0
    counts, edges = np.histogram(errors, bins=n_bins, range=(0.0, top))
    return Histogram(edges=edges, counts=counts)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Grid parameters shared by every cell.

    The CS baseline is reported at its best (lowest-NMSE) weight pair from
    the given grids, scaled by the max magnitude of each cell's measured
    k-space. ``q_fraction`` sets how many gradient directions the subset
    mode keeps (b0 entries always survive).
    """

    klr: KlrConfig = field(
        default_factory=lambda: KlrConfig(n_train=1200, rank_r=7, max_iters=40, tol=3e-4)
    )
    cs_lambda_w_grid: tuple[float, ...] = (0.0, 1e-3)
    cs_lambda_tv_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    cs_max_iters: int = 30
    cs_tol: float = 3e-4
    q_fraction: float = 0.5
    qsubset_seed: int = 0
    mask_center_radius: float = 0.08
    mask_decay: float = 3.0
    n_bins: int = _DEFAULT_BINS


def _subset_for(gtab, config: BenchmarkConfig) -> QSubset:
    n_b0 = int(gtab.b0_indices.size)
    n_grad = gtab.nq - n_b0
    nq_sub = n_b0 + max(1, round(config.q_fraction * n_grad))
    return select_q_subset(gtab, nq_sub, seed=config.qsubset_seed)


def _best_cs(kvol, mask, config: BenchmarkConfig, reference) -> tuple[DwiVolume, float, float]:
    scale = float(np.abs(kvol.data).max())
    best = None
    for lw in config.cs_lambda_w_grid:
        for ltv in config.cs_lambda_tv_grid:
            cfg = CsConfig(
                lambda_wavelet=lw * scale,
                lambda_tv=ltv * scale,
                max_iters=config.cs_max_iters,
                tol=config.cs_tol,
            )
            recon = cs_reconstruct(kvol, mask, cfg)
            err = nmse(reference, recon)
            if best is None or err < best[1]:
                best = (recon, err, (lw, ltv))
    return best[0], best[1], best[2]


def _reconstruct(method: str, kvol, mask, config: BenchmarkConfig, reference):
    if method == "zero-fill":
        return ifft2_per_slice(kvol)
    if method == "cs":
        recon, _, _ = _best_cs(kvol, mask, config, reference)
        return recon
    if method == "klr":
        return klr_reconstruct_volume(kvol, mask, config.klr)
    raise ValueError(f"unknown method {method!r}")


def benchmark(
    truth: DwiVolume,
    kspace: KSpaceVolume,
    masks: list[SamplingMask],
    q_modes: tuple[str, ...] = ("full", "subset"),
    methods: tuple[str, ...] = ("zero-fill", "cs", "klr"),
    config: BenchmarkConfig | None = None,
    return_volumes: bool = False,
):
    """Run every (mask, q_mode, method) cell and report NMSE/PSNR/FA/MD errors.

    DWI metrics in subset mode are computed on the retained directions; the
    FA/MD reference maps always come from the fully sampled truth volume.
    Deterministic for fixed inputs and seeds.
    """
    config = config or BenchmarkConfig()
    truth_map = fit_tensor_volume(truth)
    fg = foreground_mask(truth, mode="b0")

    reports = []
    volumes = {}
    for mask in masks:
        for q_mode in q_modes:
            if q_mode == "full":
                cell_mask = mask
                cell_kvol = apply_undersampling(kspace, mask)
                reference = truth
            elif q_mode == "subset":
                qsub = _subset_for(truth.gtab, config)
                cell_mask = SamplingMask(
                    mask.pattern[:, :, qsub.indices],
                    mask.af_target,
                    mask.center_radius,
                    mask.seed,
                )
                cell_kvol = apply_undersampling(kspace, cell_mask, qsub)
                reference = DwiVolume(
                    truth.data[:, :, :, qsub.indices], truth.gtab.subset(qsub.indices)
                )
            else:
                raise ValueError(f"unknown q_mode {q_mode!r}")

            for method in methods:
                recon = _reconstruct(method, cell_kvol, cell_mask, config, reference)
                recon_map = fit_tensor_volume(recon)
                report = MetricsReport(
                    method=method,
                    af=float(mask.af_target),
                    q_mode=q_mode,
                    nmse=nmse(reference, recon),
                    psnr_db=psnr(reference, recon),
                    fa_err_hist=map_error_histogram(
                        truth_map.fa, recon_map.fa, fg, config.n_bins
                    ),
                    md_err_hist=map_error_histogram(
                        truth_map.md, recon_map.md, fg, config.n_bins
                    ),
                )
                reports.append(report)
                if return_volumes:
                    volumes[(method, float(mask.af_target), q_mode)] = recon

    if return_volumes:
        return reports, volumes
    return reports


def reports_to_csv(reports) -> str:
    """CSV with one row per grid cell: method,af,q_mode,nmse,psnr_db."""
    lines = ["method,af,q_mode,nmse,psnr_db"]
    for r in reports:
        lines.append(f"{r.method},{r.af:g},{r.q_mode},{r.nmse:.12e},{r.psnr_db:.12e}")
    return "\n".join(lines) + "\n"


def histogram_to_csv(hist: Histogram) -> str:
    """CSV with one row per bin: bin_lo,bin_hi,count."""
    lines = ["bin_lo,bin_hi,count"]
    for lo, hi, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
        lines.append(f"{lo:.12e},{hi:.12e},{int(count)}")
    return "\n".join(lines) + "\n"
