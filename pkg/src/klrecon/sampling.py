"""Retrospective undersampling: k-space masks and q-space direction subsets.

Variable-density masks keep a fully sampled central disk and sample the
outer k-space from a radially decaying density p(r) ~ (1 - r)^decay, with
a global density scale calibrated by bisection until the achieved
acceleration factor lands within +-10% of the request. Q-space subsets keep
every b0 entry and pick gradient directions by greedy angular-coverage
maximization (antipodal directions treated as identical).

All generation is a pure function of its arguments; randomness comes from a
local seeded generator, never global state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GradientTable, KSpaceVolume, VolumeShape

__all__ = [
    "SamplingMask",
    "QSubset",
    "generate_vd_mask",
    "select_q_subset",
    "apply_undersampling",
]

_AF_TOL = 0.10
_BISECT_STEPS = 50


@dataclass(frozen=True)
class SamplingMask:
    """Per-direction boolean k-space pattern with acceleration metadata.

    pattern has shape (nx, ny, nq): True marks acquired locations. The
    central disk of normalized radius ``center_radius`` (fraction of
    min(nx, ny)/2, around the array center) is always fully sampled.
    """

    pattern: np.ndarray
    af_target: float
    center_radius: float
    seed: int

    def __post_init__(self):
        pattern = np.asarray(self.pattern, dtype=bool)
        if pattern.ndim != 3:
            raise ValueError(f"mask pattern must be (nx, ny, nq), got {pattern.shape}")
        object.__setattr__(self, "pattern", pattern)

    @property
    def achieved_af(self) -> float:
        return self.pattern.size / int(self.pattern.sum())

    @property
    def sampled_fraction(self) -> float:
        return int(self.pattern.sum()) / self.pattern.size


@dataclass(frozen=True)
class QSubset:
    """Sorted subset of gradient-table indices; every b0 index is retained."""

    indices: np.ndarray
    nq_full: int
    nq_sub: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.shape[0] != self.nq_sub:
            raise ValueError("indices length must equal nq_sub")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("indices must be strictly increasing")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.nq_full):
            raise ValueError("indices out of range")
        object.__setattr__(self, "indices", idx)


def _center_distance_grid(nx: int, ny: int) -> np.ndarray:
    """Pixel distance to the array center (nx//2, ny//2), normalized by min/2."""
    dx = np.arange(nx)[:, None] - nx // 2
    dy = np.arange(ny)[None, :] - ny // 2
    half = min(nx, ny) / 2.0
    return np.hypot(dx, dy) / half


def _calibrate_plane(
    uniforms: np.ndarray,
    base_density: np.ndarray,
    center: np.ndarray,
    target_true: float,
) -> np.ndarray:
    """Bisect a global scale on the density until the sample count hits target."""
    n_center = int(center.sum())

    def count_true(scale: float) -> int:
        return n_center + int(np.count_nonzero(~center & (uniforms < scale * base_density)))

    lo, hi = 0.0, 1.0
    while count_true(hi) < target_true and hi < 1e12:
        hi *= 2.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if count_true(mid) < target_true:
            lo = mid
        else:
            hi = mid
    # hi is the smallest probed scale reaching the target count
    best = hi if abs(count_true(hi) - target_true) <= abs(count_true(lo) - target_true) else lo
    return center | (~center & (uniforms < best * base_density))


def generate_vd_mask(
    shape: VolumeShape,
    af_target: float,
    center_radius: float = 0.08,
    decay: float = 3.0,
    seed: int = 0,
    per_direction: bool = False,
) -> SamplingMask:
    """Variable-density in-plane mask, one plane per diffusion direction.

    By default the same in-plane pattern is reused for every q; with
    ``per_direction=True`` an independent pattern is drawn per direction.
    The achieved acceleration factor is calibrated to within +-10% of
    ``af_target``; an infeasible request raises ValueError naming the
    achievable bound.
    """
    if af_target < 1:
        raise ValueError(f"af_target must be >= 1, got {af_target}")
    if not (0 < center_radius < 0.5):
        raise ValueError(f"center_radius must lie in (0, 0.5), got {center_radius}")
    if decay <= 0:
        raise ValueError(f"decay must be > 0, got {decay}")

    nx, ny, nq = shape.nx, shape.ny, shape.nq
    if af_target == 1:
        pattern = np.ones((nx, ny, nq), dtype=bool)
        return SamplingMask(pattern, float(af_target), center_radius, seed)

    r = _center_distance_grid(nx, ny)
    center = r <= center_radius
    # density vanishes outside the inscribed circle; the center disk is forced
    base = np.where((r > center_radius) & (r < 1.0), np.maximum(1.0 - r, 0.0) ** decay, 0.0)

    n_plane = nx * ny
    n_center = int(center.sum())
    target_true = n_plane / af_target
    if n_center > target_true:
        raise ValueError(
            f"af_target={af_target:g} infeasible: the fully sampled center disk "
            f"({n_center} samples) caps the acceleration factor at "
            f"{n_plane / n_center:.2f}"
        )
    n_reachable = n_center + int(np.count_nonzero(base > 0))
    if target_true > n_reachable:
        raise ValueError(
            f"af_target={af_target:g} infeasible: at most {n_reachable} of {n_plane} "
            f"locations can be sampled (minimum achievable AF "
            f"{n_plane / n_reachable:.2f})"
        )

    rng = np.random.default_rng(seed)
    if per_direction:
        planes = []
        for _ in range(nq):
            uniforms = rng.random((nx, ny))
            planes.append(_calibrate_plane(uniforms, base, center, target_true))
        pattern = np.stack(planes, axis=-1)
    else:
        uniforms = rng.random((nx, ny))
        plane = _calibrate_plane(uniforms, base, center, target_true)
        pattern = np.repeat(plane[:, :, None], nq, axis=2)

    mask = SamplingMask(pattern, float(af_target), center_radius, seed)
    if abs(mask.achieved_af - af_target) > _AF_TOL * af_target:
        raise ValueError(
            f"calibration failed: achieved AF {mask.achieved_af:.2f} outside "
            f"+-10% of target {af_target:g}"
        )
    return mask


def _pairwise_min_angle(candidate: np.ndarray, chosen: np.ndarray) -> float:
    """Smallest angular distance (antipodally symmetric) to any chosen direction."""
    cosines = np.clip(np.abs(chosen @ candidate), 0.0, 1.0)
    return float(np.min(np.arccos(cosines)))


def select_q_subset(gtab: GradientTable, nq_sub: int, seed: int = 0) -> QSubset:
    """Pick nq_sub q-space entries: all b0 images plus a well-spread direction set.

    Gradient directions are chosen greedily: the first pick is seeded-random,
    each later pick maximizes the minimum angular distance (g and -g
    identified) to the directions already chosen. Ties break on the lowest
    index, so the result is deterministic for a fixed seed.
    """
    b0_idx = gtab.b0_indices
    grad_idx = np.flatnonzero(~gtab.b0_mask)
    if nq_sub < b0_idx.size:
        raise ValueError(
            f"nq_sub={nq_sub} is below the number of b0 entries ({b0_idx.size})"
        )
    if nq_sub > gtab.nq:
        raise ValueError(f"nq_sub={nq_sub} exceeds nq={gtab.nq}")
    if nq_sub == gtab.nq:
        return QSubset(np.arange(gtab.nq), gtab.nq, nq_sub)

    n_pick = nq_sub - b0_idx.size
    chosen: list[int] = []
    if n_pick > 0:
        rng = np.random.default_rng(seed)
        dirs = gtab.directions
        remaining = list(grad_idx)
        first = remaining[int(rng.integers(len(remaining)))]
        chosen.append(first)
        remaining.remove(first)
        while len(chosen) < n_pick:
            chosen_dirs = dirs[chosen]
            scores = [_pairwise_min_angle(dirs[i], chosen_dirs) for i in remaining]
            best = remaining[int(np.argmax(scores))]
            chosen.append(best)
            remaining.remove(best)

    indices = np.sort(np.concatenate([b0_idx, np.asarray(chosen, dtype=int)]))
    return QSubset(indices.astype(int), gtab.nq, nq_sub)


def apply_undersampling(
    kspace: KSpaceVolume,
    mask: SamplingMask,
    qsub: QSubset | None = None,
) -> KSpaceVolume:
    """Zero out unacquired k-space; optionally drop q entries first.

    Retained entries are bit-identical to the input; masked-out entries are
    exactly complex zero. Idempotent for a fixed mask.
    """
    data = kspace.data
    gtab = kspace.gtab
    if qsub is not None:
        if qsub.nq_full != gtab.nq:
            raise ValueError(
                f"q subset was built for nq={qsub.nq_full}, volume has nq={gtab.nq}"
            )
        data = data[:, :, :, qsub.indices]
        gtab = gtab.subset(qsub.indices)

    nx, ny, _, nq = data.shape
    if mask.pattern.shape != (nx, ny, nq):
        raise ValueError(
            f"mask pattern {mask.pattern.shape} does not match k-space "
            f"in-plane/q dims {(nx, ny, nq)}"
        )
    masked = np.where(mask.pattern[:, :, None, :], data, 0.0 + 0.0j)
    return KSpaceVolume(masked, gtab)
