"""Polynomial-kernel PCA with a direct pre-image solver.

The kernel is k(x, y) = (<x, y> + b)^c with offset b >= 0 and integer
degree c >= 1. Principal directions in feature space are found by
eigendecomposing the doubly centered Gram matrix; each eigenvector
v_i = sum_j alpha_ij * phi_centered(x_j) is normalized to unit feature-space
length, i.e. lambda_i * ||alpha_i||^2 = 1.

The pre-image exploits invertibility of the polynomial kernel: from scores
beta we rebuild the uncentered kernel values kappa_j of the projected
feature against every training point, take the real c-th root (nonnegative
root with clamping for even c), subtract b, and solve the resulting linear
system X^T x = s in least squares with a rank-revealing cutoff.

Projection and pre-imaging accept a single profile (nq,) or a batch
(nq, m) and are pure functions of the immutable fitted model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KernelParams",
    "KernelModel",
    "kernel_eval",
    "gram_centered",
    "kpca_fit",
    "kpca_project",
    "preimage",
]

_EIGVAL_REL_CUTOFF = 1e-12
_LSTSQ_RCOND = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """Polynomial kernel parameters: additive offset and integer exponent."""

    offset_b: float = 1.0
    degree_c: int = 2

    def __post_init__(self):
        if self.offset_b < 0:
            raise ValueError(f"offset_b must be >= 0, got {self.offset_b}")
        if not isinstance(self.degree_c, (int, np.integer)) or self.degree_c < 1:
            raise ValueError(f"degree_c must be an integer >= 1, got {self.degree_c!r}")


@dataclass(frozen=True)
class KernelModel:
    """Fitted KPCA state.

    training: (nq, N) matrix whose columns are the (scaled) training
    profiles; alphas: (N, r) eigen-coefficients, one column per retained
    component; eigvals: the r positive eigenvalues, descending;
    gram_row_mean / gram_mean: centering statistics of the training Gram
    matrix; scale: divisor applied to inputs before kernel evaluation (and
    reapplied to pre-images); rank_deficient: True when fewer eigenpairs
    than requested survived the spectral cutoff.
    """

    training: np.ndarray
    params: KernelParams
    alphas: np.ndarray
    eigvals: np.ndarray
    rank_r: int
    gram_row_mean: np.ndarray
    gram_mean: float
    scale: float = 1.0
    rank_deficient: bool = False
    # pseudo-inverse of training^T, precomputed for the pre-image solve
    pinv_xt: np.ndarray = field(repr=False, default=None)

    @property
    def n_train(self) -> int:
        return self.training.shape[1]

    @property
    def nq(self) -> int:
        return self.training.shape[0]


def kernel_eval(x: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    """Evaluate (<x, y> + b)^c for two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"kernel arguments must be equal-length vectors, got {x.shape} and {y.shape}")
    return float((x @ y + params.offset_b) ** params.degree_c)


def _gram(X: np.ndarray, params: KernelParams) -> np.ndarray:
    return (X.T @ X + params.offset_b) ** params.degree_c


def gram_centered(X: np.ndarray, params: KernelParams):
    """Gram matrix of the training columns and its doubly centered form.

    Returns (K, Kc, row_mean, mean): Kc = K - 1K - K1 + 1K1 with
    1 = ones(N, N)/N; row_mean is the vector of column means of K and mean
    the grand mean, both needed to center test-kernel evaluations later.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError(f"training matrix must be (nq, N) with N >= 2, got {X.shape}")
    K = _gram(X, params)
    row_mean = K.mean(axis=0)
    mean = float(K.mean())
    Kc = K - row_mean[None, :] - row_mean[:, None] + mean
    # symmetrize to kill accumulation asymmetry from the matmul
    Kc = 0.5 * (Kc + Kc.T)
    return K, Kc, row_mean, mean


def kpca_fit(
    X: np.ndarray,
    params: KernelParams,
    rank_r: int,
    scale: float | None = None,
) -> KernelModel:
    """Fit KPCA on the columns of X, retaining the top rank_r eigenpairs.

    Eigenvalues below max(eigval) * 1e-12 are dropped; if that leaves fewer
    than rank_r components the model is returned at the reduced rank with
    ``rank_deficient=True`` and a warning. ``scale`` divides the training
    data before kernel evaluation (callers typically pass the median column
    norm so the Gram dynamic range stays tame); pre-images are mapped back
    to original units.

    Each eigenvector's sign is fixed by making its largest-magnitude
    coefficient positive, so refits are bit-reproducible.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"training matrix must be 2D (nq, N), got {X.shape}")
    n_train = X.shape[1]
    if not 1 <= rank_r <= n_train:
        raise ValueError(f"rank_r must lie in [1, {n_train}], got {rank_r}")
    if not np.all(np.isfinite(X)):
        raise ValueError("training matrix contains NaN or Inf")
    if scale is None:
        scale = 1.0
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")

    Xs = X / scale
    _, Kc, row_mean, mean = gram_centered(Xs, params)
    eigvals, eigvecs = np.linalg.eigh(Kc)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    if eigvals[0] <= 0:
        raise ValueError("centered kernel matrix has no positive eigenvalue; training data are degenerate")
    keep = eigvals > eigvals[0] * _EIGVAL_REL_CUTOFF
    n_keep = int(np.count_nonzero(keep[:rank_r]))
    rank_deficient = n_keep < rank_r
    if rank_deficient:
        warnings.warn(
            f"requested rank {rank_r} but only {n_keep} eigenvalues exceed the "
            f"spectral cutoff; model fit at rank {n_keep}",
            stacklevel=2,
        )

    lam = eigvals[:n_keep]
    vecs = eigvecs[:, :n_keep]
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(n_keep)] < 0
    vecs = np.where(flip[None, :], -vecs, vecs)
    alphas = vecs / np.sqrt(lam)[None, :]

    pinv_xt = np.linalg.pinv(Xs.T, rcond=_LSTSQ_RCOND)
    return KernelModel(
        training=Xs,
        params=params,
        alphas=alphas,
        eigvals=lam,
        rank_r=n_keep,
        gram_row_mean=row_mean,
        gram_mean=mean,
        scale=float(scale),
        rank_deficient=rank_deficient,
        pinv_xt=pinv_xt,
    )


def _col(v: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape a length-N vector so it broadcasts over batched columns."""
    return v if ndim == 1 else v[:, None]


def kpca_project(model: KernelModel, x: np.ndarray) -> np.ndarray:
    """Scores of profile(s) on the retained feature-space principal directions.

    x may be a single profile (nq,) or a batch (nq, m); the result has shape
    (rank_r,) or (rank_r, m) accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.nq:
        raise ValueError(f"profile length {x.shape[0]} does not match model nq={model.nq}")
    k = (model.training.T @ (x / model.scale) + model.params.offset_b) ** model.params.degree_c
    # beta = alphas^T k_centered, with the centering folded into small vectors:
    # alphas^T (k - 1*colmean(k) - row_mean*1 + mean*1)
    alpha_sum = model.alphas.sum(axis=0)
    const = model.gram_mean * alpha_sum - model.alphas.T @ model.gram_row_mean
    beta = model.alphas.T @ k
    if k.ndim > 1:
        beta -= np.multiply.outer(alpha_sum, k.mean(axis=0))
    else:
        beta -= alpha_sum * k.mean()
    beta += _col(const, beta.ndim)
    return beta


def preimage(
    model: KernelModel,
    beta: np.ndarray,
    return_clamp_count: bool = False,
):
    """Map feature-space scores back to input-space profile(s).

    beta may be (rank_r,) or (rank_r, m). For even kernel degree, negative
    reconstructed kernel values are clamped to zero before rooting; the
    number of clamped entries is a diagnostic available via
    ``return_clamp_count=True``, never an error.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape[0] != model.rank_r:
        raise ValueError(f"beta length {beta.shape[0]} does not match model rank {model.rank_r}")
    if not np.any(np.abs(model.training) > 0):
        raise ValueError("training matrix is numerically zero; pre-image is undefined")

    b = model.params.offset_b
    c = model.params.degree_c

    # uncentered kernel values of the projected feature against training:
    # kappa = (alphas*lambda) beta + [(row_mean - mean)^T alphas] beta + row_mean,
    # where the middle term comes from the feature-expansion coefficients
    # alphas @ beta of the projected point (folded into an r-vector).
    mean_weights = (model.gram_row_mean - model.gram_mean) @ model.alphas
    kappa = (model.alphas * model.eigvals) @ beta
    kappa += mean_weights @ beta
    kappa += _col(model.gram_row_mean, kappa.ndim)

    n_clamped = 0
    if c % 2 == 0:
        n_clamped = int(np.count_nonzero(kappa < 0))
        np.maximum(kappa, 0.0, out=kappa)
        rooted = np.sqrt(kappa) if c == 2 else kappa ** (1.0 / c)
    elif c == 1:
        rooted = kappa
    elif c == 3:
        rooted = np.cbrt(kappa)
    else:
        rooted = np.copysign(np.abs(kappa) ** (1.0 / c), kappa)
    s = rooted - b

    x_hat = model.scale * (model.pinv_xt @ s)
    if return_clamp_count:
        return x_hat, n_clamped
    return x_hat
