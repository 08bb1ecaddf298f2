import itertools

import numpy as np
import pytest

from klrecon.kpca import (
    KernelParams,
    gram_centered,
    kernel_eval,
    kpca_fit,
    kpca_project,
    preimage,
)


def quadratic_feature_map(X, offset_b):
    """Explicit feature map for (<x,y> + b)^2: the independent oracle."""
    d, n = X.shape
    rows = []
    for j in range(n):
        x = X[:, j]
        row = list(x**2)
        row += [np.sqrt(2.0) * x[i] * x[k] for i, k in itertools.combinations(range(d), 2)]
        row += list(np.sqrt(2.0 * offset_b) * x)
        row.append(offset_b)
        rows.append(row)
    return np.array(rows).T


class TestKernelEval:
    def test_zero_vectors_offset_one_squared(self):
        assert kernel_eval(np.zeros(2), np.zeros(2), KernelParams(1.0, 2)) == 1.0

    def test_plain_dot_product(self):
        assert kernel_eval(np.array([1.0, 2.0]), np.array([3.0, 4.0]), KernelParams(0.0, 1)) == 11.0

    def test_cubic_hand_oracle(self):
        # (<(1,1),(2,0)> + 1)^3 = (2 + 1)^3 = 27
        assert kernel_eval(np.array([1.0, 1.0]), np.array([2.0, 0.0]), KernelParams(1.0, 3)) == 27.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(np.zeros(2), np.zeros(3), KernelParams(1.0, 2))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            KernelParams(-1.0, 2)
        with pytest.raises(ValueError):
            KernelParams(1.0, 0)


class TestGramCentered:
    def test_identical_vectors_center_to_zero(self):
        X = np.ones((3, 2))
        _, Kc, _, _ = gram_centered(X, KernelParams(1.0, 2))
        assert np.abs(Kc).max() < 1e-12

    def test_linear_kernel_matches_mean_subtracted_gram(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((4, 6))
        _, Kc, _, _ = gram_centered(X, KernelParams(0.0, 1))
        Xc = X - X.mean(axis=1, keepdims=True)
        oracle = Xc.T @ Xc
        assert np.abs(Kc - oracle).max() < 1e-10

    def test_row_sums_vanish(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((5, 8))
        K, Kc, _, _ = gram_centered(X, KernelParams(1.0, 2))
        assert np.abs(Kc.sum(axis=0)).max() < 1e-8 * np.abs(K).max()

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((4, 7))
        _, Kc, _, _ = gram_centered(X, KernelParams(0.5, 3))
        assert np.abs(Kc - Kc.T).max() < 1e-10
        eigvals = np.linalg.eigvalsh(Kc)
        assert eigvals.min() >= -1e-8 * eigvals.max()

    def test_rejects_single_column(self):
        with pytest.raises(ValueError):
            gram_centered(np.ones((3, 1)), KernelParams(1.0, 2))


class TestKpcaFit:
    def test_quadratic_feature_map_oracle(self):
        rng = np.random.default_rng(3)
        for d, n in [(2, 5), (3, 8), (4, 10)]:
            X = rng.standard_normal((d, n))
            params = KernelParams(1.0, 2)
            feats = quadratic_feature_map(X, 1.0)
            centered = feats - feats.mean(axis=1, keepdims=True)
            oracle = np.linalg.eigvalsh(centered @ centered.T)[::-1]
            oracle = oracle[oracle > oracle[0] * 1e-10]
            model = kpca_fit(X, params, rank_r=min(len(oracle), n))
            got = model.eigvals[: len(oracle)]
            rel = np.abs(got - oracle[: len(got)]) / oracle[: len(got)]
            assert rel.max() < 1e-8

    def test_rank_deficiency_reduces_rank_with_warning(self):
        rng = np.random.default_rng(4)
        basis = rng.standard_normal((5, 2))
        weights = rng.standard_normal((2, 9))
        X = basis @ weights  # 2D subspace before mean removal
        with pytest.warns(UserWarning, match="rank"):
            model = kpca_fit(X, KernelParams(0.0, 1), rank_r=3)
        assert model.rank_r == 2
        assert model.rank_deficient

    def test_deterministic_with_sign_convention(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((4, 9))
        params = KernelParams(1.0, 2)
        a = kpca_fit(X, params, rank_r=4)
        b = kpca_fit(X, params, rank_r=4)
        assert np.array_equal(a.eigvals, b.eigvals)
        assert np.array_equal(a.alphas, b.alphas)
        for i in range(a.rank_r):
            col = a.alphas[:, i]
            assert col[np.argmax(np.abs(col))] > 0

    def test_feature_space_normalization(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((5, 10))
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=6)
        norm = model.eigvals * np.sum(model.alphas**2, axis=0)
        assert np.abs(norm - 1.0).max() < 1e-8

    def test_eigvals_descending_positive(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((4, 8))
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=5)
        assert np.all(model.eigvals > 0)
        assert np.all(np.diff(model.eigvals) <= 0)

    def test_permutation_invariance_of_spectrum(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((4, 9))
        perm = rng.permutation(9)
        a = kpca_fit(X, KernelParams(1.0, 2), rank_r=5)
        b = kpca_fit(X[:, perm], KernelParams(1.0, 2), rank_r=5)
        rel = np.abs(a.eigvals - b.eigvals) / a.eigvals
        assert rel.max() < 1e-9

    def test_scaling_property_linear_offset_zero(self):
        rng = np.random.default_rng(9)
        X = np.abs(rng.standard_normal((4, 9))) + 0.1
        for c in (1, 2):
            params = KernelParams(0.0, c)
            base = kpca_fit(X, params, rank_r=3)
            scaled = kpca_fit(3.0 * X, params, rank_r=3)
            rel = np.abs(scaled.eigvals - 3.0 ** (2 * c) * base.eigvals) / scaled.eigvals
            assert rel.max() < 1e-9
            # normalized alpha subspaces unchanged
            qa, _ = np.linalg.qr(base.alphas)
            qb, _ = np.linalg.qr(scaled.alphas)
            s = np.linalg.svd(qa.T @ qb, compute_uv=False)
            angles = np.arccos(np.clip(s, 0, 1))
            assert angles.max() < 1e-6

    def test_rank_bounds_enforced(self):
        X = np.random.default_rng(10).standard_normal((3, 5))
        with pytest.raises(ValueError):
            kpca_fit(X, KernelParams(1.0, 2), rank_r=0)
        with pytest.raises(ValueError):
            kpca_fit(X, KernelParams(1.0, 2), rank_r=6)


class TestKpcaProject:
    def test_training_vector_preserves_feature_norm_at_full_rank(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((4, 6))
        params = KernelParams(1.0, 2)
        model = kpca_fit(X, params, rank_r=6)
        _, Kc, _, _ = gram_centered(X, params)
        for j in range(6):
            beta = kpca_project(model, X[:, j])
            assert abs(np.sum(beta**2) - Kc[j, j]) < 1e-8 * max(Kc[j, j], 1.0)

    def test_linear_kernel_matches_pca_scores(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((5, 12))
        model = kpca_fit(X, KernelParams(0.0, 1), rank_r=3)
        xbar = X.mean(axis=1)
        u, s, _ = np.linalg.svd(X - xbar[:, None], full_matrices=False)
        x = rng.standard_normal(5)
        beta = kpca_project(model, x)
        oracle = u[:, :3].T @ (x - xbar)
        # eigenvector sign is a convention; compare up to per-component sign
        assert np.abs(np.abs(beta) - np.abs(oracle)).max() < 1e-8

    def test_training_mean_maps_to_zero_scores(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((5, 9))
        model = kpca_fit(X, KernelParams(0.0, 1), rank_r=4)
        beta = kpca_project(model, X.mean(axis=1))
        assert np.abs(beta).max() < 1e-8

    def test_length_mismatch(self):
        X = np.random.default_rng(14).standard_normal((4, 6))
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=3)
        with pytest.raises(ValueError):
            kpca_project(model, np.zeros(5))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((4, 8))
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=4)
        batch = rng.standard_normal((4, 5))
        together = kpca_project(model, batch)
        separate = np.stack([kpca_project(model, batch[:, i]) for i in range(5)], axis=1)
        assert np.abs(together - separate).max() < 1e-12


class TestPreimage:
    def test_training_round_trip_full_rank_odd_degree(self):
        rng = np.random.default_rng(16)
        X = np.abs(rng.standard_normal((5, 10))) + 0.2
        model = kpca_fit(X, KernelParams(1.0, 3), rank_r=10)
        for j in range(10):
            x = X[:, j]
            x_hat = preimage(model, kpca_project(model, x))
            assert np.linalg.norm(x_hat - x) / np.linalg.norm(x) < 1e-6

    def test_training_round_trip_even_degree(self):
        rng = np.random.default_rng(17)
        X = np.abs(rng.standard_normal((5, 9))) + 0.2
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=9)
        for j in range(9):
            x = X[:, j]
            x_hat = preimage(model, kpca_project(model, x))
            assert np.linalg.norm(x_hat - x) / np.linalg.norm(x) < 1e-6

    def test_linear_reduced_rank_equals_pca_projection_oracle(self):
        rng = np.random.default_rng(18)
        X = rng.standard_normal((6, 15))
        r = 3
        model = kpca_fit(X, KernelParams(0.0, 1), rank_r=r)
        xbar = X.mean(axis=1)
        u, _, _ = np.linalg.svd(X - xbar[:, None], full_matrices=False)
        w = u[:, :r]
        for x in [X[:, 2], rng.standard_normal(6)]:
            expected = xbar + w @ (w.T @ (x - xbar))
            got = preimage(model, kpca_project(model, x))
            assert np.linalg.norm(got - expected) < 1e-8

    def test_zero_scores_map_to_training_mean(self):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((5, 9))
        model = kpca_fit(X, KernelParams(0.0, 1), rank_r=3)
        x_hat = preimage(model, np.zeros(3))
        assert np.linalg.norm(x_hat - X.mean(axis=1)) < 1e-8

    def test_project_preimage_idempotent_without_clamping(self):
        rng = np.random.default_rng(20)
        X = np.abs(rng.standard_normal((5, 10))) + 0.3
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=4)
        x = np.abs(rng.standard_normal(5)) + 0.3
        beta = kpca_project(model, x)
        x_hat, n_clamped = preimage(model, beta, return_clamp_count=True)
        assert n_clamped == 0
        beta2 = kpca_project(model, x_hat)
        assert np.abs(beta2 - beta).max() / np.abs(beta).max() < 1e-6

    def test_clamp_count_reported_for_even_degree(self):
        rng = np.random.default_rng(21)
        X = np.abs(rng.standard_normal((4, 8))) + 0.2
        model = kpca_fit(X, KernelParams(0.0, 2), rank_r=4)
        # scores far outside the training cloud force negative kernel values
        wild = 100.0 * np.ones(model.rank_r)
        _, n_clamped = preimage(model, wild, return_clamp_count=True)
        assert n_clamped > 0

    def test_degenerate_training_rejected(self):
        X = np.abs(np.random.default_rng(22).standard_normal((4, 6))) + 0.2
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=3)
        degenerate = model.__class__(
            training=np.zeros_like(model.training),
            params=model.params,
            alphas=model.alphas,
            eigvals=model.eigvals,
            rank_r=model.rank_r,
            gram_row_mean=model.gram_row_mean,
            gram_mean=model.gram_mean,
            scale=model.scale,
            pinv_xt=model.pinv_xt,
        )
        with pytest.raises(ValueError, match="zero"):
            preimage(degenerate, np.zeros(model.rank_r))

    def test_beta_length_mismatch(self):
        X = np.random.default_rng(23).standard_normal((4, 6))
        model = kpca_fit(X, KernelParams(1.0, 2), rank_r=3)
        with pytest.raises(ValueError):
            preimage(model, np.zeros(5))
