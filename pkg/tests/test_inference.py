import numpy as np
import pytest

from wfpc import dgp, inference, pc, rotation
from wfpc.errors import DesignError, NumericalDegeneracyError

# quantiles computed independently by inverting the regularized incomplete
# gamma with mpmath at 30 digits (and, for r = 2, the closed form -2 ln(1-p))
CHI2_2_95 = 5.99146454710798198687044715229
CHI2_1_50 = 0.45493642311957275194251664698
CHI2_3_99 = 11.3448667301443719313147199749
Z_975 = 1.95996398454005423552459443052


def reference_fit(T=80, N=60, seed=5, sigma_e=np.sqrt(0.5)):
    d = dgp.FactorDesign(
        T=T, N=N, r=2, alphas=(1.0, 0.9), mu=(1.0, 1.0), sigma_e=sigma_e,
        structural_H=[[1.0, 0.5], [0.5, 2.0]], seed=seed,
    )
    panel = dgp.assemble_panel(d)
    fit = rotation.align_to_reference(pc.pc_fit(panel.X, 2), panel.F0)
    return d, panel, fit


def synthetic_fit(F, B, E):
    """PcFit-shaped container with hand-chosen pieces."""
    lam = np.diag(B.T @ B).copy()
    return pc.PcFit(
        F_hat=F, B_hat=B, lambda_hat=lam, E_hat=E, C_hat=F @ B.T, r=F.shape[1]
    )


class TestGammaHat:
    def test_constant_residuals_give_exact_identity_sandwich(self):
        rng = np.random.default_rng(0)
        T, N, sigma = 20, 10, 0.7
        Q, _ = np.linalg.qr(rng.standard_normal((T, 2)))
        F = np.sqrt(T) * Q
        Bq, _ = np.linalg.qr(rng.standard_normal((N, 2)))
        B = Bq * np.array([3.0, 2.0])
        fit = synthetic_fit(F, B, np.full((T, N), sigma))
        cov = inference.gamma_hat(fit, 1)
        assert np.abs(cov.Gamma - sigma**2 * np.eye(2)).max() < 1e-12

    def test_plugin_concentrates_on_noise_level(self):
        # seeded replication at N = T = 200 with noise variance 0.5
        _, _, fit = reference_fit(T=200, N=200, seed=2024)
        devs = [
            np.abs(inference.gamma_hat(fit, t).Gamma - 0.5 * np.eye(2)).max()
            for t in range(1, 201)
        ]
        assert np.mean(devs) < 0.15

    def test_single_unit_panel_rank_one_psd(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((30, 1)) * 2.0
        fit = pc.pc_fit(X, 1)
        cov = inference.gamma_hat(fit, 3)
        assert cov.Gamma.shape == (1, 1) and cov.Gamma[0, 0] >= 0

    def test_time_index_validated(self):
        _, _, fit = reference_fit()
        with pytest.raises(DesignError):
            inference.gamma_hat(fit, 0)
        with pytest.raises(DesignError):
            inference.gamma_hat(fit, fit.T + 1)

    def test_oracle_and_plugin_agree_on_the_same_inputs(self):
        # feeding the true errors and true (F0, B0) reproduces the
        # population-formula finite-N estimator exactly
        d, panel, _ = reference_fit()
        fit0 = synthetic_fit(panel.F0, panel.B0, panel.E)
        cov = inference.gamma_hat(fit0, 5)
        lam = np.diag(panel.B0.T @ panel.B0)
        Omega = (panel.B0 * (panel.E[4, :] ** 2)[:, None]).T @ panel.B0
        expected = Omega / np.sqrt(np.outer(lam, lam))
        assert np.abs(cov.Gamma - expected).max() < 1e-12


class TestPhiHat:
    def test_zero_bandwidth_is_the_outer_product_term(self):
        _, _, fit = reference_fit()
        cov = inference.phi_hat(fit, 3, 0)
        fe = fit.F_hat * fit.E_hat[:, 2][:, None]
        assert np.allclose(cov.Phi, fe.T @ fe / fit.T, atol=1e-14)

    def test_tiny_hand_case_matches_brute_force(self):
        F = np.array([[1.0, 0.5], [-0.3, 1.2], [0.8, -0.7], [0.2, 0.9]])
        E = np.array([[0.1], [-0.4], [0.25], [0.3]])
        fit = synthetic_fit(F, np.ones((1, 2)), E)
        cov = inference.phi_hat(fit, 1, 1)
        T, L = 4, 1
        V0 = np.zeros((2, 2))
        for t in range(T):
            f = F[t][:, None]
            V0 += E[t, 0] ** 2 * (f @ f.T) / T
        V1 = np.zeros((2, 2))
        for t in range(1, T):
            V1 += E[t, 0] * E[t - 1, 0] * np.outer(F[t], F[t - 1]) / T
        expected = V0 + (1 - 1 / (L + 1)) * (V1 + V1.T)
        assert np.abs(cov.Phi - expected).max() < 1e-12

    def test_plugin_concentrates_on_noise_level(self):
        _, _, fit = reference_fit(T=500, N=500, seed=2025)
        devs = [
            np.abs(inference.phi_hat(fit, i, 4).Phi - 0.5 * np.eye(2)).max()
            for i in range(1, 501)
        ]
        assert np.mean(devs) < 0.2

    def test_default_bandwidth_rule(self):
        _, _, fit = reference_fit(T=100, N=40)
        cov = inference.phi_hat(fit, 1)
        assert cov.bandwidth == 4  # floor(4 * (100/100)**(2/9))

    def test_bandwidth_validated(self):
        _, _, fit = reference_fit()
        with pytest.raises(DesignError):
            inference.phi_hat(fit, 1, fit.T)
        with pytest.raises(DesignError):
            inference.phi_hat(fit, 1, -1)

    def test_psd_for_many_units_and_bandwidths(self):
        _, _, fit = reference_fit(T=60, N=30)
        for i in (1, 7, 30):
            for L in (0, 1, 5, 20):
                Phi = inference.phi_hat(fit, i, L).Phi
                w = np.linalg.eigvalsh(Phi)
                assert w[0] >= -1e-10 * np.trace(Phi)


class TestZStatistics:
    def test_zero_deviation_means_zero_statistic(self):
        _, panel, fit = reference_fit()
        gcov = inference.gamma_hat(fit, 1)
        lcov = inference.phi_hat(fit, 1)
        assert inference.z_factor(fit, 1, 1, fit.F_hat[0, 0], gcov) == 0.0
        assert inference.z_loading(fit, 1, 1, fit.B_hat[0, 0], lcov) == 0.0
        assert inference.z_common(fit, 1, 1, fit.C_hat[0, 0], gcov, lcov) == 0.0

    def test_z_factor_arithmetic(self):
        _, _, fit = reference_fit()
        cov = inference.FactorCov(Gamma=4.0 * np.eye(2), scale=3.0 * np.eye(2), t=1)
        z = inference.z_factor(fit, 1, 1, fit.F_hat[0, 0] - 0.5, cov)
        assert abs(z - 3.0 * 0.5 * 0.5) < 1e-12

    def test_z_loading_arithmetic(self):
        _, _, fit = reference_fit(T=100)
        cov = inference.LoadingCov(Phi=np.eye(2), bandwidth=0, i=1)
        z = inference.z_loading(fit, 1, 1, fit.B_hat[0, 0] - 0.1, cov)
        assert abs(z - 1.0) < 1e-12

    def test_z_common_arithmetic(self):
        # V = 0.04 and U = 0.05 with a deviation of 0.3 standardizes to 1
        T = 25
        F = np.ones((T, 1))
        B = np.full((3, 1), 2.0)
        fit = synthetic_fit(F, B, np.zeros((T, 3)))
        scale = np.sqrt(B.T @ B)
        gcov = inference.FactorCov(Gamma=0.04 * (B.T @ B), scale=scale, t=1)
        lcov = inference.LoadingCov(Phi=np.array([[0.05 * T]]), bandwidth=0, i=1)
        z = inference.z_common(fit, 1, 1, fit.C_hat[0, 0] - 0.3, gcov, lcov,
                               b_i=np.array([1.0]), f_t=np.array([1.0]))
        assert abs(z - 1.0) < 1e-12

    def test_sign_flip_invariance(self):
        _, panel, fit = reference_fit()
        flip = np.array([1.0, -1.0])
        flipped = pc.PcFit(
            F_hat=fit.F_hat * flip, B_hat=fit.B_hat * flip,
            lambda_hat=fit.lambda_hat, E_hat=fit.E_hat, C_hat=fit.C_hat, r=2,
        )
        for k, s in ((1, 1.0), (2, -1.0)):
            g1 = inference.gamma_hat(fit, 4)
            g2 = inference.gamma_hat(flipped, 4)
            z1 = inference.z_factor(fit, 4, k, panel.F0[3, k - 1], g1)
            z2 = inference.z_factor(flipped, 4, k, s * panel.F0[3, k - 1], g2)
            assert abs(abs(z1) - abs(z2)) < 1e-10
            l1 = inference.phi_hat(fit, 2)
            l2 = inference.phi_hat(flipped, 2)
            zb1 = inference.z_loading(fit, 2, k, panel.B0[1, k - 1], l1)
            zb2 = inference.z_loading(flipped, 2, k, s * panel.B0[1, k - 1], l2)
            assert abs(abs(zb1) - abs(zb2)) < 1e-10
        zc1 = inference.z_common(fit, 2, 2, 0.1, inference.gamma_hat(fit, 2), inference.phi_hat(fit, 2))
        zc2 = inference.z_common(flipped, 2, 2, 0.1, inference.gamma_hat(flipped, 2), inference.phi_hat(flipped, 2))
        assert abs(zc1 - zc2) < 1e-10

    def test_singular_covariance_rejected(self):
        _, _, fit = reference_fit()
        cov = inference.FactorCov(Gamma=np.zeros((2, 2)), scale=np.eye(2), t=1)
        with pytest.raises(NumericalDegeneracyError):
            inference.z_factor(fit, 1, 1, 0.0, cov)

    def test_singular_scale_rejected_in_z_common(self):
        _, _, fit = reference_fit()
        gcov = inference.FactorCov(Gamma=np.eye(2), scale=np.zeros((2, 2)), t=1)
        lcov = inference.phi_hat(fit, 1)
        with pytest.raises(NumericalDegeneracyError):
            inference.z_common(fit, 1, 1, 0.0, gcov, lcov)


class TestQ2Joint:
    def test_zero_delta(self):
        assert inference.q2_joint(np.zeros(2), np.eye(2), T=10) == 0.0

    def test_loading_form_arithmetic(self):
        q = inference.q2_joint(np.array([1.0, 0.0]), np.eye(2), T=4)
        assert q == 4.0

    def test_identity_weight_closed_form(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            d = rng.standard_normal(3)
            T = int(rng.integers(1, 50))
            q = inference.q2_joint(d, np.eye(3), T=T)
            assert abs(q - T * d @ d) < 1e-12 * max(1.0, q)

    def test_factor_form_uses_scale(self):
        d = np.array([0.5, -0.25])
        S = np.diag([2.0, 4.0])
        q = inference.q2_joint(d, np.eye(2), scale=S)
        assert abs(q - ((2 * 0.5) ** 2 + (4 * 0.25) ** 2)) < 1e-12

    def test_exactly_one_mode_required(self):
        with pytest.raises(DesignError):
            inference.q2_joint(np.zeros(2), np.eye(2))
        with pytest.raises(DesignError):
            inference.q2_joint(np.zeros(2), np.eye(2), scale=np.eye(2), T=5)

    def test_singular_weight_rejected(self):
        with pytest.raises(NumericalDegeneracyError):
            inference.q2_joint(np.ones(2), np.zeros((2, 2)), T=5)


class TestQuantiles:
    def test_chi2_against_independent_oracle(self):
        assert abs(inference.chi2_quantile(2, 0.95) - CHI2_2_95) < 1e-8 * CHI2_2_95
        assert abs(inference.chi2_quantile(1, 0.5) - CHI2_1_50) < 1e-8 * CHI2_1_50
        assert abs(inference.chi2_quantile(3, 0.99) - CHI2_3_99) < 1e-8 * CHI2_3_99

    def test_chi2_monte_carlo_cross_check(self):
        rng = np.random.default_rng(3)
        draws = rng.chisquare(2, size=200_000)
        q = inference.chi2_quantile(2, 0.95)
        assert abs(np.mean(draws > q) - 0.05) < 0.002

    def test_chi2_lower_limit(self):
        assert inference.chi2_quantile(2, 1e-12) < 1e-10

    def test_chi2_invalid_p(self):
        for p in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(DesignError):
                inference.chi2_quantile(2, p)

    def test_normal_quantile(self):
        assert abs(inference.normal_quantile(0.975) - Z_975) < 1e-10


class TestBatchApi:
    def test_row_schema_and_zero_pvalue_consistency(self, tmp_path):
        _, panel, fit = reference_fit(T=30, N=20)
        rows = inference.batch_z_factors(fit, panel.F0)
        assert len(rows) == fit.T * fit.r
        assert set(rows[0]) == {"index", "statistic", "value", "pvalue"}
        for row in rows[:5]:
            assert 0.0 <= row["pvalue"] <= 1.0
        rows_b = inference.batch_z_loadings(fit, panel.B0, 2)
        assert len(rows_b) == fit.N * fit.r
        from wfpc import matio

        matio.save_stat_rows(rows + rows_b, tmp_path / "stats.csv")
        text = (tmp_path / "stats.csv").read_text().splitlines()
        assert text[0] == "index,statistic,value,pvalue"
        assert len(text) == 1 + len(rows) + len(rows_b)
