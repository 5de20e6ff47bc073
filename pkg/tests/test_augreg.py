import numpy as np
import pytest

from wfpc import augreg, dgp, inference, pc, rotation
from wfpc.errors import CollinearityError, DesignError, NumericalDegeneracyError


def sample(T=120, seed=4, sigma_eps=1.0, L=1):
    d = dgp.FactorDesign(
        T=T, N=80, r=2, alphas=(1.0, 0.9), mu=(1.0, 1.0), sigma_e=np.sqrt(0.5),
        structural_H=[[1.0, 0.5], [0.5, 2.0]], seed=seed,
    )
    panel = dgp.assemble_panel(d)
    areg = dgp.AugRegDesign(
        gamma0=(1.0, 1.0), beta=(1.0,) * L, rho=(0.5,) * L,
        sigma_w=(1.0,) * L, sigma_eps=sigma_eps, h=1,
    )
    rng = np.random.default_rng(seed + 1)
    data = dgp.gen_augreg(panel.F0, areg, rng)
    fit = rotation.align_to_reference(pc.pc_fit(panel.X, 2), panel.F0)
    return panel, areg, data, fit


class TestAugRegFit:
    def test_noiseless_identified_factors_recover_coefficients(self):
        panel, _, _, _ = sample()
        y = panel.F0 @ np.array([1.0, 1.0])
        fit = augreg.augreg_fit(y, panel.F0, None, 1)
        assert np.abs(fit.gamma_hat - 1.0).max() < 1e-10
        assert fit.sigma_eps_hat < 1e-20
        assert fit.L == 0 and fit.beta_hat.size == 0

    def test_hand_case_matches_normal_equations(self):
        F = np.array([[1.0], [2.0], [-1.0], [0.5]])
        y = np.array([2.0, 3.5, -1.0, 1.25])
        fit = augreg.augreg_fit(y, F, None, 1)
        expected = (F[:, 0] @ y) / (F[:, 0] @ F[:, 0])
        assert abs(fit.delta_hat[0] - expected) < 1e-12

    def test_normal_equations_invariant(self):
        panel, _, data, fh = sample()
        fit = augreg.augreg_fit(data.y, fh.F_hat, data.W, 1)
        Z = np.hstack([fh.F_hat, data.W])
        resid_moment = Z.T @ fit.residuals
        assert np.abs(resid_moment).max() < 1e-8 * np.linalg.norm(data.y)

    def test_sigma_eps_divides_by_t_not_dof(self):
        panel, _, data, fh = sample()
        fit = augreg.augreg_fit(data.y, fh.F_hat, data.W, 1)
        assert abs(fit.sigma_eps_hat - (fit.residuals @ fit.residuals) / len(data.y)) < 1e-14

    def test_residual_time_labels(self):
        panel, _, data, fh = sample(T=50)
        fit = augreg.augreg_fit(data.y, fh.F_hat, data.W, 3)
        assert fit.residual_times[0] == 4 and fit.residual_times[-1] == 53

    def test_homoskedastic_and_heteroskedastic_sandwiches(self):
        panel, _, data, fh = sample()
        het = augreg.augreg_fit(data.y, fh.F_hat, data.W, 1, "heteroskedastic")
        hom = augreg.augreg_fit(data.y, fh.F_hat, data.W, 1, "homoskedastic")
        assert np.allclose(het.delta_hat, hom.delta_hat)
        Z = np.hstack([fh.F_hat, data.W])
        G_inv = np.linalg.inv(Z.T @ Z / len(data.y))
        assert np.allclose(hom.Sigma_delta_hat, hom.sigma_eps_hat * G_inv, atol=1e-10)
        # both are valid PSD sandwiches of the same bread
        assert np.linalg.eigvalsh(het.Sigma_delta_hat)[0] > 0

    def test_collinear_regressors_rejected(self):
        panel, _, data, fh = sample()
        W_bad = np.column_stack([fh.F_hat[:, 0], data.W[:, 0]])
        with pytest.raises(CollinearityError):
            augreg.augreg_fit(data.y, fh.F_hat, W_bad, 1)

    def test_sample_length_guard(self):
        with pytest.raises(DesignError):
            augreg.augreg_fit(np.ones(4), np.ones((4, 2)), None, 2)

    def test_unknown_cov_mode(self):
        panel, _, data, fh = sample()
        with pytest.raises(DesignError):
            augreg.augreg_fit(data.y, fh.F_hat, data.W, 1, "robust")


class TestInfeasibleGamma:
    def test_without_controls_is_plain_regression(self):
        panel, _, data, _ = sample(L=0)
        g = augreg.infeasible_gamma(data.y, panel.F0, None, 1)
        ref = np.linalg.lstsq(panel.F0, data.y, rcond=None)[0]
        assert np.abs(g - ref).max() < 1e-10

    def test_exact_fit_recovers_truth(self):
        panel, areg, data, _ = sample(sigma_eps=0.0)
        # remove the control noise channel entirely: y built from F0 and W
        g = augreg.infeasible_gamma(data.y - data.W @ np.array([1.0]), panel.F0, None, 1)
        assert np.abs(g - 1.0).max() < 1e-10

    def test_frisch_waugh_equivalence_with_full_fit(self):
        panel, _, data, _ = sample()
        g_direct = augreg.infeasible_gamma(data.y, panel.F0, data.W, 1)
        full = augreg.augreg_fit(data.y, panel.F0, data.W, 1)
        assert np.abs(full.gamma_hat - g_direct).max() < 1e-10

    def test_random_instances_frisch_waugh(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            T, r, L = int(rng.integers(30, 60)), 2, int(rng.integers(1, 3))
            F = rng.standard_normal((T, r))
            W = rng.standard_normal((T, L))
            y = F @ rng.standard_normal(r) + W @ rng.standard_normal(L) + rng.standard_normal(T)
            assert np.abs(
                augreg.augreg_fit(y, F, W, 1).gamma_hat
                - augreg.infeasible_gamma(y, F, W, 1)
            ).max() < 1e-10


class TestForecast:
    def setup_forecast(self, **kw):
        panel, areg, data, fh = sample(**kw)
        fit = augreg.augreg_fit(data.y, fh.F_hat, data.W, 1)
        z_T = np.concatenate([fh.F_hat[-1], data.W[-1]])
        gcov = inference.gamma_hat(fh, fh.T)
        return fit, z_T, gcov

    def test_interval_structure(self):
        fit, z_T, gcov = self.setup_forecast()
        fc = augreg.forecast(fit, z_T, gcov, fit.gamma_hat, 0.95)
        assert fc.sigma_actual >= fc.sigma_cond > 0
        assert fc.cond_lower < fc.y_hat < fc.cond_upper
        assert fc.actual_lower <= fc.cond_lower and fc.actual_upper >= fc.cond_upper
        width = fc.cond_upper - fc.cond_lower
        assert abs(width - 2 * 1.959963984540054 * fc.sigma_cond) < 1e-10
        assert fc.actual_assumes_gaussian

    def test_variance_grows_with_gamma_scale(self):
        fit, z_T, gcov = self.setup_forecast()
        small = augreg.forecast(fit, z_T, gcov, fit.gamma_hat, 0.95)
        big = augreg.forecast(fit, z_T, gcov, 3.0 * fit.gamma_hat, 0.95)
        assert big.sigma_cond > small.sigma_cond

    def test_degenerate_variance_rejected(self):
        fit, z_T, gcov = self.setup_forecast()
        zero_fit = augreg.AugRegFit(
            delta_hat=fit.delta_hat,
            Sigma_delta_hat=np.zeros_like(fit.Sigma_delta_hat),
            residuals=fit.residuals, residual_times=fit.residual_times,
            sigma_eps_hat=fit.sigma_eps_hat, h=fit.h, r=fit.r, L=fit.L,
            ZtZ_inv=fit.ZtZ_inv, cov_mode=fit.cov_mode,
        )
        zero_gcov = inference.FactorCov(Gamma=np.zeros((2, 2)), scale=np.eye(2), t=1)
        with pytest.raises(NumericalDegeneracyError):
            augreg.forecast(zero_fit, z_T, zero_gcov, np.zeros(2) * fit.gamma_hat, 0.95)

    def test_level_validated(self):
        fit, z_T, gcov = self.setup_forecast()
        with pytest.raises(DesignError):
            augreg.forecast(fit, z_T, gcov, fit.gamma_hat, 1.0)


class TestGammaJointQ2:
    def test_zero_delta(self):
        assert augreg.gamma_joint_q2(np.zeros(2), np.eye(2), 100) == 0.0

    def test_arithmetic(self):
        q = augreg.gamma_joint_q2(np.array([1.0, 1.0]), np.eye(2), 4)
        assert q == 8.0

    def test_singular_sigma_rejected(self):
        with pytest.raises(NumericalDegeneracyError):
            augreg.gamma_joint_q2(np.ones(2), np.zeros((2, 2)), 4)
