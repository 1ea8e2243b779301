import math

import numpy as np
import pytest

from resfit import (
    Background,
    DegenerateGeometryError,
    DegreesOfFreedomError,
    NonphysicalQiError,
    NoiseSpec,
    RankDeficiencyError,
    PhaseUnwrapError,
    ResonatorParams,
    Sweep,
    calibrate_background,
    diameter_correct,
    estimate_uncertainties,
    fit_circle_algebraic,
    fit_full,
    fit_phase,
    grid_spd,
    inject_noise,
    propagate_qi_error,
    remove_delay,
    s21_gradient,
    s21_ideal,
    s21_raw,
)
from resfit.fit import CircleGeometry, FitResult

IDENT = Background()
FIG4_BG = Background(a=1.149, alpha=1.597, tau_s=-8.825e-11)
FIG4_PARAMS = ResonatorParams(f_r_hz=4.364e9, q_i=5.181e6, q_c_mag=6.730e4, phi=0.668)


def make_sweep(params, bg=IDENT, n=1001, span_linewidths=10.0, noise=None, **kw):
    f = grid_spd(params.f_r_hz, span_linewidths * params.linewidth_hz, n)
    return inject_noise(params, bg, f, noise or NoiseSpec(), **kw)


class TestRemoveDelay:
    def test_zero_delay_recovered(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        _, tau = remove_delay(make_sweep(p))
        assert abs(tau) < 1e-13

    def test_fig4_delay_recovered(self):
        swp = make_sweep(FIG4_PARAMS, bg=FIG4_BG)
        _, tau = remove_delay(swp)
        assert tau == pytest.approx(-8.825e-11, rel=0.01)

    def test_idempotent(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.1)
        swp = make_sweep(p, bg=Background(tau_s=3e-10), n=2001,
                         noise=NoiseSpec.isotropic(5e-4, seed=8))
        once, tau1 = remove_delay(swp)
        _, tau2 = remove_delay(once)
        assert abs(tau2) < 0.01 * abs(tau1)

    def test_unwrap_failure_names_index(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        swp = make_sweep(p, n=101)
        z = swp.s21.copy()
        z[5] *= np.exp(1j * (np.pi - 0.05))  # half-turn jump far from resonance
        bad = swp.with_s21(z)
        with pytest.raises(PhaseUnwrapError) as err:
            remove_delay(bad)
        assert err.value.index in (5, 6)

    def test_too_few_points(self):
        s = Sweep(f_hz=[1e9, 2e9, 3e9, 4e9], s21=[1, 1, 1, 1])
        with pytest.raises(DegreesOfFreedomError):
            remove_delay(s)


class TestCircleFit:
    def test_three_exact_points(self):
        pts = np.exp(1j * np.array([0.3, 2.0, 4.4]))
        c = fit_circle_algebraic(pts)
        assert abs(c.center) < 1e-12
        assert c.r == pytest.approx(1.0, abs=1e-12)

    def test_noiseless_locus_radius(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.25)
        z = s21_ideal(p, IDENT, grid_spd(p.f_r_hz, 10 * p.linewidth_hz, 801))
        c = fit_circle_algebraic(z)
        assert c.r == pytest.approx(p.diameter / 2.0, rel=1e-10)
        assert c.rms_radial_residual < 1e-12

    def test_noisy_circle_monte_carlo(self):
        # center/radius error below 1e-4 at N = 1e4, sigma = 1e-3
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            theta = rng.uniform(0, 2 * np.pi, 10000)
            z = (0.3 - 0.2j) + 0.5 * np.exp(1j * theta)
            z += rng.normal(0, 1e-3, 10000) + 1j * rng.normal(0, 1e-3, 10000)
            c = fit_circle_algebraic(z)
            err = max(abs(c.center - (0.3 - 0.2j)), abs(c.r - 0.5))
            hits += err < 1e-4
        assert hits >= 19

    def test_collinear_raises(self):
        with pytest.raises(DegenerateGeometryError):
            fit_circle_algebraic(np.linspace(0, 1, 50) + 0j)

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            fit_circle_algebraic(np.array([1 + 0j, 2 + 0j]))


class TestPhaseFit:
    def test_noiseless_exact(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        swp = make_sweep(p)
        circle = fit_circle_algebraic(swp.s21)
        theta0, ql, fr = fit_phase(swp, circle)
        assert ql == pytest.approx(p.q_l, rel=1e-8)
        assert fr == pytest.approx(p.f_r_hz, rel=1e-8)
        # identity background: dip direction is phi + pi
        assert math.cos(theta0 - (p.phi + math.pi)) == pytest.approx(1.0, abs=1e-8)

    def test_theta_at_resonance_is_theta0(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=3e4, q_c_mag=1e4, phi=0.2)
        swp = make_sweep(p)
        circle = fit_circle_algebraic(swp.s21)
        theta0, ql, fr = fit_phase(swp, circle)
        z_r = s21_ideal(p, IDENT, fr) - circle.center
        assert math.cos(np.angle(z_r) - theta0) == pytest.approx(1.0, abs=1e-7)

    def test_half_linewidth_quarter_turn(self):
        # theta(f_r (1 - 1/(2 Q_l))) - theta0 = pi/2
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        swp = make_sweep(p)
        circle = fit_circle_algebraic(swp.s21)
        theta0, ql, fr = fit_phase(swp, circle)
        f_half = fr * (1.0 - 1.0 / (2.0 * ql))
        z = s21_ideal(p, IDENT, f_half) - circle.center
        delta = np.angle(z) - theta0
        delta = (delta + np.pi) % (2 * np.pi) - np.pi
        assert delta == pytest.approx(np.pi / 2, abs=1e-6)


class TestCalibration:
    def test_identity_background(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        swp = make_sweep(p)
        circle = fit_circle_algebraic(swp.s21)
        theta0, _, _ = fit_phase(swp, circle)
        _, bg = calibrate_background(swp, 0.0, circle, theta0)
        assert bg.a == pytest.approx(1.0, abs=1e-9)
        assert bg.alpha == pytest.approx(0.0, abs=1e-9)

    def test_fig4_amplitude_and_phase(self):
        swp = make_sweep(FIG4_PARAMS, bg=FIG4_BG, n=2001)
        nodelay, tau = remove_delay(swp)
        circle = fit_circle_algebraic(nodelay.s21)
        theta0, _, _ = fit_phase(nodelay, circle)
        _, bg = calibrate_background(nodelay, tau, circle, theta0)
        assert bg.a == pytest.approx(1.149, rel=1e-6)
        assert bg.alpha == pytest.approx(1.597, rel=1e-6)

    def test_calibrated_fit_matches_identity_fit(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=8e4, q_c_mag=2e4, phi=0.3)
        res_bg = fit_full(make_sweep(p, bg=Background(a=1.3, alpha=-0.8), n=1501))
        res_id = fit_full(make_sweep(p, bg=IDENT, n=1501))
        assert res_bg.q_i == pytest.approx(res_id.q_i, rel=1e-8)


class TestDiameterCorrect:
    def test_exact_recovery(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        res = fit_full(make_sweep(p))
        assert res.q_c_mag == pytest.approx(1e4, rel=1e-8)
        assert res.q_i == pytest.approx(5e4, rel=1e-8)
        assert res.phi_rad == pytest.approx(0.0, abs=1e-8)

    def test_fig4_parameter_set(self):
        res = fit_full(make_sweep(FIG4_PARAMS, bg=FIG4_BG, n=2001))
        assert res.q_c_mag == pytest.approx(6.730e4, rel=1e-6)
        assert res.q_i == pytest.approx(5.181e6, rel=1e-6)
        assert res.phi_rad == pytest.approx(0.668, rel=1e-6)
        assert res.f_r_hz == pytest.approx(4.364e9, rel=1e-6)

    def test_nonphysical_quality_factor(self):
        # d > 1 with phi = 0 forces a negative internal quality factor
        circle = CircleGeometry(xc=0.45, yc=0.0, r=0.55, rms_radial_residual=0.0)
        with pytest.raises(NonphysicalQiError):
            diameter_correct(circle, math.pi, q_l=1e4, f_r_hz=5e9,
                             off_resonant_point=1.0 + 0j)


class TestFitFull:
    @pytest.mark.parametrize("ratio", [1e-3, 0.1, 1.0, 10.0, 1e3])
    def test_round_trip_over_ratios(self, ratio):
        p = ResonatorParams(f_r_hz=5e9, q_i=ratio * 1e4, q_c_mag=1e4,
                            phi=math.pi / 6)
        res = fit_full(make_sweep(p, bg=FIG4_BG))
        assert res.q_i == pytest.approx(p.q_i, rel=1e-6)
        assert res.q_c_mag == pytest.approx(p.q_c_mag, rel=1e-6)

    def test_too_few_points(self):
        s = Sweep(f_hz=[1e9, 2e9, 3e9, 4e9], s21=[0.5, 0.6, 0.7, 0.8])
        with pytest.raises(DegreesOfFreedomError):
            fit_full(s)  # N - 4 = 0 degrees of freedom

    def test_stage_tag_on_failure(self):
        s = Sweep(f_hz=np.linspace(1e9, 2e9, 64), s21=np.linspace(0.1, 1, 64) + 0j)
        with pytest.raises(DegenerateGeometryError) as err:
            fit_full(s, refine_delay=False)  # collinear samples cannot circle-fit
        assert err.value.stage == "fit_circle_raw"

    def test_fig2_cell_coverage(self):
        # critical coupling cell: truth within 2 sigma for >= 95% of seeds
        p = ResonatorParams(f_r_hz=5e9, q_i=1e4, q_c_mag=1e4, phi=0.0)
        f = grid_spd(p.f_r_hz, 10 * p.linewidth_hz, 20001)
        hits = 0
        n_seeds = 200
        for seed in range(n_seeds):
            swp = inject_noise(p, IDENT, f, NoiseSpec.isotropic(1e-3, seed=seed))
            res = fit_full(swp)
            hits += abs(res.q_i - p.q_i) <= 2.0 * res.sigma_q_i
        assert hits / n_seeds >= 0.95

    def test_result_invariants(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.3)
        res = fit_full(make_sweep(p, noise=NoiseSpec.isotropic(1e-3, seed=4), n=2001))
        # the reciprocal relation is a definition, not a fit residual
        lhs = 1.0 / res.q_i
        rhs = 1.0 / res.q_l - math.cos(res.phi_rad) / res.q_c_mag
        assert lhs == pytest.approx(rhs, rel=1e-12)
        cov = res.covariance
        assert np.allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) >= -1e-18 * np.abs(cov).max())
        assert res.sigma_q_l == pytest.approx(math.sqrt(cov[0, 0]))
        assert res.chi2 > 0.0
        assert res.n_points == 2001

    def test_noiseless_chi2_zero(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        res = fit_full(make_sweep(p))
        assert res.chi2 < 1e-12
        assert res.sigma_q_i == 0.0

    def test_json_round_trip(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.1)
        res = fit_full(make_sweep(p, noise=NoiseSpec.isotropic(1e-3, seed=2)))
        back = FitResult.from_dict(res.to_dict())
        assert back.q_i == res.q_i
        assert np.allclose(back.covariance, res.covariance)

    def test_rotational_noise_keeps_radius(self):
        # sigma_n = 0, sigma_fr > 0: frequency jitter is tangential
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        f = grid_spd(p.f_r_hz, 10 * p.linewidth_hz, 2001)
        clean = fit_circle_algebraic(s21_ideal(p, IDENT, f))
        noisy = inject_noise(p, IDENT, f, NoiseSpec(sigma_fr_hz=50.0, seed=3))
        jittered = fit_circle_algebraic(noisy.s21)
        assert jittered.r == pytest.approx(clean.r, rel=1e-6)


class TestUncertainties:
    def test_noiseless_all_sigmas_zero(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        res = fit_full(make_sweep(p))
        assert res.sigma_q_l == 0.0
        assert res.sigma_q_c_mag == 0.0
        assert res.sigma_f_r_hz == 0.0
        assert res.sigma_phi_rad == 0.0
        assert np.all(res.covariance == 0.0)

    def test_analytic_gradient_vs_finite_differences(self):
        # Central differences at 1e-6 relative steps as the oracle.  The f_r
        # step is measured against the linewidth (its natural scale): a
        # 1e-6 * f_r step is ~2% of a linewidth here and the h^2 truncation
        # alone would read 3e-4, swamping the comparison.
        ql, qc, fr, phi = 8333.3, 1e4, 5e9, 0.31
        f = grid_spd(fr, 10 * fr / ql, 301)
        grad = s21_gradient(f, ql, qc, fr, phi)
        steps = [1e-6 * ql, 1e-6 * qc, 1e-6 * fr / ql, 1e-6]
        worst = 0.0
        for j, h in enumerate(steps):
            args = [ql, qc, fr, phi]
            hi, lo = list(args), list(args)
            hi[j] += h
            lo[j] -= h
            fd = (s21_raw(f, hi[2], hi[0], hi[1], hi[3])
                  - s21_raw(f, lo[2], lo[0], lo[1], lo[3])) / (2 * h)
            scale = np.abs(grad[j]).max()
            worst = max(worst, float(np.abs(grad[j] - fd).max() / scale))
        assert worst < 1e-5

    def test_tangential_residuals_are_rank_deficient(self):
        # Residuals exactly along the model tangent carry no Q_l information
        # in the residual-direction Jacobian: the Q_l gradient is orthogonal
        # to the tangent everywhere, so J^T J is singular.
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        f = grid_spd(p.f_r_hz, 10 * p.linewidth_hz, 2001)
        model = s21_ideal(p, IDENT, f)
        denom = 1.0 + 2j * p.q_l * (f / p.f_r_hz - 1.0)
        tangent = 2j * p.q_l ** 2 * np.exp(1j * p.phi) / (p.q_c_mag * p.f_r_hz
                                                          * denom ** 2)
        tangent /= np.abs(tangent)
        rng = np.random.default_rng(5)
        swp = Sweep(f_hz=f, s21=model + 1e-3 * rng.normal(size=f.size) * tangent)
        res = FitResult(q_l=p.q_l, q_c_mag=p.q_c_mag, q_i=p.q_i, f_r_hz=p.f_r_hz,
                        phi_rad=p.phi, theta0_rad=0.0, background=IDENT,
                        sigma_q_l=0, sigma_q_c_mag=0, sigma_q_i=0, sigma_f_r_hz=0,
                        sigma_phi_rad=0, covariance=np.zeros((4, 4)), chi2=0.0,
                        n_points=swp.n_points)
        with pytest.raises(RankDeficiencyError) as err:
            estimate_uncertainties(swp, res)
        null = err.value.null_direction
        assert max(null, key=lambda k: abs(null[k])) == "q_l"

    def test_dof_guard(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        f = grid_spd(p.f_r_hz, 10 * p.linewidth_hz, 4)
        swp = Sweep(f_hz=f, s21=s21_ideal(p, IDENT, f))
        res = FitResult(q_l=p.q_l, q_c_mag=p.q_c_mag, q_i=p.q_i, f_r_hz=p.f_r_hz,
                        phi_rad=0.0, theta0_rad=0.0, background=IDENT,
                        sigma_q_l=0, sigma_q_c_mag=0, sigma_q_i=0, sigma_f_r_hz=0,
                        sigma_phi_rad=0, covariance=np.zeros((4, 4)), chi2=0.0,
                        n_points=4)
        with pytest.raises(DegreesOfFreedomError):
            estimate_uncertainties(swp, res)

    def test_dof_mode_n_minus_6(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=1e4, q_c_mag=1e4, phi=0.0)
        swp = make_sweep(p, n=101, noise=NoiseSpec.isotropic(1e-3, seed=6))
        res4 = fit_full(swp, dof_params=4)
        res6 = fit_full(swp, dof_params=6)
        expected = res4.sigma_q_i * math.sqrt((101 - 4) / (101 - 6))
        assert res6.sigma_q_i == pytest.approx(expected, rel=1e-9)


class TestQiPropagation:
    def _result(self, cov, ql=8333.3, qc=1e4, phi=0.0):
        qi = 1.0 / (1.0 / ql - math.cos(phi) / qc)
        return FitResult(q_l=ql, q_c_mag=qc, q_i=qi, f_r_hz=5e9, phi_rad=phi,
                         theta0_rad=0.0, background=IDENT, sigma_q_l=0,
                         sigma_q_c_mag=0, sigma_q_i=0, sigma_f_r_hz=0,
                         sigma_phi_rad=0, covariance=cov, chi2=0.0, n_points=100)

    def test_zero_covariance(self):
        assert propagate_qi_error(self._result(np.zeros((4, 4)))) == 0.0

    def test_diagonal_phi_zero_formula(self):
        ql, qc = 8333.3, 1e4
        s_ql, s_qc = 3.0, 5.0
        cov = np.diag([s_ql ** 2, s_qc ** 2, 0.0, 0.0])
        res = self._result(cov, ql=ql, qc=qc)
        qi = res.q_i
        expected = math.sqrt(qi ** 4 * (s_ql ** 2 / ql ** 4 + s_qc ** 2 / qc ** 4))
        assert propagate_qi_error(res) == pytest.approx(expected, rel=1e-12)

    def test_monte_carlo_oracle(self):
        # sample the fitted covariance and compare the Q_i spread
        ql, qc, phi = 8333.3, 1e4, 0.25
        sig = np.array([ql * 0.01, qc * 0.015, 1.0, 0.004])
        corr = np.array([[1.0, 0.6, 0.0, 0.2],
                         [0.6, 1.0, 0.0, 0.3],
                         [0.0, 0.0, 1.0, 0.0],
                         [0.2, 0.3, 0.0, 1.0]])
        cov = corr * np.outer(sig, sig)
        res = self._result(cov, ql=ql, qc=qc, phi=phi)
        rng = np.random.default_rng(12)
        draws = rng.multivariate_normal([ql, qc, 5e9, phi], cov, size=100_000)
        qi = 1.0 / (1.0 / draws[:, 0] - np.cos(draws[:, 3]) / draws[:, 1])
        assert propagate_qi_error(res) == pytest.approx(np.std(qi), rel=0.05)
