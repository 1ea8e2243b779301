import math

import numpy as np
import pytest

from resfit import (
    Background,
    InvalidParameterError,
    ResonatorParams,
    chip_power_w,
    dbm_to_watt,
    df_dtheta,
    on_resonance_power_coefficients,
    phasal_density,
    photon_number,
    resonance_phase,
    s21_ideal,
)

IDENT = Background()


def critical_params():
    # q_i = q_c, phi = 0 -> q_l = q_c/2, diameter 1/2
    return ResonatorParams(f_r_hz=5e9, q_i=2e4, q_c_mag=2e4, phi=0.0)


class TestResonatorParams:
    def test_loaded_q_relation(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.3)
        assert p.q_l == pytest.approx(1.0 / (1 / 5e4 + math.cos(0.3) / 1e4), rel=1e-14)
        assert p.q_l <= min(p.q_i, p.q_c_mag / math.cos(p.phi))
        assert p.linewidth_hz == pytest.approx(p.f_r_hz / p.q_l)

    @pytest.mark.parametrize("kwargs", [
        dict(f_r_hz=-1.0, q_i=1e4, q_c_mag=1e4),
        dict(f_r_hz=5e9, q_i=0.0, q_c_mag=1e4),
        dict(f_r_hz=5e9, q_i=1e4, q_c_mag=-2.0),
        dict(f_r_hz=5e9, q_i=1e4, q_c_mag=1e4, phi=math.pi / 2),
        dict(f_r_hz=5e9, q_i=1e4, q_c_mag=1e4, phi=-math.pi / 2),
        dict(f_r_hz=float("nan"), q_i=1e4, q_c_mag=1e4),
    ])
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(InvalidParameterError):
            ResonatorParams(**kwargs)

    def test_from_loaded_round_trip(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=7e4, q_c_mag=1.3e4, phi=-0.2)
        q = ResonatorParams.from_loaded(p.f_r_hz, p.q_l, p.q_c_mag, p.phi)
        assert q.q_i == pytest.approx(p.q_i, rel=1e-12)

    def test_from_loaded_rejects_nonphysical(self):
        with pytest.raises(InvalidParameterError):
            ResonatorParams.from_loaded(5e9, q_l=2e4, q_c_mag=1e4, phi=0.0)

    def test_background_validation(self):
        with pytest.raises(InvalidParameterError):
            Background(a=0.0)
        assert Background().is_identity


class TestS21:
    def test_critical_coupling_at_resonance(self):
        p = critical_params()
        assert s21_ideal(p, IDENT, p.f_r_hz) == pytest.approx(0.5 + 0j, abs=1e-14)

    def test_half_linewidth_detuning(self):
        # denominator = 1 + i at f = f_r (1 + 1/(2 Q_l))
        p = critical_params()
        f = p.f_r_hz * (1.0 + 1.0 / (2.0 * p.q_l))
        assert s21_ideal(p, IDENT, f) == pytest.approx(0.75 + 0.25j, abs=1e-12)

    def test_off_resonant_limit_is_one(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=3e4, q_c_mag=1e4, phi=0.4)
        far = p.f_r_hz * (1.0 + 1e6 / p.q_l)
        assert abs(s21_ideal(p, IDENT, far) - 1.0) < 1e-5

    def test_off_resonant_approach_monotone(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=3e4, q_c_mag=1e4, phi=0.2)
        for side in (+1, -1):
            k = np.array([1.0, 2.0, 5.0, 10.0, 50.0, 200.0])
            f = p.f_r_hz + side * k * p.linewidth_hz
            dist = np.abs(s21_ideal(p, IDENT, f) - 1.0)
            assert np.all(np.diff(dist) < 0)

    def test_background_prefactor(self):
        p = critical_params()
        bg = Background(a=1.4, alpha=0.7, tau_s=2e-10)
        f = p.f_r_hz * (1.0 + 3e-5)
        expected = (1.4 * np.exp(1j * (0.7 - 2 * np.pi * f * 2e-10))
                    * s21_ideal(p, IDENT, f))
        assert s21_ideal(p, bg, f) == pytest.approx(expected, rel=1e-14)

    def test_circle_property(self):
        # {1 - s21} lies on a circle through the origin, diameter Q_l/|Q_c|,
        # with the far point reached exactly at resonance.
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.37)
        d = p.diameter
        f = np.linspace(p.f_r_hz - 30 * p.linewidth_hz,
                        p.f_r_hz + 30 * p.linewidth_hz, 40001)
        w = 1.0 - s21_ideal(p, IDENT, f)
        center = (d / 2.0) * np.exp(1j * p.phi)
        assert np.max(np.abs(np.abs(w - center) - d / 2.0)) < 1e-10 * d
        assert np.max(np.abs(w)) == pytest.approx(d, rel=1e-10)
        assert abs(abs(1.0 - s21_ideal(p, IDENT, p.f_r_hz)) - d) < 1e-10 * d

    def test_phase_relation_exact(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        f = np.linspace(p.f_r_hz - 5 * p.linewidth_hz,
                        p.f_r_hz + 5 * p.linewidth_hz, 2001)
        center = 1.0 - p.diameter / 2.0
        theta = np.unwrap(np.angle(s21_ideal(p, IDENT, f) - center))
        theta0 = theta[np.argmin(np.abs(f - p.f_r_hz))]
        model = resonance_phase(f, p.f_r_hz, p.q_l, theta0)
        assert np.max(np.abs(theta - model)) < 1e-10

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(InvalidParameterError):
            s21_ideal(critical_params(), IDENT, 0.0)


class TestPhasalDensity:
    def test_value_at_resonance(self):
        p = critical_params()
        span = 10 * p.linewidth_hz
        assert phasal_density(p, span, 10001, p.f_r_hz) == pytest.approx(250.025)

    def test_value_at_one_linewidth(self):
        p = critical_params()
        span = 10 * p.linewidth_hz
        for sign in (+1, -1):
            rho = phasal_density(p, span, 10001, p.f_r_hz + sign * p.linewidth_hz)
            assert rho == pytest.approx(1250.125)

    def test_df_dtheta_values(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=4e4, q_c_mag=2e4, phi=0.1)
        dfr = p.linewidth_hz
        assert df_dtheta(p, p.f_r_hz) == pytest.approx(dfr / 4.0, rel=1e-12)
        # detuning by one linewidth loses a few bits to cancellation at 5 GHz
        assert df_dtheta(p, p.f_r_hz + dfr) == pytest.approx(1.25 * dfr, rel=1e-9)

    def test_consistency_chain(self):
        # rho_theta = (N/span) * df_dtheta for any frequency
        p = critical_params()
        span, n = 20 * p.linewidth_hz, 4001
        f = np.linspace(p.f_r_hz - span / 2, p.f_r_hz + span / 2, 41)
        assert phasal_density(p, span, n, f) == pytest.approx(
            (n / span) * df_dtheta(p, f), rel=1e-12)

    def test_quadratic_with_minimum_at_resonance(self):
        p = critical_params()
        span, n = 10 * p.linewidth_hz, 1001
        u = np.linspace(-4, 4, 81)
        rho = phasal_density(p, span, n, p.f_r_hz + u * p.linewidth_hz)
        assert rho.min() == pytest.approx(n / (4 * span / p.linewidth_hz))
        assert np.argmin(rho) == 40
        # quadratic in detuning: second differences constant
        second = np.diff(rho, 2)
        assert np.allclose(second, second[0], rtol=1e-9)

    def test_matches_numerical_phase_gaps(self):
        # 1/delta_theta computed from adjacent noiseless samples
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        span, n = 10 * p.linewidth_hz, 4001
        f = np.linspace(p.f_r_hz - span / 2, p.f_r_hz + span / 2, n)
        center = 1.0 - p.diameter / 2.0
        theta = np.unwrap(np.angle(s21_ideal(p, IDENT, f) - center))
        inv_gap = 1.0 / np.abs(np.diff(theta))
        f_mid = 0.5 * (f[1:] + f[:-1])
        rho = phasal_density(p, span, n, f_mid)
        assert np.max(np.abs(inv_gap - rho) / rho) < 0.01

    def test_preconditions(self):
        p = critical_params()
        with pytest.raises(InvalidParameterError):
            phasal_density(p, -1.0, 100, p.f_r_hz)
        with pytest.raises(InvalidParameterError):
            phasal_density(p, 1e6, 1, p.f_r_hz)
        with pytest.raises(InvalidParameterError):
            phasal_density(p, 1e6, 100, p.f_r_hz + 1e9)


class TestPhotonNumber:
    def test_zero_power(self):
        assert photon_number(critical_params(), 0.0) == 0.0

    def test_hand_evaluated_value(self):
        # Q_i = 5e4, |Q_c| = 1e4, phi = 0 -> Q_l = 8333.33; 1 fW at 5 GHz
        p = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        assert p.q_l == pytest.approx(8333.333, rel=1e-6)
        assert photon_number(p, 1e-15) == pytest.approx(133.44, rel=5e-3)

    def test_vanishes_toward_pi_over_2(self):
        p0 = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.0)
        p1 = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4,
                             phi=math.pi / 2 - 1e-9)
        assert photon_number(p1, 1e-15) < 1e-6 * photon_number(p0, 1e-15)

    def test_linear_in_power(self):
        p = critical_params()
        assert photon_number(p, 3e-15) == pytest.approx(3 * photon_number(p, 1e-15))

    def test_even_in_phi(self):
        a = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=0.4)
        b = ResonatorParams(f_r_hz=5e9, q_i=5e4, q_c_mag=1e4, phi=-0.4)
        assert photon_number(a, 1e-15) == pytest.approx(photon_number(b, 1e-15))


class TestPowerCoefficients:
    def test_perfect_absorption_at_matched_coupling(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=1e12, q_c_mag=1e4, phi=0.0)
        s21_sq, _ = on_resonance_power_coefficients(p)
        assert s21_sq == pytest.approx(0.0, abs=1e-7)

    def test_half_coupling_values(self):
        # Q_l = 0.5 |Q_c| at phi = 0 means q_i = q_c
        p = ResonatorParams(f_r_hz=5e9, q_i=1e4, q_c_mag=1e4, phi=0.0)
        s21_sq, s11_sq = on_resonance_power_coefficients(p)
        assert s21_sq == pytest.approx(0.25, rel=1e-12)
        assert s11_sq == pytest.approx(0.25, rel=1e-12)

    def test_dissipated_fraction_sign_boundary(self):
        # Brute-force scan: 1 - |S21|^2 - |S11|^2 is non-negative exactly
        # while Q_l <= |Q_c| cos(phi) and goes negative past that boundary.
        qc = 1e4
        for phi in (0.0, 0.2, 0.45, -0.3):
            for ql_frac in np.linspace(0.05, 0.95, 19):
                ql = ql_frac * qc / max(math.cos(phi), 1e-9)
                inv_qi = 1.0 / ql - math.cos(phi) / qc
                if inv_qi <= 0:
                    continue
                p = ResonatorParams(f_r_hz=5e9, q_i=1.0 / inv_qi, q_c_mag=qc, phi=phi)
                s21_sq, s11_sq = on_resonance_power_coefficients(p)
                dissipated = 1.0 - s21_sq - s11_sq
                if p.q_l <= qc * math.cos(phi) * (1 - 1e-12):
                    assert dissipated >= -1e-12
                elif p.q_l >= qc * math.cos(phi) * (1 + 1e-12):
                    assert dissipated < 0.0

    def test_consistency_with_model(self):
        p = ResonatorParams(f_r_hz=5e9, q_i=3e4, q_c_mag=1.7e4, phi=0.25)
        s21_sq, _ = on_resonance_power_coefficients(p)
        assert s21_sq == pytest.approx(abs(s21_ideal(p, IDENT, p.f_r_hz)) ** 2,
                                       rel=1e-12)


def test_power_conversions():
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)
    assert dbm_to_watt(-30.0) == pytest.approx(1e-6)
    assert chip_power_w(0.0, 0.0) == pytest.approx(1e-3)
    assert chip_power_w(-35.0, -73.0) == pytest.approx(1e-3 * 10 ** -10.8)
