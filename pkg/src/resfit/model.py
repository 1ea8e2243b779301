"""Closed-form notch-resonator transmission model and derived quantities.

The transmission of a notch-type resonator coupled to a feed line is

    S21(f) = a * exp(i*(alpha - 2*pi*f*tau))
             * [1 - (Q_l/|Q_c|) * exp(i*phi) / (1 + 2i*Q_l*(f/f_r - 1))]

where the prefactor collects the measurement background (amplitude ``a``,
phase offset ``alpha``, electrical delay ``tau``) and the bracket is the
resonator response.  The loaded quality factor is never stored; it always
derives from the internal and coupling quality factors through

    1/Q_l = 1/Q_i + cos(phi)/|Q_c|

so that the parameter triplet cannot drift out of consistency.  On the
complex plane the bracket traces a circle of diameter d = Q_l/|Q_c| passing
through the off-resonant point 1+0i.

All functions are pure and accept scalar or ndarray frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

# Exact SI value (2019 redefinition).
PLANCK_H = 6.62607015e-34  # J s


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidParameterError(msg)


@dataclass(frozen=True)
class ResonatorParams:
    """True or fitted resonance parameters.

    f_r_hz   : resonance frequency, > 0
    q_i      : internal quality factor, > 0
    q_c_mag  : coupling quality-factor magnitude |Q_c|, > 0
    phi      : impedance-mismatch phase, open interval (-pi/2, pi/2)
    """

    f_r_hz: float
    q_i: float
    q_c_mag: float
    phi: float = 0.0

    def __post_init__(self):
        _require(math.isfinite(self.f_r_hz) and self.f_r_hz > 0, "f_r_hz must be > 0")
        _require(math.isfinite(self.q_i) and self.q_i > 0, "q_i must be > 0")
        _require(math.isfinite(self.q_c_mag) and self.q_c_mag > 0, "q_c_mag must be > 0")
        _require(abs(self.phi) < math.pi / 2, "phi must lie in the open interval (-pi/2, pi/2)")

    @property
    def q_l(self) -> float:
        """Loaded quality factor, 1/Q_l = 1/Q_i + cos(phi)/|Q_c|."""
        return 1.0 / (1.0 / self.q_i + math.cos(self.phi) / self.q_c_mag)

    @property
    def linewidth_hz(self) -> float:
        """Resonance linewidth  f_r / Q_l."""
        return self.f_r_hz / self.q_l

    @property
    def diameter(self) -> float:
        """Circle diameter d = Q_l/|Q_c| of the resonance trace."""
        return self.q_l / self.q_c_mag

    @classmethod
    def from_loaded(cls, f_r_hz: float, q_l: float, q_c_mag: float, phi: float = 0.0
                    ) -> "ResonatorParams":
        """Build params from (f_r, Q_l, |Q_c|, phi), solving for Q_i.

        Raises InvalidParameterError when 1/Q_l - cos(phi)/|Q_c| <= 0, i.e.
        when no positive internal quality factor reproduces the inputs.
        """
        _require(q_l > 0 and q_c_mag > 0, "q_l and q_c_mag must be > 0")
        inv_qi = 1.0 / q_l - math.cos(phi) / q_c_mag
        _require(inv_qi > 0, "no positive Q_i satisfies 1/Q_l - cos(phi)/|Q_c| > 0")
        return cls(f_r_hz=f_r_hz, q_i=1.0 / inv_qi, q_c_mag=q_c_mag, phi=phi)


@dataclass(frozen=True)
class Background:
    """Measurement-environment prefactor  a * exp(i*(alpha - 2*pi*f*tau)).

    a        : transmission amplitude, > 0
    alpha    : phase offset, rad
    tau_s    : electrical delay, s (may be negative)
    """

    a: float = 1.0
    alpha: float = 0.0
    tau_s: float = 0.0

    def __post_init__(self):
        _require(math.isfinite(self.a) and self.a > 0, "background amplitude a must be > 0")

    @property
    def is_identity(self) -> bool:
        return self.a == 1.0 and self.alpha == 0.0 and self.tau_s == 0.0


IDENTITY_BACKGROUND = Background()


def s21_raw(f_hz, f_r_hz, q_l, q_c_mag, phi, a=1.0, alpha=0.0, tau_s=0.0):
    """Transmission model with explicit (f_r, Q_l, |Q_c|, phi) and background.

    Fully vectorized: any argument may be an ndarray broadcastable against
    the frequency array.  This is the workhorse used by the synthesizer
    (per-point resonance-frequency jitter means f_r_hz is an array) and by
    the fit Jacobians.
    """
    f = np.asarray(f_hz, dtype=float)
    denom = 1.0 + 2j * q_l * (f / f_r_hz - 1.0)
    resonance = 1.0 - (q_l / q_c_mag) * np.exp(1j * phi) / denom
    pref = a * np.exp(1j * (alpha - 2.0 * np.pi * f * tau_s))
    return pref * resonance


def s21_ideal(params: ResonatorParams, bg: Background, f_hz):
    """Evaluate the transmission model at frequency ``f_hz`` (scalar or array)."""
    f = np.asarray(f_hz, dtype=float)
    _require(bool(np.all(np.isfinite(f)) and np.all(f > 0)), "frequencies must be finite and > 0")
    out = s21_raw(f, params.f_r_hz, params.q_l, params.q_c_mag, params.phi,
                  bg.a, bg.alpha, bg.tau_s)
    if not np.all(np.isfinite(out)):
        raise InvalidParameterError("transmission model produced a non-finite value")
    return out if out.ndim else complex(out)


def resonance_phase(f_hz, f_r_hz, q_l, theta_0=0.0):
    """Frequency-phase relation of the center-translated resonance circle:

        theta(f) = theta_0 + 2*arctan(2*Q_l*(1 - f/f_r))
    """
    f = np.asarray(f_hz, dtype=float)
    return theta_0 + 2.0 * np.arctan(2.0 * q_l * (1.0 - f / f_r_hz))


def df_dtheta(params: ResonatorParams, f_hz):
    """Frequency advance per radian of circle phase at frequency ``f_hz``:

        df/dtheta = dfr * [((f_r - f)/dfr)^2 + 1/4],   dfr = f_r/Q_l.
    """
    f = np.asarray(f_hz, dtype=float)
    dfr = params.linewidth_hz
    out = dfr * (((params.f_r_hz - f) / dfr) ** 2 + 0.25)
    return out if out.ndim else float(out)


def phasal_density(params: ResonatorParams, span_hz: float, n_points: int, f_hz):
    """Discrete phasal density of a linear frequency grid, points per radian:

        rho_theta = (N / (span/dfr)) * [((f_r - f)/dfr)^2 + 1/4]

    Equivalently (N/span) * df_dtheta.  ``f_hz`` must lie inside the span
    centered on f_r.
    """
    _require(span_hz > 0, "span_hz must be > 0")
    _require(n_points >= 2, "n_points must be >= 2")
    f = np.asarray(f_hz, dtype=float)
    half = span_hz / 2.0
    _require(bool(np.all(np.abs(f - params.f_r_hz) <= half * (1 + 1e-12))),
             "f_hz must lie within [f_r - span/2, f_r + span/2]")
    out = np.asarray((n_points / span_hz) * df_dtheta(params, f))
    return out if out.ndim else float(out)


def photon_number(params: ResonatorParams, p_chip_w: float) -> float:
    """Mean resonator photon number at steady state for on-chip power ``p_chip_w``:

        <n_r> = P_chip / (2*pi*h*f_r^2) * 2*Q_l^2*cos(phi) / |Q_c|

    Linear in power, even in phi, and zero at phi = +-pi/2 (a purely
    imaginary coupling quality factor stores no photons).
    """
    _require(p_chip_w >= 0, "p_chip_w must be >= 0")
    ql = params.q_l
    return (p_chip_w / (2.0 * np.pi * PLANCK_H * params.f_r_hz ** 2)
            * 2.0 * ql ** 2 * math.cos(params.phi) / params.q_c_mag)


def on_resonance_power_coefficients(params: ResonatorParams) -> tuple[float, float]:
    """On-resonance power transmission and reflection with identity background:

        |S21|^2 = (|Q_c|^2 + Q_l^2 - 2*Q_l*|Q_c|*cos(phi)) / |Q_c|^2
        |S11|^2 = Q_l^2 / |Q_c|^2

    Note the dissipated fraction 1 - |S21|^2 - |S11|^2 equals
    2*Q_l*(|Q_c|*cos(phi) - Q_l)/|Q_c|^2 and is only non-negative while
    Q_l <= |Q_c|*cos(phi); beyond that boundary the asymmetric (phi != 0)
    model stops being a passive two-port power balance.
    """
    ql = params.q_l
    qc = params.q_c_mag
    s21_sq = (qc ** 2 + ql ** 2 - 2.0 * ql * qc * math.cos(params.phi)) / qc ** 2
    s11_sq = ql ** 2 / qc ** 2
    return s21_sq, s11_sq


def dbm_to_watt(p_dbm: float) -> float:
    """Convert power in dBm to watts: P[W] = 1 mW * 10^(P[dBm]/10)."""
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def chip_power_w(p_vna_dbm: float, attenuation_db: float = 0.0) -> float:
    """On-chip power in watts: instrument output plus line attenuation in dB.

    ``attenuation_db`` is signed; a lossy line is negative (e.g. -73.0).
    """
    return dbm_to_watt(p_vna_dbm + attenuation_db)
