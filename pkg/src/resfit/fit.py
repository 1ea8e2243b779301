"""Diameter-correcting circle-fit pipeline with uncertainty estimation.

Stages, in pipeline order:

1. ``remove_delay``       estimate and unwind the electrical delay tau
2. ``fit_circle_algebraic``  Taubin-style algebraic circle fit
3. ``fit_phase``          damped least squares of the centered phase against
                          theta(f) = theta_0 + 2*arctan(2*Q_l*(1 - f/f_r))
4. ``calibrate_background``  normalize so the off-resonant point sits at 1+0i
5. re-fit circle and phase on calibrated data
6. ``diameter_correct``   |Q_c| = Q_l/d from the circle diameter d = 2r,
                          phi from the dip direction, Q_i from
                          1/Q_i = 1/Q_l - cos(phi)/|Q_c|
7. ``estimate_uncertainties``  residual-direction Jacobian, covariance
                          sigma^2 = chi^2/(N-4) * (J^T J)^-1, and first-order
                          propagation onto Q_i.

``fit_full`` composes all stages and tags any stage failure with the stage
name.  Every function is pure; concurrent use needs no locking.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d, uniform_filter1d
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateGeometryError,
    DegreesOfFreedomError,
    FitConvergenceError,
    InvalidParameterError,
    NonphysicalQiError,
    PhaseUnwrapError,
    RankDeficiencyError,
    ResfitError,
    UnreliableCalibrationWarning,
)
from .model import Background, resonance_phase, s21_raw
from .synth import Sweep

_PARAM_NAMES = ("q_l", "q_c_mag", "f_r_hz", "phi_rad")


@dataclass
class CircleGeometry:
    """Fitted circle in the complex plane."""

    xc: float
    yc: float
    r: float
    rms_radial_residual: float

    @property
    def center(self) -> complex:
        return complex(self.xc, self.yc)


@dataclass
class FitResult:
    """Fitted resonance parameters with uncertainties.

    ``covariance`` is the 4x4 matrix over (Q_l, |Q_c|, f_r, phi) in that
    order; the per-parameter sigmas are the square roots of its diagonal and
    ``sigma_q_i`` is the first-order propagation through
    1/Q_i = 1/Q_l - cos(phi)/|Q_c| including covariance cross terms.
    """

    q_l: float
    q_c_mag: float
    q_i: float
    f_r_hz: float
    phi_rad: float
    theta0_rad: float
    background: Background
    sigma_q_l: float
    sigma_q_c_mag: float
    sigma_q_i: float
    sigma_f_r_hz: float
    sigma_phi_rad: float
    covariance: np.ndarray
    chi2: float
    n_points: int
    diagnostics: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        """JSON-ready dictionary with fixed field names."""
        return {
            "q_l": self.q_l,
            "q_c_mag": self.q_c_mag,
            "q_i": self.q_i,
            "f_r_hz": self.f_r_hz,
            "phi_rad": self.phi_rad,
            "theta0_rad": self.theta0_rad,
            "a": self.background.a,
            "alpha_rad": self.background.alpha,
            "tau_s": self.background.tau_s,
            "sigma_q_l": self.sigma_q_l,
            "sigma_q_c_mag": self.sigma_q_c_mag,
            "sigma_q_i": self.sigma_q_i,
            "sigma_f_r_hz": self.sigma_f_r_hz,
            "sigma_phi_rad": self.sigma_phi_rad,
            "chi2": self.chi2,
            "n_points": self.n_points,
            "covariance": [[float(v) for v in row] for row in self.covariance],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            q_l=d["q_l"], q_c_mag=d["q_c_mag"], q_i=d["q_i"], f_r_hz=d["f_r_hz"],
            phi_rad=d["phi_rad"], theta0_rad=d["theta0_rad"],
            background=Background(a=d["a"], alpha=d["alpha_rad"], tau_s=d["tau_s"]),
            sigma_q_l=d["sigma_q_l"], sigma_q_c_mag=d["sigma_q_c_mag"],
            sigma_q_i=d["sigma_q_i"], sigma_f_r_hz=d["sigma_f_r_hz"],
            sigma_phi_rad=d["sigma_phi_rad"],
            covariance=np.asarray(d["covariance"], dtype=float),
            chi2=d["chi2"], n_points=d["n_points"],
        )


# ---------------------------------------------------------------------------
# circle fit


def fit_circle_algebraic(points) -> CircleGeometry:
    """Algebraic least-squares circle through complex ``points``.

    Taubin's gradient-weighted normalization: with centered coordinates
    (u, v) and q = u^2 + v^2, the smallest eigenvector of the moment (Gram)
    matrix of [(q - q_mean)/(2*sqrt(q_mean)), u, v] gives the circle
    coefficients.  Raises DegenerateGeometryError for fewer than three
    points or (near-)collinear input.
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise DegenerateGeometryError("circle fit needs at least 3 points")
    x, y = z.real, z.imag
    xm, ym = x.mean(), y.mean()
    u, v = x - xm, y - ym
    q = u * u + v * v
    q_mean = q.mean()
    if q_mean <= 0.0:
        raise DegenerateGeometryError("all points coincide")
    scale = 2.0 * math.sqrt(q_mean)
    m = np.column_stack(((q - q_mean) / scale, u, v))
    _, eigvecs = np.linalg.eigh(m.T @ m)
    a_q, a_u, a_v = eigvecs[:, 0]
    a0 = a_q / scale
    a3 = -q_mean * a0
    disc = a_u * a_u + a_v * a_v - 4.0 * a0 * a3
    if a0 == 0.0 or disc <= 0.0:
        raise DegenerateGeometryError("degenerate circle fit (collinear points?)")
    xc = -a_u / (2.0 * a0)
    yc = -a_v / (2.0 * a0)
    r = math.sqrt(disc) / (2.0 * abs(a0))
    if not math.isfinite(r) or r > 1e9 * math.sqrt(q_mean):
        raise DegenerateGeometryError("circle radius diverges (collinear points?)")
    dist = np.hypot(u - xc, v - yc)
    rms = float(np.sqrt(np.mean((dist - r) ** 2)))
    return CircleGeometry(xc=xc + xm, yc=yc + ym, r=r, rms_radial_residual=rms)


def _circle_rms(z: np.ndarray) -> float:
    try:
        return fit_circle_algebraic(z).rms_radial_residual
    except DegenerateGeometryError:
        return float("inf")


def _refine_delay(f: np.ndarray, z: np.ndarray, tau0: float) -> float:
    """Polish a delay estimate.

    Two stages.  (1) Basin localization: scan the algebraic circle-fit
    residual of z*exp(2i*pi*f*tau) over a bracket around ``tau0``; the
    residual has a single deep basin at the true delay but develops false
    shoulders once the off-resonant cluster winds around the origin, so the
    scan must precede any local search.  (2) Precision: Gauss-Newton steps
    through the phase channel.  A residual delay tau~ perturbs the centered
    phase by  -2*pi*tau~*(f - f_mean)*kappa(f)  with the geometric gain
    kappa = 1 + (|c|/r)*cos(theta(f) - arg c); regressing the phase-fit
    residual on that known shape estimates tau~ at first order, which is far
    less noise-sensitive than the circle residual (for which a small winding
    is second order, being mostly absorbed by circle repositioning).
    """
    span = float(f[-1] - f[0])
    stride = max(1, f.size // 1001)
    fs, zs = f[::stride], z[::stride]
    half_width = 1.5 / span
    taus = tau0 + np.linspace(-half_width, half_width, 61)
    coarse = [_circle_rms(zs * np.exp(2j * np.pi * fs * t)) for t in taus]
    tau = float(taus[int(np.argmin(coarse))])

    # Gauss-Newton stage on a light stride: the delay noise floor it reaches
    # is already far below what the downstream fit can feel.
    gn_stride = max(1, f.size // 10001)
    fg, zg = f[::gn_stride], z[::gn_stride]
    df = fg - fg.mean()
    warm = None
    for _ in range(10):
        zc = zg * np.exp(2j * np.pi * fg * tau)
        circle = fit_circle_algebraic(zc)
        try:
            theta0, ql, fr, phase = _fit_phase_arrays(fg, zc, circle, p0=warm)
        except FitConvergenceError:
            break
        warm = (theta0, ql, fr)
        model = resonance_phase(fg, fr, ql, theta0)
        rho = phase - model

        kappa = 1.0 + (abs(circle.center) / circle.r) * np.cos(
            model - np.angle(circle.center))
        rel = 1.0 - fg / fr
        w = 1.0 / (1.0 + (2.0 * ql * rel) ** 2)
        # Joint linear step.  The delay regressor df*kappa is estimated
        # alongside the phase-model directions (theta_0, Q_l, f_r) and the
        # center-shift modes cos/sin(theta): whatever part of the winding the
        # circle recentering or the phase fit can absorb is then orthogonal
        # to the delay coefficient, which keeps the step unbiased.
        design = np.column_stack((
            df * kappa, np.ones_like(fg),
            4.0 * rel * w, 4.0 * ql * fg / fr ** 2 * w,
            np.cos(model), np.sin(model),
        ))
        coef, rss, *_ = np.linalg.lstsq(design, rho, rcond=None)
        dtau = -coef[0] / (2.0 * np.pi)
        max_step = 0.1 / span
        dtau = float(np.clip(dtau, -max_step, max_step))
        tau += dtau

        # Stop at the statistical floor of the delay coefficient (noise) or
        # at a negligible winding correction (noiseless).
        dof = max(fg.size - design.shape[1], 1)
        resid_var = float(rss[0]) / dof if rss.size else 0.0
        gram_inv_00 = np.linalg.pinv(design.T @ design)[0, 0]
        se_tau = math.sqrt(max(resid_var * gram_inv_00, 0.0)) / (2.0 * np.pi)
        if abs(dtau) < max(0.5 * se_tau, 1e-11 / (2.0 * np.pi * span)):
            break
    return tau


# ---------------------------------------------------------------------------
# delay removal


def remove_delay(sweep: Sweep, refine: bool = True) -> tuple[Sweep, float]:
    """Estimate the electrical delay and return the unwound sweep.

    The initial estimate is the least-squares slope of the unwrapped phase
    over the full span (tau = -slope/2pi).  With ``refine`` the estimate is
    polished by minimizing the algebraic circle-fit residual of
    z*exp(2i*pi*f*tau) over a bracket around the initial value; the true
    delay makes the resonance trace exactly circular, so bias from the
    resonance phase excursion is removed.  Refinement is the default since
    span-bias studies are sensitive to residual delay.
    """
    if sweep.n_points < 5:
        raise DegreesOfFreedomError("delay removal needs at least 5 points")
    f = sweep.f_hz
    z = sweep.s21
    raw = np.angle(z)
    steps = np.diff(raw)
    wrapped = (steps + np.pi) % (2.0 * np.pi) - np.pi

    # Away from resonance the per-step phase advance must stay well below a
    # half turn or the unwrap is ambiguous.  Check the outer quarter on each
    # side of the (frequency-sorted) sweep.
    n_steps = wrapped.size
    guard = max(1, n_steps // 4)
    outer = np.concatenate((np.arange(guard), np.arange(n_steps - guard, n_steps)))
    bad = outer[np.abs(wrapped[outer]) > np.pi / 2]
    if bad.size:
        idx = int(bad[0])
        raise PhaseUnwrapError(index=idx + 1, step_rad=float(wrapped[idx]))

    phase = np.concatenate(([raw[0]], raw[0] + np.cumsum(wrapped)))
    slope = np.polyfit(f, phase, 1)[0]
    tau = -slope / (2.0 * np.pi)

    if refine:
        tau = _refine_delay(f, z, tau)

    out = sweep.with_s21(z * np.exp(2j * np.pi * f * tau), note=f"delay {tau:.6g} s removed")
    return out, float(tau)


# ---------------------------------------------------------------------------
# phase fit


def _phase_initial_guess(f: np.ndarray, z_raw: np.ndarray, phase: np.ndarray
                         ) -> tuple[float, float]:
    """Initial (f_r, Q_l) for the phase fit.

    Primary: extremum of the smoothed phase slope (the slope at resonance is
    -4*Q_l/f_r).  Fallback when the extremum sits on the sweep edge: the
    sample farthest from the off-resonant point (chord maximum) locates f_r
    and the chord half-maximum crossings give the linewidth.  Guesses only
    need to land in the convergence basin, so everything runs on a strided
    subset of at most ~2000 samples.
    """
    stride = max(1, f.size // 2001)
    f, z_raw, phase = f[::stride], z_raw[::stride], phase[::stride]
    n = f.size
    sig = min(max(2, n // 100), max(2, n // 8))
    smooth = gaussian_filter1d(phase, sig, mode="nearest", truncate=2.5) if n >= 16 else phase
    grad = np.gradient(smooth, f)
    i0 = int(np.argmax(np.abs(grad)))
    fr0 = float(f[i0])
    ql0 = 0.25 * abs(grad[i0]) * fr0

    edge = max(2, n // 50)
    if i0 < edge or i0 >= n - edge or not math.isfinite(ql0) or ql0 <= 0:
        m = max(1, n // 50)
        p_edge = 0.5 * (z_raw[:m].mean() + z_raw[-m:].mean())
        chord = np.abs(z_raw - p_edge)
        chord = uniform_filter1d(chord, min(5, n)) if n >= 5 else chord
        i0 = int(np.argmax(chord))
        fr0 = float(f[i0])
        above = np.flatnonzero(chord >= chord[i0] / math.sqrt(2.0))
        fwhm = float(f[above[-1]] - f[above[0]]) if above.size >= 2 else 0.0
        min_df = float(np.min(np.diff(f)))
        ql0 = fr0 / max(fwhm, 2.0 * min_df)
    return fr0, max(ql0, 1.0)


def fit_phase(sweep: Sweep, circle: CircleGeometry,
              max_iter: int = 100, rel_step_tol: float = 1e-10
              ) -> tuple[float, float, float]:
    """Fit the centered phase to theta(f) = theta_0 + 2*arctan(2*Q_l*(1 - f/f_r)).

    Samples are translated by the fitted circle center before taking the
    unwrapped argument.  A Levenberg-style damped least squares iterates at
    most ``max_iter`` times and converges when the relative step drops below
    ``rel_step_tol``; non-convergence raises FitConvergenceError carrying the
    last iterate.
    """
    theta0, ql, fr, _phase = _fit_phase_arrays(sweep.f_hz, sweep.s21, circle,
                                               max_iter, rel_step_tol)
    return theta0, ql, fr


def _fit_phase_arrays(f: np.ndarray, z_raw: np.ndarray, circle: CircleGeometry,
                      max_iter: int = 100, rel_step_tol: float = 1e-10,
                      p0: tuple[float, float, float] | None = None
                      ) -> tuple[float, float, float, np.ndarray]:
    z = z_raw - circle.center
    phase = np.unwrap(np.angle(z))
    if p0 is not None:
        theta00, ql0, fr0 = p0
        theta00 += round((np.mean(phase - resonance_phase(f, fr0, ql0, theta00)))
                         / (2.0 * np.pi)) * 2.0 * np.pi
    else:
        fr0, ql0 = _phase_initial_guess(f, z_raw, phase)
        theta00 = float(np.mean(phase - resonance_phase(f, fr0, ql0)))
    theta0, ql, fr = _phase_lm(f, phase, theta00, ql0, fr0, max_iter, rel_step_tol)
    return theta0, ql, fr, phase


def _phase_lm(f: np.ndarray, phase: np.ndarray, theta00: float, ql0: float,
              fr0: float, max_iter: int = 100, rel_step_tol: float = 1e-10
              ) -> tuple[float, float, float]:
    # Work in units of the initial guess so the normal matrix stays well
    # conditioned (f_r is ~1e9 while theta_0 is order one).
    scale = np.array([1.0, ql0, fr0], dtype=float)
    p = np.array([theta00, ql0, fr0], dtype=float) / scale
    jac = np.empty((f.size, 3))
    jac[:, 0] = 1.0

    def residual(params):
        theta0, ql, fr = params * scale
        return phase - resonance_phase(f, fr, ql, theta0)

    def fill_jacobian(params):
        _theta0, ql, fr = params * scale
        rel = 1.0 - f / fr
        w = 1.0 / (1.0 + (2.0 * ql * rel) ** 2)
        np.multiply(rel, w, out=jac[:, 1])
        jac[:, 1] *= 4.0 * scale[1]
        np.multiply(f, w, out=jac[:, 2])
        jac[:, 2] *= 4.0 * scale[2] * ql / fr ** 2

    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    plateau = 0
    for _ in range(max_iter):
        fill_jacobian(p)
        a = jac.T @ jac
        g = jac.T @ r
        d = np.diag(a).copy()
        d[d <= 0] = 1.0
        converged = False
        accepted = False
        while lam < 1e30:
            try:
                step = np.linalg.solve(a + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(p), 1e-300)))
            if rel_step < rel_step_tol:
                converged = True  # proposed correction is negligible
                break
            cand = p + step
            if cand[1] <= 0 or cand[2] <= 0:
                lam *= 10.0
                continue
            r_new = residual(cand)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                improvement = (cost - cost_new) / max(cost, 1e-300)
                p, r, cost = cand, r_new, cost_new
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                # At a noisy minimum the step never shrinks below the noise
                # scale; a stagnant cost is the convergence signal then.
                plateau = plateau + 1 if improvement < 1e-12 else 0
                break
            lam *= 10.0
        if converged or (accepted and (rel_step < rel_step_tol or plateau >= 3)):
            theta0, ql, fr = p * scale
            return float(theta0), float(ql), float(fr)
        if not accepted:
            raise FitConvergenceError("phase fit stalled (damping exhausted)",
                                      last_iterate=tuple(p * scale))
    raise FitConvergenceError(f"phase fit did not converge in {max_iter} iterations",
                              last_iterate=tuple(p * scale))


# ---------------------------------------------------------------------------
# background calibration and diameter correction


def _noise_floor(z: np.ndarray) -> float:
    """Per-component noise std from adjacent differences far from resonance."""
    n = z.size
    m = max(2, n // 4)
    d = np.concatenate((np.diff(z[:m]), np.diff(z[-m:])))
    if d.size == 0:
        return 0.0
    return math.sqrt((np.var(d.real) + np.var(d.imag)) / 4.0)


def calibrate_background(sweep: Sweep, tau_s: float, circle: CircleGeometry,
                         theta_0: float) -> tuple[Sweep, Background]:
    """Divide out the background amplitude and phase offset.

    The off-resonant point is the circle point diametrically opposite the
    resonance dip, P_off = center + r*exp(i*(theta_0 + pi)); its magnitude
    and argument give (a, alpha).  The returned sweep has its off-resonant
    point at 1+0i.  Emits UnreliableCalibrationWarning when |P_off| is
    within a decade of the estimated noise floor.
    """
    p_off = circle.center + circle.r * np.exp(1j * (theta_0 + np.pi))
    a = abs(p_off)
    alpha = float(np.angle(p_off))
    if a <= 0:
        raise InvalidParameterError("off-resonant point at origin; cannot calibrate")
    sigma = _noise_floor(sweep.s21)
    if a < 10.0 * sigma:
        warnings.warn(UnreliableCalibrationWarning(
            f"off-resonant point magnitude {a:.3g} is below 10x the estimated "
            f"noise floor {sigma:.3g}; calibration may be unreliable"))
    z = sweep.s21 / (a * np.exp(1j * alpha))
    return (sweep.with_s21(z, note="background calibrated"),
            Background(a=a, alpha=alpha, tau_s=tau_s))


def diameter_correct(circle: CircleGeometry, theta_0: float, q_l: float,
                     f_r_hz: float, off_resonant_point: complex
                     ) -> tuple[float, float, float]:
    """Separate |Q_c|, phi, and Q_i from the calibrated circle.

    d = 2r gives |Q_c| = Q_l/d.  phi is the angle of the resonance-dip
    direction (off-resonant point toward the diametrically opposed circle
    point) measured against the negative real axis.  Q_i follows from
    1/Q_i = 1/Q_l - cos(phi)/|Q_c|; a non-positive right-hand side raises
    NonphysicalQiError rather than being clamped.
    """
    d = 2.0 * circle.r
    if d <= 0 or q_l <= 0:
        raise InvalidParameterError("need positive circle diameter and q_l")
    q_c_mag = q_l / d
    dip = 2.0 * circle.center - off_resonant_point
    phi = float(np.angle(off_resonant_point - dip))
    inv_qi = 1.0 / q_l - math.cos(phi) / q_c_mag
    if inv_qi <= 0:
        raise NonphysicalQiError(
            f"1/Q_l - cos(phi)/|Q_c| = {inv_qi:.3g} <= 0 "
            f"(d = {d:.6g}, phi = {phi:.6g}); internal quality factor is not physical")
    return q_c_mag, phi, 1.0 / inv_qi


# ---------------------------------------------------------------------------
# uncertainties


def s21_gradient(f_hz, q_l, q_c_mag, f_r_hz, phi) -> np.ndarray:
    """Analytical partials of the identity-background model, shape (4, N).

    Rows are d S21 / d(Q_l, |Q_c|, f_r, phi).
    """
    f = np.asarray(f_hz, dtype=float)
    denom = 1.0 + 2j * q_l * (f / f_r_hz - 1.0)
    e = np.exp(1j * phi)
    d_ql = -e / (q_c_mag * denom ** 2)
    d_qc = q_l * e / (q_c_mag ** 2 * denom)
    d_fr = -2j * q_l ** 2 * f * e / (q_c_mag * f_r_hz ** 2 * denom ** 2)
    d_phi = -1j * q_l * e / (q_c_mag * denom)
    return np.stack((d_ql, d_qc, d_fr, d_phi))


def estimate_uncertainties(sweep: Sweep, result: FitResult, dof_params: int = 4
                           ) -> tuple[np.ndarray, dict]:
    """Covariance over (Q_l, |Q_c|, f_r, phi) and per-parameter sigmas.

    Residuals chi_i = S21_data - S21_fit are taken on the calibrated sweep
    against the identity-background model.  The Jacobian row for point i is
    the projection of the analytical model gradient onto the unit residual
    direction, J_ij = Re{dS21/d eps_j * conj(chi_i)/|chi_i|}; rows whose
    |chi_i| falls below 1e-3 of the maximum use the unit model tangent
    (dS21/df direction) instead, which keeps the formula defined at
    chi_i = 0.  Then  sigma^2 = chi^2/(N - dof_params) * (J^T J)^-1  with
    chi^2 the total squared residual.

    ``dof_params`` is 4 by convention (the four model parameters); 6 is
    available for comparison since the background adds two more estimated
    quantities.
    """
    n = sweep.n_points
    if n <= dof_params:
        raise DegreesOfFreedomError(
            f"need more than {dof_params} points for uncertainties, got {n}")
    f = sweep.f_hz
    model = s21_raw(f, result.f_r_hz, result.q_l, result.q_c_mag, result.phi_rad)
    chi = sweep.s21 - model
    abs_chi = np.abs(chi)
    chi2 = float(np.sum(abs_chi ** 2))

    # Noiseless input: residuals sit at the solver floor, their directions are
    # rounding artifacts, and chi^2 = 0 for all practical purposes, so every
    # sigma is zero by the covariance formula.
    rel_resid = abs_chi.max() / max(1.0, float(np.abs(sweep.s21).max()))
    zeros = {"sigma_q_l": 0.0, "sigma_q_c_mag": 0.0, "sigma_f_r_hz": 0.0,
             "sigma_phi_rad": 0.0, "n_guarded": n}
    if rel_resid <= 1e-7:
        return np.zeros((4, 4)), zeros

    grad = s21_gradient(f, result.q_l, result.q_c_mag, result.f_r_hz, result.phi_rad)

    denom = 1.0 + 2j * result.q_l * (f / result.f_r_hz - 1.0)
    tangent = (2j * result.q_l ** 2 * np.exp(1j * result.phi_rad)
               / (result.q_c_mag * result.f_r_hz * denom ** 2))
    tangent = tangent / np.abs(tangent)

    cutoff = 1e-3 * abs_chi.max()
    guarded = abs_chi <= cutoff
    directions = np.where(guarded, tangent, chi / np.where(abs_chi == 0, 1.0, abs_chi))

    jt = np.real(grad * np.conj(directions))  # (4, N)
    normal = jt @ jt.T

    # Condition test on the correlation-normalized matrix: the raw normal
    # matrix mixes units (per-Hz columns are ~1e-13 of per-radian ones), so
    # a raw eigenvalue ratio would flag scale, not rank.
    d = np.sqrt(np.diag(normal))
    if np.any(d == 0):
        null = {name: 1.0 if d[i] == 0 else 0.0 for i, name in enumerate(_PARAM_NAMES)}
        raise RankDeficiencyError(null)
    corr = normal / np.outer(d, d)
    eigval, eigvec = np.linalg.eigh(corr)
    if eigval[0] <= 1e-12:
        if rel_resid <= 1e-5:
            # Coherent solver leftovers (e.g. a residual rotation) rather
            # than noise: the direction field is degenerate by construction.
            return np.zeros((4, 4)), zeros
        null = {name: float(c) for name, c in zip(_PARAM_NAMES, eigvec[:, 0] / d)}
        raise RankDeficiencyError(null)
    cov = chi2 / (n - dof_params) * (np.linalg.inv(corr) / np.outer(d, d))
    cov = 0.5 * (cov + cov.T)
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sigmas = {
        "sigma_q_l": float(sig[0]),
        "sigma_q_c_mag": float(sig[1]),
        "sigma_f_r_hz": float(sig[2]),
        "sigma_phi_rad": float(sig[3]),
        "n_guarded": int(np.count_nonzero(guarded)),
    }
    return cov, sigmas


def propagate_qi_error(result: FitResult) -> float:
    """First-order propagation of the covariance onto Q_i.

    sigma_Qi^2 = g^T Sigma g with g the gradient of
    Q_i(Q_l, |Q_c|, phi) = 1/(1/Q_l - cos(phi)/|Q_c|); the f_r component
    vanishes.  Cross terms of the covariance are included.
    """
    qi, ql, qc, phi = result.q_i, result.q_l, result.q_c_mag, result.phi_rad
    g = np.array([
        qi ** 2 / ql ** 2,
        -qi ** 2 * math.cos(phi) / qc ** 2,
        0.0,
        -qi ** 2 * math.sin(phi) / qc,
    ])
    var = float(g @ np.asarray(result.covariance, dtype=float) @ g)
    return math.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# full pipeline


def fit_full(sweep: Sweep, refine_delay: bool = True, dof_params: int = 4) -> FitResult:
    """Run the complete pipeline on a raw sweep.

    Stage order: remove_delay, circle fit, phase fit, background calibration,
    circle and phase re-fit on calibrated data, diameter correction,
    uncertainty estimation.  Any stage error is re-raised with its ``stage``
    attribute set; intermediates land in ``FitResult.diagnostics``.
    """
    if sweep.n_points <= dof_params:
        err = DegreesOfFreedomError(
            f"fit needs more than {dof_params} points (N - {dof_params} > 0 degrees "
            f"of freedom), got {sweep.n_points}")
        err.stage = "precheck"
        raise err

    diagnostics: dict = {}

    def run(stage_name, func, *args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ResfitError as exc:
            exc.stage = stage_name
            raise

    sweep_nodelay, tau = run("remove_delay", remove_delay, sweep, refine=refine_delay)
    diagnostics["tau_s"] = tau

    circle_raw = run("fit_circle_raw", fit_circle_algebraic, sweep_nodelay.s21)
    diagnostics["circle_raw"] = circle_raw

    theta0_raw, ql_raw, fr_raw = run("fit_phase_raw", fit_phase, sweep_nodelay, circle_raw)
    diagnostics["phase_raw"] = (theta0_raw, ql_raw, fr_raw)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnreliableCalibrationWarning)
        sweep_cal, background = run("calibrate_background", calibrate_background,
                                    sweep_nodelay, tau, circle_raw, theta0_raw)
    for w in caught:
        diagnostics.setdefault("warnings", []).append(str(w.message))
        warnings.warn(w.message, w.category, stacklevel=2)

    circle = run("fit_circle_calibrated", fit_circle_algebraic, sweep_cal.s21)
    diagnostics["circle_calibrated"] = circle

    theta0, q_l, f_r = run("fit_phase_calibrated", fit_phase, sweep_cal, circle)
    diagnostics["phase_calibrated"] = (theta0, q_l, f_r)

    p_off = circle.center + circle.r * np.exp(1j * (theta0 + np.pi))
    diagnostics["off_resonant_point"] = p_off

    q_c_mag, phi, q_i = run("diameter_correct", diameter_correct,
                            circle, theta0, q_l, f_r, p_off)

    result = FitResult(
        q_l=q_l, q_c_mag=q_c_mag, q_i=q_i, f_r_hz=f_r, phi_rad=phi,
        theta0_rad=theta0, background=background,
        sigma_q_l=0.0, sigma_q_c_mag=0.0, sigma_q_i=0.0,
        sigma_f_r_hz=0.0, sigma_phi_rad=0.0,
        covariance=np.zeros((4, 4)), chi2=0.0, n_points=sweep.n_points,
        diagnostics=diagnostics,
    )
    cov, sigmas = run("estimate_uncertainties", estimate_uncertainties,
                      sweep_cal, result, dof_params)
    result.covariance = cov
    result.sigma_q_l = sigmas["sigma_q_l"]
    result.sigma_q_c_mag = sigmas["sigma_q_c_mag"]
    result.sigma_f_r_hz = sigmas["sigma_f_r_hz"]
    result.sigma_phi_rad = sigmas["sigma_phi_rad"]
    model = s21_raw(sweep_cal.f_hz, f_r, q_l, q_c_mag, phi)
    result.chi2 = float(np.sum(np.abs(sweep_cal.s21 - model) ** 2))
    result.sigma_q_i = propagate_qi_error(result)
    diagnostics["n_guarded_rows"] = sigmas["n_guarded"]
    diagnostics["sweep_calibrated"] = sweep_cal
    return result
