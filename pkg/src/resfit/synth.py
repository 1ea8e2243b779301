"""Frequency-grid construction and synthetic sweep generation.

Two grid families are provided.  The standard point distribution (SPD) is
the ordinary linear VNA grid.  The homophasal point distribution (HPD)
inverts the frequency-phase relation

    f(theta) = f_r * (1 - tan((theta - theta_0)/2) / (2*Q_l))

and places points at equidistant phases so the resonance trace is sampled
uniformly around its circle.  Noise injection adds complex Gaussian
background noise and, separately, resonance-frequency jitter which moves
samples along the circle (rotational jitter) without leaving its locus.

Reproducibility: every stochastic routine takes a 64-bit seed and derives
independent substreams with ``numpy.random.SeedSequence``.  Benchmarks
derive one seed per (cell, trial) via :func:`derive_seed`, which makes
results independent of execution order and worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, ValidationError
from .model import Background, ResonatorParams, s21_raw

_FR_SPECTRA = ("white", "one_over_sqrt_f")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for synthetic sweeps.

    sigma_n_re / sigma_n_im : std of the additive real/imaginary background
        noise (dimensionless transmission units); may differ (anisotropic).
    sigma_fr_hz             : std of the per-point resonance-frequency jitter.
    fr_spectrum             : "white" or "one_over_sqrt_f" (spectrally shaped
        jitter with power density ~ 1/sqrt(f), same total variance).
    seed                    : 64-bit seed; equal seeds give bit-identical sweeps.
    """

    sigma_n_re: float = 0.0
    sigma_n_im: float = 0.0
    sigma_fr_hz: float = 0.0
    fr_spectrum: str = "white"
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_n_re", "sigma_n_im", "sigma_fr_hz"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if self.fr_spectrum not in _FR_SPECTRA:
            raise InvalidParameterError(f"fr_spectrum must be one of {_FR_SPECTRA}")

    @classmethod
    def isotropic(cls, sigma_n: float, sigma_fr_hz: float = 0.0, seed: int = 0,
                  fr_spectrum: str = "white") -> "NoiseSpec":
        return cls(sigma_n_re=sigma_n, sigma_n_im=sigma_n,
                   sigma_fr_hz=sigma_fr_hz, fr_spectrum=fr_spectrum, seed=seed)

    @property
    def is_noiseless(self) -> bool:
        return self.sigma_n_re == 0.0 and self.sigma_n_im == 0.0 and self.sigma_fr_hz == 0.0


@dataclass
class Sweep:
    """Ordered frequency sweep with complex transmission samples.

    Structural invariants (checked at construction): finite values, strictly
    increasing frequencies, span consistent with the frequency extent.
    Statistical sufficiency (N - 4 > 0 fit degrees of freedom) is enforced
    where it matters, at fit time.
    """

    f_hz: np.ndarray
    s21: np.ndarray
    grid_kind: str = "SPD"
    span_hz: float | None = None
    center_hz: float | None = None
    provenance: str = ""

    def __post_init__(self):
        self.f_hz = np.asarray(self.f_hz, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        if self.f_hz.ndim != 1 or self.f_hz.shape != self.s21.shape:
            raise ValidationError("f_hz and s21 must be 1-D arrays of equal length")
        if self.f_hz.size == 0:
            raise ValidationError("sweep must contain at least one sample")
        if not np.all(np.isfinite(self.f_hz)) or np.any(self.f_hz <= 0):
            raise ValidationError("frequencies must be finite and > 0")
        if not np.all(np.isfinite(self.s21.view(float))):
            raise ValidationError("s21 samples must be finite")
        if np.any(np.diff(self.f_hz) <= 0):
            bad = int(np.flatnonzero(np.diff(self.f_hz) <= 0)[0]) + 1
            raise ValidationError(f"frequencies must be strictly increasing (sample {bad})")
        if self.grid_kind not in ("SPD", "HPD"):
            raise ValidationError("grid_kind must be 'SPD' or 'HPD'")
        extent = float(self.f_hz[-1] - self.f_hz[0])
        if self.span_hz is None:
            self.span_hz = extent
        elif extent > self.span_hz * (1.0 + 1e-9):
            raise ValidationError("frequency extent exceeds the declared span")
        if self.center_hz is None:
            self.center_hz = float(0.5 * (self.f_hz[0] + self.f_hz[-1]))

    @property
    def n_points(self) -> int:
        return int(self.f_hz.size)

    def with_s21(self, s21: np.ndarray, note: str = "") -> "Sweep":
        prov = self.provenance if not note else f"{self.provenance}; {note}".lstrip("; ")
        return replace(self, s21=np.asarray(s21, dtype=complex), provenance=prov)


@dataclass(frozen=True)
class TraceAveragePlan:
    """Power-dependent trace-averaging plan: n_tr sweeps averaged at p_vna_dbm."""

    p_vna_dbm: float
    n_tr: int

    def __post_init__(self):
        if self.n_tr < 1:
            raise InvalidParameterError("n_tr must be >= 1")

    @property
    def noise_scale(self) -> float:
        """Factor applied to sigma_n when averaging is emulated: 1/sqrt(n_tr)."""
        return 1.0 / math.sqrt(self.n_tr)


def trace_average_plan(p_vna_dbm: float) -> TraceAveragePlan:
    """Trace count for an instrument output power:

        n_tr = round((P + 50)^2 + 20)   for P < -50 dBm
        n_tr = 20                       otherwise
    """
    if not math.isfinite(p_vna_dbm):
        raise InvalidParameterError("p_vna_dbm must be finite")
    if p_vna_dbm < -50.0:
        n_tr = int(round((p_vna_dbm + 50.0) ** 2 + 20.0))
    else:
        n_tr = 20
    return TraceAveragePlan(p_vna_dbm=p_vna_dbm, n_tr=n_tr)


def grid_spd(center_hz: float, span_hz: float, n_points: int) -> np.ndarray:
    """Linear grid: ``n_points`` frequencies uniform over center +- span/2."""
    if span_hz <= 0:
        raise InvalidParameterError("span_hz must be > 0")
    if n_points < 2:
        raise InvalidParameterError("n_points must be >= 2")
    return np.linspace(center_hz - span_hz / 2.0, center_hz + span_hz / 2.0, n_points)


def freq_at_phase_offset(f_r_hz: float, q_l: float, dtheta) -> np.ndarray:
    """Inverse frequency-phase relation:

        f = f_r * (1 - tan(dtheta/2) / (2*Q_l)),   dtheta = theta - theta_0.
    """
    dtheta = np.asarray(dtheta, dtype=float)
    if np.any(np.abs(dtheta) >= np.pi * (1 - 1e-6)):
        raise InvalidParameterError("phase offset too close to +-pi; tan diverges")
    return f_r_hz * (1.0 - np.tan(dtheta / 2.0) / (2.0 * q_l))


def grid_hpd(f_r_hz: float, q_l: float, n_points: int,
             span_hz: float | None = None) -> np.ndarray:
    """Homophasal grid: frequencies whose circle phases are equidistant.

    Phases follow the midpoint rule on the open interval (-theta_max,
    +theta_max): theta_k - theta_0 = -theta_max + (2k+1)*theta_max/N.  By
    default theta_max = pi (full circle; for odd N the middle point is
    exactly f_r).  When ``span_hz`` is given the grid is confined to the band
    f_r +- span/2 via theta_max = 2*arctan(span/linewidth); benchmarks use
    the default full-circle form.
    """
    if q_l <= 0:
        raise InvalidParameterError("q_l must be > 0")
    if n_points < 5:
        raise InvalidParameterError("n_points must be >= 5 for an HPD grid")
    if span_hz is None:
        theta_max = np.pi
    else:
        if span_hz <= 0:
            raise InvalidParameterError("span_hz must be > 0")
        theta_max = 2.0 * np.arctan(span_hz * q_l / f_r_hz)
    k = np.arange(n_points)
    dtheta = -theta_max + (2 * k + 1) * theta_max / n_points
    f = freq_at_phase_offset(f_r_hz, q_l, dtheta)
    f.sort()
    if np.any(f <= 0):
        raise InvalidParameterError(
            "HPD grid extends to non-positive frequencies; reduce n_points or band-limit")
    return f


def derive_seed(master_seed: int, *indices: int) -> int:
    """Deterministic 64-bit child seed for a (cell, trial, ...) index tuple.

    Uses SeedSequence spawn keys, so streams for different index tuples are
    statistically independent and identical across platforms and schedules.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(indices))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _shaped_fr_jitter(rng: np.random.Generator, n: int, sigma: float, spectrum: str
                      ) -> np.ndarray:
    """Per-point resonance-frequency jitter, white or 1/sqrt(f)-shaped.

    The shaped variant filters white noise in the spectral domain with
    amplitude ~ k^(-1/4) (power ~ 1/sqrt(k)), zeroes the DC term, and
    rescales to the requested total variance.
    """
    white = rng.normal(0.0, 1.0, n)
    if spectrum == "white" or n < 4:
        return sigma * white
    spec = np.fft.rfft(white)
    k = np.arange(spec.size, dtype=float)
    shaping = np.zeros_like(k)
    shaping[1:] = k[1:] ** -0.25
    shaped = np.fft.irfft(spec * shaping, n=n)
    rms = np.sqrt(np.mean(shaped ** 2))
    if rms == 0.0:
        return np.zeros(n)
    return sigma * shaped / rms


def inject_noise(params: ResonatorParams, bg: Background, f_hz, noise: NoiseSpec,
                 grid_kind: str = "SPD", span_hz: float | None = None,
                 center_hz: float | None = None, n_traces: int = 1,
                 literal_averaging: bool = False) -> Sweep:
    """Synthesize a noisy sweep on the frequency grid ``f_hz``.

    For each point a resonance-frequency deviation is drawn (std
    ``sigma_fr_hz``), the model is evaluated at the jittered f_r, and complex
    Gaussian background noise is added.  Trace averaging over ``n_traces``
    sweeps is emulated by scaling sigma_n with 1/sqrt(n_traces); pass
    ``literal_averaging=True`` to actually draw and average that many noisy
    sweeps (slower, identical statistics, useful for validation).

    Deterministic given ``noise.seed``: draws are consumed in fixed order
    (jitter, then real noise, then imaginary noise, each indexed by point
    rank), so grids of equal length share identical noise realizations.
    """
    f = np.asarray(f_hz, dtype=float)
    if f.size == 0:
        raise InvalidParameterError("frequency grid is empty")
    if n_traces < 1:
        raise InvalidParameterError("n_traces must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(noise.seed))

    def one_trace(sig_re: float, sig_im: float) -> np.ndarray:
        if noise.sigma_fr_hz > 0:
            jitter = _shaped_fr_jitter(rng, f.size, noise.sigma_fr_hz, noise.fr_spectrum)
        else:
            jitter = 0.0
        z = s21_raw(f, params.f_r_hz + jitter, params.q_l, params.q_c_mag,
                    params.phi, bg.a, bg.alpha, bg.tau_s)
        if sig_re > 0:
            z = z + rng.normal(0.0, sig_re, f.size)
        if sig_im > 0:
            z = z + 1j * rng.normal(0.0, sig_im, f.size)
        return z

    if literal_averaging and n_traces > 1:
        z = np.mean([one_trace(noise.sigma_n_re, noise.sigma_n_im)
                     for _ in range(n_traces)], axis=0)
    else:
        scale = 1.0 / math.sqrt(n_traces)
        z = one_trace(noise.sigma_n_re * scale, noise.sigma_n_im * scale)

    prov = (f"synthetic f_r={params.f_r_hz:.6g} q_i={params.q_i:.6g} "
            f"q_c_mag={params.q_c_mag:.6g} phi={params.phi:.6g} seed={noise.seed}")
    return Sweep(f_hz=f, s21=z, grid_kind=grid_kind, span_hz=span_hz,
                 center_hz=center_hz, provenance=prov)


@dataclass
class HpdPlan:
    """Homophasal measurement plan plus the coarse-scan estimates that built it."""

    f_hz: np.ndarray
    theta_0: float
    q_l: float
    f_r_hz: float
    span_coverage_linewidths: float = field(default=float("nan"))


def plan_hpd_from_scan(coarse: Sweep, n_points: int | None = None,
                       span_hz: float | None = None) -> HpdPlan:
    """Build an HPD plan from a coarse scan of the resonance.

    Runs delay removal, the algebraic circle fit, and the phase fit on the
    coarse sweep to estimate (theta_0, Q_l, f_r), then lays out the
    homophasal grid.  Only those three estimates are needed; no prior
    knowledge of Q_c or Q_i.  Warns if the coarse scan covers less than one
    fitted linewidth.
    """
    import warnings

    from . import fit as _fit  # local import; fit depends on this module

    if n_points is None:
        n_points = coarse.n_points
    sweep_nodelay, _tau = _fit.remove_delay(coarse)
    circle = _fit.fit_circle_algebraic(sweep_nodelay.s21)
    theta_0, q_l, f_r = _fit.fit_phase(sweep_nodelay, circle)
    coverage = (coarse.f_hz[-1] - coarse.f_hz[0]) / (f_r / q_l)
    if coverage < 1.0:
        warnings.warn(f"coarse scan covers only {coverage:.2f} fitted linewidths; "
                      "HPD plan may be unreliable")
    f_plan = grid_hpd(f_r, q_l, n_points, span_hz=span_hz)
    return HpdPlan(f_hz=f_plan, theta_0=theta_0, q_l=q_l, f_r_hz=f_r,
                   span_coverage_linewidths=float(coverage))


def write_frequency_plan(path, f_hz) -> None:
    """Export a frequency plan: one ASCII decimal Hz value per line, LF-terminated."""
    f = np.asarray(f_hz, dtype=float)
    with open(path, "w", newline="\n") as fh:
        for value in f:
            fh.write(f"{value:.17g}\n")


def read_frequency_plan(path) -> np.ndarray:
    """Read a frequency plan written by :func:`write_frequency_plan`."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: not a number: {line!r}") from exc
    if not values:
        raise ValidationError(f"{path}: empty frequency plan")
    return np.asarray(values, dtype=float)
