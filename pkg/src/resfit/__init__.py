"""resfit: synthetic resonator sweeps, circle fits, measurement planning, benchmarks."""

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
    ValidationError,
)
from .model import (
    IDENTITY_BACKGROUND,
    PLANCK_H,
    Background,
    ResonatorParams,
    chip_power_w,
    dbm_to_watt,
    df_dtheta,
    on_resonance_power_coefficients,
    phasal_density,
    photon_number,
    resonance_phase,
    s21_ideal,
    s21_raw,
)
from .synth import (
    HpdPlan,
    NoiseSpec,
    Sweep,
    TraceAveragePlan,
    derive_seed,
    freq_at_phase_offset,
    grid_hpd,
    grid_spd,
    inject_noise,
    plan_hpd_from_scan,
    read_frequency_plan,
    trace_average_plan,
    write_frequency_plan,
)
from .fit import (
    CircleGeometry,
    FitResult,
    calibrate_background,
    diameter_correct,
    estimate_uncertainties,
    fit_circle_algebraic,
    fit_full,
    fit_phase,
    propagate_qi_error,
    remove_delay,
    s21_gradient,
)
from .info import (
    EntropyReport,
    absorption_prob,
    entropy_point,
    entropy_set,
    lorentzian_absorption,
    model_entropy_density,
)

__version__ = "0.1.0"
