"""Shannon-entropy information metrics of a resonance sweep.

A transmission sample measures the photon-absorption probability
p_r = |1 - S21|^2 (calibrated background, off-resonant point at 1), and the
information yield of the sample is H(p_r) = -p_r * log2(p_r) bits.  The sum
over a sweep, H_set, and its density H_set/N quantify how much a
measurement can say about the resonance; H peaks where p_r = 1/e.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .model import Background, ResonatorParams, s21_ideal
from .synth import Sweep


@dataclass
class EntropyReport:
    """Per-point and aggregate entropy of a sweep."""

    f_hz: np.ndarray
    p_r: np.ndarray
    h_bits: np.ndarray
    h_set_bits: float
    h_density_bits: float
    clamp_count: int

    def to_rows(self):
        """(f_hz, p_r, h_bits) rows for CSV export."""
        return zip(self.f_hz, self.p_r, self.h_bits)

    def summary(self) -> dict:
        return {
            "h_set_bits": self.h_set_bits,
            "h_density": self.h_density_bits,
            "clamp_count": self.clamp_count,
        }


def absorption_prob(s21) -> np.ndarray | float:
    """Absorption probability p_r = |1 - S21|^2, clamped into [0, 1].

    The model can push |1 - S21| above 1 for phi != 0 (the circle rotates
    past the unit chord); clamping keeps the entropy real.  Use
    ``entropy_set`` to count how many points were clamped.
    """
    p = np.abs(1.0 - np.asarray(s21, dtype=complex)) ** 2
    out = np.clip(p, 0.0, 1.0)
    return out if out.ndim else float(out)


def entropy_point(p_r) -> np.ndarray | float:
    """Pointwise Shannon entropy H(p) = -p*log2(p) in bits, with H(0) = 0."""
    p = np.asarray(p_r, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise InvalidParameterError("p_r must lie in [0, 1]")
    out = np.zeros_like(p)
    mask = p > 0
    out[mask] = -p[mask] * np.log2(p[mask])
    out += 0.0  # kill the -0.0 produced at p = 1
    return out if out.ndim else float(out)


def entropy_set(sweep: Sweep) -> EntropyReport:
    """Entropy table and totals for a calibrated sweep."""
    raw = np.abs(1.0 - sweep.s21) ** 2
    clamp_count = int(np.count_nonzero(raw > 1.0))
    p = np.clip(raw, 0.0, 1.0)
    h = entropy_point(p)
    h_set = float(np.sum(h))
    return EntropyReport(
        f_hz=sweep.f_hz.copy(), p_r=p, h_bits=h,
        h_set_bits=h_set, h_density_bits=h_set / sweep.n_points,
        clamp_count=clamp_count,
    )


def lorentzian_absorption(params: ResonatorParams, f_hz) -> np.ndarray | float:
    """Exact absorption probability of the phi = 0 model:

        p_r(f) = d^2 / (1 + 4*Q_l^2*(f/f_r - 1)^2),   d = Q_l/|Q_c|.
    """
    f = np.asarray(f_hz, dtype=float)
    d = params.diameter
    out = d ** 2 / (1.0 + 4.0 * params.q_l ** 2 * (f / params.f_r_hz - 1.0) ** 2)
    return out if out.ndim else float(out)


def model_entropy_density(params: ResonatorParams, f_hz) -> tuple[float, int]:
    """H_set/N and clamp count of the noiseless model on the grid ``f_hz``.

    Benchmarks call this instead of ``entropy_set`` on noisy data: noise in
    p_r would add spurious entropy to the comparison.
    """
    z = s21_ideal(params, Background(), np.asarray(f_hz, dtype=float))
    raw = np.abs(1.0 - z) ** 2
    clamp_count = int(np.count_nonzero(raw > 1.0))
    h = entropy_point(np.clip(raw, 0.0, 1.0))
    return float(np.mean(h)), clamp_count
