"""Monte Carlo benchmark harness for fit-error studies.

Reproducible by construction: every trial's noise stream derives from
(master_seed, cell_index, trial_index), so results are bit-identical across
reruns, worker counts, and scheduling.  Cells are independent work units and
run in a process pool capped by the RESFIT_THREADS environment variable.

Where the standard (SPD) and homophasal (HPD) grids are compared, trials at
the same cell and trial index consume identical noise draws (noise is
indexed by point rank), making SPD/HPD ratios paired statistics.  The HPD
cells use the full-circle homophasal grid laid out from the true loaded
quality factor; its error and information density are then span-independent
reference lines against the SPD's span axis.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, ResfitError
from .fit import fit_full
from .info import model_entropy_density
from .model import Background, ResonatorParams
from .synth import NoiseSpec, derive_seed, grid_hpd, grid_spd, inject_noise

_BOOTSTRAP_RESAMPLES = 1000
_BOOTSTRAP_TAG = 0xB00
_GRID_KINDS = ("SPD", "HPD")


@dataclass(frozen=True)
class BenchConfig:
    """Axes and knobs for one benchmark sweep.

    Every axis must be nonempty; scalar knobs apply to all cells.  The
    frequency span of an SPD cell is span_ratio * linewidth of that cell's
    true parameters, centered on f_r.
    """

    q_i_values: tuple[float, ...]
    q_c_mag: float = 1e4
    phi: float = 0.0
    f_r_hz: float = 5e9
    background: Background = field(default_factory=Background)
    sigma_n_values: tuple[float, ...] = (1e-3,)
    sigma_fr_values: tuple[float, ...] = (0.0,)
    fr_spectrum: str = "white"
    n_points_values: tuple[int, ...] = (20001,)
    span_ratios: tuple[float, ...] = (10.0,)
    grid_kinds: tuple[str, ...] = ("SPD",)
    trials_per_cell: int = 50
    master_seed: int = 0
    refine_delay: bool = True

    def __post_init__(self):
        for name in ("q_i_values", "sigma_n_values", "sigma_fr_values",
                     "n_points_values", "span_ratios", "grid_kinds"):
            values = getattr(self, name)
            if len(values) == 0:
                raise InvalidParameterError(f"{name} must be nonempty")
            object.__setattr__(self, name, tuple(values))
        if self.trials_per_cell < 1:
            raise InvalidParameterError("trials_per_cell must be >= 1")
        for kind in self.grid_kinds:
            if kind not in _GRID_KINDS:
                raise InvalidParameterError(f"unknown grid kind {kind!r}")

    def cell_count(self) -> int:
        return (len(self.q_i_values) * len(self.sigma_n_values)
                * len(self.sigma_fr_values) * len(self.n_points_values)
                * len(self.span_ratios) * len(self.grid_kinds))

    def to_dict(self) -> dict:
        return {
            "q_i_values": list(self.q_i_values),
            "q_c_mag": self.q_c_mag,
            "phi": self.phi,
            "f_r_hz": self.f_r_hz,
            "background": {"a": self.background.a, "alpha_rad": self.background.alpha,
                           "tau_s": self.background.tau_s},
            "sigma_n_values": list(self.sigma_n_values),
            "sigma_fr_values": list(self.sigma_fr_values),
            "fr_spectrum": self.fr_spectrum,
            "n_points_values": list(self.n_points_values),
            "span_ratios": list(self.span_ratios),
            "grid_kinds": list(self.grid_kinds),
            "trials_per_cell": self.trials_per_cell,
            "master_seed": self.master_seed,
            "refine_delay": self.refine_delay,
        }


@dataclass
class BenchRecord:
    """Per-cell trial arrays plus aggregates over converged trials."""

    cell: dict
    q_i_true: float
    q_i_fit: np.ndarray
    sigma_q_i: np.ndarray
    chi2: np.ndarray
    converged: np.ndarray
    med_rel_sigma: float = float("nan")
    med_rel_sigma_ci: tuple[float, float] = (float("nan"), float("nan"))
    med_true_rel_err: float = float("nan")
    med_true_rel_err_ci: tuple[float, float] = (float("nan"), float("nan"))
    coverage_2sigma: float = float("nan")

    @property
    def n_trials(self) -> int:
        return int(self.converged.size)

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(~self.converged))

    def rel_sigma_trials(self) -> np.ndarray:
        ok = self.converged
        return self.sigma_q_i[ok] / self.q_i_fit[ok]

    def true_rel_err_trials(self) -> np.ndarray:
        ok = self.converged
        return np.abs(self.q_i_fit[ok] - self.q_i_true) / self.q_i_true


def _bootstrap_median_ci(values: np.ndarray, rng: np.random.Generator,
                         n_resamples: int = _BOOTSTRAP_RESAMPLES
                         ) -> tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    medians = np.median(values[idx], axis=1)
    return float(np.percentile(medians, 2.5)), float(np.percentile(medians, 97.5))


def _finish_record(record: BenchRecord, master_seed: int, cell_index: int) -> BenchRecord:
    rng = np.random.default_rng(derive_seed(master_seed, _BOOTSTRAP_TAG, cell_index))
    rel_sigma = record.rel_sigma_trials()
    true_err = record.true_rel_err_trials()
    if rel_sigma.size:
        record.med_rel_sigma = float(np.median(rel_sigma))
        record.med_rel_sigma_ci = _bootstrap_median_ci(rel_sigma, rng)
        record.med_true_rel_err = float(np.median(true_err))
        record.med_true_rel_err_ci = _bootstrap_median_ci(true_err, rng)
        ok = record.converged
        within = np.abs(record.q_i_fit[ok] - record.q_i_true) <= 2.0 * record.sigma_q_i[ok]
        record.coverage_2sigma = float(np.mean(within))
    return record


def _run_cell(args) -> BenchRecord:
    (cell_index, cell, params_fields, bg, sigma_n, sigma_fr, fr_spectrum,
     n_points, span_ratio, grid_kind, trials, master_seed, refine_delay) = args
    params = ResonatorParams(**params_fields)
    span = span_ratio * params.linewidth_hz
    if grid_kind == "SPD":
        f_grid = grid_spd(params.f_r_hz, span, n_points)
    else:
        f_grid = grid_hpd(params.f_r_hz, params.q_l, n_points)
    q_i_fit = np.full(trials, np.nan)
    sigma_q_i = np.full(trials, np.nan)
    chi2 = np.full(trials, np.nan)
    converged = np.zeros(trials, dtype=bool)
    for t in range(trials):
        noise = NoiseSpec(sigma_n_re=sigma_n, sigma_n_im=sigma_n,
                          sigma_fr_hz=sigma_fr, fr_spectrum=fr_spectrum,
                          seed=derive_seed(master_seed, cell_index, t))
        sweep = inject_noise(params, bg, f_grid, noise, grid_kind=grid_kind)
        try:
            result = fit_full(sweep, refine_delay=refine_delay)
        except ResfitError:
            continue
        q_i_fit[t] = result.q_i
        sigma_q_i[t] = result.sigma_q_i
        chi2[t] = result.chi2
        converged[t] = True
    record = BenchRecord(cell=cell, q_i_true=params.q_i, q_i_fit=q_i_fit,
                         sigma_q_i=sigma_q_i, chi2=chi2, converged=converged)
    return _finish_record(record, master_seed, cell_index)


def worker_count() -> int:
    """Process count for cell execution; RESFIT_THREADS caps it."""
    n = os.cpu_count() or 1
    env = os.environ.get("RESFIT_THREADS")
    if env:
        try:
            n = max(1, min(n, int(env)))
        except ValueError:
            raise InvalidParameterError(f"RESFIT_THREADS must be an integer, got {env!r}")
    return n


def _run_cells(tasks: list) -> list[BenchRecord]:
    workers = worker_count()
    if workers <= 1 or len(tasks) <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, tasks, chunksize=1))


def _build_tasks(cfg: BenchConfig, paired: bool) -> list:
    """Task tuples for every cell in canonical axis order.

    With ``paired`` the per-trial seed index ignores the grid kind, so grids
    at the same axis point consume identical noise draws (point-rank indexed),
    making SPD/HPD comparisons paired statistics.
    """
    tasks = []
    pair_counter: dict = {}
    index = 0
    for q_i in cfg.q_i_values:
        for sigma_n in cfg.sigma_n_values:
            for sigma_fr in cfg.sigma_fr_values:
                for n_points in cfg.n_points_values:
                    for span_ratio in cfg.span_ratios:
                        for kind in cfg.grid_kinds:
                            cell = {
                                "q_i_true": q_i, "q_c_mag": cfg.q_c_mag,
                                "phi": cfg.phi, "sigma_n": sigma_n,
                                "sigma_fr_hz": sigma_fr, "n_points": n_points,
                                "span_ratio": span_ratio, "grid_kind": kind,
                            }
                            params_fields = {
                                "f_r_hz": cfg.f_r_hz, "q_i": q_i,
                                "q_c_mag": cfg.q_c_mag, "phi": cfg.phi,
                            }
                            if paired:
                                axis_key = (q_i, sigma_n, sigma_fr, n_points, span_ratio)
                                seed_index = pair_counter.setdefault(
                                    axis_key, len(pair_counter))
                            else:
                                seed_index = index
                            tasks.append((seed_index, cell, params_fields,
                                          cfg.background, sigma_n, sigma_fr,
                                          cfg.fr_spectrum, n_points, span_ratio,
                                          kind, cfg.trials_per_cell,
                                          cfg.master_seed, cfg.refine_delay))
                            index += 1
    return tasks


# ---------------------------------------------------------------------------
# benchmark operations


def sweep_coupling(cfg: BenchConfig) -> list[BenchRecord]:
    """Fit-error curves across the coupling ratio Q_i/|Q_c|.

    Per-cell span is span_ratio linewidths (tracking the loaded quality
    factor), centered on f_r.  Fit failures are recorded, never raised.
    Output is sorted by coupling ratio, then by the noise/point axes.
    """
    records = _run_cells(_build_tasks(cfg, paired=False))
    records.sort(key=lambda r: (r.cell["q_i_true"] / r.cell["q_c_mag"],
                                r.cell["sigma_n"], r.cell["sigma_fr_hz"],
                                r.cell["n_points"]))
    return records


def sweep_span(cfg: BenchConfig) -> list[BenchRecord]:
    """SPD and HPD error statistics across the span ratio axis.

    Runs every grid kind in ``cfg.grid_kinds`` at every span ratio with
    identical per-trial noise seeds (paired statistics).  Span ratios should
    be log-spaced to avoid regression bias in slope fits.
    """
    cfg = replace(cfg, grid_kinds=tuple(cfg.grid_kinds))
    records = _run_cells(_build_tasks(cfg, paired=True))
    records.sort(key=lambda r: (r.cell["span_ratio"], r.cell["grid_kind"],
                                r.cell["sigma_fr_hz"]))
    return records


@dataclass
class RatioCell:
    span_ratio: float
    sigma_fr_hz: float
    ratio_reported: float
    ratio_reported_ci: tuple[float, float]
    ratio_true: float
    ratio_true_ci: tuple[float, float]
    n_pairs: int
    flagged: bool = False


@dataclass
class RatioMap:
    span_ratios: tuple
    sigma_fr_values: tuple
    cells: list[RatioCell]
    crossing_band_hz: dict
    records: list = field(default_factory=list, repr=False)

    def cell(self, span_ratio: float, sigma_fr_hz: float) -> RatioCell:
        for c in self.cells:
            if c.span_ratio == span_ratio and c.sigma_fr_hz == sigma_fr_hz:
                return c
        raise KeyError((span_ratio, sigma_fr_hz))


def _paired_ratio(spd: BenchRecord, hpd: BenchRecord, statistic: str,
                  rng: np.random.Generator) -> tuple[float, tuple[float, float], int]:
    ok = spd.converged & hpd.converged
    if statistic == "reported":
        a = spd.sigma_q_i[ok] / spd.q_i_fit[ok]
        b = hpd.sigma_q_i[ok] / hpd.q_i_fit[ok]
    else:
        a = np.abs(spd.q_i_fit[ok] - spd.q_i_true) / spd.q_i_true
        b = np.abs(hpd.q_i_fit[ok] - hpd.q_i_true) / hpd.q_i_true
    n = int(np.count_nonzero(ok))
    if n == 0:
        return float("nan"), (float("nan"), float("nan")), 0
    ratio = float(np.median(a) / np.median(b))
    idx = rng.integers(0, n, size=(_BOOTSTRAP_RESAMPLES, n))
    boot = np.median(a[idx], axis=1) / np.median(b[idx], axis=1)
    return ratio, (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5))), n


def error_ratio_map(cfg: BenchConfig) -> RatioMap:
    """SPD/HPD error-ratio grid over (span ratio, frequency-noise) axes.

    Both the reported-uncertainty ratio and the paired true-error ratio are
    computed per cell with bootstrap confidence intervals.  Cells whose HPD
    trials all failed are flagged and carry NaN ratios.  The map also
    reports, per span ratio, the frequency-noise band where the reported
    ratio crosses 1 (the onset of frequency-noise dominance).
    """
    cfg = replace(cfg, grid_kinds=("SPD", "HPD"))
    records = sweep_span(cfg)
    by_key = {(r.cell["span_ratio"], r.cell["sigma_fr_hz"], r.cell["grid_kind"]): r
              for r in records}
    cells = []
    crossing: dict = {}
    for si, sr in enumerate(cfg.span_ratios):
        prev = None
        for fi, sfr in enumerate(cfg.sigma_fr_values):
            spd = by_key[(sr, sfr, "SPD")]
            hpd = by_key[(sr, sfr, "HPD")]
            rng = np.random.default_rng(
                derive_seed(cfg.master_seed, _BOOTSTRAP_TAG + 1, si, fi))
            flagged = not np.any(hpd.converged)
            if flagged:
                cells.append(RatioCell(sr, sfr, float("nan"),
                                       (float("nan"), float("nan")), float("nan"),
                                       (float("nan"), float("nan")), 0, True))
                continue
            rep, rep_ci, n = _paired_ratio(spd, hpd, "reported", rng)
            tru, tru_ci, _ = _paired_ratio(spd, hpd, "true", rng)
            cells.append(RatioCell(sr, sfr, rep, rep_ci, tru, tru_ci, n))
            if prev is not None and prev[1] > 1.0 >= rep and sr not in crossing:
                crossing[sr] = (prev[0], sfr)
            prev = (sfr, rep)
    return RatioMap(span_ratios=tuple(cfg.span_ratios),
                    sigma_fr_values=tuple(cfg.sigma_fr_values),
                    cells=cells, crossing_band_hz=crossing, records=records)


@dataclass
class CollapseReport:
    pairs: list
    ratios: np.ndarray
    curves: np.ndarray          # (n_pairs, n_ratios) normalized sigma curves
    max_pairwise_deviation: float
    records: list = field(default_factory=list, repr=False)


def scaling_collapse(cfg: BenchConfig) -> CollapseReport:
    """Normalized error curves (sigma_Qi/Q_i)*sqrt(N)/sigma_n per (sigma_n, N).

    The report's deviation is the maximum over coupling-ratio points and
    curve pairs of the relative pointwise difference 2|a-b|/(a+b); with a
    single (sigma_n, N) pair it is zero by construction.
    """
    records = sweep_coupling(cfg)
    pairs = [(s, n) for s in cfg.sigma_n_values for n in cfg.n_points_values]
    ratios = np.array(sorted({r.cell["q_i_true"] / r.cell["q_c_mag"] for r in records}))
    curves = np.full((len(pairs), ratios.size), np.nan)
    for rec in records:
        p = pairs.index((rec.cell["sigma_n"], rec.cell["n_points"]))
        k = int(np.argmin(np.abs(ratios - rec.cell["q_i_true"] / rec.cell["q_c_mag"])))
        curves[p, k] = (rec.med_rel_sigma * math.sqrt(rec.cell["n_points"])
                        / rec.cell["sigma_n"])
    max_dev = 0.0
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            a, b = curves[i], curves[j]
            ok = np.isfinite(a) & np.isfinite(b)
            if np.any(ok):
                dev = np.max(2.0 * np.abs(a[ok] - b[ok]) / (a[ok] + b[ok]))
                max_dev = max(max_dev, float(dev))
    return CollapseReport(pairs=pairs, ratios=ratios, curves=curves,
                          max_pairwise_deviation=max_dev, records=records)


@dataclass
class EntropySpanRow:
    span_ratio: float
    h_density_spd: float
    h_density_hpd: float
    rel_sigma_spd: float
    rel_sigma_hpd: float
    clamp_count_spd: int
    clamp_count_hpd: int


@dataclass
class EntropySpanReport:
    rows: list[EntropySpanRow]
    records: list = field(default_factory=list, repr=False)


def entropy_vs_span(cfg: BenchConfig) -> EntropySpanReport:
    """Joint table of information density and fit error across span ratios.

    Entropy is evaluated on the noiseless model (noise in p_r would read as
    spurious information); the fit errors come from noisy trials with paired
    SPD/HPD seeds.  Supports the inverse-square-root regression of error
    against information density.
    """
    cfg = replace(cfg, grid_kinds=("SPD", "HPD"))
    params = ResonatorParams(f_r_hz=cfg.f_r_hz, q_i=cfg.q_i_values[0],
                             q_c_mag=cfg.q_c_mag, phi=cfg.phi)
    records = sweep_span(cfg)
    by_key = {(r.cell["span_ratio"], r.cell["grid_kind"]): r for r in records}
    n_points = cfg.n_points_values[0]
    f_hpd = grid_hpd(params.f_r_hz, params.q_l, n_points)
    h_hpd, clamp_hpd = model_entropy_density(params, f_hpd)
    rows = []
    for sr in cfg.span_ratios:
        f_spd = grid_spd(params.f_r_hz, sr * params.linewidth_hz, n_points)
        h_spd, clamp_spd = model_entropy_density(params, f_spd)
        rows.append(EntropySpanRow(
            span_ratio=sr,
            h_density_spd=h_spd, h_density_hpd=h_hpd,
            rel_sigma_spd=by_key[(sr, "SPD")].med_rel_sigma,
            rel_sigma_hpd=by_key[(sr, "HPD")].med_rel_sigma,
            clamp_count_spd=clamp_spd, clamp_count_hpd=clamp_hpd,
        ))
    return EntropySpanReport(rows=rows, records=records)


# ---------------------------------------------------------------------------
# output


_CSV_COLUMNS = ("q_i_true", "q_c_mag", "phi", "sigma_n", "sigma_fr_hz", "n_points",
                "span_ratio", "grid_kind", "n_trials", "n_failed",
                "med_rel_sigma", "med_rel_sigma_lo", "med_rel_sigma_hi",
                "med_true_rel_err", "med_true_rel_err_lo", "med_true_rel_err_hi",
                "coverage_2sigma")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_records_csv(path, records: list[BenchRecord]) -> None:
    """One row per cell: axes, trial counts, aggregates with CI bounds."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for r in records:
            row = [r.cell["q_i_true"], r.cell["q_c_mag"], r.cell["phi"],
                   r.cell["sigma_n"], r.cell["sigma_fr_hz"], r.cell["n_points"],
                   r.cell["span_ratio"], r.cell["grid_kind"],
                   r.n_trials, r.n_failed,
                   r.med_rel_sigma, r.med_rel_sigma_ci[0], r.med_rel_sigma_ci[1],
                   r.med_true_rel_err, r.med_true_rel_err_ci[0],
                   r.med_true_rel_err_ci[1], r.coverage_2sigma]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_ratio_map_csv(path, ratio_map: RatioMap) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("span_ratio,sigma_fr_hz,ratio_reported,ratio_reported_lo,"
                 "ratio_reported_hi,ratio_true,ratio_true_lo,ratio_true_hi,"
                 "n_pairs,flagged\n")
        for c in ratio_map.cells:
            row = [c.span_ratio, c.sigma_fr_hz, c.ratio_reported,
                   c.ratio_reported_ci[0], c.ratio_reported_ci[1], c.ratio_true,
                   c.ratio_true_ci[0], c.ratio_true_ci[1], c.n_pairs, int(c.flagged)]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_entropy_csv(path, rows: list[EntropySpanRow]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("span_ratio,h_density_spd,h_density_hpd,rel_sigma_spd,"
                 "rel_sigma_hpd,clamp_count_spd,clamp_count_hpd\n")
        for r in rows:
            row = [r.span_ratio, r.h_density_spd, r.h_density_hpd,
                   r.rel_sigma_spd, r.rel_sigma_hpd,
                   r.clamp_count_spd, r.clamp_count_hpd]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def convergence_fraction(records: list[BenchRecord]) -> float:
    total = sum(r.n_trials for r in records)
    failed = sum(r.n_failed for r in records)
    return 1.0 if total == 0 else 1.0 - failed / total


def make_manifest(cfg: BenchConfig, operation: str, started: float,
                  records: list[BenchRecord] | None = None) -> dict:
    manifest = {
        "operation": operation,
        "config": cfg.to_dict(),
        "cell_count": cfg.cell_count(),
        "elapsed_s": time.time() - started,
        "workers": worker_count(),
    }
    if records is not None:
        manifest["trials_total"] = sum(r.n_trials for r in records)
        manifest["trials_failed"] = sum(r.n_failed for r in records)
        manifest["convergence_fraction"] = convergence_fraction(records)
    return manifest


# ---------------------------------------------------------------------------
# plots (optional SVG emission)


def plot_error_curves(records: list[BenchRecord], path) -> None:
    """Relative error vs coupling ratio, one curve per (sigma_n, N)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.2))
    groups: dict = {}
    for r in records:
        groups.setdefault((r.cell["sigma_n"], r.cell["n_points"]), []).append(r)
    for (sigma_n, n_points), recs in sorted(groups.items()):
        recs.sort(key=lambda r: r.cell["q_i_true"])
        x = [r.cell["q_i_true"] / r.cell["q_c_mag"] for r in recs]
        ax.loglog(x, [r.med_rel_sigma for r in recs], "--",
                  label=f"reported, sigma_n={sigma_n:g}, N={n_points}")
        ax.loglog(x, [r.med_true_rel_err for r in recs], "o", ms=3,
                  label=f"true, sigma_n={sigma_n:g}, N={n_points}")
    ax.set_xlabel("Q_i / |Q_c|")
    ax.set_ylabel("relative Q_i error")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_ratio_map(ratio_map: RatioMap, path) -> None:
    """Heat map of the reported SPD/HPD error ratio."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spans = list(ratio_map.span_ratios)
    sfrs = list(ratio_map.sigma_fr_values)
    grid = np.full((len(sfrs), len(spans)), np.nan)
    for c in ratio_map.cells:
        grid[sfrs.index(c.sigma_fr_hz), spans.index(c.span_ratio)] = c.ratio_reported
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(spans)), [f"{s:g}" for s in spans])
    ax.set_yticks(range(len(sfrs)), [f"{s:g}" for s in sfrs])
    ax.set_xlabel("span / linewidth")
    ax.set_ylabel("sigma_fr (Hz)")
    fig.colorbar(im, ax=ax, label="sigma_SPD / sigma_HPD (reported)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
