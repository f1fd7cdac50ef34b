"""Experiment orchestration, calibration and curve fitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from . import bounds, photon_stats
from . import polarization as pol
from . import tomography as tomo
from .channel import (MemoryConfig, PlanEntry, TrialBatch, entry_rng, load_config,
                      save_config, simulate_entry)

CLASSICAL_LIMIT = 2 / 3
GUIDE_FIELD = 0.034
EXPERIMENTS = ("fidelity_vs_time", "fidelity_vs_time_guided", "process_tomo",
               "threshold_surface", "g2", "efficiency")


class HarnessError(Exception):
    """Failure with a machine-readable ``category``."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class DecayFit:
    f0: float
    tau: float
    crossing: float | None
    decaying: bool
    residual: float = 0.0
    baseline: float = 0.5

    def to_json(self) -> dict:
        return {"f0": self.f0, "tau_us": self.tau, "crossing_us": self.crossing,
                "decaying": self.decaying, "residual": self.residual,
                "baseline": self.baseline}

    def __call__(self, t):
        return gaussian_decay(t, self.f0, self.tau, self.baseline)


def gaussian_decay(t, f0, tau, baseline=0.5):
    return baseline + (f0 - baseline) * np.exp(-np.asarray(t) ** 2 / (2 * tau ** 2))


def gaussian_crossing(f0: float, tau: float, level: float = CLASSICAL_LIMIT,
                      baseline: float = 0.5) -> float | None:
    """Time at which the Gaussian decay reaches ``level`` (``None`` if never)."""
    if not math.isfinite(tau) or f0 <= level or baseline >= level:
        return None
    return tau * math.sqrt(2 * math.log((f0 - baseline) / (level - baseline)))


def tau_for_crossing(f0: float, crossing: float, level: float = CLASSICAL_LIMIT,
                     baseline: float = 0.5) -> float:
    return crossing / math.sqrt(2 * math.log((f0 - baseline) / (level - baseline)))


def fit_gaussian_decay(points, sigma=None, baseline: float | None = 0.5) -> DecayFit:
    """Least-squares fit of ``F(t) = b + (F0 - b) exp(-t^2 / (2 tau^2))``.

    ``b`` is 1/2 (fully mixed output) unless ``baseline=None``, in which case
    it is fitted too.  Data that do not decay (flat, or no measurable decay
    over the sampled times) come back with ``decaying=False`` and
    ``tau = inf``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 4:
        raise ValueError("need at least four (t, F) points")
    t, f = pts[:, 0], pts[:, 1]
    w = None if sigma is None else 1 / np.asarray(sigma, dtype=float)
    t_scale = max(np.abs(t).max(), 1e-12)
    x = t / t_scale
    free = baseline is None
    b0 = float(min(f.min(), 0.5)) if free else baseline

    if np.all(np.abs(f - (f.mean() if free else b0)) < 1e-12):
        return DecayFit(float(f.mean()), math.inf, None, False, 0.0, float(f.mean()) if free else b0)

    def model(p):
        b = p[2] if free else b0
        return b + p[0] * np.exp(-p[1] * x ** 2)

    def resid(p):
        r = model(p) - f
        return r if w is None else r * w

    amp0 = f[np.argmin(np.abs(t))] - b0
    # rate per unit scaled time squared, seeded from a log-linear regression
    y = (f - b0) / amp0 if amp0 != 0 else np.ones_like(f)
    ok = y > 1e-3
    k0 = 1.0
    if ok.sum() >= 2 and np.ptp(x[ok]) > 0:
        k0 = max(-np.polyfit(x[ok] ** 2, np.log(y[ok]), 1)[0], 1e-3)
    p0 = [amp0, k0] + ([b0] if free else [])
    lo = [-1.0, 0.0] + ([0.0] if free else [])
    hi = [1.0, np.inf] + ([1.0] if free else [])
    sol = optimize.least_squares(resid, p0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15,
                                 gtol=1e-15, max_nfev=20000)
    amp, k = sol.x[:2]
    b = float(sol.x[2]) if free else b0
    res = float(np.sqrt(np.mean(sol.fun ** 2)))
    # less than 1e-6 relative decay across the sampled span counts as flat
    if abs(amp) < 1e-9 or k < 1e-6:
        return DecayFit(b + amp, math.inf, None, False, res, b)
    tau = t_scale / math.sqrt(2 * k)
    f0 = b + amp
    return DecayFit(f0, tau, gaussian_crossing(f0, tau, baseline=b), True, res, b)


@dataclass(frozen=True)
class OscillationFit:
    period: float
    amplitude: float
    tau: float
    phase: float


def fit_oscillation(t, f) -> OscillationFit:
    """Fit ``1/2 + a exp(-t^2/(2 tau^2)) cos(2 pi t / P + phase)``.

    The period is seeded from a least-squares periodogram over the sampled
    span.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float) - 0.5
    if len(t) < 6:
        raise ValueError("need at least six points for an oscillation fit")
    span = np.ptp(t)
    dt = np.min(np.diff(np.sort(t)))
    periods = np.linspace(2.5 * dt, span, 2000)
    best = None
    for p in periods:
        a = np.column_stack([np.cos(2 * np.pi * t / p), np.sin(2 * np.pi * t / p)])
        coef, *_ = np.linalg.lstsq(a, f, rcond=None)
        r = np.sum((a @ coef - f) ** 2)
        if best is None or r < best[0]:
            best = (r, p, coef)
    _, p0, (c, s) = best
    amp0 = math.hypot(c, s)
    ph0 = math.atan2(-s, c)

    def model(tt, a, p, phase, inv_tau2):
        return a * np.exp(-0.5 * inv_tau2 * tt ** 2) * np.cos(2 * np.pi * tt / p + phase)

    popt, _ = optimize.curve_fit(model, t, f, p0=[amp0, p0, ph0, 1e-6],
                                 bounds=([0, 0.5 * p0, -np.inf, 0], [1, 2 * p0, np.inf, np.inf]),
                                 maxfev=20000)
    a, p, phase, inv_tau2 = popt
    tau = math.inf if inv_tau2 <= 0 else 1 / math.sqrt(inv_tau2)
    return OscillationFit(float(p), float(a), tau, float(phase))


# ---------------------------------------------------------------------------
# analytic curves and calibration


def analytic_average(t, cfg: MemoryConfig, weighting: str = "uniform",
                     compensate: bool = False, n_bar: float = 1.0) -> np.ndarray:
    """Closed-form average fidelity of the analytic channel.

    Linear inputs keep ``T d cos(psi)`` of their Stokes vector and circular
    inputs ``T``, with ``psi`` the residual rotation angle after optional
    compensation.
    """
    t = np.asarray(t, dtype=float)
    p_sig, p_bg, p_str = cfg.output_weights(n_bar)
    w = p_sig / (p_sig + p_bg + p_str)
    d = np.exp(-0.5 * (cfg.dephasing_rate * t) ** 2)
    c = np.exp(-0.5 * (cfg.transverse_rate * t) ** 2)
    shrink = (1 + 2 * c) / 3
    psi = cfg.readout_phase + (0.0 if compensate else cfg.precession_angle(t))
    f_lin = 0.5 * (1 + w * shrink * d * np.cos(psi))
    f_circ = 0.5 * (1 + w * shrink)
    if weighting == "uniform":
        return (4 * f_lin + 2 * f_circ) / 6
    if weighting == "guided":
        return (2 * f_lin + f_circ) / 3
    raise ValueError(f"unknown weighting {weighting!r}")


def analytic_crossing(cfg: MemoryConfig, weighting: str = "uniform", compensate: bool = False,
                      t_max: float = 1e5) -> float:
    """First time the analytic average fidelity drops to 2/3 (inf if never)."""
    def g(t):
        return float(analytic_average(t, cfg, weighting, compensate)) - CLASSICAL_LIMIT
    if g(0.0) <= 0:
        return 0.0
    if g(t_max) > 0:
        return math.inf
    # step out to the first sign change so oscillating curves give the first crossing
    grid = np.concatenate([[0.0], np.geomspace(1e-3, t_max, 4000)])
    vals = analytic_average(grid, cfg, weighting, compensate) - CLASSICAL_LIMIT
    i = int(np.argmax(vals <= 0))
    return optimize.brentq(g, grid[i - 1], grid[i], xtol=1e-10)


@dataclass(frozen=True)
class CalibrationTargets:
    t_cross_unguided: float = 82.0
    mean_f_2us: float = 0.927
    t_cross_guided: float | None = 184.0
    guide_field: float = GUIDE_FIELD


@dataclass(frozen=True)
class CalibrationResult:
    config: MemoryConfig
    t_cross_unguided: float
    mean_f_2us: float
    t_cross_guided: float | None
    objective: float


def _evaluate(cfg: MemoryConfig, targets: CalibrationTargets):
    tu = analytic_crossing(cfg)
    f2 = float(analytic_average(2.0, cfg))
    tg = None
    if targets.t_cross_guided is not None:
        tg = analytic_crossing(cfg.replace(b_guide=targets.guide_field), "guided", compensate=True)
    return tu, f2, tg


def _rel2(value, target):
    if math.isinf(value) or math.isinf(target):
        return 0.0 if value == target else 1e6
    return ((value - target) / target) ** 2


def calibrate(targets: CalibrationTargets = CalibrationTargets(),
              base: MemoryConfig | None = None,
              max_field: float = 0.02, grid: int = 41) -> CalibrationResult:
    """Fit the longitudinal and transverse noise amplitudes.

    Minimizes the summed squared relative errors of the targets on the
    analytic channel: a coarse grid over ``[0, max_field]^2`` gauss followed
    by a Nelder-Mead refinement.  Raises if the optimum sits on the upper
    edge of the grid.
    """
    base = base if base is not None else MemoryConfig()
    base = base.replace(b_guide=0.0)
    for name in ("t_cross_unguided", "mean_f_2us"):
        if not getattr(targets, name) > 0:
            raise ValueError(f"target {name} must be positive")
    if targets.t_cross_guided is not None and not targets.t_cross_guided > 0:
        raise ValueError("target t_cross_guided must be positive")
    if math.isinf(targets.t_cross_unguided):
        cfg = base.replace(sigma_b_long=0.0, sigma_b_trans=0.0)
        tu, f2, tg = _evaluate(cfg, targets)
        return CalibrationResult(cfg, tu, f2, tg, 0.0)

    def objective(x):
        sl, st = np.abs(x) * 1e-3
        cfg = base.replace(sigma_b_long=float(sl), sigma_b_trans=float(st))
        tu, f2, tg = _evaluate(cfg, targets)
        val = _rel2(tu, targets.t_cross_unguided) + _rel2(f2, targets.mean_f_2us)
        if tg is not None:
            val += _rel2(tg, targets.t_cross_guided)
        return val

    axis = np.linspace(0, max_field * 1e3, grid)  # in mG
    scores = np.array([[objective((a, b)) for b in axis] for a in axis])
    i, j = np.unravel_index(np.argmin(scores), scores.shape)
    if i == grid - 1 or j == grid - 1:
        raise ValueError("calibration optimum at the edge of the scan range; widen max_field")
    sol = optimize.minimize(objective, [axis[i], axis[j]], method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": 4000})
    sl, st = np.abs(sol.x) * 1e-3
    cfg = base.replace(sigma_b_long=float(round(sl, 10)), sigma_b_trans=float(round(st, 10)))
    tu, f2, tg = _evaluate(cfg, targets)
    return CalibrationResult(cfg, tu, f2, tg, float(sol.fun))


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    config: str | None = None
    seed: int = 0
    trials: int = 10000
    times: tuple[float, ...] = ()
    out: str = "results"
    guided: bool = False
    compensate: bool = False
    guide_field: float = GUIDE_FIELD
    n_bar: float = 1.0
    stray: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise HarnessError("spec", f"unknown experiment {self.experiment!r}")
        if self.trials < 100:
            raise HarnessError("spec", "trials must be at least 100")
        times = tuple(float(t) for t in self.times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise HarnessError("spec", "time grid must be strictly increasing")
        if any(t < 0 for t in times):
            raise HarnessError("spec", "storage times must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise HarnessError("spec", "seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "times", times)

    @property
    def is_guided(self) -> bool:
        return self.guided or self.experiment == "fidelity_vs_time_guided"


DEFAULT_TIMES = {
    "fidelity_vs_time": tuple(float(t) for t in range(0, 241, 10)) + (2.0,),
    "fidelity_vs_time_guided": tuple(float(t) for t in range(0, 401, 4)) + (2.0,),
}


def _times(spec: ExperimentSpec) -> tuple[float, ...]:
    if spec.times:
        return spec.times
    if spec.experiment in DEFAULT_TIMES:
        return tuple(sorted(DEFAULT_TIMES[spec.experiment]))
    return (2.0,)


def _load(spec: ExperimentSpec) -> MemoryConfig:
    if spec.config is None:
        return MemoryConfig()
    try:
        return load_config(spec.config)
    except OSError as exc:
        raise HarnessError("config", f"cannot read config {spec.config}: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise HarnessError("config", str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


@dataclass
class PointEstimate:
    label: str
    t_us: float
    n_trials: int
    stokes: np.ndarray
    stokes_err: np.ndarray
    n_clicks: int


def estimate_point(batch: TrialBatch, label: str, t_us: float) -> PointEstimate:
    counts = tomo.BasisCounts.from_outcomes(batch.basis, batch.outcome)
    est = tomo.reconstruct_state(counts)
    return PointEstimate(label, t_us, len(batch), est.stokes, est.stokes_err,
                         int(counts.totals.sum()))


def point_fidelity(p: PointEstimate, rotate_back: float = 0.0) -> tuple[float, float]:
    """Fidelity against the ideal input and its binomial standard error."""
    s_ideal = pol.stokes_of(pol.state(p.label))
    s = p.stokes
    if rotate_back:
        s = pol.rotate_stokes(s, pol.CIRCULAR_AXIS, rotate_back)
    f = 0.5 * (1 + float(s @ s_ideal))
    # variance of each measured component: (1 - S_b^2) / N_b
    var = (1 - np.clip(p.stokes, -1, 1) ** 2) * p.stokes_err ** 2
    if rotate_back:
        r = pol.rotation_matrix(pol.CIRCULAR_AXIS, rotate_back)
        g = r.T @ s_ideal
    else:
        g = s_ideal
    return float(np.clip(f, 0, 1)), float(0.5 * np.sqrt(np.sum(g ** 2 * var)))


def simulate_points(cfg: MemoryConfig, labels: Sequence[str], times: Sequence[float],
                    trials: int, seed: int, n_bar: float = 1.0) -> list[PointEstimate]:
    """Tomography estimate for every (time, label); entry index fixes the RNG."""
    out = []
    k = 0
    for t in times:
        for label in labels:
            batch = simulate_entry(PlanEntry(label, n_bar, t, trials), cfg, entry_rng(seed, k))
            out.append(estimate_point(batch, label, t))
            k += 1
    return out


def _first_crossing(t, f, level=CLASSICAL_LIMIT) -> float | None:
    """Linear interpolation of the first downward crossing in raw data."""
    t = np.asarray(t)
    f = np.asarray(f)
    below = np.flatnonzero(f <= level)
    if not len(below):
        return None
    i = below[0]
    if i == 0:
        return float(t[0])
    return float(t[i - 1] + (f[i - 1] - level) * (t[i] - t[i - 1]) / (f[i - 1] - f[i]))


def run_fidelity_vs_time(spec: ExperimentSpec, cfg: MemoryConfig, out: Path) -> dict:
    guided = spec.is_guided
    name = "fidelity_vs_time_guided" if guided else "fidelity_vs_time"
    cfg = cfg.replace(b_guide=spec.guide_field if guided else 0.0)
    times = _times(spec)
    weighting = "guided" if guided else "uniform"
    labels = pol.LABELS
    points = simulate_points(cfg, labels, times, spec.trials, spec.seed, spec.n_bar)

    rows = []
    per_time: dict[float, dict[str, float]] = {}
    err_time: dict[float, dict[str, float]] = {}
    raw_h = []
    for p in points:
        back = -cfg.precession_angle(p.t_us) if spec.compensate else 0.0
        f, err = point_fidelity(p, back)
        per_time.setdefault(p.t_us, {})[p.label] = f
        err_time.setdefault(p.t_us, {})[p.label] = err
        rows.append([name, p.label, p.t_us, p.n_trials, f, err])
        if p.label == "H":
            raw_h.append((p.t_us, point_fidelity(p)[0]))

    avg_rows = []
    avg_curve = []
    for t in times:
        errs = err_time[t]
        f_avg = pol.average_fidelity(per_time[t], weighting)
        if weighting == "uniform":
            e_avg = math.sqrt(sum(errs[k] ** 2 for k in labels)) / len(labels)
        else:
            e_avg = math.sqrt(4 * errs["H"] ** 2 + errs["L"] ** 2) / 3
        avg_rows.append([name, "avg", t, spec.trials, f_avg, e_avg])
        avg_curve.append((t, f_avg, e_avg))

    _write_csv(out / f"{name}.csv", ["experiment", "input_label", "t_us", "n_trials", "F", "F_err"],
               rows + avg_rows)

    curve = np.array(avg_curve)
    summary: dict = {"experiment": name, "seed": spec.seed, "trials_per_point": spec.trials,
                     "guide_field_gauss": cfg.b_guide, "compensated": spec.compensate,
                     "weighting": weighting}
    first = times[0]
    summary["per_state_fidelity"] = per_time[first]
    summary["per_state_fidelity_t_us"] = first
    summary["average_fidelity"] = {repr(t): f for t, f, _ in avg_curve}
    if len(curve) >= 4:
        sig = np.maximum(curve[:, 2], 1e-6)
        fit = fit_gaussian_decay(curve[:, :2], sigma=sig, baseline=None)
        summary["gaussian_fit"] = fit.to_json()
        summary["gaussian_fit_mixed_baseline"] = fit_gaussian_decay(curve[:, :2], sigma=sig).to_json()
        summary["crossing_us"] = fit.crossing
    summary["crossing_raw_us"] = _first_crossing(curve[:, 0], curve[:, 1])
    if guided and len(raw_h) >= 6:
        th = np.array(raw_h)
        try:
            osc = fit_oscillation(th[:, 0], th[:, 1])
            summary["oscillation_period_us"] = osc.period
        except (RuntimeError, ValueError) as exc:
            summary["oscillation_period_us"] = None
            summary["oscillation_fit_error"] = str(exc)
        summary["expected_period_us"] = (2 * math.pi / cfg.precession_rate
                                         if cfg.precession_rate > 0 else None)
    _write_json(out / f"{name}_summary.json", summary)
    return summary


def run_process_tomo(spec: ExperimentSpec, cfg: MemoryConfig, out: Path) -> dict:
    cfg = cfg.replace(b_guide=spec.guide_field if spec.guided else 0.0)
    t = _times(spec)[0]
    points = simulate_points(cfg, pol.LABELS, [t], spec.trials, spec.seed, spec.n_bar)
    pairs = []
    rows = []
    fids = {}
    for p in points:
        back = -cfg.precession_angle(t) if spec.compensate else 0.0
        s = pol.rotate_stokes(p.stokes, pol.CIRCULAR_AXIS, back) if back else p.stokes
        pairs.append((pol.to_density(pol.state(p.label)), pol.from_stokes(s)))
        f, err = point_fidelity(p, back)
        fids[p.label] = f
        rows.append(["process_tomo", p.label, t, p.n_trials, f, err])
    chi = tomo.reconstruct_process(pairs)
    ell = tomo.ellipsoid(tomo.chi_to_bloch_map(chi))
    avg = pol.average_fidelity(fids)
    rows.append(["process_tomo", "avg", t, spec.trials, avg, ""])
    _write_csv(out / "process_tomo.csv", ["experiment", "input_label", "t_us", "n_trials", "F", "F_err"],
               rows)
    with open(out / "process_tomo_ellipsoid.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(
            [[_fmt(v) for v in r] for r in tomo.ellipsoid_csv_rows(ell)])
    _write_json(out / "process_tomo_chi.json", {"t_us": t, "chi": chi.to_json(),
                                                "ellipsoid": ell.to_json()})
    summary = {"experiment": "process_tomo", "seed": spec.seed, "t_us": t,
               "per_state_fidelity": fids, "average_fidelity": avg,
               "chi_00": chi.chi[0, 0].real, "chi_33": chi.chi[3, 3].real,
               "max_imag": float(np.abs(chi.chi.imag).max()),
               "fit_residual": chi.residual, "clipped_mass": chi.clipped_mass,
               "semi_axes": ell.semi_axes.tolist()}
    _write_json(out / "process_tomo_summary.json", summary)
    return summary


SURFACE_N_BARS = tuple(np.unique(np.round(np.logspace(-2, 1, 31), 12)).tolist())
SURFACE_ETAS = tuple(np.unique(np.concatenate(
    [np.round(np.linspace(0.001, 1.0, 1000), 12), [0.093]])).tolist())


def run_threshold_surface(spec: ExperimentSpec, cfg: MemoryConfig, out: Path) -> dict:
    rows = bounds.threshold_surface(SURFACE_N_BARS, SURFACE_ETAS)
    bounds.write_surface_csv(rows, out / "threshold_surface.csv")
    marker = bounds.max_classical_fidelity(bounds.ClassicalBoundQuery(spec.n_bar, cfg.eta_total))
    summary = {"experiment": "threshold_surface", "n_grid": len(rows),
               "n_feasible": sum(r[3] for r in rows),
               "marker": {"n_bar": spec.n_bar, "eta": cfg.eta_total, "f_max": marker},
               "f_coh_marker": bounds.f_coh(spec.n_bar)}
    _write_json(out / "threshold_surface_summary.json", summary)
    return summary


def run_g2(spec: ExperimentSpec, cfg: MemoryConfig, out: Path) -> dict:
    if not spec.stray:
        cfg = cfg.replace(p_stray=0.0)
    t = _times(spec)[0]
    batches = [simulate_entry(PlanEntry(label, spec.n_bar, t, spec.trials), cfg,
                              entry_rng(spec.seed, k)) for k, label in enumerate(pol.LABELS)]
    batch = TrialBatch.concatenate(batches)
    stream = photon_stats.stream_from_trials(batch, entry_rng(spec.seed, len(batches)))
    res = photon_stats.g2_ratio(stream)
    photon_stats.write_histogram_csv(res, out / "g2.csv")
    summary = {"experiment": "g2", "seed": spec.seed, "n_trials": len(batch),
               "n_clicks": len(stream), "coincidences": res.n_coincidences,
               "single_click_trials": res.n_single,
               "two_photon_fraction": res.two_photon_fraction, "g2_zero": res.g2_zero}
    _write_json(out / "g2_summary.json", summary)
    return summary


def run_efficiency(spec: ExperimentSpec, cfg: MemoryConfig, out: Path) -> dict:
    t = _times(spec)[0]
    rows = []
    result = {}
    for k, (name, c) in enumerate((("config", cfg), ("perfect", MemoryConfig.perfect()))):
        b = simulate_entry(PlanEntry("H", spec.n_bar, t, spec.trials), c, entry_rng(spec.seed, k))
        e = photon_stats.efficiency_energy(b)
        ne = photon_stats.efficiency_per_nonempty(b)
        rows.append([name, spec.n_bar, t, spec.trials, e, ne])
        result[name] = {"energy": e, "per_nonempty": ne}
    _write_csv(out / "efficiency.csv",
               ["memory", "n_bar", "t_us", "n_trials", "eta_energy", "eta_per_nonempty"], rows)
    summary = {"experiment": "efficiency", "seed": spec.seed, "n_bar": spec.n_bar, **result}
    _write_json(out / "efficiency_summary.json", summary)
    return summary


_RUNNERS = {
    "fidelity_vs_time": run_fidelity_vs_time,
    "fidelity_vs_time_guided": run_fidelity_vs_time,
    "process_tomo": run_process_tomo,
    "threshold_surface": run_threshold_surface,
    "g2": run_g2,
    "efficiency": run_efficiency,
}


def run(spec: ExperimentSpec) -> dict:
    """Run one experiment, write its CSV/JSON files and return the summary."""
    cfg = _load(spec)
    out = Path(spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessError("io", f"cannot create output directory {out}: {exc}") from exc
    try:
        return _RUNNERS[spec.experiment](spec, cfg, out)
    except OSError as exc:
        raise HarnessError("io", str(exc)) from exc


def write_calibrated_config(result: CalibrationResult, path) -> None:
    save_config(result.config, path)
