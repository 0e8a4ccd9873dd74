"""Experiment drivers: detuning sweeps, kappa scans, the operating-point
optimization and the monitored Rabi demo."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .engine import (TrajectoryRecord, simulate_ensemble, simulate_trajectory,
                     solve_feedback_unconditional, solve_unconditional)
from .errors import ChernProbeError, ConfigError, InfeasibleError
from .estimation import (chern_from_expectation, ensemble_estimate,
                         shot_noise_bound)
from .model import (ConstantDrive, MeasurementConfig, QuenchProtocol,
                    analytic_chern, mhz, to_mhz)

log = logging.getLogger(__name__)

SWEEP_MODES = ("unprobed", "probed", "probed+feedback")


def _feedback_mode(cfg: MeasurementConfig) -> str:
    return cfg.feedback_mode if cfg.feedback_mode != "none" else "adiabatic"


@dataclass(frozen=True)
class SweepSpec:
    ratio_grid: tuple[float, ...]
    protocol: QuenchProtocol
    cfg: MeasurementConfig
    n_runs: int = 1
    modes: tuple[str, ...] = SWEEP_MODES
    workers: int = 1

    def __post_init__(self):
        grid = tuple(float(r) for r in self.ratio_grid)
        if not grid:
            raise ConfigError("ratio grid is empty")
        if list(grid) != sorted(grid):
            raise ConfigError("ratio grid must be sorted")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        bad = set(self.modes) - set(SWEEP_MODES)
        if bad:
            raise ConfigError(f"unknown sweep modes {sorted(bad)}")
        object.__setattr__(self, "ratio_grid", grid)
        object.__setattr__(self, "modes", tuple(self.modes))


def _sweep_point(spec: SweepSpec, ratio: float, mode: str) -> dict:
    row = {"ratio": ratio, "mode": mode, "cy": math.nan, "cv_mean": math.nan,
           "cv_stderr": math.nan, "eq10_bound": math.nan, "status": "ok"}
    p = spec.protocol.with_ratio(ratio)
    try:
        if mode == "unprobed":
            row["cy"] = chern_from_expectation(
                solve_unconditional(p, spec.cfg.replace(kappa=0.0, feedback_mode="none")), p)
            return row
        if mode == "probed":
            cfg = spec.cfg.replace(feedback_mode="none")
            row["cy"] = chern_from_expectation(solve_unconditional(p, cfg), p)
        else:
            cfg = spec.cfg.replace(feedback_mode=_feedback_mode(spec.cfg))
            row["cy"] = chern_from_expectation(solve_feedback_unconditional(p, cfg), p)
        if cfg.kappa > 0 and cfg.eta > 0:
            row["eq10_bound"] = shot_noise_bound(p, cfg, spec.n_runs)
            if spec.n_runs > 1:
                stats = ensemble_estimate(simulate_ensemble(p, cfg, spec.n_runs), p)
                row["cv_mean"], row["cv_stderr"] = stats.mean, stats.stderr
    except ChernProbeError as exc:
        row["status"] = f"error: {exc}"
        log.warning("sweep point ratio=%g mode=%s failed: %s", ratio, mode, exc)
    return row


def _sweep_job(args):
    return _sweep_point(*args)


def run_sweep(spec: SweepSpec) -> list[dict]:
    """One row per (ratio, mode): deterministic ``C_y`` and, for ``n_runs > 1``,
    ensemble statistics of the signal estimate.

    A failing point is reported with ``status = "error: ..."`` instead of
    aborting the sweep.
    """
    jobs = [(spec, r, m) for r in spec.ratio_grid for m in spec.modes]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(_sweep_job, jobs))
    return [_sweep_job(j) for j in jobs]


def scan_kappa(ratio: float, kappa_grid, p: QuenchProtocol,
               modes=("probed", "probed+feedback"),
               cfg: MeasurementConfig | None = None) -> list[dict]:
    """Deviation of the unconditional ``C_y`` from the unprobed value versus ``kappa``.

    ``kappa_grid`` is in rad/us. Rows also carry the deviation from the
    integer Chern number when it is defined.
    """
    cfg = MeasurementConfig() if cfg is None else cfg
    kappas = np.asarray(kappa_grid, dtype=float)
    if kappas.size == 0 or np.any(kappas <= 0):
        raise ConfigError("kappa grid must be non-empty and positive")
    p = p.with_ratio(ratio)
    base = chern_from_expectation(solve_unconditional(p, cfg.replace(kappa=0.0, feedback_mode="none")), p)
    try:
        integer = analytic_chern(p)
    except ChernProbeError:
        integer = None
    rows = []
    for kappa in kappas:
        for mode in modes:
            row = {"kappa": float(kappa), "kappa_mhz": to_mhz(float(kappa)), "mode": mode,
                   "cy": math.nan, "deviation": math.nan, "deviation_integer": math.nan,
                   "status": "ok"}
            try:
                if mode == "unprobed":
                    cy = base
                elif mode == "probed":
                    c = cfg.replace(kappa=float(kappa), feedback_mode="none")
                    cy = chern_from_expectation(solve_unconditional(p, c), p)
                elif mode == "probed+feedback":
                    c = cfg.replace(kappa=float(kappa), feedback_mode=_feedback_mode(cfg))
                    cy = chern_from_expectation(solve_feedback_unconditional(p, c), p)
                else:
                    raise ConfigError(f"unknown mode {mode!r}")
                row["cy"] = cy
                row["deviation"] = abs(cy - base)
                if integer is not None:
                    row["deviation_integer"] = abs(cy - integer)
            except ChernProbeError as exc:
                row["status"] = f"error: {exc}"
            rows.append(row)
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# -- optimization ----------------------------------------------------------------

@dataclass(frozen=True)
class OptimizationSpec:
    """Search for the probe settings with the least shot noise at fixed ``C_y``.

    Ranges are ``(lo, hi)`` in MHz (``nu = omega / 2pi``) and us. Because
    ``C_y`` only depends on ``Delta1 tq`` and ``kappa / Delta1`` and the noise
    bound is unchanged by ``(Delta1, tq, kappa) -> (s Delta1, tq / s, s kappa)``,
    the search runs over those two reduced variables. The overall scale is then
    fixed by ``delta1_anchor_mhz`` (default: the geometric midpoint of the
    Delta1 range), clipped so that all three values stay inside their ranges.
    """

    constraint_cy: float = 0.98
    omega1_ratio: float = 1.0 / 3.0
    delta2_ratio: float = 0.0
    delta1_range_mhz: tuple[float, float] = (5.0, 50.0)
    tq_range_us: tuple[float, float] = (0.2, 5.0)
    kappa_range_mhz: tuple[float, float] = (0.02, 2.0)
    eta: float = 1.0
    feedback_mode: str = "adiabatic"
    sigma_multiplier: float = 5.0
    grid_points: int = 12
    refine_points: int = 9
    delta1_anchor_mhz: float | None = None
    dt: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.constraint_cy < 1.0:
            raise ConfigError("constraint_cy must lie in [0, 1)")
        for name in ("delta1_range_mhz", "tq_range_us", "kappa_range_mhz"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi < math.inf):
                raise ConfigError(f"{name} must be positive, finite and ordered")
        if self.grid_points < 2 or self.refine_points < 2:
            raise ConfigError("need at least two grid points per axis")
        if self.feedback_mode not in ("none", "exact", "adiabatic"):
            raise ConfigError("unknown feedback mode")
        if not 0 < self.eta <= 1:
            raise ConfigError("eta must lie in (0, 1]")

    @property
    def anchor(self) -> float:
        if self.delta1_anchor_mhz is not None:
            return self.delta1_anchor_mhz
        lo, hi = self.delta1_range_mhz
        return math.sqrt(lo * hi)


@dataclass(frozen=True)
class OptimizationResult:
    delta1_mhz: float
    tq_us: float
    kappa_mhz: float
    cy: float
    noise_single: float
    n_required: int | None
    delta1_tq: float
    kappa_over_delta1: float
    evaluations: int

    @property
    def delta1(self) -> float:
        return mhz(self.delta1_mhz)

    @property
    def kappa(self) -> float:
        return mhz(self.kappa_mhz)

    def protocol(self, spec: OptimizationSpec) -> QuenchProtocol:
        return QuenchProtocol.from_mhz(self.delta1_mhz, spec.delta2_ratio, self.tq_us,
                                       spec.omega1_ratio)


class _Objective:
    def __init__(self, spec: OptimizationSpec):
        self.spec = spec
        self.cache: dict[tuple[float, float], float] = {}

    def delta1_interval(self, u, w):
        (dlo, dhi), (tlo, thi), (klo, khi) = (self.spec.delta1_range_mhz, self.spec.tq_range_us,
                                              self.spec.kappa_range_mhz)
        lo = max(dlo, u / thi, klo / w)
        hi = min(dhi, u / tlo, khi / w)
        return (lo, hi) if lo <= hi * (1 + 1e-12) else None

    def point(self, u, w):
        iv = self.delta1_interval(u, w)
        if iv is None:
            return None
        d1 = min(max(self.spec.anchor, iv[0]), iv[1])
        return d1, u / d1, w * d1

    def w_range(self, u):
        (dlo, dhi), (tlo, thi), (klo, khi) = (self.spec.delta1_range_mhz, self.spec.tq_range_us,
                                              self.spec.kappa_range_mhz)
        if max(dlo, u / thi) > min(dhi, u / tlo) * (1 + 1e-12):
            return None
        return klo / min(dhi, u / tlo), khi / max(dlo, u / thi)

    def protocol(self, d1, tq):
        s = self.spec
        return QuenchProtocol.from_mhz(d1, s.delta2_ratio, tq, s.omega1_ratio)

    def cfg(self, kappa_mhz):
        s = self.spec
        return MeasurementConfig(kappa=mhz(kappa_mhz), eta=s.eta, dt=s.dt, feedback_mode=s.feedback_mode)

    def noise(self, u, w):
        d1, tq, k = self.point(u, w)
        return shot_noise_bound(self.protocol(d1, tq), self.cfg(k))

    def cy(self, u, w):
        key = (u, w)
        if key not in self.cache:
            d1, tq, k = self.point(u, w)
            p, cfg = self.protocol(d1, tq), self.cfg(k)
            rec = (solve_unconditional(p, cfg) if cfg.feedback_mode == "none"
                   else solve_feedback_unconditional(p, cfg))
            self.cache[key] = chern_from_expectation(rec, p)
        return self.cache[key]

    def feasible(self, u, w):
        return self.spec.constraint_cy <= 0 or self.cy(u, w) >= self.spec.constraint_cy


def optimize_parameters(spec: OptimizationSpec | None = None) -> OptimizationResult:
    """Minimize the single-run shot noise subject to ``C_y >= constraint_cy``.

    A coarse log grid over the reduced variables is scanned in order of
    increasing noise; the first feasible point is the coarse optimum. One
    refinement pass then tightens ``Delta1 tq`` on a finer grid around it and
    places ``kappa / Delta1`` on the constraint boundary by bracketing root
    search.
    """
    spec = OptimizationSpec() if spec is None else spec
    obj = _Objective(spec)
    (dlo, dhi), (tlo, thi), (klo, khi) = spec.delta1_range_mhz, spec.tq_range_us, spec.kappa_range_mhz
    us = np.geomspace(dlo * tlo, dhi * thi, spec.grid_points)
    ws = np.geomspace(klo / dhi, khi / dlo, spec.grid_points)
    su = (us[-1] / us[0]) ** (1 / (len(us) - 1)) if us[-1] > us[0] else 1.0
    sw = (ws[-1] / ws[0]) ** (1 / (len(ws) - 1)) if ws[-1] > ws[0] else 1.0

    candidates = [(obj.noise(u, w), u, w) for u in us for w in ws if obj.point(u, w) is not None]
    best = None
    for noise, u, w in sorted(candidates):
        if obj.feasible(u, w):
            best = (noise, u, w)
            break
    if best is None:
        raise InfeasibleError("no grid point satisfies the C_y constraint")
    log.info("coarse optimum u=%.4g w=%.4g noise=%.4g", best[1], best[2], best[0])

    c = spec.constraint_cy
    for u in np.geomspace(best[1] / su, best[1] * su, spec.refine_points):
        wr = obj.w_range(u)
        if wr is None:
            continue
        lo, hi = max(best[2] / sw, wr[0]), min(best[2] * sw, wr[1])
        if lo > hi:
            continue
        if obj.feasible(u, hi):
            w = hi
        elif not obj.feasible(u, lo):
            continue
        else:
            w = brentq(lambda w_: obj.cy(u, w_) - c, lo, hi, rtol=1e-5)
            if not obj.feasible(u, w):
                w = lo + (w - lo) * (1 - 1e-6)
                if not obj.feasible(u, w):
                    continue
        noise = obj.noise(u, w)
        if noise < best[0]:
            best = (noise, u, w)

    noise, u, w = best
    d1, tq, k = obj.point(u, w)
    cy = obj.cy(u, w)
    n_req = math.ceil((noise * spec.sigma_multiplier / c) ** 2) if c > 0 else None
    return OptimizationResult(delta1_mhz=float(d1), tq_us=float(tq), kappa_mhz=float(k), cy=float(cy),
                              noise_single=float(noise), n_required=n_req, delta1_tq=float(u),
                              kappa_over_delta1=float(w),
                              evaluations=len(obj.cache))


# -- Rabi demo ---------------------------------------------------------------------

def rabi_drive(kappa: float, periods: float = 5.0, duration: float | None = None) -> ConstantDrive:
    """Constant drive with Rabi frequency ``2 kappa`` and detuning ``kappa``."""
    field_ = (2.0 * kappa, 0.0, kappa)
    if duration is None:
        rate = math.sqrt(5.0) * kappa
        duration = periods * 2.0 * math.pi / rate if rate > 0 else 1.0
    return ConstantDrive(field=field_, duration=duration)


def rabi_demo(kappa: float, eta: float = 1.0, mode: str = "exact", *, periods: float = 5.0,
              duration: float | None = None, dt: float | None = None,
              seed: int = 0) -> tuple[TrajectoryRecord, TrajectoryRecord]:
    """Monitored Rabi oscillation with feedback, and the unmonitored reference.

    ``kappa`` is in rad/us. ``mode="exact"`` takes the gains from the current
    conditional state; ``"adiabatic"`` takes them from the unmonitored
    trajectory.
    """
    if mode not in ("exact", "adiabatic", "none"):
        raise ConfigError(f"unknown feedback mode {mode!r}")
    drive = rabi_drive(kappa, periods, duration)
    cfg = MeasurementConfig(kappa=kappa, eta=eta, dt=dt, feedback_mode=mode, seed=seed)
    monitored = simulate_trajectory(drive, cfg)
    times = monitored.times
    states = drive.reference_bloch_at(times)
    reference = TrajectoryRecord(times=times, thetas=monitored.thetas, states=states,
                                 purity=np.linalg.norm(states, axis=-1), signal=None, noise=None,
                                 drive=drive, config=cfg.replace(kappa=0.0, feedback_mode="none"),
                                 conditional=False)
    return monitored, reference
