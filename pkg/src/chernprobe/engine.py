"""Conditional and unconditional dynamics of the monitored qubit.

Two independent formulations integrate the same stochastic master equation:
a density-matrix form built from the superoperators in :mod:`.operators`, and
a Bloch-vector form written out component by component. Both advance with
Euler-Maruyama on a uniform grid (Ito, left endpoint) and can be driven by the
same noise increments, which is how they are cross-checked.

Unconditional (record-averaged) evolution is deterministic and is solved with
a high-order adaptive ODE integrator, sampled on the same uniform grid.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from . import feedback as fb
from .errors import ConfigError, StepInstabilityError
from .model import (STATE_TOL, MeasurementConfig, QuenchProtocol, QubitState,
                    adiabatic_bloch, field_vector)
from .operators import (SIGMA_Y, bloch_to_rho, commutator, dissipator,
                        field_operator, measurement_superop, rho_to_bloch)

log = logging.getLogger(__name__)

Formulation = Literal["bloch", "matrix"]

#: Norm slack allowed for the adaptive unconditional solve.
UNCONDITIONAL_TOL = 1e-7


@dataclass(eq=False)
class TrajectoryRecord:
    """One run of the sweep.

    ``states`` holds the ``K + 1`` Bloch vectors; ``signal`` and ``noise`` hold
    the ``K`` homodyne samples and Wiener increments (``None`` for
    unconditional solves or when no signal was recorded).
    """

    times: np.ndarray
    thetas: np.ndarray
    states: np.ndarray
    purity: np.ndarray
    signal: np.ndarray | None
    noise: np.ndarray | None
    drive: object
    config: MeasurementConfig
    mode: str = "none"
    index: int = 0
    conditional: bool = True

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, k: int) -> QubitState:
        return QubitState(np.clip(self.states[k], -1.0, 1.0))

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def z(self):
        return self.states[:, 2]


# -- rates ------------------------------------------------------------------

def _params(mode: str, r: np.ndarray, ref: np.ndarray | None) -> fb.FeedbackParams | None:
    if mode == "none":
        return None
    if mode == "exact":
        return fb.params_from_bloch(r)
    return fb.params_from_bloch(ref)


def bloch_rates(r: np.ndarray, field: np.ndarray, kappa: float, eta: float,
                mode: str = "none", ref: np.ndarray | None = None):
    """Drift and ``dW`` coefficient of the Bloch-vector SDE.

    ``field`` is the vector ``B`` with ``H = B . sigma / 2``; ``ref`` is the
    reference Bloch vector used by ``adiabatic`` feedback.
    """
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    bx, by, bz = field[..., 0], field[..., 1], field[..., 2]
    s = 2.0 * math.sqrt(eta * kappa)
    drift = np.stack([by * z - bz * y - 2.0 * kappa * x,
                      bz * x - bx * z,
                      bx * y - by * x - 2.0 * kappa * z], axis=-1)
    diff = np.stack([-s * x * y, s * (1.0 - y * y), -s * y * z], axis=-1)
    params = _params(mode, r, ref)
    if params is not None and kappa > 0:
        drift = drift + fb.bloch_drift(r, params, kappa, eta)
        diff = diff + fb.bloch_diffusion(r, params, kappa, eta)
    return drift, diff


def matrix_rates(rho: np.ndarray, hamiltonian: np.ndarray, kappa: float, eta: float,
                 mode: str = "none", ref: np.ndarray | None = None):
    """Drift and ``dW`` coefficient of the density-matrix SME."""
    drift = -1j * commutator(hamiltonian, rho) + kappa * dissipator(SIGMA_Y, rho)
    diff = math.sqrt(eta * kappa) * measurement_superop(SIGMA_Y, rho)
    params = _params(mode, rho_to_bloch(rho), ref)
    if params is not None and kappa > 0:
        drift = drift + fb.matrix_drift(rho, params, kappa, eta)
        diff = diff + fb.matrix_diffusion(rho, params, kappa, eta)
    return drift, diff


def _norm(r: np.ndarray) -> np.ndarray:
    return np.sqrt(r[..., 0] * r[..., 0] + r[..., 1] * r[..., 1] + r[..., 2] * r[..., 2])


def _pure_mask(r: np.ndarray, eta: float):
    """Trajectories that must stay on the unit sphere: pure states at ``eta = 1``."""
    if eta < 1.0:
        return None
    return _norm(r) >= 1.0 - STATE_TOL


def _clip_bloch(r: np.ndarray, pure=None) -> np.ndarray:
    """Rescale onto the unit ball; states flagged ``pure`` are projected onto the sphere.

    Rescaling only the outward excursions of a pure state would bias it
    inward by an amount that does not vanish as ``dt -> 0``.
    """
    n = _norm(r)
    over = n > 1.0
    if pure is not None:
        over = over | (np.asarray(pure) & (n > 0))
    if np.any(over):
        r = np.where(over[..., None], r / np.where(over, n, 1.0)[..., None], r)
    if not np.all(np.isfinite(r)) or np.any(_norm(r) > 1.0 + 10 * STATE_TOL):
        raise StepInstabilityError("Bloch vector left the unit ball")
    return r


def _clip_rho(rho: np.ndarray, pure=None) -> np.ndarray:
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    r = _clip_bloch(rho_to_bloch(rho), pure)
    # rebuild from the clipped Bloch vector: trace exactly 1, Hermitian
    return bloch_to_rho(r)


# -- single steps -------------------------------------------------------------

def _step_dt(cfg: MeasurementConfig, p, dt):
    return cfg.resolve_dt(p) if dt is None else dt


def _ref_for(mode, theta, p):
    return adiabatic_bloch(theta, p) if mode == "adiabatic" else None


def step_conditional(state: QubitState, theta: float, dW: float, cfg: MeasurementConfig,
                     p: QuenchProtocol, dt: float | None = None) -> QubitState:
    """One Euler-Maruyama step of the SME in density-matrix form (no feedback)."""
    return step_feedback_conditional(state, theta, dW, cfg, p, "none", dt=dt)


def step_conditional_bloch(state: QubitState, theta: float, dW: float, cfg: MeasurementConfig,
                           p: QuenchProtocol, dt: float | None = None) -> QubitState:
    """One Euler-Maruyama step of the SME in Bloch form (no feedback)."""
    return step_feedback_conditional_bloch(state, theta, dW, cfg, p, "none", dt=dt)


def step_feedback_conditional(state: QubitState, theta: float, dW: float, cfg: MeasurementConfig,
                              p: QuenchProtocol, mode: str | None = None,
                              dt: float | None = None) -> QubitState:
    """One step of the feedback SME in density-matrix form.

    Gains are evaluated at the pre-step state (``exact``) or the pre-step
    adiabatic state (``adiabatic``).
    """
    mode = cfg.feedback_mode if mode is None else mode
    dt = _step_dt(cfg, p, dt)
    rho = state.rho
    drift, diff = matrix_rates(rho, hamiltonian_matrix(theta, p), cfg.kappa, cfg.eta,
                               mode, _ref_for(mode, theta, p))
    pure = _pure_mask(state.bloch, cfg.eta)
    return QubitState(rho_to_bloch(_clip_rho(rho + drift * dt + diff * dW, pure)))


def step_feedback_conditional_bloch(state: QubitState, theta: float, dW: float,
                                    cfg: MeasurementConfig, p: QuenchProtocol,
                                    mode: str | None = None,
                                    dt: float | None = None) -> QubitState:
    """Bloch-vector twin of :func:`step_feedback_conditional`."""
    mode = cfg.feedback_mode if mode is None else mode
    dt = _step_dt(cfg, p, dt)
    r = state.bloch
    drift, diff = bloch_rates(r, field_vector(theta, p), cfg.kappa, cfg.eta,
                              mode, _ref_for(mode, theta, p))
    return QubitState(_clip_bloch(r + drift * dt + diff * dW, _pure_mask(r, cfg.eta)))


def hamiltonian_matrix(theta, p):
    return field_operator(field_vector(theta, p))


# -- noise --------------------------------------------------------------------

def noise_stream(seed: int, index: int, n_steps: int, dt: float) -> np.ndarray:
    """Wiener increments of trajectory ``index``; one independent stream per (seed, index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    rng = np.random.Generator(np.random.PCG64(ss))
    return rng.standard_normal(n_steps) * math.sqrt(dt)


# -- trajectories ---------------------------------------------------------------

def _wants_signal(cfg: MeasurementConfig, record_signal: bool | None) -> bool:
    possible = cfg.kappa > 0 and cfg.eta > 0
    if record_signal is None:
        return possible
    if record_signal and not possible:
        raise ConfigError("signal is undefined for kappa = 0 or eta = 0")
    return bool(record_signal)


def _integrate_batch(drive, cfg: MeasurementConfig, indices, formulation: Formulation,
                     record_signal: bool, initial, noise=None):
    k, times = cfg.grid(drive)
    dt = float(times[1] - times[0])
    mode = cfg.feedback_mode
    fields = drive.field_at(times)
    refs = drive.reference_bloch_at(times) if mode == "adiabatic" else None
    m = len(indices)
    if noise is None:
        dws = np.stack([noise_stream(cfg.seed, i, k, dt) for i in indices])
    else:
        dws = np.atleast_2d(np.asarray(noise, dtype=float))
        if dws.shape != (m, k):
            raise ConfigError(f"noise must have shape {(m, k)}")
    r0 = np.array(QubitState(initial).bloch if initial is not None else (0.0, 0.0, 1.0))
    states = np.empty((m, k + 1, 3))
    states[:, 0] = r0
    signal = np.empty((m, k)) if record_signal else None
    inv = 1.0 / (2.0 * math.sqrt(cfg.eta * cfg.kappa) * dt) if record_signal else 0.0

    if formulation == "bloch":
        r = np.broadcast_to(r0, (m, 3)).copy()
        for j in range(k):
            if record_signal:
                signal[:, j] = r[:, 1] + dws[:, j] * inv
            drift, diff = bloch_rates(r, fields[j], cfg.kappa, cfg.eta, mode,
                                      None if refs is None else refs[j])
            r = _clip_bloch(r + drift * dt + diff * dws[:, j, None], _pure_mask(r, cfg.eta))
            states[:, j + 1] = r
    elif formulation == "matrix":
        hams = field_operator(fields)
        rho = np.broadcast_to(bloch_to_rho(r0), (m, 2, 2)).copy()
        for j in range(k):
            r = rho_to_bloch(rho)
            if record_signal:
                signal[:, j] = r[:, 1] + dws[:, j] * inv
            drift, diff = matrix_rates(rho, hams[j], cfg.kappa, cfg.eta, mode,
                                       None if refs is None else refs[j])
            rho = _clip_rho(rho + drift * dt + diff * dws[:, j, None, None], _pure_mask(r, cfg.eta))
            states[:, j + 1] = rho_to_bloch(rho)
    else:
        raise ConfigError(f"unknown formulation {formulation!r}")

    thetas = drive.theta_at(times)
    records = []
    for row, idx in enumerate(indices):
        st = states[row]
        records.append(TrajectoryRecord(
            times=times, thetas=thetas, states=st, purity=_norm(st),
            signal=None if signal is None else signal[row], noise=dws[row],
            drive=drive, config=cfg, mode=mode, index=int(idx)))
    return records


def simulate_trajectory(p, cfg: MeasurementConfig, index: int = 0, *,
                        formulation: Formulation = "bloch", record_signal: bool | None = None,
                        initial=None, noise: np.ndarray | None = None) -> TrajectoryRecord:
    """Conditional run of the full sweep starting at ``initial`` (default north pole).

    The feedback mode is ``cfg.feedback_mode``. Supplying ``noise`` (``K``
    increments) overrides the seeded stream, e.g. to drive both
    formulations with identical noise.
    """
    rec_signal = _wants_signal(cfg, record_signal)
    noise_rows = None if noise is None else np.asarray(noise, dtype=float)[None, :]
    return _integrate_batch(p, cfg, [index], formulation, rec_signal, initial, noise_rows)[0]


def _ensemble_chunk(args):
    return _integrate_batch(*args)


def simulate_ensemble(p, cfg: MeasurementConfig, n_runs: int, *, start_index: int = 0,
                      formulation: Formulation = "bloch", record_signal: bool | None = None,
                      initial=None, batch_size: int = 500, workers: int = 1) -> list[TrajectoryRecord]:
    """``n_runs`` independent conditional runs with trajectory indices ``start_index + i``.

    Trajectories are integrated in vectorized batches. Each index owns its
    noise stream, so the output does not depend on ``batch_size`` or
    ``workers``.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    rec_signal = _wants_signal(cfg, record_signal)
    idx = list(range(start_index, start_index + n_runs))
    chunks = [idx[i:i + batch_size] for i in range(0, n_runs, batch_size)]
    jobs = [(p, cfg, c, formulation, rec_signal, initial) for c in chunks]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_ensemble_chunk, jobs))
    else:
        parts = [_ensemble_chunk(j) for j in jobs]
    log.debug("simulated %d trajectories in %d chunks", n_runs, len(chunks))
    return [rec for part in parts for rec in part]


# -- unconditional evolution ------------------------------------------------------

def _solve_master(drive, cfg: MeasurementConfig, mode: str, formulation: Formulation,
                  initial) -> TrajectoryRecord:
    k, times = cfg.grid(drive)
    kappa, eta = cfg.kappa, cfg.eta
    if mode != "none" and kappa > 0 and eta == 0:
        raise ConfigError("feedback needs eta > 0")
    r0 = np.array(QubitState(initial).bloch if initial is not None else (0.0, 0.0, 1.0))
    ref_at = drive.reference_bloch_at if mode == "adiabatic" else (lambda t: None)
    if mode == "adiabatic":
        drive.reference_bloch_at(times)  # fail early on a degenerate sweep

    if formulation == "bloch":
        def rhs(t, r):
            return bloch_rates(r, drive.field_at(t), kappa, eta, mode, ref_at(t))[0]
        y0 = r0
    elif formulation == "matrix":
        def rhs(t, v):
            rho = (v[:4] + 1j * v[4:]).reshape(2, 2)
            d = matrix_rates(rho, field_operator(drive.field_at(t)), kappa, eta, mode,
                             ref_at(t))[0].reshape(4)
            return np.concatenate([d.real, d.imag])
        rho0 = bloch_to_rho(r0).reshape(4)
        y0 = np.concatenate([rho0.real, rho0.imag])
    else:
        raise ConfigError(f"unknown formulation {formulation!r}")

    sol = solve_ivp(rhs, (0.0, drive.duration), y0, method="DOP853", t_eval=times,
                    rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise StepInstabilityError(f"unconditional solve failed: {sol.message}")
    if formulation == "bloch":
        states = sol.y.T.copy()
    else:
        rho = (sol.y[:4] + 1j * sol.y[4:]).T.reshape(-1, 2, 2)
        states = rho_to_bloch(rho)
    purity = _norm(states)
    if not np.all(np.isfinite(states)) or np.any(purity > 1.0 + UNCONDITIONAL_TOL):
        raise StepInstabilityError("unconditional state left the Bloch ball")
    return TrajectoryRecord(times=times, thetas=drive.theta_at(times), states=states,
                            purity=purity, signal=None, noise=None, drive=drive, config=cfg,
                            mode=mode, conditional=False)


def solve_unconditional(p, cfg: MeasurementConfig, *, formulation: Formulation = "bloch",
                        initial=None) -> TrajectoryRecord:
    """Record-averaged evolution without feedback: ``-i[H, rho] + kappa D[sy] rho``."""
    return _solve_master(p, cfg, "none", formulation, initial)


def solve_feedback_unconditional(p, cfg: MeasurementConfig, mode: str | None = None, *,
                                 formulation: Formulation = "bloch",
                                 initial=None) -> TrajectoryRecord:
    """Record-averaged evolution with feedback in ``exact`` or ``adiabatic`` mode."""
    mode = cfg.feedback_mode if mode is None else mode
    if mode not in ("exact", "adiabatic"):
        raise ConfigError("feedback mode must be 'exact' or 'adiabatic'")
    return _solve_master(p, cfg, mode, formulation, initial)
