"""Chern-number estimators from expectation values and from homodyne records."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from .engine import TrajectoryRecord
from .errors import (ConfigError, DegenerateFieldError, IncompleteSweepError,
                     MissingSignalError)
from .model import MeasurementConfig, QuenchProtocol

Source = Literal["expectation", "signal", "corrected"]

#: Smallest Bloch norm accepted by :func:`corrected_chern`.
MIN_BLOCH_NORM = 0.05


@dataclass(frozen=True)
class ChernEstimate:
    value: float
    source: Source
    n_runs: int = 1
    stderr: float = 0.0

    def __post_init__(self):
        if self.stderr < 0 or self.n_runs < 1:
            raise ValueError("stderr must be >= 0 and n_runs >= 1")


@dataclass(frozen=True)
class EnsembleStats:
    """Sample statistics of per-record signal estimates plus the shot-noise bound."""

    mean: float
    std: float
    stderr: float
    n_runs: int
    bound_single: float
    bound: float
    values: np.ndarray

    def as_estimate(self) -> ChernEstimate:
        return ChernEstimate(self.mean, "signal", self.n_runs, self.stderr)


def _weights(record: TrajectoryRecord, p: QuenchProtocol) -> np.ndarray:
    """Trapezoid weights of ``-(Omega1 / 2v) sin(theta) dtheta`` on the record grid."""
    th = np.asarray(record.thetas, dtype=float)
    if len(th) < 2 or abs(th[0]) > 1e-9 or abs(th[-1] - math.pi) > 1e-9:
        raise IncompleteSweepError("record must cover theta in [0, pi]")
    w = np.zeros_like(th)
    d = np.diff(th)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return -(p.omega1 / (2.0 * p.v)) * np.sin(th) * w


def chern_from_expectation(traj: TrajectoryRecord, p: QuenchProtocol) -> float:
    """``C_y = -int (Omega1 / 2v) <sigma_y> sin(theta) dtheta`` by the trapezoid rule."""
    return float(np.dot(_weights(traj, p), traj.states[:, 1]))


def chern_from_signal(record: TrajectoryRecord, p: QuenchProtocol) -> float:
    """Same quadrature with the homodyne samples ``V_k`` in place of ``<sigma_y>``.

    ``V_k`` belongs to the left end of step ``k``; the final grid point has
    weight ``sin(pi) = 0`` and no sample.
    """
    if record.signal is None:
        raise MissingSignalError("record carries no homodyne signal")
    w = _weights(record, p)
    return float(np.dot(w[:-1], record.signal))


def shot_noise_bound(p: QuenchProtocol, cfg: MeasurementConfig, n_runs: int = 1) -> float:
    """Statistical error ``Omega1 sqrt(tq / (32 eta kappa)) / sqrt(N)`` of the signal estimate."""
    if cfg.kappa <= 0 or cfg.eta <= 0:
        raise ConfigError("shot-noise bound needs kappa > 0 and eta > 0")
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    return p.omega1 * math.sqrt(p.tq / (32.0 * cfg.eta * cfg.kappa)) / math.sqrt(n_runs)


def corrected_chern(traj_unconditional: TrajectoryRecord, p: QuenchProtocol) -> float:
    """Estimator with ``<sigma_y>`` divided by the Bloch length ``|R(t)|`` of the same solve."""
    norm = np.asarray(traj_unconditional.purity, dtype=float)
    if np.any(norm < MIN_BLOCH_NORM):
        raise DegenerateFieldError(f"Bloch length drops to {norm.min():.3g}")
    return float(np.dot(_weights(traj_unconditional, p), traj_unconditional.states[:, 1] / norm))


def _config_key(cfg: MeasurementConfig):
    return replace(cfg, seed=0)


def ensemble_estimate(records: Sequence[TrajectoryRecord], p: QuenchProtocol) -> EnsembleStats:
    """Mean, sample std and standard error of :func:`chern_from_signal` over ``records``."""
    if len(records) < 2:
        raise ConfigError("ensemble needs at least two records")
    first = records[0]
    key = _config_key(first.config)
    for rec in records[1:]:
        if (_config_key(rec.config) != key or rec.drive != first.drive
                or len(rec.times) != len(first.times)):
            raise ConfigError("records come from different protocols or configurations")
    values = np.array([chern_from_signal(r, p) for r in records])
    n = len(values)
    std = float(np.std(values, ddof=1))
    return EnsembleStats(
        mean=float(np.mean(values)), std=std, stderr=std / math.sqrt(n), n_runs=n,
        bound_single=shot_noise_bound(p, first.config, 1),
        bound=shot_noise_bound(p, first.config, n), values=values)
