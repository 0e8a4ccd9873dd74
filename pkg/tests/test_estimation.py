import math
from dataclasses import replace

import numpy as np
import pytest

from chernprobe.engine import TrajectoryRecord, simulate_ensemble, simulate_trajectory, solve_unconditional
from chernprobe.errors import (ConfigError, DegenerateFieldError, IncompleteSweepError,
                               MissingSignalError)
from chernprobe.estimation import (ChernEstimate, chern_from_expectation, chern_from_signal,
                                   corrected_chern, ensemble_estimate, shot_noise_bound)
from chernprobe.model import (MeasurementConfig, QuenchProtocol, analytic_berry_curvature,
                              field_components, mhz)


def _synthetic(p, n=4001, scale=1.0):
    """Record whose y is the linear-response profile ``-2 v F / (Omega1 sin theta)``."""
    th = np.linspace(0, math.pi, n)
    delta, omega = field_components(th, p)
    y = -scale * p.v * p.omega1 * (p.delta1 + p.delta2 * np.cos(th)) / (delta**2 + omega**2) ** 1.5
    states = np.stack([np.zeros(n), y, np.zeros(n)], axis=1)
    times = th / p.v
    return TrajectoryRecord(times=times, thetas=th, states=states, purity=np.abs(y),
                            signal=None, noise=None, drive=p, config=MeasurementConfig(),
                            conditional=False)


@pytest.mark.parametrize("ratio, expected", [(0.0, 1.0), (0.5, 1.0), (1.5, 0.0)])
def test_expectation_estimator_on_linear_response_profile(ratio, expected):
    p = QuenchProtocol.from_mhz(30.0, ratio, 1.0)
    assert chern_from_expectation(_synthetic(p), p) == pytest.approx(expected, abs=1e-6)


def test_linear_response_profile_is_the_curvature():
    p = QuenchProtocol.from_mhz(30.0, 0.3, 1.0)
    rec = _synthetic(p, 11)
    th = rec.thetas[1:-1]
    f = analytic_berry_curvature(th, 0.0, p)
    assert np.allclose(rec.states[1:-1, 1], -2 * p.v * f / (p.omega1 * np.sin(th)))


def test_unprobed_adiabatic_sweep_gives_integer(base):
    slow = QuenchProtocol.from_mhz(30.0, 0.0, 15.0)
    rec = solve_unconditional(slow, MeasurementConfig())
    assert chern_from_expectation(rec, slow) == pytest.approx(1.0, abs=0.02)


def test_signal_estimator_uses_left_point_samples(base):
    rec = _synthetic(base)
    with_signal = replace(rec, signal=rec.states[:-1, 1].copy())
    assert chern_from_signal(with_signal, base) == pytest.approx(chern_from_expectation(rec, base), abs=1e-12)
    with pytest.raises(MissingSignalError):
        chern_from_signal(rec, base)


def test_incomplete_sweep_rejected(base):
    rec = _synthetic(base)
    half = replace(rec, thetas=rec.thetas[:2001], states=rec.states[:2001])
    with pytest.raises(IncompleteSweepError):
        chern_from_expectation(half, base)


def test_shot_noise_bound_value_and_scaling(optimum):
    cfg = MeasurementConfig(kappa=mhz(0.37))
    one = shot_noise_bound(optimum, cfg)
    assert one == pytest.approx(optimum.omega1 * math.sqrt(0.96 / (32 * mhz(0.37))))
    assert shot_noise_bound(optimum, cfg, 383) == pytest.approx(0.196, abs=0.002)
    assert shot_noise_bound(optimum, cfg, 4) == pytest.approx(one / 2)
    assert shot_noise_bound(optimum, cfg.replace(eta=0.25)) == pytest.approx(2 * one)
    with pytest.raises(ConfigError):
        shot_noise_bound(optimum, MeasurementConfig())
    with pytest.raises(ConfigError):
        shot_noise_bound(optimum, cfg, 0)


def test_bound_is_invariant_under_rescaling(optimum):
    cfg = MeasurementConfig(kappa=mhz(0.37))
    s = 2.5
    scaled = QuenchProtocol(s * optimum.delta1, 0.0, s * optimum.omega1, optimum.tq / s)
    assert shot_noise_bound(scaled, cfg.replace(kappa=s * cfg.kappa)) == pytest.approx(
        shot_noise_bound(optimum, cfg))


def test_corrected_estimator_reduces_to_plain_when_pure(base):
    rec = solve_unconditional(base, MeasurementConfig())
    assert corrected_chern(rec, base) == pytest.approx(chern_from_expectation(rec, base), abs=1e-6)


def test_corrected_estimator_rejects_collapsed_bloch_vector(base):
    rec = _synthetic(base)
    with pytest.raises(DegenerateFieldError):
        corrected_chern(replace(rec, purity=np.full_like(rec.purity, 0.01)), base)


def test_corrected_estimator_improves_inefficient_feedback(optimum):
    cfg = MeasurementConfig(kappa=mhz(0.37), eta=0.5, feedback_mode="adiabatic")
    from chernprobe.engine import solve_feedback_unconditional
    rec = solve_feedback_unconditional(optimum, cfg)
    plain = chern_from_expectation(rec, optimum)
    corrected = corrected_chern(rec, optimum)
    assert abs(corrected - 1) < abs(plain - 1)


def test_ensemble_statistics(optimum, optimum_cfg):
    recs = simulate_ensemble(optimum, optimum_cfg, 50)
    stats = ensemble_estimate(recs, optimum)
    vals = np.array([chern_from_signal(r, optimum) for r in recs])
    assert stats.mean == pytest.approx(vals.mean())
    assert stats.std == pytest.approx(vals.std(ddof=1))
    assert stats.stderr == pytest.approx(stats.std / math.sqrt(50))
    assert stats.bound == pytest.approx(shot_noise_bound(optimum, optimum_cfg, 50))
    est = stats.as_estimate()
    assert est.n_runs == 50 and est.source == "signal"


def test_ensemble_input_validation(optimum, optimum_cfg, base):
    rec = simulate_trajectory(optimum, optimum_cfg)
    with pytest.raises(ConfigError):
        ensemble_estimate([rec], optimum)
    other = simulate_trajectory(optimum, optimum_cfg.replace(kappa=mhz(0.5)))
    with pytest.raises(ConfigError):
        ensemble_estimate([rec, other], optimum)
    reseeded = simulate_trajectory(optimum, optimum_cfg.replace(seed=9))
    assert ensemble_estimate([rec, reseeded], optimum).n_runs == 2


def test_estimate_validation():
    with pytest.raises(ValueError):
        ChernEstimate(1.0, "signal", n_runs=0)
