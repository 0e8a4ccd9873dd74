import math

import numpy as np
import pytest

from chernprobe.errors import ConfigError, InfeasibleError
from chernprobe.experiments import (OptimizationSpec, SweepSpec, loglog_slope,
                                    optimize_parameters, rabi_demo, rabi_drive, run_sweep,
                                    scan_kappa)
from chernprobe.model import mhz


def test_sweep_rows_and_modes(optimum, optimum_cfg):
    spec = SweepSpec((0.0, 0.5, 1.5), optimum, optimum_cfg)
    rows = run_sweep(spec)
    assert len(rows) == 9
    assert {r["status"] for r in rows} == {"ok"}
    by = {(r["ratio"], r["mode"]): r for r in rows}
    assert by[0.0, "unprobed"]["cy"] > 0.99
    assert by[0.0, "probed"]["cy"] < by[0.0, "probed+feedback"]["cy"] < by[0.0, "unprobed"]["cy"]
    assert by[1.5, "unprobed"]["cy"] == pytest.approx(0.0, abs=0.02)
    assert math.isnan(by[0.0, "unprobed"]["eq10_bound"])
    assert by[0.0, "probed"]["eq10_bound"] == pytest.approx(3.8305, abs=1e-3)


def test_sweep_flags_failing_points(optimum, optimum_cfg):
    rows = run_sweep(SweepSpec((1.0,), optimum, optimum_cfg, modes=("unprobed", "probed+feedback")))
    status = {r["mode"]: r["status"] for r in rows}
    assert status["unprobed"] == "ok"
    assert status["probed+feedback"].startswith("error")


def test_sweep_ensemble_statistics_and_workers(optimum, optimum_cfg):
    spec = SweepSpec((0.0, 2.0), optimum, optimum_cfg, n_runs=20, modes=("probed+feedback",))
    serial = run_sweep(spec)
    parallel = run_sweep(SweepSpec((0.0, 2.0), optimum, optimum_cfg, n_runs=20,
                                   modes=("probed+feedback",), workers=2))
    assert serial == parallel
    assert serial[0]["cv_stderr"] > 0
    assert serial[0]["eq10_bound"] == pytest.approx(3.8305 / math.sqrt(20), rel=1e-3)


def test_sweep_spec_validation(optimum, optimum_cfg):
    with pytest.raises(ConfigError):
        SweepSpec((), optimum, optimum_cfg)
    with pytest.raises(ConfigError):
        SweepSpec((1.0, 0.0), optimum, optimum_cfg)
    with pytest.raises(ConfigError):
        SweepSpec((0.0,), optimum, optimum_cfg, modes=("bogus",))


def test_scan_kappa_rows(base):
    rows = scan_kappa(0.0, mhz(np.array([0.01, 0.1])), base)
    assert len(rows) == 4
    probed = [r for r in rows if r["mode"] == "probed"]
    fed = [r for r in rows if r["mode"] == "probed+feedback"]
    assert probed[1]["deviation"] > probed[0]["deviation"]
    assert fed[1]["deviation"] < probed[1]["deviation"]
    assert rows[0]["kappa_mhz"] == pytest.approx(0.01)
    with pytest.raises(ConfigError):
        scan_kappa(0.0, [], base)


def test_loglog_slope():
    x = np.geomspace(1, 100, 7)
    assert loglog_slope(x, 3 * x**1.7) == pytest.approx(1.7)


def test_optimizer_without_constraint_goes_to_least_noise_corner():
    res = optimize_parameters(OptimizationSpec(constraint_cy=0.0))
    assert res.tq_us == pytest.approx(0.2) and res.kappa_mhz == pytest.approx(2.0)
    assert res.n_required is None


def test_optimizer_infeasible():
    spec = OptimizationSpec(constraint_cy=0.9999, kappa_range_mhz=(1.5, 2.0), grid_points=2,
                            refine_points=2)
    with pytest.raises(InfeasibleError):
        optimize_parameters(spec)


def test_optimizer_spec_validation():
    with pytest.raises(ConfigError):
        OptimizationSpec(constraint_cy=1.0)
    with pytest.raises(ConfigError):
        OptimizationSpec(tq_range_us=(2.0, 1.0))


def test_rabi_drive_and_reference():
    drive = rabi_drive(1.0, periods=2)
    assert drive.field == (2.0, 0.0, 1.0)
    assert drive.duration == pytest.approx(2 * 2 * math.pi / math.sqrt(5))
    monitored, reference = rabi_demo(1.0, 1.0, periods=2)
    assert np.allclose(reference.states[-1], [0, 0, 1], atol=1e-9)
    assert np.abs(monitored.states - reference.states).max() < 0.1
    with pytest.raises(ConfigError):
        rabi_demo(1.0, mode="bogus")
