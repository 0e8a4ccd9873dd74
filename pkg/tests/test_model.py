import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from chernprobe.errors import ConfigError, DegenerateFieldError
from chernprobe.model import (ConstantDrive, MeasurementConfig, QuenchProtocol, QubitState,
                              adiabatic_bloch, analytic_berry_curvature, analytic_chern,
                              default_dt, field_vector, hamiltonian_at, mhz, precess, to_mhz)
from chernprobe.operators import PAULI, bloch_to_rho, rho_to_bloch


def _followed_state(theta, phi, p):
    """Eigenvector of H with eigenvalue +|B|/2, obtained independently with eigh."""
    q = QuenchProtocol(p.delta1, p.delta2, p.omega1, p.tq, phi)
    _, vecs = np.linalg.eigh(hamiltonian_at(theta, q))
    return vecs[:, 1]


def _plaquette_curvature(theta, phi, p, h=1e-4):
    """Gauge-invariant lattice curvature in the (phi, theta) orientation."""
    s00 = _followed_state(theta, phi, p)
    s10 = _followed_state(theta, phi + h, p)
    s11 = _followed_state(theta + h, phi + h, p)
    s01 = _followed_state(theta + h, phi, p)
    loop = np.vdot(s00, s10) * np.vdot(s10, s11) * np.vdot(s11, s01) * np.vdot(s01, s00)
    return -np.angle(loop) / h**2


def test_unit_conversion_roundtrip():
    assert mhz(1.0) == pytest.approx(2 * math.pi)
    assert to_mhz(mhz(16.1)) == pytest.approx(16.1)


def test_qubit_state_validation():
    with pytest.raises(ValueError):
        QubitState((0.0, 0.0, 1.1))
    s = QubitState.from_rho(bloch_to_rho(np.array([0.6, 0.0, 0.8])))
    assert s.is_pure()
    assert QubitState.north().z == 1.0


def test_protocol_validation():
    with pytest.raises(ConfigError):
        QuenchProtocol(1.0, 0.0, 1.0, tq=0.0)
    with pytest.raises(ConfigError):
        QuenchProtocol(-1.0, 0.0, 1.0, tq=1.0)


def test_field_endpoints(base):
    b0 = field_vector(0.0, base)
    assert np.allclose(b0, [0, 0, base.delta1 + base.delta2])
    bm = field_vector(math.pi / 2, base)
    assert np.allclose(bm, [base.omega1, 0, base.delta2])


@pytest.mark.parametrize("ratio", [0.0, 0.5, 1.5])
@pytest.mark.parametrize("theta", [0.3, 1.2, 2.5])
def test_adiabatic_state_is_eigenvector(ratio, theta):
    p = QuenchProtocol.from_mhz(30.0, ratio, 1.0)
    r = adiabatic_bloch(theta, p)
    h = hamiltonian_at(theta, p)
    rho = bloch_to_rho(r)
    e = 0.5 * np.linalg.norm(field_vector(theta, p))
    assert np.abs(h @ rho - e * rho).max() < 1e-9 * e
    assert np.linalg.norm(r) == pytest.approx(1.0)


def test_adiabatic_state_degenerate():
    p = QuenchProtocol.from_mhz(30.0, 1.0, 1.0)
    with pytest.raises(DegenerateFieldError):
        adiabatic_bloch(math.pi, p)


@pytest.mark.parametrize("ratio", [0.0, 0.4, 1.6])
@pytest.mark.parametrize("theta", [0.4, 1.3, 2.6])
def test_curvature_matches_finite_difference_oracle(ratio, theta):
    p = QuenchProtocol.from_mhz(30.0, ratio, 1.0)
    fd = _plaquette_curvature(theta, 0.7, p)
    assert analytic_berry_curvature(theta, 0.7, p) == pytest.approx(fd, rel=1e-3)


def test_curvature_independent_of_phi(base):
    f = analytic_berry_curvature(1.1, np.linspace(0, 2 * math.pi, 7), base)
    assert np.ptp(f) == 0.0
    fd = [_plaquette_curvature(1.1, phi, base) for phi in (0.0, 2.0, 4.0)]
    assert np.ptp(fd) < 1e-3 * abs(fd[0])


@pytest.mark.parametrize("ratio, expected", [(0.0, 1), (0.5, 1), (0.9, 1), (1.1, 0), (2.0, 0)])
def test_chern_quadrature_is_integer(ratio, expected):
    p = QuenchProtocol.from_mhz(30.0, ratio, 1.0)
    c, _ = quad(lambda t: float(analytic_berry_curvature(t, 0.0, p)), 0.0, math.pi,
                epsabs=1e-12, epsrel=1e-12, limit=200)
    assert abs(c - expected) < 1e-6
    assert analytic_chern(p) == expected


@settings(max_examples=50, deadline=None)
@given(ratio=st.floats(0.0, 3.0).filter(lambda r: abs(r - 1) > 0.05),
       omega_ratio=st.floats(0.1, 2.0))
def test_chern_quadrature_property(ratio, omega_ratio):
    p = QuenchProtocol.from_mhz(10.0, ratio, 1.0, omega_ratio)
    c, _ = quad(lambda t: float(analytic_berry_curvature(t, 0.0, p)), 0.0, math.pi,
                epsabs=1e-12, epsrel=1e-12, limit=400)
    assert abs(c - analytic_chern(p)) < 1e-6


def test_chern_at_transition_raises():
    with pytest.raises(DegenerateFieldError):
        analytic_chern(QuenchProtocol.from_mhz(30.0, 1.0, 1.0))


def test_bloch_rho_roundtrip():
    rng = np.random.default_rng(1)
    r = rng.normal(size=(20, 3))
    r /= np.maximum(1.0, np.linalg.norm(r, axis=1))[:, None]
    rho = bloch_to_rho(r)
    assert np.allclose(np.trace(rho, axis1=1, axis2=2), 1.0)
    assert np.allclose(rho_to_bloch(rho), r)
    assert np.allclose([np.trace(s @ rho[0]).real for s in PAULI], r[0])


def test_precess_is_rotation():
    b = np.array([2.0, 0.0, 1.0])
    t = np.linspace(0, 3, 11)
    r = precess(np.array([0.0, 0.0, 1.0]), b, t)
    assert np.allclose(np.linalg.norm(r, axis=1), 1.0)
    # conserved projection on the field axis
    assert np.allclose(r @ b, 1.0)
    period = 2 * math.pi / np.linalg.norm(b)
    assert np.allclose(precess(np.array([0.0, 0.0, 1.0]), b, period), [0, 0, 1])


def test_default_dt_rule(base):
    assert default_dt(base, 0.0) == pytest.approx(1 / (50 * base.delta1))
    assert default_dt(base, 100.0) == pytest.approx(1 / (50 * 400.0))
    k, times = MeasurementConfig().grid(base)
    assert times[0] == 0.0 and times[-1] == base.tq and len(times) == k + 1
    drive = ConstantDrive((0.0, 0.0, 0.0), 2.0)
    assert default_dt(drive, 0.0) == 2.0


def test_measurement_config_validation():
    with pytest.raises(ConfigError):
        MeasurementConfig(eta=1.5)
    with pytest.raises(ConfigError):
        MeasurementConfig(kappa=-1.0)
    with pytest.raises(ConfigError):
        MeasurementConfig(feedback_mode="bogus")
