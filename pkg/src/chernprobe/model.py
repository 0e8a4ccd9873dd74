"""Quenched spin-1/2 model: states, protocols, and analytic Berry-curvature oracles.

Internally every frequency is an angular frequency in rad/us and every time is
in us. Values quoted as ordinary frequencies (``nu = omega / 2 pi`` in MHz)
are converted once with :func:`mhz`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import ConfigError, DegenerateFieldError
from .operators import bloch_to_rho, field_operator, rho_to_bloch

TWO_PI = 2.0 * math.pi

#: Bloch-norm slack used by state validation and step-instability checks.
STATE_TOL = 1e-9

FeedbackMode = Literal["none", "exact", "adiabatic"]
FEEDBACK_MODES = ("none", "exact", "adiabatic")


def mhz(nu: float) -> float:
    """Angular frequency (rad/us) for an ordinary frequency in MHz."""
    return TWO_PI * nu


def to_mhz(omega: float) -> float:
    return omega / TWO_PI


@dataclass(frozen=True, eq=False)
class QubitState:
    """Two-level state stored as its Bloch vector."""

    bloch: np.ndarray

    def __post_init__(self):
        b = np.array(self.bloch, dtype=float).reshape(3)
        if not np.all(np.isfinite(b)):
            raise ValueError("Bloch vector must be finite")
        if np.linalg.norm(b) > 1.0 + 10 * STATE_TOL:
            raise ValueError(f"Bloch norm {np.linalg.norm(b)!r} exceeds 1")
        b.setflags(write=False)
        object.__setattr__(self, "bloch", b)

    @classmethod
    def from_rho(cls, rho) -> "QubitState":
        return cls(rho_to_bloch(rho))

    @classmethod
    def north(cls) -> "QubitState":
        return cls(np.array([0.0, 0.0, 1.0]))

    @property
    def rho(self) -> np.ndarray:
        return bloch_to_rho(self.bloch)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.bloch))

    @property
    def x(self) -> float:
        return float(self.bloch[0])

    @property
    def y(self) -> float:
        return float(self.bloch[1])

    @property
    def z(self) -> float:
        return float(self.bloch[2])

    def is_pure(self, tol: float = 1e-6) -> bool:
        return abs(self.norm - 1.0) <= tol

    def __eq__(self, other):
        if not isinstance(other, QubitState):
            return NotImplemented
        return bool(np.array_equal(self.bloch, other.bloch))

    def __repr__(self):
        x, y, z = self.bloch
        return f"QubitState(x={x:.6g}, y={y:.6g}, z={z:.6g})"


@dataclass(frozen=True)
class QuenchProtocol:
    """Sweep ``theta = v t`` of ``Delta = d1 cos(theta) + d2`` and ``Omega = o1 sin(theta)``.

    Parameters
    ----------
    delta1, delta2, omega1 : float
        Angular frequencies in rad/us.
    tq : float
        Quench time in us; the sweep covers ``theta`` in ``[0, pi]``.
    phi : float
        Fixed azimuth of the drive in radians.
    """

    delta1: float
    delta2: float
    omega1: float
    tq: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("delta1", "delta2", "omega1", "tq", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.tq <= 0:
            raise ConfigError("tq must be positive")
        if self.omega1 < 0:
            raise ConfigError("omega1 must be non-negative")
        if self.delta1 <= 0:
            raise ConfigError("delta1 must be positive")

    @classmethod
    def from_mhz(cls, delta1_mhz: float, ratio: float = 0.0, tq_us: float = 1.0,
                 omega1_ratio: float = 1.0 / 3.0, phi: float = 0.0) -> "QuenchProtocol":
        """Build from ``Delta1 / 2pi`` in MHz and the ratios ``Delta2/Delta1``, ``Omega1/Delta1``."""
        d1 = mhz(delta1_mhz)
        return cls(delta1=d1, delta2=ratio * d1, omega1=omega1_ratio * d1, tq=tq_us, phi=phi)

    @property
    def v(self) -> float:
        """Quench speed ``pi / tq`` in rad/us."""
        return math.pi / self.tq

    @property
    def ratio(self) -> float:
        return self.delta2 / self.delta1

    @property
    def duration(self) -> float:
        return self.tq

    @property
    def max_rate(self) -> float:
        """Largest field scale of the sweep, used for the default step size."""
        return max(self.delta1 + abs(self.delta2), self.omega1)

    def theta_at(self, t):
        return self.v * np.asarray(t, dtype=float)

    def field_at(self, t) -> np.ndarray:
        return field_vector(self.theta_at(t), self)

    def reference_bloch_at(self, t) -> np.ndarray:
        return adiabatic_bloch(self.theta_at(t), self)

    def with_ratio(self, ratio: float) -> "QuenchProtocol":
        return QuenchProtocol(self.delta1, ratio * self.delta1, self.omega1, self.tq, self.phi)


@dataclass(frozen=True)
class ConstantDrive:
    """Time-independent field ``B`` (rad/us) applied for ``duration`` us.

    The reference trajectory is the unmonitored precession of ``start`` about
    ``B``, which plays the role of the adiabatic state in reference-based
    feedback.
    """

    field: tuple[float, float, float]
    duration: float
    start: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive")

    @property
    def max_rate(self) -> float:
        return float(np.linalg.norm(self.field))

    def theta_at(self, t):
        # No sweep angle; report the fraction of the run mapped onto [0, pi].
        return math.pi * np.asarray(t, dtype=float) / self.duration

    def field_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.field, dtype=float), t.shape + (3,)).copy()

    def reference_bloch_at(self, t) -> np.ndarray:
        return precess(np.asarray(self.start, dtype=float), np.asarray(self.field, dtype=float), t)


def precess(r0: np.ndarray, field: np.ndarray, t) -> np.ndarray:
    """Exact solution of ``dr/dt = B x r`` (Rodrigues rotation)."""
    t = np.asarray(t, dtype=float)
    b = float(np.linalg.norm(field))
    if b == 0.0:
        return np.broadcast_to(r0, t.shape + (3,)).copy()
    n = field / b
    ang = (b * t)[..., None]
    return (r0 * np.cos(ang) + np.cross(n, r0) * np.sin(ang)
            + n * np.dot(n, r0) * (1.0 - np.cos(ang)))


@dataclass(frozen=True)
class MeasurementConfig:
    """Probe and integrator settings.

    ``kappa`` is the measurement rate in rad/us, ``eta`` the detector
    efficiency, ``dt`` the Euler-Maruyama step in us (``None`` selects the
    default rule of :func:`default_dt`).
    """

    kappa: float = 0.0
    eta: float = 1.0
    dt: float | None = None
    feedback_mode: FeedbackMode = "none"
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ConfigError("kappa must be finite and non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ConfigError(f"feedback_mode must be one of {FEEDBACK_MODES}")
        if self.feedback_mode != "none" and self.eta == 0 and self.kappa > 0:
            raise ConfigError("feedback needs eta > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def replace(self, **changes) -> "MeasurementConfig":
        return replace(self, **changes)

    def resolve_dt(self, drive) -> float:
        dt = default_dt(drive, self.kappa) if self.dt is None else self.dt
        if dt > drive.duration:
            raise ConfigError("dt must not exceed the run duration")
        return dt

    def grid(self, drive) -> tuple[int, np.ndarray]:
        """Number of steps ``K`` and the ``K + 1`` uniform time points."""
        dt = self.resolve_dt(drive)
        k = max(1, math.ceil(drive.duration / dt - 1e-9))
        return k, np.linspace(0.0, drive.duration, k + 1)


def default_dt(drive, kappa: float) -> float:
    """``1 / (50 max(field scale, 4 kappa))``, capped at the run duration."""
    rate = max(drive.max_rate, 4.0 * kappa)
    if rate == 0:
        return drive.duration
    return min(drive.duration, 1.0 / (50.0 * rate))


def field_components(theta, p: QuenchProtocol) -> tuple[np.ndarray, np.ndarray]:
    """``(Delta, Omega)`` at sweep angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return p.delta1 * np.cos(theta) + p.delta2, p.omega1 * np.sin(theta)


def field_vector(theta, p: QuenchProtocol) -> np.ndarray:
    """Field ``(Omega cos phi, Omega sin phi, Delta)`` so that ``H = B . sigma / 2``."""
    delta, omega = field_components(theta, p)
    return np.stack([omega * math.cos(p.phi), omega * math.sin(p.phi), delta], axis=-1)


def hamiltonian_at(theta, p: QuenchProtocol) -> np.ndarray:
    """``H = [Delta sz + Omega (cos phi sx + sin phi sy)] / 2`` as a 2x2 matrix."""
    return field_operator(field_vector(theta, p))


def adiabatic_bloch(theta, p: QuenchProtocol) -> np.ndarray:
    """Unit Bloch vector along the instantaneous field, ``(0, 0, 1)`` at ``theta = 0``.

    Raises
    ------
    DegenerateFieldError
        If the field vanishes at any requested angle.
    """
    b = field_vector(theta, p)
    norm = np.linalg.norm(b, axis=-1)
    if np.any(norm <= 1e-12 * p.max_rate):
        raise DegenerateFieldError("field vanishes; adiabatic state undefined")
    return b / norm[..., None]


def analytic_berry_curvature(theta, phi, p: QuenchProtocol) -> np.ndarray:
    """Berry curvature of the followed state in the (phi, theta) orientation.

    For spin 1/2 this is half the solid-angle density swept by the field
    direction, ``Omega1^2 sin(theta) (Delta1 + Delta2 cos(theta)) / (2 R^3)``,
    and does not depend on ``phi``.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    delta, omega = field_components(theta, p)
    r2 = delta**2 + omega**2
    if np.any(r2 <= (1e-12 * p.max_rate) ** 2):
        raise DegenerateFieldError("field vanishes; curvature is singular")
    f = 0.5 * p.omega1**2 * np.sin(theta) * (p.delta1 + p.delta2 * np.cos(theta)) / r2**1.5
    return np.broadcast_to(f, np.broadcast(theta, phi).shape).copy()


def analytic_chern(p: QuenchProtocol) -> int:
    """Chern number of the field surface: 1 if it encloses the origin, else 0."""
    if p.omega1 <= 0 or p.delta2 < 0:
        raise ConfigError("analytic_chern needs omega1 > 0 and delta2 >= 0")
    if math.isclose(p.delta2, p.delta1, rel_tol=1e-12):
        raise DegenerateFieldError("Delta2 = Delta1 is the topological transition")
    return 1 if p.delta2 < p.delta1 else 0
