"""Backaction-cancelling Markovian feedback.

The homodyne current drives ``H_V = (kappa / 2)(alpha sx + beta sz) V(t)`` and a
second, signal-independent term adds ``H_D = kappa (a sx + b sz)``. With
``alpha = 2z, beta = -2x, a = -yz, b = xy`` evaluated on the current pure
state, the feedback cancels every measurement term at unit efficiency, both
the ``dW`` part and the Ito correction.

Everything here is vectorized: parameters may be arrays and Bloch vectors have
shape ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ImpureStateError
from .model import STATE_TOL, QuenchProtocol, QubitState, adiabatic_bloch
from .operators import (SIGMA_X, SIGMA_Y, SIGMA_Z, commutator, dissipator,
                        measurement_superop)


@dataclass(frozen=True)
class FeedbackParams:
    """Dimensionless feedback gains; scalars or equally shaped arrays."""

    alpha: np.ndarray | float
    beta: np.ndarray | float
    a: np.ndarray | float
    b: np.ndarray | float

    @classmethod
    def zero(cls) -> "FeedbackParams":
        return cls(0.0, 0.0, 0.0, 0.0)

    def as_tuple(self):
        return self.alpha, self.beta, self.a, self.b


def params_from_bloch(bloch: np.ndarray) -> FeedbackParams:
    """Gains for arbitrary (possibly impure, possibly stacked) Bloch vectors."""
    bloch = np.asarray(bloch, dtype=float)
    x, y, z = bloch[..., 0], bloch[..., 1], bloch[..., 2]
    return FeedbackParams(2.0 * z, -2.0 * x, -y * z, x * y)


def feedback_params_exact(state: QubitState, strict: bool = True) -> FeedbackParams:
    """Gains that exactly cancel the backaction on ``state``.

    Cancellation only works for pure states. With ``strict`` an impure state
    raises :class:`ImpureStateError`; otherwise gains are computed from the
    shortened Bloch vector as they are.
    """
    bloch = state.bloch if isinstance(state, QubitState) else np.asarray(state, dtype=float)
    if strict and np.linalg.norm(bloch) < 1.0 - 100 * STATE_TOL:
        raise ImpureStateError(f"state with Bloch norm {np.linalg.norm(bloch):.6g} is not pure")
    p = params_from_bloch(bloch)
    return FeedbackParams(*(float(v) for v in p.as_tuple()))


def feedback_params_adiabatic(theta, p: QuenchProtocol) -> FeedbackParams:
    """Gains evaluated on the adiabatic state; ``a = b = 0`` because its ``y`` vanishes at ``phi = 0``."""
    params = params_from_bloch(adiabatic_bloch(theta, p))
    if np.ndim(theta) == 0:
        return FeedbackParams(*(float(v) for v in params.as_tuple()))
    return params


def bloch_drift(r: np.ndarray, params: FeedbackParams, kappa: float, eta: float) -> np.ndarray:
    """Deterministic feedback contribution to ``dr/dt``."""
    if kappa == 0:
        return np.zeros_like(r)
    al, be, a, b = params.as_tuple()
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    q = 0.5 / eta
    dx = -2.0 * b * y - 2.0 * be + q * (al * be * z - be * be * x)
    dy = -2.0 * a * z + 2.0 * b * x - q * (al * al + be * be) * y
    dz = 2.0 * a * y + 2.0 * al + q * (al * be * x - al * al * z)
    return kappa * np.stack([dx, dy, dz], axis=-1)


def bloch_diffusion(r: np.ndarray, params: FeedbackParams, kappa: float, eta: float) -> np.ndarray:
    """Feedback coefficient multiplying ``dW`` in ``dr``."""
    if kappa == 0:
        return np.zeros_like(r)
    al, be, _, _ = params.as_tuple()
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    s = np.sqrt(kappa / eta)
    return s * np.stack([-be * y, be * x - al * z, al * y], axis=-1)


def _operators(params: FeedbackParams, kappa: float):
    al, be, a, b = (np.asarray(v, dtype=float)[..., None, None] for v in params.as_tuple())
    hv = 0.5 * kappa * (al * SIGMA_X + be * SIGMA_Z)
    hd = kappa * (a * SIGMA_X + b * SIGMA_Z)
    return hv, hd


def matrix_drift(rho: np.ndarray, params: FeedbackParams, kappa: float, eta: float) -> np.ndarray:
    """Feedback terms of the Wiseman-Milburn master equation, per unit time.

    ``-i[H_D, rho] - i[H~_V, sy rho + rho sy] + D[H~_V] rho / (kappa eta)``
    """
    if kappa == 0:
        return np.zeros_like(rho)
    hv, hd = _operators(params, kappa)
    anti = SIGMA_Y @ rho + rho @ SIGMA_Y
    return (-1j * commutator(hd, rho) - 1j * commutator(hv, anti)
            + dissipator(hv, rho) / (kappa * eta))


def matrix_diffusion(rho: np.ndarray, params: FeedbackParams, kappa: float, eta: float) -> np.ndarray:
    """Feedback part of ``sqrt(eta kappa) H[sy - i H~_V / (eta kappa)] rho``."""
    if kappa == 0:
        return np.zeros_like(rho)
    hv, _ = _operators(params, kappa)
    return measurement_superop(-1j * hv, rho) / np.sqrt(eta * kappa)
