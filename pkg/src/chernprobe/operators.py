"""Pauli algebra and the superoperators of the monitored-qubit master equation.

All functions accept stacked inputs: density matrices of shape ``(..., 2, 2)``
and Bloch vectors of shape ``(..., 3)``.
"""

from __future__ import annotations

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


def bloch_to_rho(bloch: np.ndarray) -> np.ndarray:
    """Density matrix ``(1 + x sx + y sy + z sz) / 2`` for each Bloch vector."""
    bloch = np.asarray(bloch, dtype=float)
    return 0.5 * (IDENTITY + np.einsum("...i,ijk->...jk", bloch, PAULI))


def rho_to_bloch(rho: np.ndarray) -> np.ndarray:
    """Bloch components ``Tr(sigma_u rho)``."""
    rho = np.asarray(rho)
    return np.einsum("ikj,...jk->...i", PAULI, rho).real


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def dissipator(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator ``a rho a^+ - {a^+ a, rho} / 2``."""
    ad = dagger(a)
    ada = ad @ a
    return a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)


def measurement_superop(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Homodyne backaction ``a rho + rho a^+ - Tr(a rho + rho a^+) rho``."""
    m = a @ rho + rho @ dagger(a)
    tr = np.trace(m, axis1=-2, axis2=-1)
    return m - tr[..., None, None] * rho


def field_operator(field: np.ndarray) -> np.ndarray:
    """Hamiltonian ``(B . sigma) / 2`` for field vectors ``B``."""
    return 0.5 * np.einsum("...i,ijk->...jk", np.asarray(field, dtype=float), PAULI)
