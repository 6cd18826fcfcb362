"""Quantum-state primitives: density matrices, depolarizing channel, distances.

States are plain complex arrays. A density matrix is a ``(d, d)`` array with
``d = 2**n_qubits``; a pure state is a length-``d`` amplitude vector. Output
validation runs when ``QGDM_VALIDATE`` is set (the test suite enables it) or
after :func:`set_validation`; the training loop never pays for it.
"""

from __future__ import annotations

import os

import numpy as np

from qgdm import linalg

STATE_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

_validate = os.environ.get("QGDM_VALIDATE", "") not in ("", "0")


class InvalidStateError(ValueError):
    pass


def set_validation(enabled: bool) -> None:
    global _validate
    _validate = bool(enabled)


def validation_enabled() -> bool:
    return _validate


def n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise InvalidStateError(f"dimension {dim} is not a power of two >= 2")
    return n


def check_density_matrix(rho, tol: float = STATE_TOL) -> np.ndarray:
    """Return ``rho`` as an array after checking Hermiticity, trace and PSD."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    n_qubits_of(rho.shape[0])
    if np.linalg.norm(rho - rho.conj().T) > tol:
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"density matrix trace is {tr}, expected 1")
    w = linalg.hermitian_eig((rho + rho.conj().T) / 2).eigenvalues
    if w[0] < -tol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {w[0]:.3e}")
    return rho


def check_pure_state(psi, tol: float = STATE_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1:
        raise InvalidStateError(f"pure state must be a vector, got shape {psi.shape}")
    n_qubits_of(psi.shape[0])
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise InvalidStateError("pure state is not normalised")
    return psi


def _checked(rho: np.ndarray) -> np.ndarray:
    if _validate:
        check_density_matrix(rho)
    return rho


def basis_state(n: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(2**n, dtype=np.complex128)
    psi[index] = 1.0
    return psi


def completely_mixed(n: int) -> np.ndarray:
    if n < 1:
        raise InvalidStateError("need at least one qubit")
    d = 2**n
    return np.eye(d, dtype=np.complex128) / d


def from_pure(psi) -> np.ndarray:
    psi = check_pure_state(psi)
    return np.outer(psi, psi.conj())


def mix(states, probs) -> np.ndarray:
    """Ensemble ``sum_i p_i |psi_i><psi_i|``."""
    probs = np.asarray(probs, dtype=float)
    states = [check_pure_state(s) for s in states]
    if len(states) == 0 or len(states) != probs.size:
        raise InvalidStateError("need one probability per state")
    if np.any(probs <= 0) or abs(probs.sum() - 1.0) > STATE_TOL:
        raise InvalidStateError(f"invalid probability vector {probs}")
    dims = {s.shape[0] for s in states}
    if len(dims) != 1:
        raise InvalidStateError("states have different qubit counts")
    rho = sum(p * np.outer(s, s.conj()) for p, s in zip(probs, states))
    return _checked(rho)


def depolarize(rho, alpha: float) -> np.ndarray:
    """Depolarizing channel ``(1 - alpha) I/d + alpha rho``."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidStateError(f"alpha must lie in [0, 1], got {alpha}")
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    out = alpha * rho
    out[np.diag_indices(d)] += (1.0 - alpha) / d
    return _checked(out)


def _sqrt_from_eig(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (v * np.sqrt(linalg.clamp_spectrum(w))) @ v.conj().T


def fidelity_from_sqrt(sqrt_rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Fidelity given a precomputed ``sqrt(rho)``; ``sigma`` may be a stack."""
    inner = sqrt_rho @ sigma @ sqrt_rho
    inner = 0.5 * (inner + np.conj(np.swapaxes(inner, -1, -2)))
    batched = inner.ndim == 3
    w = linalg.hermitian_eigvals_batch(inner if batched else inner[None])
    w = linalg.clamp_spectrum(w)
    f = np.sqrt(w).sum(axis=-1) ** 2
    f = np.clip(f, 0.0, 1.0)
    return f if batched else f[0]


def sqrt_density(rho) -> np.ndarray:
    w, v = linalg.hermitian_eig(0.5 * (rho + np.conj(rho).T))
    return _sqrt_from_eig(w, v)


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2`` in [0, 1]."""
    rho = np.asarray(rho, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    if rho.shape != sigma.shape:
        raise InvalidStateError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    if _validate:
        check_density_matrix(rho)
        check_density_matrix(sigma)
    return float(fidelity_from_sqrt(sqrt_density(rho), sigma))


def hs_distance(rho, sigma) -> float:
    """Hilbert-Schmidt distance ``sqrt(tr[(rho - sigma)^2])``."""
    rho = np.asarray(rho, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    if rho.shape != sigma.shape:
        raise InvalidStateError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    return float(np.sqrt(max(np.trace(diff @ diff).real, 0.0)))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.trace(rho @ rho).real)


def bloch_coordinates(rho) -> tuple[float, float, float]:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2, 2):
        raise InvalidStateError("Bloch coordinates need a single-qubit state")
    return tuple(float(np.trace(rho @ p).real) for p in (PAULI_X, PAULI_Y, PAULI_Z))
