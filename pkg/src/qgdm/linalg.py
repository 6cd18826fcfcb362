"""Dense complex linear algebra used by the simulator.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``.
Index convention: qubit 0 is the most significant bit of a basis index, and
a composite system ``A (x) B`` keeps ``A`` in the high-order block.

The Hermitian eigensolver is a cyclic Jacobi method compiled with numba; a
batched eigenvalue-only entry point feeds the fidelity hot path in training.
"""

from __future__ import annotations

from typing import NamedTuple

import numba
import numpy as np

HERMITIAN_TOL = 1e-10
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100
PSD_ERROR_TOL = 1e-8


class LinalgError(ValueError):
    """Raised for shape violations and failed numerical preconditions."""


class ConvergenceError(LinalgError):
    pass


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise LinalgError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _require_square(a: np.ndarray, what: str = "matrix") -> None:
    if a.shape[-1] != a.shape[-2]:
        raise LinalgError(f"{what} must be square, got shape {a.shape}")


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise LinalgError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def kron(a, b) -> np.ndarray:
    """Kronecker product with ``(a (x) b)[i*p + k, j*q + l] = a[i, j] * b[k, l]``.

    Leading batch axes are broadcast, so stacks of matrices are accepted.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    m, n = a.shape[-2:]
    p, q = b.shape[-2:]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(out.shape[:-4] + (m * p, n * q))


def trace(a) -> complex:
    a = as_matrix(a)
    _require_square(a)
    return complex(np.trace(a))


def partial_trace(a, dims: tuple[int, int], keep: str = "A") -> np.ndarray:
    """Reduce a bipartite operator on ``A (x) B`` to subsystem ``keep``.

    ``dims`` is ``(d_A, d_B)``. Leading batch axes are allowed.
    """
    a = np.asarray(a, dtype=np.complex128)
    d_a, d_b = dims
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] != d_a * d_b:
        raise LinalgError(f"shape {a.shape} does not factor as {d_a}x{d_b}")
    t = a.reshape(a.shape[:-2] + (d_a, d_b, d_a, d_b))
    if keep == "A":
        return np.einsum("...ijkj->...ik", t)
    if keep == "B":
        return np.einsum("...ijil->...jl", t)
    raise LinalgError(f"keep must be 'A' or 'B', got {keep!r}")


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.linalg.norm(a - a.conj().T) <= tol)


# Jacobi kernels ------------------------------------------------------------


@numba.njit(cache=True)
def _jacobi_kernel(a, want_vectors, tol, max_sweeps):
    # Cyclic Jacobi on a Hermitian matrix (copied). Each rotation first
    # removes the phase of a[p, q] and then applies a real Givens rotation.
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n, dtype=np.complex128)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j].real ** 2 + a[i, j].imag ** 2
    thresh = tol * max(1.0, np.sqrt(fro))
    converged = False
    for _ in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j].real ** 2 + a[i, j].imag ** 2
        if np.sqrt(off) < thresh:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r < 1e-300:
                    continue
                ph = apq / r  # e^{i phi}
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * r)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                phc = ph.conjugate()
                jpp = c + 0j
                jpq = s + 0j
                jqp = -s * phc
                jqq = c * phc
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = akp * jpp + akq * jqp
                    a[k, q] = akp * jpq + akq * jqq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = jpp.conjugate() * apk + jqp.conjugate() * aqk
                    a[q, k] = jpq.conjugate() * apk + jqq.conjugate() * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                if want_vectors:
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = vkp * jpp + vkq * jqp
                        v[k, q] = vkp * jpq + vkq * jqq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i].real
    order = np.argsort(w)
    w = w[order]
    v = v[:, order]
    return w, v, converged


@numba.njit(cache=True)
def _jacobi_eigvals_batch(a, tol, max_sweeps):
    b = a.shape[0]
    n = a.shape[1]
    out = np.empty((b, n))
    ok = True
    for i in range(b):
        w, _, conv = _jacobi_kernel(a[i], False, tol, max_sweeps)
        out[i] = w
        ok = ok and conv
    return out, ok


def hermitian_eig(a, *, tol: float = OFFDIAG_TOL, max_sweeps: int = MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Eigenvalues are returned in ascending order with orthonormal eigenvectors
    as the columns of the second element.
    """
    a = as_matrix(a)
    _require_square(a)
    if not is_hermitian(a):
        raise LinalgError("matrix is not Hermitian within tolerance")
    w, v, ok = _jacobi_kernel(np.ascontiguousarray(a), True, tol, max_sweeps)
    if not ok:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return EigenDecomposition(w, v)


def hermitian_eigvals_batch(a, *, tol: float = OFFDIAG_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Ascending eigenvalues for a stack ``(B, d, d)`` of Hermitian matrices.

    No Hermiticity check; callers pass Hermitized input.
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    w, ok = _jacobi_eigvals_batch(a, tol, max_sweeps)
    if not ok:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return w


def clamp_spectrum(w: np.ndarray) -> np.ndarray:
    """Zero eigenvalues below round-off resolution; reject clearly negative ones.

    ``w`` may be a stack of spectra along the last axis. Values under
    ``8 d eps max|w|`` are noise, and leaving them in would put ``sqrt(noise)``
    (around 1e-8) into square roots and fidelities.
    """
    if w.size and w.min() < -PSD_ERROR_TOL:
        raise LinalgError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3e})")
    floor = 8 * w.shape[-1] * np.finfo(float).eps * np.abs(w).max(axis=-1, keepdims=True)
    return np.where(w <= floor, 0.0, w)


def hermitian_sqrt(a) -> np.ndarray:
    """Principal square root of a Hermitian positive semidefinite matrix."""
    w, v = hermitian_eig(a)
    w = clamp_spectrum(w)
    return (v * np.sqrt(w)) @ v.conj().T
