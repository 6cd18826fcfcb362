"""Parameterized circuit templates and their action on density matrices.

Rotation convention: ``R_P(phi) = exp(-i phi P / 2)``; the two-qubit gates are
``ZZ(phi) = exp(-i phi Z(x)Z / 2)`` and ``XX(phi) = exp(-i phi X(x)X / 2)``.
Gates are placed on the full register by Kronecker products with identities,
followed by an axis permutation when the two qubits of a gate are not the
adjacent pair ``(q, q + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from qgdm import linalg, qstate

SINGLE_QUBIT = ("RX", "RY", "RZ")
TWO_QUBIT = ("ZZ", "XX")


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class GateSpec:
    """One gate. ``param`` indexes the trainable vector; ``None`` means the
    angle is the template's fixed input (e.g. the scaled timestep)."""

    kind: str
    qubits: tuple[int, ...]
    param: int | None = None

    def __post_init__(self):
        if self.kind in SINGLE_QUBIT:
            arity = 1
        elif self.kind in TWO_QUBIT:
            arity = 2
        else:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != arity or len(set(self.qubits)) != arity:
            raise CircuitError(f"{self.kind} needs {arity} distinct qubits, got {self.qubits}")


@dataclass(frozen=True)
class CircuitTemplate:
    n_qubits: int
    gates: tuple[GateSpec, ...]
    n_params: int

    def __post_init__(self):
        used = set()
        for g in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                raise CircuitError(f"gate {g} outside a {self.n_qubits}-qubit register")
            if g.param is not None:
                used.add(g.param)
        if used != set(range(self.n_params)):
            raise CircuitError("trainable indices must be exactly 0..n_params-1")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def reversed(self) -> CircuitTemplate:
        """Same gates in reverse order; with negated angles this is the inverse."""
        return CircuitTemplate(self.n_qubits, self.gates[::-1], self.n_params)


class _Builder:
    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        self.gates: list[GateSpec] = []
        self.n_params = 0

    def trainable(self, kind: str, *qubits: int) -> None:
        self.gates.append(GateSpec(kind, tuple(qubits), self.n_params))
        self.n_params += 1

    def fixed(self, kind: str, *qubits: int) -> None:
        self.gates.append(GateSpec(kind, tuple(qubits), None))

    def build(self) -> CircuitTemplate:
        return CircuitTemplate(self.n_qubits, tuple(self.gates), self.n_params)


def ring_pairs(n: int) -> list[tuple[int, int]]:
    """Nearest-neighbour ring; a 2-qubit ring has a single edge."""
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def timestep_embedding_template(n_tau: int, layers: int) -> CircuitTemplate:
    """Data re-uploading ansatz: per layer RX(t') and RY(w) on every qubit,
    then a ring of trainable ZZ entanglers."""
    if n_tau < 1 or layers < 1:
        raise CircuitError("embedding needs n_tau >= 1 and layers >= 1")
    b = _Builder(n_tau)
    for _ in range(layers):
        for q in range(n_tau):
            b.fixed("RX", q)
            b.trainable("RY", q)
        for i, j in ring_pairs(n_tau):
            b.trainable("ZZ", i, j)
    return b.build()


def denoising_template(n: int, layers: int) -> CircuitTemplate:
    """Per layer XX on every pair ``i < j``, then RZ-RX-RZ on every qubit.

    Ending each layer on the single-qubit rotations matters: with the
    entanglers last, training often settles on maps that copy the nearly
    clean t=1 input and generation then fails.
    """
    if n < 1 or layers < 1:
        raise CircuitError("denoising circuit needs n >= 1 and layers >= 1")
    b = _Builder(n)
    for _ in range(layers):
        for i, j in combinations(range(n), 2):
            b.trainable("XX", i, j)
        for q in range(n):
            b.trainable("RZ", q)
            b.trainable("RX", q)
            b.trainable("RZ", q)
    return b.build()


def preparation_template(n: int, layers: int) -> CircuitTemplate:
    b = _Builder(n)
    for _ in range(layers):
        for q in range(n):
            b.trainable("RY", q)
            b.trainable("RZ", q)
        for i, j in ring_pairs(n):
            b.trainable("ZZ", i, j)
    return b.build()


def gate_unitary(kind: str, angle) -> np.ndarray:
    """Gate matrix; an array of angles yields a stack of matrices."""
    angle = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(angle)):
        raise CircuitError("gate angle must be finite")
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    z = np.zeros_like(c)
    if kind == "RX":
        m = [[c, -1j * s], [-1j * s, c]]
    elif kind == "RY":
        m = [[c, -s], [s, c]]
    elif kind == "RZ":
        m = [[c - 1j * s, z], [z, c + 1j * s]]
    elif kind == "ZZ":
        em, ep = c - 1j * s, c + 1j * s
        m = [[em, z, z, z], [z, ep, z, z], [z, z, ep, z], [z, z, z, em]]
    elif kind == "XX":
        ms = -1j * s
        m = [[c, z, z, ms], [z, c, ms, z], [z, ms, c, z], [ms, z, z, c]]
    else:
        raise CircuitError(f"unknown gate kind {kind!r}")
    u = np.array(m, dtype=np.complex128)
    return np.moveaxis(u, (0, 1), (-2, -1))


def embed_gate(u: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Lift a 1- or 2-qubit gate (or a stack of them) to an ``n``-qubit operator."""
    k = len(qubits)
    lo = min(qubits)
    if k == 1 or tuple(qubits) == (lo, lo + 1):
        left = np.eye(2**lo, dtype=np.complex128)
        right = np.eye(2 ** (n - lo - k), dtype=np.complex128)
        return linalg.kron(linalg.kron(left, u), right)
    # Place the gate on qubits (0, 1) of a reordered register, then undo the order.
    order = list(qubits) + [q for q in range(n) if q not in qubits]
    full = linalg.kron(u, np.eye(2 ** (n - k), dtype=np.complex128))
    batch = full.shape[:-2]
    t = full.reshape(batch + (2,) * (2 * n))
    inv = np.argsort(order)
    nb = len(batch)
    axes = list(range(nb)) + [nb + i for i in inv] + [nb + n + i for i in inv]
    return t.transpose(axes).reshape(batch + (2**n, 2**n))


def _angle(g: GateSpec, params: np.ndarray, fixed):
    return params[g.param] if g.param is not None else fixed


def _check_params(template: CircuitTemplate, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (template.n_params,):
        raise CircuitError(f"expected {template.n_params} parameters, got shape {params.shape}")
    return params


def circuit_unitary(template: CircuitTemplate, params, fixed=0.0) -> np.ndarray:
    """Full unitary of the template. An array-valued ``fixed`` gives a stack."""
    params = _check_params(template, params)
    fixed = np.asarray(fixed, dtype=float)
    d = template.dim
    u = np.broadcast_to(np.eye(d, dtype=np.complex128), fixed.shape + (d, d)).copy()
    for g in template.gates:
        gu = embed_gate(gate_unitary(g.kind, _angle(g, params, fixed)), g.qubits, template.n_qubits)
        u = gu @ u
    return u


def apply_circuit(template: CircuitTemplate, params, fixed: float, rho) -> np.ndarray:
    """Conjugate ``rho`` by each gate of the template in order."""
    params = _check_params(template, params)
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (template.dim, template.dim):
        raise CircuitError(f"state of shape {rho.shape} does not fit {template.n_qubits} qubits")
    for g in template.gates:
        gu = embed_gate(gate_unitary(g.kind, _angle(g, params, fixed)), g.qubits, template.n_qubits)
        rho = gu @ rho @ gu.conj().T
    return qstate._checked(rho)


def random_pure_state(n: int, rng: np.random.Generator, layers: int = 2) -> np.ndarray:
    """Run the preparation circuit with angles drawn from U(0, pi) on |0...0>."""
    if n < 1:
        raise CircuitError("need at least one qubit")
    template = preparation_template(n, layers)
    params = rng.uniform(0.0, np.pi, size=template.n_params)
    psi = circuit_unitary(template, params)[:, 0]
    return psi / np.linalg.norm(psi)


def random_mixed_state(n: int, rng: np.random.Generator, k: int = 2, layers: int = 2) -> np.ndarray:
    """Mixture of ``k`` random pure states weighted by a softmax of draws from (0, 1]."""
    if k < 2:
        raise CircuitError("a mixture needs k >= 2 components")
    states = [random_pure_state(n, rng, layers) for _ in range(k)]
    draws = 1.0 - rng.random(k)
    probs = np.exp(draws) / np.exp(draws).sum()
    return qstate.mix(states, probs)
