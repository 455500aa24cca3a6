"""Quantum-like gates acting on network resources.

Every QL bit lives in a ``2 n_g`` dimensional block space, viewed as
``C^2 (x) C^n_g``: the two-dimensional factor selects the subgraph and the
``n_g`` factor the node.  The two emergent eigenvectors of a regular block
resource are

    psi_down = (u, -u) / sqrt(2),    psi_up = (u, u) / sqrt(2)

with ``u`` the uniform unit vector on ``n_g`` nodes.  The computational-basis
map sends them to ``(u, 0)`` and ``(0, u)`` respectively, and a gate ``V`` on
qubits becomes ``U_cb^-1 (V (x) 1) U_cb`` on the network.

Bits are numbered from 1 and the first bit is the most significant Kronecker
factor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .netgraph import DEFAULT_MAX_BYTES, ResourceSpec, check_capacity

DOWN, UP = "down", "up"

# Rotation taking psi_down -> e_0 and psi_up -> e_1 on the subgraph factor.
# The textbook Hadamard would instead send psi_down to e_1.
CB_ROTATION = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0)

QUBIT_GATES = {
    "H": np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
TWO_BIT_GATES = {"CNOT"}
SUPPORTED = tuple(QUBIT_GATES) + tuple(sorted(TWO_BIT_GATES))


def uniform_vector(length) -> np.ndarray:
    return np.full(int(length), 1.0 / np.sqrt(length))


def emergent_state(n_g, sigma) -> np.ndarray:
    """Single-bit emergent eigenvector ``psi_down`` or ``psi_up``."""
    u = uniform_vector(n_g)
    if sigma == DOWN:
        return np.concatenate([u, -u]) / np.sqrt(2.0)
    if sigma == UP:
        return np.concatenate([u, u]) / np.sqrt(2.0)
    raise ParameterError(f"sigma must be {DOWN!r} or {UP!r}, got {sigma!r}")


def basis_state(spec: ResourceSpec, sigmas) -> np.ndarray:
    """Product emergent state ``psi_sigma_1 (x) ... (x) psi_sigma_N``."""
    if isinstance(sigmas, str):
        sigmas = [sigmas] * spec.n_ql
    if len(sigmas) != spec.n_ql:
        raise ParameterError(f"need {spec.n_ql} labels, got {len(sigmas)}")
    out = np.ones(1)
    for s in sigmas:
        out = np.kron(out, emergent_state(spec.n_g, s))
    return out


def ground_state(spec: ResourceSpec) -> np.ndarray:
    return basis_state(spec, DOWN)


def _embed(local, q, spec: ResourceSpec):
    """``1 (x) ... (x) local (x) ... (x) 1`` with ``local`` on bit ``q``."""
    d = spec.bit_dim
    left = d ** (q - 1)
    right = d ** (spec.n_ql - q)
    return np.kron(np.kron(np.eye(left), local), np.eye(right))


def u_cb(spec: ResourceSpec) -> np.ndarray:
    """Map from emergent eigenvectors onto the block computational basis."""
    check_capacity(spec.n_tot, 8, DEFAULT_MAX_BYTES, "computational-basis map")
    per_bit = np.kron(CB_ROTATION, np.eye(spec.n_g))
    out = np.ones((1, 1))
    for _ in range(spec.n_ql):
        out = np.kron(out, per_bit)
    return out


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple

    def __post_init__(self):
        kind = str(self.kind).upper()
        targets = tuple(int(t) for t in np.atleast_1d(self.targets))
        if kind not in SUPPORTED:
            raise ParameterError(f"unsupported gate {self.kind!r}; supported: {', '.join(SUPPORTED)}")
        want = 2 if kind in TWO_BIT_GATES else 1
        if len(targets) != want:
            raise ParameterError(f"{kind} takes {want} target(s), got {targets}")
        if want == 2 and targets[0] == targets[1]:
            raise ParameterError("CNOT control and target must differ")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", targets)

    def check(self, n_ql):
        for t in self.targets:
            if not 1 <= t <= n_ql:
                raise ParameterError(f"{self.kind} target {t} outside [1, {n_ql}]")

    def to_dict(self):
        return {"gate": self.kind, "targets": list(self.targets)}


def _qubit_operator(ops_by_bit, n_ql):
    """Kronecker product over bits of 2x2 operators, identity where absent."""
    out = np.ones((1, 1))
    for q in range(1, n_ql + 1):
        out = np.kron(out, ops_by_bit.get(q, np.eye(2)))
    return out


def computational_gate(g: GateOp, n_ql) -> np.ndarray:
    """``2^n_ql`` dimensional matrix of the gate in the qubit computational basis."""
    g.check(n_ql)
    if g.kind in QUBIT_GATES:
        return _qubit_operator({g.targets[0]: QUBIT_GATES[g.kind]}, n_ql)
    c, t = g.targets
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    return _qubit_operator({c: p0}, n_ql) + _qubit_operator({c: p1, t: QUBIT_GATES["X"]}, n_ql)


def _lift(v_qubits, spec: ResourceSpec):
    """``V (x) 1_ng`` on every bit, with the qubit factors interleaved per bit."""
    nq, ng = spec.n_ql, spec.n_g
    # qubit index axes (a_1..a_N), node axes (j_1..j_N) -> interleave (a_1 j_1 ... a_N j_N)
    v = np.asarray(v_qubits).reshape((2,) * (2 * nq))
    eye = np.eye(ng ** nq).reshape((ng,) * (2 * nq))
    full = np.multiply.outer(v, eye)
    # axes: out qubits [0..nq), in qubits [nq..2nq), out nodes [2nq..3nq), in nodes [3nq..4nq)
    out_axes = [ax for q in range(nq) for ax in (q, 2 * nq + q)]
    in_axes = [ax for q in range(nq) for ax in (nq + q, 3 * nq + q)]
    full = full.transpose(out_axes + in_axes)
    return full.reshape(spec.n_tot, spec.n_tot)


def gate_unitary(g: GateOp, spec: ResourceSpec) -> np.ndarray:
    """Network unitary ``U_cb^-1 (V_g (x) 1) U_cb`` of a single gate."""
    g.check(spec.n_ql)
    check_capacity(spec.n_tot, 8, DEFAULT_MAX_BYTES, "gate unitary")
    cb = u_cb(spec)
    return cb.T @ _lift(computational_gate(g, spec.n_ql), spec) @ cb


def local_gate(kind, n_g) -> np.ndarray:
    """Single-bit network gate on the ``2 n_g`` block space."""
    if kind not in QUBIT_GATES:
        raise ParameterError(f"{kind!r} is not a single-bit gate")
    return np.kron(CB_ROTATION.T @ QUBIT_GATES[kind] @ CB_ROTATION, np.eye(n_g))


def local_projector(sigma, n_g) -> np.ndarray:
    """``(1 +/- U_Z) / 2`` on one bit; projects onto the ``psi_sigma`` subspace."""
    z = local_gate("Z", n_g)
    one = np.eye(2 * n_g)
    if sigma == DOWN:
        return 0.5 * (one + z)
    if sigma == UP:
        return 0.5 * (one - z)
    raise ParameterError(f"sigma must be {DOWN!r} or {UP!r}, got {sigma!r}")


def projector(sigma, spec: ResourceSpec, q=1) -> np.ndarray:
    if not 1 <= q <= spec.n_ql:
        raise ParameterError(f"bit {q} outside [1, {spec.n_ql}]")
    return _embed(local_projector(sigma, spec.n_g), q, spec)


def apply_gate(g: GateOp, spec: ResourceSpec, x) -> np.ndarray:
    """Apply a gate to one or more state vectors without forming ``N_tot^2`` matrices.

    ``x`` has shape ``(n_tot,)`` or ``(n_tot, m)``.
    """
    g.check(spec.n_ql)
    x = np.asarray(x)
    vec = x.ndim == 1
    t = x.reshape((spec.bit_dim,) * spec.n_ql + (-1,))
    if g.kind in QUBIT_GATES:
        out = _apply_local(local_gate(g.kind, spec.n_g), g.targets[0], t)
    else:
        c, tgt = g.targets
        down = _apply_local(local_projector(DOWN, spec.n_g), c, t)
        up = _apply_local(local_projector(UP, spec.n_g), c, t)
        out = down + _apply_local(local_gate("X", spec.n_g), tgt, up)
    out = out.reshape(spec.n_tot, -1)
    return out[:, 0] if vec else out


def _apply_local(op, q, t):
    moved = np.tensordot(op, t, axes=([1], [q - 1]))
    return np.moveaxis(moved, 0, q - 1)


@dataclass(frozen=True)
class Circuit:
    """Gate sequence ``g_1, ..., g_M`` applied left to right in time.

    The assembled unitary is ``U_gM ... U_g1``.
    """

    ops: tuple
    spec: ResourceSpec = field(compare=False)

    def __post_init__(self):
        ops = tuple(op if isinstance(op, GateOp) else GateOp(*op) for op in self.ops)
        for op in ops:
            op.check(self.spec.n_ql)
        object.__setattr__(self, "ops", ops)

    @cached_property
    def unitary(self) -> np.ndarray:
        u = np.eye(self.spec.n_tot)
        for op in self.ops:
            u = gate_unitary(op, self.spec) @ u
        u.setflags(write=False)
        return u

    def apply(self, x) -> np.ndarray:
        """Matrix-free application to vectors (columns)."""
        out = np.asarray(x)
        for op in self.ops:
            out = apply_gate(op, self.spec, out)
        return out

    def to_json(self) -> str:
        return json.dumps([op.to_dict() for op in self.ops])

    @classmethod
    def from_json(cls, text_or_list, spec: ResourceSpec) -> "Circuit":
        items = json.loads(text_or_list) if isinstance(text_or_list, str) else text_or_list
        ops = []
        for item in items:
            if set(item) - {"gate", "targets"}:
                raise ParameterError(f"unexpected keys in gate entry {item}")
            ops.append(GateOp(item["gate"], tuple(item["targets"])))
        return cls(tuple(ops), spec)


def identity_circuit(spec: ResourceSpec) -> Circuit:
    return Circuit((), spec)


BELL_JSON = '[{"gate":"H","targets":[1]},{"gate":"CNOT","targets":[1,2]}]'


def bell_circuit(spec: ResourceSpec) -> Circuit:
    if spec.n_ql != 2:
        raise ParameterError(f"the Bell circuit needs n_ql=2, got {spec.n_ql}")
    return Circuit.from_json(BELL_JSON, spec)


def conjugate_resource(r, circuit: Circuit) -> np.ndarray:
    """Gate-transformed resource ``U R U^dagger``."""
    r = np.asarray(r)
    u = circuit.unitary
    if r.shape != u.shape:
        raise ParameterError(f"resource shape {r.shape} does not match circuit dimension {u.shape}")
    out = u @ r @ u.conj().T
    return 0.5 * (out + out.conj().T)


def random_circuit(spec: ResourceSpec, n_gates, rng) -> Circuit:
    kinds = list(SUPPORTED) if spec.n_ql > 1 else list(QUBIT_GATES)
    ops = []
    for _ in range(int(n_gates)):
        kind = kinds[rng.integers(len(kinds))]
        if kind in TWO_BIT_GATES:
            c, t = rng.choice(np.arange(1, spec.n_ql + 1), size=2, replace=False)
            ops.append(GateOp(kind, (int(c), int(t))))
        else:
            ops.append(GateOp(kind, (int(rng.integers(1, spec.n_ql + 1)),)))
    return Circuit(tuple(ops), spec)


def circuit_from_name(name_or_ops, spec: ResourceSpec) -> Circuit:
    """Resolve ``"ground"``, ``"bell"`` or an explicit JSON gate list."""
    if isinstance(name_or_ops, Circuit):
        return name_or_ops
    if name_or_ops in (None, "ground", "identity"):
        return identity_circuit(spec)
    if name_or_ops == "bell":
        return bell_circuit(spec)
    if isinstance(name_or_ops, str):
        try:
            return Circuit.from_json(name_or_ops, spec)
        except json.JSONDecodeError:
            raise ParameterError(f"unknown circuit {name_or_ops!r}") from None
    if isinstance(name_or_ops, Sequence):
        return Circuit.from_json(list(name_or_ops), spec)
    raise ParameterError(f"unknown circuit {name_or_ops!r}")
