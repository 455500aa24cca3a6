"""Random regular graphs and quantum-like network resources.

A single QL bit is carried by a signed block adjacency matrix

    R = [[ A1, -C ],
         [-C.T, A2]]

with ``A1``, ``A2`` simple ``k``-regular graphs on ``n_g`` nodes and ``C`` an
``l``-biregular coupling between the two subgraphs.  Multi-bit resources are
the Kronecker sum (graph Cartesian product) of single-bit resources.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapacityError, ParameterError, SamplingError

DEFAULT_MAX_BYTES = 8 * 2**30
DEFAULT_MAX_RESTARTS = 10_000

# Below this estimated acceptance rate the plain pairing model is abandoned in
# favour of incremental pairing.  At 1e-2 the chance of exhausting the default
# restart budget is about exp(-100).
_PAIRING_MIN_ACCEPTANCE = 1e-2


@dataclass(frozen=True)
class ResourceSpec:
    """Dimensions, valencies and master seed of a QL network resource."""

    n_g: int
    n_ql: int
    k: tuple
    l: tuple
    seed: int = 0

    def __post_init__(self):
        if int(self.n_g) < 2:
            raise ParameterError(f"n_g must be >= 2, got {self.n_g}")
        if int(self.n_ql) < 1:
            raise ParameterError(f"n_ql must be >= 1, got {self.n_ql}")
        k = _broadcast(self.k, self.n_ql, "k")
        l = _broadcast(self.l, self.n_ql, "l")
        for q, (kq, lq) in enumerate(zip(k, l), start=1):
            if not 1 <= kq <= self.n_g - 1:
                raise ParameterError(f"bit {q}: need 1 <= k <= n_g - 1, got k={kq}")
            if (self.n_g * kq) % 2:
                raise ParameterError(f"bit {q}: n_g * k must be even, got {self.n_g}*{kq}")
            if not 0 <= lq <= self.n_g:
                raise ParameterError(f"bit {q}: need 0 <= l <= n_g, got l={lq}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "n_g", int(self.n_g))
        object.__setattr__(self, "n_ql", int(self.n_ql))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def bit_dim(self) -> int:
        return 2 * self.n_g

    @property
    def n_tot(self) -> int:
        return self.bit_dim**self.n_ql

    def with_(self, **changes) -> "ResourceSpec":
        d = self.to_dict()
        d.update(changes)
        return ResourceSpec(**d)

    def stream(self, *key: int) -> np.random.Generator:
        """Independent RNG stream for sample ``key`` derived from the master seed."""
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(x) for x in key))
        return np.random.default_rng(ss)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k"] = list(self.k)
        d["l"] = list(self.l)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceSpec":
        unknown = set(d) - {"n_g", "n_ql", "k", "l", "seed"}
        if unknown:
            raise ParameterError(f"unknown ResourceSpec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ResourceSpec":
        return cls.from_dict(json.loads(text))


def _broadcast(value, n, name):
    if np.isscalar(value):
        return (int(value),) * int(n)
    out = tuple(int(v) for v in value)
    if len(out) != int(n):
        raise ParameterError(f"{name} must have n_ql={n} entries, got {len(out)}")
    return out


# ---------------------------------------------------------------------------
# samplers


def sample_regular_graph(n, k, rng, max_restarts=DEFAULT_MAX_RESTARTS):
    """Adjacency matrix of a random simple ``k``-regular graph on ``n`` nodes.

    Uses the pairing (configuration) model, rejecting loops and multi-edges
    with a full restart.  When the plain pairing model would almost never
    succeed (large ``k``), unmatched stubs are re-paired incrementally
    instead, restarting only when no valid pair remains.  Dense valencies are
    handled through the complement graph.
    """
    n, k = int(n), int(k)
    if (n * k) % 2:
        raise ParameterError(f"n * k must be even, got n={n}, k={k}")
    if not 1 <= k <= n - 1:
        raise ParameterError(f"need 1 <= k <= n - 1, got n={n}, k={k}")

    if 2 * k > n - 1:
        if k == n - 1:
            return np.ones((n, n)) - np.eye(n)
        comp = sample_regular_graph(n, n - 1 - k, rng, max_restarts)
        return np.ones((n, n)) - np.eye(n) - comp

    # probability that one pairing is simple, with the leading finite-n correction
    acceptance = np.exp(-(k * k - 1) / 4.0 - k**3 / (12.0 * n))
    incremental = acceptance < _PAIRING_MIN_ACCEPTANCE
    attempt = _pair_incremental if incremental else _pair_once
    for _ in range(max_restarts):
        edges = attempt(n, k, rng)
        if edges is not None:
            a = np.zeros((n, n))
            i, j = np.array(edges).T
            a[i, j] = 1.0
            a[j, i] = 1.0
            return a
    raise SamplingError(f"no simple {k}-regular graph on {n} nodes after {max_restarts} restarts")


def _pair_once(n, k, rng):
    stubs = rng.permutation(np.repeat(np.arange(n), k)).reshape(-1, 2)
    stubs.sort(axis=1)
    if np.any(stubs[:, 0] == stubs[:, 1]):
        return None
    edges = set(map(tuple, stubs.tolist()))
    if len(edges) != len(stubs):
        return None
    return sorted(edges)


def _pair_incremental(n, k, rng):
    edges = set()
    stubs = np.repeat(np.arange(n), k)
    while stubs.size:
        stubs = rng.permutation(stubs)
        leftover = []
        for s1, s2 in stubs.reshape(-1, 2).tolist():
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                leftover += [s1, s2]
        if leftover and not _can_pair(edges, set(leftover)):
            return None
        stubs = np.array(sorted(leftover), dtype=int)
    return sorted(edges)


def _can_pair(edges, nodes):
    nodes = sorted(nodes)
    for i, s1 in enumerate(nodes):
        for s2 in nodes[i + 1:]:
            if (s1, s2) not in edges:
                return True
    return False


def sample_biregular_coupling(n, l, rng, symmetric=False, layer_tries=64,
                              max_restarts=DEFAULT_MAX_RESTARTS):
    """``n x n`` 0/1 matrix with every row and column summing to ``l``.

    Built as a superposition of ``l`` non-overlapping permutation matrices.
    Each layer is first drawn as a uniform random permutation and rejected on
    overlap; after ``layer_tries`` rejections a random-weight assignment over
    the still-free cells is used, which always exists because the free cells
    form a regular bipartite graph.  With ``symmetric=True`` the coupling is
    itself an ``l``-regular simple graph.
    """
    n, l = int(n), int(l)
    if not 0 <= l <= n:
        raise ParameterError(f"need 0 <= l <= n, got n={n}, l={l}")
    if symmetric:
        if l == 0:
            return np.zeros((n, n))
        return sample_regular_graph(n, l, rng, max_restarts)
    if l == n:
        return np.ones((n, n))
    if l > n // 2:
        return 1.0 - sample_biregular_coupling(n, n - l, rng, layer_tries=layer_tries)

    c = np.zeros((n, n))
    rows = np.arange(n)
    for _ in range(l):
        for _ in range(layer_tries):
            perm = rng.permutation(n)
            if not c[rows, perm].any():
                break
        else:
            weights = rng.random((n, n))
            weights[c > 0] = -1.0 - n  # any free perfect matching beats one forbidden cell
            _, perm = linear_sum_assignment(weights, maximize=True)
            if c[rows, perm].any():
                raise SamplingError("free cells admit no perfect matching")
        c[rows, perm] = 1.0
    return c


# ---------------------------------------------------------------------------
# assembly


def build_single_resource(a1, a2, c):
    """Signed block resource ``[[A1, -C], [-C.T, A2]]``."""
    a1, a2, c = (np.asarray(m, dtype=float) for m in (a1, a2, c))
    n = a1.shape[0]
    for name, m in (("A1", a1), ("A2", a2), ("C", c)):
        if m.shape != (n, n):
            raise ParameterError(f"{name} has shape {m.shape}, expected {(n, n)}")
    for name, m in (("A1", a1), ("A2", a2)):
        if not np.array_equal(m, m.T):
            raise ParameterError(f"{name} is not symmetric")
    return np.block([[a1, -c], [-c.T, a2]])


def dense_bytes(dim, itemsize=8):
    return int(dim) * int(dim) * int(itemsize)


def check_capacity(dim, itemsize=8, max_bytes=DEFAULT_MAX_BYTES, what="matrix"):
    need = dense_bytes(dim, itemsize)
    if need > max_bytes:
        raise CapacityError(
            f"dense {dim}x{dim} {what} needs {need} bytes, cap is {int(max_bytes)} bytes; "
            "reduce n_g or n_ql, or raise the memory cap",
            need, max_bytes)
    return need


def cartesian_product(resources: Sequence[np.ndarray], max_bytes=DEFAULT_MAX_BYTES):
    """Kronecker sum ``sum_q 1 x ... x R_q x ... x 1`` of the factor resources."""
    factors = [np.asarray(r) for r in resources]
    if not factors:
        raise ParameterError("need at least one factor")
    for r in factors:
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ParameterError(f"factor with shape {r.shape} is not square")
        if not np.allclose(r, r.conj().T, atol=1e-12, rtol=0):
            raise ParameterError("factor is not symmetric/Hermitian")
    dims = [r.shape[0] for r in factors]
    total = int(np.prod(dims))
    dtype = np.result_type(*factors, float)
    check_capacity(total, np.dtype(dtype).itemsize, max_bytes, "Cartesian product")
    if len(factors) == 1:
        return factors[0].astype(dtype, copy=True)

    out = np.zeros((total, total), dtype=dtype)
    for q, r in enumerate(factors):
        left = int(np.prod(dims[:q]))
        right = int(np.prod(dims[q + 1:]))
        out += np.kron(np.kron(np.eye(left), r), np.eye(right))
    return out


def sample_factors(spec: ResourceSpec, sample=0, symmetric_coupling=False):
    """Per-bit single resources for sample ``sample`` of ``spec``.

    All randomness comes from ``spec.stream(sample)``; bits draw, in order,
    ``A1``, ``A2`` and ``C``.
    """
    rng = spec.stream(sample)
    factors = []
    for kq, lq in zip(spec.k, spec.l):
        a1 = sample_regular_graph(spec.n_g, kq, rng)
        a2 = sample_regular_graph(spec.n_g, kq, rng)
        c = sample_biregular_coupling(spec.n_g, lq, rng, symmetric=symmetric_coupling)
        factors.append(build_single_resource(a1, a2, c))
    return factors


def ground_resource(spec: ResourceSpec, sample=0, max_bytes=DEFAULT_MAX_BYTES,
                    symmetric_coupling=False):
    check_capacity(spec.n_tot, 8, max_bytes, "ground resource")
    return cartesian_product(sample_factors(spec, sample, symmetric_coupling), max_bytes)


# ---------------------------------------------------------------------------
# export


def write_matrix_csv(path, matrix, tol=0.0):
    """Coordinate-triplet CSV of the nonzero entries of ``matrix``."""
    m = np.asarray(matrix)
    rows, cols = np.nonzero(np.abs(m) > tol)
    is_complex = np.iscomplexobj(m) and np.any(m.imag)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value", "value_imag"] if is_complex else ["row", "col", "value"])
        for i, j in zip(rows.tolist(), cols.tolist()):
            v = m[i, j]
            if is_complex:
                w.writerow([i, j, f"{v.real:.17g}", f"{v.imag:.17g}"])
            else:
                w.writerow([i, j, f"{float(np.real(v)):.17g}"])


def read_matrix_csv(path, dim):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        is_complex = "value_imag" in header
        m = np.zeros((dim, dim), dtype=complex if is_complex else float)
        for row in r:
            i, j = int(row[0]), int(row[1])
            m[i, j] = float(row[2]) + (1j * float(row[3]) if is_complex else 0.0)
    return m
