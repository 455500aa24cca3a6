"""Hermitian eigendecompositions, spectral densities and emergent eigenvalues."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ParameterError, ValidationError

HERMITIAN_TOL = 1e-12
DEFAULT_BINS = 60


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs sorted by descending eigenvalue.

    ``eigenvectors[:, i]`` belongs to ``eigenvalues[i]``.  ``complete`` is
    False for a partial (top-k) decomposition.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    complete: bool
    source_dim: int

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def top_value(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def top_vector(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def gap(self) -> float:
        return float(self.eigenvalues[0] - self.eigenvalues[1])

    def transformed(self, unitary) -> "Spectrum":
        """Spectrum of ``U H U^dagger`` given the spectrum of ``H``."""
        vecs = np.asarray(unitary) @ self.eigenvectors
        return Spectrum(self.eigenvalues, vecs, self.complete, self.source_dim)


def check_hermitian(h, tol=HERMITIAN_TOL):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    dev = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if dev > tol * scale:
        raise ValidationError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return h


def fix_phases(vectors, rel_tol=1e-9):
    """Rotate each column so its largest-magnitude entry is real positive.

    Ties (within ``rel_tol``) go to the lowest index.
    """
    v = np.array(vectors, copy=True)
    if v.size == 0:
        return v
    mag = np.abs(v)
    thresh = mag.max(axis=0) * (1.0 - rel_tol)
    idx = np.argmax(mag >= thresh, axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    if np.iscomplexobj(v):
        v *= (np.abs(pivots) / pivots)[None, :]
    else:
        v *= np.sign(pivots)[None, :]
    return v


def full_eigh(h) -> Spectrum:
    h = check_hermitian(h)
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    w, v = w[::-1], v[:, ::-1]
    return Spectrum(w, fix_phases(v), True, h.shape[0])


def top_k_eigs(h, k, tol=0.0, maxiter=None, ncv=None, v0=None) -> Spectrum:
    """The ``k`` algebraically largest eigenpairs by implicitly restarted Lanczos.

    Falls back to a full decomposition when ``k`` is too close to the
    dimension for a Krylov method.
    """
    dim = np.shape(h)[0]
    if not 1 <= k <= dim:
        raise ParameterError(f"need 1 <= k <= dim={dim}, got {k}")
    if k >= dim - 1:
        full = full_eigh(h)
        return Spectrum(full.eigenvalues[:k], full.eigenvectors[:, :k], k == dim, dim)
    if not hasattr(h, "matvec"):
        check_hermitian(h)
    if v0 is None:
        v0 = np.random.default_rng(0).standard_normal(dim)
        if np.iscomplexobj(h):
            v0 = v0.astype(complex)
    if ncv is None:
        ncv = min(dim, max(2 * k + 1, 20))
    try:
        w, v = spla.eigsh(h, k=k, which="LA", tol=tol, maxiter=maxiter, ncv=ncv, v0=v0)
    except spla.ArpackNoConvergence as exc:
        residuals = [float(np.linalg.norm(h @ exc.eigenvectors[:, i] - exc.eigenvalues[i] * exc.eigenvectors[:, i]))
                     for i in range(len(exc.eigenvalues))]
        raise ConvergenceError(f"Lanczos did not converge for k={k}", residuals) from exc
    order = np.argsort(w)[::-1]
    return Spectrum(w[order], fix_phases(v[:, order]), False, dim)


def product_spectrum(factors: Sequence[Spectrum]) -> Spectrum:
    """Spectrum of a Kronecker sum from the spectra of its factors.

    Eigenvalues are all sums of one factor eigenvalue per factor, with
    eigenvectors the Kronecker products of the factor eigenvectors.  Ties keep
    the row-major order of the factor indices.
    """
    if not factors:
        raise ParameterError("need at least one factor spectrum")
    vals = factors[0].eigenvalues
    vecs = factors[0].eigenvectors
    for f in factors[1:]:
        vals = np.add.outer(vals, f.eigenvalues).ravel()
        vecs = np.kron(vecs, f.eigenvectors)
    order = np.argsort(-vals, kind="stable")
    dim = int(np.prod([f.source_dim for f in factors]))
    return Spectrum(vals[order], vecs[:, order], all(f.complete for f in factors), dim)


def flatten_index(multi_index, base):
    """Row-major flat index of a per-bit eigen-index tuple (first bit most significant)."""
    out = 0
    for i in multi_index:
        if not 0 <= i < base:
            raise ParameterError(f"index {i} out of range for base {base}")
        out = out * base + int(i)
    return out


def unflatten_index(flat, base, n):
    digits = []
    for _ in range(n):
        flat, r = divmod(int(flat), base)
        digits.append(r)
    return tuple(reversed(digits))


def emergent_eigenvalues(spec) -> np.ndarray:
    """All ``sum_q lambda_sigma_q`` with ``lambda_down = k + l`` and ``lambda_up = k - l``."""
    per_bit = [(kq + lq, kq - lq) for kq, lq in zip(spec.k, spec.l)]
    sums = [sum(choice) for choice in itertools.product(*per_bit)]
    return np.sort(np.array(sums, dtype=float))[::-1]


def contains_values(eigenvalues, targets, tol=1e-9):
    """True if every target (with multiplicity) matches a distinct eigenvalue within ``tol``."""
    pool = sorted(np.asarray(eigenvalues, dtype=float).tolist())
    for t in sorted(np.asarray(targets, dtype=float).tolist()):
        hit = next((i for i, v in enumerate(pool) if abs(v - t) <= tol), None)
        if hit is None:
            return False
        pool.pop(hit)
    return True


# ---------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class DensityHistogram:
    bin_edges: np.ndarray
    mass: np.ndarray
    n_samples: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        mass = np.asarray(self.mass, dtype=float)
        if edges.ndim != 1 or len(edges) != len(mass) + 1:
            raise ParameterError("need len(bin_edges) == len(mass) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        if np.any(mass < 0):
            raise ParameterError("negative mass")
        object.__setattr__(self, "bin_edges", _frozen(edges))
        object.__setattr__(self, "mass", _frozen(mass))

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self):
        return np.diff(self.bin_edges)

    def mean(self):
        return float(np.dot(self.centers, self.mass) / self.mass.sum())

    def bin_of(self, x):
        """Index of the bin containing ``x`` (right edge belongs to the last bin)."""
        e = self.bin_edges
        if x < e[0] or x > e[-1]:
            return None
        return int(min(np.searchsorted(e, x, side="right") - 1, len(self.mass) - 1))


def _as_samples(samples):
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        return [row for row in samples]
    items = list(samples)
    if items and np.ndim(items[0]) == 0:
        return [np.asarray(items, dtype=float)]
    return [np.ravel(np.asarray(s, dtype=float)) for s in items]


def density_histogram(samples, bins=DEFAULT_BINS) -> DensityHistogram:
    """Normalized histogram of eigenvalues pooled over sampled spectra.

    ``samples`` is a sequence of eigenvalue arrays (one per sampled graph) or a
    single flat array.  ``bins`` is a bin count over the sample range or an
    explicit array of edges.
    """
    parts = _as_samples(samples)
    if not parts or sum(p.size for p in parts) == 0:
        raise ParameterError("no eigenvalue samples")
    values = np.concatenate(parts)
    counts, edges = np.histogram(values, bins=bins)
    if counts.sum() != values.size:
        raise ParameterError("explicit bin edges do not cover all samples")
    return DensityHistogram(edges, counts / counts.sum(), len(parts))


def rebin(hist: DensityHistogram, edges) -> DensityHistogram:
    """Redistribute mass onto new edges assuming uniform density within each bin."""
    edges = np.asarray(edges, dtype=float)
    src = hist.bin_edges
    lo = np.maximum(src[:-1, None], edges[None, :-1])
    hi = np.minimum(src[1:, None], edges[None, 1:])
    overlap = np.clip(hi - lo, 0.0, None) / hist.widths[:, None]
    mass = hist.mass @ overlap
    total = mass.sum()
    if total <= 0:
        raise ParameterError("target grid does not overlap the histogram support")
    return DensityHistogram(edges, mass / total, hist.n_samples)


def convolve_densities(hists: Sequence[DensityHistogram], width=None) -> DensityHistogram:
    """Density of a sum of independent variables from their histograms.

    Every input is resampled onto a uniform grid of bin width ``width``
    (default: the finest input width) anchored at its own lower edge, and the
    gridded masses are convolved.  The support of the result is the Minkowski
    sum of the input supports.
    """
    hists = list(hists)
    if len(hists) < 2:
        raise ParameterError("need at least two histograms to convolve")
    if width is None:
        width = min(float(h.widths.min()) for h in hists)
    if not np.isfinite(width) or width <= 0:
        raise ParameterError("degenerate grid width")

    grids = []
    for h in hists:
        lo, hi = h.bin_edges[0], h.bin_edges[-1]
        n = max(1, int(np.ceil((hi - lo) / width - 1e-9)))
        edges = lo + width * np.arange(n + 1)
        grids.append((lo, rebin(h, edges).mass))

    lo, mass = grids[0]
    for lo2, m2 in grids[1:]:
        mass = np.convolve(mass, m2)
        lo = lo + lo2
    # the sum of values in bins [a, a+w) and [b, b+w) is centred on a+b+w
    edges = lo + 0.5 * width + width * np.arange(len(mass) + 1)
    return DensityHistogram(edges, mass / mass.sum(), min(h.n_samples for h in hists))


def l1_distance(a: DensityHistogram, b: DensityHistogram) -> float:
    if not np.allclose(a.bin_edges, b.bin_edges, rtol=0, atol=1e-12):
        raise ParameterError("histograms are on different grids")
    return float(np.abs(a.mass - b.mass).sum())


def write_histogram_csv(path, hist: DensityHistogram):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "mass"])
        for c, m in zip(hist.centers, hist.mass):
            w.writerow([f"{c:.17g}", f"{m:.17g}"])


def write_spectrum_csv(path, eigenvalues):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(np.asarray(eigenvalues, dtype=float)):
            w.writerow([i, f"{v:.17g}"])
