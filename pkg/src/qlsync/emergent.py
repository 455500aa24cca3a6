"""Rank-one emergent-state approximation, the relative error Delta_t and sweeps over l and t."""
from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .dynamics import Generator, ModelParams, Trajectory, build_generator, sample_initial_state
from .errors import DegenerateProjectionWarning, ParameterError, QLError, UndefinedErrorSignal
from .netgraph import ResourceSpec, sample_factors
from .qlgates import circuit_from_name
from .spectra import Spectrum, full_eigh, product_spectrum

log = logging.getLogger(__name__)

ZERO_OVERLAP = 1e-14
FIG4_TIMES = tuple(float(t) for t in range(1, 21))


@dataclass(frozen=True)
class ErrorRecord:
    circuit: str
    l_value: int
    t_value: float
    mean_delta: float
    std_delta: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ParameterError("n_samples must be >= 1")
        if not self.mean_delta >= 0 or not self.std_delta >= 0:
            raise ParameterError("mean_delta and std_delta must be >= 0")


def _leading(gen: Generator, leading_vector, leading_value):
    v = gen.spectrum.top_vector if leading_vector is None else np.asarray(leading_vector, dtype=complex)
    lam = gen.spectrum.top_value if leading_value is None else float(leading_value)
    return v / np.linalg.norm(v), lam


def emergent_approx(gen: Generator, x0, times, leading_vector=None, leading_value=None) -> Trajectory:
    """``x~(t) = exp((i w + rate lambda_1) t) v <v, x0>`` on the scaling of ``gen``.

    ``v`` defaults to the top eigenvector carried by the generator's spectrum,
    which is ``U_g Phi_1`` when the spectrum was transformed by a circuit.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    v, lam = _leading(gen, leading_vector, leading_value)
    overlap = np.vdot(v, x0)
    if abs(overlap) <= ZERO_OVERLAP * np.linalg.norm(x0):
        warnings.warn("initial state has no overlap with the leading emergent state",
                      DegenerateProjectionWarning, stacklevel=2)
    scale = gen.log_scale(times)
    amp = np.exp((1j * gen.omega_bar + gen.rate * lam) * times - scale) * overlap
    return Trajectory(times, amp[:, None] * v[None, :], scale)


def relative_error(x, x_tilde) -> float:
    """``||x - x~|| / ||x||`` in the L2 norm."""
    x = np.asarray(x)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise UndefinedErrorSignal("relative error against a zero state")
    return float(np.linalg.norm(x - np.asarray(x_tilde)) / nrm)


def relative_error_series(full: Trajectory, approx: Trajectory) -> np.ndarray:
    """Delta_t per stored time, after bringing both trajectories to a common scale."""
    if not np.array_equal(full.times, approx.times):
        raise ParameterError("trajectories are on different time grids")
    y = approx.rescaled_to(full.log_scale)
    return np.array([relative_error(a, b) for a, b in zip(full.states, y)])


def delta_curve(gen: Generator, x0, times) -> np.ndarray:
    """Delta_t straight from the spectral coefficients of ``x0``.

    With ``c_l = <Phi_l, x0>`` and ``g = rate (lambda_l - lambda_1)``,
    ``Delta_t^2 = sum_{l>1} |c_l|^2 e^{2 g t} / sum_l |c_l|^2 e^{2 g t}``; no
    difference of nearly equal vectors is formed, so small errors keep full
    relative precision.
    """
    spec = gen.spectrum
    if not spec.complete:
        raise ParameterError("delta_curve needs a complete spectrum")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    c2 = np.abs(spec.eigenvectors.conj().T @ np.asarray(x0, dtype=complex)) ** 2
    if c2[0] <= (ZERO_OVERLAP**2) * c2.sum():
        warnings.warn("initial state has no overlap with the leading emergent state",
                      DegenerateProjectionWarning, stacklevel=2)
    decay = np.exp(2.0 * gen.rate * np.outer(times, spec.eigenvalues - spec.top_value))
    w = decay * c2[None, :]
    rest = w[:, 1:].sum(axis=1)
    total = w[:, 0] + rest
    if np.any(total == 0):
        raise UndefinedErrorSignal("zero state")
    return np.sqrt(rest / total)


def steady_state_alignment(x, target) -> float:
    """Phase- and scale-free cosine similarity ``|<t, x>| / (||t|| ||x||)``."""
    x, target = np.asarray(x), np.asarray(target)
    nx, nt = np.linalg.norm(x), np.linalg.norm(target)
    if nx == 0 or nt == 0:
        raise UndefinedErrorSignal("alignment with a zero vector")
    return float(min(1.0, abs(np.vdot(target, x)) / (nx * nt)))


def alignment_horizon(gen: Generator, x0, threshold=0.99, t_max=1e5) -> float:
    """Earliest ``t`` at which ``x(t)`` aligns with the leading eigenvector to ``threshold``.

    Alignment with the top eigenvector equals ``sqrt(1 - Delta_t^2)`` and is
    nondecreasing in ``t``; returns ``inf`` if ``t_max`` is not enough.
    """
    target = 1.0 - threshold**2

    def f(t):
        return delta_curve(gen, x0, [t])[0] ** 2 - target

    if f(0.0) <= 0:
        return 0.0
    if f(t_max) > 0:
        return float("inf")
    return float(brentq(f, 0.0, t_max, xtol=1e-6))


def fit_log_slope(times, deltas) -> float:
    """Least-squares slope of ``log Delta_t`` against ``t``."""
    times, deltas = np.asarray(times, dtype=float), np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0):
        raise ParameterError("log slope needs strictly positive errors")
    return float(np.polyfit(times, np.log(deltas), 1)[0])


def predicted_log_slope(gen: Generator) -> float:
    """Asymptotic slope ``-rate (lambda_1 - lambda_2)`` of ``log Delta_t``."""
    return -gen.rate * gen.spectrum.gap()


# ---------------------------------------------------------------------------
# sweeps


def sample_spectrum(spec: ResourceSpec, sample) -> Spectrum:
    """Complete spectrum of one sampled ground resource, assembled bit by bit."""
    return product_spectrum([full_eigh(f) for f in sample_factors(spec, sample)])


def _sweep_sample(spec: ResourceSpec, sample, graph_sample, t_values, params, circuit_names,
                  unitaries, bell_initial):
    """Delta_t rows ``{circuit: array over t}`` for one initial condition."""
    ground = sample_spectrum(spec, graph_sample)
    x0 = sample_initial_state(spec, spec.stream(sample, 1))
    out = {}
    for name in circuit_names:
        u = unitaries[name]
        spectrum = ground if u is None else ground.transformed(u)
        gen = build_generator(None, params, spectrum=spectrum)
        start = x0
        if u is not None and bell_initial == "related":
            start = u @ x0
        out[name] = delta_curve(gen, start, t_values)
    return out


def _sweep_task(args):
    return _sweep_sample(*args)


def error_sweep(template: ResourceSpec, l_values, t_values=FIG4_TIMES, n_samp=100, seed=None,
                params: ModelParams | None = None, circuits=("ground", "bell"),
                mode="resample", bell_initial="product", n_jobs=1):
    """Mean and std of Delta_t over ``n_samp`` initial conditions per ``(circuit, l, t)``.

    ``mode="resample"`` draws a fresh graph per initial condition,
    ``"fixed-graph"`` reuses sample 0.  ``bell_initial="product"`` feeds every
    circuit the same random product state, ``"related"`` feeds ``U_g x0`` to
    circuit ``g``.  Infeasible ``l`` values are skipped with a warning.
    """
    if mode not in ("resample", "fixed-graph"):
        raise ParameterError(f"unknown sweep mode {mode!r}")
    if bell_initial not in ("product", "related"):
        raise ParameterError(f"unknown bell_initial {bell_initial!r}")
    if n_samp < 1:
        raise ParameterError("n_samp must be >= 1")
    params = params or ModelParams()
    t_values = np.asarray(t_values, dtype=float)
    if seed is not None:
        template = template.with_(seed=seed)

    records = []
    for l in l_values:
        try:
            spec = template.with_(l=l)
            unitaries = {}
            for name in circuits:
                c = circuit_from_name(name, spec)
                unitaries[name] = None if not c.ops else c.unitary
        except QLError as exc:
            log.warning("skipping l=%s: %s", l, exc)
            warnings.warn(f"skipping l={l}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        tasks = [(spec, s, s if mode == "resample" else 0, t_values, params, tuple(circuits),
                  unitaries, bell_initial) for s in range(n_samp)]
        if n_jobs == 1:
            rows = [_sweep_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                rows = list(pool.map(_sweep_task, tasks))
        for name in circuits:
            d = np.array([r[name] for r in rows])
            mean, std = d.mean(axis=0), d.std(axis=0)
            for j, t in enumerate(t_values):
                records.append(ErrorRecord(str(name), int(l), float(t), float(mean[j]),
                                           float(std[j]), n_samp))
    return records


def records_table(records, circuit):
    """``{l: (t_values, mean_delta)}`` for one circuit."""
    out = {}
    for r in records:
        if r.circuit == circuit:
            out.setdefault(r.l_value, ([], []))
            out[r.l_value][0].append(r.t_value)
            out[r.l_value][1].append(r.mean_delta)
    return {l: (np.array(t), np.array(m)) for l, (t, m) in out.items()}


def write_sweep_csv(path, records, seed):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["circuit", "l", "t", "mean_delta", "std_delta", "n_samp", "seed"])
        for r in records:
            w.writerow([r.circuit, r.l_value, f"{r.t_value:.17g}", f"{r.mean_delta:.17g}",
                        f"{r.std_delta:.17g}", r.n_samples, seed])


def read_sweep_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [ErrorRecord(r["circuit"], int(r["l"]), float(r["t"]), float(r["mean_delta"]),
                        float(r["std_delta"]), int(r["n_samp"])) for r in rows]


def record_dicts(records):
    return [asdict(r) for r in records]
