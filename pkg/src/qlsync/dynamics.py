"""Complex-embedded Kuramoto dynamics ``dx/dt = D x`` with ``D = i w 1 + (K / N) R``.

With ``x = exp(i theta)`` the real part of the phase equation is the usual
Kuramoto model; the embedding is linear, so it is solved exactly from the
spectrum of ``R``.  Mode growth ``exp(K lambda t / N)`` overflows double
precision at long times, so trajectories store states divided by a common
positive factor ``exp(log_scale)``; angles and all normalized quantities are
unaffected by that factor.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, ParameterError, TruncationError, UndefinedAngleError
from .spectra import Spectrum, check_hermitian, full_eigh


@dataclass(frozen=True)
class ModelParams:
    omega_bar: float = 0.5
    coupling: float = 10.0

    def __post_init__(self):
        if not np.isfinite(self.omega_bar) or self.omega_bar <= 0:
            raise ParameterError(f"omega_bar must be > 0, got {self.omega_bar}")
        if not np.isfinite(self.coupling) or self.coupling == 0:
            raise ParameterError(f"coupling must be finite and nonzero, got {self.coupling}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        omega = d.pop("omega", None)
        if omega is not None:
            omega = np.atleast_1d(np.asarray(omega, dtype=float))
            if np.ptp(omega) != 0:
                raise ParameterError("heterogeneous oscillator frequencies are not supported")
            d.setdefault("omega_bar", float(omega[0]))
        unknown = set(d) - {"omega_bar", "coupling"}
        if unknown:
            raise ParameterError(f"unknown ModelParams fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {"omega_bar": self.omega_bar, "coupling": self.coupling}


@dataclass(frozen=True)
class Generator:
    """``D = i omega_bar 1 + rate R`` stored through the spectrum of ``R``."""

    omega_bar: float
    rate: float
    spectrum: Spectrum
    matrix: np.ndarray | None = None

    @property
    def n_tot(self):
        return self.spectrum.source_dim

    def eigenvalues(self):
        return 1j * self.omega_bar + self.rate * self.spectrum.eigenvalues

    def apply(self, x):
        if self.matrix is None:
            raise ParameterError("generator has no explicit matrix")
        return 1j * self.omega_bar * x + self.rate * (self.matrix @ x)

    def log_scale(self, times):
        """Largest mode log-growth ``max_l rate * lambda_l * t`` per time."""
        t = np.asarray(times, dtype=float)
        lam = self.spectrum.eigenvalues
        return np.maximum(self.rate * lam.max() * t, self.rate * lam.min() * t)


def build_generator(r, params: ModelParams, spectrum: Spectrum | None = None,
                    keep_matrix=True) -> Generator:
    """Generator for resource ``r``; ``spectrum`` may be supplied to skip diagonalization."""
    r = None if r is None else check_hermitian(r)
    if spectrum is None:
        if r is None:
            raise ParameterError("need a resource matrix or its spectrum")
        spectrum = full_eigh(r)
    n_tot = spectrum.source_dim
    if r is not None and r.shape[0] != n_tot:
        raise ParameterError("spectrum does not match the resource dimension")
    return Generator(params.omega_bar, params.coupling / n_tot, spectrum,
                     r if keep_matrix else None)


@dataclass
class Trajectory:
    """States ``x(t) = states * exp(log_scale)`` on a time grid."""

    times: np.ndarray
    states: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex)
        self.log_scale = np.asarray(self.log_scale, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ParameterError("states and times disagree in length")
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("times must be strictly increasing")

    @property
    def log_norms(self):
        return np.log(np.linalg.norm(self.states, axis=1)) + self.log_scale

    @property
    def norms(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_norms)

    def normalized(self):
        return self.states / np.linalg.norm(self.states, axis=1)[:, None]

    def rescaled_to(self, log_scale):
        """States expressed relative to another scale offset."""
        return self.states * np.exp(self.log_scale - np.asarray(log_scale))[:, None]

    def angles(self, **kw):
        return angles_and_phases(self, None, **kw)[0]


def sample_initial_state(spec, rng, angles=None) -> np.ndarray:
    """Product state ``(x) exp(i theta_q)`` with i.i.d. uniform angles.

    ``angles`` (shape ``(n_ql, 2 n_g)``) overrides the random draw.
    """
    if angles is None:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=(spec.n_ql, spec.bit_dim))
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (spec.n_ql, spec.bit_dim):
        raise ParameterError(f"angles must have shape {(spec.n_ql, spec.bit_dim)}")
    x = np.ones(1, dtype=complex)
    for theta in angles:
        x = np.kron(x, np.exp(1j * theta))
    return x


def spectral_coefficients(gen: Generator, x0, truncation_tol=1e-8):
    """``<Phi_l, x0>`` with a check that a partial spectrum captures ``x0``."""
    vecs = gen.spectrum.eigenvectors
    x0 = np.asarray(x0, dtype=complex)
    if x0.shape != (vecs.shape[0],):
        raise ParameterError(f"x0 has shape {x0.shape}, expected {(vecs.shape[0],)}")
    c = vecs.conj().T @ x0
    if not gen.spectrum.complete:
        weight = np.linalg.norm(x0 - vecs @ c) / np.linalg.norm(x0)
        if weight > truncation_tol:
            raise TruncationError(f"partial spectrum misses {weight:.3e} of the initial state", weight)
    return c


def propagate_spectral(gen: Generator, x0, times, truncation_tol=1e-8) -> Trajectory:
    """Exact solution ``exp(i w t) sum_l exp(rate lambda_l t) Phi_l <Phi_l, x0>``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    c = spectral_coefficients(gen, x0, truncation_tol)
    scale = gen.log_scale(times)
    growth = np.exp(gen.rate * np.outer(times, gen.spectrum.eigenvalues) - scale[:, None])
    states = (growth * c[None, :]) @ gen.spectrum.eigenvectors.T
    states *= np.exp(1j * gen.omega_bar * times)[:, None]
    return Trajectory(times, states, scale)


def integrate_direct(gen: Generator, x0, t_end, dt=1e-3, times=None) -> Trajectory:
    """Fixed-step classical RK4 integration of ``dx/dt = D x``.

    The state is renormalized after every step and the log of the removed
    norm accumulated, so the result is stored like a spectral trajectory.
    ``times`` (default: every step) must lie on the step grid.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if t_end < 0:
        raise ParameterError("t_end must be >= 0")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ParameterError(f"t_end={t_end} is not a multiple of dt={dt}")
    if times is None:
        record = np.arange(n_steps + 1)
    else:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        record = np.rint(times / dt).astype(int)
        if np.any(np.abs(record * dt - times) > 1e-9 * np.maximum(1.0, times)) or record.max() > n_steps:
            raise ParameterError("recording times must lie on the step grid within [0, t_end]")
    wanted = {int(s): i for i, s in enumerate(record)}

    x = np.array(x0, dtype=complex)
    log_norm = 0.0
    out = np.empty((len(record), x.size), dtype=complex)
    logs = np.empty(len(record))
    h = dt
    for step in range(n_steps + 1):
        if step in wanted:
            out[wanted[step]] = x
            logs[wanted[step]] = log_norm
        if step == n_steps:
            break
        k1 = gen.apply(x)
        k2 = gen.apply(x + 0.5 * h * k1)
        k3 = gen.apply(x + 0.5 * h * k2)
        k4 = gen.apply(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise IntegrationError(f"non-finite state at t={(step + 1) * h:g}", (step + 1) * h)
        x /= nrm
        log_norm += np.log(nrm)
    return Trajectory(record * dt, out, logs)


def wrap_angle(a):
    """Map angles onto ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def angles_and_phases(traj: Trajectory, omega_bar, strict=True, zero_tol=1e-12):
    """Oscillator angles ``arg x`` and phases ``theta - omega_bar t``, both in ``[-pi, pi)``.

    Entries with modulus below ``zero_tol`` times the largest modulus at that
    time have no angle: raise when ``strict``, else report NaN.
    ``omega_bar=None`` skips the phases.
    """
    states = traj.states
    if states.size == 0:
        raise ParameterError("empty trajectory")
    mag = np.abs(states)
    undefined = mag <= zero_tol * mag.max(axis=1, keepdims=True)
    if strict and undefined.any():
        ti, j = np.argwhere(undefined)[0]
        raise UndefinedAngleError(f"oscillator {j} has zero amplitude at t={traj.times[ti]:g}",
                                  j, traj.times[ti])
    theta = wrap_angle(np.angle(states))
    theta[undefined] = np.nan
    if omega_bar is None:
        return theta, None
    phi = wrap_angle(theta - omega_bar * traj.times[:, None])
    return theta, phi


def write_trajectory_csv(path, traj: Trajectory, omega_bar, strict=False):
    theta, phi = angles_and_phases(traj, omega_bar, strict=strict)
    log_norms = traj.log_norms
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "oscillator_index", "angle", "phase", "log_norm"])
        for i, t in enumerate(traj.times):
            tt, ln = f"{t:.17g}", f"{log_norms[i]:.17g}"
            for j in range(theta.shape[1]):
                w.writerow([tt, j, f"{theta[i, j]:.17g}", f"{phi[i, j]:.17g}", ln])


def write_trajectory_binary(path, traj: Trajectory):
    """Little-endian float64 records ``(time, log_scale, re x_1, im x_1, ...)`` plus a JSON sidecar."""
    n = traj.states.shape[1]
    rec = np.empty((len(traj.times), 2 + 2 * n), dtype="<f8")
    rec[:, 0] = traj.times
    rec[:, 1] = traj.log_scale
    rec[:, 2::2] = traj.states.real
    rec[:, 3::2] = traj.states.imag
    rec.tofile(path)
    sidecar = {"format": "float64-le", "record_length": int(rec.shape[1]),
               "n_records": int(rec.shape[0]), "n_oscillators": int(n),
               "fields": ["time", "log_scale", "re/im interleaved states"]}
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)


def read_trajectory_binary(path) -> Trajectory:
    with open(str(path) + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    rec = np.fromfile(path, dtype="<f8").reshape(meta["n_records"], meta["record_length"])
    return Trajectory(rec[:, 0], rec[:, 2::2] + 1j * rec[:, 3::2], rec[:, 1])
