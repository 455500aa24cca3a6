"""Experiment configuration, the seeded runners and their CSV/JSON outputs.

Every runner returns a summary dict; :func:`run_experiment` wraps it in a
manifest (config echo, content hash, output list, wall-clock time) written to
``<output_dir>/manifest.json``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import subspace_angles

from . import __version__
from .dynamics import (ModelParams, build_generator, integrate_direct, propagate_spectral,
                       sample_initial_state, write_trajectory_csv)
from .emergent import (FIG4_TIMES, alignment_horizon, delta_curve, emergent_approx, error_sweep,
                       record_dicts, sample_spectrum, steady_state_alignment, write_sweep_csv)
from .errors import CapacityError, ParameterError
from .netgraph import (DEFAULT_MAX_BYTES, ResourceSpec, cartesian_product, check_capacity,
                       dense_bytes, ground_resource, sample_factors)
from .qlgates import basis_state, circuit_from_name, ground_state
from .spectra import (DEFAULT_BINS, convolve_densities, density_histogram, emergent_eigenvalues,
                      full_eigh, l1_distance, rebin, top_k_eigs, write_histogram_csv,
                      write_spectrum_csv)

EXPERIMENTS = ("spectra_fig2", "ground_fig3", "bell_fig3", "error_fig4", "protocol_run",
               "oracle_check", "partial_eigs_check")
MAX_DESK_QL = 3
ORACLE_MAX_NG = 8
ORACLE_TOL = 1e-6


@dataclass(frozen=True)
class SweepConfig:
    l_values: tuple = (2, 4, 8, 12)
    t_values: tuple = FIG4_TIMES
    n_samp: int = 100
    mode: str = "resample"
    bell_initial: str = "product"

    def __post_init__(self):
        object.__setattr__(self, "l_values", tuple(int(v) for v in self.l_values))
        object.__setattr__(self, "t_values", tuple(float(v) for v in self.t_values))
        if self.n_samp < 1:
            raise ParameterError("sweep.n_samp must be >= 1")


@dataclass(frozen=True)
class RunOptions:
    """Knobs shared by several experiments."""

    n_samp: int = 20            # graphs (fig2) or initial conditions (fig3)
    t_end: float = 20.0
    n_times: int = 400
    dt: float = 1e-3
    record_every: float = 0.05  # oracle comparison grid spacing
    tolerance: float = ORACLE_TOL
    top_k: int = 4
    bins: int = DEFAULT_BINS
    gap_threshold: float = 1.0
    alignment_threshold: float = 0.99
    zero_resource: bool = False
    write_trajectories: bool = True
    max_bytes: int = DEFAULT_MAX_BYTES
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_samp < 1 or self.n_times < 2 or self.top_k < 1 or self.bins < 1:
            raise ParameterError("n_samp, top_k, bins must be >= 1 and n_times >= 2")
        if self.t_end < 0 or self.dt <= 0 or self.record_every <= 0:
            raise ParameterError("need t_end >= 0, dt > 0 and record_every > 0")


def _sub_from_dict(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ParameterError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ParameterError(f"unknown {where} fields: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    resource: ResourceSpec
    params: ModelParams = field(default_factory=ModelParams)
    circuit: object = "ground"
    sweep: SweepConfig | None = None
    run: RunOptions = field(default_factory=RunOptions)
    output_dir: str = "out"
    seed: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.experiment == "error_fig4" and self.sweep is None:
            object.__setattr__(self, "sweep", SweepConfig())
        if self.seed is not None:
            object.__setattr__(self, "resource", self.resource.with_(seed=int(self.seed)))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - allowed
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        if "experiment" not in d or "resource" not in d:
            raise ParameterError("config needs 'experiment' and 'resource'")
        return cls(
            experiment=d["experiment"],
            resource=ResourceSpec.from_dict(d["resource"]),
            params=ModelParams.from_dict(d.get("params", {})),
            circuit=d.get("circuit", "ground"),
            sweep=None if d.get("sweep") is None else _sub_from_dict(SweepConfig, d["sweep"], "sweep"),
            run=_sub_from_dict(RunOptions, d.get("run"), "run"),
            output_dir=str(d.get("output_dir", "out")),
            seed=d.get("seed"),
        )

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None

    @classmethod
    def load(cls, path, overrides=None):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        for key, value in (overrides or {}).items():
            set_path(d, key, value)
        return cls.from_dict(d)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "resource": self.resource.to_dict(),
            "params": self.params.to_dict(),
            "circuit": self.circuit,
            "sweep": None if self.sweep is None else dataclasses.asdict(self.sweep),
            "run": dataclasses.asdict(self.run),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def canonical_json(self):
        d = self.to_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def set_path(d, dotted, value):
    """Set ``d[a][b_c] = value`` for ``dotted="a.b-c"``; dashes map to underscores."""
    keys = [k.replace("-", "_") for k in dotted.split(".")]
    node = d
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ParameterError(f"cannot override {dotted}: {k} is not an object")
    node[keys[-1]] = value


def blob_sha1(text: str) -> str:
    """Git-style blob hash of a UTF-8 string."""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _guard(cfg: ExperimentConfig):
    spec = cfg.resource
    if spec.n_ql > MAX_DESK_QL and cfg.run.max_bytes <= DEFAULT_MAX_BYTES:
        need = dense_bytes(spec.n_tot, 16)
        raise CapacityError(
            f"n_ql={spec.n_ql} gives dimension {spec.n_tot}; dense work needs ~{need / 2**30:.1f} GiB "
            f"per matrix and grows as (2 n_g)^(3 n_ql) in time.  Use n_ql <= {MAX_DESK_QL} or raise "
            f"run.max_bytes explicitly", need, cfg.run.max_bytes)


# ---------------------------------------------------------------------------
# runners


def _fig2(cfg, out):
    spec, opts = cfg.resource, cfg.run
    check_capacity(spec.n_tot, 8, opts.max_bytes, "product resource")
    direct, per_bit = [], [[] for _ in range(spec.n_ql)]
    for s in range(opts.n_samp):
        factors = sample_factors(spec, s)
        for q, f in enumerate(factors):
            per_bit[q].append(np.linalg.eigvalsh(f))
        direct.append(np.linalg.eigvalsh(cartesian_product(factors, opts.max_bytes)))
    h_direct = density_histogram(direct, opts.bins)
    bit_hists = [density_histogram(v, opts.bins) for v in per_bit]
    h_conv = rebin(convolve_densities(bit_hists), h_direct.bin_edges)
    write_histogram_csv(out / "density_direct.csv", h_direct)
    write_histogram_csv(out / "density_convolved.csv", h_conv)
    for q, h in enumerate(bit_hists, 1):
        write_histogram_csv(out / f"density_bit{q}.csv", h)
    write_spectrum_csv(out / "spectrum_sample0.csv", direct[0])

    markers = []
    values, counts = np.unique(np.round(emergent_eigenvalues(spec), 9), return_counts=True)
    for v, mult in zip(values[::-1], counts[::-1]):
        b = h_direct.bin_of(v)
        mass = float(h_direct.mass[b])
        nb = [h_direct.mass[j] for j in (b - 1, b + 1) if 0 <= j < len(h_direct.mass)]
        markers.append({"value": float(v), "multiplicity": int(mult), "bin": b, "bin_mass": mass,
                        "neighbour_mass": float(np.mean(nb)), "peak": bool(mass > np.mean(nb))})
    return {"l1_distance": l1_distance(h_direct, h_conv), "markers": markers,
            "peak_eigenvalue": float(np.max(direct[0])), "n_samp": opts.n_samp}


def _fig3(cfg, out, circuit_name):
    spec, opts, params = cfg.resource, cfg.run, cfg.params
    circuit = circuit_from_name(circuit_name, spec)
    u = circuit.unitary if circuit.ops else None
    target = ground_state(spec) if u is None else u @ ground_state(spec)
    times = np.linspace(0.0, opts.t_end, opts.n_times)
    spectrum = sample_spectrum(spec, 0)
    if u is not None:
        spectrum = spectrum.transformed(u)
    gen = build_generator(None, params, spectrum=spectrum)
    aligns, horizons, deltas = [], [], []
    for s in range(opts.n_samp):
        x0 = sample_initial_state(spec, spec.stream(s, 1))
        final = propagate_spectral(gen, x0, [opts.t_end])
        aligns.append(steady_state_alignment(final.states[0], target))
        deltas.append(float(delta_curve(gen, x0, [opts.t_end])[0]))
        horizons.append(alignment_horizon(gen, x0, opts.alignment_threshold))
        if s == 0 and opts.write_trajectories:
            full = propagate_spectral(gen, x0, times)
            write_trajectory_csv(out / "trajectory_full.csv", full, params.omega_bar)
            write_trajectory_csv(out / "trajectory_emergent.csv", emergent_approx(gen, x0, times),
                                 params.omega_bar)
    aligns = np.array(aligns)
    return {"circuit": circuit.to_json(), "t_end": opts.t_end, "n_samp": opts.n_samp,
            "alignment": aligns.tolist(), "min_alignment": float(aligns.min()),
            "final_delta": deltas,
            "alignment_threshold": opts.alignment_threshold,
            "all_aligned": bool(np.all(aligns >= opts.alignment_threshold)),
            "horizon_to_threshold": horizons, "max_horizon": float(np.max(horizons)),
            "peak_eigenvalue": float(sum(k + l for k, l in zip(spec.k, spec.l)))}


def _fig4(cfg, out):
    sw = cfg.sweep
    records = error_sweep(cfg.resource, sw.l_values, sw.t_values, sw.n_samp, params=cfg.params,
                          mode=sw.mode, bell_initial=sw.bell_initial, n_jobs=cfg.run.n_jobs)
    write_sweep_csv(out / "error_sweep.csv", records, cfg.resource.seed)
    return {"records": record_dicts(records)}


def _protocol(cfg, out):
    """Sample, build, validate, transform, propagate and read out."""
    spec, opts, params = cfg.resource, cfg.run, cfg.params
    report = validate_spec(cfg)
    circuit = circuit_from_name(cfg.circuit, spec)
    spectrum = sample_spectrum(spec, 0)
    if circuit.ops:
        spectrum = spectrum.transformed(circuit.unitary)
    gen = build_generator(None, params, spectrum=spectrum)
    x0 = sample_initial_state(spec, spec.stream(0, 1))
    times = np.linspace(0.0, opts.t_end, opts.n_times)
    traj = propagate_spectral(gen, x0, times)
    if opts.write_trajectories:
        write_trajectory_csv(out / "trajectory.csv", traj, params.omega_bar)
    target = circuit.apply(ground_state(spec))
    final = traj.states[-1]
    # readout in the emergent basis: amplitudes on every basis pattern
    rows = []
    for idx in np.ndindex(*(2,) * spec.n_ql):
        sig = tuple("down" if i == 0 else "up" for i in idx)
        amp = np.vdot(basis_state(spec, sig), final) / np.linalg.norm(final)
        rows.append((",".join(sig), amp))
    with open(out / "readout.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("basis,amplitude_re,amplitude_im,weight\n")
        for label, a in rows:
            fh.write(f'"{label}",{a.real:.17g},{a.imag:.17g},{abs(a) ** 2:.17g}\n')
    return {"validation": report, "circuit": circuit.to_json(),
            "final_alignment": steady_state_alignment(final, target),
            "final_delta": float(delta_curve(gen, x0, [opts.t_end])[0]),
            "readout": {label: abs(a) ** 2 for label, a in rows}}


def oracle_check(cfg: ExperimentConfig):
    """Spectral propagation against RK4 integration on a seeded desk system."""
    spec, opts = cfg.resource, cfg.run
    if spec.n_g > ORACLE_MAX_NG:
        raise ParameterError(f"oracle_check is limited to n_g <= {ORACLE_MAX_NG}, got {spec.n_g}")
    r = np.zeros((spec.n_tot, spec.n_tot)) if opts.zero_resource else ground_resource(spec, 0, opts.max_bytes)
    gen = build_generator(r, cfg.params)
    x0 = sample_initial_state(spec, spec.stream(0, 1))
    n_steps = int(round(opts.t_end / opts.dt))
    stride = max(1, int(round(opts.record_every / opts.dt)))
    steps = np.union1d(np.arange(0, n_steps + 1, stride), [n_steps])
    times = steps * opts.dt
    direct = integrate_direct(gen, x0, opts.t_end, opts.dt, times=times)
    exact = propagate_spectral(gen, x0, direct.times)
    dev = np.linalg.norm(direct.normalized() - exact.normalized(), axis=1)
    worst = int(np.argmax(dev))
    return {"max_deviation": float(dev[worst]), "worst_time": float(direct.times[worst]),
            "log_norm_deviation": float(np.max(np.abs(direct.log_norms - exact.log_norms))),
            "dt": opts.dt, "t_end": opts.t_end, "tolerance": opts.tolerance,
            "zero_resource": opts.zero_resource, "passed": bool(dev[worst] <= opts.tolerance)}


def partial_eigs_check(cfg: ExperimentConfig, eig_tol=1e-8, angle_tol=1e-6):
    """Top-k Lanczos eigenpairs against a full dense decomposition."""
    spec = cfg.resource
    k = cfg.run.top_k
    r = ground_resource(spec, 0, cfg.run.max_bytes)
    t0 = time.perf_counter()
    part = top_k_eigs(r, k)
    t_part = time.perf_counter() - t0
    full = full_eigh(r)
    eig_err = float(np.max(np.abs(part.eigenvalues - full.eigenvalues[:k])))
    angle = float(np.max(subspace_angles(part.eigenvectors, full.eigenvectors[:, :k])))
    gap = float(full.eigenvalues[k - 1] - full.eigenvalues[k]) if k < len(full) else float("inf")
    return {"dim": spec.n_tot, "k": k, "eigenvalues": part.eigenvalues.tolist(),
            "max_eigenvalue_error": eig_err, "max_subspace_angle": angle, "gap_below_k": gap,
            "lanczos_seconds": t_part,
            "passed": bool(eig_err <= eig_tol and angle <= angle_tol)}


def validate_spec(cfg: ExperimentConfig, threshold=None):
    """Gap report for one sampled resource."""
    spec = cfg.resource
    threshold = cfg.run.gap_threshold if threshold is None else threshold
    spectrum = sample_spectrum(spec, 0)
    lam1, lam2 = spectrum.eigenvalues[:2]
    gap = float(lam1 - lam2)
    degenerate = [q + 1 for q, l in enumerate(spec.l) if l == 0]
    expected = float(sum(k + l for k, l in zip(spec.k, spec.l)))
    return {"lambda_1": float(lam1), "lambda_2": float(lam2), "gap": gap,
            "relative_gap": gap / float(lam1) if lam1 else float("nan"),
            "expected_top": expected, "top_is_emergent": bool(abs(lam1 - expected) <= 1e-9),
            "threshold": threshold, "isolated": bool(gap >= threshold),
            "degenerate_emergent_bits": degenerate,
            "passed": bool(gap >= threshold and not degenerate)}


def run_experiment(cfg: ExperimentConfig):
    """Run ``cfg`` and write outputs plus ``manifest.json``; returns the manifest."""
    _guard(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    t0 = time.perf_counter()
    name = cfg.experiment
    if name == "spectra_fig2":
        summary = _fig2(cfg, out)
    elif name == "ground_fig3":
        summary = _fig3(cfg, out, "ground")
    elif name == "bell_fig3":
        summary = _fig3(cfg, out, "bell")
    elif name == "error_fig4":
        summary = _fig4(cfg, out)
    elif name == "protocol_run":
        summary = _protocol(cfg, out)
    elif name == "oracle_check":
        summary = oracle_check(cfg)
    else:
        summary = partial_eigs_check(cfg)
    elapsed = time.perf_counter() - t0
    produced = sorted(p for p in os.listdir(out) if p not in ("manifest.json", "error.json"))
    canon = cfg.canonical_json()
    manifest = {
        "experiment": name,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_sha1": blob_sha1(canon),
        "outputs": produced,
        "summary": summary,
        "passed": bool(summary.get("passed", True)),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(start)),
        "wall_clock_s": elapsed,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj
