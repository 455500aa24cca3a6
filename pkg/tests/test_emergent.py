import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlsync.dynamics import ModelParams, build_generator, integrate_direct, propagate_spectral, sample_initial_state
from qlsync.emergent import (ErrorRecord, alignment_horizon, delta_curve, emergent_approx,
                             error_sweep, fit_log_slope, predicted_log_slope, read_sweep_csv,
                             records_table, relative_error, relative_error_series, sample_spectrum,
                             steady_state_alignment, write_sweep_csv)
from qlsync.errors import DegenerateProjectionWarning, ParameterError, UndefinedErrorSignal
from qlsync.netgraph import ResourceSpec, ground_resource
from qlsync.qlgates import bell_circuit, conjugate_resource, emergent_state, ground_state
from qlsync.spectra import full_eigh

P = ModelParams(0.5, 10.0)
DESK = ResourceSpec(6, 2, 3, 2, seed=1)


@pytest.fixture(scope="module")
def desk():
    gen = build_generator(ground_resource(DESK, 0), P)
    x0 = sample_initial_state(DESK, DESK.stream(0, 1))
    return gen, x0


def test_relative_error_basics():
    x = np.array([1.0, 2.0, 2.0])
    assert relative_error(x, x) == 0.0
    assert relative_error(x, 0 * x) == 1.0
    with pytest.raises(UndefinedErrorSignal):
        relative_error(0 * x, x)


@settings(max_examples=40)
@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_relative_error_scale_invariance(c):
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(6) + 0j, rng.standard_normal(6) + 0j
    assert np.isclose(relative_error(c * x, c * y), relative_error(x, y), rtol=1e-10)


@settings(max_examples=40)
@given(st.floats(1e-3, 1e3), st.floats(-np.pi, np.pi))
def test_alignment_proportionality_invariance(c, alpha):
    t = np.random.default_rng(1).standard_normal(5) + 1j
    assert np.isclose(steady_state_alignment(c * np.exp(1j * alpha) * t, t), 1.0, atol=1e-12)


def test_alignment_orthogonal_and_zero():
    assert steady_state_alignment(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    with pytest.raises(UndefinedErrorSignal):
        steady_state_alignment(np.zeros(2), np.ones(2))


def test_three_routes_to_delta_agree(desk):
    gen, x0 = desk
    ts = np.linspace(0, 5, 11)
    via_coeffs = delta_curve(gen, x0, ts)
    via_states = relative_error_series(propagate_spectral(gen, x0, ts), emergent_approx(gen, x0, ts))
    rk4 = integrate_direct(gen, x0, 5.0, 1e-3, times=ts)
    via_rk4 = relative_error_series(rk4, emergent_approx(gen, x0, ts))
    assert np.max(np.abs(via_coeffs - via_states)) < 1e-12
    assert np.max(np.abs(via_coeffs - via_rk4)) < 1e-5


def test_single_mode_input_has_zero_error(desk):
    gen, _ = desk
    x0 = ground_state(DESK) * 3.0
    d = delta_curve(gen, x0, [0.0, 1.0, 5.0])
    assert np.all(d < 1e-12)
    full = propagate_spectral(gen, x0, [2.0])
    approx = emergent_approx(gen, x0, [2.0])
    assert np.allclose(full.states, approx.states, atol=1e-12)


def test_orthogonal_input_gives_unit_error(desk):
    gen, _ = desk
    x0 = np.kron(emergent_state(6, "up"), emergent_state(6, "down")).astype(complex)
    with pytest.warns(DegenerateProjectionWarning):
        approx = emergent_approx(gen, x0, [1.0])
    assert np.allclose(approx.states, 0.0)
    with pytest.warns(DegenerateProjectionWarning):
        assert np.allclose(delta_curve(gen, x0, [0.0, 3.0]), 1.0)


def test_delta_monotone_and_slope(desk):
    gen, x0 = desk
    ts = np.linspace(0, 400, 81)
    d = delta_curve(gen, x0, ts)
    assert np.all(np.diff(d) <= 1e-15)
    late = np.linspace(600, 1200, 31)
    slope = fit_log_slope(late, delta_curve(gen, x0, late))
    assert slope / predicted_log_slope(gen) == pytest.approx(1.0, abs=0.15)


def test_alignment_horizon(desk):
    gen, x0 = desk
    t = alignment_horizon(gen, x0, 0.99)
    assert 0 < t < np.inf
    d = delta_curve(gen, x0, [t])[0]
    assert np.sqrt(1 - d**2) == pytest.approx(0.99, abs=1e-6)
    assert alignment_horizon(gen, ground_state(DESK), 0.99) == 0.0


def test_bell_and_ground_errors_match_for_related_states():
    spec = ResourceSpec(4, 2, 2, 1, seed=3)
    r = ground_resource(spec, 0)
    c = bell_circuit(spec)
    g_ground = build_generator(r, P)
    g_bell = build_generator(conjugate_resource(r, c), P)   # independent diagonalization
    x0 = sample_initial_state(spec, np.random.default_rng(0))
    ts = [1.0, 5.0, 20.0]
    assert np.allclose(delta_curve(g_ground, x0, ts), delta_curve(g_bell, c.unitary @ x0, ts), atol=1e-10)


def test_log_slope_needs_positive_values():
    with pytest.raises(ParameterError):
        fit_log_slope([0, 1], [1.0, 0.0])
    assert fit_log_slope([0, 1, 2], np.exp([0, -2, -4])) == pytest.approx(-2.0)


def test_error_record_validation():
    with pytest.raises(ParameterError):
        ErrorRecord("ground", 2, 1.0, -0.1, 0.0, 3)
    with pytest.raises(ParameterError):
        ErrorRecord("ground", 2, 1.0, 0.1, 0.0, 0)


def test_sample_spectrum_matches_dense():
    spec = ResourceSpec(5, 2, 2, 1, seed=8)
    dense = full_eigh(ground_resource(spec, 2))
    assert np.allclose(sample_spectrum(spec, 2).eigenvalues, dense.eigenvalues, atol=1e-10)


SMALL = ResourceSpec(8, 2, 2, 1, seed=21)


def test_sweep_shape_and_determinism(tmp_path):
    kw = dict(l_values=[1, 3], t_values=[1.0, 5.0, 10.0], n_samp=4, params=P)
    a = error_sweep(SMALL, **kw)
    b = error_sweep(SMALL, **kw)
    assert a == b
    assert len(a) == 2 * 2 * 3
    assert {r.circuit for r in a} == {"ground", "bell"}
    write_sweep_csv(tmp_path / "s.csv", a, SMALL.seed)
    assert read_sweep_csv(tmp_path / "s.csv") == a
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "circuit,l,t,mean_delta,std_delta,n_samp,seed"


def test_sweep_parallel_matches_serial():
    kw = dict(l_values=[2], t_values=[2.0, 8.0], n_samp=3, params=P)
    serial = error_sweep(SMALL, **kw)
    parallel = error_sweep(SMALL, n_jobs=2, **kw)
    for s, p in zip(serial, parallel):
        assert s.mean_delta == pytest.approx(p.mean_delta, abs=1e-12)


def test_sweep_skips_infeasible_l():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        recs = error_sweep(SMALL, [2, 99], [1.0], n_samp=2, params=P)
    assert {r.l_value for r in recs} == {2}
    assert any("l=99" in str(w.message) for w in caught)


def test_sweep_related_mode_equalizes_circuits():
    recs = error_sweep(SMALL, [2], [3.0, 9.0], n_samp=3, params=P, bell_initial="related")
    tab_g, tab_b = records_table(recs, "ground")[2], records_table(recs, "bell")[2]
    assert np.allclose(tab_g[1], tab_b[1], atol=1e-10)


def test_fixed_graph_mode_and_bad_options():
    recs = error_sweep(SMALL, [2], [3.0], n_samp=2, params=P, mode="fixed-graph", circuits=("ground",))
    assert len(recs) == 1
    with pytest.raises(ParameterError):
        error_sweep(SMALL, [2], [3.0], n_samp=2, mode="bogus")
    with pytest.raises(ParameterError):
        error_sweep(SMALL, [2], [3.0], n_samp=0)


def test_alignment_converges_at_delta_rate(desk):
    gen, x0 = desk
    ts = np.array([300.0, 600.0])
    full = propagate_spectral(gen, x0, ts)
    d = delta_curve(gen, x0, ts)
    for i in range(2):
        a = steady_state_alignment(full.states[i], gen.spectrum.top_vector)
        assert a == pytest.approx(np.sqrt(1 - d[i] ** 2), abs=1e-12)
