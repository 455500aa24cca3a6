import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qlsync.dynamics import (ModelParams, Trajectory, angles_and_phases, build_generator,
                             integrate_direct, propagate_spectral, read_trajectory_binary,
                             sample_initial_state, wrap_angle, write_trajectory_binary,
                             write_trajectory_csv)
from qlsync.errors import (IntegrationError, ParameterError, TruncationError,
                           UndefinedAngleError)
from qlsync.netgraph import ResourceSpec, ground_resource
from qlsync.qlgates import emergent_state, ground_state
from qlsync.spectra import top_k_eigs

DESK = ResourceSpec(6, 2, 3, 2, seed=1)
P = ModelParams(0.5, 10.0)


@pytest.fixture(scope="module")
def desk():
    r = ground_resource(DESK, 0)
    gen = build_generator(r, P)
    x0 = sample_initial_state(DESK, DESK.stream(0, 1))
    return r, gen, x0


def test_model_params_validation():
    with pytest.raises(ParameterError):
        ModelParams(0.0, 1.0)
    with pytest.raises(ParameterError):
        ModelParams(1.0, 0.0)
    with pytest.raises(ParameterError):
        ModelParams.from_dict({"omega": [0.5, 0.6], "coupling": 1.0})
    assert ModelParams.from_dict({"omega": [0.5, 0.5], "coupling": 2.0}) == ModelParams(0.5, 2.0)


def test_initial_state_structure():
    x = sample_initial_state(DESK, np.random.default_rng(0))
    assert np.allclose(np.abs(x), 1.0)
    sv = np.linalg.svd(x.reshape(12, 12), compute_uv=False)
    assert sv[1] < 1e-10 * sv[0]
    zeros = sample_initial_state(DESK, None, angles=np.zeros((2, 12)))
    assert np.array_equal(zeros, np.ones(144))


def test_growth_rate_of_top_mode():
    spec = ResourceSpec(16, 2, 8, 4, seed=0)
    from qlsync.emergent import sample_spectrum
    gen = build_generator(None, P, spectrum=sample_spectrum(spec, 0))
    assert gen.rate * gen.spectrum.top_value == pytest.approx(0.234375, abs=1e-12)


def test_spectral_matches_matrix_exponential(desk):
    r, gen, x0 = desk
    d = 1j * P.omega_bar * np.eye(144) + P.coupling / 144 * r
    times = [0.0, 0.7, 3.0]
    traj = propagate_spectral(gen, x0, times)
    for i, t in enumerate(times):
        exact = expm(d * t) @ x0
        got = traj.states[i] * np.exp(traj.log_scale[i])
        assert np.linalg.norm(got - exact) / np.linalg.norm(exact) < 1e-11


def test_t0_returns_initial_state(desk):
    _, gen, x0 = desk
    traj = propagate_spectral(gen, x0, [0.0])
    assert np.allclose(traj.states[0], x0, atol=1e-12) and traj.log_scale[0] == 0.0


def test_eigenvector_input_stays_on_mode():
    spec = ResourceSpec(6, 1, 3, 2, seed=0)
    gen = build_generator(ground_resource(spec, 0), P)
    psi = emergent_state(6, "down")
    times = np.linspace(0, 10, 6)
    traj = propagate_spectral(gen, psi, times)
    lam = 5.0
    for i, t in enumerate(times):
        expect = np.exp((1j * P.omega_bar + P.coupling / 12 * lam) * t) * psi
        got = traj.states[i] * np.exp(traj.log_scale[i])
        assert np.allclose(got, expect, rtol=1e-10, atol=1e-12)


def test_zero_resource_is_pure_rotation():
    spec = ResourceSpec(4, 1, 1, 1)
    gen = build_generator(np.zeros((8, 8)), P)
    x0 = sample_initial_state(spec, np.random.default_rng(2))
    direct = integrate_direct(gen, x0, 1.0, 1e-3, times=[1.0])
    assert np.allclose(direct.states[0] * np.exp(direct.log_scale[0]), np.exp(0.5j) * x0, atol=1e-10)
    exact = propagate_spectral(gen, x0, [1.0])
    assert np.allclose(exact.states[0] * np.exp(exact.log_scale[0]), np.exp(0.5j) * x0, atol=1e-12)


def test_rk4_agrees_with_spectral(desk):
    _, gen, x0 = desk
    direct = integrate_direct(gen, x0, 5.0, 1e-3, times=np.linspace(0, 5, 21))
    exact = propagate_spectral(gen, x0, direct.times)
    dev = np.linalg.norm(direct.normalized() - exact.normalized(), axis=1)
    assert dev.max() <= 1e-6
    assert np.allclose(direct.log_norms, exact.log_norms, atol=1e-9)


def test_rk4_is_fourth_order(desk):
    _, gen, x0 = desk
    exact = propagate_spectral(gen, x0, [2.0]).normalized()[0]
    errs = [np.linalg.norm(integrate_direct(gen, x0, 2.0, dt, times=[2.0]).normalized()[0] - exact)
            for dt in (0.1, 0.05)]
    assert 13.0 < errs[0] / errs[1] < 19.0


def test_norm_independent_of_omega(desk):
    r, _, x0 = desk
    a = propagate_spectral(build_generator(r, ModelParams(0.5, 10.0)), x0, [1.0, 4.0])
    b = propagate_spectral(build_generator(r, ModelParams(5.0, 10.0)), x0, [1.0, 4.0])
    assert np.allclose(a.log_norms, b.log_norms, rtol=0, atol=1e-12)


def test_product_trajectory_stays_rank_one():
    spec = ResourceSpec(6, 2, 3, 2, seed=5)
    from qlsync.netgraph import cartesian_product, sample_factors
    f = sample_factors(spec, 0)
    gen = build_generator(cartesian_product([f[0], f[0]]), P)
    x0 = sample_initial_state(spec, np.random.default_rng(1))
    for s in propagate_spectral(gen, x0, [1.0, 5.0, 20.0]).states:
        sv = np.linalg.svd(s.reshape(12, 12), compute_uv=False)
        assert sv[1] < 1e-9 * sv[0]


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_propagation_is_linear(a, b):
    spec = ResourceSpec(4, 1, 2, 1, seed=0)
    gen = build_generator(ground_resource(spec, 0), P)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(8) + 0j, rng.standard_normal(8) * 1j
    t = [0.5, 30.0]
    lhs = propagate_spectral(gen, a * x + b * y, t).states
    rhs = a * propagate_spectral(gen, x, t).states + b * propagate_spectral(gen, y, t).states
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)))


def test_time_composition(desk):
    _, gen, x0 = desk
    mid = propagate_spectral(gen, x0, [1.5])
    x_mid = mid.states[0]
    two_step = propagate_spectral(gen, x_mid, [2.5])
    one_step = propagate_spectral(gen, x0, [4.0])
    lhs = two_step.states[0] * np.exp(two_step.log_scale[0] + mid.log_scale[0] - one_step.log_scale[0])
    assert np.allclose(lhs, one_step.states[0], atol=1e-9)


def test_long_times_do_not_overflow():
    spec = ResourceSpec(16, 1, 8, 4, seed=0)
    gen = build_generator(ground_resource(spec, 0), P)
    x0 = sample_initial_state(spec, np.random.default_rng(0))
    traj = propagate_spectral(gen, x0, [5000.0])
    assert np.all(np.isfinite(traj.states)) and np.isfinite(traj.log_norms[0])
    assert traj.log_norms[0] > 700  # the raw norm would overflow


def test_partial_spectrum_truncation():
    spec = ResourceSpec(16, 1, 4, 2, seed=0)
    r = ground_resource(spec, 0)
    gen = build_generator(r, P, spectrum=top_k_eigs(r, 3))
    with pytest.raises(TruncationError) as info:
        propagate_spectral(gen, np.ones(32, dtype=complex), [1.0])
    assert info.value.weight > 0.1
    # an input inside the kept subspace is fine
    traj = propagate_spectral(gen, gen.spectrum.top_vector.astype(complex), [1.0])
    assert np.isfinite(traj.states).all()


def test_integrator_errors():
    gen = build_generator(np.zeros((2, 2)), P)
    with pytest.raises(ParameterError):
        integrate_direct(gen, np.ones(2), 1.0, 0.0)
    with pytest.raises(ParameterError):
        integrate_direct(gen, np.ones(2), 1.0, 0.3)
    with pytest.raises(IntegrationError) as info:
        integrate_direct(gen, np.array([np.nan, 1.0]), 0.01, 1e-3)
    assert info.value.time == pytest.approx(1e-3)


def test_angles_and_phases():
    traj = Trajectory([0.0, 1.0], [np.ones(3), -np.ones(3)], [0.0, 0.0])
    theta, phi = angles_and_phases(traj, 0.5)
    assert np.array_equal(theta[0], np.zeros(3))
    assert np.allclose(theta[1], -np.pi)          # pi wraps to -pi
    assert np.allclose(phi[1], wrap_angle(np.pi - 0.5))
    psi = Trajectory([0.0], [emergent_state(3, "down")], [0.0])
    assert np.allclose(angles_and_phases(psi, None)[0][0], [0, 0, 0, -np.pi, -np.pi, -np.pi])


def test_zero_amplitude_angle():
    traj = Trajectory([0.0, 2.0], [[1.0, 1.0], [1.0, 0.0]], [0.0, 0.0])
    with pytest.raises(UndefinedAngleError) as info:
        angles_and_phases(traj, 0.5)
    assert (info.value.index, info.value.time) == (1, 2.0)
    theta, _ = angles_and_phases(traj, 0.5, strict=False)
    assert np.isnan(theta[1, 1])


@settings(max_examples=50)
@given(st.floats(-1e3, 1e3))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi <= w < np.pi
    assert np.isclose(np.exp(1j * w), np.exp(1j * a), atol=1e-9)


def test_ground_phases_settle():
    # phases converge entrywise after the transient
    spec = ResourceSpec(8, 2, 4, 3, seed=3)
    gen = build_generator(ground_resource(spec, 0), P)
    x0 = sample_initial_state(spec, spec.stream(0, 1))
    traj = propagate_spectral(gen, x0, [200.0, 400.0])
    _, phi = angles_and_phases(traj, P.omega_bar)
    assert np.max(np.abs(wrap_angle(phi[1] - phi[0]))) < 1e-3
    target = ground_state(spec)
    assert abs(np.vdot(target, traj.normalized()[1])) > 0.999


def test_trajectory_exports_round_trip(tmp_path, desk):
    _, gen, x0 = desk
    traj = propagate_spectral(gen, x0, [0.0, 0.5, 1.0])
    write_trajectory_binary(tmp_path / "t.bin", traj)
    back = read_trajectory_binary(tmp_path / "t.bin")
    assert np.array_equal(back.states, traj.states) and np.array_equal(back.log_scale, traj.log_scale)
    write_trajectory_csv(tmp_path / "t.csv", traj, P.omega_bar)
    data = np.genfromtxt(tmp_path / "t.csv", delimiter=",", skip_header=1)
    theta, phi = angles_and_phases(traj, P.omega_bar)
    assert data.shape == (3 * 144, 5)
    assert np.array_equal(data[:, 2], theta.ravel()) and np.array_equal(data[:, 3], phi.ravel())
    assert np.array_equal(data[::144, 4], traj.log_norms)


def test_trajectory_validation():
    with pytest.raises(ParameterError):
        Trajectory([1.0, 0.0], np.ones((2, 2)), [0.0, 0.0])
    with pytest.raises(ParameterError):
        Trajectory([0.0], np.ones((2, 2)), [0.0])
