import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from ybnet.atomic import LIFETIME_3D1, LevelScheme, MagneticField, zeeman_splitting
from ybnet.pulses import (
    PulseSpec,
    _pulse_propagator,
    _reg_operators,
    generalized_rabi_population,
    local_minima,
    magic_residual,
    raman_spin_flip_error,
    raman_spin_flip_error_mc,
    reg_infidelity_map,
    simulate_reg_pulse,
    solve_magic_rabi,
)
from ybnet.raman import (
    RamanSetup,
    _pi_pulse,
    raman_hamiltonian,
    raman_jumps,
    raman_magic_scan,
    raman_pi_infidelity,
    replace_gamma,
)
from ybnet.rng import stream

TWO_PI = 2 * math.pi
B120 = MagneticField(120.0)


def two_level_population(omega, delta, t):
    """Excited population by direct integration of the Schroedinger equation."""
    h = TWO_PI * np.array([[-delta / 2, omega / 2], [omega / 2, delta / 2]], dtype=complex)

    def rhs(_, y):
        psi = y[:2] + 1j * y[2:]
        d = -1j * h @ psi
        return np.concatenate([d.real, d.imag])

    sol = solve_ivp(rhs, (0, t), [1.0, 0, 0, 0], method="DOP853", rtol=1e-12, atol=1e-14)
    y = sol.y[:, -1]
    return y[1] ** 2 + y[3] ** 2


# generalized Rabi formula


def test_resonant_pi_and_half_pi():
    w = 12.5e6
    assert generalized_rabi_population(w, 0.0, 1 / (2 * w)) == pytest.approx(1.0, abs=1e-15)
    assert generalized_rabi_population(w, 0.0, 1 / (4 * w)) == pytest.approx(0.5, abs=1e-15)


def test_detuned_point_matches_integration():
    assert generalized_rabi_population(10e6, 10e6, 50e-9) == pytest.approx(
        two_level_population(10e6, 10e6, 50e-9), abs=1e-8
    )


def test_random_sweep_matches_integration():
    rng = stream(3, 1)
    for _ in range(100):
        w, d, t = rng.uniform(1e6, 50e6), rng.uniform(-50e6, 50e6), rng.uniform(0, 200e-9)
        p = generalized_rabi_population(w, d, t)
        assert 0.0 <= p <= 1.0
        assert p == pytest.approx(two_level_population(w, d, t), abs=1e-8)


@given(st.floats(1e3, 1e9), st.floats(-1e9, 1e9), st.floats(0, 1e-5))
def test_population_is_probability(w, d, t):
    assert 0.0 <= generalized_rabi_population(w, d, t) <= 1.0


# magic condition


def test_magic_rabi_at_120_gauss():
    w = solve_magic_rabi(B120, 1)
    assert 28e6 <= w <= 31e6
    assert w == pytest.approx(29.2e6, abs=0.1e6)


def test_magic_rabi_second_branch_closed_form():
    w = solve_magic_rabi(B120, 2)
    assert w == pytest.approx(zeeman_splitting(B120) / math.sqrt(16 - 1 / 3), rel=1e-15)
    assert magic_residual(w, B120, 2) < 1e-9


def test_magic_rabi_zero_field():
    with pytest.raises(ValueError):
        solve_magic_rabi(MagneticField(0.0))


@pytest.mark.parametrize("m", [0, -1, 1.5])
def test_magic_rabi_bad_index(m):
    with pytest.raises(ValueError):
        solve_magic_rabi(B120, m)


@given(st.floats(10, 500), st.integers(1, 5))
def test_magic_residual_small(b, m):
    f = MagneticField(b)
    assert magic_residual(solve_magic_rabi(f, m), f, m) < 1e-9


# REG pulse


@pytest.fixture(scope="module")
def reg30():
    return simulate_reg_pulse(30e6, B120)


def test_reg_default_point(reg30):
    assert reg30.fidelity_postselected >= 0.995
    assert reg30.fidelity_unconditional == pytest.approx(0.98, abs=0.005)
    assert 0 < reg30.yield_ < 1


def test_reg_ideal_limit():
    r = simulate_reg_pulse(30e6, B120, decay_during_pulse=False, off_resonant=False)
    assert r.fidelity_postselected == pytest.approx(1.0, abs=1e-9)


def test_reg_far_detuned_no_decay_limit():
    r = simulate_reg_pulse(30e6, MagneticField(1e4 * 30e6 / zeeman_splitting(MagneticField(1.0))), decay_during_pulse=False)
    assert r.fidelity_postselected == pytest.approx(1.0, abs=1e-4)


def test_reg_off_magic_is_worse(reg30):
    assert simulate_reg_pulse(20e6, B120).fidelity_postselected < reg30.fidelity_postselected


def test_reg_substep_halving():
    p = PulseSpec.pi_pulse(30e6, "trapezoid")
    a = simulate_reg_pulse(30e6, B120, pulse=p)
    b = simulate_reg_pulse(30e6, B120, pulse=p, substep=1.0 / (200 * zeeman_splitting(B120)))
    assert abs(a.fidelity_postselected - b.fidelity_postselected) < 1e-6
    assert abs(a.fidelity_unconditional - b.fidelity_unconditional) < 1e-6


def test_reg_rejects_nonpositive_window():
    with pytest.raises(ValueError):
        simulate_reg_pulse(30e6, B120, collection_window=0.0)


def test_pulse_propagator_preserves_trace_and_hermiticity():
    drive, photon, loss = _reg_operators(30e6, zeeman_splitting(B120), LevelScheme(), True)
    pulse = PulseSpec.pi_pulse(30e6, "trapezoid")
    prop = _pulse_propagator(pulse, drive, photon + loss, 1e-11)
    rng = stream(4, 2)
    g = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    out = (prop @ rho.ravel()).reshape(5, 5)
    assert abs(np.trace(out) - 1) < 1e-8
    assert np.max(np.abs(out - out.conj().T)) < 1e-10


def test_pulse_matches_quantum_trajectories():
    """Lindblad propagation of one pi pulse against waiting-time trajectories."""
    omega = 30e6
    scheme = LevelScheme(lifetime_3D1=30e-9)
    drive, photon, loss = _reg_operators(omega, zeeman_splitting(B120), scheme, True)
    jumps = photon + loss
    pulse = PulseSpec.pi_pulse(omega, "square")
    prop = _pulse_propagator(pulse, drive, jumps, 1e-10)
    psi0 = np.zeros(5, dtype=complex)
    psi0[0], psi0[1] = 1 / math.sqrt(2), 1 / math.sqrt(2)
    rho = (prop @ np.outer(psi0, psi0.conj()).ravel()).reshape(5, 5)
    want = np.real(np.diag(rho))

    h = drive(omega)
    heff = h - 0.5j * sum(j.conj().T @ j for j in jumps)
    n_steps = 400
    dt = pulse.duration / n_steps
    u = expm(-1j * heff * dt)
    rng = stream(5, 2)
    n = 20_000
    psi = np.tile(psi0, (n, 1))
    thresh = rng.random(n)
    for _ in range(n_steps):
        psi = psi @ u.T
        norm2 = np.sum(np.abs(psi) ** 2, axis=1)
        hit = np.nonzero(norm2 < thresh)[0]
        for i in hit:
            w = np.array([np.sum(np.abs(j @ psi[i]) ** 2) for j in jumps])
            k = rng.choice(len(jumps), p=w / w.sum())
            new = jumps[k] @ psi[i]
            psi[i] = new / np.linalg.norm(new)
            thresh[i] = rng.random()
    pops = np.abs(psi) ** 2
    pops /= pops.sum(axis=1, keepdims=True)
    got = pops.mean(axis=0)
    sigma = pops.std(axis=0) / math.sqrt(n)
    # first-order jump timing adds a bias of order dt / tau
    assert np.all(np.abs(got - want) <= 3 * sigma + dt / scheme.lifetime_3D1)


# REG maps


def test_single_cell_map_matches_simulation(reg30):
    m = reg_infidelity_map([30e6], [120.0])
    assert m.infidelity.shape == (1, 1)
    assert m.infidelity[0, 0] == reg30.infidelity
    assert m.rows() == [(30e6, 120.0, reg30.infidelity, reg30.yield_)]


@pytest.fixture(scope="module")
def reg_row():
    return reg_infidelity_map(np.arange(10e6, 60.1e6, 2e6), [120.0])


def test_operating_point_is_local_minimum(reg_row):
    k = int(np.argmin(np.abs(reg_row.omega_hz - 30e6)))
    assert k in local_minima(reg_row.infidelity[0])


def test_several_minima_along_rabi(reg_row):
    assert len(local_minima(reg_row.infidelity[0])) >= 2


@pytest.mark.parametrize(
    "values, expected",
    [([3, 1, 2], [1]), ([3, 1, 1, 2], [1]), ([1, 2, 3], []), ([2, 1, 2, 0, 1], [1, 3]), ([1, 1, 1], [])],
)
def test_local_minima_tie_break(values, expected):
    assert local_minima(values) == expected


def test_map_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        reg_infidelity_map([30e6, 20e6], [120.0])


# Raman spin flip


def test_spin_flip_reference_point():
    assert raman_spin_flip_error(1.2e-6, 0.7e-6, LIFETIME_3D1) == pytest.approx(0.0035, abs=0.001)


def test_spin_flip_vanishes_for_late_pulse():
    assert raman_spin_flip_error(math.inf, 0.7e-6, LIFETIME_3D1) == 0.0
    assert raman_spin_flip_error(1e-3, 0.7e-6, LIFETIME_3D1) == 0.0


def test_spin_flip_matches_sampling():
    exact = raman_spin_flip_error(1.2e-6, 0.7e-6, LIFETIME_3D1)
    mean, err = raman_spin_flip_error_mc(1.2e-6, 0.7e-6, LIFETIME_3D1, 1_000_000, stream(6, 0))
    assert abs(mean - exact) <= 3 * err


@given(st.floats(1e-8, 5e-6), st.floats(1e-8, 5e-6))
def test_spin_flip_is_probability(delay, t_pi):
    assert 0.0 <= raman_spin_flip_error(delay, t_pi, LIFETIME_3D1) <= 0.5


# Raman magic scan


def test_ideal_raman_limit():
    """No scattering and far detuning: the best polarization gives a near-perfect pi pulse."""
    om = 10e6
    s = RamanSetup(detuning=1e4 * om, qubit_splitting=0.0, gamma=0.0)
    r = minimize_scalar(
        lambda t: raman_pi_infidelity(om, t, s, ramp_time=0), bounds=(0.2, 1.3), method="bounded", options={"xatol": 1e-10}
    )
    assert abs(r.fun) < 1e-6


def _liouvillian_colmajor(h, jumps):
    """Master-equation generator for column-stacked density matrices."""
    n = h.shape[0]
    eye = np.eye(n)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for j in jumps:
        jj = j.conj().T @ j
        gen += np.kron(j.conj(), j) - 0.5 * np.kron(eye, jj) - 0.5 * np.kron(jj.T, eye)
    return gen


def test_raman_cell_against_refined_integrator():
    setup = RamanSetup()
    om, th, ramp = 70e6, 0.75, 5e-9
    infid, duration = _pi_pulse(om, th, setup, None, ramp, None)
    jumps = raman_jumps(setup)

    def h7(amp):
        h = np.zeros((7, 7), dtype=complex)
        h[:6, :6] = raman_hamiltonian(amp, th, replace_gamma(setup, 0.0))
        return h

    substep = 1.0 / (50.0 * max(om, abs(setup.detuning) + 3 * zeeman_splitting(setup.field), setup.gamma)) / 10
    n = int(math.ceil(ramp / substep))
    dt = ramp / n
    env = np.sin(0.5 * math.pi * (np.arange(n) + 0.5) / n) ** 2
    steps = [expm(_liouvillian_colmajor(h7(om * e), jumps) * dt) for e in env]
    rho = np.zeros((7, 7), dtype=complex)
    rho[0, 0] = 1.0
    v = rho.ravel(order="F")
    for s in steps:
        v = s @ v
    v = expm(_liouvillian_colmajor(h7(om), jumps) * duration) @ v
    for s in steps[::-1]:
        v = s @ v
    out = v.reshape(7, 7, order="F")
    assert abs((1 - out[1, 1].real) - infid) < 1e-6


def test_scan_shapes_and_rows():
    scan = raman_magic_scan([60e6, 70e6], [0.7, 0.8, 0.9])
    assert scan.infidelity.shape == (2, 3)
    assert len(scan.rows()) == 6
    w, t, inf = scan.best()
    assert inf == scan.infidelity.min()
    assert np.all((scan.infidelity >= 0) & (scan.infidelity <= 1))


def test_scan_rejects_empty_range():
    with pytest.raises(ValueError):
        raman_magic_scan([], [0.5])
