"""Motional dephasing: truncated Fock-space evaluation against closed forms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import hbar, k as k_boltzmann
from scipy.linalg import expm

from ybnet.motion import (
    RecoilKick,
    TrapSpec,
    axis_coherence,
    fidelity_vs_delay_curve,
    lamb_dicke,
    mean_occupation,
    motional_fidelity_factor,
    temperature_for_occupation,
    thermal_populations,
    thermal_state,
)

KICK = RecoilKick.from_geometry()
TRAP = TrapSpec()


def closed_form_coherence(eta, omega, temperature, dt):
    """Thermal average of a displacement product: exp(-eta^2 (2n+1)(1 - cos w dt))."""
    nbar = mean_occupation(omega, temperature)
    return math.exp(-(eta**2) * (2 * nbar + 1) * (1 - math.cos(2 * math.pi * omega * dt)))


def test_zero_temperature_is_ground_state():
    rho = thermal_state(32e3, 0.0, 10)
    expected = np.zeros((11, 11))
    expected[0, 0] = 1.0
    np.testing.assert_array_equal(rho.entries.real, expected)


def test_mean_occupation_matches_direct_sum():
    omega, temp = 32e3, 2.33e-6
    p = thermal_populations(omega, temp, 400)
    direct = float(np.sum(np.arange(p.size) * p) / p.sum())
    x = hbar * 2 * math.pi * omega / (k_boltzmann * temp)
    assert direct == pytest.approx(1.0 / (math.exp(x) - 1.0), abs=1e-9)


def test_occupation_back_solves_temperature():
    temp = temperature_for_occupation(32e3, 0.5)
    assert mean_occupation(32e3, temp) == pytest.approx(0.5, rel=1e-12)


def test_truncation_error():
    with pytest.raises(ValueError, match="truncation insufficient"):
        thermal_state(3e3, 2.33e-6, 20)


def test_no_recoil_is_unity():
    assert motional_fidelity_factor(TRAP, RecoilKick(0.0, 0.0), 5e-6) == 1.0


def test_frozen_motion_is_unity():
    assert motional_fidelity_factor(TRAP, KICK, 0.0) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("dt", [0.7e-6, 2.8e-6, 6e-6])
@pytest.mark.parametrize("omega", [32e3, 3e3])
def test_axis_matches_closed_form(omega, dt):
    eta = lamb_dicke(KICK.delta_k_radial, omega)
    got = axis_coherence(eta, omega, 2.33e-6, dt, 400)
    assert got == pytest.approx(closed_form_coherence(eta, omega, 2.33e-6, dt), abs=1e-9)


def test_default_settings_reduction():
    loss = 1.0 - motional_fidelity_factor(TRAP, KICK, 2.8e-6)
    assert 0.006 <= loss <= 0.012


def test_doubling_cutoff_converges():
    a = motional_fidelity_factor(TRAP, KICK, 2.8e-6, n_max=400)
    b = motional_fidelity_factor(TRAP, KICK, 2.8e-6, n_max=800)
    assert abs(a - b) < 1e-6


def test_curve_monotone_in_delay():
    quarter = 0.25 / TRAP.omega_radial
    grid = np.linspace(0.0, quarter, 50)
    curves = fidelity_vs_delay_curve(TRAP, KICK, grid, [1e-6, 2.33e-6])
    for row in curves.fidelity:
        assert np.all(np.diff(row) <= 1e-12)
    # direct evaluation at every grid point
    for j, dt in enumerate(grid[::7]):
        assert curves.fidelity[1, 7 * j] == motional_fidelity_factor(TRAP, KICK, float(dt))


def test_zero_temperature_curve_dominates():
    grid = np.linspace(0.0, 8e-6, 20)
    curves = fidelity_vs_delay_curve(TRAP, KICK, grid, [0.0, 1e-6, 2.33e-6, 3.5e-6])
    for row in curves.fidelity[1:]:
        assert np.all(curves.fidelity[0] >= row)


def test_curve_cell_matches_point_value():
    curves = fidelity_vs_delay_curve(TRAP, KICK, [1e-6, 2.8e-6], [2.33e-6])
    assert curves.fidelity[0, 1] == motional_fidelity_factor(TRAP, KICK, 2.8e-6)
    assert [r[0] for r in curves.rows()] == [1e-6, 2.8e-6]


@settings(max_examples=10)
@given(
    t_lo=st.floats(0.2e-6, 2e-6),
    t_step=st.floats(0.05e-6, 1.5e-6),
    dt=st.floats(0.1e-6, 8e-6),
    omega_r=st.floats(20e3, 60e3),
)
def test_fidelity_non_increasing_in_temperature(t_lo, t_step, dt, omega_r):
    lo = TrapSpec(omega_r, 3e3, t_lo)
    hi = TrapSpec(omega_r, 3e3, t_lo + t_step)
    assert motional_fidelity_factor(hi, KICK, dt) <= motional_fidelity_factor(lo, KICK, dt) + 1e-12


@settings(max_examples=20)
@given(dt=st.floats(0.0, 50e-6), temp=st.floats(0.0, 3.5e-6))
def test_fidelity_in_unit_interval(dt, temp):
    f = motional_fidelity_factor(TrapSpec(temperature=temp), KICK, dt)
    assert 0.0 <= f <= 1.0


def test_factorization_matches_joint_two_mode():
    temp, n_max, dim = 5e-8, 8, 40
    trap = TrapSpec(temperature=temp)
    dt = 3e-6
    eta_r = lamb_dicke(KICK.delta_k_radial, trap.omega_radial)
    eta_a = lamb_dicke(KICK.delta_k_axial, trap.omega_axial)
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    x = a + a.T
    eye = np.eye(dim)
    generator = eta_r * np.kron(x, eye) + eta_a * np.kron(eye, x)
    d = expm(1j * generator)
    energies = np.add.outer(trap.omega_radial * np.arange(dim), trap.omega_axial * np.arange(dim)).ravel()
    u = np.exp(-2j * math.pi * energies * dt)
    pr = np.zeros(dim)
    pa = np.zeros(dim)
    pr[: n_max + 1] = thermal_populations(trap.omega_radial, temp, n_max)
    pa[: n_max + 1] = thermal_populations(trap.omega_axial, temp, n_max)
    rho = np.kron(pr, pa)
    evolved = (u.conj()[:, None] * d.conj().T) * u[None, :]
    joint = abs(np.sum(rho * np.diag(d @ evolved)))
    assert motional_fidelity_factor(trap, KICK, dt, n_max) == pytest.approx(0.5 * (1 + joint), abs=1e-8)


def test_trap_validation():
    with pytest.raises(ValueError):
        TrapSpec(omega_radial=0.0)
    with pytest.raises(ValueError):
        TrapSpec(temperature=-1.0)
    with pytest.raises(ValueError):
        RecoilKick(math.inf, 0.0)
