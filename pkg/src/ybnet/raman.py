"""Single-beam Raman rotations of the metastable nuclear-spin qubit.

The qubit states ``up``/``down`` (3P0, m_F = +-1/2) couple to the four 3D1
F=3/2 sublevels through one monochromatic beam travelling perpendicular to
the bias field. The vertical component (along B) drives pi transitions, the
horizontal one drives an equal mix of sigma+ and sigma-, with a fixed pi/2
phase between the two components.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .atomic import LIFETIME_3D1, MagneticField, zeeman_splitting

TWO_PI = 2.0 * math.pi

#: Nuclear Zeeman splitting of the 3P0 qubit at 120 G (Hz).
QUBIT_SPLITTING_120G = 137e3

#: Clebsch-Gordan coefficients <1/2 m; 1 q | 3/2 m+q>, keyed by (m, q).
CG = {
    (0.5, 1): 1.0,
    (0.5, 0): math.sqrt(2.0 / 3.0),
    (0.5, -1): math.sqrt(1.0 / 3.0),
    (-0.5, 1): math.sqrt(1.0 / 3.0),
    (-0.5, 0): math.sqrt(2.0 / 3.0),
    (-0.5, -1): 1.0,
}

UP, DOWN = 0, 1
D_LEVELS = (-1.5, -0.5, 0.5, 1.5)


@dataclass(frozen=True)
class RamanSetup:
    """Parameters of the Raman drive.

    Attributes:
        field: Bias field (sets the 3D1 sublevel spacing).
        detuning: Blue detuning from the 3D1 m_F=+3/2 sublevel (Hz).
        qubit_splitting: Bare splitting ``E_down - E_up`` (Hz). The positive
            nuclear moment of 171Yb puts m_F=+1/2 (up) lowest.
        gamma: Total 3D1 decay rate (1/s). Decay is treated as loss.
        phase: Relative phase between horizontal and vertical components.
    """

    field: MagneticField = MagneticField(120.0)
    detuning: float = 612e6
    qubit_splitting: float = QUBIT_SPLITTING_120G
    gamma: float = 1.0 / LIFETIME_3D1
    phase: float = math.pi / 2

    def __post_init__(self) -> None:
        if self.detuning == 0:
            raise ValueError("resonant intermediate state")


def polarization(theta: float, phase: float = math.pi / 2) -> dict[int, complex]:
    """Spherical components of a beam with ``tan(theta) = E_H / E_V``.

    The field axis is z, the horizontal axis x. ``x = (-e_+1 + e_-1)/sqrt(2)``.
    """
    h = math.sin(theta) * complex(math.cos(phase), math.sin(phase))
    return {0: complex(math.cos(theta)), 1: -h / math.sqrt(2.0), -1: h / math.sqrt(2.0)}


def raman_hamiltonian(omega: float, theta: float, setup: RamanSetup) -> np.ndarray:
    """Non-Hermitian Hamiltonian (angular units) in the frame of the laser.

    Basis order: up, down, 3D1 m = -3/2, -1/2, +1/2, +3/2.
    """
    zd = zeeman_splitting(setup.field)
    h = np.zeros((6, 6), dtype=complex)
    h[DOWN, DOWN] = TWO_PI * setup.qubit_splitting
    for k, m in enumerate(D_LEVELS):
        i = 2 + k
        # energies relative to up minus the laser photon energy
        h[i, i] = -TWO_PI * (setup.detuning + zd * (1.5 - m)) - 0.5j * setup.gamma
    eps = polarization(theta, setup.phase)
    for qi, mq in ((UP, 0.5), (DOWN, -0.5)):
        for q in (-1, 0, 1):
            mt = mq + q
            if mt not in D_LEVELS:
                continue
            c = TWO_PI * omega / 2.0 * eps[q] * CG[(mq, q)]
            i = 2 + D_LEVELS.index(mt)
            h[i, qi] += c
            h[qi, i] += np.conj(c)
    return h


def effective_qubit_hamiltonian(omega: float, theta: float, setup: RamanSetup) -> np.ndarray:
    """2x2 Hamiltonian after adiabatic elimination of 3D1 (angular units)."""
    h = raman_hamiltonian(omega, theta, replace_gamma(setup, 0.0))
    hq = h[:2, :2].copy()
    for i in range(2, 6):
        hq -= np.outer(h[:2, i], h[i, :2]) / h[i, i]
    return hq


def replace_gamma(setup: RamanSetup, gamma: float) -> RamanSetup:
    return RamanSetup(setup.field, setup.detuning, setup.qubit_splitting, gamma, setup.phase)


def effective_rabi(omega: float, theta: float, setup: RamanSetup) -> tuple[float, float]:
    """Two-photon Rabi frequency and generalized Rabi frequency (Hz)."""
    hq = effective_qubit_hamiltonian(omega, theta, setup)
    coupling = abs(hq[0, 1]) * 2.0 / TWO_PI
    delta = (hq[0, 0] - hq[1, 1]).real / TWO_PI
    return coupling, math.hypot(coupling, delta)


def pi_time(omega: float, theta: float, setup: RamanSetup) -> float:
    """Duration of maximal population transfer from the effective 2x2 model."""
    _, general = effective_rabi(omega, theta, setup)
    if general == 0:
        raise ValueError("no Raman coupling for this polarization")
    return 1.0 / (2.0 * general)


def raman_jumps(setup: RamanSetup, branching_qubit: float = 0.64) -> list[np.ndarray]:
    """Decay operators on the 7-level space ``raman basis + lost``.

    A fraction ``branching_qubit`` of 3D1 decays returns to 3P0 with
    Clebsch-Gordan weights, the rest is lumped into ``lost``.
    """
    out = []
    g = setup.gamma
    for k, m in enumerate(D_LEVELS):
        i = 2 + k
        for qi, mq in ((UP, 0.5), (DOWN, -0.5)):
            q = int(round(m - mq))
            if (mq, q) in CG:
                j = np.zeros((7, 7), dtype=complex)
                j[qi, i] = math.sqrt(g * branching_qubit) * CG[(mq, q)]
                out.append(j)
        j = np.zeros((7, 7), dtype=complex)
        j[6, i] = math.sqrt(g * (1.0 - branching_qubit))
        out.append(j)
    return [j for j in out if np.any(j)]


def _hermitian_h7(omega: float, theta: float, setup: RamanSetup) -> np.ndarray:
    h = np.zeros((7, 7), dtype=complex)
    h[:6, :6] = raman_hamiltonian(omega, theta, replace_gamma(setup, 0.0))
    return h


class _EigenPropagator:
    """``exp(gen t)`` through an eigendecomposition, exact for any ``t``."""

    def __init__(self, gen: np.ndarray) -> None:
        self.w, self.v = np.linalg.eig(gen)
        self.vinv = np.linalg.inv(self.v)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.einsum("ij,kj,jl->kil", self.v, np.exp(np.outer(t, self.w)), self.vinv)

    def expectation(self, left: np.ndarray, right: np.ndarray, t) -> np.ndarray:
        """``left @ exp(gen t) @ right`` for an array of ``t``."""
        c = (left @ self.v) * (self.vinv @ right)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(np.outer(t, self.w)) @ c


def raman_pulse_propagators(
    omega: float, theta: float, setup: RamanSetup, ramp_time: float = 5e-9, substep: float | None = None
):
    """Liouville-space propagators for a flat-top pulse with sin^2 ramps.

    Returns:
        ``(ramp_up, flat, ramp_down)``: the two ramp propagators and an
        eigen-propagator for the flat top, callable on an array of durations.
    """
    from scipy.linalg import expm as _expm

    from . import lindblad as lb

    jumps = raman_jumps(setup) if setup.gamma > 0 else []
    h_peak = _hermitian_h7(omega, theta, setup)
    flat = _EigenPropagator(lb.liouvillian(h_peak, jumps))
    eye = np.eye(49, dtype=complex)
    if ramp_time <= 0:
        return eye, flat, eye
    zd = zeeman_splitting(setup.field)
    if substep is None:
        substep = 1.0 / (50.0 * max(omega, abs(setup.detuning) + 3 * zd, setup.gamma))
    n = max(1, int(math.ceil(ramp_time / substep)))
    dt = ramp_time / n
    env = np.sin(0.5 * math.pi * (np.arange(n) + 0.5) / n) ** 2
    # the generator is affine in the envelope: L(e) = L0 + e * L1
    l0 = lb.liouvillian(_hermitian_h7(0.0, theta, setup), jumps)
    l1 = lb.liouvillian(h_peak, jumps) - l0
    steps = _expm((l0[None] + env[:, None, None] * l1[None]) * dt)
    up = functools.reduce(lambda acc, st: st @ acc, steps, eye)
    down = functools.reduce(lambda acc, st: st @ acc, steps[::-1], eye)
    return up, flat, down


def raman_pi_infidelity(
    omega: float,
    theta: float,
    setup: RamanSetup,
    duration: float | None = None,
    ramp_time: float = 5e-9,
    substep: float | None = None,
) -> float:
    """``1 - P(down)`` after a Raman pi pulse started in ``up``.

    Args:
        omega: Single-photon Rabi frequency (Hz).
        theta: Polarization angle ``arctan(E_H / E_V)``.
        setup: Drive parameters.
        duration: Flat-top duration. If None it is calibrated by minimizing
            the infidelity near the effective-model pi time.
        ramp_time: Length of each sin^2 ramp (0 for a square pulse).
        substep: Ramp propagation step.
    """
    return _pi_pulse(omega, theta, setup, duration, ramp_time, substep)[0]


def _pi_pulse(omega, theta, setup, duration, ramp_time, substep):
    from scipy.optimize import minimize_scalar

    up, flat, down = raman_pulse_propagators(omega, theta, setup, ramp_time, substep)
    rho0 = np.zeros((7, 7), dtype=complex)
    rho0[UP, UP] = 1.0
    a = up @ rho0.ravel()
    proj = down[DOWN * 7 + DOWN]

    def infid(t):
        return 1.0 - np.real(flat.expectation(proj, a, t))

    if duration is not None:
        return float(infid(duration)[0]), duration
    coupling, general = effective_rabi(omega, theta, setup)
    if general == 0:
        return 1.0, 0.0
    # a sin^2 ramp carries 3/8 of a flat segment's two-photon area
    t_est = max(1.0 / (2.0 * general) - 0.75 * max(ramp_time, 0.0), 0.0)
    grid = np.linspace(0.7 * t_est, 1.3 * t_est, 61)
    vals = infid(grid)
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi <= lo:
        return float(vals[k]), float(grid[k])
    res = minimize_scalar(lambda t: float(infid(t)[0]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    if res.fun < vals[k]:
        return float(res.fun), float(res.x)
    return float(vals[k]), float(grid[k])


@dataclass
class RamanScan:
    """Grid of Raman pi-pulse infidelity and two-photon Rabi frequency.

    Arrays are indexed ``[omega_index, theta_index]``.
    """

    omega_hz: np.ndarray
    theta: np.ndarray
    infidelity: np.ndarray
    omega_eff_hz: np.ndarray

    def best(self) -> tuple[float, float, float]:
        """``(omega, theta, infidelity)`` of the best cell."""
        i, j = np.unravel_index(np.argmin(self.infidelity), self.infidelity.shape)
        return float(self.omega_hz[i]), float(self.theta[j]), float(self.infidelity[i, j])

    def region(self, threshold: float = 1e-3) -> np.ndarray:
        """Boolean mask of cells below ``threshold``."""
        return self.infidelity < threshold

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(w), float(t), float(self.infidelity[i, j]), float(self.omega_eff_hz[i, j]))
            for i, w in enumerate(self.omega_hz)
            for j, t in enumerate(self.theta)
        ]


def raman_magic_scan(
    omega_single_photon_range: Sequence[float],
    theta_range: Sequence[float],
    setup: RamanSetup | None = None,
    ramp_time: float = 5e-9,
) -> RamanScan:
    """Scan Raman pi-pulse infidelity over Rabi frequency and polarization angle.

    Each cell uses its own calibrated pi time.

    Args:
        omega_single_photon_range: Single-photon Rabi frequencies (Hz).
        theta_range: Polarization angles ``arctan(E_H / E_V)`` (rad).
        setup: Field, detuning, qubit splitting and decay rate.
        ramp_time: Length of each sin^2 ramp.
    """
    setup = setup or RamanSetup()
    om = np.asarray(omega_single_photon_range, dtype=float)
    th = np.asarray(theta_range, dtype=float)
    if om.size == 0 or th.size == 0:
        raise ValueError("scan ranges must be non-empty")
    infid = np.ones((om.size, th.size))
    weff = np.zeros_like(infid)
    for i, w in enumerate(om):
        for j, t in enumerate(th):
            weff[i, j] = effective_rabi(w, t, setup)[0]
            if weff[i, j] > 0:
                infid[i, j] = raman_pi_infidelity(w, t, setup, ramp_time=ramp_time)
    return RamanScan(om, th, infid, weff)


def connected_region(mask: np.ndarray) -> int:
    """Size of the largest 4-connected True region in ``mask``."""
    from scipy.ndimage import label

    labels, n = label(mask)
    if n == 0:
        return 0
    return int(np.bincount(labels.ravel())[1:].max())
