"""Pulse-level dynamics: Rabi formulas, magic Rabi condition, REG pulse pair.

The REG (remote entanglement generation) model evolves a five-level atom
``{up, down, e32, e12, lost}`` under a Lindblad master equation. Photon
emission inside the two collection windows is resolved with counting
superoperators: populations come from the no-photon generator, and the
early/late coherence from the quantum regression theorem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad, simpson
from scipy.linalg import expm

from . import lindblad as lb
from .atomic import DecayChannel, LevelScheme, MagneticField, zeeman_splitting

TWO_PI = 2.0 * math.pi

#: Time-bin separation used by the experiment (s).
DEFAULT_BIN_SEPARATION = 2.8e-6

#: Largest Liouville-space matrix accepted (Hilbert dimension squared).
MAX_HILBERT_DIM = 64

UP, DOWN, E32, E12, LOST = range(5)
REG_BASIS = ("up", "down", "3D1 +3/2", "3D1 +1/2", "lost")


@dataclass(frozen=True)
class PulseSpec:
    """Drive on one transition leg.

    Attributes:
        rabi_frequency: Peak Rabi frequency in Hz (ordinary).
        detuning: Drive detuning in Hz.
        duration: Total pulse length in seconds.
        shape: ``"square"`` or ``"trapezoid"``.
        rise_time: Linear ramp time of the trapezoid in seconds.
    """

    rabi_frequency: float
    detuning: float = 0.0
    duration: float = 1.0
    shape: str = "square"
    rise_time: float = 0.0

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        if self.rabi_frequency < 0:
            raise ValueError("rabi_frequency must be non-negative")
        if self.shape not in ("square", "trapezoid"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.rise_time < 0 or self.rise_time > self.duration / 2:
            raise ValueError("rise_time must lie in [0, duration/2]")

    @classmethod
    def pi_pulse(cls, rabi_frequency: float, shape: str = "square", rise_time: float = 5e-9) -> "PulseSpec":
        """Pulse with area pi on a resonant transition of peak Rabi ``rabi_frequency``."""
        if rabi_frequency <= 0:
            raise ValueError("rabi_frequency must be positive")
        flat = 1.0 / (2.0 * rabi_frequency)
        if shape == "square":
            return cls(rabi_frequency, 0.0, flat, "square", 0.0)
        # area of a trapezoid with ramps r is Omega * (duration - r)
        return cls(rabi_frequency, 0.0, flat + rise_time, "trapezoid", rise_time)

    def envelope(self, t: np.ndarray | float) -> np.ndarray:
        """Amplitude envelope in [0, 1] at times ``t`` in [0, duration]."""
        t = np.asarray(t, dtype=float)
        if self.shape == "square" or self.rise_time == 0:
            return np.where((t >= 0) & (t <= self.duration), 1.0, 0.0)
        r = self.rise_time
        return np.clip(np.minimum(t / r, (self.duration - t) / r), 0.0, 1.0)


def generalized_rabi_population(omega: float, delta: float, t: float) -> float:
    """Excited-state population of a driven two-level system.

    Args:
        omega: Rabi frequency in Hz.
        delta: Detuning in Hz.
        t: Evolution time in seconds.

    Returns:
        ``(omega^2 / omega_eff^2) * sin^2(pi * omega_eff * t)``.
    """
    if omega < 0:
        raise ValueError("omega must be non-negative")
    w2 = omega * omega + delta * delta
    if w2 == 0:
        return 0.0
    weff = math.sqrt(w2)
    return float(omega * omega / w2 * math.sin(math.pi * weff * t) ** 2)


def magic_residual(omega: float, field: MagneticField, m: int) -> float:
    """Relative residual of the magic Rabi condition for rotation index ``m``."""
    d = zeeman_splitting(field)
    lhs = math.sqrt((omega / math.sqrt(3.0)) ** 2 + d * d) / (2.0 * omega)
    return abs(lhs - m) / m


def solve_magic_rabi(field: MagneticField, m: int = 1) -> float:
    """Rabi frequency at which the off-resonant leg makes ``m`` full turns.

    During a pi pulse on the resonant leg the ``down -> 3D1 +1/2`` leg, driven
    at ``Omega/sqrt(3)`` and detuned by the Zeeman splitting, completes
    exactly ``m`` full 2*pi rotations.

    Raises:
        ValueError: For zero field or non-positive ``m``.
    """
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    if field.B == 0:
        raise ValueError("degenerate field: no magic condition exists")
    d = zeeman_splitting(field)
    return d / math.sqrt(4.0 * m * m - 1.0 / 3.0)


def raman_spin_flip_error(delay_after_excitation: float, raman_pi_time: float, lifetime: float) -> float:
    """Bell-state error from photons emitted while the Raman pulse is on.

    A photon emitted ``s`` after the Raman pulse starts means the atom only
    rotated by ``theta = pi s / T`` before returning to the qubit manifold, so
    it misses the intended pi rotation with probability ``sin^2(theta / 2)``
    once the pulse completes. This weight is averaged against the exponential
    emission density over the pulse window. Only the early-bin half of the
    Bell state is exposed, which contributes the factor 1/2.

    Args:
        delay_after_excitation: Start of the Raman pulse after excitation (s).
        raman_pi_time: Raman pi-pulse duration (s).
        lifetime: Excited-state lifetime (s).

    Returns:
        Infidelity contribution in [0, 1].
    """
    if delay_after_excitation <= 0 or raman_pi_time <= 0 or lifetime <= 0:
        raise ValueError("all durations must be positive")
    if math.isinf(delay_after_excitation) or delay_after_excitation / lifetime > 700:
        return 0.0
    T = raman_pi_time

    def integrand(s: float) -> float:
        return math.exp(-(delay_after_excitation + s) / lifetime) / lifetime * math.sin(math.pi * s / (2 * T)) ** 2

    value, _ = quad(integrand, 0.0, T, epsabs=0.0, epsrel=1e-12, limit=200)
    return 0.5 * value


def raman_spin_flip_error_mc(
    delay_after_excitation: float, raman_pi_time: float, lifetime: float, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Sampling estimate of :func:`raman_spin_flip_error` and its std error."""
    s = rng.exponential(lifetime, size=n) - delay_after_excitation
    inside = (s >= 0) & (s < raman_pi_time)
    w = np.zeros(n)
    w[inside] = 0.5 * np.sin(np.pi * s[inside] / (2 * raman_pi_time)) ** 2
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(n))


@dataclass
class RegPulseResult:
    """Outcome of the simulated REG sequence.

    Attributes:
        fidelity_unconditional: Bell fidelity given the atom stays in the qubit.
        fidelity_postselected: Bell fidelity given at least one photon in a window.
        yield_: Probability of at least one in-window photon.
        p_early: Probability of exactly one photon, in the early window, with the
            atom in the state that heralds it.
        p_late: Same for the late window.
        coherence: Magnitude of the early/late coherence.
        p_qubit: Probability that the atom ends in the qubit manifold.
    """

    fidelity_unconditional: float
    fidelity_postselected: float
    yield_: float
    p_early: float = 0.0
    p_late: float = 0.0
    coherence: float = 0.0
    p_qubit: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity_postselected


def _op(i: int, j: int, n: int = 5) -> np.ndarray:
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


def _reg_operators(omega: float, zeeman: float, scheme: LevelScheme, off_resonant: bool):
    gamma = scheme.decay_rate
    b0 = scheme.branching[DecayChannel.P0]
    cg = 1.0 / math.sqrt(3.0)
    photon = [
        math.sqrt(gamma * b0) * _op(UP, E32),
        math.sqrt(gamma * b0 / 3.0) * _op(DOWN, E12),
        math.sqrt(gamma * b0 * 2.0 / 3.0) * _op(UP, E12),
    ]
    loss = [
        math.sqrt(gamma * (1.0 - b0)) * _op(LOST, E32),
        math.sqrt(gamma * (1.0 - b0)) * _op(LOST, E12),
    ]
    photon = [p for p in photon if np.any(p)]
    loss = [p for p in loss if np.any(p)]

    def drive(amp: float) -> np.ndarray:
        h = TWO_PI * amp / 2.0 * (_op(E32, UP) + _op(UP, E32))
        if off_resonant:
            h = h + TWO_PI * amp * cg / 2.0 * (_op(E12, DOWN) + _op(DOWN, E12))
        h = h - TWO_PI * zeeman * _op(E12, E12)
        return h

    return drive, photon, loss


def _pulse_propagator(
    pulse: PulseSpec, drive, jumps: Sequence[np.ndarray], substep: float
) -> np.ndarray:
    n = max(1, int(math.ceil(pulse.duration / substep)))
    dt = pulse.duration / n
    dim = drive(0.0).shape[0] ** 2
    if pulse.shape == "square" or pulse.rise_time == 0:
        return np.linalg.matrix_power(expm(lb.liouvillian(drive(pulse.rabi_frequency), jumps) * dt), n)
    prop = np.eye(dim, dtype=complex)
    t_mid = (np.arange(n) + 0.5) * dt
    amps = pulse.rabi_frequency * pulse.envelope(t_mid)
    cache: dict[float, np.ndarray] = {}
    for a in amps:
        key = float(a)
        if key not in cache:
            cache[key] = expm(lb.liouvillian(drive(key), jumps) * dt)
        prop = cache[key] @ prop
    return prop


def simulate_reg_pulse(
    omega: float,
    field: MagneticField,
    scheme: LevelScheme | None = None,
    pulse: PulseSpec | None = None,
    collection_window: float | None = None,
    *,
    bin_separation: float = DEFAULT_BIN_SEPARATION,
    decay_during_pulse: bool = True,
    off_resonant: bool = True,
    substep: float | None = None,
    window_step: float = 0.5e-9,
    raman_flip_probability: float = 0.0,
) -> RegPulseResult:
    """Simulate the two-bin REG sequence and return Bell-state figures of merit.

    Sequence: ideal pi/2 on the qubit, telecom pi pulse, early collection
    window, qubit swap (ideal Raman pi), second telecom pi pulse, late window.
    Photons emitted while a pulse is on fall outside the windows and are
    traced out. The target state is ``(|down, E> + |up, L>)/sqrt(2)``.

    Args:
        omega: Peak telecom Rabi frequency (Hz) on the up <-> 3D1 +3/2 leg.
        field: Bias field; sets the detuning of the down <-> 3D1 +1/2 leg.
        scheme: Level scheme (lifetime and branching). Defaults to the 171Yb values.
        pulse: Pulse shape and duration. Defaults to a square pi pulse at ``omega``.
        collection_window: Window length after each pulse (s). Defaults to the
            time between the end of one pulse and the start of the next.
        bin_separation: Early/late separation used for the default window.
        decay_during_pulse: Include spontaneous emission while driving.
        off_resonant: Include the off-resonant down <-> 3D1 +1/2 leg.
        substep: Propagator substep for shaped pulses. Defaults to
            ``1/(100 max(Omega, Delta, Gamma))``.
        window_step: Quadrature step for photon emission times.
        raman_flip_probability: Probability that the swap fails and leaves the
            qubit unflipped (finite-duration Raman mode).

    Raises:
        ValueError: On a non-positive window or an oversized state space.
    """
    scheme = scheme or LevelScheme()
    if pulse is None:
        pulse = PulseSpec.pi_pulse(omega, "square")
    elif pulse.rabi_frequency != omega:
        pulse = PulseSpec(omega, pulse.detuning, pulse.duration, pulse.shape, pulse.rise_time)
    if collection_window is None:
        collection_window = bin_separation - pulse.duration
    if not collection_window > 0:
        raise ValueError("collection_window must be positive")
    n_levels = len(REG_BASIS)
    if n_levels > MAX_HILBERT_DIM:
        raise ValueError("state space too large")

    zeeman = zeeman_splitting(field)
    drive, photon, loss = _reg_operators(omega, zeeman, scheme, off_resonant)
    gamma = scheme.decay_rate
    if substep is None:
        substep = 1.0 / (100.0 * max(omega, zeeman if off_resonant else 0.0, gamma))
    pulse_jumps = photon + loss if decay_during_pulse else []
    P = _pulse_propagator(pulse, drive, pulse_jumps, substep)

    h0 = drive(0.0)
    W = collection_window
    L_full = lb.liouvillian(h0, photon + loss)
    L_nophoton = lb.liouvillian(h0, loss, counted=photon)

    swap = _op(UP, DOWN) + _op(DOWN, UP) + _op(E32, E32) + _op(E12, E12) + _op(LOST, LOST)
    keep = np.eye(n_levels, dtype=complex)
    R = (1.0 - raman_flip_probability) * lb.sandwich(swap) + raman_flip_probability * lb.sandwich(keep)
    M = P @ R

    plus = np.zeros(n_levels, dtype=complex)
    plus[UP] = plus[DOWN] = 1 / math.sqrt(2)
    v0 = P @ np.outer(plus, plus.conj()).ravel()

    n_steps = max(2, int(math.ceil(W / window_step)))
    n_steps += n_steps % 2
    h = W / n_steps
    step = expm(L_nophoton * h)
    powers = np.empty((n_steps + 1, n_levels**2, n_levels**2), dtype=complex)
    powers[0] = np.eye(n_levels**2)
    for k in range(1, n_steps + 1):
        powers[k] = step @ powers[k - 1]
    EW = powers[-1]
    rev = powers[::-1]
    taus = np.arange(n_steps + 1) * h

    EfullW = expm(L_full * W)

    def qubit_pop(v: np.ndarray) -> float:
        return float((v[UP * n_levels + UP] + v[DOWN * n_levels + DOWN]).real)

    p_qubit = qubit_pop(EfullW @ M @ EfullW @ v0)
    p_none = qubit_pop(EW @ M @ EW @ v0)

    a1 = np.einsum("kij,j->ki", powers, v0)
    s2 = M @ EW @ v0
    a2 = np.einsum("kij,j->ki", powers, s2)
    after_early = EW @ M
    idx_dd = DOWN * n_levels + DOWN
    idx_uu = UP * n_levels + UP
    idx_du = DOWN * n_levels + UP

    pe = np.zeros(n_steps + 1)
    pl = np.zeros(n_steps + 1)
    coh = np.zeros(n_steps + 1, dtype=complex)
    for J in photon:
        jj = lb.sandwich(J)
        # exactly one photon, early, heralding down after the swap
        c = np.einsum("kij,kj->ki", rev, a1 @ jj.T)
        pe += (c @ after_early.T)[:, idx_dd].real
        # exactly one photon, late, heralding up
        c2 = np.einsum("kij,kj->ki", rev, a2 @ jj.T)
        pl += c2[:, idx_uu].real
        # early photon on the ket side, late photon on the bra side
        x = np.einsum("kij,kj->ki", rev, a1 @ lb.left(J).T) @ M.T
        x = np.einsum("kij,kj->ki", powers, x) @ lb.right(J.conj().T).T
        x = np.einsum("kij,kj->ki", rev, x)
        coh += x[:, idx_du]

    p_early = float(simpson(pe, x=taus))
    p_late = float(simpson(pl, x=taus))
    coherence = float(abs(simpson(coh, x=taus)))
    numerator = 0.5 * (p_early + p_late) + coherence
    yield_ = 1.0 - float(np.trace((EW @ M @ EW @ v0).reshape(n_levels, n_levels)).real)
    herald = p_qubit - p_none
    f_unc = numerator / p_qubit if p_qubit > 0 else 0.0
    f_ps = numerator / herald if herald > 0 else 0.0
    return RegPulseResult(
        fidelity_unconditional=float(np.clip(f_unc, 0, 1)),
        fidelity_postselected=float(np.clip(f_ps, 0, 1)),
        yield_=float(np.clip(yield_, 0, 1)),
        p_early=p_early,
        p_late=p_late,
        coherence=coherence,
        p_qubit=p_qubit,
        extras={"pulse_duration": pulse.duration, "collection_window": W},
    )



@dataclass
class RegMap:
    """Grid of REG results; arrays are indexed ``[b_index, omega_index]``."""

    omega_hz: np.ndarray
    b_gauss: np.ndarray
    infidelity: np.ndarray
    yield_: np.ndarray

    def rows(self) -> list[tuple[float, float, float, float]]:
        """Flat rows ``(omega_hz, b_gauss, infidelity, yield)``."""
        out = []
        for i, b in enumerate(self.b_gauss):
            for j, w in enumerate(self.omega_hz):
                out.append((float(w), float(b), float(self.infidelity[i, j]), float(self.yield_[i, j])))
        return out


def _check_grid(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d grid")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def reg_infidelity_map(
    omega_range: Sequence[float],
    b_range: Sequence[float],
    scheme: LevelScheme | None = None,
    **kwargs,
) -> RegMap:
    """Post-selected infidelity and yield of :func:`simulate_reg_pulse` on a grid.

    Args:
        omega_range: Increasing Rabi frequencies (Hz).
        b_range: Increasing field values (G).
        scheme: Level scheme passed to every cell.
        **kwargs: Forwarded to :func:`simulate_reg_pulse`.
    """
    omegas = _check_grid(omega_range, "omega_range")
    bs = _check_grid(b_range, "b_range")
    infid = np.empty((bs.size, omegas.size))
    yld = np.empty_like(infid)
    for i, b in enumerate(bs):
        for j, w in enumerate(omegas):
            r = simulate_reg_pulse(float(w), MagneticField(float(b)), scheme, **kwargs)
            infid[i, j] = r.infidelity
            yld[i, j] = r.yield_
    return RegMap(omegas, bs, infid, yld)


def local_minima(values: Sequence[float]) -> list[int]:
    """Indices of interior local minima of a 1-d sequence.

    A cell is a minimum when it is strictly below the nearest differing
    neighbor on each side. Plateaus report their lowest index.
    """
    v = np.asarray(values, dtype=float)
    out = []
    i = 1
    while i < v.size - 1:
        j = i
        while j + 1 < v.size and v[j + 1] == v[i]:
            j += 1
        if j + 1 < v.size and v[i - 1] > v[i] and v[j + 1] > v[i]:
            out.append(i)
        i = j + 1
    return out
