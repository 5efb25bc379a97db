"""Cavity-enhanced collection, atom-atom success probability and array rates."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import minimize_scalar

from .atomic import DEFAULT_BRANCHING, LIFETIME_3D1, TELECOM_WAVELENGTH
from .rng import stream

PPM = 1e-6
#: Total decay rate of the excited state (1/s).
GAMMA_3D1 = 1.0 / LIFETIME_3D1


@dataclass(frozen=True)
class CavityGeometry:
    """Symmetric Fabry-Perot cavity.

    Attributes:
        R_c: Mirror radius of curvature (m).
        g_cav: Stability parameter ``1 - L_cav / R_c``.
        wavelength: Wavelength (m).
        T_in: Input mirror transmission (ppm).
        L_loss: Round-trip scatter and absorption loss (ppm).
    """

    R_c: float = 8e-3
    g_cav: float = -0.9
    wavelength: float = TELECOM_WAVELENGTH
    T_in: float = 20.0
    L_loss: float = 100.0

    def __post_init__(self) -> None:
        if not abs(self.g_cav) < 1:
            raise ValueError("|g_cav| must be below 1")
        if self.R_c <= 0 or self.wavelength <= 0 or self.T_in <= 0 or self.L_loss <= 0:
            raise ValueError("R_c, wavelength, T_in and L_loss must be positive")

    @property
    def length(self) -> float:
        return self.R_c * (1.0 - self.g_cav)

    @property
    def fsr(self) -> float:
        """Free spectral range (Hz)."""
        return SPEED_OF_LIGHT / (2.0 * self.length)


def mode_waist(geom: CavityGeometry) -> float:
    """Gaussian waist ``w0`` of the symmetric cavity (m)."""
    g = geom.g_cav
    w2 = geom.length * geom.wavelength / (2 * math.pi) * math.sqrt((1 + g) / (1 - g))
    if not w2 > 0:
        raise ValueError("concentric limit: mode waist vanishes")
    return math.sqrt(w2)


def finesse(geom: CavityGeometry, T: float) -> float:
    """``2 pi`` over the total round-trip loss ``T + T_in + L``."""
    if T <= 0:
        raise ValueError("transmission must be positive")
    return 2 * math.pi / ((T + geom.T_in + geom.L_loss) * PPM)


def cooperativity(geom: CavityGeometry, T: float) -> float:
    """Single-atom cooperativity ``(6/pi^3) (lambda/w0)^2 F``."""
    w0 = mode_waist(geom)
    return 6 / math.pi**3 * (geom.wavelength / w0) ** 2 * finesse(geom, T)


def cavity_kappa(geom: CavityGeometry, T: float) -> float:
    """Full-width field decay rate ``2 pi FSR / F`` (angular, 1/s)."""
    return 2 * math.pi * geom.fsr / finesse(geom, T)


def coupling_from_geometry(geom: CavityGeometry, gamma: float = GAMMA_3D1) -> float:
    """Vacuum Rabi coupling ``g`` of a two-level atom at the waist (angular, 1/s).

    Uses ``g^2 = 3 lambda^2 c Gamma / (2 pi^2 w0^2 L_cav)`` for the standing-wave antinode.
    """
    w0 = mode_waist(geom)
    return math.sqrt(3 * geom.wavelength**2 * SPEED_OF_LIGHT * gamma / (2 * math.pi**2 * w0**2 * geom.length))


def collection_efficiency(C: float, kappa: float, gamma: float, T: float, L: float) -> float:
    """Two-level collection ``(C/(C+1)) (kappa/(kappa+Gamma)) (T/(T+L))``."""
    if C <= 0 or kappa <= 0 or gamma <= 0 or T <= 0 or L <= 0:
        raise ValueError("all inputs must be positive")
    return (C / (C + 1)) * (kappa / (kappa + gamma)) * (T / (T + L))


def efficiency_at(geom: CavityGeometry, T: float, gamma: float = GAMMA_3D1) -> float:
    """Collection efficiency at output transmission ``T`` (ppm).

    Light leaving through the input mirror is lost to the output port, so the
    competing loss is ``L_loss + T_in``.
    """
    loss = geom.L_loss + geom.T_in
    return collection_efficiency(cooperativity(geom, T), cavity_kappa(geom, T), gamma, T, loss)


@dataclass(frozen=True)
class TransmissionOptimum:
    T: float
    eta: float
    cooperativity: float
    kappa: float


def optimize_transmission(
    geom: CavityGeometry, bounds: tuple[float, float] = (1.0, 1e5), gamma: float = GAMMA_3D1
) -> TransmissionOptimum:
    """Maximize collection over the output transmission by bounded golden-section search.

    The search runs in ``log T`` so both decades of the bracket get equal weight.
    """
    lo, hi = bounds
    if not 0 < lo < hi:
        raise ValueError("need 0 < lower < upper")
    res = minimize_scalar(
        lambda u: -efficiency_at(geom, math.exp(u), gamma),
        bounds=(math.log(lo), math.log(hi)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    t = math.exp(res.x)
    return TransmissionOptimum(t, efficiency_at(geom, t, gamma), cooperativity(geom, t), cavity_kappa(geom, t))


def transmission_sweep(geom: CavityGeometry, T_values: Sequence[float], gamma: float = GAMMA_3D1) -> np.ndarray:
    """Rows ``(T_ppm, C, kappa, eta)``."""
    return np.array(
        [(t, cooperativity(geom, t), cavity_kappa(geom, t), efficiency_at(geom, t, gamma)) for t in T_values]
    )


def modified_branching(f: Sequence[float] = DEFAULT_BRANCHING, C: float = 0.0) -> tuple[float, ...]:
    """Purcell-enhanced branching: the first channel is weighted by ``1 + C``.

    Raises:
        ValueError: If ``f`` does not sum to one or ``C < 0``.
    """
    f = tuple(float(x) for x in (f.values() if isinstance(f, dict) else f))
    if abs(math.fsum(f) - 1.0) > 1e-12 or min(f) < 0:
        raise ValueError("branching fractions must be non-negative and sum to 1")
    if C < 0:
        raise ValueError("cooperativity must be non-negative")
    if C == 0:
        return f
    enhanced = f[0] * (1 + C)
    norm = enhanced + math.fsum(f[1:])
    return (enhanced / norm,) + tuple(x / norm for x in f[1:])


@dataclass(frozen=True)
class AtomAtomSuccess:
    p_aa: float
    attempts_per_success: float


def atom_atom_success(eta_prime: float, eta_det: float) -> AtomAtomSuccess:
    """Two-photon heralding probability ``(eta' eta_det)^2 / 2`` and ``N* = 1/P_aa``.

    Raises:
        ValueError: On inputs outside [0, 1], or ``P_aa = 0`` (infinite attempts).
    """
    for v in (eta_prime, eta_det):
        if not 0.0 <= v <= 1.0:
            raise ValueError("efficiencies must lie in [0, 1]")
    p = 0.5 * (eta_prime * eta_det) ** 2
    if p == 0:
        raise ValueError("infinite attempts: success probability is zero")
    return AtomAtomSuccess(p, 1.0 / p)


@dataclass(frozen=True)
class RateScenario:
    """Array-based entanglement schedule.

    Attributes:
        eta_det: Detection-path efficiency.
        N_a: Atoms in the array.
        T_move: Cooling and transport time per array cycle (s).
        T_init: State initialization per round (s).
        T_depump: Reset time per round (s).
        T_REG: Duration of one entanglement attempt (s).
        kappa_wait_factor: Cavity ring-down wait in units of ``1/kappa``.
    """

    eta_det: float = 0.8
    N_a: int = 204
    T_move: float = 100e-6
    T_init: float = 5.3e-6
    T_depump: float = 6.1e-6
    T_REG: float = 1.752e-6
    kappa_wait_factor: float = 6.454

    def __post_init__(self) -> None:
        if min(self.T_move, self.T_init, self.T_depump, self.T_REG) <= 0:
            raise ValueError("all times must be positive")
        if self.N_a < 1:
            raise ValueError("N_a must be at least 1")
        if not 0 <= self.eta_det <= 1:
            raise ValueError("eta_det must lie in [0, 1]")

    def wait_time(self, kappa: float) -> float:
        return self.kappa_wait_factor / kappa

    def attempt_time(self, kappa: float, t_pi_reg: float, t_pi_raman: float) -> float:
        """``2 (t_pi_REG + t_wait) + t_pi_Raman``."""
        return 2 * (t_pi_reg + self.wait_time(kappa)) + t_pi_raman


@dataclass(frozen=True)
class RateResult:
    rate: float
    best_m: int
    best_rate: float
    rates: tuple[float, ...] = field(repr=False, default=())


def _rates(scenario: RateScenario, p_aa: float, m_max: int) -> np.ndarray:
    i = np.arange(m_max)
    n = scenario.N_a * (1.0 - p_aa) ** i
    cum = np.cumsum(n)
    m = i + 1
    return cum * p_aa / (scenario.T_move + m * (scenario.T_init + scenario.T_depump) + scenario.T_REG * cum)


def bell_pair_rate(scenario: RateScenario, p_aa: float, m: int = 1, m_max: int = 50) -> RateResult:
    """Average Bell-pair rate after ``m`` rounds, with the best ``m`` in ``[1, m_max]``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0 <= p_aa <= 1:
        raise ValueError("p_aa must lie in [0, 1]")
    rates = _rates(scenario, p_aa, max(m, m_max))
    best = int(np.argmax(rates[:m_max]))
    return RateResult(float(rates[m - 1]), best + 1, float(rates[best]), tuple(map(float, rates[:m_max])))


@dataclass
class LinkSimResult:
    """Outcome of the parallel-link simulation.

    Attributes:
        rate: Successes per second over all channels.
        rate_sigma: Poisson standard error of ``rate``.
        successes: Total heralds.
        events: ``(time, channel)`` of every herald in time order.
    """

    rate: float
    rate_sigma: float
    successes: int
    events: list[tuple[float, int]]

    def per_channel(self, n_channels: int) -> np.ndarray:
        counts = np.zeros(n_channels, dtype=int)
        for _, ch in self.events:
            counts[ch] += 1
        return counts


#: Substream key for link simulations.
_LINK_KEY = 11


def parallel_link_sim(
    n_channels: int, per_attempt_success: float, attempt_period: float, duration: float, seed: int = 0
) -> LinkSimResult:
    """Discrete-event simulation of independent channels that attempt once per period.

    Each channel draws geometric waiting times from its own substream and
    feeds heralds into a shared time-ordered event queue.

    Raises:
        ValueError: On ``duration <= 0``, ``n_channels < 1``, a nonpositive
            period, or a success probability outside (0, 1].
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if n_channels < 1:
        raise ValueError("n_channels must be at least 1")
    if attempt_period <= 0:
        raise ValueError("attempt_period must be positive")
    if not 0 < per_attempt_success <= 1:
        raise ValueError("per_attempt_success must lie in (0, 1]")
    rngs = [stream(seed, _LINK_KEY, ch) for ch in range(n_channels)]
    max_attempts = int(math.floor(duration / attempt_period + 1e-9))
    queue: list[tuple[int, int]] = []
    for ch, rng in enumerate(rngs):
        heapq.heappush(queue, (int(rng.geometric(per_attempt_success)), ch))
    events: list[tuple[float, int]] = []
    while queue:
        attempt, ch = heapq.heappop(queue)
        if attempt > max_attempts:
            continue
        events.append((attempt * attempt_period, ch))
        heapq.heappush(queue, (attempt + int(rngs[ch].geometric(per_attempt_success)), ch))
    n = len(events)
    return LinkSimResult(n / duration, math.sqrt(n) / duration, n, events)


def analytic_link_rate(n_channels: int, per_attempt_success: float, attempt_period: float) -> float:
    return n_channels * per_attempt_success / attempt_period


@dataclass(frozen=True)
class CavityReport:
    waist: float
    optimum: TransmissionOptimum
    f_prime: tuple[float, ...]
    eta_prime: float
    success: AtomAtomSuccess
    rate: RateResult
    wait_time: float

    def as_dict(self) -> dict:
        return {
            "waist_m": self.waist,
            "T_opt_ppm": self.optimum.T,
            "eta_opt": self.optimum.eta,
            "cooperativity": self.optimum.cooperativity,
            "kappa_per_s": self.optimum.kappa,
            "t_wait_s": self.wait_time,
            "f_prime": list(self.f_prime),
            "eta_prime": self.eta_prime,
            "P_aa": self.success.p_aa,
            "N_star": self.success.attempts_per_success,
            "R_bp_m1": self.rate.rate,
            "R_bp_best": self.rate.best_rate,
            "best_m": self.rate.best_m,
        }


def cavity_report(geom: CavityGeometry | None = None, scenario: RateScenario | None = None) -> CavityReport:
    """Chain waist, optimum transmission, branching, success probability and rate."""
    geom = geom or CavityGeometry()
    scenario = scenario or RateScenario()
    opt = optimize_transmission(geom)
    fp = modified_branching(DEFAULT_BRANCHING, opt.cooperativity)
    eta_p = fp[0] * opt.eta
    succ = atom_atom_success(eta_p, scenario.eta_det)
    rate = bell_pair_rate(scenario, succ.p_aa, 1)
    return CavityReport(mode_waist(geom), opt, fp, eta_p, succ, rate, scenario.wait_time(opt.kappa))
