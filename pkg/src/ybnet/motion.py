"""Bell-state fidelity loss from photon recoil entangling with thermal motion.

Absorption of the excitation photon and emission of the collected photon
kick the atom by ``hbar * dk``. Because the early and late components receive
the kick at different times, the two branches of the Bell state carry
motional states that overlap imperfectly once the trap evolves for ``dt``.
Each trap axis is evaluated in a truncated Fock space.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.constants import hbar, k as k_boltzmann
from scipy.linalg import expm

from .atomic import TELECOM_WAVELENGTH, YB171_MASS
from .lindblad import DensityMatrix

TWO_PI = 2.0 * math.pi

#: Largest tail mass tolerated beyond the Fock cutoff.
TAIL_TOLERANCE = 1e-6

#: Default Fock cutoff. A 3 kHz axis at 2.33 uK needs about 225 levels.
DEFAULT_N_MAX = 400


@dataclass(frozen=True)
class TrapSpec:
    """Harmonic tweezer trap.

    Attributes:
        omega_radial: Radial trap frequency (Hz, ordinary).
        omega_axial: Axial trap frequency (Hz, ordinary).
        temperature: Atom temperature (K).
        mass: Atomic mass (kg).
    """

    omega_radial: float = 32e3
    omega_axial: float = 3e3
    temperature: float = 2.33e-6
    mass: float = YB171_MASS

    def __post_init__(self) -> None:
        if self.omega_radial <= 0 or self.omega_axial <= 0:
            raise ValueError("trap frequencies must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.mass <= 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class RecoilKick:
    """Net photon momentum transfer per axis (1/m)."""

    delta_k_radial: float
    delta_k_axial: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta_k_radial) and math.isfinite(self.delta_k_axial)):
            raise ValueError("recoil components must be finite")

    @classmethod
    def from_geometry(
        cls,
        wavelength: float = TELECOM_WAVELENGTH,
        absorption: Sequence[float] = (1.0, 0.0),
        emission: Sequence[float] = (0.0, 1.0),
    ) -> "RecoilKick":
        """Kick from absorption and emission directions.

        Args:
            wavelength: Photon wavelength (m).
            absorption: Direction cosines (radial, axial) of the absorbed photon.
                The default excitation beam runs along the field, which lies in
                the radial plane.
            emission: Direction cosines (radial, axial) of the collected photon.
                The default collection runs through the objective, along the
                tweezer axis.
        """
        k = TWO_PI / wavelength
        dk = k * (np.asarray(absorption, dtype=float) - np.asarray(emission, dtype=float))
        return cls(float(abs(dk[0])), float(abs(dk[1])))


def mean_occupation(omega: float, temperature: float) -> float:
    """Bose occupation of a mode at ordinary frequency ``omega``."""
    if temperature == 0:
        return 0.0
    x = hbar * TWO_PI * omega / (k_boltzmann * temperature)
    return 1.0 / math.expm1(x)


def temperature_for_occupation(omega: float, nbar: float) -> float:
    """Temperature giving mean occupation ``nbar``."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    if nbar == 0:
        return 0.0
    return hbar * TWO_PI * omega / (k_boltzmann * math.log1p(1.0 / nbar))


def thermal_populations(omega: float, temperature: float, n_max: int) -> np.ndarray:
    """Boltzmann populations of levels ``0..n_max`` (normalized over the full ladder).

    Raises:
        ValueError: If more than ``TAIL_TOLERANCE`` lies above ``n_max``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    p = np.zeros(n_max + 1)
    if temperature == 0:
        p[0] = 1.0
        return p
    q = math.exp(-hbar * TWO_PI * omega / (k_boltzmann * temperature))
    tail = q ** (n_max + 1)
    if tail >= TAIL_TOLERANCE:
        raise ValueError(f"truncation insufficient: tail mass {tail:.3g} above n_max={n_max}")
    n = np.arange(n_max + 1)
    p = (1.0 - q) * q**n
    return p


def thermal_state(omega: float, temperature: float, n_max: int) -> DensityMatrix:
    """Thermal motional state in the Fock basis ``|0>..|n_max>``."""
    p = thermal_populations(omega, temperature, n_max)
    basis = tuple(f"n={i}" for i in range(n_max + 1))
    return DensityMatrix(basis, np.diag(p / p.sum()))


def lamb_dicke(delta_k: float, omega: float, mass: float = YB171_MASS) -> float:
    """Lamb-Dicke parameter ``dk * sqrt(hbar / (2 m w))``."""
    return delta_k * math.sqrt(hbar / (2.0 * mass * TWO_PI * omega))


@functools.lru_cache(maxsize=16)
def _displacement(eta: float, dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    d = expm(1j * eta * (a + a.T))
    d.setflags(write=False)
    return d


def axis_coherence(eta: float, omega: float, temperature: float, delta_t: float, n_max: int) -> float:
    """Magnitude of the early/late motional overlap on one axis.

    Evaluates ``|Tr[D rho U^dag D^dag U]|`` with ``D = exp(i eta (a + a^dag))``
    and ``U = exp(-i H dt)``. The displacement is built with headroom above
    ``n_max`` so truncation does not distort the populated levels.
    """
    if eta == 0 or delta_t == 0:
        # D^dag D = 1 exactly; the truncated matrices would leave a ~1e-11 residue
        return 1.0
    p = thermal_populations(omega, temperature, n_max)
    pad = int(math.ceil(12 * abs(eta) * math.sqrt(n_max + 1) + 40))
    dim = n_max + 1 + pad
    d = _displacement(eta, dim)
    phase = np.exp(-1j * TWO_PI * omega * delta_t * np.arange(dim))
    # U^dag D^dag U in the Fock basis
    evolved = (phase.conj()[:, None] * d.conj().T) * phase[None, :]
    k = n_max + 1
    diag = np.einsum("ij,ji->i", d[:k], evolved[:, :k])
    return float(abs(np.sum(p * diag)))


def motional_fidelity_factor(
    trap: TrapSpec, kick: RecoilKick, delta_t: float, n_max: int = DEFAULT_N_MAX
) -> float:
    """Bell fidelity retained after motional dephasing, ``(1 + c_r c_a) / 2``.

    Args:
        trap: Trap frequencies and temperature.
        kick: Net recoil per axis.
        delta_t: Early/late separation (s).
        n_max: Fock cutoff for the thermal state on each axis.
    """
    if kick.delta_k_radial == 0 and kick.delta_k_axial == 0:
        return 1.0
    c_r = axis_coherence(
        lamb_dicke(kick.delta_k_radial, trap.omega_radial, trap.mass), trap.omega_radial, trap.temperature, delta_t, n_max
    )
    c_a = axis_coherence(
        lamb_dicke(kick.delta_k_axial, trap.omega_axial, trap.mass), trap.omega_axial, trap.temperature, delta_t, n_max
    )
    return float(min(1.0, 0.5 * (1.0 + c_r * c_a)))


@dataclass
class FidelityCurves:
    """Fidelity versus separation, one row per temperature."""

    delta_t: np.ndarray
    temperatures: np.ndarray
    fidelity: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(temp), float(self.fidelity[i, j]))
            for i, temp in enumerate(self.temperatures)
            for j, t in enumerate(self.delta_t)
        ]


def fidelity_vs_delay_curve(
    trap: TrapSpec,
    kick: RecoilKick,
    delta_t_range: Sequence[float],
    temperatures: Sequence[float],
    n_max: int = DEFAULT_N_MAX,
) -> FidelityCurves:
    """Evaluate :func:`motional_fidelity_factor` over separations and temperatures."""
    dts = np.asarray(delta_t_range, dtype=float)
    temps = np.asarray(temperatures, dtype=float)
    if dts.size == 0 or temps.size == 0:
        raise ValueError("ranges must be non-empty")
    if np.any(dts < 0):
        raise ValueError("delta_t must be non-negative")
    out = np.empty((temps.size, dts.size))
    for i, temp in enumerate(temps):
        t = TrapSpec(trap.omega_radial, trap.omega_axial, float(temp), trap.mass)
        for j, dt in enumerate(dts):
            out[i, j] = motional_fidelity_factor(t, kick, float(dt), n_max)
    return FidelityCurves(dts, temps, out)
