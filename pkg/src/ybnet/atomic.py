"""Level scheme, decay branching and Zeeman arithmetic for the 171Yb qubit.

All frequencies are ordinary frequencies in Hz. Conversion to angular units
happens only inside propagators.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

#: Bohr magneton in ordinary frequency units (Hz per gauss).
MU_B_HZ_PER_GAUSS = 1.399624e6

#: Lifetime of the 3D1 state (s).
LIFETIME_3D1 = 330e-9

#: Telecom transition wavelength 3P0 <-> 3D1 (m).
TELECOM_WAVELENGTH = 1389e-9

#: Atomic mass of 171Yb (kg).
YB171_MASS = 170.9363258 * 1.66053906660e-27


class DecayChannel(str, enum.Enum):
    """Decay target of the 3D1 state."""

    P0 = "3P0"
    """Back into the qubit manifold, with a time-bin photon."""
    P1 = "3P1"
    """Cascade through 3P1 to the ground state (no time-bin photon)."""
    P2 = "3P2"
    """Shelved in 3P2, effectively lost."""


DEFAULT_BRANCHING: dict[DecayChannel, float] = {
    DecayChannel.P0: 0.64,
    DecayChannel.P1: 0.35,
    DecayChannel.P2: 0.01,
}

_DEFAULT_STATES: tuple[tuple[str, float, float], ...] = (
    ("1S0 g+", 0.5, 0.5),
    ("1S0 g-", 0.5, -0.5),
    ("3P0 up", 0.5, 0.5),
    ("3P0 down", 0.5, -0.5),
    ("3P1", 1.5, 0.0),
    ("3P2", 2.5, 0.0),
    ("3D1 -3/2", 1.5, -1.5),
    ("3D1 -1/2", 1.5, -0.5),
    ("3D1 +1/2", 1.5, 0.5),
    ("3D1 +3/2", 1.5, 1.5),
)


@dataclass(frozen=True)
class LevelScheme:
    """Immutable level scheme with the 3D1 decay branching.

    Attributes:
        states: Tuples of (label, F, m_F).
        lifetime_3D1: Radiative lifetime of 3D1 in seconds.
        branching: Probability of each decay channel.
    """

    states: tuple[tuple[str, float, float], ...] = _DEFAULT_STATES
    lifetime_3D1: float = LIFETIME_3D1
    branching: Mapping[DecayChannel, float] = field(
        default_factory=lambda: dict(DEFAULT_BRANCHING)
    )

    def __post_init__(self) -> None:
        br = {DecayChannel(k): float(v) for k, v in self.branching.items()}
        for ch in DecayChannel:
            br.setdefault(ch, 0.0)
        for ch, p in br.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"branching probability for {ch.value} outside [0, 1]: {p}")
        total = sum(br.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"branching probabilities sum to {total!r}, not 1")
        if not self.lifetime_3D1 > 0:
            raise ValueError("lifetime_3D1 must be positive")
        object.__setattr__(self, "branching", br)
        object.__setattr__(self, "states", tuple(tuple(s) for s in self.states))

    @property
    def decay_rate(self) -> float:
        """Total 3D1 decay rate 1/tau in 1/s."""
        return 1.0 / self.lifetime_3D1

    def probabilities(self) -> np.ndarray:
        """Branching probabilities ordered as ``list(DecayChannel)``."""
        return np.array([self.branching[ch] for ch in DecayChannel])


@dataclass(frozen=True)
class MagneticField:
    """Bias field and Lande factor of the addressed manifold."""

    B: float
    g_factor: float = 1.0 / 3.0

    def __post_init__(self) -> None:
        if not self.B >= 0:
            raise ValueError(f"magnetic field must be non-negative, got {self.B}")


def zeeman_splitting(field: MagneticField) -> float:
    """Splitting between adjacent m_F sublevels in Hz (ordinary)."""
    return field.g_factor * MU_B_HZ_PER_GAUSS * field.B


def sample_decay(scheme: LevelScheme, rng: np.random.Generator) -> DecayChannel:
    """Draw one decay channel from the scheme's branching fractions."""
    return sample_decays(scheme, rng, 1)[0]


def sample_decays(scheme: LevelScheme, rng: np.random.Generator, size: int) -> list[DecayChannel]:
    """Vectorized version of :func:`sample_decay`.

    Channels with zero probability are never returned.
    """
    idx = decay_indices(scheme.probabilities(), rng.random(size))
    channels = list(DecayChannel)
    return [channels[i] for i in idx]


def decay_indices(probabilities: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniform draws to channel indices by inverse CDF."""
    cdf = np.cumsum(probabilities)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    # guard against landing on a zero-width trailing bin
    return np.minimum(idx, len(probabilities) - 1)
