"""Readout correction of atom-photon correlations and parity fringes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..tomography import (
    BellEstimate,
    TomographyCounts,
    bell_fidelity_bound,
    parity_fit,
)


@dataclass(frozen=True)
class ReadoutModel:
    """Atom-state readout confusion; the photon time bin is read out ideally.

    Attributes:
        bright_given_up: Probability that an atom in ``up`` reads bright.
        dark_given_down: Probability that an atom in ``down`` reads dark.
    """

    bright_given_up: float = 1.0
    dark_given_down: float = 1.0

    def __post_init__(self) -> None:
        for v in (self.bright_given_up, self.dark_given_down):
            if not 0.0 <= v <= 1.0:
                raise ValueError("readout probabilities must lie in [0, 1]")
        if self.contrast <= 0:
            raise ValueError("readout carries no information (a + b <= 1)")

    @classmethod
    def from_pulse_fidelities(
        cls,
        clock_pi: float,
        rf_pi: float = 0.99,
        bright_fidelity: float = 0.97,
        dark_fidelity: float = 0.996,
    ) -> "ReadoutModel":
        """Two-round shelving readout: clock pi, ground-state RF pi, clock pi, image.

        The first clock pulse shelves ``up`` into ``gm``; the RF pulse moves it to
        ``gp`` so the second clock pulse only acts on what the first one missed.
        """
        miss = 1.0 - clock_pi
        shelved = clock_pi * (rf_pi + (1.0 - rf_pi) * miss) + miss * clock_pi
        a = shelved * bright_fidelity + (1.0 - shelved) * (1.0 - dark_fidelity)
        return cls(a, dark_fidelity)

    @property
    def matrix(self) -> np.ndarray:
        """Rows: reported (up, down); columns: true (up, down)."""
        a, b = self.bright_given_up, self.dark_given_down
        return np.array([[a, 1.0 - b], [1.0 - a, b]])

    @property
    def contrast(self) -> float:
        """Scale of the atom spin expectation, ``a + b - 1``."""
        return self.bright_given_up + self.dark_given_down - 1.0

    @property
    def bias(self) -> float:
        """Offset of the atom spin expectation, ``a - b``."""
        return self.bright_given_up - self.dark_given_down


def apply_readout_zz(p_true: Sequence[float], readout: ReadoutModel) -> np.ndarray:
    """Reported (upE, upL, downE, downL) probabilities for true ones."""
    p = np.asarray(p_true, dtype=float).reshape(2, 2)  # [atom, bin]
    return (readout.matrix @ p).reshape(4)


def invert_readout_zz(p_meas: Sequence[float], readout: ReadoutModel) -> np.ndarray:
    """Invert the atom confusion in each time bin, clipped to a valid distribution."""
    p = np.asarray(p_meas, dtype=float).reshape(2, 2)
    q = np.clip(np.linalg.solve(readout.matrix, p), 0.0, None).reshape(4)
    return q / q.sum()


def correct_bell_correlations(
    counts: TomographyCounts, readout: ReadoutModel, photon_parity: float = 0.0
) -> tuple[TomographyCounts, BellEstimate]:
    """Undo atom readout errors in ZZ and at every XX phase point, then refit.

    In XX the reported spin is ``s_meas = c s_true + d`` on average, with
    contrast ``c = a + b - 1`` and bias ``d = a - b``. The parity therefore
    corrects as ``(P_meas - d <photon>) / c``, where ``<photon>`` is the
    interferometer-port imbalance (zero for balanced ports).

    Returns:
        Corrected counts (same totals, non-integer) and the refit estimate.
    """
    n_zz = counts.zz_total
    p_corr = invert_readout_zz(counts.zz_probabilities(), readout)
    c, d = readout.contrast, readout.bias
    fringe = []
    points = []
    for phase, (plus, minus) in counts.xx_fringe:
        n = plus + minus
        if n <= 0:
            continue
        p_meas = (plus - minus) / n
        p_true = float(np.clip((p_meas - d * photon_parity) / c, -1.0, 1.0))
        fringe.append((phase, (0.5 * n * (1 + p_true), 0.5 * n * (1 - p_true))))
        sigma = math.sqrt(max(1.0 - p_meas * p_meas, 1.0 / n) / n) / c
        points.append((float(phase), p_true, sigma))
    corrected = TomographyCounts(tuple(p_corr * n_zz), fringe)
    fit = parity_fit(points)
    return corrected, bell_fidelity_bound(corrected, fit)


def noisy_bell_state(zz_error: float, coherence: float) -> np.ndarray:
    """Bell-diagonal state in (upE, upL, downE, downL) with fidelity ``(1 - zz_error + coherence)/2``."""
    if not 0.0 <= zz_error <= 1.0:
        raise ValueError("zz_error must lie in [0, 1]")
    q = 1.0 - zz_error
    if not 0.0 <= coherence <= q:
        raise ValueError("coherence must lie in [0, 1 - zz_error]")
    rho = np.diag([q / 2, zz_error / 2, zz_error / 2, q / 2]).astype(complex)
    rho[0, 3] = rho[3, 0] = coherence / 2
    return rho


def simulate_raw_counts(
    rho: np.ndarray,
    readout: ReadoutModel,
    shots_zz: int,
    phases: Sequence[float],
    shots_per_phase: int,
    rng: np.random.Generator,
) -> TomographyCounts:
    """Sample ZZ and XX data of ``rho`` through the atom readout model."""
    pz = apply_readout_zz(np.real(np.diag(rho)), readout)
    zz = rng.multinomial(shots_zz, np.clip(pz, 0, None) / pz.sum())
    ph = np.asarray(phases, dtype=float)
    parity_true = 2.0 * np.real(np.exp(1j * ph) * (rho[0, 3] + rho[1, 2]))
    photon = 2.0 * np.real(rho[0, 1] + rho[2, 3])
    parity = np.clip(readout.contrast * parity_true + readout.bias * photon, -1.0, 1.0)
    plus = rng.binomial(shots_per_phase, 0.5 * (1 + parity))
    fringe = [(float(p), (int(k), int(shots_per_phase - k))) for p, k in zip(ph, plus)]
    return TomographyCounts(tuple(int(c) for c in zz), fringe)
