"""Bell-state fidelity with bounds, parity fringe fits, window selection and error budget.

The target state is ``(|up,E> + e^{i phi} |down,L>)/sqrt(2)``. From ZZ
populations and the XX parity fringe amplitude ``A`` the fidelity is
``F = (p_upE + p_downL + A) / 2``, uncertain by ``+-sqrt(p_upL p_downE)``
because the fringe amplitude also contains the ``|up,L><down,E|`` coherence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

ZZ_LABELS = ("upE", "upL", "downE", "downL")


@dataclass
class TomographyCounts:
    """Raw counts for a Bell measurement.

    Attributes:
        zz: Counts for (upE, upL, downE, downL).
        xx_fringe: ``(atom_phase, (plus, minus))`` per phase point.
    """

    zz: tuple[float, float, float, float]
    xx_fringe: list[tuple[float, tuple[float, float]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.zz = tuple(float(c) for c in self.zz)
        if len(self.zz) != 4:
            raise ValueError("zz needs four counts (upE, upL, downE, downL)")
        if min(self.zz) < 0 or any(min(pm) < 0 for _, pm in self.xx_fringe):
            raise ValueError("counts must be non-negative")

    @property
    def zz_total(self) -> float:
        return float(sum(self.zz))

    def zz_probabilities(self) -> np.ndarray:
        if self.zz_total <= 0:
            raise ValueError("zero ZZ total")
        return np.asarray(self.zz) / self.zz_total

    def parity_points(self) -> list[tuple[float, float, float]]:
        """``(phase, parity, sigma)`` with binomial errors per phase point."""
        out = []
        for phase, (plus, minus) in self.xx_fringe:
            n = plus + minus
            if n <= 0:
                continue
            p = (plus - minus) / n
            sigma = math.sqrt(max(1.0 - p * p, 1.0 / n) / n)
            out.append((float(phase), float(p), sigma))
        return out


@dataclass
class ParityFit:
    """Sinusoid fit ``A cos(phase - theta)``."""

    amplitude: float
    theta: float
    amplitude_err: float
    theta_err: float
    chi2: float = 0.0

    def __iter__(self):
        return iter((self.amplitude, self.theta))


@dataclass
class BellEstimate:
    """Fidelity estimate with its rigorous bound and statistical error."""

    fidelity: float
    bound_halfwidth: float
    statistical_sigma: float
    fringe_amplitude: float
    fringe_phase: float

    @property
    def lower(self) -> float:
        return max(0.0, self.fidelity - self.bound_halfwidth)

    @property
    def upper(self) -> float:
        return min(1.0, self.fidelity + self.bound_halfwidth)

    def as_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "bound": self.bound_halfwidth,
            "sigma": self.statistical_sigma,
            "A": self.fringe_amplitude,
            "theta": self.fringe_phase,
        }


def parity_fit(fringe: Sequence[tuple[float, float, float]]) -> ParityFit:
    """Weighted least-squares fit of ``A cos(phase - theta)``.

    The model is linear in ``(A cos theta, A sin theta)``, so the fit is a
    single weighted linear solve. ``A >= 0`` by choice of ``theta``.

    Args:
        fringe: ``(phase, parity, sigma)`` points.

    Raises:
        ValueError: Fewer than four distinct phases, a span below pi, or a
            rank-deficient design.
    """
    pts = np.asarray(list(fringe), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4 or pts.shape[1] != 3:
        raise ValueError("need at least four (phase, parity, sigma) points")
    phi, y, sig = pts.T
    wrapped = np.unique(np.round(np.mod(phi, 2 * math.pi), 12))
    if wrapped.size < 4:
        raise ValueError("need at least four distinct phases")
    gaps = np.diff(np.concatenate([wrapped, [wrapped[0] + 2 * math.pi]]))
    if 2 * math.pi - gaps.max() < math.pi - 1e-9:
        raise ValueError("phases must span at least pi")
    if np.any(sig <= 0):
        raise ValueError("sigmas must be positive")
    w = 1.0 / sig
    X = np.column_stack([np.cos(phi), np.sin(phi)])
    Xw = X * w[:, None]
    if np.linalg.matrix_rank(Xw) < 2:
        raise ValueError("rank-deficient design")
    coef, *_ = np.linalg.lstsq(Xw, y * w, rcond=None)
    cov = np.linalg.inv(Xw.T @ Xw)
    c, s = coef
    a = math.hypot(c, s)
    theta = math.atan2(s, c)
    if a > 0:
        grad_a = np.array([c, s]) / a
        grad_t = np.array([-s, c]) / (a * a)
        a_err = math.sqrt(max(grad_a @ cov @ grad_a, 0.0))
        t_err = math.sqrt(max(grad_t @ cov @ grad_t, 0.0))
    else:
        a_err = math.sqrt(0.5 * np.trace(cov))
        t_err = math.pi
    chi2 = float(np.sum(((X @ coef - y) * w) ** 2))
    return ParityFit(a, theta, a_err, t_err, chi2)


def bell_fidelity_bound(counts: TomographyCounts, fit: ParityFit | None = None) -> BellEstimate:
    """Fidelity ``(p_upE + p_downL + A)/2`` with bound ``sqrt(p_upL p_downE)``.

    Args:
        counts: ZZ counts and XX fringe.
        fit: Optional precomputed fringe fit. Fitted from ``counts`` otherwise.

    Raises:
        ValueError: On zero ZZ total.
    """
    p = counts.zz_probabilities()
    if fit is None:
        fit = parity_fit(counts.parity_points())
    a = min(fit.amplitude, 1.0)
    q = p[0] + p[3]
    fid = 0.5 * (q + a)
    bound = math.sqrt(p[1] * p[2])
    n = counts.zz_total
    sigma = 0.5 * math.sqrt(q * (1.0 - q) / n + fit.amplitude_err**2)
    return BellEstimate(float(min(max(fid, 0.0), 1.0)), bound, sigma, a, fit.theta)


def true_bell_fidelity(rho: np.ndarray) -> float:
    """Fidelity maximized over the relative phase, basis (upE, upL, downE, downL)."""
    rho = np.asarray(rho)
    return float(0.5 * (rho[0, 0].real + rho[3, 3].real) + abs(rho[0, 3]))


def parity_expectation(rho: np.ndarray, phase: np.ndarray | float) -> np.ndarray:
    """``<X_phase (x) X>`` on the atom-photon state, equal to ``2 Re(e^{i phase}(rho_14 + rho_23))``."""
    rho = np.asarray(rho)
    return 2.0 * np.real(np.exp(1j * np.asarray(phase)) * (rho[0, 3] + rho[1, 2]))


def simulate_counts(
    rho: np.ndarray,
    shots_zz: int,
    phases: Sequence[float],
    shots_per_phase: int,
    rng: np.random.Generator,
) -> TomographyCounts:
    """Sample ideal ZZ and XX measurements of ``rho``."""
    pz = np.clip(np.real(np.diag(rho)), 0, None)
    zz = rng.multinomial(shots_zz, pz / pz.sum())
    par = np.clip(parity_expectation(rho, np.asarray(phases)), -1, 1)
    plus = rng.binomial(shots_per_phase, 0.5 * (1 + par))
    fringe = [(float(ph), (int(pl), int(shots_per_phase - pl))) for ph, pl in zip(phases, plus)]
    return TomographyCounts(tuple(int(c) for c in zz), fringe)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the Ginibre ensemble (Hilbert-Schmidt measure for full rank)."""
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@dataclass
class ArrivalFit:
    """Truncated-exponential fit of photon arrival times."""

    lifetime: float
    lifetime_err: float
    window: float
    log_likelihood_ratio: float
    is_exponential: bool
    n: int


#: Threshold on 2 * (log L_exp - log L_uniform); the 99.9% point of chi2(1).
LR_THRESHOLD = 10.828


def _trunc_exp_loglike(tau: float, t: np.ndarray, window: float) -> float:
    return float(-np.sum(t) / tau - t.size * (math.log(tau) + math.log(-math.expm1(-window / tau))))


def arrival_histogram_fit(
    time_tags: Sequence[float], bin_width: float, window: float | None = None, min_tags: int = 1000
) -> ArrivalFit:
    """Maximum-likelihood lifetime from arrival times inside ``[0, window)``.

    The density is ``exp(-t/tau) / (tau (1 - exp(-W/tau)))``. A likelihood
    ratio against the uniform density flags data that are not exponential.

    Args:
        time_tags: Arrival times after the excitation (s).
        bin_width: Histogram resolution; data confined to one bin are rejected.
        window: Analysis window. Defaults to the last tag rounded up to a bin.
        min_tags: Minimum number of tags required.

    Raises:
        ValueError: Empty input, too few tags, or a single-bin histogram.
    """
    t = np.asarray(time_tags, dtype=float)
    if t.size == 0:
        raise ValueError("no time tags")
    if t.size < min_tags:
        raise ValueError(f"need at least {min_tags} time tags, got {t.size}")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if np.any(t < 0):
        raise ValueError("time tags must be non-negative")
    if window is None:
        window = math.ceil(t.max() / bin_width + 1e-12) * bin_width
    t = t[t < window]
    bins = np.floor(t / bin_width).astype(int)
    if np.unique(bins).size < 2:
        raise ValueError("degenerate histogram: all tags in a single bin")
    m = float(t.mean())

    def score(tau: float) -> float:
        # mean of the truncated exponential minus the sample mean
        x = window / tau
        return tau - window / math.expm1(x) - m if x < 700 else tau - m

    ll_uniform = -t.size * math.log(window)
    if m >= window / 2:
        tau = math.inf
        ll_exp = ll_uniform
    else:
        lo, hi = window * 1e-6, window * 1e6
        tau = brentq(score, lo, hi, xtol=1e-15 * window, rtol=1e-13)
        ll_exp = _trunc_exp_loglike(tau, t, window)
    lr = 2.0 * (ll_exp - ll_uniform)
    if math.isfinite(tau):
        h = tau * 1e-4
        d2 = (
            _trunc_exp_loglike(tau + h, t, window) - 2 * _trunc_exp_loglike(tau, t, window) + _trunc_exp_loglike(tau - h, t, window)
        ) / (h * h)
        err = math.sqrt(-1.0 / d2) if d2 < 0 else math.inf
    else:
        err = math.inf
    return ArrivalFit(tau, err, window, lr, bool(lr > LR_THRESHOLD), int(t.size))


@dataclass
class WindowChoice:
    """Analysis window that maximizes the fitted parity amplitude."""

    t0: float
    width: float
    amplitude: float
    n_events: int


def window_amplitude(phases: np.ndarray, parities: np.ndarray) -> float:
    """Fringe amplitude of ``+-1`` outcomes grouped by phase."""
    pts = []
    for ph in np.unique(phases):
        sel = parities[phases == ph]
        n = sel.size
        if n == 0:
            continue
        p = float(sel.mean())
        pts.append((float(ph), p, math.sqrt(max(1 - p * p, 1.0 / n) / n)))
    return parity_fit(pts).amplitude


def optimize_window(
    time_tags: Sequence[float],
    phases: Sequence[float],
    parities: Sequence[int],
    grid_step: float,
    min_events: int,
    widths: Sequence[float] | None = None,
    t_max: float | None = None,
    tie_tol: float = 1e-9,
) -> WindowChoice:
    """Pick ``(t0, width)`` maximizing parity visibility under a count constraint.

    Windows are ``[t0, t0 + width)`` on a grid of ``grid_step``. Amplitudes
    within ``tie_tol`` of each other are ties, resolved by earliest ``t0``
    and then smallest width.

    Raises:
        ValueError: If no window holds ``min_events`` events.
    """
    t = np.asarray(time_tags, dtype=float)
    ph = np.asarray(phases, dtype=float)
    par = np.asarray(parities, dtype=float)
    if not (t.size == ph.size == par.size):
        raise ValueError("time_tags, phases and parities must have equal length")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if t_max is None:
        t_max = float(t.max()) + grid_step if t.size else grid_step
    n_grid = int(math.floor(t_max / grid_step + 1e-9))
    if widths is None:
        widths = [k * grid_step for k in range(1, n_grid + 1)]
    best: WindowChoice | None = None
    for i in range(n_grid):
        t0 = i * grid_step
        for w in sorted(widths):
            if t0 + w > t_max + 1e-12 * t_max:
                break
            sel = (t >= t0) & (t < t0 + w)
            n = int(sel.sum())
            if n < min_events:
                continue
            try:
                a = window_amplitude(ph[sel], par[sel])
            except ValueError:
                continue
            if best is None or a > best.amplitude + tie_tol:
                best = WindowChoice(t0, w, a, n)
    if best is None:
        raise ValueError("no feasible window")
    return best


@dataclass
class ErrorBudget:
    """Infidelity contributions and their total."""

    entries: list[tuple[str, float, float]]
    total: float
    uncertainty: float

    def as_dict(self) -> dict:
        return {
            "entries": [{"label": l, "contribution": c, "uncertainty": u} for l, c, u in self.entries],
            "total": self.total,
            "uncertainty": self.uncertainty,
        }


def assemble_error_budget(components: Iterable[tuple[str, float, float]]) -> ErrorBudget:
    """Linear sum of contributions, quadrature sum of uncertainties.

    Raises:
        ValueError: On a negative contribution or uncertainty.
    """
    entries = []
    for label, c, u in components:
        if c < 0 or u < 0:
            raise ValueError(f"negative entry for {label!r}")
        entries.append((str(label), float(c), float(u)))
    total = math.fsum(c for _, c, _ in entries)
    unc = math.sqrt(math.fsum(u * u for _, _, u in entries))
    return ErrorBudget(entries, total, unc)


def dark_count_infidelity(snr_zz_db: float, snr_xx_db: float) -> float:
    """Infidelity from false heralds that carry no atom correlation.

    A fraction ``f = 1/(1 + SNR)`` of heralds are dark clicks, modeled as the
    maximally mixed state. In ZZ this pulls ``p_upE + p_downL`` from 1 to
    ``1 - f_z/2``; in XX it scales the fringe amplitude by ``1 - f_x``.
    With ``F = (p_upE + p_downL + A)/2`` the loss is ``f_z/4 + f_x/2``.
    """
    f_z = 1.0 / (1.0 + 10 ** (snr_zz_db / 10))
    f_x = 1.0 / (1.0 + 10 ** (snr_xx_db / 10))
    return 0.25 * f_z + 0.5 * f_x


def visibility_infidelity(visibility: float) -> float:
    """Infidelity from ``A_meas = V A_true`` at ``A_true = 1``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return 0.5 * (1.0 - visibility)
