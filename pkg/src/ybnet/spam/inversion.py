"""Numerical inversion of sequence-graph models and Monte Carlo uncertainties."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from ..rng import stream
from .dag import DagModel, conditional_probability

log = logging.getLogger(__name__)

#: Substream key separating SPAM draws from other consumers of the seed.
_STREAM_KEY = 5

#: Residual norm above which an inversion is flagged.
RESIDUAL_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Target:
    """Measured conditional probability of one sequence.

    Attributes:
        dag: Name of the graph model.
        query: ``"event | condition"`` over outcome tokens.
        value: Measured probability.
        count: Events satisfying the query, for posterior sampling.
        total: Events satisfying the condition.
    """

    dag: str
    query: str
    value: float
    count: int | None = None
    total: int | None = None

    @classmethod
    def from_counts(cls, dag: str, query: str, count: int, total: int) -> "Target":
        if total <= 0 or not 0 <= count <= total:
            raise ValueError("need 0 <= count <= total and total > 0")
        return cls(dag, query, count / total, int(count), int(total))


def targets_from_dataset(data: Mapping[str, Mapping[str, Mapping[str, int]]]) -> list[Target]:
    """Targets from ``{dag: {query: {count, total}}}``."""
    return [
        Target.from_counts(dag, query, int(c["count"]), int(c["total"]))
        for dag, queries in sorted(data.items())
        for query, c in sorted(queries.items())
    ]


@dataclass
class SpamResult:
    """Corrected values per unknown.

    Attributes:
        mean: Point estimate or Monte Carlo mean per unknown.
        std: Monte Carlo standard deviation per unknown (zero for a point estimate).
        residual: Residual norm of the (mean) solve.
        flagged: True if any solve exceeded the residual threshold.
        draws: Number of Monte Carlo draws, zero for a point estimate.
    """

    mean: dict[str, float]
    std: dict[str, float]
    residual: float
    flagged: bool = False
    draws: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            **{k: {"mean": self.mean[k], "std": self.std[k]} for k in self.mean},
            "residual": self.residual,
            "flagged": self.flagged,
            "draws": self.draws,
        }


def _as_mapping(dags: Sequence[DagModel] | Mapping[str, DagModel]) -> dict[str, DagModel]:
    if isinstance(dags, Mapping):
        return dict(dags)
    return {d.name: d for d in dags}


class _System:
    """Targets, unknowns and fixed values bound into a residual function."""

    def __init__(self, dags, targets, unknowns, fixed):
        self.dags = _as_mapping(dags)
        self.targets = list(targets)
        self.unknowns = tuple(unknowns)
        if not self.unknowns:
            raise ValueError("no unknowns given")
        if len(self.targets) < len(self.unknowns):
            raise ValueError(
                f"underconstrained: {len(self.targets)} target(s) for {len(self.unknowns)} unknown(s)"
            )
        used = set()
        for t in self.targets:
            if t.dag not in self.dags:
                raise KeyError(f"target refers to unknown graph {t.dag!r}")
            used.update(self.dags[t.dag].parameter_names)
        for u in self.unknowns:
            if u not in used:
                raise ValueError(f"unknown {u!r} does not enter any target")
        base: dict[str, float] = {}
        for name in sorted({t.dag for t in self.targets}):
            base.update(self.dags[name].fixed_values())
        base.update({k: float(v) for k, v in dict(fixed or {}).items()})
        missing = sorted(p for p in used if p not in base and p not in self.unknowns)
        if missing:
            raise KeyError(f"no value for parameter(s): {', '.join(missing)}")
        self.base = base

    def predict(self, x: np.ndarray, fixed: Mapping[str, float] | None = None) -> np.ndarray:
        values = dict(self.base if fixed is None else fixed)
        values.update(zip(self.unknowns, x))
        cache: dict[str, dict] = {}
        out = np.empty(len(self.targets))
        for i, t in enumerate(self.targets):
            if t.dag not in cache:
                cache[t.dag] = self.dags[t.dag].evaluate(values)
            out[i] = conditional_probability(cache[t.dag], t.query)
        return out

    def solve(self, measured: np.ndarray, fixed=None, x0=None) -> tuple[np.ndarray, float]:
        x0 = np.full(len(self.unknowns), 0.5) if x0 is None else np.clip(np.asarray(x0, float), 0.0, 1.0)
        res = least_squares(
            lambda x: self.predict(x, fixed) - measured,
            x0,
            bounds=(0.0, 1.0),
            method="trf",
            diff_step=1e-7,
            gtol=1e-10,
            xtol=1e-12,
            ftol=1e-12,
        )
        return res.x, float(np.linalg.norm(res.fun))


def invert(
    dags: Sequence[DagModel] | Mapping[str, DagModel],
    targets: Sequence[Target],
    unknowns: Sequence[str],
    fixed: Mapping[str, float] | None = None,
    x0: Sequence[float] | None = None,
    residual_threshold: float = RESIDUAL_THRESHOLD,
) -> SpamResult:
    """Bounded least-squares solve for ``unknowns`` in ``[0, 1]``.

    Args:
        dags: Graph models, addressed by name from the targets.
        targets: Measured conditional probabilities.
        unknowns: Parameters to solve for.
        fixed: Overrides for fixed parameter values; graph defaults otherwise.
        x0: Starting point, 0.5 per unknown by default.
        residual_threshold: Residual norm above which the result is flagged.

    Raises:
        ValueError: If there are fewer targets than unknowns.
    """
    system = _System(dags, targets, unknowns, fixed)
    measured = np.array([t.value for t in system.targets])
    x, resid = system.solve(measured, x0=x0)
    return SpamResult(
        dict(zip(system.unknowns, map(float, x))),
        {u: 0.0 for u in system.unknowns},
        resid,
        resid > residual_threshold,
    )


def beta_parameters(mean: float, sigma: float) -> tuple[float, float]:
    """Moment-matched ``(alpha, beta)``.

    Raises:
        ValueError: If ``sigma**2 >= mean * (1 - mean)``.
    """
    var = sigma * sigma
    if not 0.0 < mean < 1.0 or var <= 0.0 or var >= mean * (1.0 - mean):
        raise ValueError("beta moment matching infeasible")
    a = mean * (mean * (1.0 - mean) / var - 1.0)
    return a, a * (1.0 - mean) / mean


def sample_parameter(mean: float, sigma: float, rng: np.random.Generator) -> float:
    """One draw from the moment-matched beta, or a clipped Gaussian when infeasible."""
    if sigma == 0.0:
        return float(mean)
    try:
        a, b = beta_parameters(mean, sigma)
    except ValueError:
        log.warning("beta moment matching infeasible for mean=%g sigma=%g; using clipped Gaussian", mean, sigma)
        return float(np.clip(rng.normal(mean, sigma), 0.0, 1.0))
    return float(rng.beta(a, b))


def mc_uncertainty(
    dags: Sequence[DagModel] | Mapping[str, DagModel],
    targets: Sequence[Target],
    unknowns: Sequence[str],
    fixed: Mapping[str, tuple[float, float]] | None = None,
    draws: int = 1000,
    seed: int = 0,
    workers: int = 1,
    residual_threshold: float = RESIDUAL_THRESHOLD,
) -> SpamResult:
    """Monte Carlo over fixed parameters and measured targets, inverting each draw.

    Fixed parameters are drawn from moment-matched beta distributions; a
    target with counts is drawn from the Jeffreys posterior
    ``Beta(k + 1/2, n - k + 1/2)``. Draw ``i`` uses its own substream, so the
    result does not depend on ``workers``.

    Args:
        fixed: ``name -> (value, sigma)`` overrides; graph declarations otherwise.
    """
    if draws <= 0:
        raise ValueError("draws must be positive")
    dmap = _as_mapping(dags)
    system = _System(dmap, targets, unknowns, {k: v for k, (v, _) in dict(fixed or {}).items()})
    priors: dict[str, tuple[float, float]] = {}
    for name in sorted({t.dag for t in system.targets}):
        priors.update(dmap[name].params)
    priors.update(dict(fixed or {}))
    names = sorted(p for p in priors if p in system.base and p not in system.unknowns)
    point, _ = system.solve(np.array([t.value for t in system.targets]))

    def one(i: int) -> tuple[np.ndarray, float]:
        rng = stream(seed, _STREAM_KEY, i)
        values = dict(system.base)
        for n in names:
            values[n] = sample_parameter(*priors[n], rng)
        measured = np.empty(len(system.targets))
        for j, t in enumerate(system.targets):
            if t.count is None:
                measured[j] = t.value
            else:
                measured[j] = rng.beta(t.count + 0.5, t.total - t.count + 0.5)
        return system.solve(measured, fixed=values, x0=point)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(draws)))
    else:
        results = [one(i) for i in range(draws)]
    xs = np.array([r[0] for r in results])
    resids = np.array([r[1] for r in results])
    mean = xs.mean(axis=0)
    std = xs.std(axis=0, ddof=1) if draws > 1 else np.zeros(len(system.unknowns))
    return SpamResult(
        dict(zip(system.unknowns, map(float, mean))),
        dict(zip(system.unknowns, map(float, std))),
        float(np.mean(resids)),
        bool(np.any(resids > residual_threshold)),
        draws,
        xs,
    )


def clock_pi_correction(draws: int = 10_000, seed: int = 0, workers: int = 1) -> SpamResult:
    """Joint solve of the shipped clock pi and lifetime sequences with the shipped dataset."""
    from . import corpus

    dags = {n: corpus.load(n) for n in ("clock_pi", "repump_lifetime", "depump_lifetime")}
    targets = targets_from_dataset(corpus.load_dataset())
    unknowns = ("F_clock_pi", "eta_repump", "eps_depump")
    if draws == 0:
        return invert(dags, targets, unknowns)
    return mc_uncertainty(dags, targets, unknowns, draws=draws, seed=seed, workers=workers)


def fidelity_from_query(value: float, full_turn: bool = False) -> float:
    """Pulse fidelity from ``Pr(B0 B1 | B2)``: ``1 - Pr`` for pi pulses, ``Pr`` for 2pi pulses."""
    return value if full_turn else 1.0 - value
