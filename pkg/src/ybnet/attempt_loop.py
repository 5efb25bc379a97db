"""Monte Carlo of the repeated entanglement-attempt loop.

Each attempt excites every trapped atom once. The 3D1 decay either returns
the atom to the qubit with a time-bin photon (3P0), cascades to the ground
state without one (3P1), or shelves it in 3P2 where it is lost. After a
photon the qubit is reset, which loses the atom with probability
``depump_loss``. Detector dark counts are Poisson per channel and time bin.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import rng as rngmod
from .atomic import DEFAULT_BRANCHING, LIFETIME_3D1, DecayChannel, LevelScheme, decay_indices

#: On-disk record layout of the binary click log (little-endian, 10 bytes).
BINARY_DTYPE = np.dtype(
    [("trial", "<u4"), ("attempt", "<u2"), ("site", "u1"), ("bin", "u1"), ("channel", "u1"), ("flags", "u1")]
)

FLAG_DARK = 1
FLAG_ATOM_PRESENT = 2
NO_CHANNEL = 255

_LOG_DTYPE = np.dtype(
    [
        ("trial", "<u4"),
        ("attempt", "<u2"),
        ("site", "u1"),
        ("bin", "u1"),
        ("channel", "u1"),
        ("flags", "u1"),
        ("time_tag", "<f8"),
        ("atom", "i1"),
    ]
)


class Bin(enum.IntEnum):
    """Time-bin label of a detection."""

    EARLY = 0
    LATE = 1
    NONE = 2


@dataclass(frozen=True)
class LoopConfig:
    """Parameters of the attempt loop.

    Attributes:
        n_attempts: Attempts per loading cycle.
        depump_loss: Atom loss probability of the reset after each photon.
        branching: 3D1 decay branching ``{3P0, 3P1, 3P2}``.
        collection_efficiency_zz: Photon detection probability in the ZZ basis.
        collection_efficiency_xx: Photon detection probability in the XX basis.
        dark_rate_hz: Dark-count rate per detector.
        window: Detection window per time bin (s).
        dark_probability: Per-detector, per-bin dark probability used by the
            click simulation. None means ``dark_rate_hz * window``.
        n_sites: Number of tweezer sites, each with its own fiber.
        n_detectors: Detectors per fiber.
        load_probability: Probability that a site holds an atom at the start.
        crosstalk: Fraction of a site's light routed into each neighboring fiber.
        basis: ``"ZZ"`` or ``"XX"``; selects the collection efficiency.
        lifetime: Excited-state lifetime for photon time tags (s).
        cooldown: Cooling time between loops (s); bookkeeping only.
        reload_time: Array reload time (s); bookkeeping only.
    """

    n_attempts: int = 128
    depump_loss: float = 0.026
    branching: Mapping[str, float] = field(default_factory=lambda: {k.value: v for k, v in DEFAULT_BRANCHING.items()})
    collection_efficiency_zz: float = 0.003
    collection_efficiency_xx: float = 0.0006
    dark_rate_hz: float = 11.0
    window: float = 520e-9
    dark_probability: float | None = 3e-6
    n_sites: int = 1
    n_detectors: int = 2
    load_probability: float = 1.0
    crosstalk: float = 0.0
    basis: str = "ZZ"
    lifetime: float = LIFETIME_3D1
    cooldown: float = 1.4e-3
    reload_time: float = 1.1

    def __post_init__(self) -> None:
        if self.n_attempts < 1:
            raise ValueError("n_attempts must be at least 1")
        for name in ("depump_loss", "collection_efficiency_zz", "collection_efficiency_xx", "load_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.dark_probability is not None and not 0.0 <= self.dark_probability <= 1.0:
            raise ValueError("dark_probability must lie in [0, 1]")
        if not 0.0 <= self.crosstalk <= 0.5:
            raise ValueError("crosstalk must lie in [0, 0.5]")
        if self.dark_rate_hz < 0 or self.window <= 0:
            raise ValueError("dark_rate_hz must be >= 0 and window > 0")
        if not 1 <= self.n_sites <= 254 or not 1 <= self.n_detectors or self.n_sites * self.n_detectors > 254:
            raise ValueError("site/detector counts must fit the 8-bit channel field")
        if self.basis not in ("ZZ", "XX"):
            raise ValueError(f"unknown basis {self.basis!r}")
        LevelScheme(branching={DecayChannel(k): v for k, v in self.branching.items()})

    @property
    def scheme(self) -> LevelScheme:
        return LevelScheme(branching={DecayChannel(k): v for k, v in self.branching.items()})

    def efficiency(self, basis: str | None = None) -> float:
        basis = basis or self.basis
        if basis == "ZZ":
            return self.collection_efficiency_zz
        if basis == "XX":
            return self.collection_efficiency_xx
        raise ValueError(f"unknown basis {basis!r}")

    @property
    def dark_per_bin(self) -> float:
        """Dark probability per detector per time bin used in the simulation."""
        if self.dark_probability is not None:
            return self.dark_probability
        return self.dark_rate_hz * self.window


@dataclass(frozen=True)
class ClickRecord:
    """One detection event.

    ``is_dark`` is simulation truth and would not be known in an experiment.
    """

    trial_id: int
    attempt_index: int
    site_index: int
    bin: Bin
    channel: int | None
    is_dark: bool
    atom_present: bool
    time_tag: float = 0.0
    atom_state: int = -1

    def __post_init__(self) -> None:
        if self.bin == Bin.NONE and self.channel is not None:
            raise ValueError("a record without a time bin cannot carry a channel")


class ClickLog:
    """Column store of click records, sorted by trial, attempt, site, bin, channel."""

    def __init__(self, data: np.ndarray | None = None) -> None:
        self.data = np.zeros(0, dtype=_LOG_DTYPE) if data is None else np.asarray(data, dtype=_LOG_DTYPE)

    def __len__(self) -> int:
        return int(self.data.size)

    def __iter__(self) -> Iterator[ClickRecord]:
        for r in self.data:
            b = Bin(int(r["bin"]))
            yield ClickRecord(
                int(r["trial"]),
                int(r["attempt"]),
                int(r["site"]),
                b,
                None if b == Bin.NONE else int(r["channel"]),
                bool(r["flags"] & FLAG_DARK),
                bool(r["flags"] & FLAG_ATOM_PRESENT),
                float(r["time_tag"]),
                int(r["atom"]),
            )

    @classmethod
    def from_records(cls, records: Iterable[ClickRecord]) -> "ClickLog":
        rows = [
            (
                r.trial_id,
                r.attempt_index,
                r.site_index,
                int(r.bin),
                NO_CHANNEL if r.channel is None else r.channel,
                (FLAG_DARK if r.is_dark else 0) | (FLAG_ATOM_PRESENT if r.atom_present else 0),
                r.time_tag,
                r.atom_state,
            )
            for r in records
        ]
        return cls(np.array(rows, dtype=_LOG_DTYPE))

    @property
    def is_dark(self) -> np.ndarray:
        return (self.data["flags"] & FLAG_DARK).astype(bool)

    @property
    def atom_present(self) -> np.ndarray:
        return (self.data["flags"] & FLAG_ATOM_PRESENT).astype(bool)

    def write_csv(self, path: str | Path) -> None:
        """CSV with columns ``trial_id, attempt, site, bin, channel``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial_id", "attempt", "site", "bin", "channel"])
            names = {0: "early", 1: "late", 2: "none"}
            for r in self.data:
                ch = "" if int(r["bin"]) == Bin.NONE else int(r["channel"])
                w.writerow([int(r["trial"]), int(r["attempt"]), int(r["site"]), names[int(r["bin"])], ch])

    def to_binary(self) -> bytes:
        out = np.empty(self.data.size, dtype=BINARY_DTYPE)
        for name in BINARY_DTYPE.names:
            out[name] = self.data[name]
        return out.tobytes()

    def write_binary(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_binary())

    @classmethod
    def from_binary(cls, payload: bytes) -> "ClickLog":
        if len(payload) % BINARY_DTYPE.itemsize:
            raise ValueError("binary click log length is not a whole number of records")
        raw = np.frombuffer(payload, dtype=BINARY_DTYPE)
        data = np.zeros(raw.size, dtype=_LOG_DTYPE)
        for name in BINARY_DTYPE.names:
            data[name] = raw[name]
        data["atom"] = -1
        return cls(data)

    @classmethod
    def read_binary(cls, path: str | Path) -> "ClickLog":
        return cls.from_binary(Path(path).read_bytes())


@dataclass
class LoopStats:
    """Aggregated loop statistics.

    Attributes:
        mean_photons_emitted: Mean number of 3P0 photons per loop.
        survival_by_attempt: Fraction of initially loaded atoms present at the
            start of each attempt.
        success_rate: Fraction of (trial, site, attempt) slots with at least
            one click, over slots whose site was loaded.
        snr_db: Signal-to-noise estimate over the simulated survival profile.
        trials: Number of simulated loops.
    """

    mean_photons_emitted: float
    survival_by_attempt: np.ndarray
    success_rate: float
    snr_db: float
    trials: int = 0
    true_clicks: int = 0
    dark_clicks: int = 0

    @property
    def mean_survival(self) -> float:
        """Survival averaged over the attempts of the loop."""
        return float(np.mean(self.survival_by_attempt))

    def lifetime_attempts(self) -> float:
        """1/e constant of an exponential fit to the survival curve."""
        return survival_lifetime(self.survival_by_attempt)


def survival_lifetime(survival: np.ndarray) -> float:
    """1/e decay constant (in attempts) from a log-linear fit."""
    s = np.asarray(survival, dtype=float)
    k = np.arange(s.size)
    ok = s > 0
    if ok.sum() < 2:
        raise ValueError("need at least two positive survival points")
    slope = np.polyfit(k[ok], np.log(s[ok]), 1, w=np.sqrt(s[ok]))[0]
    return float("inf") if slope >= 0 else float(-1.0 / slope)


def expected_survival(config: LoopConfig) -> np.ndarray:
    """Analytic survival profile ``(1 - loss)^k`` with per-attempt loss."""
    b = config.scheme.branching
    loss = b[DecayChannel.P2] + b[DecayChannel.P0] * config.depump_loss
    return (1.0 - loss) ** np.arange(config.n_attempts)


def _route_matrix(n_sites: int, crosstalk: float) -> np.ndarray:
    """Row-stochastic fiber routing: light of site i lands in fiber j."""
    m = np.zeros((n_sites, n_sites))
    for i in range(n_sites):
        for j in (i - 1, i + 1):
            if 0 <= j < n_sites:
                m[i, j] = crosstalk
        m[i, i] = 1.0 - m[i].sum()
    return m


def _simulate_block(config: LoopConfig, seed: int, block: int, start: int, stop: int):
    rng = rngmod.stream(seed, 0, block)
    n = stop - start
    S = config.n_sites
    A = config.n_attempts
    probs = config.scheme.probabilities()
    eff = config.efficiency()
    route_cdf = np.cumsum(_route_matrix(S, config.crosstalk), axis=1)
    route_cdf[:, -1] = 1.0
    tau = config.lifetime
    wfrac = -math.expm1(-config.window / tau)

    present = rng.random((n, S)) < config.load_probability
    loaded = present.copy()
    history = np.zeros((A, n, S), dtype=bool)
    alive = np.zeros(A)
    photons = 0
    cols: dict[str, list[np.ndarray]] = {k: [] for k in _LOG_DTYPE.names}
    sites = np.arange(S)[None, :].repeat(n, axis=0)
    trials = np.arange(start, stop)[:, None].repeat(S, axis=1)

    for k in range(A):
        history[k] = present
        alive[k] = present.sum()
        u_decay, u_det, u_route, u_bin, u_time, u_port, u_reset = rng.random((7, n, S))
        ch = decay_indices(probs, u_decay)
        emit = present & (ch == 0)
        shelved = present & (ch == 2)
        photons += int(emit.sum())
        det = emit & (u_det < eff)
        if det.any():
            src = sites[det]
            fiber = np.array([np.searchsorted(route_cdf[s], u, side="right") for s, u in zip(src, u_route[det])])
            fiber = np.minimum(fiber, S - 1)
            early = u_bin[det] < 0.5
            port = np.minimum((u_port[det] * config.n_detectors).astype(int), config.n_detectors - 1)
            cols["trial"].append(trials[det])
            cols["attempt"].append(np.full(src.size, k))
            cols["site"].append(fiber)
            cols["bin"].append(np.where(early, Bin.EARLY, Bin.LATE))
            cols["channel"].append(fiber * config.n_detectors + port)
            cols["flags"].append(np.where(present[trials[det] - start, fiber], FLAG_ATOM_PRESENT, 0))
            cols["time_tag"].append(-tau * np.log1p(-u_time[det] * wfrac))
            # ideal Bell state (|down,E> + |up,L>)/sqrt(2): 0 = up, 1 = down
            cols["atom"].append(np.where(early, 1, 0))
        reset_loss = emit & (u_reset < config.depump_loss)
        present = present & ~(shelved | reset_loss)

    # dark counts: Poisson per (trial, attempt, fiber, detector, bin) cell
    n_cells = n * A * S * config.n_detectors * 2
    n_dark = int(rng.poisson(config.dark_per_bin * n_cells)) if config.dark_per_bin > 0 else 0
    if n_dark:
        cell = np.sort(rng.integers(0, n_cells, size=n_dark))
        tag = rng.random(n_dark) * config.window
        b = cell % 2
        rest = cell // 2
        det_i = rest % config.n_detectors
        rest //= config.n_detectors
        fiber = rest % S
        rest //= S
        att = rest % A
        tr = rest // A
        cols["trial"].append(tr + start)
        cols["attempt"].append(att)
        cols["site"].append(fiber)
        cols["bin"].append(b)
        cols["channel"].append(fiber * config.n_detectors + det_i)
        cols["flags"].append(FLAG_DARK | np.where(history[att, tr, fiber], FLAG_ATOM_PRESENT, 0))
        cols["time_tag"].append(tag)
        cols["atom"].append(np.full(n_dark, -1))

    data = np.zeros(sum(len(c) for c in cols["trial"]), dtype=_LOG_DTYPE)
    for name, parts in cols.items():
        if parts:
            data[name] = np.concatenate(parts)
    # any-click per (trial, site, attempt) slot on loaded sites
    slot = (data["trial"].astype(np.int64) - start) * A * S + data["attempt"].astype(np.int64) * S + data["site"]
    clicked = np.zeros(n * A * S, dtype=bool)
    clicked[slot] = True
    loaded_slots = np.broadcast_to(loaded[:, None, :], (n, A, S)).reshape(-1)
    return {
        "data": data,
        "alive": alive,
        "loaded": int(loaded.sum()),
        "photons": photons,
        "success": int(clicked[loaded_slots].sum()),
        "slots": int(loaded_slots.sum()),
    }


def run_attempt_loop(
    config: LoopConfig, trials: int, seed: int = 0, workers: int = 1
) -> tuple[LoopStats, ClickLog]:
    """Simulate ``trials`` independent loading cycles.

    Work is split into fixed blocks with their own random substreams, so the
    result is bit-identical for any ``workers``.

    Raises:
        ValueError: If ``trials`` is not positive.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    jobs = rngmod.blocks(trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda j: _simulate_block(config, seed, *j), jobs))
    else:
        parts = [_simulate_block(config, seed, *j) for j in jobs]

    data = np.concatenate([p["data"] for p in parts]) if parts else np.zeros(0, _LOG_DTYPE)
    order = np.lexsort((data["time_tag"], data["channel"], data["bin"], data["site"], data["attempt"], data["trial"]))
    data = data[order]
    loaded = sum(p["loaded"] for p in parts)
    alive = np.sum([p["alive"] for p in parts], axis=0)
    survival = alive / loaded if loaded else np.zeros(config.n_attempts)
    slots = sum(p["slots"] for p in parts)
    log = ClickLog(data)
    stats = LoopStats(
        mean_photons_emitted=sum(p["photons"] for p in parts) / max(loaded, 1),
        survival_by_attempt=survival,
        success_rate=sum(p["success"] for p in parts) / slots if slots else 0.0,
        snr_db=snr_estimate(config, config.basis, survival) if config.dark_rate_hz > 0 else float("inf"),
        trials=trials,
        true_clicks=int((~log.is_dark).sum()),
        dark_clicks=int(log.is_dark.sum()),
    )
    return stats, log


def snr_estimate(config: LoopConfig, basis: str = "ZZ", survival: np.ndarray | None = None) -> float:
    """Signal-to-noise ratio (dB) of herald clicks against dark clicks.

    True clicks per attempt are ``P(3P0) * efficiency`` while an atom is
    present. Dark clicks accrue at ``dark_rate_hz * window`` per detector and
    time bin over the same attempts. Both are summed over the survival profile.

    Raises:
        ValueError: If the dark rate is zero.
    """
    if config.dark_rate_hz <= 0:
        raise ValueError("SNR undefined (infinite)")
    s = expected_survival(config) if survival is None else np.asarray(survival, dtype=float)
    present = float(s.sum())
    signal = present * config.scheme.branching[DecayChannel.P0] * config.efficiency(basis)
    noise = present * config.n_detectors * 2 * config.dark_rate_hz * config.window
    return 10.0 * math.log10(signal / noise)


@dataclass
class CrosstalkResult:
    """Crosstalk matrix in dB (row = lit site, column = fiber) and noise floor."""

    matrix_db: np.ndarray
    noise_floor_db: float
    counts: np.ndarray
    attempts: np.ndarray

    @property
    def mean_offdiagonal_db(self) -> float:
        m = self.matrix_db
        off = ~np.eye(m.shape[0], dtype=bool)
        return float(10 * np.log10(np.mean(10 ** (m[off] / 10))))


def crosstalk_matrix(log: ClickLog, occupancy: np.ndarray) -> CrosstalkResult:
    """Crosstalk between sites from clicks conditioned on isolated occupancy.

    Args:
        log: Click log of a multi-site run.
        occupancy: Boolean array ``[trial, attempt, site]`` of atom presence.

    Returns:
        Entry ``(i, j)`` is ``10 log10(r_ij / r_ii)`` where ``r_ij`` is the
        click rate in fiber ``j`` over attempts in which only site ``i`` held
        an atom. The noise floor is the click rate over attempts with an empty
        array, relative to the mean diagonal rate.

    Raises:
        ValueError: For fewer than two sites or no isolated occupancy.
    """
    occ = np.asarray(occupancy, dtype=bool)
    n_trials, n_att, S = occ.shape
    if S < 2:
        raise ValueError("crosstalk needs at least two sites")
    n_occ = occ.sum(axis=2)
    only = np.full((n_trials, n_att), -1)
    single = n_occ == 1
    only[single] = np.argmax(occ[single], axis=1)
    attempts = np.array([(only == i).sum() for i in range(S)], dtype=float)
    if np.any(attempts == 0):
        raise ValueError("no trials with isolated occupancy for some site")
    empty_attempts = float((n_occ == 0).sum())
    d = log.data
    lit = only[d["trial"], d["attempt"]]
    counts = np.zeros((S, S))
    np.add.at(counts, (lit[lit >= 0], d["site"][lit >= 0]), 1)
    rates = counts / attempts[:, None]
    diag = np.diag(rates).copy()
    if np.any(diag <= 0):
        raise ValueError("no signal clicks on some diagonal entry")
    with np.errstate(divide="ignore"):
        matrix = 10 * np.log10(rates / diag[:, None])
    if empty_attempts > 0:
        empty_clicks = np.sum(n_occ[d["trial"], d["attempt"]] == 0)
        floor_rate = empty_clicks / empty_attempts / S
    else:
        # fall back to the dark flags of the log
        floor_rate = log.is_dark.sum() / (n_trials * n_att * S)
    floor = 10 * math.log10(floor_rate / diag.mean()) if floor_rate > 0 else float("-inf")
    return CrosstalkResult(matrix, floor, counts, attempts)


def simulate_array(config: LoopConfig, trials: int, seed: int = 0) -> tuple[LoopStats, ClickLog, np.ndarray]:
    """Run the loop and rebuild the per-attempt occupancy from the same streams.

    Returns:
        ``(stats, log, occupancy)`` with occupancy of shape ``[trial, attempt, site]``.
    """
    stats, log = run_attempt_loop(config, trials, seed)
    occ = np.concatenate([_occupancy_block(config, seed, *j) for j in rngmod.blocks(trials)], axis=0)
    return stats, log, occ


def _occupancy_block(config: LoopConfig, seed: int, block: int, start: int, stop: int) -> np.ndarray:
    rng = rngmod.stream(seed, 0, block)
    n = stop - start
    S = config.n_sites
    probs = config.scheme.probabilities()
    present = rng.random((n, S)) < config.load_probability
    out = np.zeros((n, config.n_attempts, S), dtype=bool)
    for k in range(config.n_attempts):
        out[:, k] = present
        u_decay, _, _, _, _, _, u_reset = rng.random((7, n, S))
        ch = decay_indices(probs, u_decay)
        emit = present & (ch == 0)
        present = present & ~((present & (ch == 2)) | (emit & (u_reset < config.depump_loss)))
    return out
