"""Command-line frontend: ``ybnet <subcommand> [--config F] [--seed N] [--out DIR] [--plots]``.

Every subcommand writes ``<name>.json`` and ``<name>.csv`` into the output
directory, plus SVG plots built from the same rows when ``--plots`` is set.
Exit codes: 0 success, 2 configuration error, 3 regression failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import report
from .config import ConfigError, RunConfig, load_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGRESSION = 3


class Context:
    """Run settings and artifact writers for one subcommand."""

    def __init__(self, name: str, cfg: RunConfig):
        self.name = name
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.files: list[Path] = []

    @property
    def stem(self) -> str:
        return self.name.replace("-", "_")

    def path(self, suffix: str, tag: str = "") -> Path:
        return self.out / f"{self.stem}{'_' + tag if tag else ''}{suffix}"

    def csv(self, header, rows, tag: str = "") -> None:
        self.files.append(report.write_csv(self.path(".csv", tag), header, rows))

    def json(self, results: dict) -> None:
        self.files.append(
            report.write_json(self.path(".json"), self.name, self.cfg.seed, self.cfg.digest(), results)
        )

    def plot(self, fn: Callable, *args, tag: str = "", **kwargs) -> None:
        if self.cfg.plots:
            self.files.append(fn(self.path(".svg", tag), *args, **kwargs))


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def cmd_magic_rabi(ctx: Context) -> int:
    from .atomic import MagneticField
    from .pulses import magic_residual, solve_magic_rabi

    c = ctx.cfg.section("magic_rabi")
    field = MagneticField(c.b_gauss)
    rows = []
    for m in range(1, max(c.m, 5) + 1):
        w = solve_magic_rabi(field, m)
        rows.append((m, w, magic_residual(w, field, m)))
    omega = rows[c.m - 1][1]
    ctx.csv(["m", "omega_hz", "residual"], rows)
    ctx.json({"b_gauss": c.b_gauss, "m": c.m, "omega_hz": omega, "residual": rows[c.m - 1][2]})
    ctx.plot(report.line_plot, [r[0] for r in rows], {"magic Rabi": [r[1] / 1e6 for r in rows]}, "m", "Rabi frequency (MHz)")
    return EXIT_OK


def cmd_reg_map(ctx: Context) -> int:
    from .pulses import PulseSpec, local_minima, reg_infidelity_map

    c = ctx.cfg.section("reg_map")
    omegas = _grid(c.omega_min_mhz, c.omega_max_mhz, c.omega_step_mhz) * 1e6
    if c.pulse_shape == "square":
        m = reg_infidelity_map(omegas, sorted(c.b_values_gauss))
    else:
        from .atomic import MagneticField
        from .pulses import RegMap, simulate_reg_pulse

        bs = np.array(sorted(c.b_values_gauss))
        inf = np.empty((bs.size, omegas.size))
        yl = np.empty_like(inf)
        for i, b in enumerate(bs):
            for j, w in enumerate(omegas):
                r = simulate_reg_pulse(float(w), MagneticField(float(b)), pulse=PulseSpec.pi_pulse(float(w), c.pulse_shape))
                inf[i, j], yl[i, j] = r.infidelity, r.yield_
        m = RegMap(omegas, bs, inf, yl)
    rows = m.rows()
    ctx.csv(["omega_hz", "b_gauss", "infidelity", "yield"], rows)
    minima = {
        f"{b:g}": [float(m.omega_hz[k]) for k in local_minima(m.infidelity[i])] for i, b in enumerate(m.b_gauss)
    }
    ctx.json({"points": len(rows), "local_minima_omega_hz": minima, "min_infidelity": float(m.infidelity.min())})
    if len(m.b_gauss) > 1:
        ctx.plot(report.heatmap, m.omega_hz / 1e6, m.b_gauss, m.infidelity, "Rabi frequency (MHz)", "B (G)", "infidelity", log=True)
    else:
        ctx.plot(report.line_plot, m.omega_hz / 1e6, {f"{m.b_gauss[0]:g} G": m.infidelity[0]}, "Rabi frequency (MHz)", "infidelity", logy=True)
    return EXIT_OK


def cmd_raman_map(ctx: Context) -> int:
    from .atomic import MagneticField
    from .raman import RamanSetup, connected_region, raman_magic_scan

    c = ctx.cfg.section("raman_map")
    setup = RamanSetup(field=MagneticField(c.b_gauss), detuning=c.detuning_mhz * 1e6)
    om = np.linspace(c.omega_min_mhz, c.omega_max_mhz, c.n_omega) * 1e6
    th = np.linspace(c.theta_min, c.theta_max, c.n_theta)
    scan = raman_magic_scan(om, th, setup, ramp_time=c.ramp_ns * 1e-9)
    ctx.csv(["omega_hz", "theta_rad", "infidelity", "omega_eff_hz"], scan.rows())
    w, t, inf = scan.best()
    ctx.json(
        {
            "best": {"omega_hz": w, "theta_rad": t, "infidelity": inf},
            "region_below_1e-3": connected_region(scan.region(1e-3)),
        }
    )
    ctx.plot(report.heatmap, th, om / 1e6, scan.infidelity, "polarization angle (rad)", "Rabi frequency (MHz)", "pi infidelity", log=True)
    return EXIT_OK


def cmd_motion(ctx: Context) -> int:
    from .motion import RecoilKick, TrapSpec, fidelity_vs_delay_curve, motional_fidelity_factor

    c = ctx.cfg.section("motion")
    trap = TrapSpec(c.omega_radial_khz * 1e3, c.omega_axial_khz * 1e3)
    kick = RecoilKick.from_geometry()
    curves = fidelity_vs_delay_curve(trap, kick, np.array(c.delta_t_us) * 1e-6, np.array(c.temperatures_uk) * 1e-6, c.n_max)
    ctx.csv(["delta_t_s", "temperature_k", "fidelity"], curves.rows())
    ref = motional_fidelity_factor(trap, kick, 2.8e-6, c.n_max)
    ctx.json({"fidelity_reference": ref, "reduction_reference": 1.0 - ref, "kick_per_m": [kick.delta_k_radial, kick.delta_k_axial]})
    ctx.plot(
        report.line_plot,
        curves.delta_t * 1e6,
        {f"{t * 1e6:g} uK": curves.fidelity[i] for i, t in enumerate(curves.temperatures)},
        "time-bin separation (us)",
        "fidelity factor",
    )
    return EXIT_OK


def _loop_config(c, **kw):
    from .attempt_loop import LoopConfig

    return LoopConfig(
        n_attempts=c.n_attempts,
        depump_loss=c.depump_loss,
        collection_efficiency_zz=c.collection_efficiency_zz,
        collection_efficiency_xx=c.collection_efficiency_xx,
        dark_rate_hz=c.dark_rate_hz,
        window=c.window_ns * 1e-9,
        dark_probability=c.dark_probability,
        basis=c.basis,
        **kw,
    )


def cmd_attempt_loop(ctx: Context) -> int:
    from .attempt_loop import run_attempt_loop

    c = ctx.cfg.section("attempt_loop")
    stats, clicks = run_attempt_loop(_loop_config(c), c.trials, ctx.cfg.seed, ctx.cfg.workers)
    names = {0: "early", 1: "late", 2: "none"}
    d = clicks.data
    ctx.csv(
        ["trial_id", "attempt", "site", "bin", "channel"],
        (
            (int(r["trial"]), int(r["attempt"]), int(r["site"]), names[int(r["bin"])], "" if int(r["bin"]) == 2 else int(r["channel"]))
            for r in d
        ),
    )
    if c.binary_log:
        ctx.files.append(report.atomic_write(ctx.path(".bin"), clicks.to_binary()))
    ctx.json(
        {
            "trials": stats.trials,
            "mean_photons_emitted": stats.mean_photons_emitted,
            "mean_survival": stats.mean_survival,
            "final_survival": float(stats.survival_by_attempt[-1]),
            "lifetime_attempts": stats.lifetime_attempts(),
            "success_rate": stats.success_rate,
            "snr_db": stats.snr_db,
            "true_clicks": stats.true_clicks,
            "dark_clicks": stats.dark_clicks,
        }
    )
    ctx.csv(["attempt", "survival"], enumerate(stats.survival_by_attempt), tag="survival")
    ctx.plot(report.line_plot, np.arange(c.n_attempts), {"survival": stats.survival_by_attempt}, "attempt", "survival", tag="survival")
    return EXIT_OK


def cmd_snr(ctx: Context) -> int:
    from .attempt_loop import snr_estimate

    c = ctx.cfg.section("attempt_loop")
    cfg = _loop_config(c)
    rows = [(b, snr_estimate(cfg, b)) for b in ("ZZ", "XX")]
    ctx.csv(["basis", "snr_db"], rows)
    ctx.json({f"snr_{b.lower()}_db": v for b, v in rows})
    ctx.plot(report.bar_plot, [r[0] for r in rows], [r[1] for r in rows], "SNR (dB)")
    return EXIT_OK


def cmd_crosstalk(ctx: Context) -> int:
    from .attempt_loop import LoopConfig, crosstalk_matrix, simulate_array

    c = ctx.cfg.section("crosstalk")
    cfg = LoopConfig(
        n_sites=c.n_sites,
        load_probability=c.load_probability,
        crosstalk=c.crosstalk,
        collection_efficiency_zz=c.collection_efficiency,
        dark_probability=c.dark_probability,
    )
    _, clicks, occ = simulate_array(cfg, c.trials, ctx.cfg.seed)
    res = crosstalk_matrix(clicks, occ)
    S = c.n_sites
    ctx.csv(["lit_site", "fiber", "crosstalk_db", "clicks"], ((i, j, res.matrix_db[i, j], int(res.counts[i, j])) for i in range(S) for j in range(S)))
    ctx.json(
        {
            "matrix_db": res.matrix_db,
            "noise_floor_db": res.noise_floor_db,
            "mean_offdiagonal_db": res.mean_offdiagonal_db,
            "isolated_attempts": res.attempts,
        }
    )
    ctx.plot(report.heatmap, np.arange(S), np.arange(S), res.matrix_db, "fiber", "lit site", "crosstalk (dB)")
    return EXIT_OK


def cmd_tomography(ctx: Context) -> int:
    from .attempt_loop import LoopConfig, run_attempt_loop
    from .rng import stream
    from .spam.bell import ReadoutModel, correct_bell_correlations, noisy_bell_state, simulate_raw_counts
    from .tomography import arrival_histogram_fit, bell_fidelity_bound, parity_fit, true_bell_fidelity

    c = ctx.cfg.section("tomography")
    seed = ctx.cfg.seed
    rho = noisy_bell_state(c.zz_error, c.coherence)
    readout = ReadoutModel.from_pulse_fidelities(c.clock_pi_fidelity)
    phases = np.linspace(0.0, 2 * np.pi, c.n_phases, endpoint=False)
    raw = simulate_raw_counts(rho, readout, c.shots_zz, phases, c.shots_per_phase, stream(seed, 7))
    raw_fit = parity_fit(raw.parity_points())
    raw_est = bell_fidelity_bound(raw, raw_fit)
    corrected, corr_est = correct_bell_correlations(raw, readout)
    # arrival times do not depend on collection efficiency, so raise it to get more tags
    tag_cfg = LoopConfig(dark_probability=0.0, collection_efficiency_zz=0.05)
    _, clicks = run_attempt_loop(tag_cfg, c.arrival_trials, seed, ctx.cfg.workers)
    tags = clicks.data["time_tag"][~clicks.is_dark & (clicks.data["bin"] < 2)]
    results = {
        "true_fidelity": true_bell_fidelity(rho),
        "raw": raw_est.as_dict(),
        "corrected": corr_est.as_dict(),
        "readout": {"bright_given_up": readout.bright_given_up, "dark_given_down": readout.dark_given_down},
    }
    if tags.size >= 1000:
        af = arrival_histogram_fit(tags, 2e-9)
        results["arrival"] = {"lifetime_s": af.lifetime, "lifetime_err_s": af.lifetime_err, "tags": int(tags.size)}
    ctx.json(results)
    rows = [
        (ph, rp, cp)
        for (ph, rp, _), (_, cp, _) in zip(raw.parity_points(), corrected.parity_points())
    ]
    ctx.csv(["phase_rad", "parity_raw", "parity_corrected"], rows)
    ctx.plot(report.line_plot, phases, {"raw": [r[1] for r in rows], "corrected": [r[2] for r in rows]}, "atom phase (rad)", "parity")
    return EXIT_OK


def cmd_spam_correct(ctx: Context) -> int:
    from .spam import corpus
    from .spam.inversion import clock_pi_correction, invert, mc_uncertainty, targets_from_dataset

    c = ctx.cfg.section("spam_correct")
    seed, workers = ctx.cfg.seed, ctx.cfg.workers
    if c.dataset:
        with open(c.dataset, encoding="utf-8") as fh:
            data = json.load(fh)
        dags = {n: corpus.load(n) for n in data}
        targets = targets_from_dataset(data)
        unknowns = tuple(sorted({u for d in dags.values() for u in d.unknowns}))
        res = (
            mc_uncertainty(dags, targets, unknowns, draws=c.draws, seed=seed, workers=workers)
            if c.draws
            else invert(dags, targets, unknowns)
        )
        point = invert(dags, targets, unknowns)
    else:
        res = clock_pi_correction(c.draws, seed, workers)
        point = clock_pi_correction(0)
        data = corpus.load_dataset()
    out = res.as_dict()
    out["point_estimate"] = point.mean
    out["raw"] = {
        dag: {q: v["count"] / v["total"] for q, v in queries.items()} for dag, queries in sorted(data.items())
    }
    ctx.json(out)
    ctx.csv(["unknown", "mean", "std", "point"], ((k, res.mean[k], res.std[k], point.mean[k]) for k in res.mean))
    if res.samples is not None:
        names = list(res.mean)
        ctx.csv(["draw", *names], ((i, *row) for i, row in enumerate(res.samples)), tag="draws")
        ctx.plot(
            report.line_plot,
            np.arange(res.samples.shape[0]),
            {n: np.sort(res.samples[:, k]) for k, n in enumerate(names)},
            "sorted draw",
            "value",
        )
    return EXIT_OK


def cmd_cavity_rate(ctx: Context) -> int:
    from .cavity import CavityGeometry, RateScenario, cavity_report, transmission_sweep

    c = ctx.cfg.section("cavity_rate")
    geom = CavityGeometry(R_c=c.R_c_mm * 1e-3, g_cav=c.g_cav, T_in=c.T_in_ppm, L_loss=c.L_ppm)
    scen = RateScenario(
        eta_det=c.eta_det,
        N_a=c.N_a,
        T_move=c.T_move_us * 1e-6,
        T_init=c.T_init_us * 1e-6,
        T_depump=c.T_depump_us * 1e-6,
        T_REG=c.T_REG_us * 1e-6,
    )
    rep = cavity_report(geom, scen)
    T = np.arange(100.0, 5001.0, 50.0)
    sweep = transmission_sweep(geom, T)
    ctx.csv(["T_ppm", "C", "kappa", "eta"], sweep)
    from .cavity import bell_pair_rate

    rates = bell_pair_rate(scen, rep.success.p_aa, 1, c.m_max).rates
    ctx.csv(["m", "rate_per_s"], ((m + 1, r) for m, r in enumerate(rates)), tag="rates")
    ctx.json(rep.as_dict())
    ctx.plot(report.line_plot, sweep[:, 0], {"eta": sweep[:, 3]}, "T (ppm)", "collection efficiency")
    ctx.plot(report.line_plot, np.arange(1, len(rates) + 1), {"R_bp": rates}, "rounds m", "Bell pairs per s", tag="rates")
    return EXIT_OK


def cmd_parallel_sim(ctx: Context) -> int:
    from .cavity import analytic_link_rate, parallel_link_sim

    c = ctx.cfg.section("parallel_sim")
    period = c.attempt_period_us * 1e-6
    res = parallel_link_sim(c.n_channels, c.per_attempt_success, period, c.duration_s, ctx.cfg.seed)
    analytic = analytic_link_rate(c.n_channels, c.per_attempt_success, period)
    ctx.csv(["time_s", "channel"], res.events)
    ctx.json(
        {
            "rate": res.rate,
            "rate_sigma": res.rate_sigma,
            "successes": res.successes,
            "analytic_rate": analytic,
            "z_score": (res.rate - analytic) / res.rate_sigma if res.rate_sigma else 0.0,
            "per_channel": res.per_channel(c.n_channels),
        }
    )
    times = np.array([t for t, _ in res.events])
    ctx.plot(report.line_plot, times, {"heralds": np.arange(1, times.size + 1)}, "time (s)", "cumulative heralds")
    return EXIT_OK


def error_budgets(c) -> dict:
    """Tabulated rows and the same rows recomputed by the modules."""
    from .atomic import LIFETIME_3D1, MagneticField
    from .attempt_loop import LoopConfig, snr_estimate
    from .motion import RecoilKick, TrapSpec, motional_fidelity_factor
    from .pulses import raman_spin_flip_error, simulate_reg_pulse
    from .tomography import assemble_error_budget, dark_count_infidelity, visibility_infidelity

    tabulated = assemble_error_budget(
        [
            ("dark counts", 0.021, 0.005),
            ("interferometer visibility", 0.016, 0.001),
            ("motion between time bins", 0.009, 0.0),
            ("spin flip during Raman", 0.0035, 0.0),
            ("REG double excitation", 0.003, 0.0),
        ]
    )
    loop = LoopConfig()
    reg = simulate_reg_pulse(c.reg_rabi_mhz * 1e6, MagneticField(c.b_gauss))
    pipeline = assemble_error_budget(
        [
            ("dark counts", dark_count_infidelity(snr_estimate(loop, "ZZ"), snr_estimate(loop, "XX")), 0.0),
            ("interferometer visibility", visibility_infidelity(c.visibility), 0.0),
            (
                "motion between time bins",
                1.0 - motional_fidelity_factor(TrapSpec(), RecoilKick.from_geometry(), c.delta_t_us * 1e-6),
                0.0,
            ),
            ("spin flip during Raman", raman_spin_flip_error(c.raman_delay_us * 1e-6, c.raman_pi_us * 1e-6, LIFETIME_3D1), 0.0),
            ("REG double excitation", reg.infidelity, 0.0),
        ]
    )
    return {"tabulated": tabulated, "pipeline": pipeline}


def cmd_error_budget(ctx: Context) -> int:
    budgets = error_budgets(ctx.cfg.section("error_budget"))
    ctx.json({k: b.as_dict() for k, b in budgets.items()})
    rows = [(name, label, c, u) for name, b in budgets.items() for label, c, u in b.entries]
    ctx.csv(["budget", "source", "contribution", "uncertainty"], rows)
    p = budgets["pipeline"]
    ctx.plot(report.bar_plot, [e[0] for e in p.entries], [e[1] for e in p.entries], "infidelity")
    return EXIT_OK


def cmd_regress(ctx: Context) -> int:
    from .acceptance import run_all

    results = run_all(seed=ctx.cfg.seed, workers=ctx.cfg.workers)
    for r in results:
        print(r.line())
    ctx.csv(["criterion", "name", "passed", "detail"], ((r.id, r.name, r.passed, r.detail) for r in results))
    ctx.json({"passed": all(r.passed for r in results), "criteria": [r.as_dict() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_REGRESSION


COMMANDS: dict[str, Callable[[Context], int]] = {
    "magic-rabi": cmd_magic_rabi,
    "reg-map": cmd_reg_map,
    "raman-map": cmd_raman_map,
    "motion": cmd_motion,
    "attempt-loop": cmd_attempt_loop,
    "snr": cmd_snr,
    "crosstalk": cmd_crosstalk,
    "tomography": cmd_tomography,
    "spam-correct": cmd_spam_correct,
    "cavity-rate": cmd_cavity_rate,
    "parallel-sim": cmd_parallel_sim,
    "error-budget": cmd_error_budget,
    "regress": cmd_regress,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ybnet", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=sorted(COMMANDS), metavar="subcommand", help=", ".join(COMMANDS))
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--plots", action="store_true", default=None, help="also write SVG plots")
    parser.add_argument("--workers", type=int, help="worker threads (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log applied defaults")
    return parser


def run_subcommand(name: str, cfg: RunConfig) -> int:
    """Run ``name`` under ``cfg`` and return its exit code."""
    if name not in COMMANDS:
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[name](Context(name, cfg))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.plots:
            cfg.plots = True
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers must be at least 1")
            cfg.workers = args.workers
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_subcommand(args.subcommand, cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
