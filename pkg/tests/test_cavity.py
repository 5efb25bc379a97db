"""Cavity collection, branching, success probability, array rates and link simulation."""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import c as SPEED_OF_LIGHT

from ybnet.cavity import (
    GAMMA_3D1,
    CavityGeometry,
    RateScenario,
    analytic_link_rate,
    atom_atom_success,
    bell_pair_rate,
    cavity_kappa,
    collection_efficiency,
    cooperativity,
    coupling_from_geometry,
    efficiency_at,
    mode_waist,
    modified_branching,
    optimize_transmission,
    parallel_link_sim,
    transmission_sweep,
)

GEOM = CavityGeometry()


def test_waist_design_point():
    assert mode_waist(GEOM) * 1e6 == pytest.approx(27.8, abs=0.3)


def test_waist_confocal_reduction():
    g = CavityGeometry(g_cav=0.0)
    assert mode_waist(g) ** 2 == pytest.approx(g.length * g.wavelength / (2 * math.pi), rel=1e-14)


def test_waist_wavelength_scaling():
    g2 = CavityGeometry(wavelength=2 * GEOM.wavelength)
    assert mode_waist(g2) / mode_waist(GEOM) == pytest.approx(math.sqrt(2), rel=1e-14)


def test_concentric_limit_rejected():
    with pytest.raises(ValueError):
        CavityGeometry(g_cav=-1.0)


def test_cooperativity_design_point():
    assert cooperativity(GEOM, 1070.0) == pytest.approx(2.6, abs=0.1)


def test_cooperativity_vanishes_with_transmission():
    ts = np.logspace(0, 8, 60)
    cs = [cooperativity(GEOM, t) for t in ts]
    assert np.all(np.diff(cs) < 0)
    assert cs[-1] < 1e-4


@pytest.mark.parametrize("T", [100.0, 1070.0, 5000.0])
def test_cooperativity_matches_coupling_formula(T):
    g = coupling_from_geometry(GEOM)
    kappa = cavity_kappa(GEOM, T)
    assert 4 * g**2 / (kappa * GAMMA_3D1) == pytest.approx(cooperativity(GEOM, T), rel=0.05)


def test_wait_time_design_point():
    assert RateScenario().wait_time(cavity_kappa(GEOM, 1070.0)) * 1e6 == pytest.approx(0.55, abs=0.03)


def test_kappa_linear_in_loss():
    full = CavityGeometry(T_in=20.0, L_loss=100.0)
    half = CavityGeometry(T_in=10.0, L_loss=50.0)
    assert cavity_kappa(half, 535.0) == pytest.approx(0.5 * cavity_kappa(full, 1070.0), rel=1e-14)


def test_kappa_from_free_spectral_range():
    loss = (1070.0 + GEOM.T_in + GEOM.L_loss) * 1e-6
    fsr = SPEED_OF_LIGHT / (2 * GEOM.R_c * (1 - GEOM.g_cav))
    assert cavity_kappa(GEOM, 1070.0) == pytest.approx(fsr * loss, rel=1e-14)


def test_efficiency_design_point():
    assert efficiency_at(GEOM, 1070.0) == pytest.approx(0.51, abs=0.02)


def test_efficiency_vanishes_without_output_coupling():
    assert efficiency_at(GEOM, 1e-6) < 1e-5


def test_efficiency_sweep_matches_reimplementation():
    ts = np.logspace(0, 5, 100)
    sweep = transmission_sweep(GEOM, ts)
    w0_sq = GEOM.R_c * (1 - GEOM.g_cav) * GEOM.wavelength / (2 * math.pi) * math.sqrt((1 + GEOM.g_cav) / (1 - GEOM.g_cav))
    for (t, c, kappa, eta) in sweep:
        loss = (t + GEOM.T_in + GEOM.L_loss) * 1e-6
        c_ref = 6 / math.pi**3 * GEOM.wavelength**2 / w0_sq * (2 * math.pi / loss)
        ref = c_ref / (1 + c_ref) * kappa / (kappa + GAMMA_3D1) * t / (t + GEOM.T_in + GEOM.L_loss)
        assert eta == pytest.approx(ref, rel=1e-12, abs=1e-12)
        assert c == pytest.approx(c_ref, rel=1e-12)


def test_collection_rejects_nonpositive():
    with pytest.raises(ValueError):
        collection_efficiency(0.0, 1.0, 1.0, 1.0, 1.0)


def test_optimum_design_point():
    opt = optimize_transmission(GEOM)
    assert opt.T == pytest.approx(1070.0, rel=0.10)
    assert opt.eta == pytest.approx(0.51, abs=0.02)


def test_optimum_is_stationary_and_grid_maximal():
    opt = optimize_transmission(GEOM)
    h = opt.T * 1e-4
    deriv = (efficiency_at(GEOM, opt.T + h) - efficiency_at(GEOM, opt.T - h)) / (2 * h)
    assert abs(deriv * opt.T / opt.eta) < 1e-6
    grid = np.logspace(0, 5, 4001)
    assert max(efficiency_at(GEOM, t) for t in grid) <= opt.eta + 1e-9


def test_efficiency_unimodal_in_transmission():
    grid = np.logspace(0, 5, 2000)
    d = np.diff([efficiency_at(GEOM, t) for t in grid])
    signs = np.sign(d[d != 0])
    assert np.count_nonzero(np.diff(signs)) == 1


def test_optimum_improves_as_loss_drops():
    etas = [optimize_transmission(CavityGeometry(L_loss=l)).eta for l in (200.0, 100.0, 20.0)]
    assert etas[0] < etas[1] < etas[2]


def test_modified_branching_design_point():
    assert modified_branching(C=2.6)[0] == pytest.approx(0.86, abs=0.01)


def test_modified_branching_limits():
    f = (0.64, 0.35, 0.01)
    assert modified_branching(f, 0.0) == f
    assert modified_branching(f, 1e12)[0] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        modified_branching((0.5, 0.4, 0.0), 1.0)


@settings(max_examples=100)
@given(a=st.floats(0.01, 1), b=st.floats(0, 1), c=st.floats(0, 1), C=st.floats(0, 1e3))
def test_modified_branching_normalized(a, b, c, C):
    s = a + b + c
    f = (a / s, b / s, 1.0 - a / s - b / s)
    if min(f) < 0:
        return
    fp = modified_branching(f, C)
    assert abs(math.fsum(fp) - 1.0) < 1e-12
    assert all(0 <= x <= 1 for x in fp)


def test_atom_atom_design_point():
    s = atom_atom_success(0.44, 0.8)
    assert s.p_aa == pytest.approx(0.062, abs=0.002)
    assert 16 <= s.attempts_per_success <= 17


def test_atom_atom_limits():
    assert atom_atom_success(1.0, 1.0).p_aa == 0.5
    with pytest.raises(ValueError, match="infinite attempts"):
        atom_atom_success(0.0, 0.8)
    with pytest.raises(ValueError):
        atom_atom_success(1.2, 0.8)


def rate_reference(sc, p, m):
    """Round-by-round bookkeeping of the array schedule."""
    remaining = float(sc.N_a)
    attempts = 0.0
    for _ in range(m):
        attempts += remaining
        remaining *= 1 - p
    return attempts * p / (sc.T_move + m * (sc.T_init + sc.T_depump) + sc.T_REG * attempts)


@pytest.mark.parametrize("m", [1, 2, 5, 17, 50])
def test_rate_matches_round_bookkeeping(m):
    sc = RateScenario()
    assert bell_pair_rate(sc, 0.0619, m).rate == pytest.approx(rate_reference(sc, 0.0619, m), rel=1e-12)


def test_rate_first_round_design_point():
    assert bell_pair_rate(RateScenario(), 0.0619, 1).rate == pytest.approx(2.6e4, rel=0.10)


def test_rate_deterministic_success():
    sc = RateScenario(N_a=1)
    expected = 1.0 / (sc.T_move + sc.T_init + sc.T_depump + sc.T_REG)
    assert bell_pair_rate(sc, 1.0, 1).rate == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("p", [0.02, 0.0619, 0.2])
def test_rate_unimodal_in_rounds(p):
    rates = np.array(bell_pair_rate(RateScenario(), p, 1).rates)
    d = np.diff(rates)
    peak = int(np.argmax(rates))
    assert np.all(d[:peak] >= 0) and np.all(d[peak:] <= 0)


def test_rate_rejects_zero_rounds():
    with pytest.raises(ValueError):
        bell_pair_rate(RateScenario(), 0.1, 0)


def test_parallel_links_match_analytic_rate():
    res = parallel_link_sim(5, 0.01, 10e-6, 10.0, seed=3)
    expected = analytic_link_rate(5, 0.01, 10e-6)
    assert expected == pytest.approx(5e3)
    assert abs(res.rate - expected) < 3 * math.sqrt(expected * 10.0) / 10.0


def test_single_link_mean_attempts():
    res = parallel_link_sim(1, 0.01, 10e-6, 10.0, seed=4)
    times = np.array([t for t, _ in res.events])
    gaps = np.diff(np.concatenate([[0.0], times])) / 10e-6
    sigma = math.sqrt(1 - 0.01) / 0.01 / math.sqrt(gaps.size)
    assert abs(gaps.mean() - 100.0) < 3 * sigma


def test_certain_success_rate_exact():
    res = parallel_link_sim(3, 1.0, 10e-6, 0.01)
    assert res.rate == 3 / 10e-6


def test_link_sim_deterministic():
    runs = [(4, 0.02, 1e-5, 1.0, 8)] * 4
    with ThreadPoolExecutor(4) as pool:
        results = list(pool.map(lambda a: parallel_link_sim(*a), runs))
    assert all(r.events == results[0].events for r in results)
    assert parallel_link_sim(4, 0.02, 1e-5, 1.0, 9).events != results[0].events


def test_link_sim_rejects_bad_duration():
    with pytest.raises(ValueError):
        parallel_link_sim(2, 0.1, 1e-5, 0.0)
