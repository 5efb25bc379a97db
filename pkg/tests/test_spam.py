"""Sequence-graph parsing, evaluation, inversion and readout correction."""

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ybnet.rng import stream
from ybnet.spam import corpus
from ybnet.spam.bell import (
    ReadoutModel,
    apply_readout_zz,
    correct_bell_correlations,
    invert_readout_zz,
    noisy_bell_state,
    simulate_raw_counts,
)
from ybnet.spam.dag import DagError, conditional_probability, outcome_distribution, parse_dag
from ybnet.spam.inversion import (
    Target,
    beta_parameters,
    clock_pi_correction,
    invert,
    mc_uncertainty,
    sample_parameter,
    targets_from_dataset,
)
from ybnet.spam.synthetic import random_graph
from ybnet.tomography import bell_fidelity_bound, true_bell_fidelity

MINIMAL = """
unknown p
node A
node B terminal "B"
node C terminal "C"
edge A -> B : p
edge A -> C : 1 - p
"""


def brute_force_paths(dag, values):
    """Independent oracle: enumerate every root-to-terminal path with an explicit stack."""
    out = {o: 0.0 for o in dag.outcomes}
    stack = [(dag.root, 1.0)]
    while stack:
        node, prob = stack.pop()
        label = dag.nodes[node]
        if label is not None:
            out[label] += prob
            continue
        for e in dag.edges:
            if e.src == node:
                w = eval(e.weight.text, {"__builtins__": {}}, dict(values))  # noqa: S307
                stack.append((e.dst, prob * w))
    return out


# --- parsing --------------------------------------------------------------


def test_minimal_graph_parses_and_evaluates():
    dag = parse_dag(MINIMAL)
    assert dag.outcomes == ("B", "C")
    dist = outcome_distribution(dag, {"p": 0.3})
    assert dist["B"] == pytest.approx(0.3, abs=1e-15)
    assert dist["C"] == pytest.approx(0.7, abs=1e-15)


def test_cycle_rejected():
    text = """
unknown p
node A
node B
node C terminal "C"
edge A -> B : p
edge A -> C : 1 - p
edge B -> A : 1
"""
    with pytest.raises(DagError, match="not acyclic"):
        parse_dag(text)


def test_undeclared_parameter_names_line():
    text = MINIMAL.replace("1 - p", "1 - q")
    with pytest.raises(DagError, match=r"undeclared parameter 'q' at line 7"):
        parse_dag(text)


def test_sum_violation_names_node():
    text = MINIMAL.replace("1 - p", "0.9 * (1 - p)")
    with pytest.raises(DagError, match="node 'A'"):
        parse_dag(text)


def test_sum_violation_seen_only_by_sampling():
    # sums to one only at p = 0.5
    text = MINIMAL.replace("1 - p", "0.5 + 0.5 * p - p * p + 0.25 - 0.25 + p * p - 0.5 * p - p + 0.5")
    with pytest.raises(DagError, match="do not sum to one"):
        parse_dag(text.replace("0.5 * p - p + 0.5", "0.5 * p - p + 0.5 + 0.1 * (p - 0.5)"))


def test_syntax_errors():
    with pytest.raises(DagError, match="syntax error at line 2"):
        parse_dag("node A\nbogus line\n")
    with pytest.raises(DagError, match="unsupported operator"):
        parse_dag(MINIMAL.replace("1 - p", "1 - p ** 1"))
    with pytest.raises(DagError, match="invalid characters"):
        parse_dag(MINIMAL.replace("1 - p", "__import__('os')"))
    with pytest.raises(DagError, match="invalid characters"):
        parse_dag(MINIMAL.replace("1 - p", "1 / p"))


def test_comments_and_params():
    text = "# header\nparam p = 0.25 +- 0.01  # fixed\n" + MINIMAL.replace("unknown p\n", "")
    dag = parse_dag(text)
    assert dag.params == {"p": (0.25, 0.01)}
    assert outcome_distribution(dag, dag.fixed_values())["B"] == 0.25


def test_missing_parameter():
    with pytest.raises(KeyError):
        outcome_distribution(parse_dag(MINIMAL), {})


def test_shipped_corpus_parses_with_conditioned_outcomes():
    dags = corpus.load_all()
    assert set(dags) == {"clock_pi", "clock_2pi", "raman_pi", "reg_pi", "repump_lifetime", "depump_lifetime"}
    dag = dags["clock_pi"]
    dist = dag.evaluate(dag.fixed_values() | {u: 0.98 for u in dag.unknowns})
    assert 0.0 < conditional_probability(dist, "B0 B1 | B2") < 1.0
    assert any(len(o.split()) == 3 for o in dags["clock_pi"].outcomes)


def test_shipped_files_match_generator():
    from importlib import resources

    for name in corpus.SEQUENCES:
        shipped = resources.files(corpus.DATA_PACKAGE).joinpath(f"{name}.dag").read_text()
        assert shipped == corpus.build_sequence(name)
    assert corpus.load_dataset() == corpus.build_dataset(corpus.load_all())


@pytest.mark.parametrize("name", sorted(corpus.SEQUENCES))
def test_shipped_distribution_normalized(name):
    from ybnet.spam.dag import sample_domain

    dag = corpus.load(name)
    sample = sample_domain(dag, 1000, stream(0, 50))
    dist = dag.evaluate(sample)
    total = sum(np.asarray(v, dtype=float) for v in dist.values())
    assert np.max(np.abs(total - 1.0)) < 1e-9


@pytest.mark.parametrize("name", sorted(corpus.SEQUENCES))
def test_shipped_matches_path_enumeration(name):
    dag = corpus.load(name)
    rng = stream(0, 51)
    values = dag.fixed_values() | {u: float(rng.random()) for u in dag.unknowns}
    ref = brute_force_paths(dag, values)
    got = dag.evaluate(values)
    for k in ref:
        assert float(got[k]) == pytest.approx(ref[k], abs=1e-12)


@settings(max_examples=60)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 12), extra=st.floats(0.0, 0.6))
def test_random_graph_matches_path_enumeration(seed, n, extra):
    rng = np.random.default_rng(seed)
    dag = random_graph(rng, n, 2, extra).dag
    values = dag.fixed_values() | {u: float(rng.random()) for u in dag.unknowns}
    ref = brute_force_paths(dag, values)
    got = dag.evaluate(values)
    assert sum(ref.values()) == pytest.approx(1.0, abs=1e-12)
    for k in ref:
        assert float(got[k]) == pytest.approx(ref[k], abs=1e-12)


# --- inversion ------------------------------------------------------------


def test_identity_model_inversion():
    dag = parse_dag(MINIMAL, name="id")
    res = invert([dag], [Target("id", "B", 0.37)], ["p"])
    assert res.mean["p"] == pytest.approx(0.37, abs=1e-8)
    assert not res.flagged


def test_underconstrained():
    text = MINIMAL.replace("unknown p", "unknown p\nunknown r").replace("1 - p", "(1 - p) * r + (1 - p) * (1 - r)")
    dag = parse_dag(text, name="u")
    with pytest.raises(ValueError, match="underconstrained"):
        invert([dag], [Target("u", "B", 0.3)], ["p", "r"])


def test_inconsistent_targets_flagged():
    dag = parse_dag(MINIMAL, name="id")
    res = invert([dag], [Target("id", "B", 0.3), Target("id", "C", 0.3)], ["p"])
    assert res.flagged and res.residual > 1e-6


def _identifiable_system(rng):
    """Two unknowns on a random graph of at most 12 nodes, with a well-conditioned Jacobian."""
    while True:
        dag = random_graph(rng, int(rng.integers(4, 13)), 2).dag
        if len(dag.unknowns) < 2 or len(dag.outcomes) < 3:
            continue
        truth = {u: float(rng.uniform(0.1, 0.9)) for u in dag.unknowns}
        queries = list(dag.outcomes[:-1])

        def forward(x):
            dist = dag.evaluate(dag.fixed_values() | dict(zip(dag.unknowns, x)))
            return np.array([float(dist[q]) for q in queries])

        x0 = np.array(list(truth.values()))
        jac = np.column_stack([(forward(x0 + 1e-6 * e) - forward(x0 - 1e-6 * e)) / 2e-6 for e in np.eye(2)])
        s = np.linalg.svd(jac, compute_uv=False)
        if s[-1] > 1e-3 and s[-1] > 1e-2 * s[0]:
            return dag, [Target(dag.name, q, v) for q, v in zip(queries, forward(x0))], truth


def test_forward_invert_round_trip():
    rng = stream(0, 52)
    worst = 0.0
    for _ in range(100):
        dag, targets, truth = _identifiable_system(rng)
        res = invert([dag], targets, tuple(truth))
        worst = max(worst, max(abs(res.mean[u] - truth[u]) for u in truth))
    assert worst < 1e-6


def test_clock_pi_point_correction():
    raw = 1 - corpus.CLOCK_PI_COUNTS[0] / corpus.CLOCK_PI_COUNTS[1]
    assert raw == pytest.approx(0.978, abs=5e-4)
    res = clock_pi_correction(draws=0)
    assert res.mean["F_clock_pi"] == pytest.approx(0.985, abs=0.005)


def test_dataset_targets():
    targets = targets_from_dataset(corpus.load_dataset())
    assert {t.dag for t in targets} == {"clock_pi", "repump_lifetime", "depump_lifetime"}
    with pytest.raises(ValueError):
        Target.from_counts("x", "B", 5, 3)


# --- Monte Carlo uncertainty ----------------------------------------------


def test_beta_moments():
    a, b = beta_parameters(0.985, 0.004)
    mean, var = stats.beta.stats(a, b, moments="mv")
    assert mean == pytest.approx(0.985, rel=1e-12)
    assert math.sqrt(var) == pytest.approx(0.004, rel=1e-10)


@settings(max_examples=50)
@given(mu=st.floats(0.01, 0.99), frac=st.floats(0.01, 0.95))
def test_beta_moments_property(mu, frac):
    sigma = math.sqrt(frac * mu * (1 - mu))
    a, b = beta_parameters(mu, sigma)
    mean, var = stats.beta.stats(a, b, moments="mv")
    assert mean == pytest.approx(mu, rel=1e-9)
    assert var == pytest.approx(sigma**2, rel=1e-9)


def test_beta_infeasible_falls_back(caplog):
    with pytest.raises(ValueError):
        beta_parameters(0.5, 0.6)
    rng = stream(0, 53)
    with caplog.at_level(logging.WARNING):
        v = sample_parameter(0.5, 0.6, rng)
    assert 0.0 <= v <= 1.0
    assert "clipped Gaussian" in caplog.text


def test_zero_uncertainty_draws_collapse():
    dag = parse_dag(MINIMAL, name="id")
    res = mc_uncertainty([dag], [Target("id", "B", 0.4)], ["p"], draws=10_000)
    assert res.std["p"] < 1e-3
    assert res.mean["p"] == pytest.approx(0.4, abs=1e-8)


def _counted_system():
    text = """
param f = 0.9 +- 0.02
unknown p
node A
node X
node B terminal "B"
node C terminal "C"
edge A -> X : f
edge A -> C : 1 - f
edge X -> B : p
edge X -> C : 1 - p
"""
    return parse_dag(text, name="m"), [Target.from_counts("m", "B", 540, 1000)]


def test_mc_mean_converges():
    dag, targets = _counted_system()
    small = mc_uncertainty([dag], targets, ["p"], draws=400, seed=1)
    large = mc_uncertainty([dag], targets, ["p"], draws=800, seed=1)
    assert abs(large.mean["p"] - small.mean["p"]) < 2 * small.std["p"] / math.sqrt(400)


def test_mc_deterministic_across_workers():
    dag, targets = _counted_system()
    one = mc_uncertainty([dag], targets, ["p"], draws=300, seed=9, workers=1)
    three = mc_uncertainty([dag], targets, ["p"], draws=300, seed=9, workers=3)
    again = mc_uncertainty([dag], targets, ["p"], draws=300, seed=9, workers=1)
    np.testing.assert_array_equal(one.samples, three.samples)
    assert one.mean == again.mean and one.std == again.std


def test_mc_std_matches_delta_method():
    dag, targets = _counted_system()
    res = mc_uncertainty([dag], targets, ["p"], draws=2000, seed=2)
    # p = m / f with independent m ~ Beta(540.5, 460.5) and f ~ moment-matched beta
    m, f = 0.54, 0.9
    sm = math.sqrt(m * (1 - m) / 1002)
    expected = (m / f) * math.hypot(sm / m, 0.02 / f)
    assert res.std["p"] == pytest.approx(expected, rel=0.1)


# --- readout correction ---------------------------------------------------

PHASES = np.linspace(0, 2 * np.pi, 12, endpoint=False)


def test_perfect_readout_leaves_data_unchanged():
    rho = noisy_bell_state(0.03, 0.924)
    raw = simulate_raw_counts(rho, ReadoutModel(), 3000, PHASES, 500, stream(0, 54))
    corrected, est = correct_bell_correlations(raw, ReadoutModel())
    ref = bell_fidelity_bound(raw)
    assert est.fidelity == pytest.approx(ref.fidelity, abs=1e-12)
    np.testing.assert_allclose(corrected.zz, raw.zz, atol=1e-9)


def test_readout_matrix_round_trip():
    ro = ReadoutModel(0.95, 0.99)
    p = np.array([0.45, 0.05, 0.03, 0.47])
    np.testing.assert_allclose(invert_readout_zz(apply_readout_zz(p, ro), ro), p, atol=1e-12)


def test_correction_in_reported_regime():
    rho = noisy_bell_state(0.03, 0.924)
    ro = ReadoutModel.from_pulse_fidelities(0.985)
    raw = simulate_raw_counts(rho, ro, 3000, PHASES, 500, stream(0, 7))
    _, est = correct_bell_correlations(raw, ro)
    assert est.fidelity == pytest.approx(0.950, abs=0.010 + 0.01)
    assert est.fidelity > bell_fidelity_bound(raw).fidelity


def test_correction_recovers_injected_fidelity():
    rng = stream(0, 55)
    ro = ReadoutModel.from_pulse_fidelities(0.985)
    misses = 0
    for i in range(40):
        rho = noisy_bell_state(rng.uniform(0.0, 0.1), rng.uniform(0.7, 0.9))
        raw = simulate_raw_counts(rho, ro, 20000, PHASES, 3000, rng)
        _, est = correct_bell_correlations(raw, ro)
        misses += abs(est.fidelity - true_bell_fidelity(rho)) > 2 * est.statistical_sigma
    # two-sigma coverage is about 95%
    assert misses <= 6


def test_readout_validation():
    with pytest.raises(ValueError):
        ReadoutModel(0.4, 0.5)
    with pytest.raises(ValueError):
        noisy_bell_state(0.1, 0.95)
