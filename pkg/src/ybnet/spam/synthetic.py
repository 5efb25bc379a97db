"""Random small sequence graphs and a path-enumeration reference evaluator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dag import DagModel, parse_dag


def enumerate_paths(dag: DagModel, values: Mapping[str, float]) -> dict[str, float]:
    """Outcome probabilities by summing weight products over every root-to-terminal path.

    Weights are evaluated from their syntax trees, independently of the
    generated evaluator used by :meth:`DagModel.evaluate`.
    """
    children: dict[str, list] = {n: [] for n in dag.nodes}
    for e in dag.edges:
        children[e.src].append((e.dst, float(e.weight.evaluate(values))))
    out: dict[str, float] = {o: 0.0 for o in dag.outcomes}

    def walk(node: str, prob: float) -> None:
        label = dag.nodes[node]
        if label is not None:
            out[label] += prob
            return
        for dst, w in children[node]:
            walk(dst, prob * w)

    walk(dag.root, 1.0)
    return out


@dataclass
class RandomGraph:
    """Generated graph with its declared stick-breaking parameters."""

    dag: DagModel
    text: str
    parameters: tuple[str, ...]


def _stick_weights(names: list[str]) -> list[str]:
    weights = []
    rest = ""
    for n in names:
        weights.append(f"{rest}{n}")
        rest = f"{rest}(1 - {n}) * "
    weights.append(rest[:-3] if rest else "1")
    return weights


def random_graph(
    rng: np.random.Generator,
    n_nodes: int,
    n_unknowns: int = 0,
    extra_edge_prob: float = 0.3,
    name: str = "random",
) -> RandomGraph:
    """Random single-root graph whose outgoing weights sum to one by construction.

    A random tree is grown first, then forward edges are added with
    probability ``extra_edge_prob`` so that some nodes have several parents.
    Every split uses stick-breaking parameters; the first ``n_unknowns`` of
    them are declared unknown, the rest fixed at random values.
    Leaves become terminals with distinct labels ``o0, o1, ...``.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    kids: dict[int, list[int]] = {i: [] for i in range(n_nodes)}
    for i in range(1, n_nodes):
        kids[int(rng.integers(0, i))].append(i)
    for u in range(n_nodes):
        if not kids[u]:
            continue
        for v in range(u + 1, n_nodes):
            if v not in kids[u] and rng.random() < extra_edge_prob:
                kids[u].append(v)
    lines = []
    edges = []
    params: list[str] = []
    for u in range(n_nodes):
        k = len(kids[u])
        if k == 0:
            continue
        names = [f"q{len(params) + j}" for j in range(k - 1)]
        params.extend(names)
        for v, w in zip(sorted(kids[u]), _stick_weights(names)):
            edges.append(f"edge n{u} -> n{v} : {w}")
    n_unknowns = min(n_unknowns, len(params))
    for j, p in enumerate(params):
        if j < n_unknowns:
            lines.append(f"unknown {p}")
        else:
            lines.append(f"param {p} = {float(rng.uniform(0.05, 0.95))!r} +- 0.0")
    leaf = 0
    for u in range(n_nodes):
        if kids[u]:
            lines.append(f"node n{u}")
        else:
            lines.append(f'node n{u} terminal "o{leaf}"')
            leaf += 1
    text = "\n".join(lines + edges) + "\n"
    return RandomGraph(parse_dag(text, name=name, n_samples=64), text, tuple(params))
