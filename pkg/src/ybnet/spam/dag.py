"""Directed acyclic graph models of measurement sequences.

File grammar, one statement per line, ``#`` starts a comment::

    param <name> = <value> +- <sigma>
    unknown <name>
    node <name> [terminal "<outcome>"]
    edge <from> -> <to> : <expr>

Expressions use identifiers, decimal literals, ``+ - *`` and parentheses.
Outcome labels are space-separated tokens such as ``"B0 D1 B2"``.
"""

from __future__ import annotations

import ast
import graphlib
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PARAM_RE = re.compile(rf"^param\s+({_IDENT})\s*=\s*({_NUM})\s*\+-\s*({_NUM})$")
_UNKNOWN_RE = re.compile(rf"^unknown\s+({_IDENT})$")
_NODE_RE = re.compile(rf'^node\s+({_IDENT})(?:\s+terminal\s+"([^"]*)")?$')
_EDGE_RE = re.compile(rf"^edge\s+({_IDENT})\s*->\s*({_IDENT})\s*:\s*(.+)$")
_EXPR_CHARS = re.compile(r"^[A-Za-z0-9_.\s+\-*()]+$")

#: Tolerance on weight sums and weight range at load time.
SUM_TOLERANCE = 1e-9
#: Number of random parameter assignments checked at load time.
N_VALIDATION_SAMPLES = 1000


class DagError(ValueError):
    """Malformed graph file or invalid model."""


@dataclass(frozen=True)
class WeightExpr:
    """Validated edge-weight expression."""

    text: str
    names: frozenset[str]
    tree: ast.Expression = field(compare=False, repr=False)

    def evaluate(self, values: Mapping[str, object]):
        return eval(compile(self.tree, "<weight>", "eval"), {"__builtins__": {}}, dict(values))  # noqa: S307


def parse_expr(text: str, line: int | None = None) -> WeightExpr:
    """Parse an edge weight, admitting only ``+ - *``, parentheses, names and numbers."""
    where = f" at line {line}" if line is not None else ""
    if not _EXPR_CHARS.match(text):
        raise DagError(f"invalid characters in expression {text!r}{where}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise DagError(f"cannot parse expression {text!r}{where}") from exc
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            names.add(node.id)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise DagError(f"unsupported literal in {text!r}{where}")
        elif isinstance(node, ast.BinOp):
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
                raise DagError(f"unsupported operator in {text!r}{where}")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise DagError(f"unsupported operator in {text!r}{where}")
        elif not isinstance(node, (ast.Expression, ast.Load, ast.operator, ast.unaryop)):
            raise DagError(f"unsupported syntax in {text!r}{where}")
    return WeightExpr(text.strip(), frozenset(names), tree)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    weight: WeightExpr
    line: int


@dataclass
class DagModel:
    """Validated sequence graph.

    Attributes:
        name: Model name used to address measurement targets.
        nodes: Node name to terminal outcome label, or ``None`` for internal nodes.
        edges: Weighted edges.
        params: Fixed parameters as ``name -> (value, sigma)``.
        unknowns: Parameters to be solved for.
        order: Nodes in topological order, root first.
    """

    name: str
    nodes: dict[str, str | None]
    edges: list[Edge]
    params: dict[str, tuple[float, float]]
    unknowns: tuple[str, ...]
    order: tuple[str, ...] = ()
    _fn: object = field(default=None, repr=False, compare=False)

    @property
    def root(self) -> str:
        return self.order[0]

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(self.params) + self.unknowns

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(sorted({o for o in self.nodes.values() if o is not None}))

    def fixed_values(self) -> dict[str, float]:
        return {k: v for k, (v, _) in self.params.items()}

    def outgoing(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.src == node]

    def _compiled(self):
        if self._fn is None:
            self._fn = _compile(self)
        return self._fn

    def evaluate(self, assignment: Mapping[str, object]) -> dict[str, object]:
        """Outcome probabilities; parameter values may be scalars or arrays."""
        missing = [p for p in self.parameter_names if p not in assignment]
        if missing:
            raise KeyError(f"missing parameter(s) for {self.name}: {', '.join(missing)}")
        return self._compiled()(assignment)


class _Rename(ast.NodeTransformer):
    def visit_Name(self, node: ast.Name) -> ast.Name:
        return ast.copy_location(ast.Name(id="a_" + node.id, ctx=ast.Load()), node)


def _compile(dag: DagModel):
    """Generate a straight-line function accumulating path probability in topological order."""
    idx = {n: i for i, n in enumerate(dag.order)}
    incoming: dict[str, list[Edge]] = {n: [] for n in dag.order}
    for e in dag.edges:
        incoming[e.dst].append(e)
    lines = ["def _f(P):"]
    for p in dag.parameter_names:
        lines.append(f"    a_{p} = P[{p!r}]")
    lines.append("    v0 = 1.0")
    for n in dag.order[1:]:
        terms = [
            f"v{idx[e.src]} * ({ast.unparse(_Rename().visit(ast.parse(e.weight.text, mode='eval')).body)})"
            for e in incoming[n]
        ]
        lines.append(f"    v{idx[n]} = " + " + ".join(terms))
    lines.append("    out = {}")
    by_outcome: dict[str, list[int]] = {}
    for n, label in dag.nodes.items():
        if label is not None:
            by_outcome.setdefault(label, []).append(idx[n])
    for label in sorted(by_outcome):
        lines.append(f"    out[{label!r}] = " + " + ".join(f"v{i}" for i in by_outcome[label]))
    lines.append("    return out")
    ns: dict = {"__builtins__": {}}
    exec("\n".join(lines), ns)  # noqa: S102  generated from validated expressions only
    return ns["_f"]


def sample_domain(dag: DagModel, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Random assignments: fixed parameters within 3 sigma (clipped to [0, 1]), unknowns in [0, 1]."""
    out = {}
    for name, (v, s) in dag.params.items():
        lo, hi = max(0.0, v - 3 * s), min(1.0, v + 3 * s)
        out[name] = rng.uniform(lo, hi, n) if hi > lo else np.full(n, v)
    for name in dag.unknowns:
        out[name] = rng.uniform(0.0, 1.0, n)
    return out


def parse_dag(text: str, name: str = "dag", n_samples: int = N_VALIDATION_SAMPLES, seed: int = 0) -> DagModel:
    """Parse and validate a graph file.

    Raises:
        DagError: On syntax errors, undeclared names, cycles, several roots,
            weights outside [0, 1] or outgoing weights that do not sum to one.
    """
    params: dict[str, tuple[float, float]] = {}
    unknowns: list[str] = []
    nodes: dict[str, str | None] = {}
    raw_edges: list[tuple[str, str, WeightExpr, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _PARAM_RE.match(line):
            pname, val, sig = m.group(1), float(m.group(2)), float(m.group(3))
            if pname in params or pname in unknowns:
                raise DagError(f"parameter {pname!r} declared twice at line {lineno}")
            if sig < 0:
                raise DagError(f"negative uncertainty for {pname!r} at line {lineno}")
            params[pname] = (val, sig)
        elif m := _UNKNOWN_RE.match(line):
            pname = m.group(1)
            if pname in params or pname in unknowns:
                raise DagError(f"parameter {pname!r} declared twice at line {lineno}")
            unknowns.append(pname)
        elif m := _NODE_RE.match(line):
            nname = m.group(1)
            if nname in nodes:
                raise DagError(f"node {nname!r} declared twice at line {lineno}")
            nodes[nname] = m.group(2)
        elif m := _EDGE_RE.match(line):
            raw_edges.append((m.group(1), m.group(2), parse_expr(m.group(3), lineno), lineno))
        else:
            raise DagError(f"syntax error at line {lineno}: {raw.strip()!r}")
    if not nodes:
        raise DagError("no nodes declared")
    declared = set(params) | set(unknowns)
    edges = []
    for src, dst, expr, lineno in raw_edges:
        for nn in (src, dst):
            if nn not in nodes:
                raise DagError(f"undeclared node {nn!r} at line {lineno}")
        undeclared = sorted(expr.names - declared)
        if undeclared:
            raise DagError(f"undeclared parameter {undeclared[0]!r} at line {lineno}")
        if nodes[src] is not None:
            raise DagError(f"terminal node {src!r} has an outgoing edge at line {lineno}")
        edges.append(Edge(src, dst, expr, lineno))

    graph = {n: set() for n in nodes}
    for e in edges:
        graph[e.dst].add(e.src)
    try:
        order = tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        raise DagError(f"not acyclic: cycle through {exc.args[1]}") from exc
    roots = [n for n in nodes if not graph[n]]
    if len(roots) != 1:
        raise DagError(f"expected exactly one root node, found {sorted(roots)}")
    has_out = {e.src for e in edges}
    for n, label in nodes.items():
        if label is None and n not in has_out:
            raise DagError(f"non-terminal node {n!r} has no outgoing edges")
    # the root must come first for the generated evaluator
    order = (roots[0],) + tuple(n for n in order if n != roots[0])
    dag = DagModel(name, nodes, edges, params, tuple(unknowns), order)
    _check_weights(dag, n_samples, seed)
    return dag


def _check_weights(dag: DagModel, n: int, seed: int) -> None:
    sample = sample_domain(dag, n, np.random.default_rng(seed))
    sums: dict[str, np.ndarray] = {}
    for e in dag.edges:
        w = np.broadcast_to(np.asarray(e.weight.evaluate(sample), dtype=float), (n,))
        if np.any(w < -SUM_TOLERANCE) or np.any(w > 1 + SUM_TOLERANCE):
            raise DagError(f"weight of edge {e.src} -> {e.dst} leaves [0, 1] (line {e.line})")
        sums[e.src] = sums.get(e.src, 0.0) + w
    for node, s in sums.items():
        worst = float(np.max(np.abs(s - 1.0)))
        if worst > SUM_TOLERANCE:
            raise DagError(f"outgoing weights of node {node!r} do not sum to one (max deviation {worst:.3g})")


def outcome_distribution(dag: DagModel, assignment: Mapping[str, float]) -> dict[str, float]:
    """Probability of every terminal outcome under a full parameter assignment.

    Raises:
        KeyError: If a parameter is missing.
    """
    return {k: float(v) for k, v in dag.evaluate(assignment).items()}


def parse_query(query: str) -> tuple[frozenset[str], frozenset[str]]:
    """Split ``"B0 B1 | B2"`` into event and condition token sets."""
    event, _, given = query.partition("|")
    ev, gv = frozenset(event.split()), frozenset(given.split())
    if not ev:
        raise ValueError(f"empty event in query {query!r}")
    return ev, gv


def conditional_probability(dist: Mapping[str, object], query: str):
    """``Pr(event | condition)`` from an outcome distribution; tokens match by set inclusion."""
    ev, gv = parse_query(query)
    num = 0.0
    den = 0.0
    for label, p in dist.items():
        toks = set(label.split())
        if gv <= toks:
            den = den + p
            if ev <= toks:
                num = num + p
    if np.any(np.asarray(den) <= 0):
        raise ZeroDivisionError(f"condition of {query!r} has zero probability")
    return num / den
