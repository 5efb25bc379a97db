"""Generator and loader for the shipped sequence graphs.

Every sequence follows the three-image pattern: load and pump into ``gm``,
image, apply the operation under test, image, collapse the metastable
population back to ``gm``, image. Nodes carry the physical state and the
image outcomes so far. Physical states:

    gm, gp   ground-state spin sublevels (only gm fluoresces)
    up, dn   metastable qubit states
    empty    empty tweezer or lost atom

Run ``python -m ybnet.spam.corpus`` to regenerate ``data/``.
"""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Callable

from .dag import DagModel, conditional_probability, parse_dag

STATES = ("gm", "gp", "up", "dn", "empty")

#: Fixed constants as (value, sigma). Exact fractions are written as decimals.
CONSTANTS: dict[str, tuple[float, float]] = {
    "p_load": (0.603, 0.005),
    "eta_op": (0.98, 0.01),
    "F_bright": (0.97, 0.01),
    "F_dark": (0.996, 0.001),
    "eps_flip_m": (0.013, 0.002),
    "eps_flip_p": (0.010, 0.006),
    "eta_surv_m": (0.99, 0.01),
    "eta_surv_p": (0.9960, 0.0001),
    "y_d_p1": (0.35, 0.0),
    "y_d_p2": (0.01, 0.0),
    "r_d_gm": (round(2 / 9, 12), 0.0),
    "y_s_p1": (0.367, 0.0),
    "y_s_p2": (0.503, 0.0),
    "r_s_gm": (round(275 / 729, 12), 0.0),
}

UNKNOWN_DESCRIPTIONS = {
    "F_clock_pi": "clock pi-pulse fidelity",
    "F_clock_2pi": "clock 2pi-pulse fidelity",
    "F_raman_pi": "Raman pi-pulse fidelity",
    "F_reg_pi": "telecom pi-pulse fidelity",
    "eta_repump": "repump probability from the metastable states",
    "eps_depump": "tweezer scattering out of the metastable states",
}

Branches = list[tuple[str, str, str | None]]
Stage = Callable[[str, int], Branches]


def _load(state: str, k: int) -> Branches:
    if state != "start":
        raise ValueError("load must be the first stage")
    return [("gm", "p_load*eta_op", None), ("gp", "p_load*(1-eta_op)", None), ("empty", "1-p_load", None)]


def _depump(state: str) -> list[tuple[str, str]]:
    # tweezer light scatters the metastable states through 3S1: back to 3P0,
    # to the ground state through 3P1 (split by r_s_gm), or lost through 3P2
    if state not in ("up", "dn"):
        return [(state, "1")]
    near, far = ("gm", "gp") if state == "up" else ("gp", "gm")
    return [
        (state, "(1-eps_depump) + eps_depump*(1-y_s_p1-y_s_p2)"),
        (near, "eps_depump*y_s_p1*r_s_gm"),
        (far, "eps_depump*y_s_p1*(1-r_s_gm)"),
        ("empty", "eps_depump*y_s_p2"),
    ]


def _detect(state: str, k: int) -> list[tuple[str, str, str]]:
    if state == "gm":
        post = [("gm", "eta_surv_m*(1-eps_flip_m)"), ("gp", "eta_surv_m*eps_flip_m"), ("empty", "(1-eta_surv_m)")]
        bright, dark = "F_bright", "(1-F_bright)"
    elif state == "gp":
        post = [("gp", "eta_surv_p*(1-eps_flip_p)"), ("gm", "eta_surv_p*eps_flip_p"), ("empty", "(1-eta_surv_p)")]
        bright, dark = "(1-F_dark)", "F_dark"
    else:
        post = [(state, "1")]
        bright, dark = "(1-F_dark)", "F_dark"
    out = []
    for tok, w in ((f"B{k}", bright), (f"D{k}", dark)):
        for s, pw in post:
            out.append((s, w if pw == "1" else f"{w}*{pw}", tok))
    return out


def _image(state: str, k: int) -> Branches:
    # scattering of shelved atoms precedes detection; survival and spin flips follow it
    out = []
    for mid, w1 in _depump(state):
        for s, w2, tok in _detect(mid, k):
            out.append((s, w2 if w1 == "1" else f"({w1})*{w2}", tok))
    return out


def _rotation(a: str, b: str, fid: str, full_turn: bool) -> Stage:
    """Pulse coupling ``a`` and ``b``; ``fid`` is the success probability."""

    def stage(state: str, k: int) -> Branches:
        if state not in (a, b):
            return [(state, "1", None)]
        other = b if state == a else a
        if full_turn:
            return [(state, fid, None), (other, f"(1-{fid})", None)]
        return [(other, fid, None), (state, f"(1-{fid})", None)]

    return stage


def _reg_pi(state: str, k: int) -> Branches:
    # excitation to the F=3/2, mF=3/2 level, followed by decay: back to up,
    # to the ground state through 3P1 (split by r_d_gm), or lost through 3P2
    if state != "up":
        return [(state, "1", None)]
    return [
        ("up", "(1-F_reg_pi) + F_reg_pi*(1-y_d_p1-y_d_p2)", None),
        ("gm", "F_reg_pi*y_d_p1*r_d_gm", None),
        ("gp", "F_reg_pi*y_d_p1*(1-r_d_gm)", None),
        ("empty", "F_reg_pi*y_d_p2", None),
    ]


def _hold_telecom(state: str, k: int) -> Branches:
    # telecom light repumps the metastable states through 3D1 -> 3P1
    if state not in ("up", "dn"):
        return [(state, "1", None)]
    return [
        (state, "(1-eta_repump)", None),
        ("gm", "eta_repump*r_d_gm", None),
        ("gp", "eta_repump*(1-r_d_gm)", None),
    ]


def _hold_dark(state: str, k: int) -> Branches:
    return [(s, w, None) for s, w in _depump(state)]


def _optical_pump(state: str, k: int) -> Branches:
    if state in ("gm", "gp"):
        return [("gm", "eta_op", None), ("gp", "(1-eta_op)", None)]
    return [(state, "1", None)]


def _collapse(state: str, k: int) -> Branches:
    # repump the metastable states, then optically pump the ground state into gm
    if state in ("up", "dn"):
        return [
            ("gm", "eta_repump*eta_op", None),
            ("gp", "eta_repump*(1-eta_op)", None),
            (state, "(1-eta_repump)", None),
        ]
    if state in ("gm", "gp"):
        return [("gm", "eta_op", None), ("gp", "(1-eta_op)", None)]
    return [(state, "1", None)]


CLOCK_PI = _rotation("gm", "up", "F_clock_pi", False)

SEQUENCES: dict[str, tuple[str, list[Stage]]] = {
    "clock_pi": ("pi pulse on the clock transition", [_load, _image, CLOCK_PI, _image, _collapse, _image]),
    "clock_2pi": (
        "2pi pulse on the clock transition",
        [_load, _image, _rotation("gm", "up", "F_clock_2pi", True), _image, _collapse, _image],
    ),
    "raman_pi": (
        "Raman pi pulse between the qubit states, read out through clock pi pulses",
        [_load, _image, CLOCK_PI, _rotation("up", "dn", "F_raman_pi", False), CLOCK_PI, _image, _collapse, _image],
    ),
    "reg_pi": (
        "telecom pi pulse from up with decay back into the metastable and ground states",
        [_load, _image, CLOCK_PI, _reg_pi, CLOCK_PI, _image, _collapse, _image],
    ),
    "repump_lifetime": (
        "long hold in up with telecom light, then optical pumping of the ground state",
        [_load, _image, CLOCK_PI, _hold_telecom, _optical_pump, _image, _collapse, _image],
    ),
    "depump_lifetime": (
        "long hold in up without telecom light, then collapse of the survivors into gm",
        [_load, _image, CLOCK_PI, _hold_dark, _collapse, _image, _collapse, _image],
    ),
}

#: Operations whose stage function counts as an image (advances the image index).
_IMAGE_STAGES = {_image}

#: Unknowns solved jointly with each sequence.
UNKNOWNS = ("F_clock_pi", "F_clock_2pi", "F_raman_pi", "F_reg_pi", "eta_repump", "eps_depump")


def build_sequence(name: str) -> str:
    """Render one sequence as graph-file text."""
    description, stages = SEQUENCES[name]
    layer: dict[tuple[str, tuple[str, ...]], str] = {("start", ()): "start"}
    node_lines = []
    edge_lines = []
    used: set[str] = set()
    image_index = 0
    for si, stage in enumerate(stages):
        nxt: dict[tuple[str, tuple[str, ...]], str] = {}
        weights: dict[tuple[str, str], list[str]] = {}
        for (state, hist), src in layer.items():
            for new_state, w, tok in stage(state, image_index):
                key = (new_state, hist + ((tok,) if tok else ()))
                if key not in nxt:
                    nxt[key] = f"s{si + 1}_{new_state}" + ("_" + "".join(key[1]) if key[1] else "")
                weights.setdefault((src, nxt[key]), []).append(w)
        if stage in _IMAGE_STAGES:
            image_index += 1
        last = si == len(stages) - 1
        for (state, hist), nname in nxt.items():
            node_lines.append(f'node {nname} terminal "{" ".join(hist)}"' if last else f"node {nname}")
        for (src, dst), ws in weights.items():
            expr = " + ".join(f"({w})" if len(ws) > 1 else w for w in ws)
            used.update(_names(expr))
            edge_lines.append(f"edge {src} -> {dst} : {expr}")
        layer = nxt
    header = [
        f"# {name}: {description}",
        "# generated by ybnet.spam.corpus; edit the generator, not this file",
    ]
    decls = []
    for p, (v, s) in CONSTANTS.items():
        if p in used:
            decls.append(f"param {p} = {v!r} +- {s!r}")
    for u in UNKNOWNS:
        if u in used:
            decls.append(f"unknown {u}  # {UNKNOWN_DESCRIPTIONS[u]}")
    return "\n".join(header + decls + ["node start"] + node_lines + edge_lines) + "\n"


def _names(expr: str) -> set[str]:
    return set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", expr))


DATA_PACKAGE = "ybnet.spam.data"


def load(name: str) -> DagModel:
    """Parse a shipped graph by name (e.g. ``"clock_pi"``)."""
    text = resources.files(DATA_PACKAGE).joinpath(f"{name}.dag").read_text()
    return parse_dag(text, name=name)


def load_all() -> dict[str, DagModel]:
    return {name: load(name) for name in SEQUENCES}


def load_dataset(name: str = "clock_dataset") -> dict:
    """Measured targets shipped as JSON ``{dag: {query: {count, total}}}``."""
    return json.loads(resources.files(DATA_PACKAGE).joinpath(f"{name}.json").read_text())


#: Reference values used to synthesize the lifetime-sequence datasets.
LIFETIME_TRUTH = {"F_clock_pi": 0.985, "eta_repump": 0.992, "eps_depump": 0.04}
#: Raw clock pi result: Pr(B0 B1 | B2) = 20/900, a raw fidelity of 0.978.
CLOCK_PI_COUNTS = (20, 900)
LIFETIME_TOTAL = 40000
QUERY = "B0 B1 | B2"
#: Loss is invisible once the last image is post-selected, so the lifetime
#: sequences are scored between the first two images. Sharing one query keeps
#: their dependence on the imaging constants equal.
QUERIES = {"depump_lifetime": "B1 | B0", "repump_lifetime": "B1 | B0"}


def build_dataset(dags: dict[str, DagModel]) -> dict:
    """Clock pi counts plus lifetime counts forward-evaluated at :data:`LIFETIME_TRUTH`."""
    data = {"clock_pi": {QUERY: {"count": CLOCK_PI_COUNTS[0], "total": CLOCK_PI_COUNTS[1]}}}
    for name in ("repump_lifetime", "depump_lifetime"):
        dag = dags[name]
        assignment = dag.fixed_values() | {u: LIFETIME_TRUTH[u] for u in dag.unknowns}
        query = QUERIES.get(name, QUERY)
        p = float(conditional_probability(dag.evaluate(assignment), query))
        data[name] = {query: {"count": int(round(p * LIFETIME_TOTAL)), "total": LIFETIME_TOTAL}}
    return data


def write_corpus(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    dags = {}
    for name in SEQUENCES:
        text = build_sequence(name)
        (directory / f"{name}.dag").write_text(text)
        dags[name] = parse_dag(text, name=name)
    (directory / "clock_dataset.json").write_text(json.dumps(build_dataset(dags), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    write_corpus(Path(__file__).parent / "data")
