"""Scenario generation, the scenario text format, and trace export.

Random streams come from numpy's PCG64 seeded through ``SeedSequence(seed)``
and split with ``spawn`` into independent topology / matrix / truth / noise
streams, so a scenario is a pure function of its spec.

Scenario file grammar (one record per line, ``#`` starts a comment)::

    file    := "wlsbp-scenario" VERSION NL meta* "nodes" N NL "dims" D1..DN NL
               record* "end"
    meta    := "meta" KEY VALUE...
    record  := "self" I M NL "A" M DI V... NL "R" M M V... NL "z" M V...
             | "edge" I J M NL "Bij" M DI V... NL "Bji" M DJ V... NL
               "R" M M V... NL "z" M V...
             | "truth" I DI V...
             | "noise_self" I M V...
             | "noise_edge" I J M V...

Matrices are written row-major after their explicit dimensions, every value
with 17 significant digits, so load(save(g)) reproduces g bit for bit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import ErrorTrace
from .graph import GraphError, MeasurementGraph, is_connected
from .trace import RunTrace

FORMAT_TAG = "wlsbp-scenario"
FORMAT_VERSION = 1
TOPOLOGIES = ("chain", "star", "ring", "tree", "random_connected", "loopy13", "explicit")

# Stand-in for the 13-node example network: 12-node ring plus a centre node
# wired to every third ring node. Not a reconstruction of any published figure.
LOOPY13_EDGES = tuple((k, k % 12 + 1) for k in range(1, 13)) + tuple((13, k) for k in (1, 4, 7, 10))
LOOPY13_ZERO_SELF = (2, 5)
LOOPY13_NOTE = "loopy13 is a stand-in topology: ring 1..12 plus node 13 linked to 1,4,7,10"


class ScenarioError(ValueError):
    """Invalid scenario spec or a scenario that violates the model assumptions."""


class ScenarioParseError(ScenarioError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    topology: str
    n: int = 0
    dims: int | tuple[int, ...] = 1
    seed: int = 0
    self_density: float = 0.85
    zero_self: tuple[int, ...] = ()
    self_noise: float = 1.0
    edge_noise: float = 1.0
    extra_edges: int | None = None
    edges: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True, eq=False)
class GroundTruth:
    x_true: tuple[np.ndarray, ...]
    self_noise: dict[int, np.ndarray] = field(default_factory=dict)
    edge_noise: tuple[np.ndarray, ...] = ()


def _topology_edges(spec: ScenarioSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    n = spec.n
    if spec.topology == "chain":
        return [(k, k + 1) for k in range(1, n)]
    if spec.topology == "star":
        return [(1, k) for k in range(2, n + 1)]
    if spec.topology == "ring":
        if n < 3:
            raise ScenarioError("ring needs at least 3 nodes")
        return [(k, k + 1) for k in range(1, n)] + [(n, 1)]
    if spec.topology == "loopy13":
        return list(LOOPY13_EDGES)
    if spec.topology == "explicit":
        return [(int(i), int(j)) for i, j in spec.edges]
    # random recursive tree: node k attaches to a uniformly chosen earlier node
    edges = [(int(rng.integers(1, k)), k) for k in range(2, n + 1)]
    if spec.topology == "tree":
        return edges
    present = {frozenset(e) for e in edges}
    candidates = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)
                  if frozenset((i, j)) not in present]
    extra = max(1, n // 3) if spec.extra_edges is None else spec.extra_edges
    extra = min(extra, len(candidates))
    if extra:
        picks = rng.choice(len(candidates), size=extra, replace=False)
        edges += [candidates[p] for p in sorted(picks)]
    return edges


def _uniform_nonzero(rng: np.random.Generator, shape) -> np.ndarray:
    while True:
        m = rng.uniform(-1.0, 1.0, size=shape)
        if m.any():
            return m


def _diag_cov(rng: np.random.Generator, m: int, scale: float) -> np.ndarray:
    return np.diag(rng.uniform(0.5, 1.5, size=m) * scale)


def _validate_spec(spec: ScenarioSpec) -> int:
    if spec.topology not in TOPOLOGIES:
        raise ScenarioError(f"unknown topology {spec.topology!r}")
    n = 13 if spec.topology == "loopy13" else spec.n
    if spec.topology == "loopy13" and spec.n not in (0, 13):
        raise ScenarioError("loopy13 has exactly 13 nodes")
    if n < 1:
        raise ScenarioError("node count must be at least 1")
    if not 0.0 < spec.self_density <= 1.0:
        raise ScenarioError("self_density must lie in (0, 1]")
    if spec.self_noise <= 0 or spec.edge_noise <= 0:
        raise ScenarioError("noise scales must be positive")
    if not isinstance(spec.dims, int) and len(spec.dims) != n:
        raise ScenarioError(f"dims lists {len(spec.dims)} entries for {n} nodes")
    if any(not 1 <= z <= n for z in spec.zero_self):
        raise ScenarioError("zero_self references an unknown node")
    return n


def generate(spec: ScenarioSpec) -> tuple[MeasurementGraph, GroundTruth]:
    """Draw a random instance that is connected and has at least one self measurement."""
    n = _validate_spec(spec)
    if spec.topology == "loopy13" and spec.n == 0:
        spec = ScenarioSpec(**{**spec.__dict__, "n": 13})
    topo_rng, mat_rng, truth_rng, noise_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(spec.seed).spawn(4))
    dims = [spec.dims] * n if isinstance(spec.dims, int) else [int(d) for d in spec.dims]
    edges = _topology_edges(spec, topo_rng)

    zero_self = set(spec.zero_self)
    if spec.topology == "loopy13" and not zero_self:
        zero_self = set(LOOPY13_ZERO_SELF)
    candidates = [i for i in range(1, n + 1) if i not in zero_self]
    if spec.topology == "loopy13":
        k = len(candidates)
    else:
        k = min(int(round(spec.self_density * n)), len(candidates))
    if k < 1:
        raise ScenarioError("no node would carry a self measurement; the estimate is unidentifiable")
    if k == len(candidates):
        with_self = candidates
    else:
        with_self = sorted(int(candidates[p]) for p in topo_rng.choice(len(candidates), size=k, replace=False))

    x_true = tuple(truth_rng.standard_normal(d) for d in dims)

    selfs, self_noise = [], {}
    for i in with_self:
        d = dims[i - 1]
        A = _uniform_nonzero(mat_rng, (d, d))
        R = _diag_cov(mat_rng, d, spec.self_noise)
        v = np.linalg.cholesky(R) @ noise_rng.standard_normal(d)
        self_noise[i] = v
        selfs.append(dict(node=i, A=A, R=R, z=A @ x_true[i - 1] + v))

    edge_meas, edge_noise = [], []
    for i, j in edges:
        m = max(dims[i - 1], dims[j - 1])
        Bij = _uniform_nonzero(mat_rng, (m, dims[i - 1]))
        Bji = _uniform_nonzero(mat_rng, (m, dims[j - 1]))
        R = _diag_cov(mat_rng, m, spec.edge_noise)
        v = np.linalg.cholesky(R) @ noise_rng.standard_normal(m)
        edge_noise.append(v)
        edge_meas.append(dict(i=i, j=j, B_ij=Bij, B_ji=Bji, R=R,
                              z=Bij @ x_true[i - 1] + Bji @ x_true[j - 1] + v))

    try:
        g = MeasurementGraph.build(dims, selfs, edge_meas)
    except GraphError as exc:
        raise ScenarioError(str(exc)) from None
    if not is_connected(g):
        raise ScenarioError("generated graph is not connected")
    return g, GroundTruth(x_true, self_noise, tuple(edge_noise))


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.asarray(values, dtype=float).ravel())


def dumps_scenario(g: MeasurementGraph, truth: GroundTruth | None = None,
                   meta: dict[str, object] | None = None) -> str:
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}"]
    if meta and meta.get("topology") == "loopy13":
        lines.append(f"# {LOOPY13_NOTE}")
    for key, value in (meta or {}).items():
        lines.append(f"meta {key} {value}")
    lines.append(f"nodes {g.n}")
    lines.append("dims " + " ".join(str(d) for d in g.dims))
    for s in g.self_measurements:
        if s.rows == 0:
            continue
        d = s.A.shape[1]
        lines += [f"self {s.node} {s.rows}",
                  f"  A {s.rows} {d} {_fmt(s.A)}",
                  f"  R {s.rows} {s.rows} {_fmt(s.R)}",
                  f"  z {s.rows} {_fmt(s.z)}"]
    for e in g.edges:
        m = e.rows
        lines += [f"edge {e.i} {e.j} {m}",
                  f"  Bij {m} {e.B_ij.shape[1]} {_fmt(e.B_ij)}",
                  f"  Bji {m} {e.B_ji.shape[1]} {_fmt(e.B_ji)}",
                  f"  R {m} {m} {_fmt(e.R)}",
                  f"  z {m} {_fmt(e.z)}"]
    if truth is not None:
        for i, x in enumerate(truth.x_true, start=1):
            lines.append(f"truth {i} {x.shape[0]} {_fmt(x)}")
        for i in sorted(truth.self_noise):
            v = truth.self_noise[i]
            lines.append(f"noise_self {i} {v.shape[0]} {_fmt(v)}")
        for e, v in zip(g.edges, truth.edge_noise):
            lines.append(f"noise_edge {e.i} {e.j} {v.shape[0]} {_fmt(v)}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_scenario(path, g: MeasurementGraph, truth: GroundTruth | None = None,
                  meta: dict[str, object] | None = None) -> None:
    Path(path).write_text(dumps_scenario(g, truth, meta), encoding="utf-8")


def spec_meta(spec: ScenarioSpec) -> dict[str, object]:
    meta: dict[str, object] = {
        "topology": spec.topology,
        "seed": spec.seed,
        "rng": "numpy-PCG64/SeedSequence",
        "self_density": spec.self_density,
        "self_noise": spec.self_noise,
        "edge_noise": spec.edge_noise,
        "entries": "uniform[-1,1]",
        "covariance": "diagonal uniform[0.5,1.5]*scale",
        "x_true": "standard normal",
    }
    if spec.zero_self:
        meta["zero_self"] = ",".join(str(z) for z in spec.zero_self)
    return meta


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.items.append((no, line.split()))
        self.pos = 0

    def next(self, expect: str | None = None):
        if self.pos >= len(self.items):
            raise ScenarioParseError(f"unexpected end of file{f', expected {expect!r}' if expect else ''}")
        no, tok = self.items[self.pos]
        self.pos += 1
        if expect is not None and tok[0] != expect:
            raise ScenarioParseError(f"line {no}: expected {expect!r}, found {tok[0]!r}")
        return no, tok


def _ints(no: int, toks: Sequence[str], what: str) -> list[int]:
    try:
        return [int(t) for t in toks]
    except ValueError:
        raise ScenarioParseError(f"line {no}: {what}: expected integers, got {' '.join(toks)}") from None


def _array(no: int, toks: list[str], ndim: int, what: str) -> np.ndarray:
    shape = _ints(no, toks[1:1 + ndim], what)
    vals = toks[1 + ndim:]
    size = math.prod(shape)
    if len(vals) != size:
        raise ScenarioParseError(f"line {no}: {what}: expected {size} values for shape {tuple(shape)}, got {len(vals)}")
    try:
        data = np.array([float(v) for v in vals], dtype=float)
    except ValueError:
        raise ScenarioParseError(f"line {no}: {what}: non-numeric value") from None
    return data.reshape(shape)


def loads_scenario(text: str) -> tuple[MeasurementGraph, GroundTruth | None, dict[str, str]]:
    lines = _Lines(text)
    no, tok = lines.next()
    if tok[0] != FORMAT_TAG or len(tok) != 2:
        raise ScenarioParseError(f"line {no}: missing '{FORMAT_TAG} <version>' header")
    if tok[1] != str(FORMAT_VERSION):
        raise ScenarioParseError(f"line {no}: unsupported format version {tok[1]}")
    meta: dict[str, str] = {}
    no, tok = lines.next()
    while tok[0] == "meta":
        if len(tok) < 2:
            raise ScenarioParseError(f"line {no}: meta needs a key")
        meta[tok[1]] = " ".join(tok[2:])
        no, tok = lines.next()
    if tok[0] != "nodes" or len(tok) != 2:
        raise ScenarioParseError(f"line {no}: expected 'nodes <n>'")
    (n,) = _ints(no, tok[1:], "nodes")
    no, tok = lines.next("dims")
    dims = _ints(no, tok[1:], "dims")
    if len(dims) != n:
        raise ScenarioParseError(f"line {no}: dims lists {len(dims)} entries for {n} nodes")

    selfs, edges = [], []
    x_true: dict[int, np.ndarray] = {}
    self_noise: dict[int, np.ndarray] = {}
    edge_noise: dict[tuple[int, int], np.ndarray] = {}
    while True:
        no, tok = lines.next()
        kind = tok[0]
        if kind == "end":
            break
        if kind == "self":
            if len(tok) != 3:
                raise ScenarioParseError(f"line {no}: expected 'self <node> <rows>'")
            i, _ = _ints(no, tok[1:], "self")
            A = _array(*lines.next("A"), 2, f"self {i}: A")
            R = _array(*lines.next("R"), 2, f"self {i}: R")
            z = _array(*lines.next("z"), 1, f"self {i}: z")
            selfs.append(dict(node=i, A=A, R=R, z=z))
        elif kind == "edge":
            if len(tok) != 4:
                raise ScenarioParseError(f"line {no}: expected 'edge <i> <j> <rows>'")
            i, j, _ = _ints(no, tok[1:], "edge")
            tag = f"edge ({i},{j})"
            Bij = _array(*lines.next("Bij"), 2, f"{tag}: Bij")
            Bji = _array(*lines.next("Bji"), 2, f"{tag}: Bji")
            R = _array(*lines.next("R"), 2, f"{tag}: R")
            z = _array(*lines.next("z"), 1, f"{tag}: z")
            edges.append(dict(i=i, j=j, B_ij=Bij, B_ji=Bji, R=R, z=z))
        elif kind == "truth":
            (i,) = _ints(no, tok[1:2], "truth")
            x_true[i] = _array(no, tok[1:], 1, f"truth {i}")
        elif kind == "noise_self":
            (i,) = _ints(no, tok[1:2], "noise_self")
            self_noise[i] = _array(no, tok[1:], 1, f"noise_self {i}")
        elif kind == "noise_edge":
            i, j = _ints(no, tok[1:3], "noise_edge")
            edge_noise[(i, j)] = _array(no, tok[2:], 1, f"noise_edge {i} {j}")
        else:
            raise ScenarioParseError(f"line {no}: unknown record {kind!r}")
    if lines.pos != len(lines.items):
        raise ScenarioParseError(f"line {lines.items[lines.pos][0]}: content after 'end'")

    try:
        g = MeasurementGraph.build(dims, selfs, edges)
    except GraphError as exc:
        raise ScenarioError(f"validation failed: {exc}") from None

    truth = None
    if x_true:
        if sorted(x_true) != list(range(1, n + 1)):
            raise ScenarioError("truth records must cover every node exactly once")
        missing = [(e.i, e.j) for e in g.edges if (e.i, e.j) not in edge_noise]
        if edge_noise and missing:
            raise ScenarioError(f"noise_edge records missing for edges {missing}")
        truth = GroundTruth(
            tuple(x_true[i] for i in range(1, n + 1)),
            self_noise,
            tuple(edge_noise[(e.i, e.j)] for e in g.edges) if edge_noise else (),
        )
    return g, truth, meta


def load_scenario(path) -> tuple[MeasurementGraph, GroundTruth | None, dict[str, str]]:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))


CSV_FIXED = ("round", "node_id")


def _num(v: float) -> str:
    return repr(float(v))


def export_trace_csv(trace: RunTrace, err: ErrorTrace | None, path,
                     bound_envelope: Sequence[float] | None = None) -> None:
    """Write one row per (round, node), round-major.

    ``bound_envelope`` holds rho^k C per recorded round; the column is left
    blank when it is not supplied.
    """
    width = max(trace.dims, default=1)
    header = [*CSV_FIXED, *(f"est_{c + 1}" for c in range(width)), "abs_error", "y1", "bound_envelope"]
    if err is not None and err.rounds != list(trace.round_numbers):
        raise ValueError("error trace does not match the run trace")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, (t, est) in enumerate(zip(trace.round_numbers, trace.estimates)):
                env = "" if bound_envelope is None else _num(bound_envelope[k])
                for i, x in enumerate(est):
                    comps = [_num(v) for v in x] + [""] * (width - x.shape[0])
                    if err is None:
                        tail = ["", ""]
                    else:
                        tail = [_num(err.abs_error[k][i]), _num(err.y1[k])]
                    w.writerow([t, i + 1, *comps, *tail, env])
    except OSError as exc:
        raise OSError(f"cannot write trace CSV to {path}: {exc.strerror or exc}") from exc


def write_plot_data(err: ErrorTrace, y1_bound: Sequence[float] | None, path) -> None:
    """Whitespace-separated ``round y1 y1_bound`` for gnuplot (``using 1:2`` / ``1:3``)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# round y1 y1_bound\n")
        for k, t in enumerate(err.rounds):
            b = "nan" if y1_bound is None else repr(float(y1_bound[k]))
            fh.write(f"{t} {err.y1[k]!r} {b}\n")
