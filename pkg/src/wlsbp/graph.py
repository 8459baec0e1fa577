"""Measurement network: nodes, self measurements and pairwise edge measurements.

Node ids are 1-based in the public API. Internally everything is stored
0-based and converted at the boundary.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed measurement graph or invalid query."""


def _as_matrix(a, rows: int | None, cols: int, what: str) -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim == 1 and cols == 1 and (rows is None or m.shape[0] == rows):
        m = m.reshape(-1, 1)
    if m.size == 0:
        m = m.reshape(0 if rows is None else rows, cols)
    if m.ndim != 2:
        raise GraphError(f"{what}: expected a matrix, got shape {m.shape}")
    if m.shape[1] != cols or (rows is not None and m.shape[0] != rows):
        raise GraphError(f"{what}: shape {m.shape} does not match ({rows}, {cols})")
    m.setflags(write=False)
    return m


def _check_covariance(R: np.ndarray, what: str) -> None:
    if R.shape[0] == 0:
        return
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise GraphError(f"{what}: covariance is not symmetric")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise GraphError(f"{what}: covariance is not positive definite") from None


@dataclass(frozen=True)
class NodeSpec:
    id: int
    dim: int = 1


@dataclass(frozen=True, eq=False)
class SelfMeasurement:
    """z_i = A x_i + v_i with v_i ~ N(0, R)."""

    node: int
    A: np.ndarray
    R: np.ndarray
    z: np.ndarray

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeMeasurement:
    """z_e = B_ij x_i + B_ji x_j + v_e with v_e ~ N(0, R)."""

    i: int
    j: int
    B_ij: np.ndarray
    B_ji: np.ndarray
    R: np.ndarray
    z: np.ndarray

    @property
    def rows(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    nodes: tuple[NodeSpec, ...]
    self_measurements: tuple[SelfMeasurement, ...]
    edges: tuple[EdgeMeasurement, ...]
    _adj: tuple[tuple[int, ...], ...] = field(repr=False, default=())

    @classmethod
    def build(
        cls,
        dims: Sequence[int],
        self_measurements: Sequence[dict | SelfMeasurement] = (),
        edges: Sequence[dict | EdgeMeasurement] = (),
    ) -> "MeasurementGraph":
        """Validate and freeze a graph.

        ``dims[k]`` is the state dimension of node ``k + 1``. Self and edge
        measurements may be given as dicts with the dataclass field names.
        Nodes without a self measurement get an explicit zero-row ``A``.
        """
        nodes = []
        for k, d in enumerate(dims):
            if int(d) != d or d < 1:
                raise GraphError(f"node {k + 1}: dimension must be a positive integer, got {d}")
            nodes.append(NodeSpec(k + 1, int(d)))
        n = len(nodes)

        def check_id(i, what):
            if not isinstance(i, (int, np.integer)) or not 1 <= i <= n:
                raise GraphError(f"{what}: unknown node id {i}")
            return int(i)

        selfs: list[SelfMeasurement | None] = [None] * n
        for s in self_measurements:
            if isinstance(s, SelfMeasurement):
                s = dict(node=s.node, A=s.A, R=s.R, z=s.z)
            i = check_id(s["node"], "self measurement")
            if selfs[i - 1] is not None:
                raise GraphError(f"node {i}: more than one self measurement")
            di = nodes[i - 1].dim
            A = _as_matrix(s["A"], None, di, f"self measurement {i}: A")
            m = A.shape[0]
            R = _as_matrix(s["R"], m, m, f"self measurement {i}: R")
            z = np.array(s["z"], dtype=float).reshape(-1)
            if z.shape[0] != m:
                raise GraphError(f"self measurement {i}: z has length {z.shape[0]}, expected {m}")
            _check_covariance(R, f"self measurement {i}")
            z.setflags(write=False)
            selfs[i - 1] = SelfMeasurement(i, A, R, z)
        for k in range(n):
            if selfs[k] is None:
                d = nodes[k].dim
                selfs[k] = SelfMeasurement(
                    k + 1,
                    _as_matrix(np.zeros((0, d)), 0, d, "A"),
                    _as_matrix(np.zeros((0, 0)), 0, 0, "R"),
                    np.zeros(0),
                )

        adj: list[list[int]] = [[] for _ in range(n)]
        seen = set()
        frozen_edges = []
        for e in edges:
            if isinstance(e, EdgeMeasurement):
                e = dict(i=e.i, j=e.j, B_ij=e.B_ij, B_ji=e.B_ji, R=e.R, z=e.z)
            i = check_id(e["i"], "edge")
            j = check_id(e["j"], "edge")
            tag = f"edge ({i},{j})"
            if i == j:
                raise GraphError(f"{tag}: self loop")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"{tag}: duplicate edge; stack the measurements into one")
            seen.add(key)
            R = np.array(e["R"], dtype=float)
            R = R.reshape(1, 1) if R.ndim == 0 else R
            m = R.shape[0]
            R = _as_matrix(R, m, m, f"{tag}: R")
            if m == 0:
                raise GraphError(f"{tag}: empty measurement")
            Bij = _as_matrix(e["B_ij"], m, nodes[i - 1].dim, f"{tag}: B_ij")
            Bji = _as_matrix(e["B_ji"], m, nodes[j - 1].dim, f"{tag}: B_ji")
            if not Bij.any() or not Bji.any():
                raise GraphError(f"{tag}: B_ij and B_ji must both be nonzero")
            z = np.array(e["z"], dtype=float).reshape(-1)
            if z.shape[0] != m:
                raise GraphError(f"{tag}: z has length {z.shape[0]}, expected {m}")
            _check_covariance(R, tag)
            z.setflags(write=False)
            frozen_edges.append(EdgeMeasurement(i, j, Bij, Bji, R, z))
            adj[i - 1].append(j - 1)
            adj[j - 1].append(i - 1)

        return cls(
            tuple(nodes),
            tuple(selfs),  # type: ignore[arg-type]
            tuple(frozen_edges),
            tuple(tuple(sorted(a)) for a in adj),
        )

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def dims(self) -> list[int]:
        return [nd.dim for nd in self.nodes]

    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """0-based sorted adjacency lists."""
        return self._adj

    def has_self_information(self, i: int) -> bool:
        """True when node ``i`` (1-based) has a nonzero self observation matrix."""
        return bool(self.self_measurements[i - 1].A.any())


def neighbors(g: MeasurementGraph, i: int) -> set[int]:
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= g.n:
        raise GraphError(f"unknown node id {i}")
    return {j + 1 for j in g.adjacency()[i - 1]}


def _bfs(adj, start: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def component_count(g: MeasurementGraph) -> int:
    adj = g.adjacency()
    seen = [False] * g.n
    count = 0
    for s in range(g.n):
        if seen[s]:
            continue
        count += 1
        for v, d in enumerate(_bfs(adj, s)):
            if d >= 0:
                seen[v] = True
    return count


def is_connected(g: MeasurementGraph) -> bool:
    if g.n == 0:
        return True
    return min(_bfs(g.adjacency(), 0)) >= 0


def is_acyclic(g: MeasurementGraph) -> bool:
    return len(g.edges) == g.n - component_count(g)


def eccentricities(g: MeasurementGraph) -> list[int]:
    """Per-node eccentricity (largest hop distance to any other node), 0-based order."""
    adj = g.adjacency()
    out = []
    for s in range(g.n):
        dist = _bfs(adj, s)
        if min(dist) < 0:
            raise GraphError("eccentricity is undefined on a disconnected graph")
        out.append(max(dist))
    return out


def diameter(g: MeasurementGraph) -> int:
    if g.n == 0:
        return 0
    return max(eccentricities(g))
