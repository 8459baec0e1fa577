"""Information form of a measurement graph.

Two views are produced. ``assemble_information`` gives the per-node and
per-edge blocks that the message-passing engines consume; every block is
built from data local to one node and its incident edges.
``assemble_stacked`` gives the global (H, R, z) model and exists for
cross-checking the blocks against H^T R^-1 H and H^T R^-1 z.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .graph import GraphError, MeasurementGraph


def _spd_inverse(R: np.ndarray, what: str) -> np.ndarray:
    if R.shape[0] == 0:
        return R.copy()
    try:
        c = linalg.cho_factor(R, lower=True)
    except linalg.LinAlgError:
        raise GraphError(f"{what}: covariance is singular or not positive definite") from None
    return linalg.cho_solve(c, np.eye(R.shape[0]))


@dataclass(frozen=True, eq=False)
class InformationSystem:
    """Block information form (Psi, alpha) plus the per-edge Gamma blocks.

    All indices are 0-based. ``psi_off[(i, j)]`` is the n_i x n_j coupling
    block and ``gamma[(i, j)]`` is B_ij^T R_e^-1 B_ij for the edge {i, j}.
    ``self_info[i]`` is A_i^T R_i^-1 A_i, the part of ``psi_diag[i]`` owed to
    the node's own measurement.
    """

    n: int
    dims: tuple[int, ...]
    alpha: tuple[np.ndarray, ...]
    psi_diag: tuple[np.ndarray, ...]
    psi_off: dict[tuple[int, int], np.ndarray]
    gamma: dict[tuple[int, int], np.ndarray]
    self_info: tuple[np.ndarray, ...]
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def is_scalar(self) -> bool:
        return all(d == 1 for d in self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)]).astype(int)

    def psi(self) -> np.ndarray:
        """Dense Psi assembled from the blocks."""
        off = self.offsets
        P = np.zeros((off[-1], off[-1]))
        for i in range(self.n):
            P[off[i]:off[i + 1], off[i]:off[i + 1]] = self.psi_diag[i]
        for (i, j), blk in self.psi_off.items():
            P[off[i]:off[i + 1], off[j]:off[j + 1]] = blk
        return P

    def alpha_vector(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        return np.concatenate(self.alpha)

    def fingerprint(self) -> str:
        """Content hash used to check that two runs came from the same instance."""
        h = hashlib.sha256()
        h.update(repr(self.dims).encode())
        h.update(np.ascontiguousarray(self.psi()).tobytes())
        h.update(np.ascontiguousarray(self.alpha_vector()).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class StackedSystem:
    H: np.ndarray
    R: np.ndarray
    z: np.ndarray


def assemble_information(g: MeasurementGraph) -> InformationSystem:
    n = g.n
    dims = tuple(g.dims)
    alpha = [np.zeros(d) for d in dims]
    psi_diag = [np.zeros((d, d)) for d in dims]
    self_info = []
    for i, s in enumerate(g.self_measurements):
        Rinv = _spd_inverse(s.R, f"self measurement {i + 1}")
        AtRinv = s.A.T @ Rinv
        P = AtRinv @ s.A
        self_info.append(P)
        psi_diag[i] += P
        alpha[i] += AtRinv @ s.z

    psi_off: dict[tuple[int, int], np.ndarray] = {}
    gamma: dict[tuple[int, int], np.ndarray] = {}
    for e in g.edges:
        i, j = e.i - 1, e.j - 1
        Rinv = _spd_inverse(e.R, f"edge ({e.i},{e.j})")
        BiR = e.B_ij.T @ Rinv
        BjR = e.B_ji.T @ Rinv
        gamma[(i, j)] = BiR @ e.B_ij
        gamma[(j, i)] = BjR @ e.B_ji
        psi_off[(i, j)] = BiR @ e.B_ji
        psi_off[(j, i)] = psi_off[(i, j)].T.copy()
        psi_diag[i] += gamma[(i, j)]
        psi_diag[j] += gamma[(j, i)]
        alpha[i] += BiR @ e.z
        alpha[j] += BjR @ e.z

    for arrs in (alpha, psi_diag, self_info, psi_off.values(), gamma.values()):
        for a in arrs:
            a.setflags(write=False)
    return InformationSystem(
        n=n,
        dims=dims,
        alpha=tuple(alpha),
        psi_diag=tuple(psi_diag),
        psi_off=psi_off,
        gamma=gamma,
        self_info=tuple(self_info),
        neighbors=g.adjacency(),
    )


def assemble_stacked(g: MeasurementGraph) -> StackedSystem:
    """Row blocks: self measurements in node order, then edges in edge order."""
    off = np.concatenate([[0], np.cumsum(g.dims)]).astype(int)
    ncols = int(off[-1])
    H_blocks, R_blocks, z_blocks = [], [], []
    for i, s in enumerate(g.self_measurements):
        _spd_inverse(s.R, f"self measurement {i + 1}")
        Hi = np.zeros((s.rows, ncols))
        Hi[:, off[i]:off[i + 1]] = s.A
        H_blocks.append(Hi)
        R_blocks.append(s.R)
        z_blocks.append(s.z)
    for e in g.edges:
        _spd_inverse(e.R, f"edge ({e.i},{e.j})")
        i, j = e.i - 1, e.j - 1
        He = np.zeros((e.rows, ncols))
        He[:, off[i]:off[i + 1]] = e.B_ij
        He[:, off[j]:off[j + 1]] = e.B_ji
        H_blocks.append(He)
        R_blocks.append(e.R)
        z_blocks.append(e.z)
    H = np.vstack(H_blocks) if H_blocks else np.zeros((0, ncols))
    R = linalg.block_diag(*R_blocks) if R_blocks else np.zeros((0, 0))
    R = R.reshape(H.shape[0], H.shape[0])
    z = np.concatenate(z_blocks) if z_blocks else np.zeros(0)
    return StackedSystem(H, R, z)
