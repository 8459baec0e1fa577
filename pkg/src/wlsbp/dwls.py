"""Distributed WLS message passing on self and edge measurements.

Every node keeps (Psi_ii, alpha_i) and its incident coupling blocks. In
each synchronous round node i folds the previous round's inbound messages
(Sigma_{v->i}, x_{v->i}) into a local information pair (Psi_hat_i,
alpha_hat_i), reads off x_hat_i, and for each neighbour j re-adds j's own
contribution to form the outbound message that excludes j.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .assembly import InformationSystem
from .trace import BREAKDOWN, CONVERGED, MAX_ROUNDS, IterationBreakdown, RunTrace, max_change

PIVOT_TOL = 1e-12


def _local_inverse(M: np.ndarray, node: int, t: int, edge=None) -> np.ndarray:
    M = 0.5 * (M + M.T)
    if M.shape[0] == 1:
        if not M[0, 0] > PIVOT_TOL:
            raise IterationBreakdown(node, t, f"local precision {M[0, 0]:.3e} is not positive", edge)
        return 1.0 / M
    try:
        L = np.linalg.cholesky(M)
        if np.min(np.diag(L)) ** 2 > PIVOT_TOL:
            return linalg.cho_solve((L, True), np.eye(M.shape[0]))
    except np.linalg.LinAlgError:
        pass
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(M, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL:
        raise IterationBreakdown(node, t, "local precision matrix is singular", edge)
    return linalg.lu_solve((lu, piv), np.eye(M.shape[0]))


@dataclass(eq=False)
class DwlsState:
    info: InformationSystem
    t: int
    psi_hat: list[np.ndarray]
    alpha_hat: list[np.ndarray]
    x_hat: list[np.ndarray]
    sigma: dict[tuple[int, int], np.ndarray]
    x_msg: dict[tuple[int, int], np.ndarray]


def dwls_init(info: InformationSystem) -> DwlsState:
    x_hat, sigma, x_msg = [], {}, {}
    for i in range(info.n):
        try:
            S = _local_inverse(info.psi_diag[i], i + 1, 0)
        except IterationBreakdown:
            raise IterationBreakdown(i + 1, 0, "locally unidentifiable node: Psi_ii is singular") from None
        xi = S @ info.alpha[i]
        x_hat.append(xi)
        for j in info.neighbors[i]:
            sigma[(i, j)] = S
            x_msg[(i, j)] = xi
    return DwlsState(info, 0, list(info.psi_diag), list(info.alpha), x_hat, sigma, x_msg)


def _node_round(i, t, psi_ii, alpha_i, inbound):
    """One node's work. ``inbound[v] = (Psi_vi, Sigma_{v->i}, x_{v->i})``."""
    terms = {v: (Pvi.T @ S @ Pvi, Pvi.T @ x) for v, (Pvi, S, x) in inbound.items()}
    psi_hat = psi_ii - sum((a for a, _ in terms.values()), np.zeros_like(psi_ii))
    alpha_hat = alpha_i - sum((b for _, b in terms.values()), np.zeros_like(alpha_i))
    x_hat = _local_inverse(psi_hat, i + 1, t) @ alpha_hat
    out = {}
    for j, (back_p, back_a) in terms.items():
        S = _local_inverse(psi_hat + back_p, i + 1, t, (i + 1, j + 1))
        out[j] = (S, S @ (alpha_hat + back_a))
    return psi_hat, alpha_hat, x_hat, out


def dwls_round(state: DwlsState) -> DwlsState:
    """Advance one synchronous round; the input state is not modified."""
    info = state.info
    t = state.t + 1
    psi_hat, alpha_hat, x_hat = [], [], []
    sigma, x_msg = {}, {}
    for i in range(info.n):
        inbound = {
            v: (info.psi_off[(v, i)], state.sigma[(v, i)], state.x_msg[(v, i)])
            for v in info.neighbors[i]
        }
        p, a, x, out = _node_round(i, t, info.psi_diag[i], info.alpha[i], inbound)
        psi_hat.append(p)
        alpha_hat.append(a)
        x_hat.append(x)
        for j, (S, xm) in out.items():
            sigma[(i, j)] = S
            x_msg[(i, j)] = xm
    return DwlsState(info, t, psi_hat, alpha_hat, x_hat, sigma, x_msg)


def _log(state: DwlsState) -> dict:
    return {"sigma": dict(state.sigma), "x": dict(state.x_msg)}


def dwls_run(info: InformationSystem, max_rounds: int = 500, tol: float = 1e-9,
             log_messages: bool = False) -> RunTrace:
    """Iterate until the largest estimate change drops below ``tol``.

    ``tol=0`` disables early stopping. A breakdown ends the run and is
    recorded in the trace rather than raised.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    trace = RunTrace("dwls", info.fingerprint(), info.dims, first_round=0,
                     messages=[] if log_messages else None)
    try:
        state = dwls_init(info)
    except IterationBreakdown as exc:
        trace.stop_reason = BREAKDOWN
        trace.breakdown = exc
        return trace
    trace.estimates.append(state.x_hat)
    trace.precisions.append(state.psi_hat)
    if log_messages:
        trace.messages.append(_log(state))
    for _ in range(max_rounds):
        try:
            nxt = dwls_round(state)
        except IterationBreakdown as exc:
            trace.stop_reason = BREAKDOWN
            trace.breakdown = exc
            return trace
        trace.rounds = nxt.t
        trace.estimates.append(nxt.x_hat)
        trace.precisions.append(nxt.psi_hat)
        if log_messages:
            trace.messages.append(_log(nxt))
        change = max_change(state.x_hat, nxt.x_hat)
        state = nxt
        if change < tol:
            trace.stop_reason = CONVERGED
            return trace
    trace.stop_reason = MAX_ROUNDS
    return trace
