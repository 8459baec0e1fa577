"""Gaussian belief propagation on the information form (Psi, alpha).

Messages are stored as (P_{i->j}, P_{i->j} mu_{i->j}) so that neither a
singular self precision (nodes without a self measurement) nor a singular
message precision ever has to be inverted. Beliefs are recovered as
mu_i = P_i^-1 h_i where h_i = alpha_i + sum_v P_{v->i} mu_{v->i}.

This module deliberately shares no update code with the distributed WLS
engine; the two are compared against each other in tests.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .assembly import InformationSystem
from .trace import BREAKDOWN, CONVERGED, MAX_ROUNDS, IterationBreakdown, RunTrace, max_change

SINGULAR_TOL = 1e-12


def _factor(M: np.ndarray, node: int, t: int, edge=None):
    if M.shape[0] == 1 and not M[0, 0] > SINGULAR_TOL:
        raise IterationBreakdown(node, t, f"precision {M[0, 0]:.3e} is not positive", edge)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.min(np.abs(np.diag(lu))) <= SINGULAR_TOL:
        raise IterationBreakdown(node, t, "precision matrix is singular", edge)
    return lu, piv


@dataclass(eq=False)
class GbpState:
    info: InformationSystem
    t: int
    P_self: tuple[np.ndarray, ...]
    h_self: tuple[np.ndarray, ...]
    P_msg: dict[tuple[int, int], np.ndarray]
    h_msg: dict[tuple[int, int], np.ndarray]
    P_belief: list[np.ndarray] | None = None
    mu_belief: list[np.ndarray] | None = None
    P_excl: dict[tuple[int, int], np.ndarray] | None = None
    h_excl: dict[tuple[int, int], np.ndarray] | None = None


def gbp_init(info: InformationSystem) -> GbpState:
    """Self precision A^T R^-1 A per node and P_{i->j}(0) = Gamma_ji, mu_{i->j}(0) = 0.

    The product P_ii mu_ii is kept as alpha_i directly.
    """
    P_msg, h_msg = {}, {}
    for i in range(info.n):
        for j in info.neighbors[i]:
            P_msg[(i, j)] = info.gamma[(j, i)]
            h_msg[(i, j)] = np.zeros(info.dims[j])
    return GbpState(info, 0, info.self_info, info.alpha, P_msg, h_msg)


def gbp_round(state: GbpState) -> GbpState:
    info = state.info
    t = state.t + 1
    P_belief, mu_belief = [], []
    P_msg, h_msg, P_excl, h_excl = {}, {}, {}, {}
    for i in range(info.n):
        nbrs = info.neighbors[i]
        P_i = state.P_self[i] + sum((state.P_msg[(v, i)] for v in nbrs), np.zeros_like(state.P_self[i]))
        h_i = state.h_self[i] + sum((state.h_msg[(v, i)] for v in nbrs), np.zeros_like(state.h_self[i]))
        P_belief.append(P_i)
        mu_belief.append(linalg.lu_solve(_factor(P_i, i + 1, t), h_i))
        for j in nbrs:
            P0 = state.P_self[i].copy()
            h0 = state.h_self[i].copy()
            for v in nbrs:
                if v != j:
                    P0 = P0 + state.P_msg[(v, i)]
                    h0 = h0 + state.h_msg[(v, i)]
            P_excl[(i, j)] = P0
            h_excl[(i, j)] = h0
            fac = _factor(info.gamma[(i, j)] + P0, i + 1, t, (i + 1, j + 1))
            Psi_ij = info.psi_off[(i, j)]
            Psi_ji = info.psi_off[(j, i)]
            P_out = info.gamma[(j, i)] - Psi_ji @ linalg.lu_solve(fac, Psi_ij)
            P_msg[(i, j)] = 0.5 * (P_out + P_out.T)
            h_msg[(i, j)] = -Psi_ji @ linalg.lu_solve(fac, h0)
    return GbpState(info, t, state.P_self, state.h_self, P_msg, h_msg,
                    P_belief, mu_belief, P_excl, h_excl)


def _log(state: GbpState) -> dict:
    return {
        "P": dict(state.P_msg),
        "Pmu": dict(state.h_msg),
        "P0": dict(state.P_excl),
        "P0mu0": dict(state.h_excl),
    }


def gbp_run(info: InformationSystem, max_rounds: int = 500, tol: float = 1e-9,
            log_messages: bool = False) -> RunTrace:
    """Run belief propagation; the trace starts at round 1 (first beliefs)."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    state = gbp_init(info)
    trace = RunTrace("gbp", info.fingerprint(), info.dims, first_round=1,
                     messages=[] if log_messages else None)
    prev = None
    for _ in range(max_rounds):
        try:
            state = gbp_round(state)
        except IterationBreakdown as exc:
            trace.stop_reason = BREAKDOWN
            trace.breakdown = exc
            return trace
        trace.rounds = state.t
        trace.estimates.append(state.mu_belief)
        trace.precisions.append(state.P_belief)
        if log_messages:
            trace.messages.append(_log(state))
        if prev is not None and max_change(prev, state.mu_belief) < tol:
            trace.stop_reason = CONVERGED
            return trace
        prev = state.mu_belief
    trace.stop_reason = MAX_ROUNDS
    return trace
