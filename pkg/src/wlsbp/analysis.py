"""Error metrics, cross-engine equivalence audit and rate-envelope fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import GlobalSolution, RateBound
from .trace import RunTrace

EQUIV_TOL = 1e-10
RATE_SLACK = 0.05


@dataclass(frozen=True, eq=False)
class ErrorTrace:
    """Errors of a run against x*.

    ``y1[k]`` is log10 of the mean squared node error at round
    ``rounds[k]``; it is ``-inf`` when the error is exactly zero.
    ``exact[k]`` flags rounds whose RMS error sits at machine-precision
    level. ``first_hit[i]`` is the round from which node i stays within
    ``hit_tol`` for the rest of the run (None if it never settles).
    """

    rounds: list[int]
    y1: list[float]
    exact: list[bool]
    abs_error: list[list[float]]
    first_hit: list[int | None]
    extended_metric: bool
    floor: float

    def max_error(self) -> list[float]:
        return [max(row, default=0.0) for row in self.abs_error]


def error_trace(trace: RunTrace, truth: GlobalSolution, hit_tol: float = 1e-9,
                exact_rtol: float = 1e-13) -> ErrorTrace:
    if len(truth.x_star) != trace.n or any(
            x.shape[0] != d for x, d in zip(truth.x_star, trace.dims)):
        raise ValueError("trace and solution come from different instances")
    scale = 1.0 + max((float(np.max(np.abs(x))) for x in truth.x_star), default=0.0)
    floor = exact_rtol * scale
    rounds, y1, exact, abs_err = [], [], [], []
    for k, est in zip(trace.round_numbers, trace.estimates):
        errs = [float(np.linalg.norm(e - x)) for e, x in zip(est, truth.x_star)]
        msq = sum(e * e for e in errs) / max(trace.n, 1)
        rounds.append(k)
        abs_err.append(errs)
        y1.append(math.log10(msq) if msq > 0 else -math.inf)
        exact.append(math.sqrt(msq) <= floor)
    first_hit: list[int | None] = []
    for i in range(trace.n):
        hit = None
        for k, row in zip(reversed(rounds), reversed(abs_err)):
            if row[i] <= hit_tol * scale:
                hit = k
            else:
                break
        first_hit.append(hit)
    return ErrorTrace(rounds, y1, exact, abs_err, first_hit,
                      extended_metric=any(d > 1 for d in trace.dims), floor=floor)


@dataclass(eq=False)
class EquivalenceReport:
    rounds: list[int]
    estimate_gap: list[float]
    precision_gap: list[float]
    message_gap: list[float] | None
    tol: float = EQUIV_TOL
    failures: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and bool(self.rounds)

    @property
    def max_gap(self) -> float:
        gaps = self.estimate_gap + self.precision_gap + (self.message_gap or [])
        return max(gaps, default=0.0)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else f"FAIL (rounds {self.failures})"
        return (f"equivalence audit over rounds {self.rounds[0] if self.rounds else '-'}.."
                f"{self.rounds[-1] if self.rounds else '-'}: max discrepancy {self.max_gap:.3e} "
                f"<= {self.tol:.0e}: {verdict}")


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b), initial=0.0) / (1.0 + max(np.max(np.abs(a), initial=0.0),
                                                                   np.max(np.abs(b), initial=0.0))))


def _message_gap(dw: dict, bp_next: dict, gamma: dict | None) -> float:
    """Sigma_{i->j}(t)^-1 = Gamma_ij + P0(t+1) and Sigma^-1 x = P0(t+1) mu0(t+1)."""
    gap = 0.0
    for key, S in dw["sigma"].items():
        Sinv = np.linalg.inv(S)
        if gamma is not None:
            gap = max(gap, _rel(Sinv, gamma[key] + bp_next["P0"][key]))
        gap = max(gap, _rel(Sinv @ dw["x"][key], bp_next["P0mu0"][key]))
    return gap


def equivalence_audit(dwls_trace: RunTrace, gbp_trace: RunTrace, tol: float = EQUIV_TOL,
                      gamma: dict | None = None) -> EquivalenceReport:
    """Compare dwls round t against gbp round t + 1 on every common round.

    Message-level identities are checked too when both traces carry message
    logs; pass ``gamma`` (the instance's Gamma blocks) to include the
    precision identity.
    """
    if dwls_trace.algorithm != "dwls" or gbp_trace.algorithm != "gbp":
        raise ValueError("expected a (dwls, gbp) trace pair")
    if dwls_trace.instance != gbp_trace.instance:
        raise ValueError("traces come from different instances")
    rounds = [t for t in dwls_trace.round_numbers if gbp_trace.has_round(t + 1)]
    with_msgs = dwls_trace.messages is not None and gbp_trace.messages is not None
    rep = EquivalenceReport(rounds, [], [], [] if with_msgs else None, tol)
    for t in rounds:
        eg = max((_rel(a, b) for a, b in zip(dwls_trace.estimate(t), gbp_trace.estimate(t + 1))), default=0.0)
        pg = max((_rel(a, b) for a, b in zip(dwls_trace.precision(t), gbp_trace.precision(t + 1))), default=0.0)
        rep.estimate_gap.append(eg)
        rep.precision_gap.append(pg)
        worst = max(eg, pg)
        if with_msgs:
            mg = _message_gap(dwls_trace.message_log(t), gbp_trace.message_log(t + 1), gamma)
            rep.message_gap.append(mg)
            worst = max(worst, mg)
        if not worst <= tol:
            rep.failures.append(t)
    return rep


@dataclass(frozen=True, eq=False)
class EnvelopeReport:
    applicable: bool
    rho: float
    C: float | None = None
    observed_rate: float | None = None
    envelope: list[float] | None = None
    holds: bool = False
    passed: bool = False
    faster_than_bound: bool = False
    reason: str = ""

    def summary(self) -> str:
        if not self.applicable:
            return f"rate bound: n/a ({self.reason})"
        return (f"rho(|Omega|) = {self.rho:.6f}, fitted C = {self.C:.6g}, observed rate = "
                f"{self.observed_rate:.6f} -> {'PASS' if self.passed else 'FAIL'}")


def rate_envelope(err: ErrorTrace, bound: RateBound, slack: float = RATE_SLACK) -> EnvelopeReport:
    """Fit the smallest C with max_i |err_i(k)| <= rho^k C on the recorded rounds.

    Errors at or below ``err.floor`` count as converged and are ignored.
    The observed rate is the geometric mean of successive max-error ratios
    over the last half of the usable rounds.
    """
    rho = bound.rho
    if rho >= 1.0:
        return EnvelopeReport(False, rho, reason="rho >= 1, bound inapplicable")
    emax = err.max_error()
    usable = [(k, e) for k, e in zip(err.rounds, emax) if e > err.floor]
    C = 0.0
    for k, e in usable:
        C = math.inf if rho == 0.0 and k > 0 else max(C, e / rho ** k)
    envelope = [rho ** k * C if C < math.inf else math.inf for k in err.rounds]
    holds = all(e <= env * (1 + 1e-12) or e <= err.floor for e, env in zip(emax, envelope))
    if len(usable) < 2:
        rate = 0.0
    else:
        half = usable[len(usable) // 2:] if len(usable) >= 4 else usable
        (k0, e0), (k1, e1) = half[0], half[-1]
        rate = (e1 / e0) ** (1.0 / (k1 - k0)) if k1 > k0 else 0.0
    return EnvelopeReport(
        applicable=True,
        rho=rho,
        C=C,
        observed_rate=rate,
        envelope=envelope,
        holds=holds,
        passed=rate <= rho + slack,
        faster_than_bound=rate < rho,
    )


def y1_bound(rounds: list[int], rho: float, C: float) -> list[float]:
    """log10 of (rho^k C)^2, the y1 level implied by the per-node envelope."""
    out = []
    for k in rounds:
        v = (rho ** k * C) ** 2
        out.append(math.log10(v) if v > 0 else -math.inf)
    return out
