"""Run records shared by both engines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVERGED = "converged"
MAX_ROUNDS = "max_rounds"
BREAKDOWN = "breakdown"


class IterationBreakdown(ArithmeticError):
    """A local matrix became singular (or non-positive for scalars) mid-run."""

    def __init__(self, node: int, round: int, detail: str, edge: tuple[int, int] | None = None):
        self.node = node
        self.round = round
        self.edge = edge
        self.detail = detail
        where = f"node {node}" if edge is None else f"node {node}, edge {edge[0]}->{edge[1]}"
        super().__init__(f"iteration breakdown at round {round}, {where}: {detail}")


@dataclass(eq=False)
class RunTrace:
    """Per-round estimates of one engine run.

    ``estimates[k][i]`` is node i's (0-based) estimate at round
    ``first_round + k``; ``precisions`` holds the matching local precision
    matrices. ``messages[k]`` is only filled when message logging is on.
    """

    algorithm: str
    instance: str
    dims: tuple[int, ...]
    first_round: int
    estimates: list[list[np.ndarray]] = field(default_factory=list)
    precisions: list[list[np.ndarray]] = field(default_factory=list)
    messages: list[dict] | None = None
    stop_reason: str | None = None
    rounds: int = 0
    breakdown: IterationBreakdown | None = None

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def round_numbers(self) -> range:
        return range(self.first_round, self.first_round + len(self.estimates))

    @property
    def last_round(self) -> int:
        return self.first_round + len(self.estimates) - 1

    def has_round(self, t: int) -> bool:
        return self.first_round <= t <= self.last_round

    def estimate(self, t: int) -> list[np.ndarray]:
        if not self.has_round(t):
            raise IndexError(f"round {t} not recorded ({self.algorithm} has {self.first_round}..{self.last_round})")
        return self.estimates[t - self.first_round]

    def precision(self, t: int) -> list[np.ndarray]:
        if not self.has_round(t):
            raise IndexError(f"round {t} not recorded")
        return self.precisions[t - self.first_round]

    def message_log(self, t: int) -> dict:
        if self.messages is None:
            raise ValueError("message logging was not enabled for this run")
        return self.messages[t - self.first_round]

    def final(self) -> list[np.ndarray]:
        return self.estimates[-1]


def max_change(prev: list[np.ndarray], cur: list[np.ndarray]) -> float:
    if not cur:
        return 0.0
    return max(float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(prev, cur))
