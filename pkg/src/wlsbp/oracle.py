"""Centralized ground truth and matrix analysis of the information matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .assembly import InformationSystem, StackedSystem

SOLVE_TOL = 1e-10
EIG_TOL = 1e-12
EIG_MAX_ITER = 10_000


class UnidentifiableError(ArithmeticError):
    """Psi is singular, so the WLS problem has no unique solution."""


class UnsupportedCaseError(ValueError):
    """Operation is only defined for scalar node variables."""


@dataclass(frozen=True, eq=False)
class GlobalSolution:
    x_star: tuple[np.ndarray, ...]
    psi_condition: float

    def vector(self) -> np.ndarray:
        return np.concatenate(self.x_star) if self.x_star else np.zeros(0)


@dataclass(frozen=True, eq=False)
class DominanceCertificate:
    is_pd: bool
    d_scaling: np.ndarray | None
    strictness_margin: float | None
    min_eigenvalue: float


@dataclass(frozen=True, eq=False)
class RateBound:
    omega_bar: np.ndarray
    rho: float
    iterations: int
    C: float | None = None


def _split(info: InformationSystem, x: np.ndarray) -> tuple[np.ndarray, ...]:
    off = info.offsets
    return tuple(x[off[i]:off[i + 1]].copy() for i in range(info.n))


def solve_global(info: InformationSystem, tol: float = SOLVE_TOL) -> GlobalSolution:
    """x* = Psi^-1 alpha.

    Cholesky first; vector instances whose Psi is not numerically PD fall
    back to a pivoted LU solve. Raises UnidentifiableError when Psi is
    singular, which happens when no node carries a self measurement.
    """
    psi = info.psi()
    alpha = info.alpha_vector()
    if psi.shape[0] == 0:
        return GlobalSolution((), 1.0)
    msg = ("information matrix is singular: the system is unidentifiable "
           "(at least one informative self measurement is required on a connected graph)")
    cond = float(np.linalg.cond(psi))
    if not np.isfinite(cond) or cond > 1e15:
        raise UnidentifiableError(msg)
    try:
        x = linalg.cho_solve(linalg.cho_factor(psi, lower=True), alpha)
    except linalg.LinAlgError:
        try:
            x = linalg.solve(psi, alpha, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            raise UnidentifiableError(msg) from None
    resid = np.linalg.norm(psi @ x - alpha)
    scale = max(np.linalg.norm(alpha), np.finfo(float).tiny)
    if resid > tol * scale and np.linalg.norm(alpha) > 0:
        raise UnidentifiableError(f"{msg}; residual {resid:.3e}")
    return GlobalSolution(_split(info, x), cond)


def stacked_least_squares(st: StackedSystem) -> np.ndarray:
    """Whitened least squares directly on (H, R, z); used as an oracle."""
    if st.H.shape[0] == 0:
        return np.zeros(st.H.shape[1])
    L = np.linalg.cholesky(st.R)
    Hw = linalg.solve_triangular(L, st.H, lower=True)
    zw = linalg.solve_triangular(L, st.z, lower=True)
    x, *_ = np.linalg.lstsq(Hw, zw, rcond=None)
    return x


def _require_scalar(info: InformationSystem, what: str) -> None:
    if not info.is_scalar:
        raise UnsupportedCaseError(f"{what} is defined for scalar node variables only")


def comparison_matrix(info: InformationSystem) -> np.ndarray:
    _require_scalar(info, "comparison matrix")
    psi = info.psi()
    out = -np.abs(psi)
    np.fill_diagonal(out, np.abs(np.diag(psi)))
    return out


def dominance_certificate(info: InformationSystem) -> DominanceCertificate:
    """Check that the comparison matrix is a nonsingular M-matrix and build a witness.

    A positive definite Z-matrix is a nonsingular M-matrix, whose inverse is
    entrywise nonnegative. Solving Psi_bar d = 1 then gives d > 0 with
    Psi_bar diag(d) strictly row diagonally dominant.
    """
    cmp = comparison_matrix(info)
    if cmp.shape[0] == 0:
        return DominanceCertificate(False, None, None, float("nan"))
    min_eig = float(np.linalg.eigvalsh(cmp)[0])
    try:
        c = linalg.cho_factor(cmp, lower=True)
    except linalg.LinAlgError:
        return DominanceCertificate(False, None, None, min_eig)
    d = linalg.cho_solve(c, np.ones(cmp.shape[0]))
    absd = np.abs(cmp)
    diag = np.diag(absd) * d
    off = absd @ d - diag
    margin = float(np.min(diag - off))
    if np.any(d <= 0) or margin <= 0:
        return DominanceCertificate(True, None, margin, min_eig)
    return DominanceCertificate(True, d, margin, min_eig)


def spectral_radius_nonneg(M: np.ndarray, tol: float = EIG_TOL,
                           max_iter: int = EIG_MAX_ITER) -> tuple[float, int]:
    """Perron root of a nonnegative matrix by power iteration.

    Iterates on I + M rather than M: the shift keeps the Perron root strictly
    dominant even when M is periodic (bipartite graphs give eigenvalues +-rho).
    Returns (rho, iterations used).
    """
    n = M.shape[0]
    if n == 0 or not M.any():
        return 0.0, 0
    v = np.full(n, 1.0 / n)
    lam = 0.0
    for k in range(1, max_iter + 1):
        w = v + M @ v
        new = float(w.sum() / v.sum())
        v = w / w.sum()
        if abs(new - lam) < tol:
            return max(new - 1.0, 0.0), k
        lam = new
    return max(lam - 1.0, 0.0), max_iter


def rate_bound(info: InformationSystem, tol: float = EIG_TOL,
               max_iter: int = EIG_MAX_ITER) -> RateBound:
    _require_scalar(info, "rate bound")
    psi = info.psi()
    d = np.diag(psi)
    if np.any(d == 0):
        bad = [i + 1 for i in np.flatnonzero(d == 0)]
        raise UnidentifiableError(f"nodes {bad} carry no measurement information")
    omega = np.eye(psi.shape[0]) - psi / d[:, None]
    omega_bar = np.abs(omega)
    rho, iters = spectral_radius_nonneg(omega_bar, tol, max_iter)
    return RateBound(omega_bar, rho, iters)
