"""Flexible GMRES with right preconditioning and no restarts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BreakdownError, DivergenceError, UndefinedRateError

REORTH_THRESHOLD = 1.0 / math.sqrt(2.0)


@dataclass
class KrylovReport:
    """Outcome of one solve.

    ``residual_history[j]`` is ``||A u_j - F||`` after ``j`` iterations, taken
    from the Arnoldi recurrence and replaced by an explicitly recomputed
    residual at termination.
    """

    iterations: int
    residual_history: list[float]
    converged: bool
    rho: float
    wall_time: float
    arnoldi_residuals: list[float] = field(default_factory=list, repr=False)

    @property
    def r0(self) -> float:
        return self.residual_history[0]

    @property
    def r_end(self) -> float:
        return self.residual_history[-1]

    @property
    def relative_residual(self) -> float:
        return self.r_end / self.r0 if self.r0 > 0 else 0.0


def average_rate(report: KrylovReport) -> float:
    """``(r_end / r_0) ** (1 / end)``."""
    end = report.iterations
    if end < 1:
        raise UndefinedRateError("average rate needs at least one iteration")
    r0 = report.residual_history[0]
    if not r0 > 0:
        raise UndefinedRateError("initial residual is zero")
    return (report.residual_history[-1] / r0) ** (1.0 / end)


def _givens(a: complex, b: complex) -> tuple[float, complex, complex]:
    """Rotation with ``[c, s; -conj(s), c] @ [a, b] = [r, 0]``, ``c`` real."""
    if b == 0:
        return 1.0, 0j, a
    if a == 0:
        return 0.0, np.conj(b) / abs(b), abs(b)
    na = abs(a)
    nr = math.hypot(na, abs(b))
    c = na / nr
    alpha = a / na
    s = alpha * np.conj(b) / nr
    return c, s, alpha * nr


def fgmres(
    apply_A: Callable[[np.ndarray], np.ndarray],
    apply_P_inv: Callable[[np.ndarray], np.ndarray],
    F: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    x0: np.ndarray | None = None,
    keep_basis: bool = False,
):
    """Solve ``A x = F`` with FGMRES, preconditioned from the right.

    Stops when ``||A x - F|| <= tol * ||A x0 - F||`` (checked against an
    explicit residual) or after ``max_iter`` iterations.  Returns
    ``(x, report)``; with ``keep_basis`` the report carries the Arnoldi
    basis as ``report.basis``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    start = time.perf_counter()
    F = np.asarray(F, dtype=np.complex128)
    x0 = np.zeros_like(F) if x0 is None else np.asarray(x0, dtype=np.complex128).copy()
    r = F - apply_A(x0)
    beta = float(np.linalg.norm(r))
    if not math.isfinite(beta):
        raise DivergenceError("initial residual is not finite")
    history = [beta]
    if beta == 0.0:
        report = KrylovReport(0, history, True, 0.0, time.perf_counter() - start, [beta])
        return x0, report

    m = max_iter
    V = [r / beta]
    Z = []
    H = np.zeros((m + 1, m), dtype=np.complex128)
    R = np.zeros((m + 1, m), dtype=np.complex128)
    cs = np.zeros(m)
    sn = np.zeros(m, dtype=np.complex128)
    g = np.zeros(m + 1, dtype=np.complex128)
    g[0] = beta
    estimates = [beta]

    def solution(j):
        y = _back_substitute(R[: j + 1, : j + 1], g[: j + 1])
        x = x0.copy()
        for i in range(j + 1):
            x += y[i] * Z[i]
        return x

    converged = False
    x = x0
    j = -1
    for j in range(m):
        z = apply_P_inv(V[j])
        w = apply_A(z)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite Krylov vector at iteration {j + 1}")
        Z.append(z)
        norm_in = float(np.linalg.norm(w))
        for i in range(j + 1):
            hij = np.vdot(V[i], w)
            H[i, j] += hij
            w -= hij * V[i]
        hnext = float(np.linalg.norm(w))
        if hnext < REORTH_THRESHOLD * norm_in:
            for i in range(j + 1):
                hij = np.vdot(V[i], w)
                H[i, j] += hij
                w -= hij * V[i]
            hnext = float(np.linalg.norm(w))
        H[j + 1, j] = hnext

        col = H[: j + 2, j].copy()
        for i in range(j):
            t = cs[i] * col[i] + sn[i] * col[i + 1]
            col[i + 1] = -np.conj(sn[i]) * col[i] + cs[i] * col[i + 1]
            col[i] = t
        cs[j], sn[j], col[j] = _givens(col[j], col[j + 1])
        col[j + 1] = 0.0
        R[: j + 2, j] = col
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        est = abs(g[j + 1])
        estimates.append(est)
        history.append(est)

        breakdown = hnext <= 1e-14 * max(norm_in, 1e-300)
        if est <= tol * beta or breakdown or j == m - 1:
            x = solution(j)
            true_res = float(np.linalg.norm(F - apply_A(x)))
            history[-1] = true_res
            if true_res <= tol * beta:
                converged = True
                break
            if breakdown:
                raise BreakdownError(
                    f"Krylov space exhausted at iteration {j + 1} with relative residual "
                    f"{true_res / beta:.3e}"
                )
            if j == m - 1:
                break
        V.append(w / hnext)

    iterations = j + 1
    rho = (history[-1] / beta) ** (1.0 / iterations)
    report = KrylovReport(
        iterations, history, converged, rho, time.perf_counter() - start, estimates
    )
    if keep_basis:
        report.basis = np.array(V[: iterations + 1])
    return x, report


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    y = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1 : n] @ y[i + 1 : n]) / R[i, i]
    return y
