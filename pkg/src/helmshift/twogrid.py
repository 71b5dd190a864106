"""Twogrid V(nu, nu)-cycle on the shifted operator, used as FGMRES preconditioner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import banded_lu
from .errors import ConfigurationError, DimensionError, FactorizationError, SingularSmootherError
from .grid_fem import GridLevel, HelmholtzOperator, ShiftSpec, WavenumberField, lagrange_1d


@dataclass(frozen=True)
class CycleConfig:
    nu: int = 3
    omega: float = 2.0 / 3.0
    levels: int = 2

    def __post_init__(self):
        if self.nu < 1:
            raise ConfigurationError(f"nu must be >= 1, got {self.nu}")
        if not 0 < self.omega <= 1:
            raise ConfigurationError(f"omega must lie in (0, 1], got {self.omega}")
        if self.levels != 2:
            raise ConfigurationError("only two-level hierarchies are supported")


# ---------------------------------------------------------------------------
# grid transfers
# ---------------------------------------------------------------------------


def interpolation_1d(coarse: GridLevel, fine: GridLevel) -> sp.csr_matrix:
    """1D canonical Q_p interpolation, shape ``(fine.n, coarse.n)``."""
    p = fine.p
    # fine nodes inside one coarse cell, in units of the coarse cell
    t = np.linspace(0.0, 1.0, 2 * p + 1)
    L, _ = lagrange_1d(np.linspace(0.0, 1.0, p + 1), t)
    L[np.abs(L) < 1e-14] = 0.0
    P = sp.lil_matrix((fine.n, coarse.n))
    for c in range(coarse.cells):
        for jf in range(2 * p + 1):
            for ic in range(p + 1):
                if L[jf, ic] != 0.0:
                    P[2 * p * c + jf, p * c + ic] = L[jf, ic]
    return P.tocsr()


class Transfer:
    """Prolongation ``I = P1 (x) P1`` and its plain transpose, matrix-free."""

    def __init__(self, coarse: GridLevel, fine: GridLevel):
        if fine.p != coarse.p or fine.ell != coarse.ell + 1 or fine.s != coarse.s:
            raise DimensionError("levels are not a nested coarse/fine pair")
        self.coarse = coarse
        self.fine = fine
        self.P1 = interpolation_1d(coarse, fine)
        self.P1T = self.P1.T.tocsr()

    def prolongate(self, uc: np.ndarray) -> np.ndarray:
        uc = self.coarse.check(uc).reshape(self.coarse.shape)
        tmp = self.P1 @ uc  # rows
        return (self.P1 @ tmp.T).T.ravel()

    def restrict(self, rf: np.ndarray) -> np.ndarray:
        rf = self.fine.check(rf).reshape(self.fine.shape)
        tmp = self.P1T @ rf
        return (self.P1T @ tmp.T).T.ravel()

    def matrix(self) -> sp.csr_matrix:
        return sp.kron(self.P1, self.P1).tocsr()


def restrict_residual(r_fine, fine: GridLevel, coarse: GridLevel) -> np.ndarray:
    return Transfer(coarse, fine).restrict(r_fine)


def prolongate_add(u_fine, u_coarse, fine: GridLevel, coarse: GridLevel) -> np.ndarray:
    return np.asarray(u_fine) + Transfer(coarse, fine).prolongate(u_coarse)


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------


def jacobi_smooth(u, F, op, steps: int, omega: float, diag=None) -> np.ndarray:
    """``steps`` sweeps of ``u <- u + omega D^-1 (F - A u)``.

    ``op`` is any callable applying ``A``; ``diag`` defaults to
    ``op.diagonal()``.
    """
    d = op.diagonal() if diag is None else diag
    if np.any(d == 0):
        raise SingularSmootherError("zero entry on the diagonal of the smoothed operator")
    inv = omega / d
    u = np.array(u, dtype=np.complex128, copy=True)
    for _ in range(steps):
        u += inv * (F - op(u))
    return u


# ---------------------------------------------------------------------------
# coarse solve
# ---------------------------------------------------------------------------


class CoarseFactorization:
    """LU of the rediscretized coarse matrix, reused for every coarse solve."""

    def __init__(self, op: HelmholtzOperator, dense_threshold: int = banded_lu.DENSE_THRESHOLD):
        self.level = op.level
        self.matrix = op.assemble()
        try:
            self.lu = banded_lu.factorize(self.matrix, dense_threshold)
        except FactorizationError as exc:
            raise FactorizationError(
                f"coarse matrix singular (k_max={op.k.k_max}, shift={op.shift.label}, "
                f"h={op.level.h}): {exc}",
                k=op.k.k_max,
                eps=op.shift.label,
                h=op.level.h,
            ) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.lu.solve(b)


def coarse_factorize(coarse: GridLevel, k: WavenumberField, shift: ShiftSpec) -> CoarseFactorization:
    return CoarseFactorization(HelmholtzOperator(coarse, k, shift))


# ---------------------------------------------------------------------------
# the cycle
# ---------------------------------------------------------------------------


class TwoGrid:
    """One V(nu, nu)-cycle with a direct coarse solve.

    The coarse LU is computed on first use and reused afterwards;
    ``factorizations`` counts how often that happened.
    """

    def __init__(
        self,
        fine: GridLevel,
        k: WavenumberField,
        shift: ShiftSpec,
        config: CycleConfig | None = None,
    ):
        self.config = config or CycleConfig()
        self.fine = fine
        self.coarse = fine.coarsen()
        self.k = k
        self.shift = shift
        resolved = shift.resolved(k.k_max, fine.h)
        self.op = HelmholtzOperator(fine, k, resolved)
        self.coarse_op = HelmholtzOperator(self.coarse, k, resolved)
        self.transfer = Transfer(self.coarse, fine)
        self.diag = self.op.diagonal()
        if np.any(self.diag == 0):
            raise SingularSmootherError("zero entry on the fine-level diagonal")
        self._coarse_lu = None
        self.factorizations = 0

    @property
    def coarse_lu(self) -> CoarseFactorization:
        if self._coarse_lu is None:
            self._coarse_lu = CoarseFactorization(self.coarse_op)
            self.factorizations += 1
        return self._coarse_lu

    def smooth(self, u, F, steps=None):
        cfg = self.config
        return jacobi_smooth(u, F, self.op, cfg.nu if steps is None else steps, cfg.omega, self.diag)

    def v_cycle(self, u, F) -> np.ndarray:
        u = self.smooth(u, F)
        r_c = self.transfer.restrict(F - self.op(u))
        u_c = self.coarse_lu.solve(r_c)
        u = u + self.transfer.prolongate(u_c)
        # D is diagonal, so the transposed Jacobi iteration is the same update
        u = self.smooth(u, F)
        return u

    def __call__(self, F: np.ndarray) -> np.ndarray:
        return self.v_cycle(np.zeros_like(F, dtype=np.complex128), F)


def v_cycle(u, F, fine: GridLevel, k: WavenumberField, shift: ShiftSpec, config=None):
    return TwoGrid(fine, k, shift, config).v_cycle(u, F)


def measure_contraction(tg: TwoGrid, cycles: int = 25, tail: int = 10, seed: int = 0) -> float:
    """Asymptotic error contraction per cycle on ``A_eps u = 0``.

    Starts from a random real vector and returns the geometric mean
    reduction over the last ``tail`` cycles.
    """
    if not 1 <= tail <= cycles:
        raise ConfigurationError("need 1 <= tail <= cycles")
    u = np.random.default_rng(seed).standard_normal(tg.fine.dofs).astype(np.complex128)
    F = np.zeros_like(u)
    norms = [np.linalg.norm(u)]
    for _ in range(cycles):
        u = tg.v_cycle(u, F)
        norms.append(np.linalg.norm(u))
    return float((norms[-1] / norms[-1 - tail]) ** (1.0 / tail))
