"""Slow reference implementations used to cross-check the fast code paths.

Everything here is written independently of the vectorized kernels:
element matrices come from exact polynomial integration or explicit
loops, LFA symbols from stencil sums, the loss from a double loop.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial

# ---------------------------------------------------------------------------
# finite elements
# ---------------------------------------------------------------------------


def lagrange_polys(p: int) -> list[Polynomial]:
    """Lagrange basis on ``p + 1`` equispaced nodes of [0, 1] as polynomials."""
    nodes = np.linspace(0.0, 1.0, p + 1)
    basis = []
    for a, xa in enumerate(nodes):
        others = np.delete(nodes, a)
        poly = Polynomial.fromroots(others)
        basis.append(poly / poly(xa))
    return basis


def exact_1d_matrices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-interval mass and stiffness by exact integration."""
    phi = lagrange_polys(p)
    dphi = [f.deriv() for f in phi]
    m = p + 1
    M = np.empty((m, m))
    S = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            F = (phi[i] * phi[j]).integ()
            G = (dphi[i] * dphi[j]).integ()
            M[i, j] = F(1.0) - F(0.0)
            S[i, j] = G(1.0) - G(0.0)
    return M, S


def exact_local_stiffness(p: int) -> np.ndarray:
    """Q_p stiffness on one square cell, local dofs ordered with x fastest."""
    M, S = exact_1d_matrices(p)
    return np.kron(M, S) + np.kron(S, M)


def naive_assemble(level, k, shift=None) -> sp.csr_matrix:
    """Element-by-element assembly of ``K - M(k, eps) - i B``.

    ``k`` is a wavenumber field and ``shift`` a shift specification with an
    ``epsilon(k_values, k_max, h)`` method.
    """
    p, E, h, n = level.p, level.cells, level.h, level.n
    phi = lagrange_polys(p)
    xg, wg = np.polynomial.legendre.leggauss(p + 1)
    xg, wg = 0.5 * (xg + 1.0), 0.5 * wg
    vals1 = np.array([[f(x) for f in phi] for x in xg])  # (q, a)
    K_loc = exact_local_stiffness(p)
    entries: dict[tuple[int, int], complex] = {}

    def add(i, j, v):
        entries[(i, j)] = entries.get((i, j), 0.0) + v

    for ey in range(E):
        for ex in range(E):
            dofs = [(p * ey + b) * n + (p * ex + a) for b in range(p + 1) for a in range(p + 1)]
            xq = (ex + xg) * h
            yq = (ey + xg) * h
            X, Y = np.meshgrid(xq, yq)  # X[qy, qx]
            kq = np.asarray(k(X, Y), dtype=float)
            eps = np.zeros_like(kq) if shift is None else shift.epsilon(kq, k.k_max, h)
            coef = (kq**2 + 1j * eps) * np.outer(wg, wg) * h * h
            for li, I in enumerate(dofs):
                bi, ai = divmod(li, p + 1)
                for lj, J in enumerate(dofs):
                    bj, aj = divmod(lj, p + 1)
                    phii = np.outer(vals1[:, bi], vals1[:, ai])
                    phij = np.outer(vals1[:, bj], vals1[:, aj])
                    add(I, J, K_loc[li, lj] - np.sum(coef * phii * phij))
    # impedance term, one boundary segment at a time
    for e in range(E):
        t = (e + xg) * h
        for side in range(4):
            if side == 0:
                x, y, idx = t, np.zeros_like(t), [p * e + a for a in range(p + 1)]
            elif side == 1:
                x, y, idx = t, np.full_like(t, level.s), [(n - 1) * n + p * e + a for a in range(p + 1)]
            elif side == 2:
                x, y, idx = np.zeros_like(t), t, [(p * e + a) * n for a in range(p + 1)]
            else:
                x, y, idx = np.full_like(t, level.s), t, [(p * e + a) * n + n - 1 for a in range(p + 1)]
            kq = np.asarray(k(x, y), dtype=float)
            for a, I in enumerate(idx):
                for b, J in enumerate(idx):
                    add(I, J, -1j * np.sum(kq * wg * vals1[:, a] * vals1[:, b]) * h)
    keys = list(entries)
    rows = np.array([r for r, _ in keys])
    cols = np.array([c for _, c in keys])
    data = np.array([entries[key] for key in keys], dtype=complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(level.dofs, level.dofs))


# ---------------------------------------------------------------------------
# Fourier symbols from stencils
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def q1_stencils() -> tuple[np.ndarray, np.ndarray]:
    """3x3 stiffness and unit-h mass stencils of an interior Q1 node.

    Obtained by assembling the four cells around the node.  Cached; do not
    modify the returned arrays.
    """
    M, S = exact_1d_matrices(1)
    K_loc = np.kron(M, S) + np.kron(S, M)
    M_loc = np.kron(M, M)
    Ks = np.zeros((3, 3))
    Ms = np.zeros((3, 3))
    for cy in (0, 1):
        for cx in (0, 1):
            # the node sits at local corner (1 - cy, 1 - cx) of cell (cy, cx)
            me = (1 - cy) * 2 + (1 - cx)
            for lj in range(4):
                by, bx = divmod(lj, 2)
                Ks[cy + by, cx + bx] += K_loc[me, lj]
                Ms[cy + by, cx + bx] += M_loc[me, lj]
    return Ks, Ms


def stencil_symbol(stencil: np.ndarray, t1, t2) -> np.ndarray:
    """``sum_kappa s_kappa exp(i theta . kappa)`` for a stencil indexed ``[y, x]``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    out = np.zeros(np.broadcast(t1, t2).shape, dtype=complex)
    ry, rx = stencil.shape[0] // 2, stencil.shape[1] // 2
    for j in range(stencil.shape[0]):
        for i in range(stencil.shape[1]):
            out = out + stencil[j, i] * np.exp(1j * ((i - rx) * t1 + (j - ry) * t2))
    return out


def lh_symbol_oracle(t1, t2, lam, h):
    Ks, Ms = q1_stencils()
    return stencil_symbol(Ks - lam * h * h * Ms, t1, t2)


def l2h_symbol_oracle(t1, t2, lam, h):
    Ks, Ms = q1_stencils()
    return stencil_symbol(Ks - lam * 4 * h * h * Ms, 2 * np.asarray(t1), 2 * np.asarray(t2))


def smoother_symbol_oracle(t1, t2, lam, h, omega):
    Ks, Ms = q1_stencils()
    L = Ks - lam * h * h * Ms
    ident = np.zeros((3, 3))
    ident[1, 1] = 1.0
    return stencil_symbol(ident - omega / L[1, 1] * L, t1, t2)


FULL_WEIGHTING = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]])


def prolongation_symbol_oracle(t1, t2):
    return stencil_symbol(FULL_WEIGHTING / 4, t1, t2).real


def restriction_symbol_oracle(t1, t2):
    return stencil_symbol(FULL_WEIGHTING / 16, t1, t2).real


def _harmonic_list(t1, t2):
    s1 = -1.0 if t1 >= 0 else 1.0
    s2 = -1.0 if t2 >= 0 else 1.0
    b1, b2 = t1 + s1 * math.pi, t2 + s2 * math.pi
    return [(t1, t2), (b1, b2), (b1, t2), (t1, b2)]


def twogrid_symbol_oracle(t1, t2, k, h, sigma, omega=2 / 3, nu1=3, nu2=3) -> np.ndarray:
    """4x4 twogrid symbol at one low frequency, built entry by entry."""
    lam = k**2 + 1j * k**sigma
    hs = _harmonic_list(float(t1), float(t2))
    L = [complex(lh_symbol_oracle(a, b, lam, h)) for a, b in hs]
    S = [complex(smoother_symbol_oracle(a, b, lam, h, omega)) for a, b in hs]
    P = [float(prolongation_symbol_oracle(a, b)) for a, b in hs]
    R = [float(restriction_symbol_oracle(a, b)) for a, b in hs]
    Lc = complex(l2h_symbol_oracle(t1, t2, lam, h))
    T = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            Kij = (1.0 if i == j else 0.0) - P[i] * R[j] * L[j] / Lc
            T[i, j] = S[i] ** nu2 * Kij * S[j] ** nu1
    return T


# ---------------------------------------------------------------------------
# shift map regression
# ---------------------------------------------------------------------------


def loss_oracle(coeffs, dataset, p) -> float:
    """Weighted regression loss with an explicit double loop for the weights."""
    kc0, kc1, a0, a1 = (float(c) for c in coeffs)
    total = len(dataset)
    loss = 0.0
    for r in dataset:
        if r.p != p:
            continue
        same = 0
        for q in dataset:
            if q.p == p and q.ell == r.ell:
                same += 1
        w = same / total
        kc = kc1 * math.exp(kc0 * r.ell)
        alpha = a1 * math.exp(a0 * r.ell)
        sig = min(max(2.0 - math.exp(-alpha * (r.k - kc)), 1.0), 2.0)
        loss += (r.sigma_hat - sig) ** 2 / (w * w)
    return loss


def dense_scan(objective, points: int = 11, a: float = 1.0, b: float = 2.0) -> tuple[float, float]:
    """``(argmin, min)`` of ``objective`` on an equispaced grid of ``[a, b]``."""
    best = (math.nan, math.inf)
    for s in np.linspace(a, b, points):
        v = objective(float(s))
        if v < best[1]:
            best = (float(s), v)
    return best
