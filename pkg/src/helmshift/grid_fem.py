"""Q_p finite elements on a uniform square grid for the shifted Helmholtz problem.

The discrete operator is

    A(k, eps) = K - M(k, eps) - i B(k)

with stiffness ``K``, volume mass ``M`` weighted by ``k(x)**2 + i eps(x)`` and
an impedance boundary mass ``B`` weighted by ``k(x)``.  ``K`` and ``M`` are
applied element by element from data stored at quadrature points; only ``B``
(which lives on the boundary) is kept as a sparse matrix.

Degrees of freedom are the tensor Lagrange nodes of the grid, numbered
lexicographically with the x index running fastest::

    dof = row * n + col,   x = col * h / p,   y = row * h / p
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, StateError

SUPPORTED_ORDERS = (1, 2, 3)


# ---------------------------------------------------------------------------
# grid levels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridLevel:
    """A uniformly refined grid on ``(0, s)**2`` with ``2**ell`` cells per side."""

    ell: int
    p: int = 1
    s: float = 1.0

    def __post_init__(self):
        if self.p not in SUPPORTED_ORDERS:
            raise ConfigurationError(f"unsupported order p={self.p}")
        if self.ell < 1:
            raise ConfigurationError(f"level index must be >= 1, got {self.ell}")
        if not self.s > 0:
            raise ConfigurationError(f"domain size must be positive, got {self.s}")

    @property
    def cells(self) -> int:
        return 2**self.ell

    @property
    def h(self) -> float:
        return self.s / self.cells

    @property
    def n(self) -> int:
        """Nodes per side."""
        return self.p * self.cells + 1

    @property
    def dofs(self) -> int:
        return self.n**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def nodes_1d(self) -> np.ndarray:
        return np.linspace(0.0, self.s, self.n)

    def coarsen(self) -> "GridLevel":
        return GridLevel(self.ell - 1, self.p, self.s)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.ndim != 1 or u.shape[0] != self.dofs:
            raise DimensionError(
                f"vector of shape {u.shape} does not match level with {self.dofs} dofs"
            )
        return u


def build_hierarchy(ell: int, p: int = 1, s: float = 1.0) -> tuple[GridLevel, GridLevel]:
    """Return ``(coarse, fine)`` with fine mesh size ``s * 2**-ell``."""
    if ell < 2:
        raise ConfigurationError(f"two-level hierarchy needs ell >= 2, got {ell}")
    fine = GridLevel(ell, p, s)
    return fine.coarsen(), fine


# ---------------------------------------------------------------------------
# wavenumber fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Raster:
    """Row-major scalar grid covering ``(0, extent)**2``, y ascending.

    ``values`` has shape ``(ny, nx)`` and is already normalized to [0, 1].
    """

    values: np.ndarray
    extent: float = 1.0

    def __call__(self, x, y):
        ny, nx = self.values.shape
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        fx = np.clip(x / self.extent, 0.0, 1.0) * (nx - 1)
        fy = np.clip(y / self.extent, 0.0, 1.0) * (ny - 1)
        i0 = np.minimum(np.floor(fx).astype(int), max(nx - 2, 0))
        j0 = np.minimum(np.floor(fy).astype(int), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        tx = fx - i0
        ty = fy - j0
        v = self.values
        out = (
            (1 - tx) * (1 - ty) * v[j0, i0]
            + tx * (1 - ty) * v[j0, i1]
            + (1 - tx) * ty * v[j1, i0]
            + tx * ty * v[j1, i1]
        )
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class WedgeLayers:
    """Three piecewise-constant bands separated by two (possibly slanted) lines.

    Band 0 lies below ``y = lower + lower_slope * x``, band 2 on or above
    ``y = upper + upper_slope * x``.
    """

    values: tuple[float, float, float] = (0.55, 0.75, 1.0)
    lower: float = 0.35
    lower_slope: float = 0.1
    upper: float = 0.65
    upper_slope: float = 0.0
    extent: float = 1.0

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float) / self.extent
        y = np.asarray(y, dtype=float) / self.extent
        out = np.full(np.broadcast(x, y).shape, self.values[1])
        out = np.where(y < self.lower + self.lower_slope * x, self.values[0], out)
        out = np.where(y >= self.upper + self.upper_slope * x, self.values[2], out)
        return out


@dataclass(frozen=True)
class WavenumberField:
    """``k(x) = k_max * mu(x)`` with a normalized profile ``mu`` in [0, 1]."""

    kind: str
    k_max: float
    profile: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "wedge", "raster"):
            raise ConfigurationError(f"unknown wavenumber kind {self.kind!r}")
        if self.k_max < 0 or not math.isfinite(self.k_max):
            raise ConfigurationError(f"k_max must be finite and >= 0, got {self.k_max}")

    @classmethod
    def constant(cls, k: float) -> "WavenumberField":
        return cls("constant", float(k))

    def mu(self, x, y) -> np.ndarray:
        if self.profile is None:
            return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return np.clip(self.profile(x, y), 0.0, 1.0)

    def __call__(self, x, y) -> np.ndarray:
        return self.k_max * self.mu(x, y)

    def with_k_max(self, k_max: float) -> "WavenumberField":
        return WavenumberField(self.kind, float(k_max), self.profile)


# ---------------------------------------------------------------------------
# complex shift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """How the imaginary shift ``eps(x)`` is obtained from ``k(x)``.

    Modes: ``none`` (eps = 0), ``k_pow`` (eps = k**sigma), ``fixed``
    (constant eps) and ``map`` (eps = k**sigma_p with the fitted shift map).
    For ``map`` the exponent is evaluated once at ``k_max`` unless
    ``map_mode='pointwise'``.
    """

    mode: str = "none"
    sigma: float | None = None
    eps: float | None = None
    p: int | None = None
    coeffs: object = None
    map_mode: str = "kmax"
    ell: float | None = None

    def __post_init__(self):
        if self.mode not in ("none", "k_pow", "fixed", "map"):
            raise ConfigurationError(f"unknown shift mode {self.mode!r}")
        if self.mode == "k_pow" and (self.sigma is None or not 1.0 <= self.sigma <= 2.0):
            raise ConfigurationError(f"shift exponent must lie in [1, 2], got {self.sigma}")
        if self.mode == "fixed" and (self.eps is None or self.eps < 0):
            raise ConfigurationError(f"fixed shift must be >= 0, got {self.eps}")
        if self.mode == "map":
            if self.p not in SUPPORTED_ORDERS and self.coeffs is None:
                raise ConfigurationError("map shift needs an order p or coefficients")
            if self.map_mode not in ("kmax", "pointwise"):
                raise ConfigurationError(f"unknown map mode {self.map_mode!r}")

    @classmethod
    def none(cls) -> "ShiftSpec":
        return cls("none")

    @classmethod
    def k_pow(cls, sigma: float) -> "ShiftSpec":
        return cls("k_pow", sigma=float(sigma))

    @classmethod
    def fixed(cls, eps: float) -> "ShiftSpec":
        return cls("fixed", eps=float(eps))

    @classmethod
    def map(cls, p: int, coeffs=None, map_mode: str = "kmax") -> "ShiftSpec":
        return cls("map", p=p, coeffs=coeffs, map_mode=map_mode)

    @property
    def label(self) -> str:
        if self.mode == "none":
            return "0"
        if self.mode == "fixed":
            return f"{self.eps:g}"
        if self.mode == "map":
            return "k^sigma"
        if self.sigma == 1.0:
            return "k"
        return f"k^{self.sigma:g}"

    def _map_coeffs(self):
        from .shift_model import bundled_coefficients

        return self.coeffs if self.coeffs is not None else bundled_coefficients(self.p)

    def _ell(self, h: float) -> float:
        return self.ell if self.ell is not None else -math.log2(h)

    def map_exponent(self, k: float, h: float) -> float:
        """Exponent from the shift map for wavenumber ``k`` and mesh size ``h``."""
        from .shift_model import sigma_map

        return sigma_map(k, self._ell(h), self._map_coeffs())

    def resolved(self, k_max: float, h: float) -> "ShiftSpec":
        """Pin a map shift to the level with mesh size ``h``.

        Both levels of a hierarchy must use the exponent of the fine level.
        """
        if self.mode != "map":
            return self
        if self.map_mode == "kmax":
            return ShiftSpec.k_pow(self.map_exponent(k_max, h))
        return replace(self, ell=self._ell(h))

    def epsilon(self, k_values: np.ndarray, k_max: float, h: float) -> np.ndarray:
        k_values = np.asarray(k_values, dtype=float)
        if self.mode == "none":
            return np.zeros_like(k_values)
        if self.mode == "fixed":
            return np.full_like(k_values, self.eps)
        if self.mode == "k_pow":
            return k_values**self.sigma
        if self.map_mode == "kmax":
            return k_values ** self.map_exponent(k_max, h)
        from .shift_model import sigma_map

        ell = self._ell(h)
        coeffs = self._map_coeffs()
        sig = np.vectorize(lambda kk: sigma_map(kk, ell, coeffs))(k_values)
        return k_values**sig


# ---------------------------------------------------------------------------
# reference element
# ---------------------------------------------------------------------------


def lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange basis on ``nodes`` at points ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(nodes)
    vals = np.ones((len(x), m))
    ders = np.zeros((len(x), m))
    for a in range(m):
        others = [b for b in range(m) if b != a]
        denom = np.prod([nodes[a] - nodes[b] for b in others])
        for b in others:
            vals[:, a] *= x - nodes[b]
            term = np.ones_like(x)
            for c in others:
                if c != b:
                    term = term * (x - nodes[c])
            ders[:, a] += term
        vals[:, a] /= denom
        ders[:, a] /= denom
    return vals, ders


def gauss_legendre_unit(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class ReferenceElement:
    """Tensor-product Q_p element on [0, 1]**2 with ``p + 1 + extra`` Gauss points."""

    p: int
    extra: int = 0
    xi: np.ndarray = field(init=False)
    w: np.ndarray = field(init=False)
    B1: np.ndarray = field(init=False)
    D1: np.ndarray = field(init=False)

    def __post_init__(self):
        self.xi, self.w = gauss_legendre_unit(self.p + 1 + self.extra)
        self.B1, self.D1 = lagrange_1d(np.linspace(0.0, 1.0, self.p + 1), self.xi)
        # local dof (b, a) -> b * (p+1) + a ; quad point (qb, qa) -> qb * nq + qa
        self.B = np.kron(self.B1, self.B1)
        self.Dx = np.kron(self.B1, self.D1)
        self.Dy = np.kron(self.D1, self.B1)
        self.w2 = np.kron(self.w, self.w)
        # stiffness on a square cell is independent of h in 2D
        self.K_loc = (self.Dx.T * self.w2) @ self.Dx + (self.Dy.T * self.w2) @ self.Dy

    @property
    def nq(self) -> int:
        return len(self.xi)


# ---------------------------------------------------------------------------
# element gather / scatter on the structured grid
# ---------------------------------------------------------------------------


def gather(level: GridLevel, u: np.ndarray) -> np.ndarray:
    """Element-local copies of ``u``, shape ``(cells**2, (p+1)**2)``."""
    p, E = level.p, level.cells
    grid = u.reshape(level.shape)
    win = sliding_window_view(grid, (p + 1, p + 1))[::p, ::p]
    return win.reshape(E * E, (p + 1) ** 2)


def scatter(level: GridLevel, local: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Sum element-local contributions into a global vector.

    Each local node index is one colour: elements sharing a colour never
    touch the same global node, so each strided add is conflict-free and
    the summation order is fixed.
    """
    p, E = level.p, level.cells
    if out is None:
        out = np.zeros(level.dofs, dtype=local.dtype)
    grid = out.reshape(level.shape)
    loc = local.reshape(E, E, p + 1, p + 1)
    stop = p * E
    for b in range(p + 1):
        for a in range(p + 1):
            grid[b : b + stop : p, a : a + stop : p] += loc[:, :, b, a]
    return out


def element_dofs(level: GridLevel) -> np.ndarray:
    return gather(level, np.arange(level.dofs))


def quadrature_points(level: GridLevel, ref: ReferenceElement) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature coordinates, each of shape ``(cells**2, nq**2)``."""
    E, h = level.cells, level.h
    c = np.arange(E)
    x1 = (c[:, None] + ref.xi[None, :]) * h  # (E, nq)
    X = np.broadcast_to(x1[None, :, None, :], (E, E, ref.nq, ref.nq))
    Y = np.broadcast_to(x1[:, None, :, None], (E, E, ref.nq, ref.nq))
    return X.reshape(E * E, -1), Y.reshape(E * E, -1)


# ---------------------------------------------------------------------------
# partial assembly
# ---------------------------------------------------------------------------


class QuadratureCache:
    """Per-element data at quadrature points for one (level, k, shift).

    Stores ``(k**2 + i eps) * |J| * w`` for every quadrature point plus the
    shared reference tables.  Nothing of size ``nnz(A)`` is kept.
    """

    def __init__(self, level: GridLevel, k: WavenumberField, shift: ShiftSpec | None = None):
        shift = shift or ShiftSpec.none()
        self.level = level
        self.ref = ReferenceElement(level.p)
        xq, yq = quadrature_points(level, self.ref)
        self.k_q = k(xq, yq)
        self.eps_q = shift.epsilon(self.k_q, k.k_max, level.h)
        self.jw = self.ref.w2 * level.h**2
        self.mass_weight = (self.k_q**2 + 1j * self.eps_q) * self.jw


def assemble_boundary(level: GridLevel, k: WavenumberField) -> sp.csr_matrix:
    """Sparse boundary mass ``B_ij = int_{dOmega} k phi_j phi_i``."""
    p, E, h, n = level.p, level.cells, level.h, level.n
    xi, w = gauss_legendre_unit(p + 1)
    B1, _ = lagrange_1d(np.linspace(0.0, 1.0, p + 1), xi)
    t = (np.arange(E)[:, None] + xi[None, :]) * h  # (E, nq) tangential coordinate
    local = p * np.arange(E)[:, None] + np.arange(p + 1)[None, :]  # (E, p+1)
    zero = np.zeros_like(t)
    edge = np.full_like(t, level.s)
    edges = [
        (t, zero, local),  # y = 0
        (t, edge, (n - 1) * n + local),  # y = s
        (zero, t, local * n),  # x = 0
        (edge, t, local * n + (n - 1)),  # x = s
    ]
    rows, cols, vals = [], [], []
    for x, y, dofs in edges:
        kw = k(x, y) * w[None, :] * h
        loc = np.einsum("eq,qa,qb->eab", kw, B1, B1)
        rows.append(np.repeat(dofs, p + 1, axis=1).ravel())
        cols.append(np.tile(dofs, (1, p + 1)).ravel())
        vals.append(loc.reshape(E, -1))
    B = sp.coo_matrix(
        (np.concatenate([v.ravel() for v in vals]), (np.concatenate(rows), np.concatenate(cols))),
        shape=(level.dofs, level.dofs),
    ).tocsr()
    B.eliminate_zeros()
    return B


class HelmholtzOperator:
    """Semi matrix-free ``A(k, eps) = K - M(k, eps) - i B(k)`` on one level."""

    def __init__(self, level: GridLevel, k: WavenumberField, shift: ShiftSpec | None = None):
        self.level = level
        self.k = k
        self.shift = shift or ShiftSpec.none()
        self.cache = QuadratureCache(level, k, self.shift)
        self.boundary = assemble_boundary(level, k)
        self._diag = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.level.dofs, self.level.dofs)

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        u = self.level.check(u)
        U = gather(self.level, u)
        return scatter(self.level, U @ self.cache.ref.K_loc)

    def mass(self, u: np.ndarray) -> np.ndarray:
        u = self.level.check(u)
        ref = self.cache.ref
        U = gather(self.level, u)
        return scatter(self.level, ((U @ ref.B.T) * self.cache.mass_weight) @ ref.B)

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = self.level.check(u)
        ref = self.cache.ref
        U = gather(self.level, u)
        local = U @ ref.K_loc - ((U @ ref.B.T) * self.cache.mass_weight) @ ref.B
        out = scatter(self.level, local)
        out -= 1j * (self.boundary @ u)
        return out

    __call__ = apply

    def diagonal(self) -> np.ndarray:
        """Diagonal of ``A`` accumulated from element-local diagonals."""
        if self._diag is None:
            ref = self.cache.ref
            E2 = self.level.cells**2
            local = np.broadcast_to(np.diag(ref.K_loc), (E2, ref.K_loc.shape[0])).astype(complex)
            local = local - self.cache.mass_weight @ (ref.B**2)
            d = scatter(self.level, local)
            d -= 1j * self.boundary.diagonal()
            self._diag = d
        return self._diag

    def assemble(self) -> sp.csr_matrix:
        """Explicit sparse matrix of the same operator (used on the coarse level)."""
        ref = self.cache.ref
        dofs = element_dofs(self.level)
        nloc = dofs.shape[1]
        M_e = np.einsum("eq,qi,qj->eij", self.cache.mass_weight, ref.B, ref.B)
        local = ref.K_loc[None, :, :] - M_e
        rows = np.repeat(dofs, nloc, axis=1).ravel()
        cols = np.tile(dofs, (1, nloc)).ravel()
        A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=self.shape).tocsr()
        return (A - 1j * self.boundary).tocsr()


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def apply_stiffness(u: np.ndarray, level: GridLevel) -> np.ndarray:
    u = level.check(u)
    ref = ReferenceElement(level.p)
    return scatter(level, gather(level, u) @ ref.K_loc)


def apply_mass(
    u: np.ndarray, level: GridLevel, k: WavenumberField, shift: ShiftSpec | None = None
) -> np.ndarray:
    u = level.check(u)
    cache = QuadratureCache(level, k, shift)
    ref = cache.ref
    return scatter(level, ((gather(level, u) @ ref.B.T) * cache.mass_weight) @ ref.B)


def apply_system(
    u: np.ndarray,
    level: GridLevel,
    k: WavenumberField,
    shift: ShiftSpec | None = None,
    boundary: sp.spmatrix | None = None,
) -> np.ndarray:
    """``K u - M(k, eps) u - i B u`` with a previously assembled ``boundary``."""
    if boundary is None:
        raise StateError("boundary matrix has not been assembled for this level")
    u = level.check(u)
    if boundary.shape != (level.dofs, level.dofs):
        raise DimensionError("boundary matrix does not match level")
    out = apply_stiffness(u, level) - apply_mass(u, level, k, shift)
    out -= 1j * (boundary @ u)
    return out


def source_gaussian(center=(0.5, 0.55), amplitude: float = 2.0, width: float = 1000.0):
    """``f(x) = amplitude * exp(-width * |x - center|**2)``."""
    cx, cy = center

    def f(x, y):
        return amplitude * np.exp(-width * ((x - cx) ** 2 + (y - cy) ** 2))

    return f


def assemble_rhs(level: GridLevel, f: Callable | None, extra_points: int = 0) -> np.ndarray:
    """Load vector ``F_i = int f phi_i`` (the boundary datum g is zero)."""
    if f is None:
        return np.zeros(level.dofs, dtype=complex)
    ref = ReferenceElement(level.p, extra=extra_points)
    xq, yq = quadrature_points(level, ref)
    fq = np.asarray(f(xq, yq), dtype=complex) * (ref.w2 * level.h**2)
    return scatter(level, fq @ ref.B)
