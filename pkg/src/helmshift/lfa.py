"""Local Fourier analysis of the Q1 twogrid method for ``K - (k^2 + i k^sigma) M``.

All symbols are evaluated on arrays of frequencies; the four harmonics of a
low frequency are ordered ``(0,0), (1,1), (1,0), (0,1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DegenerateConfigurationError

HARMONICS = ((0, 0), (1, 1), (1, 0), (0, 1))


@dataclass(frozen=True)
class LfaConfig:
    k: float
    h: float
    omega: float = 2.0 / 3.0
    nu1: int = 3
    nu2: int = 3
    sigma: float = 2.0

    @property
    def lam(self) -> complex:
        return self.k**2 + 1j * self.k**self.sigma

    @property
    def kh(self) -> float:
        return self.k * self.h

    @property
    def exclusion_tol(self) -> float:
        return 1e-10 * max(1.0, abs(self.lam) * self.h**2)

    def with_sigma(self, sigma: float) -> "LfaConfig":
        return replace(self, sigma=sigma)


# ---------------------------------------------------------------------------
# scalar symbols
# ---------------------------------------------------------------------------


def symbol_Lh(t1, t2, lam, h):
    c1, c2 = np.cos(t1), np.cos(t2)
    stiff = (8 - 2 * c1 - 2 * c2 - 4 * c1 * c2) / 3
    mass = (16 + 8 * c1 + 8 * c2 + 4 * c1 * c2) / 36
    return stiff - lam * h**2 * mass


def symbol_L2h(t1, t2, lam, h):
    """Coarse operator at the doubled low frequency, mesh size ``2h``."""
    c1, c2 = np.cos(2 * t1), np.cos(2 * t2)
    stiff = (8 - 2 * c1 - 2 * c2 - 4 * c1 * c2) / 3
    mass = (16 + 8 * c1 + 8 * c2 + 4 * c1 * c2) / 9
    return stiff - lam * h**2 * mass


def symbol_smoother(t1, t2, lam, h, omega):
    c1, c2 = np.cos(t1), np.cos(t2)
    lh2 = lam * h**2
    denom = 8 / 3 - lh2 * 16 / 36
    edge = (2 / 3 + lh2 * 8 / 36) / denom
    corner = (4 / 3 + lh2 * 4 / 36) / denom
    return (1 - omega) + omega * edge * c1 + omega * edge * c2 + omega * corner * c1 * c2


def smoother_denominator(lam, h):
    return 8 / 3 - lam * h**2 * 16 / 36


def harmonics(t1, t2):
    """Return ``(T1, T2)`` with a leading axis of length 4 over the harmonics."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    b1 = np.where(t1 < 0, t1 + np.pi, t1 - np.pi)
    b2 = np.where(t2 < 0, t2 + np.pi, t2 - np.pi)
    return np.stack([t1, b1, b1, t1]), np.stack([t2, b2, t2, b2])


def symbol_transfers(t1, t2):
    """``(restriction, prolongation)`` symbol vectors, last axis of length 4.

    The restriction row is one quarter of the prolongation column.
    """
    c1, c2 = np.cos(np.asarray(t1, float)), np.cos(np.asarray(t2, float))
    prol = np.stack(
        [(1 + c1) * (1 + c2), (1 - c1) * (1 - c2), (1 - c1) * (1 + c2), (1 + c1) * (1 - c2)],
        axis=-1,
    )
    return prol / 4, prol


# ---------------------------------------------------------------------------
# 4x4 twogrid symbol
# ---------------------------------------------------------------------------


def coarse_correction_symbol(t1, t2, cfg: LfaConfig):
    """``K = I - P L2h^-1 R Lh`` for arrays of low frequencies, shape ``(..., 4, 4)``."""
    T1, T2 = harmonics(t1, t2)
    Lh = np.moveaxis(symbol_Lh(T1, T2, cfg.lam, cfg.h), 0, -1)
    L2h = symbol_L2h(np.asarray(t1, float), np.asarray(t2, float), cfg.lam, cfg.h)
    restr, prol = symbol_transfers(t1, t2)
    corr = prol[..., :, None] * (restr * Lh)[..., None, :] / L2h[..., None, None]
    return np.eye(4) - corr


def twogrid_symbol(t1, t2, cfg: LfaConfig):
    """``S^nu2 K S^nu1`` for arrays of low frequencies, shape ``(..., 4, 4)``."""
    T1, T2 = harmonics(t1, t2)
    S = np.moveaxis(symbol_smoother(T1, T2, cfg.lam, cfg.h, cfg.omega), 0, -1)
    K = coarse_correction_symbol(t1, t2, cfg)
    return (S**cfg.nu2)[..., :, None] * K * (S**cfg.nu1)[..., None, :]


def excluded(t1, t2, cfg: LfaConfig):
    """Frequencies where ``Lh`` on some harmonic or ``L2h`` is (numerically) singular."""
    T1, T2 = harmonics(t1, t2)
    tol = cfg.exclusion_tol
    bad = np.any(np.abs(symbol_Lh(T1, T2, cfg.lam, cfg.h)) < tol, axis=0)
    bad |= np.abs(symbol_L2h(np.asarray(t1, float), np.asarray(t2, float), cfg.lam, cfg.h)) < tol
    if abs(smoother_denominator(cfg.lam, cfg.h)) < tol:
        bad |= True
    return bad


def spectral_radius(T) -> np.ndarray:
    return np.max(np.abs(np.linalg.eigvals(T)), axis=-1)


@dataclass
class RhoSurface:
    theta1: np.ndarray
    theta2: np.ndarray
    rho: np.ndarray  # NaN at excluded frequencies
    n_excluded: int

    @property
    def rho_loc(self) -> float:
        if np.all(np.isnan(self.rho)):
            raise DegenerateConfigurationError("every sampled frequency is excluded")
        return float(np.nanmax(self.rho))

    @property
    def argmax(self) -> tuple[float, float]:
        i = np.nanargmax(self.rho)
        return float(self.theta1.flat[i]), float(self.theta2.flat[i])


def theta_grid(resolution: int, line: bool = False):
    t = np.linspace(-np.pi / 2, np.pi / 2, resolution)
    if line:
        return t, np.zeros_like(t)
    T1, T2 = np.meshgrid(t, t)
    return T1, T2


def rho_surface(cfg: LfaConfig, theta_resolution: int = 129, line: bool = False) -> RhoSurface:
    if theta_resolution < 64:
        raise ConfigurationError("theta resolution must be >= 64 points per axis")
    t1, t2 = theta_grid(theta_resolution, line)
    bad = excluded(t1, t2, cfg)
    rho = np.full(t1.shape, np.nan)
    good = ~bad
    if np.any(good):
        with np.errstate(divide="ignore", invalid="ignore"):
            rho[good] = spectral_radius(twogrid_symbol(t1[good], t2[good], cfg))
    return RhoSurface(t1, t2, rho, int(bad.sum()))


def rho_loc(sigma: float, cfg: LfaConfig, theta_resolution: int = 129, line: bool = False) -> float:
    """Largest twogrid spectral radius over sampled low frequencies."""
    return rho_surface(cfg.with_sigma(sigma), theta_resolution, line).rho_loc


def sigma_c(
    cfg: LfaConfig,
    sigma_resolution: float = 1e-3,
    theta_resolution: int = 129,
    line: bool = False,
) -> float:
    """Smallest exponent in [1, 2] with ``rho_loc < 1``.

    Returns 1.0 if the whole interval converges and ``math.inf`` if even
    ``sigma = 2`` does not.
    """
    if not cfg.kh < 0.75:
        raise ConfigurationError(f"sweeps require kh < 0.75, got {cfg.kh}")

    def f(s):
        return rho_loc(s, cfg, theta_resolution, line)

    if f(2.0) >= 1.0:
        return math.inf
    if f(1.0) < 1.0:
        return 1.0
    lo, hi = 1.0, 2.0
    try:
        while hi - lo > sigma_resolution:
            mid = 0.5 * (lo + hi)
            if f(mid) < 1.0:
                hi = mid
            else:
                lo = mid
    except DegenerateConfigurationError:
        return sigma_c_scan(cfg, theta_resolution=theta_resolution, line=line)
    return hi


def sigma_c_scan(cfg: LfaConfig, points: int = 200, theta_resolution: int = 129, line: bool = False):
    """Smallest convergent exponent on a uniform scan of [1, 2]."""
    for s in np.linspace(1.0, 2.0, points):
        try:
            if rho_loc(s, cfg, theta_resolution, line) < 1.0:
                return float(s)
        except DegenerateConfigurationError:
            continue
    return math.inf


def sigma_c_table(h: float, kh_values, **kwargs) -> list[tuple[float, float]]:
    return [(kh, sigma_c(LfaConfig(k=kh / h, h=h), **kwargs)) for kh in kh_values]
