"""Near-optimal shift exponents: sampling, the closed-form shift map and its fit.

The map for order ``p`` is

    k_c(l)   = kc1 * exp(kc0 * l)
    alpha(l) = a1  * exp(a0 * l)
    beta     = 2 - exp(-alpha(l) * (k - k_c(l)))
    sigma_p  = min(max(beta, 1), 2)

with ``h = 2**-l``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    BreakdownError,
    ConfigurationError,
    DivergenceError,
    EmptyDatasetError,
    FactorizationError,
    NonFiniteObjectiveError,
    ParseError,
    TrainingDivergedError,
)

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ShiftMapCoefficients:
    kc0: float
    kc1: float
    a0: float
    a1: float
    p: int | None = None
    meta: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError(f"non-finite shift map coefficients {vals}")
        if self.kc1 <= 0 or self.a1 < 0:
            warnings.warn(
                f"shift map coefficients kc1={self.kc1}, a1={self.a1} give a degenerate map",
                stacklevel=2,
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.kc0, self.kc1, self.a0, self.a1], dtype=float)

    @classmethod
    def from_array(cls, x, p=None, meta=None) -> "ShiftMapCoefficients":
        x = [float(v) for v in x]
        return cls(*x, p=p, meta=meta)

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "kc0": self.kc0,
                "kc1": self.kc1,
                "a0": self.a0,
                "a1": self.a1,
                "meta": self.meta or {},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ShiftMapCoefficients":
        d = json.loads(text)
        return cls(d["kc0"], d["kc1"], d["a0"], d["a1"], p=d.get("p"), meta=d.get("meta") or None)


_TABLE = {
    1: (0.4592788619853418, 2.5790032999702346, -0.6261637288068426, 1.7580549857142198),
    2: (0.5736926870738827, 2.5729974893966001, -0.6615199737374460, 1.5966386518185063),
    3: (0.6305770719029798, 2.4284320222555804, -0.4465407372367102, 0.1287828338493968),
}


def bundled_coefficients(p: int) -> ShiftMapCoefficients:
    """Published fit for order ``p`` in {1, 2, 3}."""
    if p not in _TABLE:
        raise ConfigurationError(f"no bundled shift map for order p={p}")
    return ShiftMapCoefficients(*_TABLE[p], p=p, meta={"source": "published"})


def sigma_map(k: float, ell: float, coeffs: ShiftMapCoefficients) -> float:
    kc = coeffs.kc1 * math.exp(coeffs.kc0 * ell)
    alpha = coeffs.a1 * math.exp(coeffs.a0 * ell)
    t = -alpha * (k - kc)
    if t > _EXP_MAX:
        return 1.0  # beta is hugely negative
    beta = 2.0 - math.exp(t)
    return min(max(beta, 1.0), 2.0)


_EXP_MAX = 700.0


def _map_and_grad(x: np.ndarray, k: np.ndarray, ell: np.ndarray):
    """Vectorized map and its gradient w.r.t. ``(kc0, kc1, a0, a1)``.

    The gradient is zero where the clamp is active.
    """
    kc0, kc1, a0, a1 = x
    with np.errstate(over="ignore", invalid="ignore"):
        ekc = np.exp(kc0 * ell)
        ea = np.exp(a0 * ell)
        kc = kc1 * ekc
        alpha = a1 * ea
        ex = np.exp(np.minimum(-alpha * (k - kc), _EXP_MAX))
        beta = 2.0 - ex
        sigma = np.clip(beta, 1.0, 2.0)
        inside = (beta > 1.0) & (beta < 2.0)
        d_alpha = ex * (k - kc)
        d_kc = -ex * alpha
        grad = np.stack([d_kc * ell * kc, d_kc * ekc, d_alpha * ell * alpha, d_alpha * ea])
    return sigma, np.where(inside, grad, 0.0)


# ---------------------------------------------------------------------------
# golden-section search
# ---------------------------------------------------------------------------


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-2) -> float:
    """Minimize a unimodal ``f`` on ``[a, b]``; returns the final bracket midpoint."""
    if not a < b:
        raise ValueError("need a < b")

    def ev(x):
        y = f(x)
        if not math.isfinite(y):
            raise NonFiniteObjectiveError(f"objective is {y} at x={x}", x=x)
        return y

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = ev(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleRecord:
    k: float
    ell: int
    p: int
    sigma_hat: float
    rho: float
    seed: int
    iters: int
    flat: bool = field(default=False, compare=False)
    evaluations: tuple = field(default=(), compare=False, repr=False)


CSV_HEADER = ("k", "ell", "p", "sigma_hat", "rho", "seed", "iters")


def admissible_k(p: int, ell: int) -> tuple[float, float]:
    h = 2.0**-ell
    return 3 * p / (16 * h), 3 * p / (4 * h)


class ShiftObjective:
    """``sigma -> average residual rate`` of a preconditioned FGMRES solve.

    The right-hand side is drawn once from ``seed`` and reused for every
    exponent.  Failed solves score 1.
    """

    def __init__(
        self,
        p: int,
        ell: int,
        k: float,
        seed: int,
        s: float = 1.0,
        tol: float = 1e-8,
        max_iter: int = 50,
        config=None,
    ):
        from .grid_fem import GridLevel, HelmholtzOperator, WavenumberField

        level_index = ell + int(round(math.log2(s)))
        if not math.isclose(2.0 ** (level_index - ell), s):
            raise ConfigurationError(f"domain size {s} must be a power of two")
        self.level = GridLevel(level_index, p, s)
        self.k = WavenumberField.constant(k)
        self.A0 = HelmholtzOperator(self.level, self.k)
        rng = np.random.default_rng(seed)
        self.rhs = rng.uniform(-1.0, 1.0, self.level.dofs).astype(np.complex128)
        self.tol = tol
        self.max_iter = max_iter
        self.config = config
        self.cache: dict[float, tuple[float, int]] = {}
        self.failures: list[tuple[float, str]] = []

    def evaluate(self, sigma: float) -> tuple[float, int]:
        from .grid_fem import ShiftSpec
        from .krylov import average_rate, fgmres
        from .twogrid import TwoGrid

        if sigma in self.cache:
            return self.cache[sigma]
        try:
            P = TwoGrid(self.level, self.k, ShiftSpec.k_pow(sigma), self.config)
            _, rep = fgmres(self.A0, P, self.rhs, self.tol, self.max_iter)
            out = (average_rate(rep), rep.iterations)
        except (BreakdownError, DivergenceError, FactorizationError) as exc:
            log.warning("solve failed at sigma=%.6f: %s", sigma, exc)
            self.failures.append((sigma, str(exc)))
            out = (1.0, self.max_iter)
        self.cache[sigma] = out
        return out

    def __call__(self, sigma: float) -> float:
        return self.evaluate(sigma)[0]


def generate_sample(
    p: int,
    ell: int,
    k: float,
    seed: int,
    max_iter: int = 50,
    tol: float = 1e-8,
    s: float = 1.0,
    sigma_tol: float = 1e-2,
    config=None,
    check_range: bool = True,
) -> SampleRecord:
    """Golden-section search for the exponent minimizing the FGMRES rate."""
    if check_range:
        lo, hi = admissible_k(p, ell)
        if not lo <= k <= hi:
            raise ConfigurationError(f"k={k} outside admissible interval [{lo}, {hi}]")
    obj = ShiftObjective(p, ell, k, seed, s=s, tol=tol, max_iter=max_iter, config=config)
    sigma_hat = golden_section(obj, 1.0, 2.0, sigma_tol)
    rho, iters = obj.evaluate(sigma_hat)
    rates = {round(r, 15) for r, _ in obj.cache.values()}
    flat = all(it == 1 for _, it in obj.cache.values()) or len(rates) == 1
    evals = tuple(sorted((sig, r, it) for sig, (r, it) in obj.cache.items()))
    return SampleRecord(k, ell, p, sigma_hat, rho, seed, iters, flat=flat, evaluations=evals)


def generate_dataset(
    p: int,
    ells: Sequence[int],
    count: int,
    seed: int,
    progress: Callable[[SampleRecord], None] | None = None,
    **kwargs,
) -> list[SampleRecord]:
    """``count`` samples per level with k uniform on the admissible interval."""
    rng = np.random.default_rng(seed)
    out = []
    for ell in ells:
        lo, hi = admissible_k(p, ell)
        ks = rng.uniform(lo, hi, count)
        seeds = rng.integers(0, 2**31 - 1, count)
        for k, sd in zip(ks, seeds):
            rec = generate_sample(p, ell, float(k), int(sd), **kwargs)
            out.append(rec)
            if progress:
                progress(rec)
    return out


def write_samples(records: Iterable[SampleRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([repr(float(r.k)), r.ell, r.p, repr(float(r.sigma_hat)), repr(float(r.rho)), r.seed, r.iters])


def samples_to_csv(records: Iterable[SampleRecord]) -> str:
    buf = io.StringIO()
    write_samples(records, buf)
    return buf.getvalue()


def read_samples(fh) -> list[SampleRecord]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty sample file", line=1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"unexpected header {header}", line=1)
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=lineno)
        try:
            rec = SampleRecord(
                float(row[0]), int(row[1]), int(row[2]), float(row[3]), float(row[4]),
                int(row[5]), int(row[6]),
            )
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if not all(math.isfinite(v) for v in (rec.k, rec.sigma_hat, rec.rho)):
            raise ParseError("non-finite value", line=lineno)
        out.append(rec)
    return out


def samples_from_csv(text: str) -> list[SampleRecord]:
    return read_samples(io.StringIO(text))


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 1e-3
    epochs: int = 50_000
    init: tuple[float, float, float, float] = (0.1, 1.0, -0.5, 1.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")


def _training_arrays(dataset: Sequence[SampleRecord], p: int):
    sub = [r for r in dataset if r.p == p]
    if not sub:
        raise EmptyDatasetError(f"no samples of order p={p}")
    total = len(dataset)
    counts: dict[int, int] = {}
    for r in sub:
        counts[r.ell] = counts.get(r.ell, 0) + 1
    k = np.array([r.k for r in sub], dtype=float)
    ell = np.array([r.ell for r in sub], dtype=float)
    target = np.array([r.sigma_hat for r in sub], dtype=float)
    weight = np.array([(counts[r.ell] / total) ** -2 for r in sub])
    return k, ell, target, weight


def regression_loss(coeffs, dataset: Sequence[SampleRecord], p: int) -> float:
    """Sum of ``w_{l,p}**-2 * (sigma_hat - sigma_p(k, l))**2`` over order-p samples.

    ``w_{l,p}`` is the fraction of the whole dataset with that level and order.
    """
    x = coeffs.as_array() if isinstance(coeffs, ShiftMapCoefficients) else np.asarray(coeffs, float)
    k, ell, target, weight = _training_arrays(dataset, p)
    sigma, _ = _map_and_grad(x, k, ell)
    return float(np.sum(weight * (target - sigma) ** 2))


def fit(
    dataset: Sequence[SampleRecord],
    p: int,
    config: FitConfig | None = None,
    history: list | None = None,
) -> ShiftMapCoefficients:
    """Full-batch Adam on the four map coefficients.

    Returns the lowest-loss iterate seen, so the result never scores worse
    than the initial guess.
    """
    config = config or FitConfig()
    k, ell, target, weight = _training_arrays(dataset, p)
    if len(k) < 8 or len(np.unique(ell)) < 2:
        raise ConfigurationError("fit needs >= 8 samples spanning >= 2 levels")
    x = np.array(config.init, dtype=float)
    m = np.zeros(4)
    v = np.zeros(4)
    b1, b2 = config.beta1, config.beta2
    best_x, best_loss = x.copy(), math.inf
    loss = math.nan
    for epoch in range(1, config.epochs + 1):
        sigma, grad = _map_and_grad(x, k, ell)
        resid = target - sigma
        loss = float(np.sum(weight * resid**2))
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}", epoch=epoch)
        if loss < best_loss:
            best_loss, best_x = loss, x.copy()
        if history is not None:
            history.append(loss)
        g = -2.0 * grad @ (weight * resid)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**epoch)
        vhat = v / (1 - b2**epoch)
        x = x - config.learning_rate * mhat / (np.sqrt(vhat) + config.eps)
    final = regression_loss(x, dataset, p)
    if final < best_loss:
        best_loss, best_x = final, x
    meta = {"epochs": config.epochs, "lr": config.learning_rate, "loss": best_loss}
    return ShiftMapCoefficients.from_array(best_x, p=p, meta=meta)


def save_coefficients(coeffs: ShiftMapCoefficients, path) -> None:
    Path(path).write_text(coeffs.to_json() + "\n")


def load_coefficients(path) -> ShiftMapCoefficients:
    return ShiftMapCoefficients.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# comparison with LFA
# ---------------------------------------------------------------------------


def lfa_comparison(
    h: float,
    sizes: Sequence[float],
    k_values: Sequence[float],
    p: int = 1,
    seed: int = 0,
    max_iter: int = 50,
    sigma_tol: float = 1e-2,
    theta_resolution: int = 129,
) -> list[dict]:
    """Rows of ``{k, kh, source, s, sigma}``: one LFA row plus one sampled row per size."""
    from .lfa import LfaConfig, sigma_c

    ell = -math.log2(h)
    if not math.isclose(ell, round(ell)):
        raise ConfigurationError(f"mesh size {h} is not a power of two")
    ell = int(round(ell))
    rows = []
    for k in k_values:
        sc = sigma_c(LfaConfig(k=k, h=h), theta_resolution=theta_resolution)
        rows.append({"k": k, "kh": k * h, "source": "lfa", "s": math.inf, "sigma": sc})
        for s in sizes:
            rec = generate_sample(
                p, ell, k, seed, max_iter=max_iter, s=s, sigma_tol=sigma_tol, check_range=False
            )
            rows.append({"k": k, "kh": k * h, "source": "sampled", "s": s, "sigma": rec.sigma_hat})
    return rows
