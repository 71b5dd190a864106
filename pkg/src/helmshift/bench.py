"""Heterogeneous-wavenumber benchmark scenarios and report serialization."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigurationError, ParseError
from .grid_fem import (
    GridLevel,
    HelmholtzOperator,
    Raster,
    ShiftSpec,
    WavenumberField,
    WedgeLayers,
    assemble_rhs,
    source_gaussian,
)
from .krylov import fgmres
from .twogrid import TwoGrid

log = logging.getLogger(__name__)

SHIFT_LABELS = ("none", "k", "k^1.5", "k^2", "map")


# ---------------------------------------------------------------------------
# velocity profiles
# ---------------------------------------------------------------------------


def wedge_profile(k_max: float = 1.0) -> WavenumberField:
    """Three-layer profile: mu = 0.55 below ``y = 0.35 + 0.1 x``, 1.0 above ``y = 0.65``."""
    return WavenumberField("wedge", float(k_max), WedgeLayers())


def _normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.ones_like(values)
    return (values - lo) / (hi - lo)


def parse_raster(text: str) -> np.ndarray:
    """Parse a VPROF or CSV raster into an array of shape ``(ny, nx)``."""
    lines = text.splitlines()
    first = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if first is None:
        raise ParseError("empty raster file", line=1)
    head = lines[first].split()
    if head[0] == "VPROF":
        if len(head) != 3:
            raise ParseError("header must read 'VPROF <nx> <ny>'", line=first + 1)
        try:
            nx, ny = int(head[1]), int(head[2])
        except ValueError:
            raise ParseError("raster dimensions must be integers", line=first + 1) from None
        if nx < 1 or ny < 1:
            raise ParseError("raster dimensions must be positive", line=first + 1)
        vals: list[float] = []
        for lineno, ln in enumerate(lines[first + 1 :], start=first + 2):
            for tok in ln.split():
                try:
                    v = float(tok)
                except ValueError:
                    raise ParseError(f"not a number: {tok!r}", line=lineno) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {tok!r}", line=lineno)
                vals.append(v)
        if len(vals) != nx * ny:
            raise ParseError(f"expected {nx * ny} values, found {len(vals)}", line=len(lines))
        return np.array(vals).reshape(ny, nx)
    rows = []
    for lineno, ln in enumerate(lines, start=1):
        if not ln.strip():
            continue
        row = []
        for tok in ln.split(","):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"not a number: {tok.strip()!r}", line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {tok.strip()!r}", line=lineno)
            row.append(v)
        if rows and len(row) != len(rows[0]):
            raise ParseError(f"expected {len(rows[0])} columns, got {len(row)}", line=lineno)
        rows.append(row)
    return np.array(rows)


def load_velocity_raster(path, k_max: float = 1.0, extent: float = 1.0) -> WavenumberField:
    """Raster-backed wavenumber field with min-max normalized, bilinearly interpolated mu.

    A constant raster maps to mu = 1.
    """
    values = parse_raster(Path(path).read_text())
    return WavenumberField("raster", float(k_max), Raster(_normalize(values), extent))


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    profile: str = "wedge"
    p: int = 1
    ell: int = 8
    k_max: float = 150.0
    source: tuple[float, float] = (0.5, 0.55)
    shifts: tuple[str, ...] = SHIFT_LABELS
    tol: float = 1e-8
    max_iter: int = 500
    raster_path: str | None = None
    map_mode: str = "kmax"
    coeffs: object = None
    threads: int = 1

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError("thread count must be >= 1")
        if self.profile not in ("wedge", "constant", "raster"):
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        if self.profile == "raster" and not self.raster_path:
            raise ConfigurationError("raster profile needs a file path")
        if not all(0 < c < 1 for c in self.source):
            raise ConfigurationError(f"source {self.source} must lie inside (0, 1)^2")
        if not self.shifts:
            raise ConfigurationError("shift list is empty")
        for s in self.shifts:
            if s not in SHIFT_LABELS:
                raise ConfigurationError(f"unknown shift {s!r}; choose from {SHIFT_LABELS}")

    def field(self) -> WavenumberField:
        if self.profile == "wedge":
            return wedge_profile(self.k_max)
        if self.profile == "constant":
            return WavenumberField.constant(self.k_max)
        return load_velocity_raster(self.raster_path, self.k_max)

    def shift_spec(self, label: str) -> ShiftSpec:
        if label == "none":
            return ShiftSpec.none()
        if label == "map":
            return ShiftSpec.map(self.p, self.coeffs, self.map_mode)
        return ShiftSpec.k_pow({"k": 1.0, "k^1.5": 1.5, "k^2": 2.0}[label])


@dataclass
class ShiftRun:
    label: str
    iterations: int
    converged: bool
    wall_time: float
    relative_residual: float
    speedup: float | None = None
    sigma: float | None = None


@dataclass
class SolveReport:
    runs: list[ShiftRun]
    meta: dict = field(default_factory=dict)

    def run(self, label: str) -> ShiftRun:
        for r in self.runs:
            if r.label == label:
                return r
        raise KeyError(label)


def run_scenario(config: ScenarioConfig, progress: Callable[[ShiftRun], None] | None = None) -> SolveReport:
    """Solve the unshifted problem once per shift in ``config.shifts``.

    BLAS thread pools are capped at ``config.threads`` for the duration.
    """
    with threadpool_limits(limits=config.threads):
        return _run(config, progress)


def _run(config: ScenarioConfig, progress) -> SolveReport:
    level = GridLevel(config.ell, config.p)
    k = config.field()
    A0 = HelmholtzOperator(level, k)
    F = assemble_rhs(level, source_gaussian(config.source))
    runs = []
    for label in config.shifts:
        shift = config.shift_spec(label)
        resolved = shift.resolved(k.k_max, level.h)
        P = TwoGrid(level, k, shift)
        _, rep = fgmres(A0, P, F, config.tol, config.max_iter)
        run = ShiftRun(
            label=label,
            iterations=rep.iterations,
            converged=rep.converged,
            wall_time=rep.wall_time,
            relative_residual=rep.relative_residual,
            sigma=resolved.sigma,
        )
        log.info("shift %s: %d iterations, converged=%s", label, run.iterations, run.converged)
        runs.append(run)
        if progress:
            progress(run)
    base = next((r for r in runs if r.label == "none"), None)
    if base is not None and base.converged:
        for r in runs:
            if r.converged and r is not base:
                r.speedup = 100.0 * (base.wall_time / r.wall_time - 1.0)
    meta = {
        "profile": config.profile,
        "p": config.p,
        "ell": config.ell,
        "h": level.h,
        "k_max": config.k_max,
        "kh": config.k_max * level.h,
        "dofs": level.dofs,
        "threads": config.threads,
        "tol": config.tol,
        "max_iter": config.max_iter,
        "map_mode": config.map_mode,
        "source": list(config.source),
    }
    return SolveReport(runs, meta)


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

_EPS_NAMES = {"none": "0", "k": "k", "k^1.5": "k^(3/2)", "k^2": "k^2", "map": "k^sigma"}


def _fmt_time(seconds: float) -> str:
    m, s = divmod(seconds, 60.0)
    return f"{int(m)}:{s:05.2f}"


def emit_report(report: SolveReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        doc = {"meta": report.meta, "runs": [asdict(r) for r in report.runs]}
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        cols = ["label", "iterations", "converged", "wall_time", "relative_residual", "speedup", "sigma"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in report.runs:
            d = asdict(r)
            w.writerow(["" if d[c] is None else d[c] for c in cols])
        return buf.getvalue().encode()
    if fmt == "text":
        max_iter = report.meta.get("max_iter", 500)
        lines = [f"{'eps':<9}| {'Iter':>5} | {'Time [m:s]':>10} | {'Speed-up':>9}", "-" * 42]
        for r in report.runs:
            name = _EPS_NAMES.get(r.label, r.label)
            if r.converged:
                it, tm = str(r.iterations), _fmt_time(r.wall_time)
            else:
                it, tm = f">{max_iter}", "--"
            if r.speedup is not None:
                sp = f"{r.speedup:.2f}%"
            else:
                sp = "--" if (r.label != "none" and not r.converged) else ""
            lines.append(f"{name:<9}| {it:>5} | {tm:>10} | {sp:>9}")
        meta = report.meta
        head = (
            f"p={meta.get('p')}  h=2^-{meta.get('ell')}  k_max={meta.get('k_max')}  "
            f"k_max*h={meta.get('kh', float('nan')):.6g}  DoFs={meta.get('dofs')}"
        )
        return ("\n".join([head, *lines]) + "\n").encode()
    raise ConfigurationError(f"unknown report format {fmt!r}")


def parse_report_json(data: bytes | str) -> SolveReport:
    doc = json.loads(data)
    return SolveReport([ShiftRun(**r) for r in doc["runs"]], doc["meta"])
