"""Command-line interface: ``helmshift <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import HelmshiftError

log = logging.getLogger("helmshift")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _point(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return vals[0], vals[1]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_lfa_rho(args) -> int:
    from .lfa import LfaConfig, rho_surface

    cfg = LfaConfig(k=args.k, h=args.h, omega=args.omega, nu1=args.nu, nu2=args.nu, sigma=args.sigma)
    surf = rho_surface(cfg, args.resolution, line=args.line)
    print(f"rho_loc={surf.rho_loc:.12g}")
    t1, t2 = surf.argmax
    print(f"argmax=({t1:.6g},{t2:.6g}) excluded={surf.n_excluded}")
    if args.surface:
        with open(args.surface, "w") as fh:
            fh.write("theta1,theta2,rho\n")
            for a, b, r in zip(surf.theta1.ravel(), surf.theta2.ravel(), surf.rho.ravel()):
                fh.write(f"{a!r},{b!r},{'' if math.isnan(r) else repr(float(r))}\n")
    return 0


def cmd_lfa_sigma_c(args) -> int:
    from .lfa import sigma_c_table

    print("kh,sigma_c")
    for kh, sc in sigma_c_table(args.h, args.kh_list, theta_resolution=args.resolution, line=args.line):
        print(f"{kh!r},{sc!r}")
    return 0


def cmd_sample(args) -> int:
    from .shift_model import generate_dataset, write_samples

    def progress(rec):
        log.info("k=%.4g ell=%d sigma_hat=%.4f rho=%.4g", rec.k, rec.ell, rec.sigma_hat, rec.rho)

    records = generate_dataset(
        args.p, args.ell, args.count, args.seed, progress=progress, max_iter=args.max_iter
    )
    if args.out == "-":
        write_samples(records, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_samples(records, fh)
    return 0


def cmd_fit(args) -> int:
    from .shift_model import FitConfig, fit, read_samples, regression_loss, save_coefficients

    with open(args.inp, newline="") as fh:
        data = read_samples(fh)
    coeffs = fit(data, args.p, FitConfig(learning_rate=args.lr, epochs=args.epochs))
    if args.out == "-":
        print(coeffs.to_json())
    else:
        save_coefficients(coeffs, args.out)
    print(f"loss={regression_loss(coeffs, data, args.p):.12g}", file=sys.stderr)
    return 0


def cmd_map(args) -> int:
    from .shift_model import bundled_coefficients, load_coefficients, sigma_map

    coeffs = load_coefficients(args.coeffs) if args.coeffs else bundled_coefficients(args.p)
    print(f"{sigma_map(args.k, args.ell, coeffs):.12g}")
    return 0


def cmd_solve(args) -> int:
    from .bench import ScenarioConfig, emit_report, run_scenario
    from .shift_model import load_coefficients

    profile, raster = args.profile, None
    if profile.startswith("raster:"):
        profile, raster = "raster", profile.split(":", 1)[1]
    cfg = ScenarioConfig(
        profile=profile,
        raster_path=raster or args.raster,
        p=args.p,
        ell=args.ell,
        k_max=args.kmax,
        source=args.source,
        shifts=tuple(s.strip() for s in args.shifts.split(",") if s.strip()),
        tol=args.tol,
        max_iter=args.max_iter,
        map_mode=args.map_mode,
        coeffs=load_coefficients(args.coeffs) if args.coeffs else None,
        threads=args.threads,
    )
    report = run_scenario(cfg, progress=lambda r: log.info("%s: %d iterations", r.label, r.iterations))
    sys.stdout.write(emit_report(report, "text").decode())
    if args.report:
        fmt = args.format or {".csv": "csv", ".txt": "text"}.get(Path(args.report).suffix, "json")
        Path(args.report).write_bytes(emit_report(report, fmt))
    return 0


def cmd_selftest(args) -> int:
    """Quick oracle comparisons; prints one line per check."""
    from . import oracles
    from .bench import wedge_profile
    from .grid_fem import GridLevel, HelmholtzOperator, ShiftSpec, WavenumberField
    from .krylov import fgmres
    from .lfa import LfaConfig, twogrid_symbol
    from .shift_model import bundled_coefficients, golden_section, sigma_map
    from .twogrid import TwoGrid

    rng = np.random.default_rng(args.seed)
    results = []

    worst = 0.0
    for p in (1, 2, 3):
        for k in (WavenumberField.constant(5.0), wedge_profile(8.0)):
            level = GridLevel(3, p)
            shift = ShiftSpec.k_pow(1.5)
            A = oracles.naive_assemble(level, k, shift)
            op = HelmholtzOperator(level, k, shift)
            u = rng.standard_normal(level.dofs) + 1j * rng.standard_normal(level.dofs)
            ref = A @ u
            worst = max(worst, np.linalg.norm(op(u) - ref) / np.linalg.norm(ref))
    results.append(("matrix-free operator vs element loop", worst, 1e-12))

    worst = 0.0
    for _ in range(20):
        t1, t2 = rng.uniform(-np.pi / 2, np.pi / 2, 2)
        k = rng.uniform(1, 20)
        sigma = rng.uniform(1, 2)
        T = twogrid_symbol(np.array([t1]), np.array([t2]), LfaConfig(k=k, h=2**-5, sigma=sigma))[0]
        worst = max(worst, np.abs(T - oracles.twogrid_symbol_oracle(t1, t2, k, 2**-5, sigma)).max())
    results.append(("twogrid symbol vs stencil sums", worst, 1e-12))

    c = bundled_coefficients(1)
    direct = 2 - math.exp(-c.a1 * math.exp(c.a0 * 10) * (450 - c.kc1 * math.exp(c.kc0 * 10)))
    results.append(("shift map at k=450, l=10", abs(sigma_map(450, 10, c) - direct), 1e-12))

    xmin = golden_section(lambda x: (x - 1.37) ** 2, 1.0, 2.0, 1e-6)
    results.append(("golden section on a parabola", abs(xmin - 1.37), 1e-6))

    level = GridLevel(4, 1)
    k = WavenumberField.constant(6.0)
    A0 = HelmholtzOperator(level, k)
    F = rng.standard_normal(level.dofs).astype(complex)
    x, _ = fgmres(A0, TwoGrid(level, k, ShiftSpec.k_pow(2.0)), F, tol=1e-10)
    xd = np.linalg.solve(A0.assemble().toarray(), F)
    results.append(("FGMRES vs dense solve", np.linalg.norm(x - xd) / np.linalg.norm(xd), 1e-8))

    ok = True
    for name, err, tol in results:
        passed = err <= tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {err:.3e} (tol {tol:.0e})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helmshift", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = ap.add_subparsers(dest="command")

    lfa = sub.add_parser("lfa", help="local Fourier analysis")
    lsub = lfa.add_subparsers(dest="lfa_command")
    r = lsub.add_parser("rho", help="rho_loc for one configuration")
    r.add_argument("--k", type=float, required=True)
    r.add_argument("--h", type=float, required=True)
    r.add_argument("--sigma", type=float, default=2.0)
    r.add_argument("--omega", type=float, default=2 / 3)
    r.add_argument("--nu", type=int, default=3)
    r.add_argument("--line", action="store_true", help="restrict to theta2 = 0")
    r.add_argument("--resolution", type=int, default=129)
    r.add_argument("--surface", help="write the rho surface as CSV")
    r.set_defaults(func=cmd_lfa_rho)
    s = lsub.add_parser("sigma-c", help="critical shift exponent per kh")
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--kh-list", type=_floats, required=True)
    s.add_argument("--resolution", type=int, default=129)
    s.add_argument("--line", action="store_true")
    s.set_defaults(func=cmd_lfa_sigma_c)

    sm = sub.add_parser("sample", help="generate (k, sigma_hat) samples")
    sm.add_argument("--p", type=int, required=True)
    sm.add_argument("--ell", type=_ints, required=True, help="comma-separated levels")
    sm.add_argument("--count", type=int, default=40, help="samples per level")
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--max-iter", type=int, default=50)
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_sample)

    ft = sub.add_parser("fit", help="fit shift map coefficients")
    ft.add_argument("--in", dest="inp", required=True)
    ft.add_argument("--p", type=int, required=True)
    ft.add_argument("--epochs", type=int, default=50_000)
    ft.add_argument("--lr", type=float, default=1e-3)
    ft.add_argument("--out", required=True)
    ft.set_defaults(func=cmd_fit)

    mp = sub.add_parser("map", help="evaluate the shift map")
    mp.add_argument("--k", type=float, required=True)
    mp.add_argument("--ell", type=float, required=True)
    mp.add_argument("--p", type=int, default=1)
    mp.add_argument("--coeffs", help="coefficient JSON file (default: bundled)")
    mp.set_defaults(func=cmd_map)

    sv = sub.add_parser("solve", help="run a benchmark scenario")
    sv.add_argument("--profile", default="wedge", help="wedge, constant or raster:PATH")
    sv.add_argument("--raster")
    sv.add_argument("--p", type=int, default=1)
    sv.add_argument("--ell", type=int, default=8)
    sv.add_argument("--kmax", type=float, required=True)
    sv.add_argument("--shifts", default="none,k,k^1.5,k^2,map")
    sv.add_argument("--source", type=_point, default=(0.5, 0.55))
    sv.add_argument("--report", help="output path; format from --format or the extension")
    sv.add_argument("--format", choices=("json", "csv", "text"))
    sv.add_argument("--map-mode", choices=("kmax", "pointwise"), default="kmax")
    sv.add_argument("--coeffs")
    sv.add_argument("--tol", type=float, default=1e-8)
    sv.add_argument("--max-iter", type=int, default=500)
    sv.add_argument("--threads", type=int, default=1)
    sv.set_defaults(func=cmd_solve)

    st = sub.add_parser("selftest", help="compare fast kernels with reference oracles")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (HelmshiftError, OSError, ValueError) as exc:
        print(f"helmshift: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
