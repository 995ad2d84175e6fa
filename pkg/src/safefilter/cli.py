"""Command-line front end.

Subcommands: ``simulate`` (one closed-loop run, writes CSV + summary + SVG),
``fit-iqc`` (fit a first-order certificate filter to a perturbation family),
``check-iqc`` (numerically verify a certificate on sampled signals), and
``sweep`` (repeat a scenario over one parameter, aggregate CSV).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 certificate check failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    bundled_config_names,
    bundled_config_path,
    load_config,
    parse_config_text,
)
from .lti import FrequencyGrid, StateSpace, first_order_coeffs, freq_response
from .qcqp import NumericalFailureError
from .sim import SimulationAborted, run_closed_loop, write_trajectory_csv
from .svgplot import render_trajectory_svg
from .uncertainty import (
    FitError,
    IqcSpec,
    PerturbationFamily,
    build_iqc,
    check_iqc_numeric,
    delayed_signal,
    family_envelope,
    fit_first_order_bound,
    piecewise_constant_signal,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK_FAILED = 4

# Relative slack allowed on the weighted running integral before a
# certificate check is declared failed; scaled by dt * sum(u^2).
CHECK_TOL = 1e-6


def _resolve_config(path_str: str) -> Path:
    """A real path wins; otherwise bundled config names resolve to the
    packaged copies so `--config nominal.cfg` works out of the box."""
    path = Path(path_str)
    if path.is_file():
        return path
    if path_str in bundled_config_names():
        return Path(str(bundled_config_path(path_str)))
    raise ConfigError(f"config file not found: {path_str}")


def _load(args) -> tuple:
    overrides = list(args.set or [])
    if getattr(args, "dt", None) is not None:
        overrides.append(f"numerics.dt={args.dt}")
    path = _resolve_config(args.config)
    return load_config(path, overrides=overrides), path


def cmd_simulate(args) -> int:
    cfg, _ = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / cfg.out_csv
    try:
        log, summary = run_closed_loop(cfg)
    except SimulationAborted as exc:
        write_trajectory_csv(exc.log, csv_path)
        print(f"simulation aborted: {exc}", file=sys.stderr)
        print(f"partial trajectory retained in {csv_path}", file=sys.stderr)
        return EXIT_NUMERIC
    write_trajectory_csv(log, csv_path)
    summary_text = summary.as_text()
    (out_dir / cfg.out_summary).write_text(summary_text, encoding="utf-8")
    svg = render_trajectory_svg(
        log.px, log.py, log.rx, log.ry, cfg.obstacle_center, cfg.obstacle_radius
    )
    (out_dir / cfg.out_svg).write_text(svg, encoding="utf-8")
    sys.stdout.write(summary_text)
    return EXIT_OK


def _build_family(args) -> PerturbationFamily:
    try:
        if args.kind == "delay":
            return PerturbationFamily.delay_range(
                args.param_hi, args.param_lo, args.samples
            )
        return PerturbationFamily.actuator_pole_range(
            args.param_lo if args.param_lo is not None else 0.0,
            args.param_hi,
            args.samples,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid family: {exc}") from exc


def cmd_fit_iqc(args) -> int:
    family = _build_family(args)
    grid = FrequencyGrid.log_spaced(args.grid_lo, args.grid_hi, args.grid_points)
    env = family_envelope(family, args.alpha, grid)
    fitted = fit_first_order_bound(env, grid, args.margin)
    iqc = build_iqc(fitted, args.alpha, 1.0)
    a0, b0, b1 = first_order_coeffs(fitted)
    f = iqc.filter
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = [
        f"kind = {family.kind}",
        f"param_lo = {family.param_lo!r}",
        f"param_hi = {family.param_hi!r}",
        f"samples = {family.n_samples}",
        f"alpha = {float(args.alpha)!r}",
        f"margin = {float(args.margin)!r}",
        f"a0 = {a0!r}",
        f"b0 = {b0!r}",
        f"b1 = {b1!r}",
        f"A = {float(f.a[0, 0])!r}",
        f"B = {float(f.b[0, 0])!r}",
        f"C = {float(f.c[0, 0])!r}",
        f"D = {float(f.d[0, 0])!r}",
    ]
    filter_path = out_dir / "iqc_filter.txt"
    filter_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    bound_mag = np.abs(freq_response(fitted, grid.omegas))
    csv_lines = ["omega,envelope,bound_magnitude"]
    for w, e, m in zip(grid.omegas, env, bound_mag):
        csv_lines.append(f"{float(w)!r},{float(e)!r},{float(m)!r}")
    (out_dir / "iqc_bound.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    dc = b0 / a0
    print(f"fitted bound: ({b1!r} s + {b0!r}) / (s + {a0!r}), dc gain {dc!r}")
    print(f"wrote {filter_path} and {out_dir / 'iqc_bound.csv'}")
    return EXIT_OK


def _read_filter_file(path: Path) -> dict[str, float]:
    values: dict[str, float] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in ("kind",):
            continue
        try:
            values[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {key} is not a number") from exc
    return values


def _read_signal_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty signal file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["u", "w"]:
        raise ConfigError(f"{path}: expected header 'u,w', got {lines[0]!r}")
    us, ws = [], []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 2:
            raise ConfigError(f"{path}:{lineno}: expected two columns")
        try:
            us.append(float(parts[0]))
            ws.append(float(parts[1]))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad number") from exc
    if not us:
        raise ConfigError(f"{path}: no samples")
    return np.asarray(us), np.asarray(ws)


def cmd_check_iqc(args) -> int:
    if args.filter is not None:
        data = _read_filter_file(Path(args.filter))
        missing = [k for k in ("A", "B", "C", "D") if k not in data]
        if missing:
            raise ConfigError(f"{args.filter}: missing keys {missing}")
        coeffs = (data["A"], data["B"], data["C"], data["D"])
        alpha = args.alpha if args.alpha is not None else data.get("alpha")
    elif args.coeffs is not None:
        coeffs = tuple(args.coeffs)
        alpha = args.alpha
    else:
        raise ConfigError("check-iqc needs --filter FILE or --coeffs A B C D")
    if alpha is None:
        raise ConfigError("decay rate missing: pass --alpha or a filter file with one")
    try:
        iqc = IqcSpec(filter=StateSpace.from_scalars(*coeffs), alpha=float(alpha), lam=1.0)
    except ValueError as exc:
        raise ConfigError(f"invalid filter: {exc}") from exc

    dt = args.dt if args.dt is not None else 1e-3
    results: list[tuple[float, float]] = []  # (value, tolerance)
    if args.signals is not None:
        u, w = _read_signal_csv(Path(args.signals))
        val = check_iqc_numeric(iqc, u, w, dt)
        tol = CHECK_TOL * dt * float(u @ u)
        results.append((val, tol))
        print(f"signals={args.signals} dt={dt!r}")
    else:
        if args.tau is None:
            raise ConfigError("check-iqc needs --tau (or --signals FILE)")
        if args.tau < 0.0:
            raise ConfigError(f"tau must be >= 0, got {args.tau}")
        rng = np.random.default_rng(args.seed)
        for _ in range(args.count):
            u = piecewise_constant_signal(rng, args.duration, dt)
            w = delayed_signal(u, args.tau, dt) - u
            val = check_iqc_numeric(iqc, u, w, dt)
            tol = CHECK_TOL * dt * float(u @ u)
            results.append((val, tol))
        print(
            f"count={args.count} seed={args.seed} tau={args.tau!r} "
            f"duration={args.duration!r} dt={dt!r}"
        )

    worst_val, worst_tol = min(results, key=lambda r: r[0])
    failed = [r for r in results if r[0] < -r[1]]
    print(f"min_integral={worst_val!r}")
    print(f"tolerance={-worst_tol!r}")
    if failed:
        print(f"result=FAIL ({len(failed)} of {len(results)} signals below tolerance)")
        return EXIT_CHECK_FAILED
    print("result=PASS")
    return EXIT_OK


_SWEEP_FIELDS = {
    "tau": ("uncertainty.tau",),
    "lambda": ("iqc.lambda_x", "iqc.lambda_y"),
    "alpha": ("controller.alpha",),
}


def _parse_values(raw: str) -> list[float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError("sweep needs a non-empty value list")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value in {raw!r}") from exc


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    path = _resolve_config(args.config)
    base_text = path.read_text(encoding="utf-8")
    base_overrides = list(args.set or [])
    if getattr(args, "dt", None) is not None:
        base_overrides.append(f"numerics.dt={args.dt}")
    # Validate the base before looping so a broken config is a config error,
    # not a column of failed rows.
    parse_config_text(base_text, source=str(path), overrides=base_overrides)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["value,min_h,clearance,infeasible_steps,tv_ux,tv_uy,status"]
    for value in values:
        overrides = list(base_overrides)
        # Sweeping tau only makes sense with delay perturbation active.
        if args.param == "tau":
            overrides.append("uncertainty.mode=delay")
        for field in _SWEEP_FIELDS[args.param]:
            overrides.append(f"{field}={value!r}")
        try:
            cfg = parse_config_text(base_text, source=str(path), overrides=overrides)
            _, summary = run_closed_loop(cfg)
        except (ConfigError, SimulationAborted, NumericalFailureError, FitError) as exc:
            label = type(exc).__name__
            rows.append(f"{value!r},nan,nan,nan,nan,nan,{label}")
            print(f"value {value!r}: {label}: {exc}", file=sys.stderr)
            continue
        rows.append(
            f"{value!r},{summary.min_h!r},{summary.min_clearance!r},"
            f"{summary.infeasible_steps},{summary.tv_ux!r},{summary.tv_uy!r},ok"
        )
    sweep_path = out_dir / "sweep.csv"
    sweep_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {sweep_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safefilter",
        description="Safety-filtered double-integrator runs and certificate tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario, write CSV/summary/SVG")
    sim.add_argument("--config", required=True, help="scenario file (or bundled name)")
    sim.add_argument("--out", default=".", help="output directory")
    sim.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config field (repeatable)")
    sim.add_argument("--dt", type=float, help="shorthand for numerics.dt")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit-iqc", help="fit a first-order certificate filter")
    fit.add_argument("--kind", choices=("delay", "actuator"), default="delay")
    fit.add_argument("--param-hi", type=float, required=True,
                     help="largest delay (s) or pole (rad/s) in the family")
    fit.add_argument("--param-lo", type=float, default=None,
                     help="smallest member (delay default: 1%% of --param-hi)")
    fit.add_argument("--samples", type=int, default=20)
    fit.add_argument("--alpha", type=float, default=5.0, help="decay rate (1/s)")
    fit.add_argument("--margin", type=float, default=0.02)
    fit.add_argument("--grid-lo", type=float, default=1e-2)
    fit.add_argument("--grid-hi", type=float, default=1e4)
    fit.add_argument("--grid-points", type=int, default=400)
    fit.add_argument("--out", default=".")
    fit.set_defaults(func=cmd_fit_iqc)

    chk = sub.add_parser("check-iqc", help="verify a certificate numerically")
    chk.add_argument("--filter", help="filter file written by fit-iqc")
    chk.add_argument("--coeffs", type=float, nargs=4, metavar=("A", "B", "C", "D"),
                     help="shifted first-order realization, given directly")
    chk.add_argument("--alpha", type=float, help="decay rate (overrides the file)")
    chk.add_argument("--tau", type=float, help="delay applied to the random signals")
    chk.add_argument("--signals", help="CSV with columns u,w to check instead")
    chk.add_argument("--count", type=int, default=100)
    chk.add_argument("--duration", type=float, default=2.0)
    chk.add_argument("--dt", type=float, default=None)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=cmd_check_iqc)

    sw = sub.add_parser("sweep", help="rerun a scenario over one parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", choices=tuple(_SWEEP_FIELDS), required=True)
    sw.add_argument("--values", required=True,
                    help="comma- or space-separated numbers")
    sw.add_argument("--out", default=".")
    sw.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    sw.add_argument("--dt", type=float, help="shorthand for numerics.dt")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalFailureError, SimulationAborted) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
