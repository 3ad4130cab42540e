"""Command-line front end: simulate / verify / construct / sweep.

Every command writes a manifest.json that is sufficient to replay the run,
then its CSV/JSON artifacts.  Exit codes: 0 pass, 1 verification fail,
2 state blow-up, 3 configuration error, 4 dwell/precondition failure.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import parse_comparison, parse_rate
from .construct import (
    DwellParams,
    construct_sfuj,
    construct_ufsj,
    dwell_region,
)
from .errors import (
    ArgumentError,
    BlowUpError,
    ConfigError,
    GridError,
    ImpulsiveIssError,
    OrientationError,
    PreconditionError,
    RateSignError,
    SequenceError,
)
from .lyapunov import (
    check_iss_estimate,
    lyapunov_csv_rows,
    verify_definition2,
    verify_definition3,
    write_lyapunov_csv,
)
from .scenarios import BUILTIN_SCENARIOS, load_scenario, scenario_rotation2d
from .system import export_trajectory_csv, format_float, simulate
from .transform import build_beta_tilde, build_iss_gains, build_transform

EXIT_PASS = 0
EXIT_VERIFY_FAIL = 1
EXIT_BLOWUP = 2
EXIT_CONFIG = 3
EXIT_PRECONDITION = 4


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(args, extra=None) -> dict:
    man = {
        "tool": "impulsive-iss",
        "version": __version__,
        "command": args.command,
        "scenario": getattr(args, "scenario", None),
        "step": getattr(args, "step", None),
        "horizon": getattr(args, "horizon", None),
        "deterministic": True,
        "argv": _sys.argv[1:],
    }
    for key in ("which", "regime", "theta", "delta", "drop_discount"):
        if hasattr(args, key.replace("-", "_")):
            man[key] = getattr(args, key.replace("-", "_"))
    if extra:
        man.update(extra)
    return man


def _load(args):
    name = args.scenario
    if name in BUILTIN_SCENARIOS:
        scenario = BUILTIN_SCENARIOS[name]()
    else:
        scenario = load_scenario(name)
    if getattr(args, "drop_discount", False):
        if scenario.label != "rotation2d":
            raise ConfigError("--drop-discount is a test hook for the rotation2d scenario")
        scenario = scenario_rotation2d(u_level=scenario.input.sup_norm,
                                       horizon=scenario.horizon, step=scenario.step,
                                       x0=scenario.x0, drop_discount=True)
    if args.step is not None:
        scenario.step = float(args.step)
    if args.horizon is not None:
        scenario.horizon = float(args.horizon)
    return scenario


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    scenario = _load(args)
    manifest = _manifest(args, {"label": scenario.label})
    _write_json(out / "manifest.json", manifest)
    try:
        traj = simulate(scenario.system, scenario.x0, scenario.input,
                        scenario.horizon, scenario.step)
    except BlowUpError as exc:
        manifest["blow_up"] = {"last_finite_time": exc.last_finite_time, "message": str(exc)}
        _write_json(out / "manifest.json", manifest)
        print(f"blow-up: {exc}", file=_sys.stderr)
        return EXIT_BLOWUP
    export_trajectory_csv(traj, out / "trajectory.csv", lyapunov=scenario.lyapunov,
                          per_node=scenario.system.grid_meta is not None)
    print(f"wrote {out / 'trajectory.csv'}")
    return EXIT_PASS


def _gains_from_certificates(V):
    T = build_transform(V.phi, name="F_phi")
    return build_iss_gains(V.alpha1, V.alpha2, V.alpha3, V.chi, build_beta_tilde(T))


def cmd_verify(args) -> int:
    out = _out_dir(args)
    scenario = _load(args)
    manifest = _manifest(args, {"label": scenario.label})
    _write_json(out / "manifest.json", manifest)
    try:
        traj = simulate(scenario.system, scenario.x0, scenario.input,
                        scenario.horizon, scenario.step)
    except BlowUpError as exc:
        manifest["blow_up"] = {"last_finite_time": exc.last_finite_time, "message": str(exc)}
        _write_json(out / "manifest.json", manifest)
        return EXIT_BLOWUP

    V = scenario.lyapunov
    if args.which == "def3":
        if V is None:
            raise ConfigError(f"scenario {scenario.label!r} has no Lyapunov function; "
                              "run 'construct' instead")
        report = verify_definition3(V, scenario.system, [traj])
        chi_level = V.chi.eval(scenario.input.sup_norm)
        write_lyapunov_csv(out / "lyapunov.csv", lyapunov_csv_rows(V, traj, chi_level))
    elif args.which == "def2":
        C = scenario.candidate
        if C is None:
            raise ConfigError(f"scenario {scenario.label!r} has no candidate Lyapunov function")
        report = verify_definition2(C, scenario.system, [traj])
        gate = C.eta.eval(scenario.input.sup_norm)
        rows = []
        for seg, j, t, x in traj.sample_iter():
            pre = seg.ends_at_impulse and j == len(seg.times) - 1
            rows.append((t, float(C.V(x)), gate, 1 if pre else 0))
        write_lyapunov_csv(out / "lyapunov.csv", rows)
    elif args.which == "def1":
        if V is None:
            raise ConfigError(f"scenario {scenario.label!r} has no Lyapunov certificates "
                              "to assemble ISS gains from")
        gains = _gains_from_certificates(V)
        report = check_iss_estimate(traj, gains, scenario.x0, scenario.input)
        chi_level = V.chi.eval(scenario.input.sup_norm)
        write_lyapunov_csv(out / "lyapunov.csv", lyapunov_csv_rows(V, traj, chi_level))
    else:
        raise ConfigError(f"unknown --which {args.which!r}")

    _write_json(out / "report.json", report.to_json_dict())
    print(f"{scenario.label} {args.which}: {report.verdict} "
          f"(worst margin {report.worst_margin:.3g})")
    return EXIT_PASS if report.passed else EXIT_VERIFY_FAIL


def cmd_construct(args) -> int:
    out = _out_dir(args)
    scenario = _load(args)
    manifest = _manifest(args, {"label": scenario.label})
    _write_json(out / "manifest.json", manifest)
    C = scenario.candidate
    if C is None:
        raise ConfigError(f"scenario {scenario.label!r} carries no candidate Lyapunov function")
    regime = args.regime or scenario.regime
    if regime not in ("sfuj", "ufsj"):
        raise ConfigError(f"--regime must be sfuj or ufsj, got {regime!r}")
    base = scenario.dwell
    theta = args.theta if args.theta is not None else (base.theta if base else None)
    delta = args.delta if args.delta is not None else (base.delta if base else None)
    if theta is None or delta is None:
        raise ConfigError("need --theta and --delta (or scenario dwell defaults)")
    try:
        params = DwellParams(rho=C.rho, alpha=C.alpha, theta=float(theta), delta=float(delta))
        if regime == "sfuj":
            result = construct_sfuj(C, params, scenario.system.impulses)
        else:
            result = construct_ufsj(C, params, scenario.system.impulses)
    except (PreconditionError, SequenceError, OrientationError, ArgumentError) as exc:
        _write_json(out / "report.json",
                    {"verdict": "precondition_failed", "reason": str(exc),
                     "theta": theta, "delta": delta, "regime": regime})
        print(f"precondition failed: {exc}", file=_sys.stderr)
        return EXIT_PRECONDITION

    _write_json(out / "provenance.json", result.provenance)
    try:
        traj = simulate(scenario.system, scenario.x0, scenario.input,
                        scenario.horizon, scenario.step)
    except BlowUpError as exc:
        manifest["blow_up"] = {"last_finite_time": exc.last_finite_time, "message": str(exc)}
        _write_json(out / "manifest.json", manifest)
        return EXIT_BLOWUP

    V = result.V
    rep3 = verify_definition3(V, scenario.system, [traj])
    gains = _gains_from_certificates(V)
    rep1 = check_iss_estimate(traj, gains, scenario.x0, scenario.input)
    chi_level = V.chi.eval(scenario.input.sup_norm)
    write_lyapunov_csv(out / "lyapunov.csv", lyapunov_csv_rows(V, traj, chi_level))
    verdict = "pass" if rep3.passed and rep1.passed else "fail"
    _write_json(out / "report.json",
                {"verdict": verdict,
                 "definition3": rep3.to_json_dict(),
                 "iss_estimate": rep1.to_json_dict()})
    print(f"{scenario.label} construct[{regime}]: {verdict}")
    return EXIT_PASS if verdict == "pass" else EXIT_VERIFY_FAIL


def _parse_range(spec: str, name: str) -> np.ndarray:
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("count must be >= 1")
        return np.linspace(lo, hi, n)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{name}: expected lo:hi:n or a single value, got {spec!r}") from exc


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    _write_json(out / "manifest.json",
                _manifest(args, {"rho": args.rho, "alpha": args.alpha,
                                 "theta_range": args.theta_range,
                                 "delta_range": args.delta_range}))
    rho = parse_rate(args.rho)
    alpha = parse_comparison(args.alpha)
    thetas = _parse_range(args.theta_range, "--theta-range")
    deltas = _parse_range(args.delta_range, "--delta-range")
    rows = dwell_region(args.regime, rho, alpha, thetas, deltas)
    with open(out / "region.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("theta,delta,pass\n")
        for th, de, ok in rows:
            fh.write(f"{format_float(th)},{format_float(de)},{1 if ok else 0}\n")
    print(f"wrote {out / 'region.csv'} ({len(rows)} rows)")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsive-iss",
        description="Simulate impulsive systems and machine-check ISS-Lyapunov conditions.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True,
                       help=f"builtin name ({', '.join(sorted(BUILTIN_SCENARIOS))}) or JSON path")
        p.add_argument("--step", type=float, default=None, help="trajectory sampling step")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="integrate and export trajectory.csv")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check def1 (ISS estimate), def2 (candidate) or def3")
    common(p)
    p.add_argument("--which", choices=("def1", "def2", "def3"), default="def3")
    p.add_argument("--drop-discount", action="store_true", dest="drop_discount",
                   help="sabotage hook: drop the time discount of the rotation2d function")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("construct", help="dwell check + construction + verification")
    common(p)
    p.add_argument("--regime", choices=("sfuj", "ufsj"), default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("sweep", help="dwell-condition region over a (theta, delta) grid")
    p.add_argument("--regime", choices=("sfuj", "ufsj"), required=True)
    p.add_argument("--rho", required=True, help="rate spec, e.g. linear:1")
    p.add_argument("--alpha", required=True, help="jump gain spec, e.g. linear:2")
    p.add_argument("--theta-range", required=True, help="lo:hi:n or single value")
    p.add_argument("--delta-range", required=True, help="lo:hi:n or single value")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ArgumentError, GridError, RateSignError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=_sys.stderr)
        return EXIT_BLOWUP
    except (PreconditionError, SequenceError, OrientationError) as exc:
        print(f"precondition failed: {exc}", file=_sys.stderr)
        return EXIT_PRECONDITION
    except ImpulsiveIssError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
