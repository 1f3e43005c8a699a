"""Command-line front end: ``midpole <subcommand> ...``.

Exit status 0 on success, 2 on invalid input and 3 on numerical failure.
Failures print ``{"code", "message", "context"}`` as JSON on standard error.
The default residual tolerance can be overridden with MIDPOLE_RESIDUAL_TOL.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .branch_analysis import BranchPoint, continue_branch
from .dde_sim import (
    REFERENCE_PLATELET_MODEL,
    HistoryFunction,
    LinearTwoDelaySystem,
    PlateletModel,
    closed_loop_linearization,
    design_platelet_feedback,
    equilibrium,
    hill_g_prime,
    linearize_platelet,
    simulate_linear,
    simulate_platelet,
)
from .errors import InvalidSystemError, NumericalError
from .gain_opt import (
    GainBudget,
    conjecture_scan,
    optimize_no_delay,
    optimize_one_delay,
    optimize_two_delay_mid,
)
from .mid_design import (
    TwoDelayDesign,
    design_one_delay,
    design_two_delay,
    maximal_multiplicity_coefficients,
    verify_multiplicity,
)
from .quasipoly import Quasipolynomial, from_feedback
from .rootfinding import Rectangle, Tolerances, abscissa_upper_bound, count_roots, find_roots, spectrum_to_csv

# verify: the dominance window starts this far to the right of s0
DOMINANCE_MARGIN = 1e-6
DOMINANCE_HALF_HEIGHT = 200.0


def _load_json(source: str) -> dict:
    """Inline JSON, a path to a JSON file, or '-' for standard input."""
    if source == "-":
        text = sys.stdin.read()
    elif source.lstrip().startswith("{"):
        text = source
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise InvalidSystemError(f"cannot read input {source!r}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSystemError(f"input is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidSystemError("input JSON must be an object")
    return data


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _tolerances(args) -> Tolerances:
    tol = Tolerances.from_env()
    if getattr(args, "residual_tol", None) is not None:
        tol = replace(tol, residual_tolerance=args.residual_tol)
    return tol


def _window(args) -> Rectangle | None:
    if args.window is None:
        return None
    return Rectangle(*args.window)


_FAMILY_KEYS = {"no_delay": ([], []), "one_delay": (["a"], ["tau"]), "two_delay_mid": (["a1", "a2"], ["tau1", "tau2"])}


def _quasipolynomial_from(data: dict) -> Quasipolynomial:
    """Accepts the wire format, a two-delay system or design, an ``optimize`` result,
    or a ``design --delays`` result (which carries its quasipolynomial)."""
    if "terms" in data:
        return Quasipolynomial.from_dict(data)
    if isinstance(data.get("quasipolynomial"), dict):
        return Quasipolynomial.from_dict(data["quasipolynomial"])
    if {"a0", "a1", "a2", "tau1", "tau2"} <= data.keys():
        return LinearTwoDelaySystem(*(float(data[k]) for k in ("a0", "a1", "a2", "tau1", "tau2"))).quasipolynomial()
    if data.get("family") in _FAMILY_KEYS and isinstance(data.get("parameters"), dict):
        p = data["parameters"]
        gain_keys, delay_keys = _FAMILY_KEYS[data["family"]]
        try:
            if data["family"] == "no_delay":
                return from_feedback(-float(p["a"]), [], [])
            return from_feedback(0.0, [float(p[k]) for k in gain_keys], [float(p[k]) for k in delay_keys])
        except KeyError as exc:
            raise InvalidSystemError(f"missing parameter {exc}") from exc
    raise InvalidSystemError("expected a quasipolynomial {'terms': [...]}, a two-delay system or an optimize result")


def _spectrum(args) -> int:
    if args.platelet:
        if args.input is not None:
            raise InvalidSystemError("give either an input or --platelet, not both")
        model = _platelet_model(args)
        fb = design_platelet_feedback(model, args.y_star)
        if args.platelet == "open":
            sys_ = linearize_platelet(model, args.y_star, 0.0, 0.0)
        else:
            sys_ = closed_loop_linearization(model, fb)
        qp = sys_.quasipolynomial()
    elif args.input is None:
        raise InvalidSystemError("spectrum needs an input or --platelet")
    else:
        qp = _quasipolynomial_from(_load_json(args.input))
    result = find_roots(qp, _window(args), _tolerances(args))
    if args.format == "csv":
        _emit(spectrum_to_csv(result), args.output)
    else:
        _emit(
            _json(
                {
                    "roots": [
                        {"re": r.value.real, "im": r.value.imag, "multiplicity": r.multiplicity, "residual": r.residual}
                        for r in result.roots
                    ],
                    "total_count": result.total_count,
                    "region": asdict(result.region),
                }
            ),
            args.output,
        )
    return 0


def _platelet_model(args) -> PlateletModel:
    tau1 = args.tau1 if args.tau1 is not None else REFERENCE_PLATELET_MODEL.tau1
    return PlateletModel(n=args.n, theta=args.theta, gamma=args.gamma, g0=args.g0, tau1=tau1, T=args.T)


def _design(args) -> int:
    if args.one_delay:
        if args.tau1 is None:
            raise InvalidSystemError("--one-delay needs --tau1")
        out = asdict(design_one_delay(args.a0, args.tau1))
    elif args.delays:
        a0, gains = maximal_multiplicity_coefficients(args.delays, args.s0)
        qp = from_feedback(a0, list(gains), list(args.delays))
        out = {
            "s0": args.s0,
            "multiplicity": len(args.delays) + 1,
            "a0": a0,
            "gains": [float(g) for g in gains],
            "delays": list(args.delays),
            "quasipolynomial": qp.to_dict(),
        }
    elif args.two_delay:
        if args.tau1 is None or args.tau2 is None:
            raise InvalidSystemError("--two-delay needs --tau1 and --tau2")
        out = design_two_delay(args.a0, args.tau1, args.tau2).to_dict()
    else:
        model = _platelet_model(args)
        fb = design_platelet_feedback(model, args.y_star)
        out = {
            "model": asdict(model),
            "y_star": args.y_star,
            "y_eq": equilibrium(model),
            "g_prime": hill_g_prime(model, args.y_star),
            "s0": fb.s0,
            "alpha1": fb.alpha1,
            "alpha2": fb.alpha2,
            "u0": fb.u0,
            "closed_loop": asdict(closed_loop_linearization(model, fb)),
            "open_loop": asdict(linearize_platelet(model, args.y_star, 0.0, 0.0)),
        }
    _emit(_json(out), args.output)
    return 0


def _simulate(args) -> int:
    if args.platelet == "linear":
        # linearized closed loop, integrated as y - y* and reported as y
        model = _platelet_model(args)
        fb = design_platelet_feedback(model, args.y_star)
        history = HistoryFunction.constant(args.history - args.y_star, model.tau2)
        traj = simulate_linear(closed_loop_linearization(model, fb), history, args.t_end, args.dt)
        traj = replace(traj, values=traj.values + args.y_star)
    elif args.platelet:
        model = _platelet_model(args)
        fb = design_platelet_feedback(model, args.y_star)
        history = HistoryFunction.constant(args.history, model.tau2)
        traj = simulate_platelet(
            model, fb, history, args.t_end, args.dt, y_star=args.y_star if args.deviation else None
        )
    else:
        if args.input is None:
            raise InvalidSystemError("linear simulation needs --input with a0, a1, a2, tau1, tau2")
        data = _load_json(args.input)
        try:
            sys_ = LinearTwoDelaySystem(*(float(data[k]) for k in ("a0", "a1", "a2", "tau1", "tau2")))
        except KeyError as exc:
            raise InvalidSystemError(f"missing field {exc}") from exc
        traj = simulate_linear(sys_, HistoryFunction.constant(args.history, sys_.tau2), args.t_end, args.dt)
    for note in traj.notes:
        print(json.dumps({"warning": note}), file=sys.stderr)
    if args.format == "csv":
        _emit(traj.to_csv(), args.output)
    else:
        _emit(_json({"dt": traj.dt, "t": traj.times.tolist(), "y": traj.values.tolist()}), args.output)
    return 0


def _optimize(args) -> int:
    budget = GainBudget(args.bound)

    def progress(event: dict) -> None:
        sys.stdout.write(json.dumps({"progress": event}, sort_keys=True) + "\n")

    callback = progress if args.progress else None
    if args.family == "no-delay":
        result = optimize_no_delay(budget)
    elif args.family == "one-delay":
        result = optimize_one_delay(budget)
    else:
        result = optimize_two_delay_mid(budget, progress=callback)
    if args.progress:
        sys.stdout.write(json.dumps({"result": result.to_dict()}, sort_keys=True) + "\n")
        if args.output:
            Path(args.output).write_text(_json(result.to_dict()))
    else:
        _emit(_json(result.to_dict()), args.output)
    return 0


def _verify(args) -> int:
    data = _load_json(args.input)
    if {"s0", "a0", "a1", "a2", "tau1", "tau2"} <= data.keys():
        design = TwoDelayDesign.from_dict(data)
        qp, s0, m = design.quasipolynomial(), design.s0, 3
    else:
        if args.s0 is None or args.multiplicity is None:
            raise InvalidSystemError("verify on a bare quasipolynomial needs --s0 and --multiplicity")
        qp, s0, m = _quasipolynomial_from(data), args.s0, args.multiplicity
    if args.s0 is not None:
        s0 = args.s0
    if args.multiplicity is not None:
        m = args.multiplicity
    report = verify_multiplicity(qp, s0, m, tol=args.tol)
    bound = abscissa_upper_bound(qp)
    re_high = max(s0 + 1.0, (bound if bound is not None else s0) + 1.0)
    window = Rectangle(s0 + DOMINANCE_MARGIN, re_high, -DOMINANCE_HALF_HEIGHT, DOMINANCE_HALF_HEIGHT)
    right_count = count_roots(qp, window, _tolerances(args))
    out = report.to_dict()
    out["dominance_window"] = asdict(window)
    out["roots_right_of_s0"] = right_count
    out["multiplicity_passed"] = report.passed
    out["dominant"] = right_count == 0
    out["passed"] = bool(report.passed and right_count == 0)
    _emit(_json(out), args.output)
    return 0


def _branch(args) -> int:
    path = continue_branch(BranchPoint(args.lam_start, complex(args.s_re, args.s_im), math.nan), args.lam_end, args.steps)
    lines = ["lam,re,im,residual"]
    lines += [",".join(repr(float(v)) for v in (p.lam, p.s.real, p.s.imag, p.residual)) for p in path]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def _probe(args) -> int:
    result = conjecture_scan(args.tau1, args.tau2, args.halfwidth, args.points)
    out = result.to_dict()
    out["note"] = "evidence only: no grid result proves or refutes optimality of the MID gains"
    _emit(_json(out), args.output)
    if result.details["counterexample_found"]:
        print(json.dumps({"warning": "grid point beats the MID abscissa", "points": result.details["beating_points"]}), file=sys.stderr)
    return 0


def _add_platelet_args(p: argparse.ArgumentParser) -> None:
    m = REFERENCE_PLATELET_MODEL
    p.add_argument("--n", type=float, default=m.n)
    p.add_argument("--theta", type=float, default=m.theta)
    p.add_argument("--gamma", type=float, default=m.gamma)
    p.add_argument("--g0", type=float, default=m.g0)
    p.add_argument("--T", type=float, default=m.T, help="lifespan; the second delay is tau1 + T")
    p.add_argument("--y-star", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="midpole", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="reserved; every algorithm is deterministic")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=None):
        p.add_argument("-o", "--output", help="write here instead of standard output")
        if formats:
            p.add_argument("--format", choices=formats, default=formats[0])

    p = sub.add_parser("spectrum", help="roots of a quasipolynomial in a window")
    p.add_argument("input", nargs="?", help="JSON (inline, path or '-')")
    p.add_argument("--window", type=float, nargs=4, metavar=("RE_LO", "RE_HI", "IM_LO", "IM_HI"))
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--platelet", choices=["open", "closed"], help="linearized platelet model instead of an input")
    p.add_argument("--tau1", type=float, default=REFERENCE_PLATELET_MODEL.tau1)
    _add_platelet_args(p)
    common(p, ["csv", "json"])
    p.set_defaults(func=_spectrum)

    p = sub.add_parser("design", help="MID gains for one or two delays, or the platelet feedback")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--one-delay", action="store_true")
    kind.add_argument("--two-delay", action="store_true")
    kind.add_argument("--platelet", action="store_true")
    kind.add_argument("--delays", type=float, nargs="+", help="any number of delays: a0 and gains for multiplicity N+1")
    p.add_argument("--s0", type=float, default=0.0, help="target root for --delays")
    p.add_argument("--a0", type=float, default=0.0)
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    _add_platelet_args(p)
    common(p)
    p.set_defaults(func=_design)

    p = sub.add_parser("simulate", help="integrate the linear two-delay system or the platelet model")
    p.add_argument(
        "--platelet",
        nargs="?",
        const="nonlinear",
        choices=["nonlinear", "linear"],
        help="closed-loop platelet model, or its linearization with 'linear'",
    )
    p.add_argument("--input", help="linear system JSON with a0, a1, a2, tau1, tau2")
    p.add_argument("--history", type=float, required=True, help="constant initial history")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--tau1", type=float, default=REFERENCE_PLATELET_MODEL.tau1)
    p.add_argument("--deviation", action="store_true", help="integrate y - y* for full relative accuracy")
    _add_platelet_args(p)
    common(p, ["csv", "json"])
    p.set_defaults(func=_simulate)

    p = sub.add_parser("optimize", help="minimal spectral abscissa under an l1 gain budget")
    p.add_argument("--family", choices=["no-delay", "one-delay", "two-delay-mid"], required=True)
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--progress", action="store_true", help="stream line-delimited JSON progress")
    common(p)
    p.set_defaults(func=_optimize)

    p = sub.add_parser("verify", help="multiplicity and dominance check of a design")
    p.add_argument("input")
    p.add_argument("--s0", type=float)
    p.add_argument("--multiplicity", type=int)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--residual-tol", type=float)
    common(p)
    p.set_defaults(func=_verify)

    p = sub.add_parser("branch", help="continue a root branch of the normalized family in lambda")
    p.add_argument("--lam-start", type=float, required=True)
    p.add_argument("--lam-end", type=float, required=True)
    p.add_argument("--s-re", type=float, required=True)
    p.add_argument("--s-im", type=float, required=True)
    p.add_argument("--steps", type=int)
    common(p)
    p.set_defaults(func=_branch)

    p = sub.add_parser("probe-conjecture", help="grid scan of free gains around the MID gains")
    p.add_argument("--tau1", type=float, default=1.0)
    p.add_argument("--tau2", type=float, default=2.0)
    p.add_argument("--halfwidth", type=float, default=0.5)
    p.add_argument("--points", type=int, default=21)
    common(p)
    p.set_defaults(func=_probe)
    return parser


def _fail(code: str, message: str, context: dict, status: int) -> int:
    print(json.dumps({"code": code, "message": message, "context": context}, default=str), file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidSystemError as exc:
        return _fail("invalid-input", str(exc), {"command": args.command}, 2)
    except NumericalError as exc:
        return _fail(exc.code, str(exc), exc.context, 3)


if __name__ == "__main__":
    sys.exit(main())
