"""Command-line entry point.

Exit codes: 0 when the requested check passes, 1 when it fails, 2 on usage
or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .auction import run_auction
from .bounds import (
    DEFAULT_KAPPA,
    DEFAULT_LAMBDA,
    DEFAULT_MU,
    BoundedFnSpec,
    solve_lambda_root,
    verify_bounded_function,
    verify_constants,
    verify_cor_bounded_function,
    verify_counterexample,
    verify_technical_lemmas,
)
from .equilibria import verify_epsilon_ne, verify_pure_ne, verify_s_ne, weak_feasibility
from .instances import InstanceFormatError, load_distribution, load_instance
from .learning import (
    LearnerConfig,
    cce_epsilon,
    empirical_distribution,
    plays_path,
    pota_estimate,
    read_plays_csv,
    read_trajectory_csv,
    run_no_regret,
    run_no_regret_bayes,
    run_with_irrational,
    write_plays_csv,
    write_trajectory_csv,
)
from .poa_search import inefficiency, worst_case_n2, worst_case_n3, worst_case_numeric

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BOUND_CHOICES = ("all", "bayes", "fullinfo", "technical", "constants", "counterexample")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _fixed(text: str) -> dict[int, float]:
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        try:
            i, b = item.split(":")
            out[int(i)] = float(b)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected player:bid pairs, got {item!r}") from exc
    return out


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


# -- subcommands --------------------------------------------------------------


def cmd_run(args) -> tuple[dict, int]:
    inst = load_instance(args.instance)
    return run_auction(inst, args.bids).to_dict(), EXIT_PASS


def cmd_verify_ne(args) -> tuple[dict, int]:
    inst = load_instance(args.instance)
    if args.eps is not None and args.subset is not None:
        raise UsageError("--eps and --subset cannot be combined")
    if args.eps is not None:
        report = verify_epsilon_ne(inst, args.bids, args.eps, args.tol)
    elif args.subset is not None:
        report = verify_s_ne(inst, args.bids, args.subset, args.tol)
    else:
        report = verify_pure_ne(inst, args.bids, args.tol)
    outcome = run_auction(inst, args.bids)
    result = report.to_dict()
    result["allocation"] = list(outcome.slot_to_player)
    result["inefficiency"] = inefficiency(inst, outcome.slot_to_player)
    return result, EXIT_PASS if report.is_equilibrium else EXIT_FAIL


def cmd_weakfeas(args) -> tuple[dict, int]:
    inst = load_instance(args.instance)
    wf = weak_feasibility(inst, args.perm, args.tol)
    result = {
        "weakly_feasible": wf.holds,
        "violations": [list(v) for v in wf.violations],
        "inefficiency": inefficiency(inst, args.perm),
    }
    return result, EXIT_PASS if wf.holds else EXIT_FAIL


def _search(args) -> dict:
    if args.method == "closed-form":
        if args.n not in (2, 3):
            raise UsageError("closed-form search exists for n = 2 and n = 3 only")
        res = worst_case_n2() if args.n == 2 else worst_case_n3()
    else:
        res = worst_case_numeric(args.n, args.perm, args.budget, args.seed, workers=args.parallel)
    return res.to_dict()


def cmd_poa_search(args) -> tuple[dict, int]:
    result = _search(args)
    return result, EXIT_FAIL if result["theory_violation"] else EXIT_PASS


def _learn_summary(history, out: str | None) -> dict:
    summary = {
        "rounds": history.rounds,
        "players": history.n,
        "average_regret": history.average_regret(normalized=False).tolist(),
        "average_regret_normalized": history.average_regret(normalized=True).tolist(),
        "max_average_regret_normalized": history.max_average_regret(),
        "slack": history.slack(),
        "sum_sw": history.aggregate["sw"],
        "sum_opt": history.aggregate["opt"],
        "pota": pota_estimate(history),
        "type_updates": {f"{i}:{v!r}": c for (i, v), c in history.type_updates.items()},
    }
    if history.fixed:
        summary["fixed"] = {str(i): b for i, b in history.fixed.items()}
        summary["sum_opt_s"] = history.aggregate["opt_s"]
        summary["sw_over_opt_s"] = history.aggregate["sw"] / history.aggregate["opt_s"]
    if out is not None:
        write_trajectory_csv(history, out)
        write_plays_csv(history, plays_path(out))
        summary["trajectory"] = str(out)
        summary["plays"] = str(plays_path(out))
    return summary


def _replica_out(out: str, k: int, replicas: int) -> str:
    if replicas == 1:
        return out
    p = Path(out)
    return str(p.with_name(f"{p.stem}.r{k}{p.suffix}"))


def _learn_one(job) -> dict:
    kind, path, grid, rounds, seed, schedule, eta, fixed, out = job
    config = LearnerConfig(grid, rounds, seed, schedule, eta)
    game = load_instance(path) if kind == "instance" else load_distribution(path)
    if fixed:
        history = run_with_irrational(game, config, fixed)
    elif kind == "instance":
        history = run_no_regret(game, config)
    else:
        history = run_no_regret_bayes(game, config)
    summary = _learn_summary(history, out)
    summary["seed"] = seed
    return summary


def _learn(args, kind: str, path: str) -> tuple[dict, int]:
    # validate eagerly so errors surface before any worker starts
    LearnerConfig(args.grid, args.rounds, args.seed, args.schedule, args.eta)
    jobs = [
        (kind, path, args.grid, args.rounds, args.seed + k, args.schedule, args.eta, args.fixed or {},
         _replica_out(args.out, k, args.parallel))
        for k in range(args.parallel)
    ]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_learn_one, jobs))
        return {"replicas": results}, EXIT_PASS
    return _learn_one(jobs[0]), EXIT_PASS


def cmd_learn(args) -> tuple[dict, int]:
    return _learn(args, "instance", args.instance)


def cmd_learn_bayes(args) -> tuple[dict, int]:
    return _learn(args, "distribution", args.dist)


def cmd_cce_check(args) -> tuple[dict, int]:
    inst = load_instance(args.instance)
    plays = plays_path(args.history)
    if not plays.exists():
        raise FileNotFoundError(f"play log {plays} not found next to {args.history}")
    bids, vals, gams = read_plays_csv(plays)
    if bids.shape[1] != inst.n:
        raise UsageError(f"play log has {bids.shape[1]} players, instance has {inst.n}")
    if (vals != inst.valuations).any() or (gams != inst.gammas).any():
        raise UsageError("play log was not generated on this instance (valuations or gammas differ)")
    dist = empirical_distribution(bids)
    eps = cce_epsilon(inst, dist, args.grid)
    rows = read_trajectory_csv(args.history)
    last = max(r["round"] for r in rows)
    regret = [max(0.0, r["regret"]) / last for r in sorted((r for r in rows if r["round"] == last), key=lambda r: r["player"])]
    return {"rounds": int(bids.shape[0]), "epsilon": eps.tolist(), "average_regret": regret, "profiles": len(dist.weights)}, EXIT_PASS


def _bound_reports(args):
    which = args.which
    if which in ("all", "bayes"):
        yield verify_bounded_function(BoundedFnSpec("bayes", args.lam, args.kappa, args.mu), args.grid)
    if which in ("all", "fullinfo"):
        yield verify_cor_bounded_function(solve_lambda_root() if args.cor_lambda is None else args.cor_lambda, args.grid)
    if which in ("all", "technical"):
        yield verify_technical_lemmas()
    if which in ("all", "constants"):
        yield verify_constants()
    if which in ("all", "counterexample"):
        yield verify_counterexample()


def cmd_verify_bounds(args) -> tuple[dict, int]:
    reports = list(_bound_reports(args))
    ok = all(r.passed for r in reports)
    result = {"passed": ok, "reports": [r.to_dict() for r in reports]}
    if not args.json:
        result["_text"] = "\n\n".join(r.to_text() for r in reports)
    return result, EXIT_PASS if ok else EXIT_FAIL


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="write a run manifest (JSON) to this path")

    parser = argparse.ArgumentParser(prog="gspbench", description="GSP auction verification workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one auction")
    p.add_argument("--instance", required=True)
    p.add_argument("--bids", required=True, type=_floats)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-ne", parents=[common], help="verify a (possibly approximate) pure Nash equilibrium")
    p.add_argument("--instance", required=True)
    p.add_argument("--bids", required=True, type=_floats)
    p.add_argument("--eps", type=float, help="multiplicative approximation factor")
    p.add_argument("--subset", type=_ints, help="only these players must best-respond")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify_ne)

    p = sub.add_parser("weakfeas", parents=[common], help="check weak feasibility of an allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--perm", required=True, type=_ints, help="slot-to-player permutation, 0-based")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_weakfeas)

    p = sub.add_parser("poa-search", parents=[common], help="worst-case inefficiency search")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--perm", type=_ints)
    p.add_argument("--budget", type=_positive_int, default=20_000, help="objective evaluations per permutation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("numeric", "closed-form"), default="numeric")
    p.add_argument("--parallel", type=_positive_int, default=1, help="worker processes")
    p.set_defaults(func=cmd_poa_search)

    for name, src, func, help_ in (
        ("learn", "--instance", cmd_learn, "full-information no-regret learning"),
        ("learn-bayes", "--dist", cmd_learn_bayes, "no-regret learning with per-type learners"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument(src, required=True)
        p.add_argument("--grid", type=int, default=51)
        p.add_argument("--rounds", type=int, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--schedule", choices=("fixed", "anytime"))
        p.add_argument("--eta", type=float)
        p.add_argument("--fixed", type=_fixed, help="static bidders as player:bid pairs")
        p.add_argument("--out", default="trajectory.csv")
        p.add_argument("--parallel", type=_positive_int, default=1, help="independent replicas (seeds seed..seed+R-1)")
        p.set_defaults(func=func)

    p = sub.add_parser("cce-check", parents=[common], help="per-player CCE epsilon of a recorded run")
    p.add_argument("--instance", required=True)
    p.add_argument("--history", required=True, help="trajectory CSV written by learn")
    p.add_argument("--grid", type=int, default=51)
    p.set_defaults(func=cmd_cce_check)

    p = sub.add_parser("verify-bounds", parents=[common], help="numeric certificates for the analytic bounds")
    p.add_argument("--which", choices=BOUND_CHOICES, default="all")
    p.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--cor-lambda", type=float, help="lambda of the full-information function (default: the root)")
    p.add_argument("--grid", type=int, default=10_000)
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("replay", help="rerun a manifest and compare its result")
    p.add_argument("manifest")
    p.set_defaults(func=None)
    return parser


def _execute(argv: list[str]) -> tuple[argparse.Namespace, dict, int]:
    args = build_parser().parse_args(argv)
    result, code = args.func(args)
    return args, result, code


def _replay(path: str) -> int:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    _, result, code = _execute(manifest["argv"])
    result.pop("_text", None)
    same = _jsonable(result) == manifest["result"] and code == manifest["exit_code"]
    print(json.dumps({"reproduced": same, "command": manifest["command"]}))
    return EXIT_PASS if same else EXIT_FAIL


def _strip_manifest(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--manifest":
            skip = True
        elif not a.startswith("--manifest="):
            out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "replay":
            return _replay(args.manifest)
        start = time.perf_counter()
        result, code = args.func(args)
        elapsed = time.perf_counter() - start
    except (UsageError, InstanceFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = result.pop("_text", None)
    print(text if text is not None else json.dumps(_jsonable(result), indent=2))
    if args.manifest:
        manifest = {
            "command": args.command,
            "argv": _strip_manifest(argv),
            "parameters": _jsonable({k: v for k, v in vars(args).items() if k not in ("func", "manifest")}),
            "seed": getattr(args, "seed", None),
            "tool_version": __version__,
            "wall_clock_seconds": elapsed,
            "exit_code": code,
            "result": _jsonable(result),
        }
        Path(args.manifest).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return code
