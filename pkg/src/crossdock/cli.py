"""``crossdock`` command line: generate, solve, simulate, simopt, replay.

Every tunable value is a key in one flat ``key=value`` namespace.  Values
resolve as defaults, then ``--config`` file, then explicit flags.  Each run
writes ``manifest.txt`` with the resolved values.  A manifest is itself a
valid config file, and ``crossdock replay manifest.txt`` repeats the run.

Exit codes: 0 success, 2 usage error, 3 infeasible input or budget refusal,
4 parse error (including unreadable input files).
"""
from __future__ import annotations

import argparse
import dataclasses
import secrets
import sys
from pathlib import Path

from . import __version__
from .des import SimConfig, UnloadTime, estimate_cost, parse_schedule, SIM_RESULT_COLUMNS
from .exact import DEFAULT_BUDGET, BudgetExceeded, solve_exact
from .instance import (
    InstanceError,
    LayoutSpec,
    ParseError,
    figure1_instance,
    generate_from_layout,
    generate_random,
    read_instance_file,
    write_instance,
)
from .kvconfig import coerce, format_kv, parse_kv
from .memetic import MemeticConfig, SolveReport, TravelCostFitness, solve_memetic, solve_random_restart
from .objective import FeasibilityError, format_assignment, parse_assignment
from .simopt import SimOptConfig, solve_simopt

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_PARSE = 0, 2, 3, 4


class UsageError(Exception):
    pass


# key -> (type, default).  Memetic and simulation keys come from their configs.
_GENERATE_KEYS = {
    "generator": (str, "random"),
    "I": (int, 5), "J": (int, 5), "M": (int, 4), "N": (int, 4),
    "max_distance": (float, 10.0), "max_flow": (int, 5),
    "inbound_doors": (int, 6), "outbound_doors": (int, 9), "open_doors": (int, 1),
    "dock_width": (float, 3.0), "door_pitch": (float, 1.0),
    "inbound_wall": (str, "south"), "outbound_wall": (str, "north"), "open_wall": (str, "north"),
}
_SOLVE_KEYS = {
    "method": (str, "memetic"),
    "budget": (int, DEFAULT_BUDGET),
    "restarts": (int, 100),
}
_SIMULATE_KEYS = {"replications": (int, 30)}
_SIMOPT_KEYS = {
    "search_replications": (int, 5),
    "final_replications": (int, 50),
    "elite_rerank_size": (int, 10),
}
_MEMETIC_KEYS = [f.name for f in dataclasses.fields(MemeticConfig) if f.name != "seed"]


def _add_common(p: argparse.ArgumentParser, needs_instance: bool = True):
    if needs_instance:
        p.add_argument("--instance", metavar="PATH", help="CDAP instance file")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    p.add_argument("--seed", type=int, help="master seed for all randomness")
    p.add_argument("--threads", type=int, default=1, help="worker threads; outputs do not depend on it")
    p.add_argument("--config", metavar="PATH", help="key=value config file (a manifest works too)")
    p.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--strict", action="store_true", help="require an explicit --seed")


def _add_memetic_flags(p):
    g = p.add_argument_group("memetic search")
    g.add_argument("--population-size", type=int)
    g.add_argument("--generations", type=int)
    g.add_argument("--tournament-size", type=int)
    g.add_argument("--crossover-rate", type=float)
    g.add_argument("--mutation-rate", type=float)
    g.add_argument("--local-search-policy", help="every_offspring or elite_fraction(f)")
    g.add_argument("--local-search-style", choices=("first_improvement", "best_improvement"))
    g.add_argument("--max-evaluations", type=int)
    g.add_argument("--stagnation-limit", type=int)


def _add_sim_flags(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--arrival-rate", help="one rate, or comma-separated rates per origin")
    g.add_argument("--trailers-per-origin", type=int)
    g.add_argument("--schedule", metavar="PATH", help="arrival schedule file: 'origin_index arrival_time' lines")
    g.add_argument("--unload-time", help="constant(c) | uniform(a,b) | exponential(mean)")
    g.add_argument("--forklift-count", type=int)
    g.add_argument("--forklift-speed", type=float)
    g.add_argument("--trip-rule", choices=("full_row", "proportional"))
    g.add_argument("--delay-weight", type=float)
    g.add_argument("--outbound-service-time", type=float)
    g.add_argument("--door-policy", choices=("dedicated", "pooled"))
    g.add_argument("--sim-seed", type=int, help="simulation master seed (default: --seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossdock", description="Crossdock door assignment toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write an instance file")
    _add_common(p, needs_instance=False)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--random", dest="generator", action="store_const", const="random")
    mode.add_argument("--figure1", dest="generator", action="store_const", const="figure1",
                      help="16-door example dock: 6 inbound, 9 outbound, 1 open")
    mode.add_argument("--layout", dest="generator", action="store_const", const="layout")
    p.add_argument("-I", type=int)
    p.add_argument("-J", type=int)
    p.add_argument("-M", type=int)
    p.add_argument("-N", type=int)
    p.add_argument("--max-distance", type=float)
    p.add_argument("--max-flow", type=int)
    p.add_argument("--inbound-doors", type=int)
    p.add_argument("--outbound-doors", type=int)
    p.add_argument("--open-doors", type=int)
    p.add_argument("--dock-width", type=float)
    p.add_argument("--door-pitch", type=float)

    p = sub.add_parser("solve", help="minimise travel cost")
    _add_common(p)
    p.add_argument("--method", choices=("exact", "memetic", "random-restart"))
    p.add_argument("--budget", type=int, help="exact enumeration cap")
    p.add_argument("--restarts", type=int, help="random-restart baseline restarts")
    _add_memetic_flags(p)

    p = sub.add_parser("simulate", help="estimate the simulated cost of an assignment")
    _add_common(p)
    p.add_argument("--assignment", metavar="PATH", help="file with 'X:' and 'Y:' lines")
    p.add_argument("--replications", type=int)
    _add_sim_flags(p)

    p = sub.add_parser("simopt", help="memetic search on the simulated cost")
    _add_common(p)
    p.add_argument("--search-replications", type=int)
    p.add_argument("--final-replications", type=int)
    p.add_argument("--elite-size", dest="elite_rerank_size", type=int)
    _add_memetic_flags(p)
    _add_sim_flags(p)

    p = sub.add_parser("replay", help="repeat a run from its manifest")
    p.add_argument("manifest", metavar="MANIFEST")
    p.add_argument("--out", metavar="DIR", default=".")
    p.add_argument("--threads", type=int, default=1)
    return parser


# ---------------------------------------------------------------------------
# config resolution

def _load_config(args) -> dict:
    if not args.config:
        return {}
    path = Path(args.config)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    values = parse_kv(text)
    values["__root__"] = (str(path.parent), 0)
    return values


def _resolve_plain(keys: dict, file_values: dict, args) -> dict:
    out = {}
    for key, (kind, default) in keys.items():
        value = default
        if key in file_values:
            raw, lineno = file_values[key]
            value = coerce(raw, kind, key, lineno)
        flag = getattr(args, key, None)
        if flag is not None:
            value = flag
        out[key] = value
    return out


def _resolve_seed(args, file_values) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in file_values:
        raw, lineno = file_values["seed"]
        return coerce(raw, int, "seed", lineno)
    if args.strict:
        raise UsageError("--strict requires an explicit --seed")
    return secrets.randbits(31)


def _optional_seed(args, file_values, default: int) -> int:
    """Seed for runs that do not consume randomness; never drawn from entropy."""
    if args.seed is not None:
        return args.seed
    if "seed" in file_values:
        raw, lineno = file_values["seed"]
        return coerce(raw, int, "seed", lineno)
    return default


def _resolve_memetic(file_values, args, seed) -> MemeticConfig:
    hints = {f.name: f.type for f in dataclasses.fields(MemeticConfig)}
    kw = {}
    for key in _MEMETIC_KEYS:
        kind = {"int": int, "float": float}.get(hints[key], str)
        if key in file_values:
            raw, lineno = file_values[key]
            kw[key] = coerce(raw, kind, key, lineno)
        flag = getattr(args, key, None)
        if flag is not None:
            kw[key] = flag
    return MemeticConfig(seed=seed, **kw)


def _resolve_sim(file_values, args, seed) -> SimConfig:
    root = Path(file_values["__root__"][0]) if "__root__" in file_values else None
    base = SimConfig(seed=seed)
    sim = SimConfig.from_kv(file_values, base=base, root=root)
    kw = {}
    for key in ("trailers_per_origin", "forklift_count", "forklift_speed", "trip_rule",
                "delay_weight", "outbound_service_time", "door_policy"):
        flag = getattr(args, key, None)
        if flag is not None:
            kw[key] = flag
    if getattr(args, "sim_seed", None) is not None:
        kw["seed"] = args.sim_seed
    if getattr(args, "arrival_rate", None):
        rates = tuple(coerce(t.strip(), float, "arrival_rate") for t in args.arrival_rate.split(","))
        kw["arrival_rate"] = rates[0] if len(rates) == 1 else rates
    if getattr(args, "unload_time", None):
        kw["unload_time"] = UnloadTime.parse(args.unload_time)
    if getattr(args, "schedule", None):
        try:
            kw["schedule"] = parse_schedule(Path(args.schedule).read_text(encoding="ascii"))
        except OSError as exc:
            raise ParseError(f"cannot read schedule {args.schedule}: {exc.strerror}") from None
    return dataclasses.replace(sim, **kw)


def _load_instance(args):
    if not args.instance:
        raise UsageError("--instance is required")
    try:
        return read_instance_file(args.instance)
    except OSError as exc:
        raise ParseError(f"cannot read instance {args.instance}: {exc.strerror}") from None


def _manifest(command: str, seed: int, record: dict, inst=None, extra: dict | None = None) -> str:
    head = {"subcommand": command, "artifact_version": __version__, "seed": seed}
    if extra:
        head.update(extra)
    if inst is not None:
        head["instance_checksum"] = inst.checksum()
    return "# crossdock run manifest\n" + format_kv({**head, **record})


def _write(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8", newline="\n")


def _show(record: dict) -> int:
    sys.stdout.write(format_kv(record))
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    fv = _load_config(args)
    cfg = _resolve_plain(_GENERATE_KEYS, fv, args)
    needs_seed = cfg["generator"] in ("random", "layout")
    seed = _resolve_seed(args, fv) if needs_seed else _optional_seed(args, fv, 1)
    record = dict(cfg)
    if args.show_config:
        return _show({"seed": seed, **record})
    gen = cfg["generator"]
    if gen == "random":
        inst = generate_random(cfg["I"], cfg["J"], cfg["M"], cfg["N"],
                               cfg["max_distance"], cfg["max_flow"], seed)
    elif gen == "figure1":
        inst = figure1_instance(flow_seed=seed, max_flow=cfg["max_flow"])
    elif gen == "layout":
        layout = LayoutSpec(cfg["inbound_doors"], cfg["outbound_doors"], cfg["open_doors"],
                            cfg["dock_width"], cfg["door_pitch"], cfg["inbound_wall"],
                            cfg["outbound_wall"], cfg["open_wall"])
        inst = generate_from_layout(layout, cfg["M"], cfg["N"], flow_seed=seed,
                                    max_flow=cfg["max_flow"])
    else:
        raise UsageError(f"unknown generator {gen!r}")
    text = write_instance(inst)
    _write(Path(args.out), {"instance.cdap": text,
                            "manifest.txt": _manifest("generate", seed, record, inst)})
    print(f"wrote instance I={inst.I} J={inst.J} M={inst.M} N={inst.N} to {Path(args.out) / 'instance.cdap'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    fv = _load_config(args)
    cfg = _resolve_plain(_SOLVE_KEYS, fv, args)
    seed = _resolve_seed(args, fv) if cfg["method"] != "exact" else _optional_seed(args, fv, 0)
    mcfg = _resolve_memetic(fv, args, seed)
    record = {**cfg, **{k: v for k, v in dataclasses.asdict(mcfg).items() if k != "seed"}}
    if args.show_config:
        return _show({"seed": seed, **record})
    inst = _load_instance(args)
    _check_manifest_checksum(fv, inst)
    method = cfg["method"]
    if method == "exact":
        res = solve_exact(inst, cfg["budget"], workers=args.threads)
        report = SolveReport(res.best, res.best_cost, [(0, res.best_cost, res.num_evaluated)],
                             res.num_evaluated, "exhausted", seed, method="exact")
        extra = {"optima_count": res.optima_count}
    elif method == "memetic":
        report = solve_memetic(inst, TravelCostFitness(inst), mcfg)
        extra = None
    elif method == "random-restart":
        report = solve_random_restart(inst, TravelCostFitness(inst), cfg["restarts"],
                                      mcfg.local_search_style, seed, mcfg.max_evaluations)
        extra = None
    else:
        raise UsageError(f"unknown method {method!r}")
    _write(Path(args.out), {
        "report.txt": report.to_text(extra),
        "assignment.txt": format_assignment(report.best),
        "history.csv": report.history_csv(),
        "manifest.txt": _manifest("solve", seed, record, inst, {"instance": args.instance}),
    })
    print(f"{method}: best_cost={report.best_cost!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    fv = _load_config(args)
    cfg = _resolve_plain(_SIMULATE_KEYS, fv, args)
    seed = _resolve_seed(args, fv)
    sim = _resolve_sim(fv, args, seed)
    record = {**cfg, **sim.to_record()}
    if args.show_config:
        return _show({"seed": seed, **record})
    inst = _load_instance(args)
    _check_manifest_checksum(fv, inst)
    assignment_path = args.assignment or (fv["assignment"][0] if "assignment" in fv else None)
    if not assignment_path:
        raise UsageError("--assignment is required")
    try:
        text = Path(assignment_path).read_text(encoding="ascii")
    except OSError as exc:
        raise ParseError(f"cannot read assignment {assignment_path}: {exc.strerror}") from None
    a = parse_assignment(text, inst)
    est = estimate_cost(inst, a, sim, cfg["replications"], sim.seed, threads=args.threads,
                        keep_results=True)
    summary = {
        "replications": cfg["replications"],
        "mean_refined_cost": est.mean,
        "std_refined_cost": est.std,
        "stderr_refined_cost": est.stderr,
        "sim_seed": sim.seed,
    }
    rows = ["replication," + ",".join(SIM_RESULT_COLUMNS)]
    rows += [f"{r},{res.csv_row()}" for r, res in enumerate(est.results)]
    first = {f"rep0_{k}": v for k, v in est.results[0].to_record().items()}
    _write(Path(args.out), {
        "simulation.txt": format_kv({**summary, **first}),
        "replications.csv": "\n".join(rows) + "\n",
        "manifest.txt": _manifest("simulate", seed, record, inst,
                                  {"instance": args.instance, "assignment": assignment_path}),
    })
    print(f"refined_cost mean={est.mean!r} std={est.std!r} over {cfg['replications']} replications")
    return EXIT_OK


def cmd_simopt(args) -> int:
    fv = _load_config(args)
    cfg = _resolve_plain(_SIMOPT_KEYS, fv, args)
    seed = _resolve_seed(args, fv)
    mcfg = _resolve_memetic(fv, args, seed)
    sim = _resolve_sim(fv, args, seed)
    scfg = SimOptConfig(mcfg, sim, cfg["search_replications"], cfg["final_replications"],
                        cfg["elite_rerank_size"])
    record = {**cfg, **{k: v for k, v in dataclasses.asdict(mcfg).items() if k != "seed"},
              **sim.to_record()}
    if args.show_config:
        return _show({"seed": seed, **record})
    inst = _load_instance(args)
    _check_manifest_checksum(fv, inst)
    report = solve_simopt(inst, scfg, threads=args.threads)
    _write(Path(args.out), {
        "report.txt": report.to_text(),
        "assignment.txt": format_assignment(report.winner),
        "elite.csv": report.elite_csv(),
        "history.csv": report.search.history_csv(),
        "manifest.txt": _manifest("simopt", seed, record, inst, {"instance": args.instance}),
    })
    print(f"simopt: best mean={report.winner_mean!r} dev={report.winner_dev!r}")
    return EXIT_OK


def _check_manifest_checksum(fv, inst):
    if "instance_checksum" in fv and fv["instance_checksum"][0] != inst.checksum():
        raise ParseError("instance does not match the manifest checksum",
                         fv["instance_checksum"][1])


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        values = parse_kv(path.read_text(encoding="ascii"))
    except OSError as exc:
        raise ParseError(f"cannot read manifest {path}: {exc.strerror}") from None
    if "subcommand" not in values:
        raise ParseError("manifest has no subcommand")
    command = values["subcommand"][0]
    if command not in ("generate", "solve", "simulate", "simopt"):
        raise ParseError(f"manifest names unknown subcommand {command!r}")
    argv = [command, "--config", str(path), "--out", args.out, "--threads", str(args.threads)]
    if "instance" in values:
        argv += ["--instance", values["instance"][0]]
    if "assignment" in values:
        argv += ["--assignment", values["assignment"][0]]
    return main(argv)


_COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "simulate": cmd_simulate,
             "simopt": cmd_simopt, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"crossdock: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"crossdock: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExceeded as exc:
        print(f"crossdock: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InstanceError, FeasibilityError) as exc:
        print(f"crossdock: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
