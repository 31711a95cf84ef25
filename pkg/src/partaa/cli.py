"""``partaa`` command-line tool.

Exit codes: 0 success, 1 validation or domain failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, isa, trace as trace_mod, verify
from .memory import save_dump
from .system import ConfigError, build, data_path, load_config

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# --------------------------------
# Commands
# --------------------------------

def cmd_assemble(args) -> int:
    try:
        if args.disassemble:
            image = isa.BinaryImage.load(args.input)
        else:
            source = Path(args.input).read_text()
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except isa.ImageError as exc:
        _err(f"error: {args.input}: {exc}")
        return EXIT_DOMAIN
    if args.disassemble:
        out_text = isa.disassemble(image)
        try:
            Path(args.output).write_text(out_text)
        except OSError as exc:
            _err(f"error: {exc}")
            return EXIT_IO
        return EXIT_OK
    try:
        image = isa.assemble(source, address_bits=args.address_bits)
    except isa.AssemblyError as exc:
        where = f"{args.input}:{exc.line}: " if exc.line else f"{args.input}: "
        _err(f"error: {where}{exc.message}")
        return EXIT_DOMAIN
    try:
        image.save(args.output)
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    print(f"{args.output}: {len(image.words)} words, {len(image.data_init)} data words, "
          f"entry {image.entry_point}")
    return EXIT_OK


def _config_or_exit(path):
    try:
        return load_config(path), EXIT_OK
    except ConfigError as exc:
        io = any("No such file" in p or "Errno" in p for p in exc.problems)
        for p in exc.problems:
            _err(f"error: {p}")
        return None, EXIT_IO if io else EXIT_DOMAIN
    except OSError as exc:
        _err(f"error: {exc}")
        return None, EXIT_IO


def cmd_validate(args) -> int:
    config, code = _config_or_exit(args.config)
    if config is None:
        return code
    problems = config.validate()
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return EXIT_DOMAIN
    print(f"{args.config}: valid ({len(config.processors)} processors, "
          f"{len(config.noc.channels)} channels)")
    return EXIT_OK


def cmd_run(args) -> int:
    config, code = _config_or_exit(args.config)
    if config is None:
        return code
    try:
        system = build(config, trace_kinds=args.kinds.split(",") if args.kinds else None,
                       owner_preference=not args.broken_arbitration)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"violation: {p}")
        return EXIT_DOMAIN
    except ValueError as exc:
        _err(f"error: {exc}")
        return EXIT_DOMAIN
    trace = system.run(args.cycles)
    try:
        if args.trace:
            trace.save(args.trace)
        dump = args.dump or (f"{args.trace}.mem" if args.trace else None)
        if dump:
            save_dump(dump, {f"processor {pid}": proc.memory.device.words
                             for pid, proc in system.processors.items()})
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    faults = len(trace.of_kind("fault"))
    print(f"cycles={system.cycle} events={len(trace)} faults={faults} "
          f"packets_received={len(trace.of_kind('pkt_recv'))}")
    print(f"trace_sha256={trace.digest()}")
    return EXIT_OK


def _print_kv(pairs: dict) -> None:
    for key, value in pairs.items():
        print(f"{key}={value}")


def cmd_analyze(args) -> int:
    try:
        kind = args.analysis
        if kind == "schedule":
            config, code = _config_or_exit(args.config)
            if config is None:
                return code
            failed = False
            for proc in config.processors:
                report = analysis.validate_schedule(proc.schedule(config.delta_so))
                print(f"processor {proc.id}: {report.text()}")
                failed |= not report.passed
            return EXIT_DOMAIN if failed else EXIT_OK
        if kind == "wcet":
            bound = analysis.partitioned_wcet(args.tau_a, args.tau_p, args.lambda_p)
            inputs = {"tau_a": args.tau_a, "tau_p": args.tau_p, "lambda_p": args.lambda_p}
        elif kind == "case1":
            bound = analysis.wcet_case1(args.tasks, args.budget)
            inputs = {"tasks": "+".join(map(str, args.tasks)), "budget": args.budget}
        elif kind == "case2":
            bound = analysis.wcet_case2(args.tau_p1, args.gamma_a, args.gamma_b, args.tau_b, args.delta_so)
            inputs = {"tau_p1": args.tau_p1, "gamma_a": args.gamma_a, "gamma_b": args.gamma_b,
                      "tau_b": args.tau_b, "delta_so": args.delta_so}
        elif kind == "case3":
            bound = analysis.wcet_case3(args.wcet_a, args.wcet_b, args.delta_cd, args.budgets,
                                        synchronized=args.budgets is None)
            inputs = {"wcet_a": args.wcet_a, "wcet_b": args.wcet_b,
                      "delta_cd": args.delta_cd, "budgets": args.budgets}
        else:  # noc
            bound = analysis.channel_latency(args.s_total, args.s_channel, args.t_slot)
            inputs = {"s_total": args.s_total, "s_channel": args.s_channel, "t_slot": args.t_slot}
            inputs["end_to_end"] = analysis.end_to_end_bound(args.s_total, args.s_channel, args.t_slot)
    except analysis.AnalysisError as exc:
        _err(f"error: {exc}")
        return EXIT_DOMAIN
    _print_kv({"analysis": kind, **{k: v for k, v in inputs.items() if v is not None},
               "bound_cycles": bound,
               "bound_ms": f"{analysis.cycles_to_ms(bound, args.clock_hz):.6f}"})
    return EXIT_OK


def cmd_verify(args) -> int:
    owner = not args.broken_arbitration
    if args.mode == "noc":
        config, code = _config_or_exit(args.config)
        if config is None:
            return code
        problems = config.validate()
        if problems:
            for p in problems:
                print(f"violation: {p}")
            return EXIT_DOMAIN
        result = verify.verify_noc_config(config, owner_preference=owner)
        if args.sweep:
            grid = verify.verify_noc_grid(owner_preference=owner)
            result.rows += grid.rows
            result.failures += grid.failures
    elif args.mode == "wcet":
        result = verify.verify_wcet(args.seed, args.count)
    elif args.mode == "case12":
        result = verify.verify_cases12(args.seed, args.count)
    else:
        setup = verify.Case3Setup(tuple(args.budgets), args.consumer_partition)
        offsets = None if args.sweep else range(0, setup.period, 7)
        result = verify.verify_case3(setup, offsets)
    print(result.table())
    return EXIT_OK if result.ok else EXIT_DOMAIN


def cmd_trace_diff(args) -> int:
    try:
        a = trace_mod.Trace.load(args.a)
        b = trace_mod.Trace.load(args.b)
    except OSError as exc:
        _err(f"error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _err(f"error: {exc}")
        return EXIT_DOMAIN
    index = trace_mod.first_divergence(a, b)
    if index is None:
        print(f"identical ({len(a)} events, sha256 {a.digest()})")
        return EXIT_OK
    print(f"traces diverge at event {index}")
    for line in trace_mod.diff(a, b, args.context):
        print(line)
    return EXIT_DOMAIN


# --------------------------------
# Parser
# --------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partaa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assemble", help="assemble a source file into a binary image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--address-bits", type=int, default=isa.DEFAULT_ADDRESS_BITS)
    p.add_argument("-d", "--disassemble", action="store_true",
                   help="read a binary image and write assembly instead")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("validate", help="check a system configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a configuration")
    p.add_argument("config")
    p.add_argument("--cycles", type=int, default=100_000)
    p.add_argument("--trace", help="write the trace here")
    p.add_argument("--dump", help="write the final memory dump here (default: TRACE.mem)")
    p.add_argument("--kinds", help="comma-separated event kinds to record")
    p.add_argument("--broken-arbitration", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="evaluate a timing formula")
    p.add_argument("--clock-hz", type=float, default=analysis.NOMINAL_CLOCK_HZ)
    asub = p.add_subparsers(dest="analysis", required=True)
    a = asub.add_parser("wcet")
    a.add_argument("--tau-a", type=int, required=True)
    a.add_argument("--tau-p", type=int, required=True)
    a.add_argument("--lambda-p", type=int, required=True)
    a = asub.add_parser("case1")
    a.add_argument("--tasks", type=int, nargs="+", required=True)
    a.add_argument("--budget", type=int)
    a = asub.add_parser("case2")
    for name in ("tau-p1", "gamma-a", "gamma-b", "tau-b", "delta-so"):
        a.add_argument(f"--{name}", type=int, required=True)
    a = asub.add_parser("case3")
    a.add_argument("--wcet-a", type=int, required=True)
    a.add_argument("--wcet-b", type=int, required=True)
    a.add_argument("--delta-cd", type=int)
    a.add_argument("--budgets", type=int, nargs=3, help="consumer budgets; selects the unsynchronized formula")
    a = asub.add_parser("noc")
    a.add_argument("--s-total", type=int, required=True)
    a.add_argument("--s-channel", type=int, required=True)
    a.add_argument("--t-slot", type=int, required=True)
    a = asub.add_parser("schedule")
    a.add_argument("config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="check timing bounds against simulation")
    p.add_argument("config", nargs="?", default=str(data_path("default", "default.yaml")))
    p.add_argument("--mode", choices=("wcet", "noc", "case12", "case3"), default="noc")
    p.add_argument("--sweep", action="store_true", help="exhaustive phase sweep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--budgets", type=int, nargs=3, default=[40, 30, 50])
    p.add_argument("--consumer-partition", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--broken-arbitration", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("trace-diff", help="compare two trace files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--context", type=int, default=2)
    p.set_defaults(func=cmd_trace_diff)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
