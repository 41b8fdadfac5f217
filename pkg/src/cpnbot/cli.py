"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 model/validation error, 3 check violation,
4 exploration bounds exceeded.
"""

from __future__ import annotations

import argparse
import random
import sys
import time

from . import dynamixel
from .inscription import CPNSyntaxError
from .modelfile import load_model, print_model
from .net import FlatNet, HierNet, enabled_bindings, enabled_events, fire, flatten, initial_marking, validate
from .robot import RobotModelConfig, build_robot_model, registry
from .simulate import simulate, verify_trace, write_trace
from .statespace import (
    ExploreBounds,
    RandomExpansionCapExceeded,
    StateGraph,
    check_invariant,
    dead_markings,
    explore,
    export_graph,
    is_reachable,
    summary,
    type_soundness,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_VIOLATION = 3
EXIT_BOUNDS = 4

CHECKS = ("lock-safety", "type-soundness", "deadlock-free", "reach-motors")


class UsageError(Exception):
    pass


class ModelError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(name: str) -> RobotModelConfig:
    return RobotModelConfig.reduced() if name == "reduced" else RobotModelConfig()


def _load(args) -> HierNet:
    if args.model:
        try:
            net = load_model(args.model, registry())
        except OSError as e:
            raise UsageError(f"cannot read {args.model}: {e.strerror}") from None
        except CPNSyntaxError as e:
            raise ModelError(f"{args.model}: {e}") from None
    else:
        net = build_robot_model(_config(args.config))
    diags = validate(net)
    if diags:
        raise ModelError("\n".join(str(d) for d in diags))
    return net


# ---------------------------------------------------------------- subcommands


def cmd_validate(args, out) -> int:
    _load(args)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    if args.steps < 0:
        raise UsageError("--steps must be non-negative")
    fn = flatten(_load(args))
    records = simulate(fn, args.steps, args.seed)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as f:
            last = write_trace(records, f)
        for place, ms in last["final"].items():
            out.write(f"{place}: {ms}\n")
    else:
        write_trace(records, out)
    return EXIT_OK


def _show_diff(fn: FlatNet, before, after, out):
    for name, a, b in zip(fn.place_names, before.sets, after.sets):
        if a != b:
            out.write(f"  {name}: {a} -> {b}\n")


def cmd_step(args, out) -> int:
    fn = flatten(_load(args))
    rng = random.Random(args.seed) if args.seed is not None else random.Random()
    m = initial_marking(fn, rng)
    out.write(str(m) + "\n")
    stdin = sys.stdin
    while True:
        events = enabled_events(fn, m)
        if not events:
            out.write("quiescent\n")
            break
        for i, ev in enumerate(events):
            out.write(f"[{i}] {ev}\n")
        out.write("> ")
        out.flush()
        line = stdin.readline()
        if not line:
            out.write("\n")
            break
        cmd = line.strip()
        if cmd == "q":
            break
        if cmd == "r":
            ev = events[rng.randrange(len(events))]
        elif cmd.isdigit() and int(cmd) < len(events):
            ev = events[int(cmd)]
        else:
            out.write(f"invalid choice {cmd!r}: enter 0..{len(events) - 1}, r or q\n")
            continue
        m2 = fire(fn, m, ev, rng)
        out.write(f"fired {ev}\n")
        _show_diff(fn, m, m2, out)
        m = m2
    out.write("final marking\n")
    out.write(str(m) + "\n")
    return EXIT_OK


def _robot_checks(fn: FlatNet, g: StateGraph, name: str):
    """Returns (passed, path or None, note)."""
    if name == "type-soundness":
        v = check_invariant(g, type_soundness(fn))
        return v is None, v and v.path, ""
    if name == "deadlock-free":
        dead = dead_markings(g)
        return not dead, dead and g.path_to(dead[0]), ""
    try:
        if name == "lock-safety":
            lock = fn.find_place("Place-Number")
            read = fn.transition(fn.find_transition("Gyroscope-and-Accelerometer"))

            def safe(m):
                n = m[lock].size()
                return n == 1 or (n == 0 and not enabled_bindings(fn, m, read).bindings)

            v = check_invariant(g, safe)
            return v is None, v and v.path, ""
        if name == "reach-motors":
            dmri = fn.find_place("Dynamixel-Motor-Running-Instruction")
            motors = fn.find_transition("Send-instruction-to-Motors")
            path = is_reachable(g, lambda m: any(getattr(v, "items", None) for v in m[dmri].values()))
            ran = any(ev.transition == motors for _, ev, _ in g.edges)
            return path is not None and ran, None, "" if path is not None and ran else "not reached"
    except KeyError as e:
        raise ModelError(f"check {name} needs the robot model: {e}") from None
    raise UsageError(f"unknown check {name}")


def cmd_explore(args, out) -> int:
    fn = flatten(_load(args))
    try:
        bounds = ExploreBounds(args.max_states, args.max_depth, args.binding_cap, args.random_cap)
    except ValueError as e:
        raise UsageError(str(e)) from None
    start = time.perf_counter()
    try:
        g = explore(fn, bounds, seed=args.seed)
    except RandomExpansionCapExceeded as e:
        out.write(f"bounds exceeded: {e}\n")
        return EXIT_BOUNDS
    elapsed = time.perf_counter() - start
    for k, v in summary(g).items():
        out.write(f"{k} {str(v).lower() if isinstance(v, bool) else v}\n")
    if args.timing:
        out.write(f"seconds {elapsed:.2f}\n")
    if args.graph:
        with open(args.graph, "w", encoding="utf-8", newline="\n") as f:
            f.write(export_graph(g))
    violated = False
    for name in args.check:
        ok, path, note = _robot_checks(fn, g, name)
        if ok:
            out.write(f"check {name}: Pass\n")
            continue
        if path is None and g.truncated:
            out.write(f"check {name}: Inconclusive ({note}, graph truncated)\n")
            continue
        violated = True
        if path is None:
            out.write(f"check {name}: Violation ({note})\n")
        else:
            out.write(f"check {name}: Violation, path of {len(path)} step(s)\n")
            for i, ev in enumerate(path):
                out.write(f"  {i}: {ev}\n")
    if violated:
        return EXIT_VIOLATION
    return EXIT_BOUNDS if g.truncated else EXIT_OK


def _byte(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise UsageError(f"not an integer: {text}") from None
    if not 0 <= v <= 0xFF:
        raise UsageError(f"{text} is not a byte (0..255)")
    return v


def cmd_encode(args, out) -> int:
    ident, inst = _byte(args.id), _byte(args.instruction)
    params = [_byte(p) for p in args.params]
    try:
        data = dynamixel.encode(ident, inst, params)
    except dynamixel.PacketError as e:
        raise UsageError(str(e)) from None
    out.write(dynamixel.to_hex(data) + "\n")
    return EXIT_OK


def cmd_export(args, out) -> int:
    text = print_model(build_robot_model(_config(args.config)))
    if args.out == "-":
        out.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    net = _load(args)
    try:
        with open(args.trace, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read {args.trace}: {e.strerror}") from None
    try:
        problems = verify_trace(flatten(net), lines, net.constants())
    except (ValueError, KeyError) as e:
        problems = [f"malformed trace: {e}"]
    for p in problems:
        out.write(p + "\n")
    if problems:
        return EXIT_VIOLATION
    out.write("trace ok\n")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cpnbot", description="Colored Petri net engine and humanoid-robot model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--model", help="model file (default: the built-in robot model)")
        g.add_argument("--config", choices=("default", "reduced"), default="default", help="built-in robot model variant")

    sp = sub.add_parser("validate", help="load and check a model")
    model_args(sp)
    sp.set_defaults(run=cmd_validate)

    sp = sub.add_parser("simulate", help="seeded random run, JSON-lines trace")
    model_args(sp)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--trace", help="write the trace here and print the final marking")
    sp.set_defaults(run=cmd_simulate)

    sp = sub.add_parser("step", help="fire events interactively")
    model_args(sp)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(run=cmd_step)

    sp = sub.add_parser("explore", help="build the state space and run checks")
    model_args(sp)
    sp.add_argument("--max-states", type=int, default=1_000_000)
    sp.add_argument("--max-depth", type=int, default=1_000_000)
    sp.add_argument("--binding-cap", type=int, default=10_000)
    sp.add_argument("--random-cap", type=int, default=1_000, help="max branches per uniform call")
    sp.add_argument("--seed", type=int, default=0, help="seed for initial-marking samples")
    sp.add_argument("--check", action="append", default=[], choices=CHECKS)
    sp.add_argument("--graph", help="write nodes and edges here")
    sp.add_argument("--timing", action="store_true", help="also print elapsed seconds")
    sp.set_defaults(run=cmd_explore)

    sp = sub.add_parser("encode-dynamixel", help="print a protocol 1.0 packet as hex")
    sp.add_argument("id")
    sp.add_argument("instruction")
    sp.add_argument("params", nargs="*")
    sp.set_defaults(run=cmd_encode)

    sp = sub.add_parser("export-model", help="write the built-in robot model as a model file")
    sp.add_argument("--config", choices=("default", "reduced"), default="default")
    sp.add_argument("out", help="output path, - for stdout")
    sp.set_defaults(run=cmd_export)

    sp = sub.add_parser("verify-trace", help="replay a simulation trace against a model")
    model_args(sp)
    sp.add_argument("--trace", required=True)
    sp.set_defaults(run=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    try:
        return args.run(args, out)
    except UsageError as e:
        print(f"cpnbot: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
