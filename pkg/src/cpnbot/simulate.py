"""Seeded simulation and line-delimited JSON traces.

A trace is a header line, one record per fired event, an optional
quiescence marker, and a closing line with the final marking::

    {"format": "cpnbot-trace", "version": 1, "seed": 42, "initial": {...}}
    {"step": 0, "transition": "...", "binding": "x=1", "consumed": {...}, "produced": {...}, "rng": "..."}
    {"quiescent": true, "step": 7}
    {"final": {...}, "steps": 7}

Multisets are written in inscription syntax (``1`(1,2) ++ 2`3``), keyed by
flat place name; places with no tokens are omitted.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

from .colorsets import MultiSet
from .inscription import CPNSyntaxError, EvalError, evaluate_multiset, parse_expr
from .net import (
    FlatNet,
    Marking,
    TokenTypeError,
    _conform,
    apply_delta,
    consumed,
    enabled_events,
    initial_marking,
    produced,
)

TRACE_FORMAT = "cpnbot-trace"
TRACE_VERSION = 1


class TraceError(Exception):
    pass


@dataclass(frozen=True)
class TraceRecord:
    step: int
    transition: str
    binding: str
    consumed: dict
    produced: dict
    rng: str

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "transition": self.transition,
            "binding": self.binding,
            "consumed": self.consumed,
            "produced": self.produced,
            "rng": self.rng,
        }


def rng_digest(rng: random.Random) -> str:
    return hashlib.blake2b(repr(rng.getstate()).encode(), digest_size=8).hexdigest()


def marking_json(m: Marking) -> dict:
    return {n: str(ms) for n, ms in sorted(m.items()) if ms.size()}


def _delta_json(fn: FlatNet, delta: dict) -> dict:
    return {fn.place_names[i]: str(ms) for i, ms in sorted(delta.items()) if ms.size()}


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def simulate(fn: FlatNet, steps: int, seed: int) -> Iterator[dict]:
    """Yield trace objects for a run of at most ``steps`` events.

    One ``random.Random(seed)`` stream samples the initial marking, picks
    each event uniformly among the enabled ones, and feeds ``uniform``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = random.Random(seed)
    m = initial_marking(fn, rng)
    yield {"format": TRACE_FORMAT, "version": TRACE_VERSION, "seed": seed, "initial": marking_json(m)}
    n = 0
    while n < steps:
        events = enabled_events(fn, m)
        if not events:
            yield {"quiescent": True, "step": n}
            break
        ev = events[rng.randrange(len(events))]
        t = fn.transition(ev.transition)
        minus = consumed(fn, t, ev.binding)
        plus = produced(fn, t, ev.binding, rng)
        m = apply_delta(m, minus, plus)
        yield TraceRecord(
            n, ev.transition, str(ev.binding), _delta_json(fn, minus), _delta_json(fn, plus), rng_digest(rng)
        ).to_json()
        n += 1
    yield {"final": marking_json(m), "steps": n}


def write_trace(records: Iterable[dict], out) -> dict:
    """Write records one per line; returns the closing record."""
    last = {}
    for r in records:
        out.write(dumps(r) + "\n")
        last = r
    return last


# ---------------------------------------------------------------- replay


def parse_multiset(fn: FlatNet, place: str, text: str, constants: dict) -> MultiSet:
    try:
        ms = evaluate_multiset(parse_expr(text, constants), {}, None, fn.functions)
        return _conform(fn.place(place), ms, None)
    except (CPNSyntaxError, EvalError, TokenTypeError) as e:
        raise TraceError(f"{place}: cannot read multiset {text!r}: {e}") from None


def _read_marking(fn: FlatNet, obj: dict, constants: dict) -> Marking:
    unknown = set(obj) - set(fn.place_names)
    if unknown:
        raise TraceError(f"unknown place(s) {sorted(unknown)}")
    return Marking.of(fn, {p: parse_multiset(fn, p, t, constants) for p, t in obj.items()})


def verify_trace(fn: FlatNet, lines: Iterable[str], constants: dict | None = None) -> list[str]:
    """Replay a trace; returns a list of problems (empty when it checks out).

    Checks: header and initial marking match the model and seed; step
    indices run 0, 1, ...; each recorded event is enabled where it occurs
    and consumes what the record says; applying the recorded deltas ends
    in the recorded final marking.
    """
    constants = constants or {}
    problems: list[str] = []
    recs = [json.loads(line) for line in lines if line.strip()]
    if not recs or recs[0].get("format") != TRACE_FORMAT:
        return ["missing trace header"]
    head = recs[0]
    if head.get("version") != TRACE_VERSION:
        return [f"unsupported trace version {head.get('version')}"]
    try:
        m = _read_marking(fn, head["initial"], constants)
    except TraceError as e:
        return [f"header: {e}"]
    if m != initial_marking(fn, random.Random(head["seed"])):
        problems.append("initial marking does not match the model sampled with the recorded seed")
    expected = 0
    final = None
    for r in recs[1:]:
        if "final" in r:
            final = r
            continue
        if "quiescent" in r:
            if enabled_events(fn, m):
                problems.append(f"step {r['step']}: marked quiescent but events are enabled")
            continue
        if r.get("step") != expected:
            problems.append(f"step index {r.get('step')} where {expected} was expected")
        expected += 1
        try:
            minus = {fn.index[p]: parse_multiset(fn, p, t, constants) for p, t in r["consumed"].items()}
            plus = {fn.index[p]: parse_multiset(fn, p, t, constants) for p, t in r["produced"].items()}
        except (TraceError, KeyError) as e:
            problems.append(f"step {r['step']}: {e}")
            return problems
        match = [
            ev for ev in enabled_events(fn, m) if ev.transition == r["transition"] and str(ev.binding) == r["binding"]
        ]
        if not match:
            problems.append(f"step {r['step']}: {r['transition']} <{r['binding']}> is not enabled")
        else:
            want = consumed(fn, fn.transition(match[0].transition), match[0].binding)
            if {i: ms for i, ms in want.items() if ms.size()} != minus:
                problems.append(f"step {r['step']}: consumed tokens differ from the binding")
        for i, ms in minus.items():
            if not ms <= m.sets[i]:
                problems.append(f"step {r['step']}: {fn.place_names[i]} lacks {ms}")
                return problems
        m = apply_delta(m, minus, plus)
    if final is None:
        problems.append("missing final record")
    else:
        if final.get("steps") != expected:
            problems.append(f"final record says {final.get('steps')} steps, trace has {expected}")
        try:
            recorded = _read_marking(fn, final["final"], constants)
        except TraceError as e:
            problems.append(f"final: {e}")
        else:
            if recorded != m:
                problems.append("replayed marking differs from the recorded final marking")
    return problems


def fired(lines: Iterable[str]) -> list[dict]:
    """The event records of a trace, in order."""
    out = []
    for line in lines:
        if line.strip():
            r = json.loads(line)
            if "transition" in r:
                out.append(r)
    return out
