"""Bounded breadth-first state-space exploration.

Calls to impure host functions (``uniform``) on output arcs are not
sampled here: each call is expanded into one branch per value of its
interval, so the graph covers every outcome the simulator could draw.
"""

from __future__ import annotations

import hashlib
import random
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field

from .inscription import calls
from .net import (
    FlatNet,
    Marking,
    NetEvent,
    apply_delta,
    consumed,
    enabled_bindings,
    initial_marking,
    produced,
    type_sound,
)

EMPTY_MARKING_DIGEST = hashlib.blake2b(b"", digest_size=16).hexdigest()


class RandomExpansionCapExceeded(Exception):
    def __init__(self, transition: str, lo: int, hi: int, cap: int):
        super().__init__(f"{transition}: uniform({lo}, {hi}) has more than {cap} outcomes")
        self.transition = transition


@dataclass(frozen=True)
class ExploreBounds:
    max_states: int = 1_000_000
    max_depth: int = 1_000_000
    binding_cap: int = 10_000
    random_expansion_cap: int = 1_000

    def __post_init__(self):
        for name in ("max_states", "max_depth", "binding_cap", "random_expansion_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class StateGraph:
    nodes: list  # Marking per id; node 0 is the initial marking
    edges: list  # (from id, NetEvent, to id)
    parents: list  # (parent id, NetEvent) per node, None for the root
    frontier: set = field(default_factory=set)
    states_cap_hit: bool = False
    depth_cap_hit: bool = False
    binding_cap_hit: bool = False
    root: int = 0

    def __post_init__(self):
        self.out_degree = [0] * len(self.nodes)
        for a, _, _ in self.edges:
            self.out_degree[a] += 1

    @property
    def truncated(self) -> bool:
        return self.states_cap_hit or self.depth_cap_hit or self.binding_cap_hit

    def successors(self, i: int) -> list[tuple[NetEvent, int]]:
        return [(ev, b) for a, ev, b in self.edges if a == i]

    def path_to(self, i: int) -> list[NetEvent]:
        path = []
        while self.parents[i] is not None:
            i, ev = self.parents[i]
            path.append(ev)
        path.reverse()
        return path


@dataclass(frozen=True)
class Violation:
    node: int
    path: list

    def __str__(self) -> str:
        return f"violation at node {self.node} after {len(self.path)} step(s)"


def canonical_hash(m: Marking) -> str:
    """128-bit digest of a marking, independent of insertion order."""
    return hashlib.blake2b(m.canonical_text().encode("utf-8"), digest_size=16).hexdigest()


class _Chooser:
    """Stand-in rng that replays a choice prefix, then picks the lowest value."""

    def __init__(self, prefix: list[int], cap: int, transition: str):
        self.prefix = prefix
        self.cap = cap
        self.transition = transition
        self.sizes: list[int] = []
        self.taken: list[int] = []

    def randint(self, lo: int, hi: int) -> int:
        n = hi - lo + 1
        if n > self.cap:
            raise RandomExpansionCapExceeded(self.transition, lo, hi, self.cap)
        k = len(self.taken)
        c = self.prefix[k] if k < len(self.prefix) else 0
        self.sizes.append(n)
        self.taken.append(c)
        return lo + c


def expand_outputs(fn: FlatNet, t, b, cap: int, impure: bool):
    """Every distinct produced-token map of ``t`` under ``b``."""
    if not impure:
        yield produced(fn, t, b, None)
        return
    prefix: list[int] = []
    while True:
        ch = _Chooser(prefix, cap, t.name)
        yield produced(fn, t, b, ch)
        # odometer over the recorded choice points
        j = len(ch.taken) - 1
        while j >= 0 and ch.taken[j] + 1 >= ch.sizes[j]:
            j -= 1
        if j < 0:
            return
        prefix = ch.taken[:j] + [ch.taken[j] + 1]


def _dedupe(outs: list[dict]) -> list[dict]:
    seen = set()
    out = []
    for plus in outs:
        key = frozenset(plus.items())
        if key not in seen:
            seen.add(key)
            out.append(plus)
    return out


def explore(fn: FlatNet, bounds: ExploreBounds = ExploreBounds(), initial: Marking | None = None, seed: int = 0) -> StateGraph:
    """Breadth-first reachability graph from the initial marking.

    Initial-marking expressions that call ``uniform`` are sampled once
    with ``random.Random(seed)`` unless ``initial`` is given.
    """
    impure_fns = {n for n, h in fn.functions.items() if not h.pure}
    impure = {
        t.name: any(calls(e) & impure_fns for _, e in t.out_arcs) for t in fn.transitions
    }
    m0 = initial if initial is not None else initial_marking(fn, random.Random(seed))
    # Enabling depends only on the input places; outputs only on the binding.
    enable_cache: list[dict] = [{} for _ in fn.transitions]
    fire_cache: dict = {}
    nodes = [m0]
    ids = {m0: 0}
    depth = [0]
    parents: list = [None]
    edges: list = []
    frontier: set[int] = set()
    flags = {"states": False, "depth": False, "binding": False}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        m = nodes[i]
        sets = m.sets
        seen_edges = set()
        for k, t in enumerate(fn.transitions):
            key = tuple(sets[p] for p in t.input_places)
            bs = enable_cache[k].get(key)
            if bs is None:
                bs = enable_cache[k][key] = enabled_bindings(fn, m, t, bounds.binding_cap)
            if bs.truncated:
                flags["binding"] = True
                frontier.add(i)
            if not bs.bindings:
                continue
            if depth[i] >= bounds.max_depth:
                flags["depth"] = True
                frontier.add(i)
                break
            for b in bs.bindings:
                ev = NetEvent(t.name, b)
                effects = fire_cache.get(ev)
                if effects is None:
                    minus = consumed(fn, t, b)
                    outs = list(expand_outputs(fn, t, b, bounds.random_expansion_cap, impure[t.name]))
                    effects = fire_cache[ev] = (minus, _dedupe(outs))
                minus, outs = effects
                for plus in outs:
                    m2 = apply_delta(m, minus, plus)
                    j = ids.get(m2)
                    if j is None:
                        if len(nodes) >= bounds.max_states:
                            flags["states"] = True
                            frontier.add(i)
                            continue
                        j = len(nodes)
                        ids[m2] = j
                        nodes.append(m2)
                        depth.append(depth[i] + 1)
                        parents.append((i, ev))
                        queue.append(j)
                    key = (ev, j)
                    if key not in seen_edges:
                        seen_edges.add(key)
                        edges.append((i, ev, j))
    return StateGraph(
        nodes,
        edges,
        parents,
        frontier,
        states_cap_hit=flags["states"],
        depth_cap_hit=flags["depth"],
        binding_cap_hit=flags["binding"],
    )


def dead_markings(g: StateGraph) -> list[int]:
    """Nodes without successors, excluding bound-truncated frontier nodes."""
    return [i for i, d in enumerate(g.out_degree) if d == 0 and i not in g.frontier]


def frontier_nodes(g: StateGraph) -> list[int]:
    return sorted(g.frontier)


def check_invariant(g: StateGraph, pred: Callable[[Marking], bool]) -> Violation | None:
    """None if ``pred`` holds everywhere, else the shallowest violation."""
    for i, m in enumerate(g.nodes):
        if not pred(m):
            return Violation(i, g.path_to(i))
    return None


def is_reachable(g: StateGraph, pred: Callable[[Marking], bool]) -> list[NetEvent] | None:
    """Shortest event path to a node satisfying ``pred``, or None."""
    for i, m in enumerate(g.nodes):
        if pred(m):
            return g.path_to(i)
    return None


def type_soundness(fn: FlatNet) -> Callable[[Marking], bool]:
    return lambda m: type_sound(fn, m)


def summary(g: StateGraph) -> dict:
    return {
        "nodes": len(g.nodes),
        "edges": len(g.edges),
        "dead": len(dead_markings(g)),
        "frontier": len(g.frontier),
        "statesCapHit": g.states_cap_hit,
        "depthCapHit": g.depth_cap_hit,
        "bindingCapHit": g.binding_cap_hit,
    }


def export_graph(g: StateGraph) -> str:
    lines = []
    for i, m in enumerate(g.nodes):
        lines.append(f"node {i} {str(m)}")
    for a, ev, b in g.edges:
        lines.append(f"edge {a} {ev.transition} <{ev.binding}> {b}")
    lines.append("summary")
    for k, v in summary(g).items():
        lines.append(f"  {k} {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
