"""Hierarchical nets, flattening, enabling and firing.

Semantics are interleaving: one (transition, binding) event per step.
Several arcs between the same place and transition are summed before the
enabling check.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from . import colorsets as cs
from .colorsets import EMPTY, MultiSet, render_value, sort_key
from .inscription import (
    BUILTINS,
    EvalError,
    Expr,
    HostFnRegistry,
    InscriptionError,
    MsE,
    NotAPattern,
    PEnum,
    PInt,
    PRec,
    PStr,
    PTuple,
    PUnit,
    PVar,
    Wildcard,
    _match,
    arc_terms,
    calls,
    evaluate,
    evaluate_multiset,
    free_variables,
    print_expr,
)

DEFAULT_BINDING_CAP = 10_000
DEBUG = False

PORT_KINDS = ("in", "out", "io")


class NetError(Exception):
    pass


class NotEnabled(NetError):
    pass


class TokenTypeError(NetError):
    """A produced token is not a member of its destination color set."""

    def __init__(self, place: str, value: Any, transition: str | None = None):
        where = f" by {transition}" if transition else ""
        super().__init__(f"token {render_value(value)} produced{where} does not fit place {place}")
        self.place = place
        self.value = value


class EnumerationCapExceeded(NetError):
    def __init__(self, transition: str, variable: str, cardinality: float, cap: int):
        super().__init__(
            f"{transition}: variable {variable} ranges over {cardinality} values (cap {cap})"
        )
        self.transition = transition
        self.variable = variable


# ---------------------------------------------------------------- hierarchical structure


@dataclass(frozen=True)
class PlaceDecl:
    name: str
    colorset: str
    init: Expr | None = None
    port: str | None = None


@dataclass(frozen=True)
class Arc:
    place: str
    inscription: Expr


@dataclass(frozen=True)
class TransitionDecl:
    name: str
    guard: Expr | None = None
    inputs: tuple = ()
    outputs: tuple = ()


@dataclass(frozen=True)
class Substitution:
    name: str
    subpage: str
    socket_map: tuple = ()  # (socket place, port place) pairs


@dataclass(frozen=True)
class Page:
    name: str
    places: tuple = ()
    transitions: tuple = ()
    substitutions: tuple = ()

    def place(self, name: str) -> PlaceDecl | None:
        for p in self.places:
            if p.name == name:
                return p
        return None

    def ports(self) -> list[PlaceDecl]:
        return [p for p in self.places if p.port]


@dataclass
class HierNet:
    colorsets: dict
    variables: dict  # variable name -> colorset name
    pages: dict
    root: str
    functions: HostFnRegistry = field(default=BUILTINS, compare=False, repr=False)

    def constants(self) -> dict[str, int]:
        out = {}
        for d in self.colorsets.values():
            if isinstance(d, cs.Enum):
                for i, c in enumerate(d.constants):
                    out[c] = i
        return out

    def var_decls(self) -> dict:
        return {v: self.colorsets[c] for v, c in self.variables.items() if c in self.colorsets}


# ---------------------------------------------------------------- bindings & events


class Binding(Mapping):
    """Immutable variable assignment."""

    __slots__ = ("_d", "_hash")

    def __init__(self, assignment: Mapping[str, Any] | None = None, **kw):
        self._d = dict(assignment or {}, **kw)
        self._hash = None

    def __getitem__(self, k: str) -> Any:
        return self._d[k]

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Binding):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def sort_key(self) -> tuple:
        return tuple((n, sort_key(self._d[n])) for n in sorted(self._d))

    def __str__(self) -> str:
        return ", ".join(f"{n}={render_value(self._d[n])}" for n in sorted(self._d))

    def __repr__(self) -> str:
        return f"Binding({self})"


@dataclass(frozen=True)
class NetEvent:
    transition: str
    binding: Binding

    def __str__(self) -> str:
        return f"{self.transition} <{self.binding}>"


class BindingSet(NamedTuple):
    bindings: list
    truncated: bool


# ---------------------------------------------------------------- flat structure


@dataclass(frozen=True)
class FlatPlace:
    name: str
    colorset: Any
    init: Expr | None = None


class FlatTransition:
    def __init__(self, name, guard, inputs, outputs, var_decls, index):
        self.name = name
        self.guard = guard
        self.inputs = tuple(inputs)  # (place, expr)
        self.outputs = tuple(outputs)
        # (place index, count, pattern) per input term
        self.terms = []
        for place, e in self.inputs:
            for count, pat in arc_terms(e):
                self.terms.append((index[place], count, pat))
        self.out_arcs = tuple((index[p], e) for p, e in self.outputs)
        self.input_places = tuple(sorted({pidx for pidx, _, _ in self.terms}))
        bound: list[str] = []
        for _, _, pat in self.terms:
            for v in _pattern_vars(pat):
                if v not in bound:
                    bound.append(v)
        self.pattern_vars = tuple(bound)
        used = set(bound)
        if guard is not None:
            used |= free_variables(guard)
        for _, e in self.outputs:
            used |= free_variables(e)
        self.variables = {v: var_decls.get(v) for v in sorted(used)}
        self.fallback_vars = tuple(v for v in sorted(used) if v not in bound)
        self._member_cache: dict = {}

    def var_ok(self, name: str, value: Any) -> bool:
        key = (name, value)
        r = self._member_cache.get(key)
        if r is None:
            decl = self.variables.get(name)
            r = decl is not None and cs.contains(decl, value)
            self._member_cache[key] = r
        return r

    def __repr__(self) -> str:
        return f"FlatTransition({self.name})"


def _pattern_vars(p) -> list[str]:
    if isinstance(p, PVar):
        return [p.name]
    if isinstance(p, PTuple):
        return [n for x in p.items for n in _pattern_vars(x)]
    if isinstance(p, PRec):
        return [n for _, x in p.fields for n in _pattern_vars(x)]
    return []


class FlatNet:
    def __init__(self, places, transitions, var_decls, functions=BUILTINS):
        self.places = tuple(places)
        self.place_names = tuple(p.name for p in self.places)
        self.index = {n: i for i, n in enumerate(self.place_names)}
        if len(self.index) != len(self.places):
            raise NetError("duplicate flat place names")
        self.var_decls = dict(var_decls)
        self.functions = functions
        self.transitions = tuple(
            FlatTransition(name, guard, ins, outs, self.var_decls, self.index)
            for name, guard, ins, outs in transitions
        )
        self.transition_index = {t.name: t for t in self.transitions}

    def transition(self, name: str) -> FlatTransition:
        return self.transition_index[name]

    def place(self, name: str) -> FlatPlace:
        return self.places[self.index[name]]

    def find_place(self, suffix: str) -> str:
        """The unique flat place whose local name is ``suffix``."""
        hits = [n for n in self.place_names if n == suffix or n.endswith("." + suffix)]
        if len(hits) != 1:
            raise KeyError(f"{suffix!r} matches {hits}")
        return hits[0]

    def find_transition(self, suffix: str) -> str:
        hits = [t.name for t in self.transitions if t.name == suffix or t.name.endswith("." + suffix)]
        if len(hits) != 1:
            raise KeyError(f"{suffix!r} matches {hits}")
        return hits[0]


class Marking(Mapping):
    """Immutable map from flat place name to MultiSet."""

    __slots__ = ("names", "sets", "_hash")

    def __init__(self, names: tuple, sets: tuple):
        self.names = names
        self.sets = sets
        self._hash = None

    @classmethod
    def of(cls, fn: FlatNet, contents: Mapping[str, MultiSet]) -> Marking:
        unknown = set(contents) - set(fn.place_names)
        if unknown:
            raise KeyError(f"unknown places {sorted(unknown)}")
        return cls(fn.place_names, tuple(contents.get(n, EMPTY) for n in fn.place_names))

    def __getitem__(self, name: str) -> MultiSet:
        try:
            return self.sets[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Marking):
            return self.sets == other.sets and self.names == other.names
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.sets)
        return self._hash

    def canonical_text(self) -> str:
        """Nonempty places in name order, one ``place: multiset`` per line."""
        return "\n".join(
            f"{n}: {s}" for n, s in sorted(zip(self.names, self.sets)) if s
        )

    def __str__(self) -> str:
        return "; ".join(f"{n}: {s}" for n, s in sorted(zip(self.names, self.sets)) if s) or "empty"

    def __repr__(self) -> str:
        return f"Marking({self})"


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.location}: {self.message}"


def validate(net: HierNet) -> list[Diagnostic]:
    """Well-formedness diagnostics; empty iff the net can be flattened and run."""
    diags: list[Diagnostic] = []

    def err(kind, loc, msg):
        diags.append(Diagnostic(kind, loc, msg))

    for v, c in net.variables.items():
        if c not in net.colorsets:
            err("UnknownColorset", f"var {v}", f"unknown color set {c!r}")
    var_decls = net.var_decls()

    if net.root not in net.pages:
        err("UnknownPage", "root", f"root page {net.root!r} not declared")

    for page in net.pages.values():
        _validate_page(net, page, var_decls, err)

    # acyclic substitution graph
    state: dict[str, int] = {}

    def visit(name, stack):
        state[name] = 1
        for s in net.pages[name].substitutions:
            if s.subpage not in net.pages:
                continue
            if state.get(s.subpage) == 1:
                err("CyclicSubstitution", f"page {name}", " -> ".join(stack + [s.subpage]))
            elif s.subpage not in state:
                visit(s.subpage, stack + [s.subpage])
        state[name] = 2

    for name in net.pages:
        if name not in state:
            visit(name, [name])
    return diags


def _validate_page(net, page, var_decls, err):
    loc = f"page {page.name}"
    names = [p.name for p in page.places]
    for n in {n for n in names if names.count(n) > 1}:
        err("DuplicateName", loc, f"place {n} declared twice")
    tnames = [t.name for t in page.transitions] + [s.name for s in page.substitutions]
    for n in {n for n in tnames if tnames.count(n) > 1}:
        err("DuplicateName", loc, f"transition {n} declared twice")

    decls = {}
    rng = random.Random(0)
    for p in page.places:
        ploc = f"{loc}, place {p.name}"
        if p.port is not None and p.port not in PORT_KINDS:
            err("BadPortKind", ploc, f"port kind {p.port!r}")
        if p.colorset not in net.colorsets:
            err("UnknownColorset", ploc, f"unknown color set {p.colorset!r}")
            continue
        decl = decls[p.name] = net.colorsets[p.colorset]
        if p.init is None:
            continue
        if p.port:
            err("PortInitNotEmpty", ploc, "port places take their marking from the socket")
        missing = free_variables(p.init)
        if missing:
            err("UnboundVariable", ploc, f"initial marking uses variables {sorted(missing)}")
            continue
        try:
            ms = evaluate_multiset(p.init, {}, rng, net.functions)
        except (InscriptionError, cs.ColorSetError) as e:
            err("InitError", ploc, str(e))
            continue
        for v in ms.values():
            if not cs.contains(decl, v):
                err("InitTypeMismatch", ploc, f"{render_value(v)} not in {p.colorset}")

    for t in page.transitions:
        tloc = f"{loc}, transition {t.name}"
        bound: set[str] = set()
        for a in t.inputs:
            if a.place not in names:
                err("UnknownPlace", tloc, f"input arc from undeclared place {a.place}")
                continue
            try:
                terms = arc_terms(a.inscription)
            except NotAPattern as e:
                err("NotAPattern", tloc, f"input arc from {a.place}: {e}")
                continue
            for _, pat in terms:
                if _has_wildcard(pat):
                    err("WildcardOnInputArc", tloc, f"input arc from {a.place}")
                bound |= set(_pattern_vars(pat))
                if a.place in decls:
                    for msg in _check_pattern(pat, decls[a.place], var_decls):
                        err("PatternTypeMismatch", tloc, f"input arc from {a.place}: {msg}")
        guard_vars = free_variables(t.guard) if t.guard is not None else set()
        for a in t.outputs:
            if a.place not in names:
                err("UnknownPlace", tloc, f"output arc to undeclared place {a.place}")
                continue
            unbound = free_variables(a.inscription) - bound - guard_vars
            for v in sorted(unbound):
                err("UnboundOutputVariable", tloc, f"{v} on arc to {a.place} is not bound by any input arc or the guard")
            if a.place in decls:
                for msg in _check_expr(a.inscription, decls[a.place], var_decls):
                    err("ExprTypeMismatch", tloc, f"output arc to {a.place}: {msg}")
        all_exprs = [a.inscription for a in t.inputs + t.outputs] + ([t.guard] if t.guard is not None else [])
        for e in all_exprs:
            for v in sorted(free_variables(e)):
                if v not in net.variables:
                    err("UndeclaredVariable", tloc, f"variable {v} has no declared color set")
            for fname in sorted(calls(e)):
                if fname not in net.functions:
                    err("UnknownFunction", tloc, f"function {fname} is not registered")
        if t.guard is not None:
            impure = [f for f in calls(t.guard) if f in net.functions and not net.functions[f].pure]
            if impure:
                err("ImpureGuard", tloc, f"guard calls {sorted(impure)}")

    for s in page.substitutions:
        sloc = f"{loc}, substitution {s.name}"
        sub = net.pages.get(s.subpage)
        if sub is None:
            err("UnknownPage", sloc, f"subpage {s.subpage!r} not declared")
            continue
        ports = {p.name: p for p in sub.places}
        seen_sockets, seen_ports = set(), set()
        for socket, port in s.socket_map:
            if socket not in names:
                err("UnknownPlace", sloc, f"socket {socket} not on page {page.name}")
            if port not in ports:
                err("UnknownPlace", sloc, f"port {port} not on page {sub.name}")
                continue
            if not ports[port].port:
                err("NotAPort", sloc, f"{sub.name}.{port} is not a port place")
            if socket in seen_sockets:
                err("DuplicateSocket", sloc, f"socket {socket} assigned twice")
            if port in seen_ports:
                err("DuplicatePort", sloc, f"port {port} assigned twice")
            seen_sockets.add(socket)
            seen_ports.add(port)
            sp = page.place(socket)
            if sp and sp.colorset in net.colorsets and ports[port].colorset in net.colorsets:
                if net.colorsets[sp.colorset] != net.colorsets[ports[port].colorset]:
                    err("SocketColorsetMismatch", sloc, f"{socket}:{sp.colorset} vs {port}:{ports[port].colorset}")
        for p in sub.ports():
            if p.name not in seen_ports:
                err("PortNotAssigned", sloc, f"port {sub.name}.{p.name} has no socket")


def _has_wildcard(p) -> bool:
    if isinstance(p, Wildcard):
        return True
    if isinstance(p, PTuple):
        return any(_has_wildcard(x) for x in p.items)
    if isinstance(p, PRec):
        return any(_has_wildcard(x) for _, x in p.fields)
    return False


def _check_pattern(p, decl, var_decls) -> list[str]:
    if isinstance(p, PVar):
        vd = var_decls.get(p.name)
        if vd is not None and vd != decl:
            return [f"{p.name} : {vd.name or vd} does not match {decl.name or decl}"]
        return []
    if isinstance(p, PInt):
        return [] if cs.contains(decl, p.n) else [f"{p.n} not in {decl.name or decl}"]
    if isinstance(p, PStr):
        return [] if isinstance(decl, cs.Text) else [f"string where {decl.name or decl} expected"]
    if isinstance(p, PEnum):
        return [] if isinstance(decl, cs.Enum) and p.name in decl.constants else [f"{p.name} not in {decl.name or decl}"]
    if isinstance(p, PUnit):
        return [] if isinstance(decl, cs.Unit) else [f"() where {decl.name or decl} expected"]
    if isinstance(p, PTuple):
        if not isinstance(decl, cs.Product) or len(decl.components) != len(p.items):
            return [f"tuple of {len(p.items)} where {decl.name or decl} expected"]
        return [m for q, d in zip(p.items, decl.components) for m in _check_pattern(q, d, var_decls)]
    if isinstance(p, PRec):
        if not isinstance(decl, cs.Record) or {n for n, _ in p.fields} != set(decl.field_names):
            return [f"record pattern does not match {decl.name or decl}"]
        fields = dict(decl.fields)
        return [m for n, q in p.fields for m in _check_pattern(q, fields[n], var_decls)]
    return []


def _check_expr(e, decl, var_decls) -> list[str]:
    """Best-effort static check; computed subexpressions are not inferred."""
    from . import inscription as ins

    if isinstance(e, MsE):
        return [m for _, x in e.terms for m in _check_expr(x, decl, var_decls)]
    if isinstance(e, ins.Var):
        vd = var_decls.get(e.name)
        if vd is not None and vd != decl:
            return [f"{e.name} : {vd.name or vd} does not match {decl.name or decl}"]
        return []
    if isinstance(e, ins.IntLit):
        return [] if cs.contains(decl, e.n) else [f"{e.n} not in {decl.name or decl}"]
    if isinstance(e, ins.StrLit):
        return [] if isinstance(decl, cs.Text) else [f"string where {decl.name or decl} expected"]
    if isinstance(e, ins.UnitLit):
        return [] if isinstance(decl, cs.Unit) else [f"() where {decl.name or decl} expected"]
    if isinstance(e, ins.EnumLit):
        return [] if isinstance(decl, cs.Enum) and e.name in decl.constants else [f"{e.name} not in {decl.name or decl}"]
    if isinstance(e, ins.TupleE):
        if not isinstance(decl, cs.Product) or len(decl.components) != len(e.items):
            return [f"tuple of {len(e.items)} where {decl.name or decl} expected"]
        return [m for x, d in zip(e.items, decl.components) for m in _check_expr(x, d, var_decls)]
    if isinstance(e, ins.RecE):
        if not isinstance(decl, cs.Record) or {n for n, _ in e.fields} != set(decl.field_names):
            return [f"record does not match {decl.name or decl}"]
        fields = dict(decl.fields)
        return [m for n, x in e.fields for m in _check_expr(x, fields[n], var_decls)]
    if isinstance(e, ins.ListE):
        if not isinstance(decl, cs.ListOf):
            return [f"list where {decl.name or decl} expected"]
        if decl.max_len is not None and len(e.items) > decl.max_len:
            return [f"list literal longer than {decl.max_len}"]
        return [m for x in e.items for m in _check_expr(x, decl.element, var_decls)]
    return []


# ---------------------------------------------------------------- flattening


def flatten(net: HierNet) -> FlatNet:
    """Instantiate every substitution transition; fuse sockets with ports.

    Names are qualified by instance path: ``Root.place`` on the root page,
    ``Root/Subst.place`` one level down, and so on.
    """
    places: list[FlatPlace] = []
    transitions: list = []

    def instantiate(page_name: str, path: str, fused: Mapping[str, str]):
        page = net.pages[page_name]
        local: dict[str, str] = {}
        for p in page.places:
            if p.name in fused:
                local[p.name] = fused[p.name]
                continue
            q = f"{path}.{p.name}"
            local[p.name] = q
            places.append(FlatPlace(q, net.colorsets[p.colorset], p.init))
        for t in page.transitions:
            transitions.append(
                (
                    f"{path}.{t.name}",
                    t.guard,
                    [(local[a.place], a.inscription) for a in t.inputs],
                    [(local[a.place], a.inscription) for a in t.outputs],
                )
            )
        for s in page.substitutions:
            sub_fused = {port: local[socket] for socket, port in s.socket_map}
            instantiate(s.subpage, f"{path}/{s.name}", sub_fused)

    instantiate(net.root, net.root, {})
    return FlatNet(places, transitions, net.var_decls(), net.functions)


# ---------------------------------------------------------------- markings


def initial_marking(fn: FlatNet, rng=None) -> Marking:
    rng = rng if rng is not None else random.Random(0)
    sets = []
    for p in fn.places:
        try:
            ms = evaluate_multiset(p.init, {}, rng, fn.functions)
        except EvalError as e:
            raise EvalError(f"initial marking of {p.name}: {e}") from e
        sets.append(_conform(p, ms, None))
    return Marking(fn.place_names, tuple(sets))


def _conform(place: FlatPlace, ms: MultiSet, transition: str | None) -> MultiSet:
    decl = place.colorset
    needs_norm = isinstance(decl, (cs.Record, cs.Product, cs.ListOf, cs.Enum))
    counts = {}
    for v, n in ms.items():
        if not cs.contains(decl, v):
            raise TokenTypeError(place.name, v, transition)
        if needs_norm:
            v = cs.normalize(decl, v)
        counts[v] = counts.get(v, 0) + n
    return MultiSet._trusted(counts) if needs_norm else ms


def type_sound(fn: FlatNet, m: Marking) -> bool:
    return all(
        cs.contains(p.colorset, v) for p, s in zip(fn.places, m.sets) for v in s.values()
    )


# ---------------------------------------------------------------- enabling


def enabled_bindings(fn: FlatNet, m: Marking, t: FlatTransition | str, cap: int = DEFAULT_BINDING_CAP) -> BindingSet:
    """All enabled bindings of ``t`` in canonical order, truncated at ``cap``."""
    if isinstance(t, str):
        t = fn.transition(t)
    found: dict = {}
    for partial, demand in _match_inputs(t, m):
        for b in _complete(fn, t, partial, cap):
            if not _demand_ok(m, demand):
                continue
            if t.guard is not None and not _guard(fn, t, b):
                continue
            binding = Binding(b)
            found.setdefault(binding, None)
    out = sorted(found, key=Binding.sort_key)
    truncated = len(out) > cap
    return BindingSet(out[:cap], truncated)


def _match_inputs(t: FlatTransition, m: Marking):
    """Backtracking search assigning a token to every input term.

    Yields (partial binding, per-place demand) with demand summed over all
    terms reading the same place.
    """
    terms = t.terms
    sets = m.sets
    n = len(terms)

    def search(k, b, demand):
        if k == n:
            yield b, demand
            return
        pidx, count, pat = terms[k]
        for v, have in sets[pidx]._counts.items():
            if have < count:
                continue
            nb = dict(b)
            if not _match(pat, v, nb):
                continue
            if any(not t.var_ok(x, nb[x]) for x in nb if x not in b):
                continue
            nd = dict(demand)
            pd = nd[pidx] = dict(nd.get(pidx, {}))
            pd[v] = pd.get(v, 0) + count
            yield from search(k + 1, nb, nd)

    yield from search(0, {}, {})


def _complete(fn: FlatNet, t: FlatTransition, partial: dict, cap: int):
    if not t.fallback_vars:
        yield partial
        return
    domains = []
    for v in t.fallback_vars:
        decl = t.variables.get(v)
        if decl is None:
            raise EnumerationCapExceeded(t.name, v, float("inf"), cap)
        try:
            domains.append(cs.enumerate_values(decl, cap))
        except cs.CapExceeded as e:
            raise EnumerationCapExceeded(t.name, v, e.cardinality, cap) from None
    for combo in itertools.product(*domains):
        b = dict(partial)
        b.update(zip(t.fallback_vars, combo))
        yield b


def _demand_ok(m: Marking, demand: dict) -> bool:
    for pidx, want in demand.items():
        have = m.sets[pidx]._counts
        for v, n in want.items():
            if have.get(v, 0) < n:
                return False
    return True


def _guard(fn: FlatNet, t: FlatTransition, b: Mapping) -> bool:
    r = evaluate(t.guard, b, None, fn.functions)
    if not isinstance(r, bool):
        raise EvalError(f"guard of {t.name} evaluated to {r!r}")
    return r


def enabled_events(fn: FlatNet, m: Marking, cap: int = DEFAULT_BINDING_CAP) -> list[NetEvent]:
    out = []
    for t in fn.transitions:
        for b in enabled_bindings(fn, m, t, cap).bindings:
            out.append(NetEvent(t.name, b))
    return out


# ---------------------------------------------------------------- firing


def consumed(fn: FlatNet, t: FlatTransition, b: Mapping) -> dict[int, MultiSet]:
    """Per-place-index multiset removed by firing ``t`` under ``b``."""
    out: dict[int, dict] = {}
    for pidx, count, pat in t.terms:
        v = _instantiate(pat, b)
        d = out.setdefault(pidx, {})
        d[v] = d.get(v, 0) + count
    return {k: MultiSet._trusted(v) for k, v in out.items()}


def _instantiate(p, b):
    if isinstance(p, PVar):
        return b[p.name]
    if isinstance(p, PInt):
        return p.n
    if isinstance(p, PStr):
        return p.s
    if isinstance(p, PUnit):
        return ()
    if isinstance(p, PEnum):
        return cs.EnumConst(p.name, p.ordinal)
    if isinstance(p, PTuple):
        return tuple(_instantiate(x, b) for x in p.items)
    if isinstance(p, PRec):
        return cs.Rec((n, _instantiate(x, b)) for n, x in p.fields)
    raise NotEnabled("wildcard patterns do not determine consumed tokens")


def produced(fn: FlatNet, t: FlatTransition, b: Mapping, rng=None) -> dict[int, MultiSet]:
    """Per-place-index multiset added by firing; tokens are type-checked."""
    out: dict[int, MultiSet] = {}
    for pidx, e in t.out_arcs:
        ms = evaluate_multiset(e, b, rng, fn.functions)
        ms = _conform(fn.places[pidx], ms, t.name)
        out[pidx] = out[pidx] + ms if pidx in out else ms
    return out


def is_enabled(fn: FlatNet, m: Marking, t: FlatTransition, b: Mapping) -> bool:
    if set(b) != set(t.variables):
        return False
    if any(not t.var_ok(x, v) for x, v in b.items()):
        return False
    try:
        cons = consumed(fn, t, b)
    except (KeyError, NotEnabled):
        return False
    if any(not (ms <= m.sets[i]) for i, ms in cons.items()):
        return False
    return t.guard is None or _guard(fn, t, b)


def apply_delta(m: Marking, minus: Mapping[int, MultiSet], plus: Mapping[int, MultiSet]) -> Marking:
    sets = list(m.sets)
    for i, ms in minus.items():
        sets[i] = sets[i] - ms
    for i, ms in plus.items():
        sets[i] = sets[i] + ms
    return Marking(m.names, tuple(sets))


def fire(fn: FlatNet, m: Marking, ev: NetEvent, rng=None) -> Marking:
    """Fire ``ev`` in ``m``; raises NotEnabled or TokenTypeError."""
    t = fn.transition(ev.transition)
    if not is_enabled(fn, m, t, ev.binding):
        raise NotEnabled(f"{ev} is not enabled")
    minus = consumed(fn, t, ev.binding)
    plus = produced(fn, t, ev.binding, rng)
    m2 = apply_delta(m, minus, plus)
    if DEBUG:
        for i, (before, after) in enumerate(zip(m.sets, m2.sets)):
            for v in set(before.values()) | set(after.values()):
                assert after.count(v) == before.count(v) - minus.get(i, EMPTY).count(v) + plus.get(i, EMPTY).count(v)
    return m2


def describe_expr(e: Expr | None) -> str:
    return "" if e is None else print_expr(e)
