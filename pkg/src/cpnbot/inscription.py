"""Arc and guard inscriptions: a small CPN-ML subset.

Grammar (lowest precedence first)::

    msexpr  := term ("++" term)* | "empty"
    term    := [expr "`"] expr
    expr    := orelse
    orelse  := andalso ("orelse" andalso)*
    andalso := cmp ("andalso" cmp)*
    cmp     := cons [("=" | "<>" | "<" | "<=" | ">" | ">=") cons]
    cons    := add ["::" cons]
    add     := mul (("+" | "-") mul)*
    mul     := unary (("*" | "div" | "mod") unary)*
    unary   := "not" unary | "~" unary | atom
    atom    := int | string | "true" | "false" | ident | ident "(" args ")"
             | "()" | "(" expr ")" | "(" expr ("," expr)+ ")"
             | "{" ident "=" expr ("," ident "=" expr)* "}"
             | "[" [expr ("," expr)*] "]"

``div`` and ``mod`` floor toward negative infinity.
"""

from __future__ import annotations

import re
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

from .colorsets import EMPTY, EnumConst, Lst, MultiSet, Rec


class InscriptionError(Exception):
    pass


class CPNSyntaxError(InscriptionError):
    def __init__(self, line: int, col: int, expected: str, text: str = ""):
        super().__init__(f"{line}:{col}: expected {expected}" + (f" in {text!r}" if text else ""))
        self.line = line
        self.col = col
        self.expected = expected


class EvalError(InscriptionError):
    pass


class UnboundVariable(EvalError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class DivisionByZero(EvalError):
    pass


class TypeMismatch(EvalError):
    def __init__(self, expected: str, got: Any):
        super().__init__(f"expected {expected}, got {got!r}")
        self.expected = expected
        self.got = got


class NotAPattern(InscriptionError):
    def __init__(self, subexpr: Expr):
        super().__init__(f"not a pattern: {print_expr(subexpr)}")
        self.subexpr = subexpr


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class IntLit:
    n: int


@dataclass(frozen=True)
class BoolLit:
    b: bool


@dataclass(frozen=True)
class StrLit:
    s: str


@dataclass(frozen=True)
class EnumLit:
    name: str
    ordinal: int = field(default=0, compare=False)


@dataclass(frozen=True)
class UnitLit:
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class TupleE:
    items: tuple


@dataclass(frozen=True)
class RecE:
    fields: tuple  # of (name, Expr)


@dataclass(frozen=True)
class ListE:
    items: tuple


@dataclass(frozen=True)
class Cons:
    head: Any
    tail: Any


@dataclass(frozen=True)
class Arith:
    op: str
    lhs: Any
    rhs: Any


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Any
    rhs: Any


@dataclass(frozen=True)
class BoolOp:
    op: str  # andalso | orelse | not
    args: tuple


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


@dataclass(frozen=True)
class MsE:
    terms: tuple  # of (count Expr, value Expr)


Expr = Any

WILDCARD = "_"


# ---------------------------------------------------------------- patterns


@dataclass(frozen=True)
class Wildcard:
    pass


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PInt:
    n: int


@dataclass(frozen=True)
class PStr:
    s: str


@dataclass(frozen=True)
class PEnum:
    name: str
    ordinal: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PTuple:
    items: tuple


@dataclass(frozen=True)
class PRec:
    fields: tuple


@dataclass(frozen=True)
class PUnit:
    pass


Pattern = Any


# ---------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>\+\+|::|<>|<=|>=|[-+*=<>(){}\[\],`~])
    """,
    re.VERBOSE,
)

KEYWORDS = {"div", "mod", "andalso", "orelse", "not", "true", "false", "empty"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise CPNSyntaxError(line, pos - line_start + 1, "a token", text)
        kind = m.lastgroup
        lexeme = m.group()
        if kind != "ws":
            if kind == "ident" and lexeme in KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, lexeme, line, pos - line_start + 1))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            line_start = pos + lexeme.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str, constants: Mapping[str, int]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.constants = constants

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def at(self, text: str) -> bool:
        t = self.toks[self.i]
        return t.text == text and t.kind in ("op", "kw")

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            self.fail(repr(text))
        return self.take()

    def fail(self, expected: str):
        t = self.peek()
        raise CPNSyntaxError(t.line, t.col, expected, self.text)

    def msexpr(self):
        if self.at("empty"):
            self.take()
            return MsE(())
        terms = [self.term()]
        ms = terms[0][0] is not None
        while self.at("++"):
            self.take()
            terms.append(self.term())
            ms = True
        if not ms:
            return terms[0][1]
        return MsE(tuple((IntLit(1) if c is None else c, v) for c, v in terms))

    def term(self):
        e = self.expr()
        if self.at("`"):
            self.take()
            return (e, self.expr())
        return (None, e)

    def expr(self):
        return self.orelse()

    def orelse(self):
        e = self.andalso()
        while self.at("orelse"):
            self.take()
            e = BoolOp("orelse", (e, self.andalso()))
        return e

    def andalso(self):
        e = self.cmp()
        while self.at("andalso"):
            self.take()
            e = BoolOp("andalso", (e, self.cmp()))
        return e

    def cmp(self):
        e = self.cons()
        for op in ("=", "<>", "<=", ">=", "<", ">"):
            if self.at(op):
                self.take()
                return Cmp(op, e, self.cons())
        return e

    def cons(self):
        e = self.add()
        if self.at("::"):
            self.take()
            return Cons(e, self.cons())
        return e

    def add(self):
        e = self.mul()
        while self.at("+") or self.at("-"):
            op = self.take().text
            e = Arith(op, e, self.mul())
        return e

    def mul(self):
        e = self.unary()
        while self.at("*") or self.at("div") or self.at("mod"):
            op = self.take().text
            e = Arith(op, e, self.unary())
        return e

    def unary(self):
        if self.at("not"):
            self.take()
            return BoolOp("not", (self.unary(),))
        if self.at("~"):
            self.take()
            if self.peek().kind == "int":
                return IntLit(-int(self.take().text))
            return Arith("-", IntLit(0), self.unary())
        return self.atom()

    def atom(self):
        t = self.peek()
        if t.kind == "int":
            self.take()
            return IntLit(int(t.text))
        if t.kind == "str":
            self.take()
            return StrLit(re.sub(r"\\(.)", r"\1", t.text[1:-1]))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.take()
            return BoolLit(t.text == "true")
        if t.kind == "ident":
            self.take()
            if self.at("("):
                self.take()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.take()
                        args.append(self.expr())
                self.expect(")")
                return Call(t.text, tuple(args))
            if t.text in self.constants:
                return EnumLit(t.text, self.constants[t.text])
            return Var(t.text)
        if self.at("("):
            self.take()
            if self.at(")"):
                self.take()
                return UnitLit()
            items = [self.expr()]
            while self.at(","):
                self.take()
                items.append(self.expr())
            self.expect(")")
            return items[0] if len(items) == 1 else TupleE(tuple(items))
        if self.at("{"):
            self.take()
            fields = []
            while True:
                name = self.peek()
                if name.kind != "ident":
                    self.fail("a record field name")
                self.take()
                self.expect("=")
                fields.append((name.text, self.expr()))
                if not self.at(","):
                    break
                self.take()
            self.expect("}")
            return RecE(tuple(fields))
        if self.at("["):
            self.take()
            items = []
            if not self.at("]"):
                items.append(self.expr())
                while self.at(","):
                    self.take()
                    items.append(self.expr())
            self.expect("]")
            return ListE(tuple(items))
        self.fail("an expression")


def parse_expr(text: str, constants: Mapping[str, int] | None = None) -> Expr:
    """Parse an arc inscription, guard or initial-marking expression.

    ``constants`` maps enum constant names to their ordinals; any other
    identifier parses as a variable.
    """
    p = _Parser(text, constants or {})
    e = p.msexpr()
    if p.peek().kind != "eof":
        p.fail("end of input")
    return e


# ---------------------------------------------------------------- printer

_PREC = {"orelse": 1, "andalso": 2, "cmp": 3, "::": 4, "+": 5, "-": 5, "*": 6, "div": 6, "mod": 6}


def print_expr(e: Expr) -> str:
    if isinstance(e, MsE):
        if not e.terms:
            return "empty"
        return " ++ ".join(f"{_p(c, 7)}`{_p(v, 0)}" for c, v in e.terms)
    return _p(e, 0)


def _p(e: Expr, ctx: int) -> str:
    def wrap(prec, s):
        return f"({s})" if prec < ctx else s

    if isinstance(e, IntLit):
        return str(e.n) if e.n >= 0 else f"~{-e.n}"
    if isinstance(e, BoolLit):
        return "true" if e.b else "false"
    if isinstance(e, StrLit):
        return '"' + e.s.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(e, EnumLit):
        return e.name
    if isinstance(e, UnitLit):
        return "()"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, TupleE):
        return "(" + ", ".join(_p(x, 0) for x in e.items) + ")"
    if isinstance(e, RecE):
        return "{" + ", ".join(f"{n}={_p(x, 0)}" for n, x in e.fields) + "}"
    if isinstance(e, ListE):
        return "[" + ", ".join(_p(x, 0) for x in e.items) + "]"
    if isinstance(e, Call):
        return f"{e.fn}(" + ", ".join(_p(x, 0) for x in e.args) + ")"
    if isinstance(e, Cons):
        return wrap(4, f"{_p(e.head, 5)} :: {_p(e.tail, 4)}")
    if isinstance(e, Arith):
        prec = _PREC[e.op]
        return wrap(prec, f"{_p(e.lhs, prec)} {e.op} {_p(e.rhs, prec + 1)}")
    if isinstance(e, Cmp):
        return wrap(3, f"{_p(e.lhs, 4)} {e.op} {_p(e.rhs, 4)}")
    if isinstance(e, BoolOp):
        if e.op == "not":
            return wrap(7, f"not {_p(e.args[0], 7)}")
        prec = _PREC[e.op]
        return wrap(prec, f"{_p(e.args[0], prec)} {e.op} {_p(e.args[1], prec + 1)}")
    if isinstance(e, MsE):
        return "(" + print_expr(e) + ")"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------- host functions


@dataclass(frozen=True)
class HostFn:
    arity: int
    pure: bool
    fn: Callable


class HostFnRegistry(Mapping):
    """Name -> HostFn. Impure functions receive the rng as first argument."""

    def __init__(self, fns: Mapping[str, HostFn] | None = None):
        self._fns = dict(fns or {})

    def __getitem__(self, name: str) -> HostFn:
        return self._fns[name]

    def __iter__(self):
        return iter(self._fns)

    def __len__(self) -> int:
        return len(self._fns)

    def register(self, name: str, arity: int, fn: Callable, pure: bool = True) -> None:
        self._fns[name] = HostFn(arity, pure, fn)

    def extended(self, other: Mapping[str, HostFn]) -> HostFnRegistry:
        return HostFnRegistry({**self._fns, **other})


def _int(v: Any, what: str = "int") -> int:
    if type(v) is not int:
        raise TypeMismatch(what, v)
    return v


def _avg2(a, b):
    return (_int(a) + _int(b)) // 2


def _uniform(rng, lo, hi):
    lo, hi = _int(lo), _int(hi)
    if lo > hi:
        raise EvalError(f"uniform({lo}, {hi}): empty interval")
    return rng.randint(lo, hi)


def _clamp(v, lo, hi):
    return max(_int(lo), min(_int(hi), _int(v)))


def _nth(lst, i):
    if not isinstance(lst, Lst):
        raise TypeMismatch("list", lst)
    i = _int(i)
    if not 0 <= i < len(lst.items):
        raise EvalError(f"nth: index {i} out of range for list of length {len(lst.items)}")
    return lst.items[i]


def _length(lst):
    if not isinstance(lst, Lst):
        raise TypeMismatch("list", lst)
    return len(lst.items)


BUILTINS = HostFnRegistry(
    {
        "avg2": HostFn(2, True, _avg2),
        "uniform": HostFn(2, False, _uniform),
        "clamp": HostFn(3, True, _clamp),
        "nth": HostFn(2, True, _nth),
        "length": HostFn(1, True, _length),
    }
)


# ---------------------------------------------------------------- evaluation


def evaluate(e: Expr, binding: Mapping[str, Any], rng=None, fns: Mapping[str, HostFn] = BUILTINS) -> Any:
    """Evaluate ``e`` under ``binding``.

    Returns a color value, a bool, or a MultiSet for multiset expressions.
    ``rng`` needs a ``randint(lo, hi)`` method and is only consulted by
    impure host functions.
    """
    ev = _Evaluator(binding, rng, fns)
    return ev.eval(e)


def evaluate_multiset(e: Expr, binding: Mapping[str, Any], rng=None, fns: Mapping[str, HostFn] = BUILTINS) -> MultiSet:
    """Arc-position evaluation: a bare value denotes a singleton multiset."""
    if e is None:
        return EMPTY
    v = evaluate(e, binding, rng, fns)
    if isinstance(v, MultiSet):
        return v
    if isinstance(v, bool):
        raise TypeMismatch("a token value", v)
    return MultiSet.singleton(v)


class _Evaluator:
    def __init__(self, binding, rng, fns):
        self.binding = binding
        self.rng = rng
        self.fns = fns

    def eval(self, e):
        m = getattr(self, "_" + type(e).__name__, None)
        if m is None:
            raise TypeError(f"not an expression: {e!r}")
        return m(e)

    def _IntLit(self, e):
        return e.n

    def _BoolLit(self, e):
        return e.b

    def _StrLit(self, e):
        return e.s

    def _EnumLit(self, e):
        return EnumConst(e.name, e.ordinal)

    def _UnitLit(self, e):
        return ()

    def _Var(self, e):
        try:
            return self.binding[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None

    def _TupleE(self, e):
        return tuple(self.eval(x) for x in e.items)

    def _RecE(self, e):
        return Rec((n, self.eval(x)) for n, x in e.fields)

    def _ListE(self, e):
        return Lst(tuple(self.eval(x) for x in e.items))

    def _Cons(self, e):
        h = self.eval(e.head)
        t = self.eval(e.tail)
        if not isinstance(t, Lst):
            raise TypeMismatch("list", t)
        return Lst((h,) + t.items)

    def _Arith(self, e):
        a = self.eval(e.lhs)
        b = self.eval(e.rhs)
        if type(a) is not int or type(b) is not int:
            raise TypeMismatch("int", b if type(a) is int else a)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise DivisionByZero(print_expr(e))
        return a // b if e.op == "div" else a % b

    def _Cmp(self, e):
        a = self.eval(e.lhs)
        b = self.eval(e.rhs)
        if e.op == "=":
            return a == b
        if e.op == "<>":
            return a != b
        if type(a) is not int or type(b) is not int:
            raise TypeMismatch("int", b if type(a) is int else a)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[e.op]

    def _BoolOp(self, e):
        if e.op == "not":
            return not self._bool(e.args[0])
        if e.op == "andalso":
            return self._bool(e.args[0]) and self._bool(e.args[1])
        return self._bool(e.args[0]) or self._bool(e.args[1])

    def _bool(self, x):
        v = self.eval(x)
        if not isinstance(v, bool):
            raise TypeMismatch("bool", v)
        return v

    def _Call(self, e):
        try:
            h = self.fns[e.fn]
        except KeyError:
            raise EvalError(f"unknown function {e.fn!r}") from None
        if len(e.args) != h.arity:
            raise EvalError(f"{e.fn} expects {h.arity} arguments, got {len(e.args)}")
        args = [self.eval(x) for x in e.args]
        if h.pure:
            return h.fn(*args)
        if self.rng is None:
            raise EvalError(f"{e.fn} needs a random source")
        return h.fn(self.rng, *args)

    def _MsE(self, e):
        counts: dict = {}
        for c, x in e.terms:
            n = self.eval(c)
            if type(n) is not int or n < 0:
                raise TypeMismatch("non-negative count", n)
            v = self.eval(x)
            if isinstance(v, MultiSet):
                for w, k in v.items():
                    counts[w] = counts.get(w, 0) + n * k
            elif n:
                counts[v] = counts.get(v, 0) + n
        return MultiSet({v: n for v, n in counts.items() if n})


# ---------------------------------------------------------------- variables & patterns


def free_variables(e: Expr) -> set[str]:
    out: set[str] = set()
    _collect_vars(e, out)
    out.discard(WILDCARD)
    return out


def _collect_vars(e, out):
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, (TupleE, ListE)):
        for x in e.items:
            _collect_vars(x, out)
    elif isinstance(e, RecE):
        for _, x in e.fields:
            _collect_vars(x, out)
    elif isinstance(e, Cons):
        _collect_vars(e.head, out)
        _collect_vars(e.tail, out)
    elif isinstance(e, (Arith, Cmp)):
        _collect_vars(e.lhs, out)
        _collect_vars(e.rhs, out)
    elif isinstance(e, (BoolOp, Call)):
        for x in e.args:
            _collect_vars(x, out)
    elif isinstance(e, MsE):
        for c, x in e.terms:
            _collect_vars(c, out)
            _collect_vars(x, out)


def calls(e: Expr) -> set[str]:
    """Names of host functions called anywhere in ``e``."""
    out: set[str] = set()

    def walk(x):
        if isinstance(x, Call):
            out.add(x.fn)
        for child in _children(x):
            walk(child)

    walk(e)
    return out


def _children(e):
    if isinstance(e, (TupleE, ListE)):
        return e.items
    if isinstance(e, RecE):
        return tuple(x for _, x in e.fields)
    if isinstance(e, Cons):
        return (e.head, e.tail)
    if isinstance(e, (Arith, Cmp)):
        return (e.lhs, e.rhs)
    if isinstance(e, (BoolOp, Call)):
        return e.args
    if isinstance(e, MsE):
        return tuple(x for term in e.terms for x in term)
    return ()


def expr_to_pattern(e: Expr) -> Pattern:
    if isinstance(e, Var):
        return Wildcard() if e.name == WILDCARD else PVar(e.name)
    if isinstance(e, IntLit):
        return PInt(e.n)
    if isinstance(e, StrLit):
        return PStr(e.s)
    if isinstance(e, EnumLit):
        return PEnum(e.name, e.ordinal)
    if isinstance(e, UnitLit):
        return PUnit()
    if isinstance(e, TupleE):
        p = PTuple(tuple(expr_to_pattern(x) for x in e.items))
    elif isinstance(e, RecE):
        p = PRec(tuple((n, expr_to_pattern(x)) for n, x in e.fields))
    else:
        raise NotAPattern(e)
    names = pattern_variables(p)
    if len(names) != len(set(names)):
        raise NotAPattern(e)
    return p


def pattern_to_expr(p: Pattern) -> Expr:
    if isinstance(p, Wildcard):
        return Var(WILDCARD)
    if isinstance(p, PVar):
        return Var(p.name)
    if isinstance(p, PInt):
        return IntLit(p.n)
    if isinstance(p, PStr):
        return StrLit(p.s)
    if isinstance(p, PEnum):
        return EnumLit(p.name, p.ordinal)
    if isinstance(p, PUnit):
        return UnitLit()
    if isinstance(p, PTuple):
        return TupleE(tuple(pattern_to_expr(x) for x in p.items))
    if isinstance(p, PRec):
        return RecE(tuple((n, pattern_to_expr(x)) for n, x in p.fields))
    raise TypeError(p)


def pattern_variables(p: Pattern) -> list[str]:
    if isinstance(p, PVar):
        return [p.name]
    if isinstance(p, PTuple):
        return [n for x in p.items for n in pattern_variables(x)]
    if isinstance(p, PRec):
        return [n for _, x in p.fields for n in pattern_variables(x)]
    return []


class _NoMatch:
    def __repr__(self):
        return "NoMatch"

    def __bool__(self):
        return False


NoMatch = _NoMatch()


def match_token(p: Pattern, v: Any, partial: Mapping[str, Any] | None = None):
    """Extend ``partial`` so that ``p`` matches ``v``; NoMatch on failure."""
    out = dict(partial or {})
    if _match(p, v, out):
        return out
    return NoMatch


def _match(p, v, out) -> bool:
    if isinstance(p, PVar):
        if p.name in out:
            return out[p.name] == v
        out[p.name] = v
        return True
    if isinstance(p, Wildcard):
        return True
    if isinstance(p, PInt):
        return type(v) is int and v == p.n
    if isinstance(p, PStr):
        return type(v) is str and v == p.s
    if isinstance(p, PEnum):
        return isinstance(v, EnumConst) and v.name == p.name
    if isinstance(p, PUnit):
        return v == () and type(v) is tuple
    if isinstance(p, PTuple):
        return (
            type(v) is tuple
            and len(v) == len(p.items)
            and all(_match(q, x, out) for q, x in zip(p.items, v))
        )
    if isinstance(p, PRec):
        if not isinstance(v, Rec) or len(v) != len(p.fields):
            return False
        for n, q in p.fields:
            if n not in v or not _match(q, v[n], out):
                return False
        return True
    return False


def arc_terms(e: Expr) -> list[tuple[int, Pattern]]:
    """Split an input-arc inscription into (count, pattern) terms.

    Counts must be integer literals; values must be patterns.
    """
    if isinstance(e, MsE):
        terms = []
        for c, x in e.terms:
            if not isinstance(c, IntLit) or c.n < 0:
                raise NotAPattern(c)
            if c.n:
                terms.append((c.n, expr_to_pattern(x)))
        return terms
    return [(1, expr_to_pattern(e))]


def multiset_of(values: Iterable[Any]) -> MultiSet:
    return MultiSet(list(values))
