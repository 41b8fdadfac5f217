"""Color sets, token values and multisets.

Token values are plain Python objects wherever that is unambiguous:

    Int        -> int
    Tuple      -> tuple (arity >= 2)
    Unit       -> ()
    Str        -> str
    Rec        -> Rec   (ordered name/value pairs, equality by content)
    Lst        -> Lst
    EnumConst  -> EnumConst

Canonical value order: ints ascending, tuples and records lexicographic by
component order, lists by length then lexicographically, enum constants by
declaration order, strings by code point.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, Union


class ColorSetError(Exception):
    pass


class CapExceeded(ColorSetError):
    def __init__(self, cardinality: float, cap: int):
        super().__init__(f"color set has {cardinality} members, cap is {cap}")
        self.cardinality = cardinality
        self.cap = cap


class InsufficientTokens(ColorSetError):
    def __init__(self, value: Any, have: int, need: int):
        super().__init__(f"need {need}`{render_value(value)}, have {have}")
        self.value = value
        self.have = have
        self.need = need


# ---------------------------------------------------------------- values


class Rec(Mapping):
    """Record value. Field order is kept for rendering and ordering only."""

    __slots__ = ("_items", "_hash")

    def __init__(self, items: Iterable[tuple[str, Any]] | Mapping[str, Any]):
        if isinstance(items, Mapping):
            items = items.items()
        self._items = tuple(items)
        self._hash = hash(frozenset(self._items))

    def __getitem__(self, key: str) -> Any:
        for name, value in self._items:
            if name == key:
                return value
        raise KeyError(key)

    def __iter__(self) -> Iterator[str]:
        return (name for name, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Rec):
            return NotImplemented
        return self._hash == other._hash and dict(self._items) == dict(other._items)

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return render_value(self)

    def reordered(self, names: Iterable[str]) -> Rec:
        return Rec((n, self[n]) for n in names)


@dataclass(frozen=True)
class Lst:
    items: tuple = ()

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __repr__(self) -> str:
        return render_value(self)


@dataclass(frozen=True)
class EnumConst:
    name: str
    ordinal: int = field(default=0, compare=False)

    def __repr__(self) -> str:
        return self.name


ColorValue = Union[int, tuple, str, Rec, Lst, EnumConst]


def sort_key(v: Any) -> tuple:
    """Total order key implementing the canonical value order."""
    if isinstance(v, bool):
        return (0, int(v))
    if isinstance(v, int):
        return (0, v)
    if isinstance(v, tuple):
        return (1, tuple(sort_key(x) for x in v))
    if isinstance(v, Rec):
        return (2, tuple(sort_key(x) for x in v.values()))
    if isinstance(v, Lst):
        return (3, len(v.items), tuple(sort_key(x) for x in v.items))
    if isinstance(v, EnumConst):
        return (4, v.ordinal, v.name)
    if isinstance(v, str):
        return (5, v)
    raise TypeError(f"not a color value: {v!r}")


def render_value(v: Any) -> str:
    """Render a value in inscription syntax (reparseable)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v) if v >= 0 else f"~{-v}"
    if isinstance(v, tuple):
        return "(" + ",".join(render_value(x) for x in v) + ")"
    if isinstance(v, Rec):
        return "{" + ",".join(f"{k}={render_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, Lst):
        return "[" + ",".join(render_value(x) for x in v.items) + "]"
    if isinstance(v, EnumConst):
        return v.name
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"not a color value: {v!r}")


# ---------------------------------------------------------------- declarations


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.lo > self.hi:
            raise ColorSetError(f"empty int range {self.lo}..{self.hi}")


@dataclass(frozen=True)
class Product:
    components: tuple
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 2:
            raise ColorSetError("product needs at least 2 components")


@dataclass(frozen=True)
class Record:
    fields: tuple  # of (name, decl)
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple((n, d) for n, d in self.fields))
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ColorSetError(f"duplicate record field in {names}")
        if not names:
            raise ColorSetError("record needs at least one field")

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)


@dataclass(frozen=True)
class ListOf:
    element: Any
    max_len: int | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.max_len is not None and self.max_len < 0:
            raise ColorSetError("negative list bound")


@dataclass(frozen=True)
class Enum:
    constants: tuple
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "constants", tuple(self.constants))
        if len(set(self.constants)) != len(self.constants):
            raise ColorSetError(f"duplicate enum constant in {self.constants}")
        if not self.constants:
            raise ColorSetError("enum needs at least one constant")

    def const(self, name: str) -> EnumConst:
        return EnumConst(name, self.constants.index(name))


@dataclass(frozen=True)
class Unit:
    name: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Text:
    name: str | None = field(default=None, compare=False)


ColorSetDecl = Union[IntRange, Product, Record, ListOf, Enum, Unit, Text]


def contains(decl: ColorSetDecl, v: Any) -> bool:
    if isinstance(decl, IntRange):
        return type(v) is int and decl.lo <= v <= decl.hi
    if isinstance(decl, Product):
        return (
            type(v) is tuple
            and len(v) == len(decl.components)
            and all(contains(d, x) for d, x in zip(decl.components, v))
        )
    if isinstance(decl, Record):
        return (
            isinstance(v, Rec)
            and set(v) == set(decl.field_names)
            and all(contains(d, v[n]) for n, d in decl.fields)
        )
    if isinstance(decl, ListOf):
        return (
            isinstance(v, Lst)
            and (decl.max_len is None or len(v.items) <= decl.max_len)
            and all(contains(decl.element, x) for x in v.items)
        )
    if isinstance(decl, Enum):
        return isinstance(v, EnumConst) and v.name in decl.constants
    if isinstance(decl, Unit):
        return v == () and type(v) is tuple
    if isinstance(decl, Text):
        return type(v) is str
    return False


def normalize(decl: ColorSetDecl, v: Any) -> Any:
    """Put record fields and enum ordinals in declaration form.

    Assumes contains(decl, v).
    """
    if isinstance(decl, Record):
        return Rec((n, normalize(d, v[n])) for n, d in decl.fields)
    if isinstance(decl, Product):
        return tuple(normalize(d, x) for d, x in zip(decl.components, v))
    if isinstance(decl, ListOf):
        return Lst(tuple(normalize(decl.element, x) for x in v.items))
    if isinstance(decl, Enum):
        return decl.const(v.name)
    return v


def cardinality(decl: ColorSetDecl) -> float:
    """Exact member count; ``math.inf`` for unbounded sets."""
    if isinstance(decl, IntRange):
        return decl.hi - decl.lo + 1
    if isinstance(decl, Product):
        return math.prod(cardinality(d) for d in decl.components)
    if isinstance(decl, Record):
        return math.prod(cardinality(d) for _, d in decl.fields)
    if isinstance(decl, ListOf):
        if decl.max_len is None:
            return math.inf
        n = cardinality(decl.element)
        if n == math.inf:
            return math.inf
        return sum(n**k for k in range(decl.max_len + 1))
    if isinstance(decl, Enum):
        return len(decl.constants)
    if isinstance(decl, Unit):
        return 1
    if isinstance(decl, Text):
        return math.inf
    raise TypeError(decl)


def enumerate_values(decl: ColorSetDecl, cap: int) -> list:
    """All members of ``decl`` in canonical order.

    Raises CapExceeded when the set is unbounded or larger than ``cap``.
    """
    n = cardinality(decl)
    if n > cap:
        raise CapExceeded(n, cap)
    return list(_iter_values(decl))


def _iter_values(decl: ColorSetDecl) -> Iterator:
    if isinstance(decl, IntRange):
        yield from range(decl.lo, decl.hi + 1)
    elif isinstance(decl, Product):
        yield from itertools.product(*(list(_iter_values(d)) for d in decl.components))
    elif isinstance(decl, Record):
        names = decl.field_names
        for combo in itertools.product(*(list(_iter_values(d)) for _, d in decl.fields)):
            yield Rec(zip(names, combo))
    elif isinstance(decl, ListOf):
        elems = list(_iter_values(decl.element))
        for k in range(decl.max_len + 1):
            for combo in itertools.product(elems, repeat=k):
                yield Lst(combo)
    elif isinstance(decl, Enum):
        for i, c in enumerate(decl.constants):
            yield EnumConst(c, i)
    elif isinstance(decl, Unit):
        yield ()
    else:
        raise CapExceeded(math.inf, 0)


def same_shape(a: ColorSetDecl, b: ColorSetDecl) -> bool:
    """Structural equality of declarations (names ignored)."""
    return a == b


# ---------------------------------------------------------------- multisets


class MultiSet:
    """Immutable multiset of color values. Counts are always positive."""

    __slots__ = ("_counts", "_hash", "_sorted")

    def __init__(self, entries: Mapping[Any, int] | Iterable[Any] = ()):
        counts: dict = {}
        if isinstance(entries, Mapping):
            for v, n in entries.items():
                if n < 0:
                    raise ValueError(f"negative count {n} for {v!r}")
                if n:
                    counts[v] = counts.get(v, 0) + n
        else:
            for v in entries:
                counts[v] = counts.get(v, 0) + 1
        self._counts = counts
        self._hash = None
        self._sorted = None

    @classmethod
    def _trusted(cls, counts: dict) -> MultiSet:
        ms = cls.__new__(cls)
        ms._counts = counts
        ms._hash = None
        ms._sorted = None
        return ms

    @classmethod
    def singleton(cls, v: Any, n: int = 1) -> MultiSet:
        return cls._trusted({v: n} if n else {})

    def count(self, v: Any) -> int:
        return self._counts.get(v, 0)

    def size(self) -> int:
        return sum(self._counts.values())

    def values(self) -> list:
        """Distinct values in canonical order."""
        return [v for v, _ in self.items()]

    def items(self) -> list[tuple[Any, int]]:
        if self._sorted is None:
            self._sorted = sorted(self._counts.items(), key=lambda kv: sort_key(kv[0]))
        return self._sorted

    def __len__(self) -> int:
        return len(self._counts)

    def __bool__(self) -> bool:
        return bool(self._counts)

    def __iter__(self):
        for v, n in self.items():
            for _ in range(n):
                yield v

    def __contains__(self, v: Any) -> bool:
        return v in self._counts

    def __add__(self, other: MultiSet) -> MultiSet:
        if not other._counts:
            return self
        if not self._counts:
            return other
        counts = dict(self._counts)
        for v, n in other._counts.items():
            counts[v] = counts.get(v, 0) + n
        return MultiSet._trusted(counts)

    def __sub__(self, other: MultiSet) -> MultiSet:
        if not other._counts:
            return self
        counts = dict(self._counts)
        for v, n in other._counts.items():
            have = counts.get(v, 0)
            if have < n:
                raise InsufficientTokens(v, have, n)
            if have == n:
                del counts[v]
            else:
                counts[v] = have - n
        return MultiSet._trusted(counts)

    def __le__(self, other: MultiSet) -> bool:
        oc = other._counts
        return all(oc.get(v, 0) >= n for v, n in self._counts.items())

    def __ge__(self, other: MultiSet) -> bool:
        return other <= self

    def scale(self, n: int) -> MultiSet:
        if n < 0:
            raise ValueError("scale factor must be non-negative")
        if n == 0:
            return EMPTY
        return MultiSet._trusted({v: c * n for v, c in self._counts.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiSet):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __str__(self) -> str:
        if not self._counts:
            return "empty"
        return " ++ ".join(f"{n}`{render_value(v)}" for v, n in self.items())

    def __repr__(self) -> str:
        return f"MultiSet({self})"


EMPTY = MultiSet()


def ms_add(a: MultiSet, b: MultiSet) -> MultiSet:
    return a + b


def ms_subtract(a: MultiSet, b: MultiSet) -> MultiSet:
    return a - b


def ms_leq(a: MultiSet, b: MultiSet) -> bool:
    return a <= b


def ms_scale(n: int, a: MultiSet) -> MultiSet:
    return a.scale(n)


def ms_size(a: MultiSet) -> int:
    return a.size()


# ---------------------------------------------------------------- declaration text


def render_decl(decl: ColorSetDecl) -> str:
    """Right-hand side of a colorset line; components referenced by name."""

    def ref(d):
        if d.name is None:
            raise ColorSetError(f"component color set {d!r} has no name")
        return d.name

    if isinstance(decl, IntRange):
        return f"int with {render_value(decl.lo)}..{render_value(decl.hi)}"
    if isinstance(decl, Product):
        return "product " + " * ".join(ref(d) for d in decl.components)
    if isinstance(decl, Record):
        return "record " + " * ".join(f"{n} : {ref(d)}" for n, d in decl.fields)
    if isinstance(decl, ListOf):
        text = f"list {ref(decl.element)}"
        if decl.max_len is not None:
            text += f" with 0..{decl.max_len}"
        return text
    if isinstance(decl, Enum):
        return "with " + " | ".join(decl.constants)
    if isinstance(decl, Unit):
        return "unit"
    if isinstance(decl, Text):
        return "string"
    raise TypeError(decl)


def parse_decl(text: str, known: Mapping[str, ColorSetDecl], name: str | None = None) -> ColorSetDecl:
    """Parse the right-hand side of a colorset line."""
    text = text.strip().rstrip(";").strip()

    def lookup(ref: str) -> ColorSetDecl:
        ref = ref.strip()
        if ref not in known:
            raise ColorSetError(f"unknown color set {ref!r}")
        return known[ref]

    def parse_int(s: str) -> int:
        s = s.strip()
        neg = s.startswith(("~", "-"))
        n = int(s[1:] if neg else s)
        return -n if neg else n

    head, _, rest = text.partition(" ")
    rest = rest.strip()
    if head == "int":
        if not rest.startswith("with"):
            raise ColorSetError("only bounded int ranges are supported: int with lo..hi")
        lo, _, hi = rest[4:].partition("..")
        return IntRange(parse_int(lo), parse_int(hi), name=name)
    if head == "unit":
        return Unit(name=name)
    if head == "string":
        return Text(name=name)
    if head == "product":
        return Product(tuple(lookup(p) for p in rest.split("*")), name=name)
    if head == "record":
        fields = []
        for part in rest.split("*"):
            fname, sep, ref = part.partition(":")
            if not sep:
                raise ColorSetError(f"bad record field {part!r}")
            fields.append((fname.strip(), lookup(ref)))
        return Record(tuple(fields), name=name)
    if head == "list":
        elem, _, bound = rest.partition(" with ")
        max_len = None
        if bound:
            lo, _, hi = bound.partition("..")
            if parse_int(lo) != 0:
                raise ColorSetError("list length bounds must start at 0")
            max_len = parse_int(hi)
        return ListOf(lookup(elem), max_len, name=name)
    if head == "with":
        return Enum(tuple(c.strip() for c in rest.split("|")), name=name)
    raise ColorSetError(f"cannot parse color set {text!r}")
