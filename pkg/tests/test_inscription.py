import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpnbot.colorsets import EnumConst, Lst, MultiSet, Rec
from cpnbot.inscription import (
    BUILTINS,
    Arith,
    BoolOp,
    Call,
    Cmp,
    Cons,
    CPNSyntaxError,
    DivisionByZero,
    EvalError,
    EnumLit,
    IntLit,
    ListE,
    MsE,
    NoMatch,
    NotAPattern,
    PRec,
    PTuple,
    PVar,
    RecE,
    StrLit,
    TupleE,
    TypeMismatch,
    UnboundVariable,
    UnitLit,
    Var,
    Wildcard,
    arc_terms,
    evaluate,
    evaluate_multiset,
    expr_to_pattern,
    free_variables,
    match_token,
    parse_expr,
    pattern_to_expr,
    print_expr,
)
from cpnbot.robot import RobotModelConfig, build_robot_model


def test_parse_examples():
    assert parse_expr("1`(x,y,z)") == MsE(((IntLit(1), TupleE((Var("x"), Var("y"), Var("z")))),))
    assert parse_expr("{yaws=a, pitches=b, rolls=c}") == RecE(
        (("yaws", Var("a")), ("pitches", Var("b")), ("rolls", Var("c")))
    )
    assert parse_expr("avg2(a, x)") == Call("avg2", (Var("a"), Var("x")))


def test_parse_forms():
    assert parse_expr("()") == UnitLit()
    assert parse_expr("[1, 2]") == ListE((IntLit(1), IntLit(2)))
    assert parse_expr("x :: xs") == Cons(Var("x"), Var("xs"))
    assert parse_expr("1 + 2 * 3") == Arith("+", IntLit(1), Arith("*", IntLit(2), IntLit(3)))
    assert parse_expr("x <> 2 andalso not y") == BoolOp(
        "andalso", (Cmp("<>", Var("x"), IntLit(2)), BoolOp("not", (Var("y"),)))
    )
    assert parse_expr("~4") == IntLit(-4)
    assert parse_expr('"a\\"b"') == StrLit('a"b')
    assert parse_expr("2`x ++ y") == MsE(((IntLit(2), Var("x")), (IntLit(1), Var("y"))))
    assert parse_expr("empty") == MsE(())
    assert parse_expr("red", {"red": 0}) == EnumLit("red", 0)
    assert parse_expr("  x   +\n 1 ") == Arith("+", Var("x"), IntLit(1))


@pytest.mark.parametrize(
    "text, col",
    [("(1, 2", 6), ("x +", 4), ("1 `", 4), ("{a 1}", 4), ("f(1,", 5), ("1 2", 3)],
)
def test_syntax_errors_have_location(text, col):
    with pytest.raises(CPNSyntaxError) as e:
        parse_expr(text)
    assert e.value.line == 1
    assert e.value.col == col
    assert e.value.expected


def test_syntax_error_line():
    with pytest.raises(CPNSyntaxError) as e:
        parse_expr("x +\n\n  *")
    assert (e.value.line, e.value.col) == (3, 3)


def test_evaluate_examples():
    assert evaluate(Arith("+", IntLit(2), IntLit(3)), {}) == 5
    assert evaluate(Var("x"), {"x": 7}) == 7
    assert evaluate_multiset(Var("x"), {"x": 7}) == MultiSet([7])
    assert evaluate(Call("avg2", (IntLit(10), IntLit(21))), {}) == 15


def test_evaluate_floor_division():
    assert evaluate(parse_expr("~7 div 2"), {}) == -4
    assert evaluate(parse_expr("~7 mod 2"), {}) == 1
    assert evaluate(parse_expr("avg2(~1, 0)"), {}) == -1


def test_evaluate_errors():
    with pytest.raises(UnboundVariable) as e:
        evaluate(Var("q"), {})
    assert e.value.name == "q"
    with pytest.raises(DivisionByZero):
        evaluate(parse_expr("1 div 0"), {})
    with pytest.raises(DivisionByZero):
        evaluate(parse_expr("1 mod 0"), {})
    with pytest.raises(TypeMismatch):
        evaluate(parse_expr("x + 1"), {"x": "a"})
    with pytest.raises(TypeMismatch):
        evaluate(parse_expr("1 andalso true"), {})


def test_evaluate_structures():
    assert evaluate(parse_expr("{a=1, b=(2,3)}"), {}) == Rec({"a": 1, "b": (2, 3)})
    assert evaluate(parse_expr("1 :: [2]"), {}) == Lst((1, 2))
    assert evaluate(parse_expr("2`x ++ 1`x ++ 1`y"), {"x": 1, "y": 2}) == MultiSet({1: 3, 2: 1})
    assert evaluate(parse_expr("nth([5,6,7], 1)"), {}) == 6
    assert evaluate(parse_expr("length([5,6,7])"), {}) == 3
    assert evaluate(parse_expr("clamp(9, 1, 6)"), {}) == 6
    assert evaluate(parse_expr("c = red", {"red": 0}), {"c": EnumConst("red", 0)}) is True
    assert evaluate(parse_expr("x < 3 orelse 1 div 0 = 1"), {"x": 1}) is True


def test_uniform_seeded_and_in_range():
    e = parse_expr("uniform(3, 9)")
    a = [evaluate(e, {}, random.Random(5)) for _ in range(3)]
    r1, r2 = random.Random(11), random.Random(11)
    s1 = [evaluate(e, {}, r1) for _ in range(10_000)]
    s2 = [evaluate(e, {}, r2) for _ in range(10_000)]
    assert s1 == s2
    assert all(3 <= v <= 9 for v in s1)
    assert set(s1) == set(range(3, 10))
    assert len(set(a)) == 1
    assert not BUILTINS["uniform"].pure
    assert all(f.pure for n, f in BUILTINS.items() if n != "uniform")


def test_match_examples():
    assert match_token(PTuple((PVar("x"), PVar("y"))), (1, 2), {}) == {"x": 1, "y": 2}
    assert match_token(PVar("x"), 5, {"x": 6}) is NoMatch
    p = PRec((("yaws", PVar("a")), ("pitches", Wildcard()), ("rolls", PVar("c"))))
    assert match_token(p, Rec({"yaws": 10, "pitches": 20, "rolls": 30}), {}) == {"a": 10, "c": 30}
    assert match_token(PTuple((PVar("x"), PVar("y"))), (1, 2, 3)) is NoMatch
    assert match_token(PVar("x"), 5, {"x": 5}) == {"x": 5}


def test_free_variables_and_patterns():
    assert free_variables(parse_expr("(x, y, x)")) == {"x", "y"}
    assert free_variables(parse_expr("2`f(a, _) ++ b")) == {"a", "b"}
    assert expr_to_pattern(parse_expr("(a,b,c)")) == PTuple((PVar("a"), PVar("b"), PVar("c")))
    with pytest.raises(NotAPattern):
        expr_to_pattern(parse_expr("a+1"))
    with pytest.raises(NotAPattern):
        expr_to_pattern(parse_expr("(a, a)"))
    with pytest.raises(NotAPattern):
        arc_terms(parse_expr("n`x"))
    assert arc_terms(parse_expr("2`x ++ 1`(y, 3)")) == [(2, PVar("x")), (1, PTuple((PVar("y"), expr_to_pattern(IntLit(3)))))]


def _robot_inscriptions():
    out = []
    for cfg in (RobotModelConfig(), RobotModelConfig.reduced()):
        net = build_robot_model(cfg)
        for page in net.pages.values():
            for p in page.places:
                if p.init is not None:
                    out.append(("init", p.init))
            for t in page.transitions:
                if t.guard is not None:
                    out.append(("guard", t.guard))
                out += [("in", a.inscription) for a in t.inputs]
                out += [("out", a.inscription) for a in t.outputs]
    return out


def test_robot_inscriptions_roundtrip_and_patterns():
    items = _robot_inscriptions()
    assert len(items) > 50
    for kind, e in items:
        assert parse_expr(print_expr(e)) == e
        if kind == "in":
            arc_terms(e)


# ---------------------------------------------------------------- properties

names = st.sampled_from(["a", "b", "x", "y", "zz"])
exprs = st.recursive(
    st.one_of(
        st.integers(-50, 50).map(IntLit),
        names.map(Var),
        st.just(UnitLit()),
        st.text("ab \"\\", max_size=4).map(StrLit),
    ),
    lambda inner: st.one_of(
        st.lists(inner, min_size=2, max_size=3).map(lambda xs: TupleE(tuple(xs))),
        st.lists(inner, max_size=3).map(lambda xs: ListE(tuple(xs))),
        st.lists(st.tuples(st.sampled_from(["f", "g", "h"]), inner), min_size=1, max_size=3, unique_by=lambda t: t[0]).map(
            lambda fs: RecE(tuple(fs))
        ),
        st.builds(Cons, inner, inner),
        st.builds(Arith, st.sampled_from(["+", "-", "*", "div", "mod"]), inner, inner),
        st.builds(Cmp, st.sampled_from(["=", "<>", "<", "<=", ">", ">="]), inner, inner),
        st.builds(lambda a, b, op: BoolOp(op, (a, b)), inner, inner, st.sampled_from(["andalso", "orelse"])),
        inner.map(lambda a: BoolOp("not", (a,))),
        st.lists(inner, max_size=3).map(lambda xs: Call("avg2", tuple(xs))),
    ),
    max_leaves=8,
)


@settings(max_examples=1000, deadline=None)
@given(exprs)
def test_print_parse_roundtrip(e):
    assert parse_expr(print_expr(e)) == e


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), exprs), min_size=1, max_size=3))
def test_multiset_expr_roundtrip(terms):
    e = MsE(tuple((IntLit(c), v) for c, v in terms))
    assert parse_expr(print_expr(e)) == e


def _random_value(rnd, depth=0):
    k = rnd.randrange(5 if depth < 2 else 3)
    if k == 0:
        return rnd.randint(-3, 3)
    if k == 1:
        return rnd.choice(["s", "t"])
    if k == 2:
        return ()
    if k == 3:
        return tuple(_random_value(rnd, depth + 1) for _ in range(rnd.randint(2, 3)))
    return Rec((f"f{i}", _random_value(rnd, depth + 1)) for i in range(rnd.randint(1, 3)))


def _pattern_for(rnd, v, counter):
    """A pattern that matches v: variables, literals and constructors."""
    if rnd.random() < 0.35:
        counter[0] += 1
        return PVar(f"v{counter[0]}")
    return expr_to_pattern(_literal(rnd, v, counter))


def _literal(rnd, v, counter):
    if isinstance(v, tuple) and v:
        return TupleE(tuple(pattern_to_expr(_pattern_for(rnd, x, counter)) for x in v))
    if isinstance(v, Rec):
        return RecE(tuple((n, pattern_to_expr(_pattern_for(rnd, x, counter))) for n, x in v.items()))
    if v == ():
        return UnitLit()
    if isinstance(v, str):
        return StrLit(v)
    return IntLit(v)


def test_match_soundness_10k():
    rnd = random.Random(20240611)
    matched = 0
    for _ in range(10_000):
        v = _random_value(rnd)
        p = _pattern_for(rnd, v, [0])
        b = match_token(p, v, {})
        assert b is not NoMatch
        assert evaluate(pattern_to_expr(p), b) == v
        # against an unrelated value: any match found must still be sound
        w = _random_value(rnd)
        b2 = match_token(p, w, {})
        if b2 is not NoMatch:
            matched += 1
            assert evaluate(pattern_to_expr(p), b2) == w
    assert matched > 0


@settings(max_examples=500, deadline=None)
@given(exprs, st.fixed_dictionaries({n: st.integers(-5, 5) for n in ["a", "b", "x", "y", "zz"]}))
def test_evaluate_is_pure_without_rng(e, binding):
    def run():
        try:
            return evaluate(e, binding)
        except EvalError as err:
            return type(err)

    assert run() == run()
