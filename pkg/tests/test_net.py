import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpnbot.colorsets import EMPTY, MultiSet
from cpnbot.modelfile import parse_model, print_model
from cpnbot.net import (
    Binding,
    NetEvent,
    NotEnabled,
    TokenTypeError,
    EnumerationCapExceeded,
    Marking,
    enabled_bindings,
    enabled_events,
    fire,
    flatten,
    initial_marking,
    validate,
)
from cpnbot.inscription import CPNSyntaxError, evaluate_multiset
from cpnbot.robot import RobotModelConfig, build_robot_model

from netgen import random_net_text
from oracles import brute_bindings

HEAD = """colorsets:
  N = int with 0..9
  L = unit
vars:
  x, y : N
"""


def flat(body: str, head: str = HEAD):
    net = parse_model(head + body)
    assert validate(net) == []
    return flatten(net)


def kinds(text: str, head: str = HEAD) -> list[str]:
    return sorted({d.kind for d in validate(parse_model(head + text))})


def test_validate_robot_model():
    assert validate(build_robot_model(RobotModelConfig())) == []
    assert validate(build_robot_model(RobotModelConfig.reduced())) == []


def test_unbound_output_variable():
    body = """page Top:
  place P : N init 1`1
  place Q : N
  trans T
    in P : x
    out Q : y
root: Top
"""
    assert kinds(body) == ["UnboundOutputVariable"]


def test_port_not_assigned():
    body = """page Top:
  place A : N
  subst S -> Sub { A=In }
page Sub:
  place In : N port in
  place Out : N port out
root: Top
"""
    assert kinds(body) == ["PortNotAssigned"]


@pytest.mark.parametrize(
    "body, kind",
    [
        ("page Top:\n  place P : M\nroot: Top\n", "UnknownColorset"),
        ("page Top:\n  place P : N\nroot: Nope\n", "UnknownPage"),
        ("page Top:\n  place P : N\n  place P : N\nroot: Top\n", "DuplicateName"),
        ("page Top:\n  place P : N init 1`12\nroot: Top\n", "InitTypeMismatch"),
        ("page Top:\n  place P : N\n  trans T\n    in Q : x\nroot: Top\n", "UnknownPlace"),
        ("page Top:\n  place P : N\n  trans T\n    in P : x + 1\nroot: Top\n", "NotAPattern"),
        ("page Top:\n  place P : N\n  trans T\n    in P : _\nroot: Top\n", "WildcardOnInputArc"),
        ("page Top:\n  place P : L\n  trans T\n    in P : x\nroot: Top\n", "PatternTypeMismatch"),
        ("page Top:\n  place P : N\n  place Q : L\n  trans T\n    in P : x\n    out Q : x\nroot: Top\n", "ExprTypeMismatch"),
        ("page Top:\n  place P : N\n  trans T\n    in P : z\nroot: Top\n", "UndeclaredVariable"),
        ("page Top:\n  place P : N\n  trans T\n    in P : x\n    out P : f(x)\nroot: Top\n", "UnknownFunction"),
        ("page Top:\n  place P : N\n  trans T guard uniform(0, 1) = x\n    in P : x\nroot: Top\n", "ImpureGuard"),
        ("page Top:\n  place A : N\n  subst S -> Sub { A=B }\npage Sub:\n  place B : N\nroot: Top\n", "NotAPort"),
        ("page Top:\n  place A : L\n  subst S -> Sub { A=B }\npage Sub:\n  place B : N port io\nroot: Top\n", "SocketColorsetMismatch"),
        ("page Top:\n  place A : N\n  subst S -> Sub { A=B }\npage Sub:\n  place B : N port io init 1`1\nroot: Top\n", "PortInitNotEmpty"),
        ("page Top:\n  subst S -> Sub { }\npage Sub:\n  subst R -> Top { }\nroot: Top\n", "CyclicSubstitution"),
        ("page Top:\n  place P : N init 1`(1 div 0)\nroot: Top\n", "InitError"),
    ],
)
def test_validate_diagnostics(body, kind):
    assert kind in kinds(body)


def test_diagnostic_location():
    d = validate(parse_model(HEAD + "page Top:\n  place P : N\n  trans T\n    in Q : x\nroot: Top\n"))[0]
    assert "page Top" in d.location and "transition T" in d.location
    assert "UnknownPlace" in str(d)


# ---------------------------------------------------------------- flattening


def test_flatten_robot_tilt_gain():
    net = build_robot_model(RobotModelConfig())
    fn = flatten(net)
    prefix = "Humanoid-Robot/Gyroscope-and-Accelerometer."
    tilt_places = [n for n in fn.place_names if n.startswith(prefix)]
    tilt_trans = [t.name for t in fn.transitions if t.name.startswith(prefix)]
    assert len(net.pages["Tilt-Sensor"].places) == 6
    assert len(tilt_places) == 5
    assert len(tilt_trans) == 2
    # the port is fused onto the root socket
    assert "Humanoid-Robot.Filtered-Coordinate" in fn.place_names
    assert prefix + "Filtered-Coordination" not in fn.place_names


def test_flatten_without_substitutions_is_identity():
    fn = flat("page Top:\n  place P : N init 1`3\n  trans T\n    in P : x\n    out P : x\nroot: Top\n")
    assert fn.place_names == ("Top.P",)
    assert [t.name for t in fn.transitions] == ["Top.T"]


def test_two_instances_of_same_subpage():
    fn = flat(
        """page Top:
  place A : N init 1`1
  place B : N init 1`2
  subst S1 -> Sub { A=X }
  subst S2 -> Sub { B=X }
page Sub:
  place X : N port io
  place Y : N
  trans T
    in X : x
    out Y : x
root: Top
"""
    )
    assert sorted(fn.place_names) == ["Top.A", "Top.B", "Top/S1.Y", "Top/S2.Y"]
    assert len(fn.transitions) == 2
    m = initial_marking(fn)
    evs = enabled_events(fn, m)
    assert [(e.transition, dict(e.binding)) for e in evs] == [("Top/S1.T", {"x": 1}), ("Top/S2.T", {"x": 2})]


def test_nested_substitution():
    fn = flat(
        """page Top:
  place A : N init 1`4
  subst S -> Mid { A=M }
page Mid:
  place M : N port io
  subst K -> Leaf { M=L }
page Leaf:
  place L : N port io
  place Z : N
  trans T
    in L : x
    out Z : x + 1
root: Top
"""
    )
    assert sorted(fn.place_names) == ["Top.A", "Top/S/K.Z"]
    m = fire(fn, initial_marking(fn), enabled_events(fn, initial_marking(fn))[0])
    assert m["Top/S/K.Z"] == MultiSet([5])


# ---------------------------------------------------------------- markings, enabling, firing


def test_initial_marking_examples():
    fn = flat(
        """page Top:
  place A : L init 1`()
  place B : T3 init 1`(uniform(1,330), uniform(1,330), uniform(1,330))
  place C : N
root: Top
""",
        HEAD.replace("  L = unit\n", "  L = unit\n  A = int with 1..330\n  T3 = product A * A * A\n"),
    )
    m = initial_marking(fn, random.Random(7))
    assert m["Top.A"] == MultiSet([()])
    assert m["Top.C"] == EMPTY
    (triple,) = m["Top.B"].values()
    assert len(triple) == 3 and all(1 <= c <= 330 for c in triple)


def test_enabled_bindings_examples():
    fn = flat("page Top:\n  place P : N init 1`1 ++ 1`2\n  trans T guard x > 1\n    in P : x\nroot: Top\n")
    m = initial_marking(fn)
    assert enabled_bindings(fn, m, fn.transitions[0]).bindings == [Binding(x=2)]

    fn = flat(
        "page Top:\n  place P : N init 1`3\n  place Q : N init 1`4\n  trans T\n    in P : x\n    in Q : x\nroot: Top\n"
    )
    assert enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings == []

    fn = flat("page Top:\n  place P : N init 1`5\n  trans T\n    in P : 2`x\nroot: Top\n")
    assert enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings == []


def test_shared_place_arcs_are_summed():
    fn = flat("page Top:\n  place P : N init 1`5\n  trans T\n    in P : x\n    in P : y\nroot: Top\n")
    assert enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings == []
    fn = flat("page Top:\n  place P : N init 2`5 ++ 1`6\n  trans T\n    in P : x\n    in P : y\nroot: Top\n")
    got = [dict(b) for b in enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings]
    assert got == [{"x": 5, "y": 5}, {"x": 5, "y": 6}, {"x": 6, "y": 5}]


def test_guard_only_variable_is_enumerated():
    fn = flat("page Top:\n  place P : N init 1`3\n  trans T guard y = x + 1 orelse y = x + 2\n    in P : x\nroot: Top\n")
    got = [dict(b) for b in enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings]
    assert got == [{"x": 3, "y": 4}, {"x": 3, "y": 5}]


def test_enumeration_cap():
    head = HEAD + "  s : S\n"
    head = head.replace("  L = unit\n", "  L = unit\n  S = string\n")
    net = parse_model(head + "page Top:\n  place P : N init 1`3\n  trans T guard s = \"a\"\n    in P : x\nroot: Top\n")
    fn = flatten(net)
    with pytest.raises(EnumerationCapExceeded):
        enabled_bindings(fn, initial_marking(fn), fn.transitions[0])


def test_binding_cap_truncates():
    fn = flat("page Top:\n  place P : N init 1`1 ++ 1`2 ++ 1`3\n  trans T\n    in P : x\nroot: Top\n")
    bs = enabled_bindings(fn, initial_marking(fn), fn.transitions[0], cap=2)
    assert bs.truncated and len(bs.bindings) == 2
    assert not enabled_bindings(fn, initial_marking(fn), fn.transitions[0], cap=3).truncated


def test_fire_examples():
    fn = flat("page Top:\n  place P : N init 1`5\n  place Q : N\n  trans T\n    in P : x\n    out Q : x + 1\nroot: Top\n")
    m = initial_marking(fn)
    ev = NetEvent("Top.T", Binding(x=5))
    m2 = fire(fn, m, ev)
    assert m2["Top.P"] == EMPTY and m2["Top.Q"] == MultiSet([6])
    with pytest.raises(NotEnabled):
        fire(fn, m2, ev)

    fn = flat("page Top:\n  place P : N init 1`5\n  trans T\n    in P : x\n    out P : x\nroot: Top\n")
    m = initial_marking(fn)
    assert fire(fn, m, enabled_events(fn, m)[0]) == m


def test_fire_type_error_on_produced_token():
    net = parse_model(HEAD + "page Top:\n  place P : N init 1`9\n  trans T\n    in P : x\n    out P : x + 1\nroot: Top\n")
    fn = flatten(net)
    m = initial_marking(fn)
    with pytest.raises(TokenTypeError):
        fire(fn, m, enabled_events(fn, m)[0])


def test_enabled_events_examples():
    fn = flat("page Top:\n  place P : N\n  place Q : L\n  trans T\n    in P : x\n  trans U\n    in Q : ()\nroot: Top\n")
    assert enabled_events(fn, initial_marking(fn)) == []

    fn = flatten(build_robot_model(RobotModelConfig()))
    evs = enabled_events(fn, initial_marking(fn, random.Random(0)))
    assert len(evs) == 1
    assert evs[0].transition == "Humanoid-Robot/Gyroscope-and-Accelerometer.Gyroscope-and-Accelerometer"


def test_canonical_binding_order():
    fn = flat("page Top:\n  place P : N init 1`3 ++ 1`1 ++ 1`2\n  trans T\n    in P : x\nroot: Top\n")
    got = [b["x"] for b in enabled_bindings(fn, initial_marking(fn), fn.transitions[0]).bindings]
    assert got == [1, 2, 3]


def test_marking_is_hashable_value():
    fn = flat("page Top:\n  place P : N init 1`1\n  place Q : N\nroot: Top\n")
    a = Marking.of(fn, {"Top.P": MultiSet([1])})
    b = Marking.of(fn, {"Top.Q": EMPTY, "Top.P": MultiSet([1])})
    assert a == b and hash(a) == hash(b)
    assert a == initial_marking(fn)


# ---------------------------------------------------------------- model files


def test_model_file_roundtrip_robot():
    for cfg in (RobotModelConfig(), RobotModelConfig.reduced()):
        net = build_robot_model(cfg)
        text = print_model(net)
        again = parse_model(text, net.functions)
        assert again.pages == net.pages
        assert again.colorsets == net.colorsets
        assert again.variables == net.variables
        assert print_model(again) == text


def test_model_file_comments_and_errors():
    net = parse_model(HEAD + "# c\npage Top:  # trailing\n  place P : L init 1`() # x\n  place S : N\nroot: Top\n")
    assert [p.name for p in net.pages["Top"].places] == ["P", "S"]
    with pytest.raises(CPNSyntaxError) as e:
        parse_model(HEAD + "page Top:\n  place P : N init 1`(\nroot: Top\n")
    assert e.value.line == 7
    with pytest.raises(CPNSyntaxError) as e:
        parse_model(HEAD + "page Top:\n  bogus line\nroot: Top\n")
    assert e.value.line == 7
    with pytest.raises(CPNSyntaxError):
        parse_model(HEAD + "page Top:\n  place P : N\n")


def test_model_file_accepts_ml_colset_lines():
    net = parse_model(
        "colorsets:\n  colset axis= int with 1..330;\n  colset filtered_coordinate=product axis*axis*axis;\n"
        "  colset f_coordinate=list filtered_coordinate;\nvars:\n  f : f_coordinate\n"
        "page Top:\n  place F : f_coordinate init 1`[]\nroot: Top\n"
    )
    assert validate(net) == []


# ---------------------------------------------------------------- properties


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_enabled_bindings_match_brute_force(seed):
    net = parse_model(random_net_text(random.Random(seed)))
    assert validate(net) == []
    fn = flatten(net)
    m = initial_marking(fn)
    for t in fn.transitions:
        got = enabled_bindings(fn, m, t).bindings
        assert {frozenset(b.items()) for b in got} == brute_bindings(fn, m, t)
        assert len(set(got)) == len(got)
        assert got == sorted(got, key=lambda b: b.sort_key())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_firing_conserves_tokens(seed, steps):
    rnd = random.Random(seed)
    fn = flatten(parse_model(random_net_text(rnd)))
    m = initial_marking(fn)
    for _ in range(steps):
        evs = enabled_events(fn, m)
        if not evs:
            break
        ev = rnd.choice(evs)
        t = fn.transition(ev.transition)
        m2 = fire(fn, m, ev)
        for p in fn.place_names:
            need = MultiSet()
            for q, e in t.inputs:
                if q == p:
                    need = need + evaluate_multiset(e, ev.binding, None, fn.functions)
            gain = MultiSet()
            for q, e in t.outputs:
                if q == p:
                    gain = gain + evaluate_multiset(e, ev.binding, None, fn.functions)
            assert m2[p] == m[p] - need + gain
        m = m2
