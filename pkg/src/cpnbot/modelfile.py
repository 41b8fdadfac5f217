"""Text model files.

Example::

    colorsets:
      LOCK = unit
      N = int with 1..3
    vars:
      x : N
    page Top:
      place P : N init 1`1 ++ 1`2
      place Q : N port io
      trans T guard x > 1
        in P : x
        out Q : x
      subst S -> Sub { Q=R }
    root: Top

``#`` starts a comment. Inscriptions run to the end of their line.
"""

from __future__ import annotations

import re

from . import colorsets as cs
from .inscription import BUILTINS, CPNSyntaxError, HostFnRegistry, InscriptionError, parse_expr, print_expr
from .net import Arc, HierNet, Page, PlaceDecl, Substitution, TransitionDecl

NAME = r"[A-Za-z_][A-Za-z0-9_\-']*"

_PLACE_RE = re.compile(rf"place\s+({NAME})\s*:\s*({NAME})(?:\s+port\s+(in|out|io))?(?:\s+init\s+(.*))?$")
_TRANS_RE = re.compile(rf"trans\s+({NAME})(?:\s+guard\s+(.*))?$")
_ARC_RE = re.compile(rf"(in|out)\s+({NAME})\s*:\s*(.*)$")
_SUBST_RE = re.compile(rf"subst\s+({NAME})\s*->\s*({NAME})\s*\{{(.*)\}}$")
_COLSET_RE = re.compile(rf"(?:colset\s+)?({NAME})\s*=\s*(.*?);?$")
_VAR_RE = re.compile(rf"({NAME}(?:\s*,\s*{NAME})*)\s*:\s*({NAME});?$")


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    escaped = False
    for ch in line:
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out).rstrip()


def parse_model(text: str, functions: HostFnRegistry = BUILTINS) -> HierNet:
    """Parse a model file. Semantic checks are left to ``validate``."""
    colorsets: dict = {}
    variables: dict = {}
    pages: dict = {}
    root = None
    section = None
    page = None  # dict under construction
    trans = None
    raw_exprs: list = []  # (setter, text, lineno) parsed once all enum constants are known

    def fail(lineno, col, expected):
        raise CPNSyntaxError(lineno, col, expected)

    def finish_trans():
        nonlocal trans
        if trans is not None:
            page["transitions"].append(trans)
            trans = None

    def finish_page():
        nonlocal page
        finish_trans()
        if page is not None:
            pages[page["name"]] = page
            page = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        col = indent + 1
        if stripped == "colorsets:" or stripped == "vars:":
            finish_page()
            section = stripped[:-1]
            continue
        m = re.match(rf"page\s+({NAME})\s*:$", stripped)
        if m:
            finish_page()
            section = "page"
            if m.group(1) in pages:
                fail(lineno, col, f"a page name not already used ({m.group(1)})")
            page = {"name": m.group(1), "places": [], "transitions": [], "substitutions": []}
            continue
        m = re.match(rf"root\s*:\s*({NAME})$", stripped)
        if m:
            finish_page()
            section = None
            root = m.group(1)
            continue
        if section == "colorsets":
            m = _COLSET_RE.match(stripped)
            if not m:
                fail(lineno, col, "NAME = <colorset>")
            try:
                colorsets[m.group(1)] = cs.parse_decl(m.group(2), colorsets, name=m.group(1))
            except (cs.ColorSetError, ValueError) as e:
                fail(lineno, col, f"a color set ({e})")
        elif section == "vars":
            m = _VAR_RE.match(stripped)
            if not m:
                fail(lineno, col, "names : COLORSET")
            for v in m.group(1).split(","):
                variables[v.strip()] = m.group(2)
        elif section == "page":
            if stripped.startswith("place "):
                finish_trans()
                m = _PLACE_RE.match(stripped)
                if not m:
                    fail(lineno, col, "place NAME : COLORSET [port in|out|io] [init MSEXPR]")
                entry = {"name": m.group(1), "colorset": m.group(2), "port": m.group(3), "init": None}
                page["places"].append(entry)
                if m.group(4) is not None:
                    raw_exprs.append((entry, "init", m.group(4), lineno, col + m.start(4)))
            elif stripped.startswith("trans "):
                finish_trans()
                m = _TRANS_RE.match(stripped)
                if not m:
                    fail(lineno, col, "trans NAME [guard EXPR]")
                trans = {"name": m.group(1), "guard": None, "inputs": [], "outputs": []}
                if m.group(2) is not None:
                    raw_exprs.append((trans, "guard", m.group(2), lineno, col + m.start(2)))
            elif stripped.startswith(("in ", "out ")):
                m = _ARC_RE.match(stripped)
                if not m or trans is None:
                    fail(lineno, col, "an arc line inside a transition")
                arc = {"place": m.group(2), "inscription": None}
                trans["inputs" if m.group(1) == "in" else "outputs"].append(arc)
                raw_exprs.append((arc, "inscription", m.group(3), lineno, col + m.start(3)))
            elif stripped.startswith("subst "):
                finish_trans()
                m = _SUBST_RE.match(stripped)
                if not m:
                    fail(lineno, col, "subst NAME -> PAGE { socket=port, ... }")
                pairs = []
                body = m.group(3).strip()
                if body:
                    for item in body.split(","):
                        socket, eq, port = item.partition("=")
                        if not eq:
                            fail(lineno, col, "socket=port")
                        pairs.append((socket.strip(), port.strip()))
                page["substitutions"].append({"name": m.group(1), "subpage": m.group(2), "map": tuple(pairs)})
            else:
                fail(lineno, col, "place, trans, in, out or subst")
        else:
            fail(lineno, col, "a section header (colorsets:, vars:, page NAME:, root:)")
    finish_page()
    if root is None:
        raise CPNSyntaxError(len(text.splitlines()) + 1, 1, "root: PAGE")

    constants = {}
    for d in colorsets.values():
        if isinstance(d, cs.Enum):
            constants.update({c: i for i, c in enumerate(d.constants)})
    for target, key, src, lineno, col in raw_exprs:
        try:
            target[key] = parse_expr(src, constants)
        except CPNSyntaxError as e:
            raise CPNSyntaxError(lineno, col + e.col - 1, e.expected, src) from None

    built = {}
    for name, p in pages.items():
        built[name] = Page(
            name,
            tuple(PlaceDecl(x["name"], x["colorset"], x["init"], x["port"]) for x in p["places"]),
            tuple(
                TransitionDecl(
                    t["name"],
                    t["guard"],
                    tuple(Arc(a["place"], a["inscription"]) for a in t["inputs"]),
                    tuple(Arc(a["place"], a["inscription"]) for a in t["outputs"]),
                )
                for t in p["transitions"]
            ),
            tuple(Substitution(s["name"], s["subpage"], s["map"]) for s in p["substitutions"]),
        )
    return HierNet(colorsets, variables, built, root, functions)


def print_model(net: HierNet) -> str:
    lines = ["colorsets:"]
    for name, decl in net.colorsets.items():
        lines.append(f"  {name} = {cs.render_decl(decl)}")
    lines.append("vars:")
    by_cs: dict[str, list[str]] = {}
    for v, c in net.variables.items():
        by_cs.setdefault(c, []).append(v)
    for c, vs in by_cs.items():
        lines.append(f"  {', '.join(vs)} : {c}")
    for page in net.pages.values():
        lines.append(f"page {page.name}:")
        for p in page.places:
            text = f"  place {p.name} : {p.colorset}"
            if p.port:
                text += f" port {p.port}"
            if p.init is not None:
                text += f" init {print_expr(p.init)}"
            lines.append(text)
        for t in page.transitions:
            text = f"  trans {t.name}"
            if t.guard is not None:
                text += f" guard {print_expr(t.guard)}"
            lines.append(text)
            for a in t.inputs:
                lines.append(f"    in {a.place} : {print_expr(a.inscription)}")
            for a in t.outputs:
                lines.append(f"    out {a.place} : {print_expr(a.inscription)}")
        for s in page.substitutions:
            body = ", ".join(f"{a}={b}" for a, b in s.socket_map)
            lines.append(f"  subst {s.name} -> {s.subpage} {{ {body} }}")
    lines.append(f"root: {net.root}")
    return "\n".join(lines) + "\n"


def load_model(path, functions: HostFnRegistry = BUILTINS) -> HierNet:
    with open(path, encoding="utf-8") as f:
        return parse_model(f.read(), functions)


__all__ = ["parse_model", "print_model", "load_model", "InscriptionError"]
