"""Reader for the discrete subset of the BIF network format.

Accepted grammar (whitespace and ``//`` / ``/* */`` comments anywhere)::

    file        := network (variable | probability)*
    network     := "network" NAME "{" property* "}"
    variable    := "variable" NAME "{" "type" "discrete" "[" INT "]" "{" NAME ("," NAME)* "}" ";"
                   property* "}"
    probability := "probability" "(" NAME ["|" NAME ("," NAME)*] ")" "{" body "}"
    body        := "table" NUM ("," NUM)* ";"                       (root nodes only)
                 | ("(" NAME ("," NAME)* ")" NUM ("," NUM)* ";")+    (one row per parent state)
    property    := "property" <text up to ";"> ";"

Anything else is a ``ParseError`` carrying the line and column of the
offending token.
"""

from __future__ import annotations

import re
from importlib import resources
from itertools import product

import numpy as np

from .data import GroundTruth
from .errors import InvalidCpt, ParseError
from .graph import Dag

CPT_TOLERANCE = 1e-6

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<num>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?(?![A-Za-z0-9_.\-+]))
  | (?P<name>[A-Za-z0-9_.\-+]+)
  | (?P<punct>[{}\[\]();,|])
    """,
    re.VERBOSE | re.DOTALL,
)


class _Tokens:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str, int, int]] = []
        pos, line, line_start = 0, 1, 0
        while pos < len(text):
            mt = _TOKEN.match(text, pos)
            if mt is None:
                raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
            kind = mt.lastgroup
            val = mt.group()
            if kind not in ("ws", "comment"):
                self.toks.append((kind, val, line, pos - line_start + 1))
            nl = val.count("\n")
            if nl:
                line += nl
                line_start = pos + val.rfind("\n") + 1
            pos = mt.end()
        self.i = 0
        self.end = (line, pos - line_start + 1)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str):
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of input, expected {what}", *self.end)
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.next(repr(value))
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}", tok[2], tok[3])
        return tok

    def name(self):
        tok = self.next("a name")
        if tok[0] not in ("name", "num"):
            raise ParseError(f"expected a name, found {tok[1]!r}", tok[2], tok[3])
        return tok

    def number(self) -> float:
        tok = self.next("a number")
        if tok[0] != "num":
            raise ParseError(f"expected a number, found {tok[1]!r}", tok[2], tok[3])
        return float(tok[1])

    def fail(self, tok, message):
        raise ParseError(message, tok[2], tok[3])


def _skip_property(t: _Tokens) -> None:
    t.expect("property")
    while t.next("';'")[1] != ";":
        pass


def _name_list(t: _Tokens, close: str) -> list[str]:
    names = [t.name()[1]]
    while True:
        tok = t.next(f"',' or {close!r}")
        if tok[1] == close:
            return names
        if tok[1] != ",":
            t.fail(tok, f"expected ',' or {close!r}, found {tok[1]!r}")
        names.append(t.name()[1])


def _numbers(t: _Tokens) -> list[float]:
    vals = [t.number()]
    while True:
        tok = t.next("',' or ';'")
        if tok[1] == ";":
            return vals
        if tok[1] != ",":
            t.fail(tok, f"expected ',' or ';', found {tok[1]!r}")
        vals.append(t.number())


def parse_bif(text: str) -> GroundTruth:
    t = _Tokens(text)
    t.expect("network")
    t.name()
    t.expect("{")
    while (tok := t.peek()) is not None and tok[1] == "property":
        _skip_property(t)
    t.expect("}")

    names: list[str] = []
    states: dict[str, list[str]] = {}
    blocks: dict[str, tuple[list[str], dict[tuple[str, ...], list[float]], tuple]] = {}

    while (tok := t.peek()) is not None:
        if tok[1] == "variable":
            t.next("variable")
            ntok = t.name()
            if ntok[1] in states:
                t.fail(ntok, f"variable {ntok[1]!r} declared twice")
            t.expect("{")
            t.expect("type")
            kind = t.next("'discrete'")
            if kind[1] != "discrete":
                t.fail(kind, f"only discrete variables are supported, found {kind[1]!r}")
            t.expect("[")
            ktok = t.next("state count")
            if ktok[0] != "num" or not ktok[1].isdigit():
                t.fail(ktok, f"expected an integer state count, found {ktok[1]!r}")
            t.expect("]")
            t.expect("{")
            values = _name_list(t, "}")
            t.expect(";")
            if len(values) != int(ktok[1]):
                t.fail(ktok, f"declared {ktok[1]} states but listed {len(values)}")
            while (p := t.peek()) is not None and p[1] == "property":
                _skip_property(t)
            t.expect("}")
            names.append(ntok[1])
            states[ntok[1]] = values
        elif tok[1] == "probability":
            t.next("probability")
            t.expect("(")
            ctok = t.name()
            child = ctok[1]
            parents: list[str] = []
            sep = t.next("'|' or ')'")
            if sep[1] == "|":
                parents = _name_list(t, ")")
            elif sep[1] != ")":
                t.fail(sep, f"expected '|' or ')', found {sep[1]!r}")
            if child in blocks:
                t.fail(ctok, f"second probability block for {child!r}")
            t.expect("{")
            rows: dict[tuple[str, ...], list[float]] = {}
            while (p := t.peek()) is not None and p[1] != "}":
                if p[1] == "table":
                    t.next("table")
                    if parents:
                        t.fail(p, "'table' is only supported for nodes without parents")
                    rows[()] = _numbers(t)
                elif p[1] == "(":
                    t.next("(")
                    key = tuple(_name_list(t, ")"))
                    if key in rows:
                        t.fail(p, f"duplicate row {key} for {child!r}")
                    rows[key] = _numbers(t)
                elif p[1] == "property":
                    _skip_property(t)
                else:
                    t.fail(p, f"unsupported probability entry {p[1]!r}")
            t.expect("}")
            blocks[child] = (parents, rows, ctok)
        else:
            t.fail(tok, f"unexpected token {tok[1]!r}")

    index = {name: i for i, name in enumerate(names)}
    cpts: list[np.ndarray] = [None] * len(names)  # type: ignore[list-item]
    parent_order: list[tuple[int, ...]] = [()] * len(names)
    edges = []
    for child, (parents, rows, ctok) in blocks.items():
        for name in [child, *parents]:
            if name not in index:
                t.fail(ctok, f"probability block references undeclared variable {name!r}")
        card = len(states[child])
        shape = tuple(len(states[p]) for p in parents) + (card,)
        table = np.zeros(shape)
        for combo in product(*(range(len(states[p])) for p in parents)):
            key = tuple(states[p][s] for p, s in zip(parents, combo))
            if key not in rows:
                raise InvalidCpt(f"{child}: missing row for parent states {key}")
            row = rows.pop(key)
            if len(row) != card:
                raise InvalidCpt(f"{child}: row {key} has {len(row)} entries, expected {card}")
            total = sum(row)
            if abs(total - 1.0) > CPT_TOLERANCE or min(row) < 0:
                raise InvalidCpt(f"{child}: row {key} sums to {total!r}")
            table[combo] = np.array(row) / total
        if rows:
            raise InvalidCpt(f"{child}: rows for unknown parent states {sorted(rows)}")
        x = index[child]
        cpts[x] = table
        parent_order[x] = tuple(index[p] for p in parents)
        edges.extend((index[p], x) for p in parents)
    missing = [n for n in names if n not in blocks]
    if missing:
        raise InvalidCpt(f"no probability block for {missing}")
    if t.peek() is None and not names:
        raise ParseError("network declares no variables", *t.end)

    return GroundTruth(
        dag=Dag(len(names), edges),
        kind="discrete_bn",
        names=names,
        cpts=cpts,
        parent_order=parent_order,
        states=[states[n] for n in names],
    )


BUNDLED_NETWORKS = ("alarm", "insurance", "win95pts", "andes", "pigs")


def bundled_network(name: str) -> str:
    """Text of one of the benchmark networks shipped with the package."""
    if name not in BUNDLED_NETWORKS:
        raise KeyError(f"unknown network {name!r}; choose from {BUNDLED_NETWORKS}")
    return resources.files("fedpc.networks").joinpath(f"{name}.bif").read_text()


def load_bif(path_or_name: str) -> GroundTruth:
    if path_or_name in BUNDLED_NETWORKS:
        return parse_bif(bundled_network(path_or_name))
    with open(path_or_name) as fh:
        return parse_bif(fh.read())
