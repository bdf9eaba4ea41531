"""MEASURE: measurement intents, zones and reactions.

A program has up to three sections, in this order::

    measurement {
      m1 = oneway_latency(SAP1, SAP2);
      m2 = cpu_load(FW1);
    } zones {
      z1 = Avg(m1, '5 minutes') > 10.0;
      z4 = Avg(m2, '1 minute') > 90%;
    } reaction {
      z3->z4: Publish(topic=alarm, msg="Warning CPU");
    }

Grammar (keywords case-insensitive where noted)::

    program   := [MEAS "{" mdecl* "}"] ["zones" "{" zdecl* "}"] [REACT "{" rdecl* "}"]
    MEAS      := "measurement" | "measurements"
    REACT     := "reaction" | "reactions" | "action" | "actions"
    mdecl     := ident "=" ident "(" [arg ("," arg)*] ")" ";"
    arg       := value | ident "=" value
    value     := ident | ["-"] number | duration | string | "{" [value ":" value ("," ...)*] "}"
    zdecl     := ident "=" orexpr ";"
    orexpr    := andexpr ("or" andexpr)*
    andexpr   := notexpr ("and" notexpr)*
    notexpr   := "not" notexpr | "(" orexpr ")" | compare
    compare   := aggcall cmp threshold | ident ".age" cmp duration | ident cmp threshold
    aggcall   := ("Avg"|"Min"|"Max"|"Sum"|"Count") "(" ident "," duration ")" | "Last" "(" ident ")"
    rdecl     := trigger (":" | "=") ident "(" [actarg ("," actarg)*] ")" ";"
    trigger   := ident "->" ident | "->" ident | ident "->" | "in" ident
    actarg    := arg | ".." | "..."

``and``/``or``/``not`` bind as not > and > or. A bare ``m1 > 0`` means
``Last(m1) > 0``. ``X%`` thresholds are stored as X/100. Durations are
``'<n> <unit>'`` strings or ``<n><unit>`` literals with units ms, s, m/min,
h (and their long spellings); they are held in seconds. ``#`` starts a
comment. Each reaction carries exactly one action. At least one section
must be present.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Union

AGG_FUNCS = ("Avg", "Min", "Max", "Sum", "Count", "Last")
COMPARATORS = ("<", ">", "<=", ">=", "==", "!=")

_UNIT_SECONDS = {
    "ms": 1e-3, "msec": 1e-3, "millisecond": 1e-3, "milliseconds": 1e-3,
    "s": 1.0, "sec": 1.0, "secs": 1.0, "second": 1.0, "seconds": 1.0,
    "m": 60.0, "min": 60.0, "mins": 60.0, "minute": 60.0, "minutes": 60.0,
    "h": 3600.0, "hr": 3600.0, "hrs": 3600.0, "hour": 3600.0, "hours": 3600.0,
}
_DURATION_RE = re.compile(r"^\s*([+-]?\d+(?:\.\d+)?)\s*([A-Za-z]+)\s*$")


# -- errors --------------------------------------------------------------------

class MeasureSyntaxError(SyntaxError):
    """Lexical or grammatical error at ``line``:``col`` (1-based)."""

    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        msg = f"expected {expected}" + (f", found {found}" if found else "")
        super().__init__(msg)
        self.line, self.col, self.expected, self.found = line, col, expected, found
        self.lineno, self.offset = line, col

    def __str__(self):
        return f"{self.line}:{self.col}: {self.msg}"


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # UnknownMetricRef | UnknownZoneRef | DuplicateName
    name: str
    line: int
    col: int

    @property
    def message(self) -> str:
        what = {"UnknownMetricRef": "unknown metric variable",
                "UnknownZoneRef": "unknown zone",
                "DuplicateName": "duplicate name"}[self.kind]
        return f"{what} {self.name!r} ({self.kind})"

    def format(self, filename: str = "<measure>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class MeasureSemanticError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(d.message for d in diagnostics))
        self.diagnostics = diagnostics


# -- AST -------------------------------------------------------------------------

Pos = tuple  # (line, col)


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Number:
    value: Union[int, float]


@dataclass(frozen=True)
class Duration:
    seconds: float


@dataclass(frozen=True)
class String:
    text: str


@dataclass(frozen=True)
class DictLit:
    items: tuple  # ((key Value, value Value), ...)


@dataclass(frozen=True)
class Elided:
    """The ``..`` placeholder used in abbreviated action argument lists."""


Value = Union[Ident, Number, Duration, String, DictLit, Elided]


@dataclass(frozen=True)
class Arg:
    value: Value
    key: str | None = None


@dataclass(frozen=True)
class MeasurementDecl:
    var: str
    metric: str
    args: tuple = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class AggTerm:
    """``func(var, window) comparator threshold``.

    ``accessor == "age"`` selects the seconds-since-last-sample pseudo-metric
    of ``var``; ``window`` is None for Last and for age terms.
    """

    func: str
    var: str
    window: float | None
    comparator: str
    threshold: float
    accessor: str | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: "Predicate"


Predicate = Union[AggTerm, And, Or, Not]


@dataclass(frozen=True)
class ZoneDecl:
    name: str
    predicate: Predicate
    pos: Pos = _pos()


@dataclass(frozen=True)
class Transition:
    src: str
    dst: str


@dataclass(frozen=True)
class Enter:
    zone: str


@dataclass(frozen=True)
class Leave:
    zone: str


@dataclass(frozen=True)
class While:
    zone: str


Trigger = Union[Transition, Enter, Leave, While]


@dataclass(frozen=True)
class ActionCall:
    name: str
    args: tuple = ()

    def kwargs(self) -> dict:
        return {a.key: a.value for a in self.args if a.key is not None}


@dataclass(frozen=True)
class ReactionDecl:
    trigger: Trigger
    action: ActionCall
    pos: Pos = _pos()


@dataclass(frozen=True)
class MeasureSpec:
    measurements: tuple = ()
    zones: tuple = ()
    reactions: tuple = ()

    def measurement(self, var: str) -> MeasurementDecl | None:
        return next((m for m in self.measurements if m.var == var), None)

    def zone(self, name: str) -> ZoneDecl | None:
        return next((z for z in self.zones if z.name == name), None)

    @property
    def zone_names(self) -> list[str]:
        return [z.name for z in self.zones]


def agg_terms(pred: Predicate):
    """Yield every comparison leaf of a zone predicate."""
    if isinstance(pred, AggTerm):
        yield pred
    elif isinstance(pred, Not):
        yield from agg_terms(pred.item)
    else:
        for it in pred.items:
            yield from agg_terms(it)


def trigger_zones(t: Trigger) -> tuple:
    if isinstance(t, Transition):
        return (t.src, t.dst)
    return (t.zone,)


def parse_duration(text: str) -> float:
    """``'5 minutes'`` / ``30s`` -> seconds."""
    m = _DURATION_RE.match(text)
    if not m or m.group(2).lower() not in _UNIT_SECONDS:
        raise ValueError(f"not a duration: {text!r}")
    return float(m.group(1)) * _UNIT_SECONDS[m.group(2).lower()]


# -- lexer -----------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER DURATION STRING OP EOF
    text: str
    line: int
    col: int
    value: object = None


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<ellipsis>\.\.\.?)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)(?P<suffix>%|[A-Za-z]+)?
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:-(?!>)[A-Za-z0-9_]+)*)
  | (?P<op>->|<=|>=|==|!=|[{}();,=:.<>-])
  | (?P<str>'(?:\\.|[^'\\\n])*'|"(?:\\.|[^"\\\n])*")
""", re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}


def _unquote(s: str) -> str:
    body = s[1:-1]
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise MeasureSyntaxError(line, col, "a token", repr(text[pos]))
        kind = m.lastgroup
        if kind == "suffix":
            kind = "num"
        lexeme = m.group(0)
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            num, suffix = m.group("num"), m.group("suffix")
            value = float(num) if any(c in num for c in ".eE") else int(num)
            if suffix is None:
                out.append(Token("NUMBER", lexeme, line, col, value))
            elif suffix == "%":
                out.append(Token("NUMBER", lexeme, line, col, float(value) / 100.0))
            elif suffix.lower() in _UNIT_SECONDS:
                out.append(Token("DURATION", lexeme, line, col,
                                 float(value) * _UNIT_SECONDS[suffix.lower()]))
            else:
                raise MeasureSyntaxError(line, col, "a number, percentage or duration", lexeme)
        elif kind == "ident":
            out.append(Token("IDENT", lexeme, line, col))
        elif kind == "op":
            out.append(Token("OP", lexeme, line, col))
        elif kind == "ellipsis":
            out.append(Token("OP", "..", line, col))
        elif kind == "str":
            out.append(Token("STRING", lexeme, line, col, _unquote(lexeme)))
        pos = m.end()
    out.append(Token("EOF", "", line, pos - line_start + 1))
    return out


# -- parser ----------------------------------------------------------------------

_MEAS_KW = ("measurement", "measurements")
_ZONE_KW = ("zones",)
_REACT_KW = ("reaction", "reactions", "action", "actions")


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def fail(self, expected: str, tok: Token | None = None):
        tok = tok or self.tok
        raise MeasureSyntaxError(tok.line, tok.col, expected, repr(tok.text) if tok.text else "end of input")

    def is_op(self, text: str, tok: Token | None = None) -> bool:
        tok = tok or self.tok
        return tok.kind == "OP" and tok.text == text

    def is_kw(self, *words: str, tok: Token | None = None) -> bool:
        tok = tok or self.tok
        return tok.kind == "IDENT" and tok.text.lower() in words

    def op(self, text: str) -> Token:
        if not self.is_op(text):
            self.fail(f"'{text}'")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "IDENT":
            self.fail(what)
        t = self.tok
        self.i += 1
        return t

    def keyword(self, words: tuple, what: str) -> None:
        if not self.is_kw(*words):
            self.fail(what)
        self.i += 1

    # program
    def program(self) -> MeasureSpec:
        # sections appear in this order; any of them may be left out
        sections = ((_MEAS_KW, self.mdecl), (_ZONE_KW, self.zdecl), (_REACT_KW, self.rdecl))
        parts: list[tuple] = []
        seen = False
        for words, decl in sections:
            items = []
            if self.is_kw(*words):
                self.i += 1
                self.op("{")
                while not self.is_op("}"):
                    items.append(decl())
                self.op("}")
                seen = True
            parts.append(tuple(items))
        if not seen:
            self.fail("'measurement', 'zones' or 'reaction'")
        if self.tok.kind != "EOF":
            self.fail("end of input")
        return MeasureSpec(*parts)

    def mdecl(self) -> MeasurementDecl:
        var = self.ident("measurement variable")
        self.op("=")
        metric = self.ident("measurement function name")
        args = self.arglist(allow_elided=False)
        self.op(";")
        return MeasurementDecl(var.text, metric.text, args, (var.line, var.col))

    def arglist(self, allow_elided: bool) -> tuple:
        self.op("(")
        args = []
        if not self.is_op(")"):
            while True:
                args.append(self.arg(allow_elided))
                if self.is_op(","):
                    self.i += 1
                    continue
                break
        self.op(")")
        return tuple(args)

    def arg(self, allow_elided: bool) -> Arg:
        if allow_elided and self.is_op(".."):
            self.i += 1
            return Arg(Elided())
        if self.tok.kind == "IDENT" and self.is_op("=", self.peek()):
            key = self.ident().text
            self.op("=")
            return Arg(self.value(), key)
        return Arg(self.value())

    def value(self) -> Value:
        t = self.tok
        if t.kind == "IDENT":
            self.i += 1
            return Ident(t.text)
        if t.kind == "NUMBER":
            self.i += 1
            return Number(t.value)
        if self.is_op("-") and self.peek().kind == "NUMBER":
            self.i += 2
            return Number(-self.toks[self.i - 1].value)
        if t.kind == "DURATION":
            self.i += 1
            return Duration(t.value)
        if t.kind == "STRING":
            self.i += 1
            return String(t.value)
        if self.is_op("{"):
            self.i += 1
            items = []
            if not self.is_op("}"):
                while True:
                    k = self.value()
                    self.op(":")
                    items.append((k, self.value()))
                    if self.is_op(","):
                        self.i += 1
                        continue
                    break
            self.op("}")
            return DictLit(tuple(items))
        self.fail("a value")

    def zdecl(self) -> ZoneDecl:
        name = self.ident("zone name")
        self.op("=")
        pred = self.orexpr()
        self.op(";")
        return ZoneDecl(name.text, pred, (name.line, name.col))

    def orexpr(self) -> Predicate:
        items = [self.andexpr()]
        while self.is_kw("or"):
            self.i += 1
            items.append(self.andexpr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def andexpr(self) -> Predicate:
        items = [self.notexpr()]
        while self.is_kw("and"):
            self.i += 1
            items.append(self.notexpr())
        return items[0] if len(items) == 1 else And(tuple(items))

    def notexpr(self) -> Predicate:
        if self.is_kw("not"):
            self.i += 1
            return Not(self.notexpr())
        if self.is_op("("):
            self.i += 1
            inner = self.orexpr()
            self.op(")")
            return inner
        return self.compare()

    def compare(self) -> AggTerm:
        start = self.tok
        head = self.ident("aggregate call or metric variable")
        accessor = None
        window = None
        if self.is_op("("):
            func = next((f for f in AGG_FUNCS if f.lower() == head.text.lower()), None)
            if func is None:
                self.fail(f"one of {', '.join(AGG_FUNCS)}", head)
            self.i += 1
            var = self.ident("metric variable").text
            if func != "Last":
                self.op(",")
                window = self.duration()
            self.op(")")
        elif self.is_op("."):
            self.i += 1
            acc = self.ident("'age'")
            if acc.text != "age":
                self.fail("'age'", acc)
            func, var, accessor = "Last", head.text, "age"
        else:
            func, var = "Last", head.text
        cmp_tok = self.tok
        if not (cmp_tok.kind == "OP" and cmp_tok.text in COMPARATORS):
            self.fail("a comparator")
        self.i += 1
        if accessor == "age":
            threshold = self.duration(bare_number_ok=True, positive=False)
        else:
            neg = self.is_op("-")
            if neg:
                self.i += 1
            t = self.tok
            if t.kind != "NUMBER":
                self.fail("a numeric threshold")
            self.i += 1
            threshold = float(-t.value if neg else t.value)
        return AggTerm(func, var, window, cmp_tok.text, threshold, accessor, (start.line, start.col))

    def duration(self, bare_number_ok: bool = False, positive: bool = True) -> float:
        t = self.tok
        if t.kind == "DURATION":
            secs = t.value
        elif t.kind == "STRING":
            try:
                secs = parse_duration(t.value)
            except ValueError:
                self.fail("a duration such as '5 minutes' or 30s")
        elif t.kind == "NUMBER" and bare_number_ok:
            secs = float(t.value)
        else:
            self.fail("a duration such as '5 minutes' or 30s")
        if positive and not secs > 0:
            self.fail("a positive duration")
        self.i += 1
        return float(secs)

    def rdecl(self) -> ReactionDecl:
        start = self.tok
        if self.is_kw("in") and self.peek().kind == "IDENT":
            self.i += 1
            trig: Trigger = While(self.ident("zone name").text)
        elif self.is_op("->"):
            self.i += 1
            trig = Enter(self.ident("zone name").text)
        else:
            src = self.ident("zone name or '->'").text
            self.op("->")
            if self.tok.kind == "IDENT" and not self.is_op("(", self.peek()):
                trig = Transition(src, self.ident().text)
            else:
                trig = Leave(src)
        if self.is_op(":") or self.is_op("="):
            self.i += 1
        else:
            self.fail("':'")
        name = self.ident("action name").text
        args = self.arglist(allow_elided=True)
        self.op(";")
        return ReactionDecl(trig, ActionCall(name, args), (start.line, start.col))


def parse_unchecked(text: str) -> MeasureSpec:
    """Parse without the semantic pass."""
    return _Parser(text).program()


def validate(spec: MeasureSpec) -> list[Diagnostic]:
    """Reference and uniqueness checks, in source order."""
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    for m in spec.measurements:
        if m.var in seen:
            diags.append(Diagnostic("DuplicateName", m.var, *m.pos))
        seen.add(m.var)
    zones: set[str] = set()
    for z in spec.zones:
        if z.name in zones:
            diags.append(Diagnostic("DuplicateName", z.name, *z.pos))
        zones.add(z.name)
        for term in agg_terms(z.predicate):
            if term.var not in seen:
                diags.append(Diagnostic("UnknownMetricRef", term.var, *(term.pos if term.pos != (0, 0) else z.pos)))
    for r in spec.reactions:
        for zn in trigger_zones(r.trigger):
            if zn not in zones:
                diags.append(Diagnostic("UnknownZoneRef", zn, *r.pos))
    return diags


def parse(text: str | bytes) -> MeasureSpec:
    """Parse and validate a MEASURE program.

    Raises MeasureSyntaxError on malformed input and MeasureSemanticError
    (carrying every diagnostic) when references do not resolve.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    spec = parse_unchecked(text)
    diags = validate(spec)
    if diags:
        raise MeasureSemanticError(diags)
    return spec


# -- serializer ------------------------------------------------------------------

def _fmt_num(x: Union[int, float]) -> str:
    return repr(x)


def _fmt_secs(s: float) -> str:
    txt = repr(float(s))
    return (txt[:-2] if txt.endswith(".0") else txt) + "s"


def _fmt_value(v: Value) -> str:
    if isinstance(v, Ident):
        return v.name
    if isinstance(v, Number):
        return _fmt_num(v.value)
    if isinstance(v, Duration):
        return _fmt_secs(v.seconds)
    if isinstance(v, String):
        return json.dumps(v.text)
    if isinstance(v, DictLit):
        return "{" + ", ".join(f"{_fmt_value(k)}: {_fmt_value(x)}" for k, x in v.items) + "}"
    if isinstance(v, Elided):
        return ".."
    raise TypeError(v)


def _fmt_arg(a: Arg) -> str:
    return f"{a.key}={_fmt_value(a.value)}" if a.key is not None else _fmt_value(a.value)


def _fmt_pred(p: Predicate, parent: int = 0) -> str:
    # precedence: or=1, and=2, not=3, leaf=4
    if isinstance(p, AggTerm):
        if p.accessor == "age":
            lhs, rhs = f"{p.var}.age", _fmt_secs(p.threshold)
        else:
            lhs = f"Last({p.var})" if p.func == "Last" else f"{p.func}({p.var}, '{_fmt_secs(p.window)}')"
            rhs = _fmt_num(p.threshold)
        return f"{lhs} {p.comparator} {rhs}"
    if isinstance(p, Not):
        return f"not {_fmt_pred(p.item, 3)}"
    level, word = (1, "or") if isinstance(p, Or) else (2, "and")
    body = f" {word} ".join(_fmt_pred(i, level + 1 if isinstance(i, type(p)) else level) for i in p.items)
    return f"({body})" if parent >= level else body


def _fmt_trigger(t: Trigger) -> str:
    if isinstance(t, Transition):
        return f"{t.src}->{t.dst}"
    if isinstance(t, Enter):
        return f"->{t.zone}"
    if isinstance(t, Leave):
        return f"{t.zone}->"
    return f"in {t.zone}"


def serialize(spec: MeasureSpec) -> str:
    """Canonical MEASURE text; windows and ages are written in seconds."""
    out = ["measurement {"]
    for m in spec.measurements:
        out.append(f"  {m.var} = {m.metric}({', '.join(_fmt_arg(a) for a in m.args)});")
    out.append("} zones {")
    for z in spec.zones:
        out.append(f"  {z.name} = {_fmt_pred(z.predicate)};")
    out.append("} reaction {")
    for r in spec.reactions:
        args = ", ".join(_fmt_arg(a) for a in r.action.args)
        out.append(f"  {_fmt_trigger(r.trigger)}: {r.action.name}({args});")
    out.append("}")
    return "\n".join(out)


def to_json(spec: MeasureSpec) -> dict:
    """Plain-data view of the AST for machine consumers."""

    def val(v: Value):
        if isinstance(v, Ident):
            return {"ident": v.name}
        if isinstance(v, Number):
            return {"number": v.value}
        if isinstance(v, Duration):
            return {"seconds": v.seconds}
        if isinstance(v, String):
            return {"string": v.text}
        if isinstance(v, DictLit):
            return {"dict": [[val(k), val(x)] for k, x in v.items]}
        return {"elided": True}

    def arg(a: Arg):
        d = {"value": val(a.value)}
        if a.key is not None:
            d["key"] = a.key
        return d

    def pred(p: Predicate):
        if isinstance(p, AggTerm):
            return {"func": p.func, "var": p.var, "window_s": p.window, "accessor": p.accessor,
                    "cmp": p.comparator, "threshold": p.threshold}
        if isinstance(p, Not):
            return {"not": pred(p.item)}
        return {"or" if isinstance(p, Or) else "and": [pred(i) for i in p.items]}

    def trig(t: Trigger):
        if isinstance(t, Transition):
            return {"type": "transition", "from": t.src, "to": t.dst}
        return {"type": type(t).__name__.lower(), "zone": t.zone}

    return {
        "measurements": [{"var": m.var, "metric": m.metric, "args": [arg(a) for a in m.args]}
                         for m in spec.measurements],
        "zones": [{"name": z.name, "predicate": pred(z.predicate)} for z in spec.zones],
        "reactions": [{"trigger": trig(r.trigger),
                       "action": {"name": r.action.name, "args": [arg(a) for a in r.action.args]}}
                      for r in spec.reactions],
    }


# -- binding against a forwarding graph ------------------------------------------

@dataclass
class BindingReport:
    resolved: list = field(default_factory=list)    # [(var, name, kind)]
    unresolved: list = field(default_factory=list)  # [(var, name)]

    @property
    def ok(self) -> bool:
        return not self.unresolved

    def to_dict(self) -> dict:
        return {"resolved": [list(r) for r in self.resolved],
                "unresolved": [list(u) for u in self.unresolved]}


def bind(spec: MeasureSpec, nffg) -> BindingReport:
    """Resolve positional identifier arguments of measurements against the
    nodes (vnf/sap/port) and link ids of ``nffg`` and all its sub-graphs."""
    known: dict[str, str] = {}
    if nffg is not None:
        for g in nffg.walk():
            for n in g.nodes.values():
                known.setdefault(n.id, n.kind)
            for ln in g.links:
                lid = ln.attrs.get("id")
                if lid:
                    known.setdefault(lid, "link")
    report = BindingReport()
    for m in spec.measurements:
        for a in m.args:
            if a.key is not None or not isinstance(a.value, Ident):
                continue
            name = a.value.name
            if name in known:
                report.resolved.append((m.var, name, known[name]))
            else:
                report.unresolved.append((m.var, name))
    return report
