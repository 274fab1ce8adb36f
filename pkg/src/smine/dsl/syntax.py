"""Lexer, recursive-descent parser, and pretty printer for the query DSL.

Grammar::

    program := "output" "(" expr ")"
    expr    := call
    call    := IDENT "(" [arg {"," arg}] ")"
    arg     := expr | STRING | NUMBER | IDENT "=" (STRING | NUMBER)

Strings are double-quoted with backslash escapes; numbers are parsed as
floats.  ``parse(pretty_print(parse(s)))`` is structurally equal to
``parse(s)`` for every valid source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

from ..errors import DslStaticError, DslSyntaxError

Scalar = Union[str, float]
Value = Union["Call", str, float]


@dataclass(frozen=True)
class Call:
    """One predicate or combinator application."""

    name: str
    args: tuple[Value, ...] = ()
    kwargs: tuple[tuple[str, Scalar], ...] = ()
    pos: tuple[int, int] = field(default=(0, 0), compare=False, repr=False)

    def walk(self):
        yield self
        for a in self.args:
            if isinstance(a, Call):
                yield from a.walk()


@dataclass(frozen=True)
class ScenarioProgram:
    """Statically valid program: source text plus the expression under
    the single ``output`` root."""

    source: str
    root: Call


# --- lexer -----------------------------------------------------------------

_PUNCT = {"(": "LPAREN", ")": "RPAREN", ",": "COMMA", "=": "EQUALS"}


@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT STRING NUMBER LPAREN RPAREN COMMA EQUALS EOF
    value: object
    line: int
    col: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while j < n:
                c = source[j]
                if c == "\\":
                    if j + 1 >= n:
                        raise DslSyntaxError("unterminated escape", line, col)
                    esc = source[j + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                    continue
                if c == '"':
                    break
                if c == "\n":
                    raise DslSyntaxError("unterminated string", line, col)
                buf.append(c)
                j += 1
            else:
                raise DslSyntaxError("unterminated string", line, col)
            tokens.append(_Token("STRING", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and (source[j].isdigit() or source[j] in ".eE+-"):
                # stop '+-' unless part of an exponent
                if source[j] in "+-" and source[j - 1] not in "eE":
                    break
                j += 1
            text = source[i:j]
            try:
                value = float(text)
            except ValueError:
                raise DslSyntaxError(f"bad number literal {text!r}", line, col) from None
            tokens.append(_Token("NUMBER", value, line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("IDENT", source[i:j], line, col))
            col += j - i
            i = j
            continue
        raise DslSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("EOF", None, line, col))
    return tokens


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def _fail(self, message: str):
        raise DslSyntaxError(message, self.cur.line, self.cur.col)

    def expect(self, kind: str) -> _Token:
        if self.cur.kind != kind:
            self._fail(f"expected {kind}, found {self.cur.kind}")
        tok = self.cur
        self.i += 1
        return tok

    def parse_call(self) -> Call:
        name_tok = self.expect("IDENT")
        self.expect("LPAREN")
        args: list[Value] = []
        kwargs: list[tuple[str, Scalar]] = []
        if self.cur.kind != "RPAREN":
            while True:
                self.parse_arg(args, kwargs)
                if self.cur.kind == "COMMA":
                    self.i += 1
                    continue
                break
        self.expect("RPAREN")
        return Call(
            name=name_tok.value,
            args=tuple(args),
            kwargs=tuple(kwargs),
            pos=(name_tok.line, name_tok.col),
        )

    def parse_arg(self, args: list, kwargs: list):
        tok = self.cur
        if tok.kind == "STRING":
            self.i += 1
            args.append(tok.value)
        elif tok.kind == "NUMBER":
            self.i += 1
            args.append(float(tok.value))
        elif tok.kind == "IDENT":
            nxt = self.tokens[self.i + 1]
            if nxt.kind == "EQUALS":
                self.i += 2
                val = self.cur
                if val.kind == "STRING":
                    kwargs.append((tok.value, val.value))
                elif val.kind == "NUMBER":
                    kwargs.append((tok.value, float(val.value)))
                else:
                    self._fail("keyword argument value must be a string or number")
                self.i += 1
            elif nxt.kind == "LPAREN":
                args.append(self.parse_call())
            else:
                self._fail("bare identifier is not a valid argument")
        else:
            self._fail(f"unexpected {tok.kind} in argument list")


def parse(source: str, catalog=None) -> ScenarioProgram:
    """Parse and statically check a program against the predicate catalog.

    Raises :class:`DslSyntaxError` with position on malformed text and
    :class:`DslStaticError` on unknown predicates, arity/type mismatches,
    or a missing/duplicated ``output`` root.
    """
    from .catalog import DEFAULT_CATALOG  # local import to avoid a cycle

    catalog = catalog or DEFAULT_CATALOG
    parser = _Parser(_tokenize(source))
    root_call = parser.parse_call()
    if parser.cur.kind != "EOF":
        parser._fail("trailing input after program")
    if root_call.name != "output":
        raise DslStaticError(f"program root must be output(...), found {root_call.name!r}")
    if root_call.kwargs or len(root_call.args) != 1 or not isinstance(root_call.args[0], Call):
        raise DslStaticError("output(...) takes exactly one sub-query argument")
    expr = root_call.args[0]
    for node in expr.walk():
        if node.name == "output":
            raise DslStaticError("output(...) may only appear at the root")
        catalog.check_call(node)
    return ScenarioProgram(source=source, root=expr)


# --- pretty printer ---------------------------------------------------------


def _fmt_value(value: Value) -> str:
    if isinstance(value, Call):
        return _fmt_call(value)
    if isinstance(value, str):
        return json.dumps(value)
    return repr(float(value))


def _fmt_call(call: Call) -> str:
    parts = [_fmt_value(a) for a in call.args]
    parts.extend(f"{k}={_fmt_value(v)}" for k, v in call.kwargs)
    return f"{call.name}({', '.join(parts)})"


def pretty_print(program_or_call) -> str:
    """Canonical source form; parses back to a structurally equal AST."""
    if isinstance(program_or_call, ScenarioProgram):
        return f"output({_fmt_call(program_or_call.root)})"
    return _fmt_call(program_or_call)
