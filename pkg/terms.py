"""Term grammar for symbols, phases, weights and norm specs in experiment configs.

    value := number | inf | -inf | list | term
    list  := '[' [value (',' value)*] ']'
    term  := name ['(' [arg (',' arg)*] ')']
    arg   := [ident '='] value

Names may contain dots (``phase.linear``) and trailing primes (``n'``).
Serialization is canonical: no whitespace, keyword arguments sorted, integral
numbers without a fractional part, and empty argument lists dropped.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Tuple, Union

from symbols import PHASE_LIBRARY, SYMBOL_LIBRARY, PhaseSpec, SymbolSpec
from tf_analysis import NestedNormSpec
from weights import (
    ConstantWeight,
    PhaseSpaceTransformA,
    PolynomialWeight,
    ProductWeight,
    TensorWeight,
    VWeight,
    Weight,
    omega_tensor,
    pullback,
    sobolev,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Bad experiment config; line and column point into the offending text (1-based)."""

    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def __str__(self) -> str:
        if self.line:
            return f"{self.line}:{self.column}: {self.message}"
        return self.message


Value = Union[float, Tuple[Any, ...], "Term"]


@dataclass(frozen=True)
class Term:
    name: str
    args: Tuple[Value, ...] = ()
    kwargs: Tuple[Tuple[str, Value], ...] = ()
    position: Tuple[int, int] = field(default=(0, 0), compare=False)

    def __str__(self) -> str:
        return serialize(self)

    def kwarg_dict(self) -> Dict[str, Value]:
        return dict(self.kwargs)


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<inf>[-+]?inf(?![A-Za-z0-9_'.]))
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*'*(?:\.[A-Za-z_][A-Za-z0-9_]*'*)*)
  | (?P<punct>[()\[\],=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise ConfigError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, match.group(), line, pos - line_start + 1))
        else:
            for offset, char in enumerate(match.group()):
                if char == "\n":
                    line += 1
                    line_start = pos + offset + 1
        pos = match.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.current
        self.index += 1
        return token

    def expect(self, text: str) -> _Token:
        token = self.current
        if token.text != text:
            found = repr(token.text) if token.kind != "end" else "end of input"
            raise ConfigError(f"expected {text!r}, found {found}", token.line, token.column)
        return self.advance()

    def parse(self) -> Value:
        value = self.value()
        if self.current.kind != "end":
            raise ConfigError(f"trailing input {self.current.text!r}", self.current.line, self.current.column)
        return value

    def value(self) -> Value:
        token = self.current
        if token.kind == "number":
            self.advance()
            return float(token.text)
        if token.kind == "inf":
            self.advance()
            return float(token.text)
        if token.text == "[":
            return self.list_value()
        if token.kind == "name":
            return self.term()
        found = repr(token.text) if token.kind != "end" else "end of input"
        raise ConfigError(f"expected a value, found {found}", token.line, token.column)

    def list_value(self) -> Tuple[Value, ...]:
        self.expect("[")
        items = []
        if self.current.text != "]":
            items.append(self.value())
            while self.current.text == ",":
                self.advance()
                items.append(self.value())
        self.expect("]")
        return tuple(items)

    def term(self) -> Term:
        head = self.advance()
        args: List[Value] = []
        kwargs: Dict[str, Value] = {}
        if self.current.text == "(":
            self.advance()
            if self.current.text != ")":
                self.argument(args, kwargs)
                while self.current.text == ",":
                    self.advance()
                    self.argument(args, kwargs)
            self.expect(")")
        return Term(head.text, tuple(args), tuple(sorted(kwargs.items())), (head.line, head.column))

    def argument(self, args: List[Value], kwargs: Dict[str, Value]) -> None:
        token = self.current
        if token.kind == "name" and self.tokens[self.index + 1].text == "=":
            self.index += 2
            if token.text in kwargs:
                raise ConfigError(f"keyword {token.text!r} given twice", token.line, token.column)
            kwargs[token.text] = self.value()
            return
        if kwargs:
            raise ConfigError("positional argument after keyword arguments", token.line, token.column)
        args.append(self.value())


def parse_value(text: str) -> Value:
    return _Parser(text).parse()


def parse_term(text: str) -> Term:
    value = parse_value(text)
    if not isinstance(value, Term):
        raise ConfigError(f"expected a term, got {serialize(value)!r}", 1, 1)
    return value


def _number(value: float) -> str:
    if value != value:
        raise ConfigError("NaN is not a valid config value")
    if value in (float("inf"), float("-inf")):
        return "inf" if value > 0 else "-inf"
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def serialize(value: Value) -> str:
    if isinstance(value, Term):
        parts = [serialize(a) for a in value.args] + [f"{k}={serialize(v)}" for k, v in value.kwargs]
        return f"{value.name}({','.join(parts)})" if parts else value.name
    if isinstance(value, tuple):
        return "[" + ",".join(serialize(v) for v in value) + "]"
    return _number(float(value))


def canonical(text: str) -> str:
    return serialize(parse_value(text))


# -----------------------------
# Resolution
# -----------------------------


def _plain(value: Value) -> Any:
    if isinstance(value, Term):
        if value.args or value.kwargs:
            raise ConfigError(f"nested term {serialize(value)!r} is not allowed here", *value.position)
        return value.name
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if not math.isfinite(value):
        return value
    return int(value) if value == int(value) and abs(value) < 1e15 else value


def _call(factory: Callable[..., Any], term: Term, what: str, args: List[Any] = None, kwargs: Dict[str, Any] = None) -> Any:
    args = [_plain(a) for a in term.args] if args is None else args
    kwargs = {k: _plain(v) for k, v in term.kwargs} if kwargs is None else kwargs
    try:
        return factory(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build {what} {serialize(term)!r}: {exc}", *term.position) from exc


def resolve_symbol(term: Union[str, Term]) -> SymbolSpec:
    term = parse_term(term) if isinstance(term, str) else term
    factory = SYMBOL_LIBRARY.get(term.name)
    if factory is None:
        raise ConfigError(f"unknown symbol {term.name!r}; known: {', '.join(sorted(SYMBOL_LIBRARY))}", *term.position)
    return _call(factory, term, "symbol")


def resolve_phase(term: Union[str, Term]) -> PhaseSpec:
    term = parse_term(term) if isinstance(term, str) else term
    factory = PHASE_LIBRARY.get(term.name)
    if factory is None:
        raise ConfigError(f"unknown phase {term.name!r}; known: {', '.join(sorted(PHASE_LIBRARY))}", *term.position)
    return _call(factory, term, "phase")


def _weight_parts(term: Term) -> List[Weight]:
    if term.kwargs:
        raise ConfigError(f"{term.name} takes weights only", *term.position)
    parts = []
    for arg in term.args:
        if not isinstance(arg, Term):
            raise ConfigError(f"{term.name} expects weight terms, got {serialize(arg)!r}", *term.position)
        parts.append(resolve_weight(arg))
    return parts


def _planar(term: Term) -> Weight:
    inner = _weight_parts(term)
    if len(inner) != 1 or not isinstance(inner[0], VWeight):
        raise ConfigError("planar expects a single v(...) weight", *term.position)
    return inner[0].planar()


def _pullback(term: Term) -> Weight:
    if not term.args or not isinstance(term.args[0], Term):
        raise ConfigError("pullback expects a weight as its first argument", *term.position)
    base = resolve_weight(term.args[0])
    transform = _call(PhaseSpaceTransformA, term, "transform", [_plain(a) for a in term.args[1:]], {k: _plain(v) for k, v in term.kwargs})
    return pullback(base, transform)


WEIGHT_LIBRARY: Dict[str, Callable[[Term], Weight]] = {
    "one": lambda t: _call(lambda dim=2: ConstantWeight(dim), t, "weight"),
    "omega": lambda t: _call(lambda s, dim=2: PolynomialWeight(s, dim), t, "weight"),
    "v": lambda t: _call(VWeight, t, "weight"),
    "sobolev": lambda t: _call(sobolev, t, "weight"),
    "omega_tensor": lambda t: _call(omega_tensor, t, "weight"),
    "planar": _planar,
    "tensor": lambda t: _call(TensorWeight, t, "weight", [_weight_parts(t)], {}),
    "product": lambda t: _call(ProductWeight, t, "weight", [_weight_parts(t)], {}),
    "pullback": _pullback,
}


def resolve_weight(term: Union[str, Term]) -> Weight:
    term = parse_term(term) if isinstance(term, str) else term
    builder = WEIGHT_LIBRARY.get(term.name)
    if builder is None:
        raise ConfigError(f"unknown weight {term.name!r}; known: {', '.join(sorted(WEIGHT_LIBRARY))}", *term.position)
    return builder(term)


def resolve_norm(term: Union[str, Term]) -> NestedNormSpec:
    """norm(order=[n,n0,..], exps=[inf,1,..]), outermost index first."""
    term = parse_term(term) if isinstance(term, str) else term
    if term.name != "norm" or term.args:
        raise ConfigError(f"expected norm(order=[..], exps=[..]), got {serialize(term)!r}", *term.position)
    kwargs = term.kwarg_dict()
    unknown = set(kwargs) - {"order", "exps"}
    if unknown or "order" not in kwargs or "exps" not in kwargs:
        raise ConfigError("norm needs exactly the keywords order and exps", *term.position)
    order = kwargs["order"]
    if not isinstance(order, tuple) or not all(isinstance(v, Term) and not v.args for v in order):
        raise ConfigError("norm order must be a list of index names", *term.position)
    return _call(NestedNormSpec, term, "norm", [tuple(v.name for v in order), tuple(_plain(kwargs["exps"]))], {})
