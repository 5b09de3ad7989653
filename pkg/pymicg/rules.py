"""
Expression grammar shared by deprivation cutoff rules and metric expressions.

A cutoff rule compares a field (or an arithmetic expression over fields) to a
literal and combines comparisons with ``AND``, ``OR``, ``NOT`` and
parentheses::

    haz < -2
    makes_friends == difficult OR makes_friends == cannot
    prior_births - ideal_children > 0
    domestic_task_hours > $domestic_task_hours_threshold

Literals are numbers, quoted strings or bare categorical tokens. ``$name``
refers to a catalog parameter. The arithmetic subset (``+ - * / ^``, unary
minus and the functions in ``FUNCTIONS``) is also used on its own for custom
metric components.

Evaluation is three-valued: when any field referenced by a rule is missing
(or an arithmetic sub-expression is not finite) the result is missing.
"""
import functools
import math
import operator
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pymicg.exceptions import CatalogError, CatalogSyntaxError

KEYWORDS = ("AND", "OR", "NOT")
COMPARISONS: Dict[str, Callable[[Any, Any], Any]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}
ARITHMETIC: Dict[str, Callable[[Any, Any], Any]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}
FUNCTIONS: Dict[str, Callable[[Any], Any]] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "abs": np.abs,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<param>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>'[^']*'|"[^"]*")
  | (?P<cmp><=|>=|==|!=|<|>)
  | (?P<arith>[-+*/^])
  | (?P<lparen>\()
  | (?P<rparen>\))
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int  # 1-based token index


def tokenize(text: str) -> List[Token]:
    """Split ``text`` into tokens, appending an ``eof`` token."""
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise CatalogSyntaxError(f"unexpected character {text[pos]!r}", len(tokens) + 1, text)
        pos = match.end()
        kind = match.lastgroup
        if kind == "ws":
            continue
        value = match.group()
        if kind == "name" and value.upper() in KEYWORDS:
            kind = "keyword"
            value = value.upper()
        tokens.append(Token(kind, value, len(tokens) + 1))
    tokens.append(Token("eof", "", len(tokens) + 1))
    return tokens


# Expression tree.

@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Field:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Negate:
    operand: Any


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class Call:
    function: str
    argument: Any


@dataclass(frozen=True)
class Compare:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class Not:
    operand: Any


@dataclass(frozen=True)
class Logical:
    op: str
    operands: Tuple[Any, ...]


_BOOLEAN_NODES = (Compare, Not, Logical)

Node = Union[Number, Field, Param, Text, Negate, BinaryOp, Call, Compare, Not, Logical]


def _is_boolean(node: Node) -> bool:
    return isinstance(node, _BOOLEAN_NODES)


class _Parser:
    """Recursive-descent parser; one instance per input text."""

    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != "eof":
            self.index += 1
        return token

    def error(self, message: str, token: Optional[Token] = None) -> CatalogSyntaxError:
        token = token or self.current
        found = "end of input" if token.kind == "eof" else repr(token.text)
        return CatalogSyntaxError(f"{message}, found {found}", token.position, self.text)

    def expect_end(self) -> None:
        if self.current.kind != "eof":
            raise self.error("expected end of input")

    # boolean layer
    def parse_or(self) -> Node:
        operands = [self.parse_and()]
        while self.current.kind == "keyword" and self.current.text == "OR":
            token = self.advance()
            self._require_boolean(operands[0], token)
            operands.append(self.parse_and())
            self._require_boolean(operands[-1], token)
        if len(operands) == 1:
            return operands[0]
        return Logical("OR", tuple(operands))

    def parse_and(self) -> Node:
        operands = [self.parse_not()]
        while self.current.kind == "keyword" and self.current.text == "AND":
            token = self.advance()
            self._require_boolean(operands[0], token)
            operands.append(self.parse_not())
            self._require_boolean(operands[-1], token)
        if len(operands) == 1:
            return operands[0]
        return Logical("AND", tuple(operands))

    def parse_not(self) -> Node:
        if self.current.kind == "keyword" and self.current.text == "NOT":
            token = self.advance()
            operand = self.parse_not()
            self._require_boolean(operand, token)
            return Not(operand)
        return self.parse_comparison()

    def parse_comparison(self) -> Node:
        left = self.parse_additive()
        if self.current.kind != "cmp":
            return left
        op_token = self.advance()
        if _is_boolean(left):
            raise CatalogSyntaxError("comparison of a boolean expression", op_token.position, self.text)
        right = self.parse_literal()
        if isinstance(right, Text):
            if not isinstance(left, Field):
                raise CatalogSyntaxError("categorical literal needs a plain field on the left",
                                         op_token.position, self.text)
            if op_token.text not in ("==", "!="):
                raise CatalogSyntaxError(f"operator {op_token.text} is not defined for categorical values",
                                         op_token.position, self.text)
        return Compare(op_token.text, left, right)

    def parse_literal(self) -> Node:
        token = self.current
        if token.kind == "arith" and token.text in "+-":
            self.advance()
            number = self.current
            if number.kind != "number":
                raise self.error("expected a number after sign")
            self.advance()
            value = float(number.text)
            return Number(-value if token.text == "-" else value)
        if token.kind == "number":
            self.advance()
            return Number(float(token.text))
        if token.kind == "param":
            self.advance()
            return Param(token.text[1:])
        if token.kind == "string":
            self.advance()
            return Text(token.text[1:-1])
        if token.kind == "name":
            self.advance()
            return Text(token.text)
        raise self.error("expected a literal")

    # arithmetic layer
    def parse_additive(self) -> Node:
        left = self.parse_multiplicative()
        while self.current.kind == "arith" and self.current.text in "+-":
            token = self.advance()
            right = self.parse_multiplicative()
            self._require_numeric(left, token)
            self._require_numeric(right, token)
            left = BinaryOp(token.text, left, right)
        return left

    def parse_multiplicative(self) -> Node:
        left = self.parse_unary()
        while self.current.kind == "arith" and self.current.text in "*/":
            token = self.advance()
            right = self.parse_unary()
            self._require_numeric(left, token)
            self._require_numeric(right, token)
            left = BinaryOp(token.text, left, right)
        return left

    def parse_unary(self) -> Node:
        if self.current.kind == "arith" and self.current.text == "-":
            token = self.advance()
            operand = self.parse_unary()
            self._require_numeric(operand, token)
            if isinstance(operand, Number):
                return Number(-operand.value)
            return Negate(operand)
        return self.parse_power()

    def parse_power(self) -> Node:
        base = self.parse_primary()
        if self.current.kind == "arith" and self.current.text == "^":
            token = self.advance()
            exponent = self.parse_unary()
            self._require_numeric(base, token)
            self._require_numeric(exponent, token)
            return BinaryOp("^", base, exponent)
        return base

    def parse_primary(self) -> Node:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Number(float(token.text))
        if token.kind == "param":
            self.advance()
            return Param(token.text[1:])
        if token.kind == "name":
            self.advance()
            if self.current.kind == "lparen":
                if token.text not in FUNCTIONS:
                    raise CatalogSyntaxError(f"unknown function {token.text!r}", token.position, self.text)
                self.advance()
                argument = self.parse_additive()
                self._require_numeric(argument, token)
                if self.current.kind != "rparen":
                    raise self.error("expected ')'")
                self.advance()
                return Call(token.text, argument)
            return Field(token.text)
        if token.kind == "lparen":
            self.advance()
            inner = self.parse_or()
            if self.current.kind != "rparen":
                raise self.error("expected ')'")
            self.advance()
            return inner
        raise self.error("expected a field, number or '('")

    def _require_boolean(self, node: Node, token: Token) -> None:
        if not _is_boolean(node):
            raise CatalogSyntaxError(f"{token.text} needs boolean operands", token.position, self.text)

    def _require_numeric(self, node: Node, token: Token) -> None:
        if _is_boolean(node):
            raise CatalogSyntaxError(f"{token.text} needs numeric operands", token.position, self.text)


def _collect(node: Node, numeric: set, categorical: set, params: set) -> None:
    if isinstance(node, Field):
        numeric.add(node.name)
    elif isinstance(node, Param):
        params.add(node.name)
    elif isinstance(node, Compare):
        if isinstance(node.right, Text):
            categorical.add(node.left.name)
        else:
            _collect(node.left, numeric, categorical, params)
            _collect(node.right, numeric, categorical, params)
    elif isinstance(node, (Negate, Not)):
        _collect(node.operand, numeric, categorical, params)
    elif isinstance(node, BinaryOp):
        _collect(node.left, numeric, categorical, params)
        _collect(node.right, numeric, categorical, params)
    elif isinstance(node, Call):
        _collect(node.argument, numeric, categorical, params)
    elif isinstance(node, Logical):
        for operand in node.operands:
            _collect(operand, numeric, categorical, params)


class _EvalState:
    def __init__(self, size: int) -> None:
        self.invalid = np.zeros(size, dtype=bool)


def _eval(node: Node, columns: Mapping[str, Any], params: Mapping[str, float], state: _EvalState):
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Field):
        return columns[node.name]
    if isinstance(node, Param):
        return float(params[node.name])
    if isinstance(node, Text):
        return node.value
    if isinstance(node, Negate):
        return np.negative(_eval(node.operand, columns, params, state))
    if isinstance(node, BinaryOp):
        left = _eval(node.left, columns, params, state)
        right = _eval(node.right, columns, params, state)
        return ARITHMETIC[node.op](left, right)
    if isinstance(node, Call):
        return FUNCTIONS[node.function](_eval(node.argument, columns, params, state))
    if isinstance(node, Compare):
        if isinstance(node.right, Text):
            values = columns[node.left.name]
            matches = np.fromiter((str(v) == node.right.value for v in values), dtype=bool, count=len(values))
            return matches if node.op == "==" else ~matches
        left = np.asarray(_eval(node.left, columns, params, state), dtype=float)
        right = np.asarray(_eval(node.right, columns, params, state), dtype=float)
        state.invalid |= ~np.isfinite(left) | ~np.isfinite(right)
        return COMPARISONS[node.op](left, right)
    if isinstance(node, Not):
        return np.logical_not(_eval(node.operand, columns, params, state))
    if isinstance(node, Logical):
        parts = [_eval(operand, columns, params, state) for operand in node.operands]
        reducer = np.logical_and if node.op == "AND" else np.logical_or
        return functools.reduce(reducer, parts)
    raise TypeError(f"unknown node {node!r}")


@dataclass(frozen=True)
class CutoffRule:
    """A parsed deprivation cutoff: deprived when the expression holds."""

    text: str
    tree: Any = field(repr=False, compare=False)
    numeric_fields: FrozenSet[str] = frozenset()
    categorical_fields: FrozenSet[str] = frozenset()
    parameters: FrozenSet[str] = frozenset()

    @classmethod
    def parse(cls, text: str) -> "CutoffRule":
        parser = _Parser(text)
        tree = parser.parse_or()
        parser.expect_end()
        if not _is_boolean(tree):
            raise CatalogSyntaxError("a cutoff rule must contain a comparison",
                                     parser.current.position, text)
        numeric: set = set()
        categorical: set = set()
        params: set = set()
        _collect(tree, numeric, categorical, params)
        both = numeric & categorical
        if both:
            raise CatalogError(f"field(s) {sorted(both)} used both as numeric and categorical in {text!r}")
        return cls(text, tree, frozenset(numeric), frozenset(categorical), frozenset(params))

    @property
    def fields(self) -> FrozenSet[str]:
        return self.numeric_fields | self.categorical_fields

    def negated(self) -> "CutoffRule":
        return CutoffRule(f"NOT ({self.text})", Not(self.tree), self.numeric_fields,
                          self.categorical_fields, self.parameters)

    def evaluate(self, columns: Mapping[str, Sequence[Any]], params: Optional[Mapping[str, float]] = None) -> np.ndarray:
        """
        Evaluate the rule column-wise.

        Returns a float array with 1.0 (deprived), 0.0 (not deprived) or NaN
        (missing) per row.
        """
        params = params or {}
        missing_params = self.parameters - set(params)
        if missing_params:
            raise CatalogError(f"rule {self.text!r} needs parameter(s) {sorted(missing_params)}")
        prepared: Dict[str, np.ndarray] = {}
        size = None
        for name in sorted(self.fields):
            if name not in columns:
                raise CatalogError(f"rule {self.text!r} references unknown field {name!r}")
            values = np.asarray(columns[name], dtype=float if name in self.numeric_fields else object)
            prepared[name] = values
            size = len(values) if size is None else size
        if size is None:
            raise CatalogError(f"rule {self.text!r} references no field")
        missing = np.zeros(size, dtype=bool)
        for values in prepared.values():
            missing |= np.asarray(pd.isna(values), dtype=bool)
        state = _EvalState(size)
        with np.errstate(all="ignore"):
            outcome = np.broadcast_to(_eval(self.tree, prepared, params, state), (size,))
        result = outcome.astype(float)
        result[missing | state.invalid] = np.nan
        return result

    def evaluate_record(self, record: Mapping[str, Any], params: Optional[Mapping[str, float]] = None) -> Optional[bool]:
        """Evaluate on a single record; ``None`` means missing."""
        columns = {}
        for name in self.fields:
            value = record.get(name)
            if name in self.numeric_fields:
                columns[name] = [np.nan if value is None else value]
            else:
                columns[name] = [value]
        value = self.evaluate(columns, params)[0]
        if math.isnan(value):
            return None
        return bool(value)

    def __str__(self) -> str:
        return self.text


class NumericExpression:
    """A parsed arithmetic expression over named variables, e.g. ``1/y^2``."""

    def __init__(self, text: str, variables: Optional[Sequence[str]] = None) -> None:
        parser = _Parser(text)
        tree = parser.parse_additive()
        parser.expect_end()
        numeric: set = set()
        categorical: set = set()
        params: set = set()
        _collect(tree, numeric, categorical, params)
        if params:
            raise CatalogSyntaxError("parameters are not allowed in metric expressions", 1, text)
        if variables is not None:
            unknown = numeric - set(variables)
            if unknown:
                raise CatalogError(f"expression {text!r} uses unknown variable(s) {sorted(unknown)}")
        self.text = text
        self.tree = tree
        self.variables = frozenset(numeric)

    def __call__(self, **values: float) -> float:
        state = _EvalState(1)
        with np.errstate(all="ignore"):
            result = _eval(self.tree, values, {}, state)
        return float(result)

    def __repr__(self) -> str:
        return f"NumericExpression({self.text!r})"


def parse_rule(text: str) -> CutoffRule:
    return CutoffRule.parse(text)
