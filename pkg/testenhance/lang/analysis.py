"""Analysis utilities: normalization, call signatures and test length."""

import logging
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum

from testenhance.lang.errors import ParseError
from testenhance.lang.lexer import TokenKind, tokenize
from testenhance.lang.nodes import (
    AssertStmt,
    CallStmt,
    Cast,
    Comment,
    ConstructorCall,
    Expr,
    MethodCall,
    Opaque,
    Statement,
    TestCase,
    VarDecl,
    VarRef,
    iter_exprs,
)
from testenhance.lang.printer import RenderStyle, render_statements

logger = logging.getLogger(__name__)

CONSTRUCTOR = "<init>"


class CallKind(Enum):
    """How a call is dispatched."""
    CONSTRUCTOR = "constructor"
    INSTANCE = "instance"
    STATIC = "static"


@dataclass(frozen=True)
class CallSignature:
    """
    A call shape with argument values ignored.

    owner is the constructed type, the receiver variable, or the static
    type name depending on kind.
    """
    kind: CallKind
    owner: str
    method: str
    arity: int

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError("arity must be >= 0")

    @property
    def name_key(self) -> tuple[CallKind, str, str]:
        """The signature without its arity."""
        return (self.kind, self.owner, self.method)

    def describe(self) -> str:
        if self.kind is CallKind.CONSTRUCTOR:
            return f"new {self.owner}/{self.arity}"
        return f"{self.owner}.{self.method}/{self.arity}"


@dataclass(frozen=True)
class NormalizeOptions:
    alpha_rename: bool = True
    strip_comments: bool = True
    strip_assert_messages: bool = True


FULL_NORMALIZATION = NormalizeOptions()


def signature_of(expr: ConstructorCall | MethodCall | CallStmt, declared) -> CallSignature:
    """Signature of a single call given the names of declared variables."""
    if isinstance(expr, ConstructorCall):
        return CallSignature(CallKind.CONSTRUCTOR, expr.type_name, CONSTRUCTOR, len(expr.args))
    kind = CallKind.INSTANCE if expr.receiver in declared else CallKind.STATIC
    return CallSignature(kind, expr.receiver, expr.method, len(expr.args))


def statement_signatures(stmt: Statement, declared) -> list[CallSignature]:
    """Every call signature of a statement, outermost first."""
    signatures = []
    if isinstance(stmt, CallStmt):
        signatures.append(signature_of(stmt, declared))
    for expr in iter_exprs(stmt):
        if isinstance(expr, (ConstructorCall, MethodCall)):
            signatures.append(signature_of(expr, declared))
    return signatures


def signature_set(test: TestCase) -> frozenset[CallSignature]:
    """All call signatures in a test; Opaque statements contribute nothing."""
    declared = set(test.declared_names)
    found = set()
    for stmt in test.statements:
        found.update(statement_signatures(stmt, declared))
    return frozenset(found)


def total_length(test: TestCase) -> int:
    """Number of non-Comment statements."""
    return sum(1 for stmt in test.statements if not isinstance(stmt, Comment))


def normalize(test: TestCase, opts: NormalizeOptions = FULL_NORMALIZATION) -> TestCase:
    """
    Canonicalize a test for structural comparison.

    alpha_rename maps variables to v0, v1, ... in first-declaration order
    and rewrites every reference, receivers and opaque text included.
    """
    statements = list(test.statements)
    leading = test.leading_comments

    if opts.strip_comments:
        statements = [
            replace(s, attached_comments=()) for s in statements if not isinstance(s, Comment)
        ]
        leading = ()

    if opts.strip_assert_messages:
        statements = [
            replace(s, message=None) if isinstance(s, AssertStmt) else s for s in statements
        ]

    if opts.alpha_rename:
        mapping = {}
        for stmt in statements:
            if isinstance(stmt, VarDecl) and stmt.var_name not in mapping:
                mapping[stmt.var_name] = f"v{len(mapping)}"
        statements = [_rename_statement(s, mapping) for s in statements]

    return replace(test, statements=tuple(statements), leading_comments=leading)


def equivalence_key(test: TestCase) -> str:
    """Comment-stripped render of the fully normalized body."""
    normalized = normalize(test, FULL_NORMALIZATION)
    return "\n".join(render_statements(normalized.statements, RenderStyle.STRIPPED))


def opaque_catalogue(tests) -> Counter:
    """Count unsupported constructs by their leading token."""
    catalogue: Counter = Counter()
    for test in tests:
        for stmt in test.statements:
            if isinstance(stmt, Opaque):
                catalogue[_construct_key(stmt.raw)] += 1
    return catalogue


def _construct_key(raw: str) -> str:
    try:
        tokens = [t for t in tokenize(raw) if t.kind is not TokenKind.COMMENT]
    except ParseError:
        return "<unlexable>"
    if not tokens:
        return "<empty>"
    key = tokens[0].text
    if len(tokens) > 1 and tokens[1].is_punct("["):
        key += "[]"
    return key


def _rename_statement(stmt: Statement, mapping: dict[str, str]) -> Statement:
    if isinstance(stmt, VarDecl):
        return replace(
            stmt,
            var_name=mapping.get(stmt.var_name, stmt.var_name),
            initializer=_rename_expr(stmt.initializer, mapping),
        )
    if isinstance(stmt, CallStmt):
        return replace(
            stmt,
            receiver=mapping.get(stmt.receiver, stmt.receiver),
            args=tuple(_rename_expr(a, mapping) for a in stmt.args),
        )
    if isinstance(stmt, AssertStmt):
        return replace(stmt, args=tuple(_rename_expr(a, mapping) for a in stmt.args))
    if isinstance(stmt, Opaque):
        return replace(stmt, raw=_rename_raw(stmt.raw, mapping))
    return stmt


def _rename_expr(expr: Expr, mapping: dict[str, str]) -> Expr:
    if isinstance(expr, VarRef):
        return VarRef(mapping.get(expr.name, expr.name))
    if isinstance(expr, MethodCall):
        return MethodCall(
            mapping.get(expr.receiver, expr.receiver),
            expr.method,
            tuple(_rename_expr(a, mapping) for a in expr.args),
        )
    if isinstance(expr, ConstructorCall):
        return ConstructorCall(expr.type_name, tuple(_rename_expr(a, mapping) for a in expr.args))
    if isinstance(expr, Cast):
        return Cast(expr.primitive, _rename_expr(expr.inner, mapping))
    return expr


def _rename_raw(raw: str, mapping: dict[str, str]) -> str:
    """Rename identifiers inside opaque text, skipping member names after '.'."""
    try:
        tokens = tokenize(raw)
    except ParseError:
        logger.debug("Opaque text not renamed: %r", raw)
        return raw

    pieces = []
    cursor = 0
    previous = None
    for tok in tokens:
        if (tok.kind is TokenKind.IDENT and tok.text in mapping
                and not (previous is not None and previous.is_punct("."))):
            pieces.append(raw[cursor:tok.start])
            pieces.append(mapping[tok.text])
            cursor = tok.end
        if tok.kind is not TokenKind.COMMENT:
            previous = tok
    pieces.append(raw[cursor:])
    return "".join(pieces)
