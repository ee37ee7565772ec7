"""AST node types for linear unit tests."""

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

PRIMITIVE_TYPES = frozenset({
    "byte", "short", "int", "long", "float", "double", "char", "boolean",
})

RESERVED_WORDS = frozenset({
    "abstract", "assert", "break", "case", "catch", "class", "const",
    "continue", "default", "do", "else", "enum", "extends", "final",
    "finally", "for", "goto", "if", "implements", "import", "instanceof",
    "interface", "native", "new", "package", "private", "protected",
    "public", "return", "static", "strictfp", "super", "switch",
    "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "true", "false", "null",
}) | PRIMITIVE_TYPES


class LiteralKind(Enum):
    """Kind of a literal expression."""
    INT = "int"
    LONG = "long"
    FLOAT = "float"
    DOUBLE = "double"
    STRING = "string"
    CHAR = "char"
    BOOLEAN = "boolean"
    NULL = "null"


class AssertKind(Enum):
    """Assertion methods understood by the statement grammar."""
    ASSERT_EQUALS = "assertEquals"
    ASSERT_TRUE = "assertTrue"
    ASSERT_FALSE = "assertFalse"
    ASSERT_NULL = "assertNull"
    ASSERT_NOT_NULL = "assertNotNull"
    ASSERT_SAME = "assertSame"
    ASSERT_NOT_SAME = "assertNotSame"
    FAIL = "fail"

    @property
    def base_arity(self) -> int:
        """Number of arguments without the optional message."""
        return _BASE_ARITY[self]


_BASE_ARITY = {
    AssertKind.ASSERT_EQUALS: 2,
    AssertKind.ASSERT_TRUE: 1,
    AssertKind.ASSERT_FALSE: 1,
    AssertKind.ASSERT_NULL: 1,
    AssertKind.ASSERT_NOT_NULL: 1,
    AssertKind.ASSERT_SAME: 2,
    AssertKind.ASSERT_NOT_SAME: 2,
    AssertKind.FAIL: 0,
}

ASSERT_NAMES = frozenset(kind.value for kind in AssertKind)


# Expressions

@dataclass(frozen=True)
class Literal:
    kind: LiteralKind
    lexeme: str


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class ConstructorCall:
    type_name: str
    args: tuple["Expr", ...] = ()


@dataclass(frozen=True)
class MethodCall:
    receiver: str
    method: str
    args: tuple["Expr", ...] = ()


@dataclass(frozen=True)
class Cast:
    primitive: str
    inner: "Expr"


Expr = Union[Literal, VarRef, ConstructorCall, MethodCall, Cast]


# Statements

@dataclass(frozen=True)
class VarDecl:
    type_name: str
    var_name: str
    initializer: Expr
    attached_comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class CallStmt:
    receiver: str
    method: str
    args: tuple[Expr, ...] = ()
    attached_comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class AssertStmt:
    kind: AssertKind
    args: tuple[Expr, ...] = ()
    message: Literal | None = None
    attached_comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class Comment:
    text: str
    attached_comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class Opaque:
    """A body fragment outside the grammar, carried verbatim."""
    raw: str
    attached_comments: tuple[str, ...] = ()


Statement = Union[VarDecl, CallStmt, AssertStmt, Comment, Opaque]

STRUCTURED = (VarDecl, CallStmt, AssertStmt)


@dataclass(frozen=True)
class TestCase:
    """
    One linear unit test.

    Equality is structural over name, statements, comments, annotation and
    throws list; source_span is informational only.
    """
    name: str
    statements: tuple[Statement, ...]
    leading_comments: tuple[str, ...] = ()
    annotation: str | None = "@Test"
    throws: tuple[str, ...] = ()
    source_span: tuple[int, int] = field(default=(0, 0), compare=False)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not is_identifier(self.name):
            raise ValueError(f"Invalid test name: {self.name!r}")

    def renamed(self, name: str) -> "TestCase":
        """Return a copy with a different method name."""
        return replace(self, name=name)

    def with_statements(self, statements) -> "TestCase":
        """Return a copy with a different statement list."""
        return replace(self, statements=tuple(statements))

    @property
    def structured_statements(self) -> list[Statement]:
        return [s for s in self.statements if isinstance(s, STRUCTURED)]

    @property
    def declared_names(self) -> list[str]:
        return [s.var_name for s in self.statements if isinstance(s, VarDecl)]


def is_identifier(text: str) -> bool:
    """Check the identifier grammar (letters, digits, underscore)."""
    return bool(IDENTIFIER_RE.match(text)) and text not in RESERVED_WORDS


def expr_children(expr: Expr) -> tuple[Expr, ...]:
    """Direct sub-expressions of an expression."""
    if isinstance(expr, (ConstructorCall, MethodCall)):
        return expr.args
    if isinstance(expr, Cast):
        return (expr.inner,)
    return ()


def statement_exprs(stmt: Statement) -> tuple[Expr, ...]:
    """Top-level expressions of a statement."""
    if isinstance(stmt, VarDecl):
        return (stmt.initializer,)
    if isinstance(stmt, (CallStmt, AssertStmt)):
        return stmt.args
    return ()


def iter_exprs(stmt: Statement):
    """Yield every expression of a statement in pre-order."""
    stack = list(reversed(statement_exprs(stmt)))
    while stack:
        expr = stack.pop()
        yield expr
        stack.extend(reversed(expr_children(expr)))
