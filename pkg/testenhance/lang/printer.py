"""Deterministic printer for linear unit tests."""

from enum import Enum

from testenhance.lang.nodes import (
    AssertStmt,
    CallStmt,
    Cast,
    Comment,
    ConstructorCall,
    Expr,
    Literal,
    MethodCall,
    Opaque,
    Statement,
    TestCase,
    VarDecl,
    VarRef,
)

INDENT = "    "


class RenderStyle(Enum):
    """Whether comments are printed."""
    WITH_COMMENTS = "with_comments"
    STRIPPED = "stripped"


def render(test: TestCase, style: RenderStyle = RenderStyle.WITH_COMMENTS) -> str:
    """
    Render a test method as source text.

    The same AST always yields byte-identical text; the stripped style
    omits Comment statements, attached comments and leading comments.
    """
    lines: list[str] = []
    if style is RenderStyle.WITH_COMMENTS:
        lines.extend(format_comment(text) for text in test.leading_comments)
    if test.annotation:
        lines.append(test.annotation)

    header = f"public void {test.name}()"
    if test.throws:
        header += " throws " + ", ".join(test.throws)
    lines.append(header + " {")
    lines.extend(INDENT + line for line in render_statements(test.statements, style))
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_statements(statements, style: RenderStyle = RenderStyle.WITH_COMMENTS) -> list[str]:
    """Render statements one per entry, without indentation."""
    lines = []
    for stmt in statements:
        if isinstance(stmt, Comment):
            if style is RenderStyle.WITH_COMMENTS:
                lines.append(format_comment(stmt.text))
            continue
        line = render_statement(stmt)
        if style is RenderStyle.WITH_COMMENTS and stmt.attached_comments:
            line += "  " + " ".join(format_comment(c) for c in stmt.attached_comments)
        lines.append(line)
    return lines


def render_statement(stmt: Statement) -> str:
    """Render one statement without its attached comments."""
    if isinstance(stmt, VarDecl):
        return f"{stmt.type_name} {stmt.var_name} = {render_expr(stmt.initializer)};"
    if isinstance(stmt, CallStmt):
        return f"{stmt.receiver}.{stmt.method}({_args(stmt.args)});"
    if isinstance(stmt, AssertStmt):
        args = stmt.args if stmt.message is None else (stmt.message,) + stmt.args
        return f"{stmt.kind.value}({_args(args)});"
    if isinstance(stmt, Comment):
        return format_comment(stmt.text)
    if isinstance(stmt, Opaque):
        return stmt.raw
    raise TypeError(f"Unknown statement: {stmt!r}")


def render_expr(expr: Expr) -> str:
    """Render an expression; literal lexemes are printed unchanged."""
    if isinstance(expr, Literal):
        return expr.lexeme
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, ConstructorCall):
        return f"new {expr.type_name}({_args(expr.args)})"
    if isinstance(expr, MethodCall):
        return f"{expr.receiver}.{expr.method}({_args(expr.args)})"
    if isinstance(expr, Cast):
        return f"({expr.primitive}){render_expr(expr.inner)}"
    raise TypeError(f"Unknown expression: {expr!r}")


def format_comment(text: str) -> str:
    return f"// {text}" if text else "//"


def _args(args) -> str:
    return ", ".join(render_expr(arg) for arg in args)
