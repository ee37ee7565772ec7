"""Recursive-descent parser for linear unit tests."""

import logging
from dataclasses import replace

from testenhance.lang.errors import EmptyBody, MalformedHeader, UnclosedBody
from testenhance.lang.lexer import Token, TokenKind, comment_text, number_kind, tokenize
from testenhance.lang.nodes import (
    ASSERT_NAMES,
    PRIMITIVE_TYPES,
    RESERVED_WORDS,
    STRUCTURED,
    AssertKind,
    AssertStmt,
    CallStmt,
    Cast,
    Comment,
    ConstructorCall,
    Expr,
    Literal,
    LiteralKind,
    MethodCall,
    Opaque,
    Statement,
    TestCase,
    VarDecl,
    VarRef,
    is_identifier,
)

logger = logging.getLogger(__name__)

_MODIFIERS = frozenset({"public", "protected", "private", "static", "final", "synchronized"})
_OPENERS = {"(": ")", "[": "]"}


def parse_test_case(source: str) -> TestCase:
    """
    Parse the first test method found in source.

    Args:
        source: One test method, optionally preceded by annotations.

    Returns:
        The parsed TestCase.

    Raises:
        MalformedHeader: If no method signature is found.
        EmptyBody: If the body holds no parseable statement.
        UnterminatedString: If a literal is not closed.
        UnclosedBody: If the body has no closing brace.
    """
    return _parse_methods(source, limit=1)[0]


def parse_test_file(source: str) -> list[TestCase]:
    """Parse every test method in a file, in source order."""
    return _parse_methods(source)


def parse_body(source: str) -> list[Statement]:
    """Parse a bare statement sequence (no method header)."""
    return _BodyBuilder(source, tokenize(source)).build()


def _parse_methods(source: str, limit: int | None = None) -> list[TestCase]:
    tokens = tokenize(source)
    tests: list[TestCase] = []
    leading: list[str] = []
    annotation: str | None = None
    start_line: int | None = None
    i = 0

    while i < len(tokens):
        tok = tokens[i]

        if tok.kind is TokenKind.COMMENT:
            leading.append(comment_text(tok))
            i += 1
            continue

        if tok.is_punct("@") and i + 1 < len(tokens) and tokens[i + 1].is_ident():
            end = i + 2
            if end < len(tokens) and tokens[end].is_punct("("):
                end = _skip_balanced(tokens, end)
            annotation = source[tok.start:tokens[end - 1].end]
            start_line = start_line or tok.line
            i = end
            continue

        if tok.kind is TokenKind.IDENT and tok.text in _MODIFIERS:
            start_line = start_line or tok.line
            i += 1
            continue

        if tok.is_ident("void"):
            header = _match_header(tokens, i)
            if header is not None:
                name, throws, brace = header
                close = _find_body_end(tokens, brace)
                statements = _BodyBuilder(source, tokens[brace + 1:close]).build()
                if not any(isinstance(s, STRUCTURED) for s in statements):
                    raise EmptyBody(f"test {name} has no parseable statement", line=tok.line)
                tests.append(TestCase(
                    name=name,
                    statements=tuple(statements),
                    leading_comments=tuple(leading),
                    annotation=annotation,
                    throws=throws,
                    source_span=(start_line or tok.line, tokens[close].line),
                ))
                if limit is not None and len(tests) >= limit:
                    break
                leading, annotation, start_line = [], None, None
                i = close + 1
                continue

        # Anything else (class header, fields, stray braces) resets the header state
        leading, annotation, start_line = [], None, None
        i += 1

    if not tests:
        raise MalformedHeader("no test method signature found")
    return tests


def _skip_balanced(tokens: list[Token], index: int) -> int:
    """Return the index just past the parenthesis group opened at index."""
    depth = 0
    for j in range(index, len(tokens)):
        if tokens[j].is_punct("("):
            depth += 1
        elif tokens[j].is_punct(")"):
            depth -= 1
            if depth == 0:
                return j + 1
    return len(tokens)


def _match_header(tokens: list[Token], index: int) -> tuple[str, tuple[str, ...], int] | None:
    """Match `void name() [throws A, B] {` starting at the `void` token."""
    if index + 4 >= len(tokens):
        return None
    name_tok = tokens[index + 1]
    if name_tok.kind is not TokenKind.IDENT:
        return None
    if not (tokens[index + 2].is_punct("(") and tokens[index + 3].is_punct(")")):
        return None

    j = index + 4
    throws: list[str] = []
    if tokens[j].is_ident("throws"):
        j += 1
        while j < len(tokens) and tokens[j].kind is TokenKind.IDENT:
            parts = [tokens[j].text]
            j += 1
            while (j + 1 < len(tokens) and tokens[j].is_punct(".")
                   and tokens[j + 1].kind is TokenKind.IDENT):
                parts.append(tokens[j + 1].text)
                j += 2
            throws.append(".".join(parts))
            if j < len(tokens) and tokens[j].is_punct(","):
                j += 1
                continue
            break

    if j >= len(tokens) or not tokens[j].is_punct("{"):
        return None
    if not is_identifier(name_tok.text):
        raise MalformedHeader(f"invalid test name {name_tok.text!r}", line=name_tok.line)
    return name_tok.text, tuple(throws), j


def _find_body_end(tokens: list[Token], brace: int) -> int:
    depth = 0
    for j in range(brace, len(tokens)):
        if tokens[j].is_punct("{"):
            depth += 1
        elif tokens[j].is_punct("}"):
            depth -= 1
            if depth == 0:
                return j
    raise UnclosedBody("missing closing brace", line=tokens[brace].line)


class _BodyBuilder:
    """Splits body tokens into statements and attaches comments."""

    def __init__(self, source: str, tokens: list[Token]):
        self._source = source
        self._tokens = tokens
        self._declared: set[str] = set()

    def build(self) -> list[Statement]:
        statements: list[Statement] = []
        chunk: list[Token] = []
        has_comment = False
        paren = brace = 0
        last_end_line: int | None = None

        for index, tok in enumerate(self._tokens):
            if tok.kind is TokenKind.COMMENT:
                if chunk:
                    has_comment = True
                    continue
                text = comment_text(tok)
                if statements and last_end_line == tok.line:
                    prev = statements[-1]
                    statements[-1] = replace(
                        prev, attached_comments=prev.attached_comments + (text,)
                    )
                else:
                    statements.append(Comment(text))
                last_end_line = None
                continue

            chunk.append(tok)
            closes = False
            if tok.kind is TokenKind.PUNCT:
                if tok.text in _OPENERS:
                    paren += 1
                elif tok.text in (")", "]"):
                    paren -= 1
                elif tok.text == "{":
                    brace += 1
                elif tok.text == "}":
                    brace -= 1
                    if brace <= 0 and paren <= 0:
                        following = self._next_code_token(index)
                        closes = following is None or not following.is_punct(";")
                elif tok.text == ";" and paren <= 0 and brace <= 0:
                    closes = True

            if closes:
                statements.append(self._make_statement(chunk, has_comment))
                last_end_line = chunk[-1].line
                chunk, has_comment, paren, brace = [], False, 0, 0

        if chunk:
            logger.debug("Unterminated statement at line %d kept as opaque", chunk[0].line)
            statements.append(self._make_statement(chunk, has_comment))

        return statements

    def _next_code_token(self, index: int) -> Token | None:
        for tok in self._tokens[index + 1:]:
            if tok.kind is not TokenKind.COMMENT:
                return tok
        return None

    def _make_statement(self, chunk: list[Token], has_comment: bool) -> Statement:
        raw = self._source[chunk[0].start:chunk[-1].end]
        if has_comment:
            return Opaque(raw)
        stmt = _StatementParser(chunk).parse()
        if stmt is None:
            return Opaque(raw)
        if isinstance(stmt, VarDecl):
            if stmt.var_name in self._declared:
                return Opaque(raw)
            self._declared.add(stmt.var_name)
        return stmt


class _Mismatch(Exception):
    pass


class _StatementParser:
    """Parses one terminated statement; returns None outside the grammar."""

    def __init__(self, tokens: list[Token]):
        self._tokens = tokens
        self._pos = 0

    def parse(self) -> Statement | None:
        try:
            stmt = self._statement()
        except _Mismatch:
            return None
        if self._pos != len(self._tokens):
            return None
        return stmt

    def _peek(self, offset: int = 0) -> Token | None:
        index = self._pos + offset
        if index < len(self._tokens):
            return self._tokens[index]
        return None

    def _next(self) -> Token:
        tok = self._peek()
        if tok is None:
            raise _Mismatch()
        self._pos += 1
        return tok

    def _expect(self, text: str) -> None:
        if not self._next().is_punct(text):
            raise _Mismatch()

    def _name(self, allow_primitive: bool = False) -> str:
        tok = self._next()
        if tok.kind is not TokenKind.IDENT:
            raise _Mismatch()
        if allow_primitive and tok.text in PRIMITIVE_TYPES:
            return tok.text
        if not is_identifier(tok.text):
            raise _Mismatch()
        return tok.text

    def _statement(self) -> Statement:
        first, second = self._peek(), self._peek(1)
        if first is None or second is None or first.kind is not TokenKind.IDENT:
            raise _Mismatch()

        if first.text in ASSERT_NAMES and second.is_punct("("):
            return self._assert()
        if second.kind is TokenKind.IDENT:
            type_name = self._name(allow_primitive=True)
            var_name = self._name()
            self._expect("=")
            initializer = self._expr()
            self._expect(";")
            return VarDecl(type_name, var_name, initializer)
        if second.is_punct("."):
            receiver = self._name()
            self._expect(".")
            method = self._name()
            args = self._args()
            self._expect(";")
            return CallStmt(receiver, method, args)
        raise _Mismatch()

    def _assert(self) -> AssertStmt:
        kind = AssertKind(self._next().text)
        args = self._args()
        self._expect(";")
        message = None
        if (len(args) > kind.base_arity and isinstance(args[0], Literal)
                and args[0].kind is LiteralKind.STRING):
            message, args = args[0], args[1:]
        return AssertStmt(kind, args, message)

    def _args(self) -> tuple[Expr, ...]:
        self._expect("(")
        args: list[Expr] = []
        tok = self._peek()
        if tok is not None and tok.is_punct(")"):
            self._pos += 1
            return ()
        while True:
            args.append(self._expr())
            tok = self._next()
            if tok.is_punct(")"):
                return tuple(args)
            if not tok.is_punct(","):
                raise _Mismatch()

    def _expr(self) -> Expr:
        tok = self._peek()
        if tok is None:
            raise _Mismatch()

        if tok.is_punct("("):
            prim, close = self._peek(1), self._peek(2)
            if (prim is not None and close is not None and prim.kind is TokenKind.IDENT
                    and prim.text in PRIMITIVE_TYPES and close.is_punct(")")):
                self._pos += 3
                return Cast(prim.text, self._expr())
            minus, number, close = self._peek(1), self._peek(2), self._peek(3)
            if (minus is not None and minus.is_punct("-") and number is not None
                    and number.kind is TokenKind.NUMBER and close is not None and close.is_punct(")")):
                # Generated tests parenthesize negative numbers: (-1)
                self._pos += 4
                lexeme = f"(-{number.text})"
                return Literal(LiteralKind(number_kind(lexeme)), lexeme)
            raise _Mismatch()

        if tok.is_punct("-"):
            number = self._peek(1)
            if number is not None and number.kind is TokenKind.NUMBER:
                self._pos += 2
                lexeme = "-" + number.text
                return Literal(LiteralKind(number_kind(lexeme)), lexeme)
            raise _Mismatch()

        if tok.kind is TokenKind.NUMBER:
            self._pos += 1
            return Literal(LiteralKind(number_kind(tok.text)), tok.text)
        if tok.kind is TokenKind.STRING:
            self._pos += 1
            return Literal(LiteralKind.STRING, tok.text)
        if tok.kind is TokenKind.CHAR:
            self._pos += 1
            return Literal(LiteralKind.CHAR, tok.text)

        if tok.kind is not TokenKind.IDENT:
            raise _Mismatch()
        if tok.text in ("true", "false"):
            self._pos += 1
            return Literal(LiteralKind.BOOLEAN, tok.text)
        if tok.text == "null":
            self._pos += 1
            return Literal(LiteralKind.NULL, tok.text)
        if tok.text == "new":
            self._pos += 1
            type_name = self._name()
            return ConstructorCall(type_name, self._args())
        if tok.text in RESERVED_WORDS:
            raise _Mismatch()

        dot, method, paren = self._peek(1), self._peek(2), self._peek(3)
        if (dot is not None and dot.is_punct(".") and method is not None
                and method.kind is TokenKind.IDENT and paren is not None and paren.is_punct("(")):
            receiver = self._name()
            self._pos += 1
            method_name = self._name()
            return MethodCall(receiver, method_name, self._args())

        return VarRef(self._name())
