"""Lexer for the linear Java-like subset used by generated unit tests."""

import logging
import re
from dataclasses import dataclass
from enum import Enum

from testenhance.lang.errors import UnterminatedString

logger = logging.getLogger(__name__)


class TokenKind(Enum):
    """Kind of a lexical token."""
    IDENT = "ident"
    NUMBER = "number"
    STRING = "string"
    CHAR = "char"
    PUNCT = "punct"
    COMMENT = "comment"
    OTHER = "other"


@dataclass(frozen=True, slots=True)
class Token:
    """One token with its line number and offsets into the lexed text."""
    kind: TokenKind
    text: str
    line: int
    start: int
    end: int

    def is_punct(self, text: str) -> bool:
        return self.kind is TokenKind.PUNCT and self.text == text

    def is_ident(self, text: str | None = None) -> bool:
        if self.kind is not TokenKind.IDENT:
            return False
        return text is None or self.text == text


_PATTERNS = [
    ("ws", r"[ \t\f\r\n]+"),
    ("line_comment", r"//[^\n]*"),
    ("block_comment", r"/\*.*?\*/"),
    ("string", r'"(?:[^"\\\n]|\\.)*"'),
    ("char", r"'(?:\\[^\n][^'\n]*|[^'\\\n])'"),
    ("number", r"0[xX][0-9a-fA-F_]+[lL]?"
               r"|(?:\d[\d_]*\.\d*(?:[eE][+-]?\d+)?"
               r"|\.\d+(?:[eE][+-]?\d+)?"
               r"|\d[\d_]*[eE][+-]?\d+)[fFdD]?"
               r"|\d[\d_]*[fFdDlL]?"),
    ("ident", r"[A-Za-z_$][A-Za-z0-9_$]*"),
    ("punct", r"==|!=|<=|>=|&&|\|\||\+\+|--|->|::|\.\.\."
              r"|[{}()\[\];,.=<>!+\-*/%&|^~?:@]"),
]

_MASTER = re.compile(
    "|".join(f"(?P<{name}>{pattern})" for name, pattern in _PATTERNS),
    re.DOTALL,
)

_KINDS = {
    "line_comment": TokenKind.COMMENT,
    "string": TokenKind.STRING,
    "char": TokenKind.CHAR,
    "number": TokenKind.NUMBER,
    "ident": TokenKind.IDENT,
    "punct": TokenKind.PUNCT,
}


def tokenize(text: str, line_offset: int = 0) -> list[Token]:
    """
    Split text into tokens.

    Line comments are kept as COMMENT tokens; block comments are
    discarded with a warning. Characters outside the subset become
    OTHER tokens so that callers can still fall back to raw text.

    Args:
        text: Source text.
        line_offset: Added to every reported line number.

    Returns:
        List of tokens in source order.

    Raises:
        UnterminatedString: If a string or char literal is not closed
            before the end of its line.
    """
    tokens: list[Token] = []
    pos = 0
    line = 1 + line_offset
    length = len(text)

    while pos < length:
        match = _MASTER.match(text, pos)
        if match is None:
            char = text[pos]
            if char in "\"'":
                raise UnterminatedString("unterminated literal", line=line)
            tokens.append(Token(TokenKind.OTHER, char, line, pos, pos + 1))
            if char == "\n":
                line += 1
            pos += 1
            continue

        group = match.lastgroup
        value = match.group()
        if group == "block_comment":
            logger.warning("Block comment discarded at line %d", line)
        elif group != "ws":
            tokens.append(Token(_KINDS[group], value, line, match.start(), match.end()))

        line += value.count("\n")
        pos = match.end()

    return tokens


def comment_text(token: Token) -> str:
    """Return the text of a line comment without the leading slashes."""
    return token.text[2:].strip()


def number_kind(lexeme: str) -> str:
    """Classify a numeric lexeme as int, long, float or double."""
    lowered = lexeme.strip("()").lstrip("-").lower()
    if lowered.startswith("0x"):
        return "long" if lowered.endswith("l") else "int"
    if lowered.endswith("f"):
        return "float"
    if lowered.endswith("d") or "." in lowered or "e" in lowered:
        return "double"
    if lowered.endswith("l"):
        return "long"
    return "int"
