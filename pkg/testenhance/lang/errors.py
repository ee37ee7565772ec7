"""Errors raised while lexing and parsing test sources."""


class ParseError(Exception):
    """Base class for test-language parse errors."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(ParseError):
    """No method signature could be found."""


class EmptyBody(ParseError):
    """The method body holds no parseable statement."""


class UnterminatedString(ParseError):
    """A string or char literal is not closed before the end of its line."""


class UnclosedBody(ParseError):
    """The method body is missing its closing brace."""
