"""Parser, printer and analysis for the linear test language."""

from testenhance.lang.analysis import (
    FULL_NORMALIZATION,
    CallKind,
    CallSignature,
    NormalizeOptions,
    equivalence_key,
    normalize,
    opaque_catalogue,
    signature_set,
    total_length,
)
from testenhance.lang.errors import (
    EmptyBody,
    MalformedHeader,
    ParseError,
    UnclosedBody,
    UnterminatedString,
)
from testenhance.lang.nodes import TestCase
from testenhance.lang.parser import parse_body, parse_test_case, parse_test_file
from testenhance.lang.printer import RenderStyle, render

__all__ = [
    "FULL_NORMALIZATION",
    "CallKind",
    "CallSignature",
    "EmptyBody",
    "MalformedHeader",
    "NormalizeOptions",
    "ParseError",
    "RenderStyle",
    "TestCase",
    "UnclosedBody",
    "UnterminatedString",
    "equivalence_key",
    "normalize",
    "opaque_catalogue",
    "parse_body",
    "parse_test_case",
    "parse_test_file",
    "render",
    "signature_set",
    "total_length",
]
