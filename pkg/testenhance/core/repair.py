"""
Extraction, repair and alignment of LLM responses.

Everything here is a pure function over text and TestCase values; each
repair step returns a RepairLog describing what it changed.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from testenhance.lang.analysis import (
    CallKind,
    CallSignature,
    equivalence_key,
    statement_signatures,
)
from testenhance.lang.errors import EmptyBody, MalformedHeader, ParseError
from testenhance.lang.lexer import tokenize
from testenhance.lang.nodes import (
    STRUCTURED,
    AssertStmt,
    CallStmt,
    Comment,
    MethodCall,
    Opaque,
    Statement,
    TestCase,
    VarDecl,
    VarRef,
    is_identifier,
    iter_exprs,
)
from testenhance.lang.parser import parse_body, parse_test_case

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)
_HEADER_RE = re.compile(r"\bvoid\s+\w+\s*\(\s*\)")
_CTOR_ENTRY_RE = re.compile(r"^new\s+(?:[\w$]+\.)*([\w$]+)\s*/\s*(\d+)$")
_CALL_ENTRY_RE = re.compile(r"^(?:[\w$]+\.)+([\w$]+)\s*/\s*(\d+)$")

_CODE_ENDINGS = (";", "{", "}", ")")
_CONTINUATION_ENDINGS = (",", "(", "+", "=", ".", "&&", "||")
_CLOSERS = {")": "(", "]": "[", "}": "{"}
_OPENERS = {v: k for k, v in _CLOSERS.items()}


class RepairError(Exception):
    """Base exception for repair errors."""
    pass


class NoCodeFound(RepairError):
    """The response holds no code-like text."""
    pass


class UnbalancedBeyondRepair(RepairError):
    """Closing brackets exceed or contradict the opened ones."""
    pass


class NothingSalvageable(RepairError):
    """No statement of a refined test survived alignment."""
    pass


class RepairActionKind(Enum):
    EXTRACTED_FENCE = "extracted_fence"
    DEMOTED_PROSE = "demoted_prose"
    BALANCED_BRACKETS = "balanced_brackets"
    SKIPPED_STATEMENT = "skipped_statement"
    ARITY_FALLBACK = "arity_fallback"
    SUBSTITUTED_ORIGINAL = "substituted_original"


@dataclass(frozen=True)
class RepairAction:
    """
    One repair step.

    position is a 1-based line for prose demotion, the number of closers
    added for bracket balancing, and a 0-based statement index otherwise.
    """
    kind: RepairActionKind
    detail: str = ""
    position: int | None = None

    def to_dict(self) -> dict:
        data = {"action": self.kind.value, "detail": self.detail}
        if self.position is not None:
            data["position"] = self.position
        return data


@dataclass
class RepairLog:
    """Ordered record of repair actions."""
    actions: list[RepairAction] = field(default_factory=list)

    def add(self, kind: RepairActionKind, detail: str = "", position: int | None = None) -> None:
        action = RepairAction(kind, detail, position)
        logger.debug("Repair: %s %s", kind.value, detail)
        self.actions.append(action)

    def extend(self, other: "RepairLog") -> None:
        self.actions.extend(other.actions)

    def count(self, kind: RepairActionKind) -> int:
        return sum(1 for action in self.actions if action.kind is kind)

    def to_list(self) -> list[dict]:
        return [action.to_dict() for action in self.actions]

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)


def extract_code_block(response: str) -> str:
    """
    Pull the code out of an LLM response.

    The first fenced block with content wins; an unterminated final fence
    runs to the end of the response. Without fences, the longest run of
    consecutive code-like lines is returned.

    Raises:
        NoCodeFound: If neither a fence nor a code-like line exists.
    """
    for match in _FENCE_RE.finditer(response):
        content = match.group(1).strip("\n")
        if content.strip():
            return content

    best: list[str] = []
    run: list[str] = []
    for line in response.splitlines():
        if _is_code_like(line):
            run.append(line)
            if len(run) > len(best):
                best = list(run)
        else:
            run = []

    if not best:
        raise NoCodeFound("response contains no code")
    return "\n".join(best).strip("\n")


def _is_code_like(line: str) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    if not _lexes(stripped):
        return False
    return stripped.startswith(("//", "@")) or stripped.endswith(_CODE_ENDINGS)


def _lexes(text: str) -> bool:
    try:
        tokenize(text)
    except ParseError:
        return False
    return True


def demote_prose_lines(code: str) -> tuple[str, RepairLog]:
    """
    Turn explanatory prose lines into line comments.

    A line is kept when it is blank, already a comment, contains a
    statement terminator, is structural (braces, annotations) or continues
    a statement; every other line is prefixed with `// `.
    """
    log = RepairLog()
    lines = code.split("\n")
    out = []
    for number, line in enumerate(lines, start=1):
        if _keeps_line(line):
            out.append(line)
            continue
        indent = line[: len(line) - len(line.lstrip())]
        out.append(f"{indent}// {line.strip()}")
        log.add(RepairActionKind.DEMOTED_PROSE, line.strip(), number)
    return "\n".join(out), log


def _keeps_line(line: str) -> bool:
    stripped = line.strip()
    if not stripped or stripped.startswith("//"):
        return True
    if ";" in stripped:
        return True
    if stripped.endswith(("{", "}")) or stripped.startswith(("@", "}")):
        return _lexes(stripped)
    if stripped.endswith(_CONTINUATION_ENDINGS) or stripped.startswith((")", ".")):
        return _lexes(stripped)
    return False


def balance_brackets(code: str) -> tuple[str, RepairLog]:
    """
    Close brackets the model forgot.

    Parentheses and square brackets left open on a line ending with `;`
    are closed just before that `;`; anything still open at the end is
    closed last-open-first-closed, with `}` on its own line. Brackets in
    literals and comments are ignored.

    Raises:
        UnbalancedBeyondRepair: On a closer with no matching opener.
    """
    log = RepairLog()
    stack: list[tuple[str, int]] = []
    lines = code.split("\n")
    added = 0

    for number, line in enumerate(lines):
        _scan_line(line, number, stack)
        body = line.rstrip()
        if not body.endswith(";"):
            continue
        closers = ""
        while stack and stack[-1][1] == number and stack[-1][0] in "([":
            closers += _OPENERS[stack.pop()[0]]
        if closers:
            semicolon = len(body) - 1
            lines[number] = line[:semicolon] + closers + line[semicolon:]
            added += len(closers)

    text = "\n".join(lines)
    while stack:
        opener, _ = stack.pop()
        closer = _OPENERS[opener]
        if closer == "}":
            text += ("" if text.endswith("\n") else "\n") + "}"
        else:
            text += closer
        added += 1

    if added:
        log.add(RepairActionKind.BALANCED_BRACKETS, f"{added} closer(s) added", added)
    return text, log


def _scan_line(line: str, number: int, stack: list[tuple[str, int]]) -> None:
    quote = None
    i = 0
    while i < len(line):
        char = line[i]
        if quote:
            if char == "\\":
                i += 2
                continue
            if char == quote:
                quote = None
        elif char in "\"'":
            quote = char
        elif line.startswith("//", i):
            return
        elif char in _OPENERS:
            stack.append((char, number))
        elif char in _CLOSERS:
            if not stack:
                raise UnbalancedBeyondRepair(f"unexpected {char!r} on line {number + 1}")
            if stack[-1][0] != _CLOSERS[char]:
                raise UnbalancedBeyondRepair(
                    f"{char!r} on line {number + 1} does not close {stack[-1][0]!r}"
                )
            stack.pop()
        i += 1


class ApiManifest:
    """
    Extra calls accepted during alignment.

    One entry per line: `Type.method/arity` or `new Type/arity`; blank
    lines and lines starting with `#` are ignored.
    """

    def __init__(self, entries=()):
        self._entries: set[tuple[tuple[str, str], int]] = set(entries)

    @classmethod
    def parse(cls, text: str) -> "ApiManifest":
        entries = set()
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if match := _CTOR_ENTRY_RE.match(line):
                entries.add((("new", match.group(1)), int(match.group(2))))
            elif match := _CALL_ENTRY_RE.match(line):
                entries.add((("call", match.group(1)), int(match.group(2))))
            else:
                logger.warning("Ignoring malformed API manifest line %d: %s", number, line)
        return cls(entries)

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def _vocab_key(sig: CallSignature) -> tuple[str, str]:
    if sig.kind is CallKind.CONSTRUCTOR:
        return ("new", sig.owner)
    return ("call", sig.method)


def align_refinement(
    original: TestCase,
    refined_source: str,
    manifest: ApiManifest | None = None,
) -> tuple[TestCase, RepairLog]:
    """
    Reconcile a refined test with its original, statement by statement.

    Statements whose calls all belong to the original's vocabulary (or the
    manifest) are accepted with their new argument values. Unknown calls
    are skipped, arity changes fall back to the original call, and
    unparseable statements are replaced by the original statement at the
    same position when one exists. A statement referring to a variable
    not declared by an earlier accepted statement is skipped as well.

    Raises:
        NothingSalvageable: If no statement survives.
    """
    log = RepairLog()
    originals = [s for s in original.statements if not isinstance(s, Comment)]

    vocabulary: dict[tuple[str, str], set[int]] = {}
    declared_original = set(original.declared_names)
    for stmt in originals:
        for sig in statement_signatures(stmt, declared_original):
            vocabulary.setdefault(_vocab_key(sig), set()).add(sig.arity)
    for key, arity in manifest or ():
        vocabulary.setdefault(key, set()).add(arity)

    assert_shapes = {(s.kind, len(s.args)) for s in originals if isinstance(s, AssertStmt)}
    # Static receivers and fields the original already relies on
    fixed = {name for stmt in originals for name in _referenced_names(stmt)} - declared_original

    refined = [s for s in _refined_statements(refined_source) if not isinstance(s, Comment)]
    variables = declared_original | {s.var_name for s in refined if isinstance(s, VarDecl)}

    result: list[Statement] = []
    declared: set[str] = set()

    def dangling(stmt: Statement) -> str | None:
        for name in _referenced_names(stmt):
            if name in declared or name in fixed:
                continue
            if name in variables or name[:1].islower():
                return name
        return None

    def take(stmt: Statement) -> bool:
        if dangling(stmt) is not None:
            return False
        if isinstance(stmt, VarDecl):
            if stmt.var_name in declared:
                return False
            declared.add(stmt.var_name)
        result.append(stmt)
        return True

    for index, stmt in enumerate(refined):
        if isinstance(stmt, Opaque):
            if index < len(originals) and take(originals[index]):
                log.add(RepairActionKind.SUBSTITUTED_ORIGINAL, stmt.raw, index)
            else:
                log.add(RepairActionKind.SKIPPED_STATEMENT, stmt.raw, index)
            continue

        stmt = replace(stmt, attached_comments=())
        if isinstance(stmt, AssertStmt) and (stmt.kind, len(stmt.args)) not in assert_shapes:
            log.add(RepairActionKind.SKIPPED_STATEMENT, f"unknown assertion {stmt.kind.value}", index)
            continue

        missing = dangling(stmt)
        if missing is not None:
            log.add(RepairActionKind.SKIPPED_STATEMENT, f"undeclared variable {missing}", index)
            continue

        signatures = statement_signatures(stmt, declared)
        unknown = [s for s in signatures if _vocab_key(s) not in vocabulary]
        if unknown:
            log.add(RepairActionKind.SKIPPED_STATEMENT, f"unknown call {unknown[0].describe()}", index)
            continue

        mismatched = [s for s in signatures if s.arity not in vocabulary[_vocab_key(s)]]
        if mismatched:
            fallback = _fallback_for(_vocab_key(mismatched[0]), index, originals, declared_original)
            if fallback is not None and take(fallback):
                log.add(RepairActionKind.ARITY_FALLBACK, mismatched[0].describe(), index)
            else:
                log.add(RepairActionKind.SKIPPED_STATEMENT, f"arity {mismatched[0].describe()}", index)
            continue

        if not take(stmt):
            log.add(RepairActionKind.SKIPPED_STATEMENT, f"duplicate variable {stmt.var_name}", index)

    if not any(isinstance(s, STRUCTURED) for s in result):
        raise NothingSalvageable(f"no statement of the refined {original.name} survived alignment")
    return original.with_statements(result), log


def _referenced_names(stmt: Statement) -> list[str]:
    """Variable references and call receivers of a statement, in order."""
    names = [stmt.receiver] if isinstance(stmt, CallStmt) else []
    for expr in iter_exprs(stmt):
        if isinstance(expr, VarRef):
            names.append(expr.name)
        elif isinstance(expr, MethodCall):
            names.append(expr.receiver)
    return [name for name in names if is_identifier(name)]


def _fallback_for(key, index, originals, declared) -> Statement | None:
    def has_key(stmt):
        return any(_vocab_key(s) == key for s in statement_signatures(stmt, declared))

    if index < len(originals) and has_key(originals[index]):
        return originals[index]
    return next((s for s in originals if has_key(s)), None)


def _refined_statements(source: str) -> list[Statement]:
    try:
        if _HEADER_RE.search(source):
            return list(parse_test_case(source).statements)
        return parse_body(source)
    except MalformedHeader:
        pass
    except ParseError as e:
        logger.debug("Refined source falls back to line parsing: %s", e)
        return _parse_lines(source)
    try:
        return parse_body(source)
    except ParseError:
        return _parse_lines(source)


def _parse_lines(source: str) -> list[Statement]:
    statements: list[Statement] = []
    for line in source.splitlines():
        stripped = line.strip()
        if (not stripped or stripped.startswith("@") or stripped in ("{", "}")
                or (_HEADER_RE.search(stripped) and stripped.endswith("{"))):
            continue
        try:
            statements.extend(parse_body(stripped))
        except ParseError:
            statements.append(Opaque(stripped))
    return statements


def coerce_to_test(code: str, template: TestCase) -> TestCase:
    """
    Parse code as a test shaped like template.

    A full method keeps its body and leading comments; a bare body is
    wrapped in the template's header. Name, annotation and throws always
    come from the template.

    Raises:
        ParseError: If the code does not form a test.
    """
    if _HEADER_RE.search(code):
        parsed = parse_test_case(code)
        return replace(
            template,
            statements=parsed.statements,
            leading_comments=parsed.leading_comments,
        )
    statements = parse_body(code)
    if not any(isinstance(s, STRUCTURED) for s in statements):
        raise EmptyBody("response body has no parseable statement")
    return template.with_statements(statements)


def validate_logic_preserved(original: TestCase, enhanced: TestCase, strict: bool) -> bool:
    """In strict mode, require structural equality after full normalization."""
    if not strict:
        return True
    return equivalence_key(original) == equivalence_key(enhanced)


def iter_comments(test: TestCase):
    """Yield every comment text of a test in source order."""
    yield from test.leading_comments
    for stmt in test.statements:
        if isinstance(stmt, Comment):
            yield stmt.text
        yield from stmt.attached_comments


_CONVENTION = tuple(re.compile(rf"{word}\b", re.IGNORECASE) for word in ("given", "when", "then"))


def check_comment_convention(test: TestCase) -> bool:
    """True iff Given, When and Then comments all appear, in that order."""
    expected = 0
    for text in iter_comments(test):
        if _CONVENTION[expected].match(text.strip()):
            expected += 1
            if expected == len(_CONVENTION):
                return True
    return False
