"""
CodeBLEU similarity between two linear unit tests.

Four components are combined linearly: plain n-gram match, keyword-weighted
n-gram match, AST subtree match and dataflow match. Token streams come from
the comment-stripped render of the statement list; the method header is not
scored, so renaming a test never moves its score.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

from nltk.translate.bleu_score import brevity_penalty
from nltk.util import ngrams

from testenhance.lang.analysis import FULL_NORMALIZATION, normalize
from testenhance.lang.errors import ParseError
from testenhance.lang.lexer import TokenKind, tokenize
from testenhance.lang.nodes import (
    ASSERT_NAMES,
    RESERVED_WORDS,
    AssertStmt,
    CallStmt,
    Cast,
    Comment,
    ConstructorCall,
    Expr,
    Literal,
    MethodCall,
    Statement,
    TestCase,
    VarDecl,
    VarRef,
)
from testenhance.lang.parser import parse_test_case
from testenhance.lang.printer import RenderStyle, render_statements

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
DEFAULT_MAX_N = 4
DEFAULT_KEYWORD_WEIGHT = 5.0

KEYWORDS = RESERVED_WORDS | ASSERT_NAMES

_WEIGHT_TOLERANCE = 1e-9
_ERASED = "id"


class CodeBleuError(Exception):
    """Base exception for metric errors."""
    pass


class EmptyInput(CodeBleuError):
    """A token list to be scored is empty."""
    pass


class ParseFailure(CodeBleuError):
    """One side of the comparison does not parse."""

    def __init__(self, side: str, detail: str):
        super().__init__(f"{side} does not parse: {detail}")
        self.side = side


class WeightSumInvalid(CodeBleuError):
    """Component weights are negative or do not sum to one."""
    pass


@dataclass(frozen=True)
class DataflowEdge:
    """A use of a variable declared by an earlier statement."""
    def_var: str
    use_site: tuple[int, int]


@dataclass(frozen=True)
class CodeBleuScore:
    """The four component scores and their weighted combination."""
    ngram: float
    weighted_ngram: float
    ast_match: float
    dataflow_match: float
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    dataflow_degenerate: bool = False
    combined: float = field(init=False)

    def __post_init__(self):
        validate_weights(self.weights)
        alpha, beta, gamma, delta = self.weights
        combined = (alpha * self.ngram + beta * self.weighted_ngram
                    + gamma * self.ast_match + delta * self.dataflow_match)
        object.__setattr__(self, "combined", combined)

    def reweighted(self, weights) -> "CodeBleuScore":
        """Recombine the stored components under different weights."""
        return CodeBleuScore(
            ngram=self.ngram,
            weighted_ngram=self.weighted_ngram,
            ast_match=self.ast_match,
            dataflow_match=self.dataflow_match,
            weights=tuple(weights),
            dataflow_degenerate=self.dataflow_degenerate,
        )

    def to_dict(self) -> dict:
        return {
            "ngram": self.ngram,
            "weighted_ngram": self.weighted_ngram,
            "ast_match": self.ast_match,
            "dataflow_match": self.dataflow_match,
            "dataflow_degenerate": self.dataflow_degenerate,
            "weights": list(self.weights),
            "combined": self.combined,
        }


def validate_weights(weights) -> None:
    """Raise WeightSumInvalid unless weights are four non-negative values summing to 1."""
    if len(weights) != 4:
        raise WeightSumInvalid(f"expected 4 weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise WeightSumInvalid(f"weights must be non-negative: {tuple(weights)}")
    if abs(sum(weights) - 1.0) > _WEIGHT_TOLERANCE:
        raise WeightSumInvalid(f"weights sum to {sum(weights)}, expected 1")


def code_tokens(test: TestCase) -> list[str]:
    """Token texts of the comment-stripped statement render."""
    text = "\n".join(render_statements(test.statements, RenderStyle.STRIPPED))
    return [tok.text for tok in tokenize(text) if tok.kind is not TokenKind.COMMENT]


def ngram_match(candidate: list[str], reference: list[str], max_n: int = DEFAULT_MAX_N) -> float:
    """
    BLEU-style score of candidate against a single reference.

    Each modified precision gets add-one smoothing only when its clipped
    count is zero; the geometric mean is scaled by the brevity penalty.

    Raises:
        EmptyInput: If either token list is empty.
    """
    return _bleu(candidate, reference, max_n, lambda gram: 1.0)


def weighted_ngram_match(
    candidate: list[str],
    reference: list[str],
    max_n: int = DEFAULT_MAX_N,
    keyword_weight: float = DEFAULT_KEYWORD_WEIGHT,
) -> float:
    """As ngram_match, with n-grams led by a keyword counted keyword_weight times."""
    return _bleu(
        candidate, reference, max_n,
        lambda gram: keyword_weight if gram[0] in KEYWORDS else 1.0,
    )


def _bleu(candidate, reference, max_n, weight_of) -> float:
    if not candidate or not reference:
        raise EmptyInput("cannot score an empty token list")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")

    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = Counter(ngrams(candidate, n))
        ref_counts = Counter(ngrams(reference, n))
        matched = sum(weight_of(g) * min(c, ref_counts[g]) for g, c in cand_counts.items())
        total = sum(weight_of(g) * c for g, c in cand_counts.items())
        if matched == 0:
            precision = 1.0 / (total + 1.0)
        else:
            precision = matched / total
        log_sum += math.log(precision) / max_n

    score = brevity_penalty(len(reference), len(candidate)) * math.exp(log_sum)
    return min(1.0, max(0.0, score))


def ast_match(candidate: TestCase, reference: TestCase) -> float:
    """Fraction of the reference's subtrees found in the candidate, as multisets."""
    ref_trees = _subtrees(reference)
    total = sum(ref_trees.values())
    if total == 0:
        return 1.0
    cand_trees = _subtrees(candidate)
    matched = sum(min(count, cand_trees[tree]) for tree, count in ref_trees.items())
    return matched / total


def _subtrees(test: TestCase) -> Counter:
    found: Counter = Counter()
    for stmt in test.statements:
        tree = _statement_tree(stmt)
        if tree is not None:
            _collect(tree, found)
    return found


def _collect(tree, found: Counter) -> None:
    if isinstance(tree, tuple) and len(tree) > 1:
        found[tree] += 1
        for child in tree[1:]:
            _collect(child, found)


def _statement_tree(stmt: Statement):
    # Identifiers become _ERASED; literals become their kind
    if isinstance(stmt, VarDecl):
        return ("decl", _ERASED, _ERASED, _expr_tree(stmt.initializer))
    if isinstance(stmt, CallStmt):
        return ("call_stmt", _ERASED, _ERASED) + tuple(_expr_tree(a) for a in stmt.args)
    if isinstance(stmt, AssertStmt):
        return (stmt.kind.value,) + tuple(_expr_tree(a) for a in stmt.args)
    return None


def _expr_tree(expr: Expr):
    if isinstance(expr, Literal):
        return f"lit:{expr.kind.value}"
    if isinstance(expr, VarRef):
        return _ERASED
    if isinstance(expr, ConstructorCall):
        return ("new", _ERASED) + tuple(_expr_tree(a) for a in expr.args)
    if isinstance(expr, MethodCall):
        return ("call", _ERASED, _ERASED) + tuple(_expr_tree(a) for a in expr.args)
    if isinstance(expr, Cast):
        return (f"cast:{expr.primitive}", _expr_tree(expr.inner))
    raise TypeError(f"Unknown expression: {expr!r}")


def dataflow_edges(test: TestCase) -> list[DataflowEdge]:
    """
    Def-use edges of a test after alpha renaming.

    A use site is (statement index, ordinal of the use within the
    statement); statements are indexed with Comment statements removed.
    """
    normalized = normalize(test, FULL_NORMALIZATION)
    statements = [s for s in normalized.statements if not isinstance(s, Comment)]
    declared: set[str] = set()
    edges = []
    for index, stmt in enumerate(statements):
        uses = [name for name in _name_uses(stmt) if name in declared]
        for ordinal, name in enumerate(uses):
            edges.append(DataflowEdge(name, (index, ordinal)))
        if isinstance(stmt, VarDecl):
            declared.add(stmt.var_name)
    return edges


def _name_uses(stmt: Statement) -> list[str]:
    names = []
    if isinstance(stmt, CallStmt):
        names.append(stmt.receiver)
    if isinstance(stmt, VarDecl):
        roots = [stmt.initializer]
    elif isinstance(stmt, (CallStmt, AssertStmt)):
        roots = list(stmt.args)
    else:
        roots = []
    for root in roots:
        _expr_names(root, names)
    return names


def _expr_names(expr: Expr, names: list[str]) -> None:
    if isinstance(expr, VarRef):
        names.append(expr.name)
    elif isinstance(expr, MethodCall):
        names.append(expr.receiver)
        for arg in expr.args:
            _expr_names(arg, names)
    elif isinstance(expr, ConstructorCall):
        for arg in expr.args:
            _expr_names(arg, names)
    elif isinstance(expr, Cast):
        _expr_names(expr.inner, names)


def dataflow_match(candidate: TestCase, reference: TestCase) -> tuple[float, bool]:
    """
    Share of reference def-use edges reproduced by the candidate.

    Returns:
        (score, degenerate); a reference without edges scores 1.0 and is
        flagged degenerate.
    """
    ref_edges = Counter(dataflow_edges(reference))
    total = sum(ref_edges.values())
    if total == 0:
        return 1.0, True
    cand_edges = Counter(dataflow_edges(candidate))
    matched = sum(min(count, cand_edges[edge]) for edge, count in ref_edges.items())
    return matched / total, False


def codebleu_tests(
    candidate: TestCase,
    reference: TestCase,
    weights=DEFAULT_WEIGHTS,
    max_n: int = DEFAULT_MAX_N,
    keyword_weight: float = DEFAULT_KEYWORD_WEIGHT,
) -> CodeBleuScore:
    """Score two parsed tests."""
    weights = tuple(weights)
    validate_weights(weights)
    cand_tokens = code_tokens(candidate)
    ref_tokens = code_tokens(reference)
    dataflow, degenerate = dataflow_match(candidate, reference)
    score = CodeBleuScore(
        ngram=ngram_match(cand_tokens, ref_tokens, max_n),
        weighted_ngram=weighted_ngram_match(cand_tokens, ref_tokens, max_n, keyword_weight),
        ast_match=ast_match(candidate, reference),
        dataflow_match=dataflow,
        weights=weights,
        dataflow_degenerate=degenerate,
    )
    logger.debug("CodeBLEU %s vs %s: %.4f", candidate.name, reference.name, score.combined)
    return score


def codebleu(candidate: str, reference: str, weights=DEFAULT_WEIGHTS) -> CodeBleuScore:
    """
    Score candidate source against reference source.

    Raises:
        ParseFailure: If either side does not parse (side names which).
        WeightSumInvalid: If weights are invalid.
    """
    validate_weights(tuple(weights))
    sides = {}
    for side, source in (("candidate", candidate), ("reference", reference)):
        try:
            sides[side] = parse_test_case(source)
        except ParseError as e:
            raise ParseFailure(side, str(e)) from e
    return codebleu_tests(sides["candidate"], sides["reference"], weights)
