"""
Four-stage enhancement pipeline.

Stage 1 refines test data, Stage 2 adds comments and descriptive names
under a similarity gate, Stage 3 names the test and Stage 4 verifies it,
reverting to the baseline whenever enhancement cannot be kept.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from testenhance.core.outcomes import (
    EnhancementOutcome,
    OutcomeKind,
    SuiteReport,
    TestRecord,
    VerifyTally,
)
from testenhance.core.prompts import (
    NoNameFound,
    PromptContext,
    PromptStage,
    PromptTemplate,
    default_templates,
    parse_name_response,
    render_prompt,
)
from testenhance.core.repair import (
    ApiManifest,
    NoCodeFound,
    NothingSalvageable,
    RepairActionKind,
    RepairLog,
    UnbalancedBeyondRepair,
    align_refinement,
    balance_brackets,
    check_comment_convention,
    coerce_to_test,
    demote_prose_lines,
    extract_code_block,
    validate_logic_preserved,
)
from testenhance.core.verifier import (
    Verifier,
    VerifierCommand,
    VerifierSpawnFailure,
    VerifyResult,
    VerifyStatus,
)
from testenhance.lang.analysis import equivalence_key, opaque_catalogue, total_length
from testenhance.lang.errors import ParseError
from testenhance.lang.nodes import Opaque, TestCase
from testenhance.lang.printer import RenderStyle, render
from testenhance.llm.client import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    DEFAULT_TEMPERATURE,
    Backend,
    LlmClientError,
    LlmRequest,
)
from testenhance.metrics.codebleu import DEFAULT_WEIGHTS, CodeBleuScore, codebleu_tests, validate_weights

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Thresholds and budgets of the enhancement ladder."""
    codebleu_threshold: float = 0.5
    strict_attempts: int = 3
    relaxed_attempts: int = 3
    postprocess_budget: int = 2
    refine_attempts: int = 3
    name_attempts: int = 3
    strict_logic_check: bool = False
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    verifier: VerifierCommand = field(default_factory=VerifierCommand)
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def validate(self) -> None:
        """Raise ValueError naming the first invalid field."""
        if not 0.0 <= self.codebleu_threshold <= 1.0:
            raise ValueError("codebleu_threshold must be in [0, 1]")
        for name in ("strict_attempts", "relaxed_attempts", "postprocess_budget",
                     "refine_attempts", "name_attempts", "max_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        validate_weights(tuple(self.weights))
        self.verifier.validate()


@dataclass
class SuiteResult:
    """Emitted tests, their baselines and the report of one enhance_suite run."""
    tests: list[TestCase]
    baselines: list[TestCase]
    report: SuiteReport


@dataclass
class _Screened:
    candidate: TestCase | None
    reason: str = ""
    score: CodeBleuScore | None = None
    log: RepairLog = field(default_factory=RepairLog)


def unique_name(base: str, taken_lower: set[str]) -> str:
    """base itself if free, else base_2, base_3, ... (case-insensitive)."""
    if base.lower() not in taken_lower:
        return base
    suffix = 2
    while f"{base}_{suffix}".lower() in taken_lower:
        suffix += 1
    return f"{base}_{suffix}"


def make_names_unique(suite: list[TestCase]) -> list[TestCase]:
    """Rename later duplicates so names are pairwise distinct ignoring case."""
    taken: set[str] = set()
    result = []
    for test in suite:
        name = unique_name(test.name, taken)
        taken.add(name.lower())
        result.append(test if name == test.name else test.renamed(name))
    return result


def merge_and_dedup(originals: list[TestCase], refined: list[TestCase]) -> list[TestCase]:
    """
    Union of original and refined tests with structural duplicates removed.

    refined[i] is taken to be the refinement of originals[i]; the union
    interleaves each original with its refinement. Within a group sharing
    an equivalence key the survivor has the smallest total length, then
    the smallest stripped render, then the earliest position. Survivors
    keep their union order.
    """
    return [test for test, _, _ in _merge(originals, refined)]


def _merge(originals, refined, isolated=frozenset()) -> list[tuple[TestCase, int, bool]]:
    """
    Survivors of the interleaved union as (test, source index, is refined).

    A None refinement is left out of the union; an original whose index is
    in isolated never merges with another test.
    """
    union: list[tuple[TestCase, int, bool]] = []
    keys: list[str] = []
    for index in range(max(len(originals), len(refined))):
        if index < len(originals):
            union.append((originals[index], index, False))
            isolated_key = f"\0isolated:{index}"
            keys.append(isolated_key if index in isolated else equivalence_key(originals[index]))
        if index < len(refined) and refined[index] is not None:
            union.append((refined[index], index, True))
            keys.append(equivalence_key(refined[index]))
    return [union[i] for i in _survivor_indices([entry[0] for entry in union], keys)]


def _survivor_indices(tests: list[TestCase], keys: list[str]) -> list[int]:
    best: dict[str, tuple[int, str, int]] = {}
    for index, (test, key) in enumerate(zip(tests, keys)):
        rank = (total_length(test), render(test, RenderStyle.STRIPPED), index)
        if key not in best or rank < best[key]:
            best[key] = rank
    return sorted(rank[2] for rank in best.values())


class EnhancementPipeline:
    """
    Runs the enhancement stages against one completion backend.

    A pipeline is shareable across worker threads: it holds configuration
    and immutable templates only.
    """

    def __init__(
        self,
        backend: Backend,
        config: PipelineConfig | None = None,
        templates: dict[PromptStage, PromptTemplate] | None = None,
        manifest: ApiManifest | None = None,
        workers: int = 4,
    ):
        """
        Initialize the pipeline.

        Args:
            backend: Completion backend used by every stage.
            config: Thresholds and budgets (defaults if None).
            templates: Prompt templates (packaged defaults if None).
            manifest: Extra calls accepted during data refinement.
            workers: Worker pool width for Stages 1 and 2.
        """
        self._backend = backend
        self._config = config or PipelineConfig()
        self._config.validate()
        self._templates = templates or default_templates()
        self._manifest = manifest
        self._verifier = Verifier(self._config.verifier)
        self._workers = max(1, workers)

    @property
    def config(self) -> PipelineConfig:
        return self._config

    def _complete(self, stage: PromptStage, ctx: PromptContext) -> str:
        request = LlmRequest(
            prompt=render_prompt(stage, ctx, self._templates),
            model=self._config.model,
            temperature=self._config.temperature,
            max_tokens=self._config.max_tokens,
            stage_tag=stage.tag,
        )
        return self._backend.complete(request)

    # Stage 1

    def refine_test_data(self, original: TestCase, class_source: str | None) -> tuple[TestCase, RepairLog]:
        """
        Ask for contextual test data and align the answer with the original.

        Without class source this is a no-op. After refine_attempts answers
        that yield nothing salvageable, the original is returned.

        Raises:
            LlmClientError: If the backend fails.
        """
        log = RepairLog()
        if not class_source:
            return original, log

        notes = None
        for attempt in range(1, self._config.refine_attempts + 1):
            ctx = PromptContext(render(original), class_source=class_source, extra_notes=notes)
            response = self._complete(PromptStage.DATA_REFINEMENT, ctx)
            try:
                refined, align_log = align_refinement(
                    original, extract_code_block(response), self._manifest
                )
            except (NoCodeFound, NothingSalvageable) as e:
                logger.debug("Refinement %d of %s rejected: %s", attempt, original.name, e)
                notes = f"Attempt {attempt + 1}: the previous answer was unusable ({e})."
                continue
            log.extend(align_log)
            return refined, log

        logger.info("Keeping original data for %s after %d attempts",
                    original.name, self._config.refine_attempts)
        return original, log

    # Stage 2

    def post_process(self, test: TestCase, feedback: str | None = None) -> tuple[TestCase, EnhancementOutcome]:
        """
        Run the guarded post-processing ladder on a baseline test.

        The strict phase requires Given/When/Then comments, the relaxed
        phase does not; every candidate must parse, differ from the
        baseline and reach the CodeBLEU threshold. On exhaustion the
        baseline is returned as Stagnated.

        Raises:
            LlmClientError: If the backend fails.
        """
        cfg = self._config
        attempts = 0
        phases = (
            (PromptStage.POST_PROCESS, cfg.strict_attempts, True),
            (PromptStage.POST_PROCESS_RELAXED, cfg.relaxed_attempts, False),
        )
        source = render(test)
        last_reason = ""
        for stage, count, needs_convention in phases:
            notes = feedback
            for attempt in range(1, count + 1):
                attempts += 1
                response = self._complete(stage, PromptContext(source, extra_notes=notes))
                screened = self._screen(test, response, needs_convention)
                if screened.candidate is not None:
                    logger.debug("%s accepted in %s after %d attempt(s)", test.name, stage.tag, attempts)
                    return screened.candidate, EnhancementOutcome(
                        OutcomeKind.IMPROVED, attempts, screened.log, screened.score,
                    )
                last_reason = screened.reason
                logger.debug("%s attempt %d (%s) rejected: %s", test.name, attempts, stage.tag,
                             screened.reason)
                notes = " ".join(filter(None, [
                    feedback,
                    f"Attempt {attempt + 1} of {count}: the previous answer was rejected "
                    f"because {screened.reason}.",
                ]))

        return test, EnhancementOutcome(
            OutcomeKind.STAGNATED, attempts, RepairLog(), None, f"ladder exhausted: {last_reason}",
        )

    def _screen(self, baseline: TestCase, response: str, needs_convention: bool) -> _Screened:
        cfg = self._config
        log = RepairLog()
        try:
            code = extract_code_block(response)
        except NoCodeFound:
            return _Screened(None, "it contained no code")
        if "```" in response:
            log.add(RepairActionKind.EXTRACTED_FENCE)

        code, demoted = demote_prose_lines(code)
        log.extend(demoted)
        try:
            code, balanced = balance_brackets(code)
        except UnbalancedBeyondRepair as e:
            return _Screened(None, f"its brackets are unbalanced ({e})", log=log)
        log.extend(balanced)

        try:
            candidate = coerce_to_test(code, baseline)
        except ParseError as e:
            return _Screened(None, f"it does not parse ({e})", log=log)

        if _opaque_count(candidate) > _opaque_count(baseline):
            return _Screened(None, "it contains unsupported statements", log=log)
        if render(candidate) == render(baseline):
            return _Screened(None, "it did not change the test", log=log)
        if needs_convention and not check_comment_convention(candidate):
            return _Screened(None, "its comments do not follow Given, When, Then", log=log)

        score = codebleu_tests(candidate, baseline, cfg.weights)
        if score.combined < cfg.codebleu_threshold:
            return _Screened(
                None, f"CodeBLEU {score.combined:.3f} is below {cfg.codebleu_threshold}",
                score, log,
            )
        if not validate_logic_preserved(baseline, candidate, cfg.strict_logic_check):
            return _Screened(None, "it changed the test logic", score, log)
        return _Screened(candidate, "", score, log)

    # Stage 3

    def suggest_name(self, test: TestCase, taken) -> str:
        """
        Ask for a descriptive name not in taken (case-insensitive).

        After name_attempts collisions the last suggestion gets a numeric
        suffix; if no answer held a name, the test's own name is kept.

        Raises:
            LlmClientError: If the backend fails.
        """
        taken = set(taken)
        taken_lower = {name.lower() for name in taken}
        source = render(test)
        last: str | None = None
        notes = None
        for attempt in range(1, self._config.name_attempts + 1):
            ctx = PromptContext(source, taken_names=tuple(sorted(taken)), extra_notes=notes)
            response = self._complete(PromptStage.NAME_SUGGESTION, ctx)
            try:
                name = parse_name_response(response)
            except NoNameFound as e:
                logger.debug("Name attempt %d for %s: %s", attempt, test.name, e)
                notes = f"Attempt {attempt + 1}: answer with a single method name."
                continue
            last = name
            if name.lower() not in taken_lower:
                return name
            notes = f"Attempt {attempt + 1}: {name} is already used; suggest a different name."

        return unique_name(last or test.name, taken_lower)

    # Stage 4

    def compile_and_verify(self, test: TestCase) -> VerifyResult:
        return self._verifier.verify(test)

    # Orchestration

    def enhance_suite(
        self,
        suite: list[TestCase],
        class_source: str | None = None,
        source_file: str = "",
    ) -> SuiteResult:
        """
        Run all four stages over a suite.

        Stages 1 and 2 run on the worker pool; Stages 3 and 4 are committed
        one test at a time in input order so that name assignment does not
        depend on scheduling.
        """
        started = time.monotonic()
        report = SuiteReport()

        with ThreadPoolExecutor(max_workers=self._workers) as pool:
            refined_results = list(pool.map(
                lambda t: self._guarded(self.refine_test_data, t, class_source), suite
            ))

            # Only changed refinements join; a test whose Stage 1 failed stays on its own
            refinements = [
                result[0] if error is None and result[0] != test else None
                for test, (result, error) in zip(suite, refined_results)
            ]
            failed = frozenset(i for i, (_, error) in enumerate(refined_results) if error is not None)
            survivors = _merge(suite, refinements, failed)
            report.deduplicated = (
                len(suite) + sum(r is not None for r in refinements) - len(survivors)
            )
            baselines = make_names_unique([test for test, _, _ in survivors])

            stage1_errors = [
                None if is_refined else refined_results[index][1] for _, index, is_refined in survivors
            ]
            post_results = list(pool.map(self._post_process_guarded, baselines, stage1_errors))

        emitted: list[TestCase] = []
        committed: set[str] = set()
        baseline_names = [b.name for b in baselines]
        for index, baseline in enumerate(baselines):
            _, source_index, is_refined = survivors[index]
            record = TestRecord(source_file, baseline.name, refined=is_refined)
            if is_refined:
                record.refine_log = refined_results[source_index][0][1]
            result, error = post_results[index]
            if error is not None:
                record.error = error
                emitted.append(baseline)
                report.records.append(record)
                committed.add(baseline.name)
                continue

            candidate, outcome = result
            others = set(baseline_names[:index] + baseline_names[index + 1:]) | committed
            try:
                final, outcome, status, tally = self._commit(
                    baseline, candidate, outcome, others, is_refined
                )
            except (LlmClientError, VerifierSpawnFailure) as e:
                logger.error("Cannot commit %s: %s", baseline.name, e)
                record.error = f"{type(e).__name__}: {e}"
                emitted.append(baseline)
                report.records.append(record)
                committed.add(baseline.name)
                continue

            report.verify.add(tally)
            record.outcome = outcome
            record.verify_status = status
            if final is None:
                record.dropped = True
                record.drop_reason = (
                    "baseline is unstable" if status == VerifyStatus.COMPILED_UNSTABLE.value
                    else "refined baseline does not compile"
                )
                logger.warning("Dropping %s: %s", baseline.name, record.drop_reason)
            else:
                record.final_name = final.name
                committed.add(final.name)
                emitted.append(final)
            logger.info("%s: %s", baseline.name, outcome.kind.value)
            report.records.append(record)

        report.opaque_catalogue = opaque_catalogue(baselines)
        report.duration_seconds = time.monotonic() - started
        return SuiteResult(emitted, baselines, report)

    def _guarded(self, func, *args):
        """Call func, returning (result, None) or (None, error text) on backend failure."""
        try:
            return func(*args), None
        except LlmClientError as e:
            logger.error("Backend failure in %s: %s", func.__name__, e)
            return None, f"{type(e).__name__}: {e}"

    def _post_process_guarded(self, baseline: TestCase, stage1_error: str | None):
        if stage1_error is not None:
            return None, stage1_error
        return self._guarded(self.post_process, baseline)

    def _keep_baseline(self, baseline: TestCase, refined: bool, tally: VerifyTally):
        """
        Verify a baseline about to be emitted in place of an enhancement.

        Unstable baselines are dropped, and so are refined baselines that
        do not compile. An original that does not compile is emitted as is.
        """
        check = self.compile_and_verify(baseline)
        if check.status is VerifyStatus.COMPILED_STABLE:
            tally.passed += 1
            return baseline, check.status.value
        if check.status is VerifyStatus.COMPILED_UNSTABLE:
            tally.unstable += 1
            return None, check.status.value
        tally.failed += 1
        if refined:
            return None, check.status.value
        logger.warning("Keeping %s although it does not compile: %s",
                       baseline.name, _first_line(check.detail))
        return baseline, check.status.value

    def _commit(self, baseline, candidate, outcome, taken, refined=False):
        """Stages 3 and 4 for one test, re-entering Stage 2 on compile errors."""
        tally = VerifyTally()
        if outcome.kind is OutcomeKind.STAGNATED:
            final, status = self._keep_baseline(baseline, refined, tally)
            return final, outcome, status, tally

        attempts = outcome.attempts_used
        cycle = 0
        while True:
            named = candidate.renamed(self.suggest_name(candidate, taken))
            result = self.compile_and_verify(named)
            if result.status is VerifyStatus.COMPILED_STABLE:
                tally.passed += 1
                outcome.attempts_used = attempts
                return named, outcome, result.status.value, tally

            if result.status is VerifyStatus.COMPILED_UNSTABLE:
                tally.unstable += 1
                reverted = EnhancementOutcome(
                    OutcomeKind.REVERTED, attempts, outcome.repair_log, outcome.final_score,
                    f"enhanced test is unstable: {_first_line(result.detail)}",
                )
                final, status = self._keep_baseline(baseline, refined, tally)
                return final, reverted, status, tally

            tally.failed += 1
            if cycle >= self._config.postprocess_budget:
                reverted = EnhancementOutcome(
                    OutcomeKind.REVERTED, attempts, outcome.repair_log, outcome.final_score,
                    f"compile errors after {cycle} re-attempt(s): {_first_line(result.detail)}",
                )
                final, status = self._keep_baseline(baseline, refined, tally)
                return final, reverted, status, tally

            cycle += 1
            feedback = f"A previous version of this test did not compile: {_first_line(result.detail)}"
            candidate, outcome = self.post_process(baseline, feedback=feedback)
            attempts += outcome.attempts_used
            if outcome.kind is OutcomeKind.STAGNATED:
                reverted = EnhancementOutcome(
                    OutcomeKind.REVERTED, attempts, RepairLog(), None,
                    "no compilable enhancement within the post-processing budget",
                )
                final, status = self._keep_baseline(baseline, refined, tally)
                return final, reverted, status, tally


def _opaque_count(test: TestCase) -> int:
    return sum(1 for s in test.statements if isinstance(s, Opaque))


def _first_line(text: str) -> str:
    return text.strip().splitlines()[0] if text.strip() else "no detail"

