"""Tests for the enhancement pipeline, naming, deduplication and verification."""

import pytest

from conftest import CORPUS_DIR, UNRELATED, WEAPON_ENHANCED, FakeEnhancer
from testenhance.core.outcomes import OutcomeKind
from testenhance.core.pipeline import (
    EnhancementPipeline,
    PipelineConfig,
    make_names_unique,
    merge_and_dedup,
    unique_name,
)
from testenhance.core.repair import align_refinement
from testenhance.core.verifier import (
    Verifier,
    VerifierCommand,
    VerifierMode,
    VerifierSpawnFailure,
    VerifyStatus,
)
from testenhance.lang.parser import parse_test_case, parse_test_file
from testenhance.lang.printer import render
from testenhance.llm.client import ScriptedBackend

WEAPON_REFINED = """\
@Test(timeout = 4000)
public void test0() throws Throwable {
    WeaponGameData weaponGameData0 = new WeaponGameData(0, 0, 0, "Ninja Sword", "", 0);
    WeaponGameData weaponGameData1 = new WeaponGameData(0, 0, 0, "", "", 0);
    weaponGameData0.increaseDmg(10);
    int int0 = weaponGameData0.getDmgBonus(10);
    boolean boolean0 = weaponGameData0.equals(weaponGameData1);
    assertFalse(boolean0);
}
"""

FAILS_ON_BROKEN = (
    "text = open(sys.argv[1], encoding='utf-8').read()\n"
    "sys.exit(1 if 'BROKEN' in text else 0)\n"
)

UNSTABLE_WHEN_RENAMED = (
    "text = open(sys.argv[1], encoding='utf-8').read()\n"
    "if '--run' in sys.argv and 'Readable' in text:\n"
    "    print('java.lang.NullPointerException')\n"
    "    sys.exit(1)\n"
    "sys.exit(0)\n"
)

ALWAYS_UNSTABLE = (
    "if '--run' in sys.argv:\n"
    "    print('java.lang.NullPointerException')\n"
    "    sys.exit(1)\n"
)


def make_test(name, *lines):
    body = "".join(f"    {line}\n" for line in lines)
    return parse_test_case(f"@Test\npublic void {name}() {{\n{body}}}\n")


def commented(test, then="it holds"):
    return f"```java\n// Given the fixture\n// When it is exercised\n// Then {then}\n{render(test)}```"


def pipeline(backend, workers=1, **config):
    return EnhancementPipeline(backend, PipelineConfig(**config), workers=workers)


class TestPostProcess:

    def test_ladder_budget(self, weapon_test):
        backend = ScriptedBackend([UNRELATED] * 6)
        result = pipeline(backend).enhance_suite([weapon_test])

        record = result.report.records[0]
        assert record.outcome.kind is OutcomeKind.STAGNATED
        assert record.outcome.attempts_used == 6
        assert backend.count("postprocess") == 3
        assert backend.count("postprocess-relaxed") == 3
        assert backend.count("name") == 0
        assert result.tests == [weapon_test]

    def test_improved_on_second_attempt(self, weapon_test):
        backend = ScriptedBackend([UNRELATED, WEAPON_ENHANCED, "`testEqualsWithDifferentMinDmgValues`"])
        result = pipeline(backend).enhance_suite([weapon_test])

        record = result.report.records[0]
        assert record.outcome.kind is OutcomeKind.IMPROVED
        assert record.outcome.attempts_used == 2
        assert record.outcome.final_score.combined >= 0.5
        assert record.verify_status == "compiled_stable"
        enhanced = result.tests[0]
        assert enhanced.name == "testEqualsWithDifferentMinDmgValues"
        assert "ninjaSword" in render(enhanced)
        assert backend.count() == 3

    def test_rejection_feedback_in_next_prompt(self, weapon_test):
        backend = ScriptedBackend([UNRELATED, WEAPON_ENHANCED])
        pipeline(backend).post_process(weapon_test)
        second = backend.served[1].prompt
        assert "Attempt 2 of 3: the previous answer was rejected because" in second

    def test_unchanged_answer_rejected(self, weapon_test):
        echo = f"```java\n{render(weapon_test)}```"
        backend = ScriptedBackend([echo] * 6)
        _, outcome = pipeline(backend).post_process(weapon_test)
        assert outcome.kind is OutcomeKind.STAGNATED
        assert "did not change" in outcome.reason

    def test_relaxed_phase_accepts_plain_rename(self, weapon_test):
        renamed = render(weapon_test).replace("boolean0", "isEqual")
        backend = ScriptedBackend([UNRELATED] * 3 + [f"```java\n{renamed}```"])
        candidate, outcome = pipeline(backend).post_process(weapon_test)
        assert outcome.kind is OutcomeKind.IMPROVED
        assert outcome.attempts_used == 4
        assert "isEqual" in render(candidate)

    def test_strict_logic_check(self, weapon_test):
        changed = WEAPON_ENHANCED.replace('"N&zMn$@6gffi<"', '"Sword"')
        backend = ScriptedBackend([changed] + [UNRELATED] * 5)
        _, outcome = pipeline(backend, strict_logic_check=True).post_process(weapon_test)
        assert outcome.kind is OutcomeKind.STAGNATED

    def test_compile_budget_reverts(self, weapon_test, make_verifier):
        verifier = make_verifier("sys.exit(1)\n")
        backend = FakeEnhancer()
        result = pipeline(backend, verifier=verifier).enhance_suite([weapon_test])

        record = result.report.records[0]
        assert record.outcome.kind is OutcomeKind.REVERTED
        assert backend.calls == ["postprocess", "name", "postprocess", "name", "postprocess", "name"]
        assert result.report.verify.failed == 4
        assert record.verify_status == "compile_error"
        assert not record.dropped
        assert render(result.tests[0]) == render(weapon_test)


class TestRefinement:

    def test_alignment(self, weapon_test):
        backend = ScriptedBackend([f"```java\n{WEAPON_REFINED}```"])
        refined, log = pipeline(backend).refine_test_data(weapon_test, "class WeaponGameData { }")
        assert len(refined.statements) == 5
        assert '"Ninja Sword"' in render(refined)
        assert [a.kind.value for a in log] == ["skipped_statement", "arity_fallback"]

    def test_no_class_source_is_noop(self, weapon_test):
        backend = ScriptedBackend([])
        refined, log = pipeline(backend).refine_test_data(weapon_test, None)
        assert refined is weapon_test
        assert len(log) == 0

    def test_keeps_original_after_attempts(self, weapon_test):
        backend = ScriptedBackend(["No idea, sorry"] * 3)
        refined, _ = pipeline(backend).refine_test_data(weapon_test, "class WeaponGameData { }")
        assert refined == weapon_test
        assert backend.count("refine") == 3

    def test_refined_test_joins_suite(self, weapon_test):
        aligned, _ = align_refinement(weapon_test, WEAPON_REFINED)
        backend = ScriptedBackend([
            f"```java\n{WEAPON_REFINED}```",
            commented(weapon_test),
            commented(aligned),
            "`testOriginalData`",
            "`testRefinedData`",
        ])
        result = pipeline(backend).enhance_suite([weapon_test], class_source="class WeaponGameData { }")

        assert [b.name for b in result.baselines] == ["test0", "test0_2"]
        assert [r.refined for r in result.report.records] == [False, True]
        assert [t.name for t in result.tests] == ["testOriginalData", "testRefinedData"]
        assert result.report.count(OutcomeKind.IMPROVED) == 2

    def test_stagnated_refined_baseline_is_verified(self, weapon_test, make_verifier):
        refined_source = WEAPON_REFINED.replace("Ninja Sword", "BROKEN Sword")
        backend = ScriptedBackend([f"```java\n{refined_source}```"] + [UNRELATED] * 12)
        result = pipeline(backend, verifier=make_verifier(FAILS_ON_BROKEN)).enhance_suite(
            [weapon_test], class_source="class WeaponGameData { }"
        )

        original, refined = result.report.records
        assert backend.count() == 13
        assert original.outcome.kind is OutcomeKind.STAGNATED
        assert original.verify_status == "compiled_stable"
        assert refined.refined and refined.dropped
        assert refined.outcome.kind is OutcomeKind.STAGNATED
        assert refined.verify_status == "compile_error"
        assert refined.drop_reason == "refined baseline does not compile"
        assert result.tests == [weapon_test]
        assert result.report.verify.to_dict() == {"passed": 1, "failed": 1, "unstable": 0}

        data = result.report.to_dict(include_duration=False)
        assert data["dropped_baselines"] == ["test0_2"]
        assert "refine_actions" not in data["tests"][0]
        assert [a["action"] for a in data["tests"][1]["refine_actions"]] == [
            "skipped_statement", "arity_fallback",
        ]

    def test_refined_baseline_and_enhancement_fail_to_compile(self, weapon_test, make_verifier):
        refined_source = render(weapon_test).replace("N&zMn$@6gffi<", "BROKEN")
        aligned, _ = align_refinement(weapon_test, refined_source)
        enhanced = commented(aligned)
        backend = ScriptedBackend(
            [f"```java\n{refined_source}```"] + [UNRELATED] * 6 + [enhanced]
            + ["`testBroken`", enhanced, "`testBroken`", enhanced, "`testBroken`"]
        )
        result = pipeline(backend, verifier=make_verifier(FAILS_ON_BROKEN)).enhance_suite(
            [weapon_test], class_source="class WeaponGameData { }"
        )

        _, refined = result.report.records
        assert backend.count() == 13
        assert refined.outcome.kind is OutcomeKind.REVERTED
        assert refined.dropped
        assert refined.drop_reason == "refined baseline does not compile"
        assert result.tests == [weapon_test]
        assert result.report.verify.to_dict() == {"passed": 1, "failed": 4, "unstable": 0}

    def test_equivalent_refinement_is_deduplicated(self, weapon_test):
        backend = ScriptedBackend([WEAPON_ENHANCED] + [UNRELATED] * 6)
        result = pipeline(backend).enhance_suite([weapon_test], class_source="class WeaponGameData { }")

        assert result.report.deduplicated == 1
        assert [b.name for b in result.baselines] == ["test0"]
        assert "ninjaSword" in render(result.baselines[0])
        assert result.report.records[0].refined
        assert backend.count() == 7


class TestSuite:

    def test_mixed_outcomes(self, make_verifier):
        suite = [
            make_test("testOne", "Foo foo0 = new Foo(1);", "int int0 = foo0.size();", "assertEquals(1, int0);"),
            make_test("testTwo", 'Bar bar0 = new Bar("x");', "boolean boolean0 = bar0.isEmpty();",
                      "assertFalse(boolean0);"),
            make_test("testThree", "Baz baz0 = new Baz();", "baz0.clear();", "assertNull(baz0.peek());"),
            make_test("testFour", "Qux qux0 = new Qux(2, 3);", "int int0 = qux0.sum();", "assertEquals(5, int0);"),
        ]
        broken = commented(suite[3], then="it is BROKEN")
        backend = ScriptedBackend(
            [commented(suite[0]), commented(suite[1])] + [UNRELATED] * 6 + [broken]
            + ["`testFirstReadable`", "`testSecondReadable`"]
            + ["`testFourReadable`", broken, "`testFourReadable`", broken, "`testFourReadable`"]
        )
        result = pipeline(backend, verifier=make_verifier(FAILS_ON_BROKEN)).enhance_suite(suite)

        report = result.report
        assert backend.count() == 16
        assert report.errors == []
        assert report.totals == {"tests": 4, "improved": 2, "reverted": 1, "stagnated": 1, "errored": 0}
        assert report.percentages == {"improved_pct": 50.0, "reverted_pct": 25.0, "stagnated_pct": 25.0}
        assert [t.name for t in result.tests] == ["testFirstReadable", "testSecondReadable", "testThree", "testFour"]
        assert render(result.tests[3]) == render(suite[3])

    def test_all_compiles_fail(self, make_verifier):
        suite = parse_test_file((CORPUS_DIR / "Budget_test.txt").read_text(encoding="utf-8"))
        result = pipeline(FakeEnhancer(), verifier=make_verifier("sys.exit(1)\n")).enhance_suite(suite)

        assert result.report.percentages["reverted_pct"] == 100.0
        assert [render(t) for t in result.tests] == [render(b) for b in result.baselines]

    def test_unstable_enhancement_reverts(self, weapon_test, make_verifier):
        verifier = make_verifier(UNSTABLE_WHEN_RENAMED)
        result = pipeline(FakeEnhancer(), verifier=verifier).enhance_suite([weapon_test])

        record = result.report.records[0]
        assert record.outcome.kind is OutcomeKind.REVERTED
        assert "unstable" in record.outcome.reason
        assert result.tests == [weapon_test]
        assert result.report.verify.to_dict() == {"passed": 1, "failed": 0, "unstable": 1}

    def test_unstable_baseline_dropped(self, weapon_test, make_verifier):
        verifier = make_verifier(ALWAYS_UNSTABLE)
        result = pipeline(FakeEnhancer(), verifier=verifier).enhance_suite([weapon_test])

        assert result.tests == []
        assert [r.baseline_name for r in result.report.dropped] == ["test0"]
        assert result.report.verify.unstable == 2

    def test_backend_failure_is_recorded(self, weapon_test):
        result = pipeline(ScriptedBackend([])).enhance_suite([weapon_test])
        report = result.report
        assert len(report.errors) == 1
        assert "ScriptExhausted" in report.errors[0].error
        assert report.totals["tests"] == 0
        assert result.tests == [weapon_test]

    def test_missing_verifier_is_recorded(self, weapon_test):
        command = VerifierCommand(VerifierMode.EXTERNAL, "definitely-not-a-verifier-binary {file}")
        result = pipeline(FakeEnhancer(), verifier=command).enhance_suite([weapon_test])

        report = result.report
        assert "VerifierSpawnFailure" in report.errors[0].error
        assert report.totals["errored"] == 1
        assert result.tests == [weapon_test]

    def test_duplicates_removed(self):
        first = make_test("testA", "Foo foo0 = new Foo(1);", "assertTrue(foo0.ok());")
        second = make_test("testB", "Foo x = new Foo(1);", "assertTrue(x.ok());")
        result = pipeline(FakeEnhancer()).enhance_suite([first, second])
        assert result.report.deduplicated == 1
        assert [b.name for b in result.baselines] == ["testA"]

    def test_names_are_unique(self):
        suite = parse_test_file((CORPUS_DIR / "Stack_test.txt").read_text(encoding="utf-8"))
        result = pipeline(FakeEnhancer(), workers=3).enhance_suite(suite)
        names = [t.name.lower() for t in result.tests]
        assert len(names) == len(set(names))

    def test_worker_count_does_not_change_result(self):
        suite = parse_test_file((CORPUS_DIR / "Account_test.txt").read_text(encoding="utf-8"))
        single = pipeline(FakeEnhancer(), workers=1).enhance_suite(suite)
        pooled = pipeline(FakeEnhancer(), workers=4).enhance_suite(suite)
        assert [render(t) for t in single.tests] == [render(t) for t in pooled.tests]
        assert single.report.to_dict(False) == pooled.report.to_dict(False)


class TestNaming:

    def test_collision_then_unique(self, weapon_test):
        backend = ScriptedBackend(["`testA`", "`testB`"])
        assert pipeline(backend).suggest_name(weapon_test, {"testa"}) == "testB"
        assert backend.count("name") == 2

    def test_repeated_collision_gets_suffix(self, weapon_test):
        backend = ScriptedBackend(["`testA`"] * 3)
        assert pipeline(backend).suggest_name(weapon_test, {"testA"}) == "testA_2"

    def test_no_name_keeps_own(self, weapon_test):
        backend = ScriptedBackend(["???"] * 3)
        assert pipeline(backend).suggest_name(weapon_test, {"test0"}) == "test0_2"

    def test_unique_name(self):
        assert unique_name("testA", set()) == "testA"
        assert unique_name("testA", {"testa", "testa_2"}) == "testA_3"

    def test_make_names_unique(self):
        body = ("int int0 = 1;", "assertEquals(1, int0);")
        suite = [make_test("test0", *body), make_test("TEST0", *body), make_test("test0", *body)]
        assert [t.name for t in make_names_unique(suite)] == ["test0", "TEST0_2", "test0_3"]


class TestMergeAndDedup:

    def test_equivalent_refinement_dropped(self):
        a = make_test("testA", "Foo foo0 = new Foo(1);", "assertTrue(foo0.ok());")
        b = make_test("testB", "Foo foo0 = new Foo(2);", "assertTrue(foo0.ok());")
        a_renamed = make_test("testA", "// Given", "Foo widget = new Foo(1);", "assertTrue(widget.ok());")
        b_refined = make_test("testB", "Foo foo0 = new Foo(3);", "assertTrue(foo0.ok());")
        assert merge_and_dedup([a, b], [a_renamed, b_refined]) == [a, b, b_refined]

    def test_no_duplicates(self):
        a = make_test("testA", "int int0 = 1;", "assertEquals(1, int0);")
        assert merge_and_dedup([a], []) == [a]
        assert merge_and_dedup([a, a], []) == [a]


class TestVerifier:

    def test_builtin(self, weapon_test):
        assert Verifier().verify(weapon_test).status is VerifyStatus.COMPILED_STABLE

    def test_compile_error(self, weapon_test, make_verifier):
        command = make_verifier("print(\"error: ';' expected\", file=sys.stderr)\nsys.exit(1)\n")
        result = Verifier(command).verify(weapon_test)
        assert result.status is VerifyStatus.COMPILE_ERROR
        assert "';' expected" in result.detail

    def test_unstable_run(self, weapon_test, make_verifier):
        result = Verifier(make_verifier(ALWAYS_UNSTABLE)).verify(weapon_test)
        assert result.status is VerifyStatus.COMPILED_UNSTABLE

    def test_assertion_failure_is_stable(self, weapon_test, make_verifier):
        command = make_verifier(
            "if '--run' in sys.argv:\n"
            "    print('java.lang.AssertionError: expected false')\n"
            "    sys.exit(1)\n"
        )
        assert Verifier(command).verify(weapon_test).ok

    def test_compile_timeout(self, weapon_test, make_verifier):
        command = make_verifier("import time\ntime.sleep(5)\n")
        command.timeout_seconds = 0.5
        result = Verifier(command).verify(weapon_test)
        assert result.status is VerifyStatus.COMPILE_ERROR
        assert "timed out" in result.detail

    def test_missing_command(self, weapon_test):
        command = VerifierCommand(VerifierMode.EXTERNAL, "definitely-not-a-verifier-binary {file}")
        with pytest.raises(VerifierSpawnFailure):
            Verifier(command).verify(weapon_test)

    def test_external_needs_command(self):
        with pytest.raises(ValueError):
            Verifier(VerifierCommand(VerifierMode.EXTERNAL, ""))


class TestConfig:

    @pytest.mark.parametrize("overrides", [
        {"codebleu_threshold": 1.5},
        {"strict_attempts": 0},
        {"postprocess_budget": 0},
        {"temperature": -1.0},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ValueError):
            PipelineConfig(**overrides).validate()

    def test_defaults(self):
        config = PipelineConfig()
        config.validate()
        assert config.codebleu_threshold == 0.5
        assert (config.strict_attempts, config.relaxed_attempts, config.postprocess_budget) == (3, 3, 2)
