"""Tests for prompt templates, rendering and name parsing."""

import re

import pytest

from conftest import WEAPON_TEST
from testenhance.core.prompts import (
    DEFAULT_TEMPLATE_DIR,
    MissingContext,
    NoNameFound,
    PromptContext,
    PromptStage,
    TemplateError,
    load_templates,
    parse_name_response,
    parse_template,
    render_prompt,
)

CONVENTION_RE = re.compile(r"\b(given|when|then)\b", re.IGNORECASE)

VALID_TEMPLATE = """\
[persona]
You review tests.

[instruction]
Improve {{test_source}}.

[reasoning]
Think first.

[format]
Answer in a code block.
"""


class TestRenderPrompt:

    def test_post_process_requires_convention(self):
        prompt = render_prompt(PromptStage.POST_PROCESS, PromptContext(WEAPON_TEST))
        assert "Given" in prompt and "When" in prompt and "Then" in prompt
        assert WEAPON_TEST.strip("\n") in prompt

    def test_relaxed_has_no_convention(self):
        prompt = render_prompt(PromptStage.POST_PROCESS_RELAXED, PromptContext(WEAPON_TEST))
        assert not CONVENTION_RE.search(prompt)

    def test_deterministic(self):
        ctx = PromptContext(WEAPON_TEST, taken_names=("testB", "testA"))
        first = render_prompt(PromptStage.NAME_SUGGESTION, ctx)
        assert render_prompt(PromptStage.NAME_SUGGESTION, ctx) == first

    def test_section_order(self):
        prompt = render_prompt(PromptStage.POST_PROCESS, PromptContext(WEAPON_TEST))
        persona = prompt.index("You are an experienced Java developer")
        context = prompt.index("Test case:\n```java\n")
        reasoning = prompt.index("Think step by step")
        assert persona < context < reasoning

    def test_refinement_needs_class_source(self):
        with pytest.raises(MissingContext):
            render_prompt(PromptStage.DATA_REFINEMENT, PromptContext(WEAPON_TEST))

    def test_refinement_includes_class_source(self):
        ctx = PromptContext(WEAPON_TEST, class_source="public class WeaponGameData { }")
        prompt = render_prompt(PromptStage.DATA_REFINEMENT, ctx)
        assert "Class under test:\n```java\npublic class WeaponGameData { }\n```" in prompt

    def test_taken_names_listed_sorted(self):
        ctx = PromptContext(WEAPON_TEST, taken_names=("testB", "testA"))
        prompt = render_prompt(PromptStage.NAME_SUGGESTION, ctx)
        assert "Names already in use (do not reuse any of them):\n- testA\n- testB" in prompt

    def test_no_taken_names(self):
        prompt = render_prompt(PromptStage.NAME_SUGGESTION, PromptContext(WEAPON_TEST))
        assert "Names already in use (do not reuse any of them):\n- none" in prompt

    def test_taken_names_only_for_naming(self):
        ctx = PromptContext(WEAPON_TEST, taken_names=("testA",))
        assert "Names already in use" not in render_prompt(PromptStage.POST_PROCESS, ctx)

    def test_extra_notes(self):
        ctx = PromptContext(WEAPON_TEST, extra_notes="The previous answer did not compile: ';' expected")
        prompt = render_prompt(PromptStage.POST_PROCESS, ctx)
        assert "Note: The previous answer did not compile: ';' expected" in prompt

    def test_empty_test_source(self):
        with pytest.raises(ValueError):
            PromptContext("   \n")


class TestTemplates:

    def test_packaged_templates_load(self):
        templates = load_templates(DEFAULT_TEMPLATE_DIR)
        assert set(templates) == set(PromptStage)

    def test_custom_directory(self, tmp_path):
        for stage in PromptStage:
            (tmp_path / stage.filename).write_text(VALID_TEMPLATE, encoding="utf-8")
        templates = load_templates(tmp_path)
        prompt = render_prompt(PromptStage.POST_PROCESS, PromptContext("int a = 1;"), templates)
        assert prompt.startswith("You review tests.\n\nImprove int a = 1;.")

    def test_missing_file(self, tmp_path):
        with pytest.raises(TemplateError, match="missing template file"):
            load_templates(tmp_path)

    def test_missing_section(self):
        with pytest.raises(TemplateError, match="missing section"):
            parse_template(PromptStage.POST_PROCESS, "[persona]\nA\n[instruction]\nB\n[format]\nC\n")

    def test_unknown_section(self):
        with pytest.raises(TemplateError, match="unknown section"):
            parse_template(PromptStage.POST_PROCESS, VALID_TEMPLATE + "[extra]\nD\n")

    def test_duplicate_section(self):
        with pytest.raises(TemplateError, match="duplicate section"):
            parse_template(PromptStage.POST_PROCESS, VALID_TEMPLATE + "[format]\nD\n")

    def test_empty_section(self):
        with pytest.raises(TemplateError, match="empty"):
            parse_template(PromptStage.POST_PROCESS, VALID_TEMPLATE.replace("Think first.", ""))

    def test_unknown_placeholder(self):
        with pytest.raises(TemplateError, match="unknown placeholder"):
            parse_template(PromptStage.POST_PROCESS, VALID_TEMPLATE.replace("{{test_source}}", "{{other}}"))

    def test_text_before_first_section(self):
        with pytest.raises(TemplateError):
            parse_template(PromptStage.POST_PROCESS, "preamble\n" + VALID_TEMPLATE)

    def test_relaxed_format_rejects_convention(self):
        text = VALID_TEMPLATE.replace("Answer in a code block.", "Use Given/When/Then comments.")
        parse_template(PromptStage.POST_PROCESS, text)
        with pytest.raises(TemplateError):
            parse_template(PromptStage.POST_PROCESS_RELAXED, text)


class TestParseNameResponse:

    @pytest.mark.parametrize("response, expected", [
        ("I suggest `testEqualsWithDifferentMinDmgValues`.", "testEqualsWithDifferentMinDmgValues"),
        ("```java\n@Test\npublic void testWeaponsDiffer() {\n```", "testWeaponsDiffer"),
        ("EqualsCheck", "testEqualsCheck"),
        ("`TestSomething`", "testSomething"),
        ("A good name would be weaponsWithDifferentNamesAreNotEqual here", "testWeaponsWithDifferentNamesAreNotEqual"),
    ])
    def test_names(self, response, expected):
        assert parse_name_response(response) == expected

    def test_prose_only(self):
        with pytest.raises(NoNameFound):
            parse_name_response("I am not sure what this test does")
