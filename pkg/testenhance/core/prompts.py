"""Stage prompts: template loading, rendering and response parsing."""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

from testenhance.lang.nodes import RESERVED_WORDS, is_identifier

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE_DIR = Path(__file__).parent.parent / "templates"

SECTION_NAMES = ("persona", "instruction", "reasoning", "format")
PLACEHOLDERS = ("test_source", "class_source", "taken_names")

_SECTION_RE = re.compile(r"^\[(\w+)\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
_CONVENTION_RE = re.compile(r"\b(given|when|then)\b", re.IGNORECASE)
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)
_BACKTICK_RE = re.compile(r"`([^`\n]+)`")
_METHOD_RE = re.compile(r"\bvoid\s+([A-Za-z_]\w*)\s*\(")
_WORD_RE = re.compile(r"[A-Za-z_]\w*")
_CAMEL_RE = re.compile(r"[a-z0-9][A-Z]")
_TESTISH_RE = re.compile(r"^[tT]est[A-Z0-9_]")


class PromptError(Exception):
    """Base exception for prompt errors."""
    pass


class TemplateError(PromptError):
    """A template file is missing or malformed."""
    pass


class MissingContext(PromptError):
    """The stage needs context the caller did not provide."""
    pass


class NoNameFound(PromptError):
    """A name suggestion response holds no usable identifier."""
    pass


class PromptStage(Enum):
    """Pipeline stages that talk to the model."""
    DATA_REFINEMENT = "data_refinement"
    POST_PROCESS = "post_process"
    POST_PROCESS_RELAXED = "post_process_relaxed"
    NAME_SUGGESTION = "name_suggestion"

    @property
    def tag(self) -> str:
        """Short label recorded with each request."""
        return _STAGE_TAGS[self]

    @property
    def filename(self) -> str:
        return f"{self.value}.txt"


_STAGE_TAGS = {
    PromptStage.DATA_REFINEMENT: "refine",
    PromptStage.POST_PROCESS: "postprocess",
    PromptStage.POST_PROCESS_RELAXED: "postprocess-relaxed",
    PromptStage.NAME_SUGGESTION: "name",
}


@dataclass(frozen=True)
class PromptTemplate:
    """The four anatomy sections of a stage prompt."""
    stage: PromptStage
    persona: str
    instruction: str
    reasoning_cue: str
    format_spec: str

    def __post_init__(self):
        for section in ("persona", "instruction", "reasoning_cue", "format_spec"):
            if not getattr(self, section).strip():
                raise TemplateError(f"{self.stage.value}: section {section} is empty")
        for section in ("persona", "instruction", "reasoning_cue", "format_spec"):
            for name in _PLACEHOLDER_RE.findall(getattr(self, section)):
                if name not in PLACEHOLDERS:
                    raise TemplateError(f"{self.stage.value}: unknown placeholder {{{{{name}}}}}")
        if self.stage is PromptStage.POST_PROCESS_RELAXED and _CONVENTION_RE.search(self.format_spec):
            raise TemplateError("relaxed post-processing format must not require comment structure")


@dataclass(frozen=True)
class PromptContext:
    """What a prompt is about; extra_notes carries re-prompt feedback."""
    test_source: str
    class_source: str | None = None
    taken_names: tuple[str, ...] = ()
    extra_notes: str | None = None

    def __post_init__(self):
        if not self.test_source.strip():
            raise ValueError("test_source must not be empty")


def parse_template(stage: PromptStage, text: str) -> PromptTemplate:
    """
    Parse a template file made of `[persona]`, `[instruction]`,
    `[reasoning]` and `[format]` sections.

    Raises:
        TemplateError: On unknown, duplicate or missing sections.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        match = _SECTION_RE.match(line)
        if match:
            current = match.group(1).lower()
            if current not in SECTION_NAMES:
                raise TemplateError(f"{stage.value}: unknown section [{current}]")
            if current in sections:
                raise TemplateError(f"{stage.value}: duplicate section [{current}]")
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
        elif line.strip():
            raise TemplateError(f"{stage.value}: text before the first section")

    missing = [name for name in SECTION_NAMES if name not in sections]
    if missing:
        raise TemplateError(f"{stage.value}: missing section(s) {', '.join(missing)}")

    body = {name: "\n".join(lines).strip() for name, lines in sections.items()}
    return PromptTemplate(
        stage=stage,
        persona=body["persona"],
        instruction=body["instruction"],
        reasoning_cue=body["reasoning"],
        format_spec=body["format"],
    )


def load_templates(directory: Path | None = None) -> dict[PromptStage, PromptTemplate]:
    """
    Load one template per stage from directory (packaged defaults if None).

    Raises:
        TemplateError: If a file is missing or malformed.
    """
    directory = Path(directory) if directory else DEFAULT_TEMPLATE_DIR
    templates = {}
    for stage in PromptStage:
        path = directory / stage.filename
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise TemplateError(f"missing template file {path}: {e}") from e
        templates[stage] = parse_template(stage, text)
    logger.debug("Loaded %d prompt templates from %s", len(templates), directory)
    return templates


@lru_cache(maxsize=1)
def default_templates() -> dict[PromptStage, PromptTemplate]:
    return load_templates(DEFAULT_TEMPLATE_DIR)


def render_prompt(
    stage: PromptStage,
    ctx: PromptContext,
    templates: dict[PromptStage, PromptTemplate] | None = None,
) -> str:
    """
    Render the prompt for a stage.

    Sections appear as persona, instruction, fenced context, taken names
    (name suggestion only), notes, reasoning cue and format. The output is
    a pure function of its inputs.

    Raises:
        MissingContext: If data refinement is requested without class source.
    """
    template = (templates or default_templates())[stage]
    if stage is PromptStage.DATA_REFINEMENT and not ctx.class_source:
        raise MissingContext("data refinement needs the class under test")

    values = {
        "test_source": ctx.test_source.strip("\n"),
        "class_source": (ctx.class_source or "").strip("\n"),
        "taken_names": ", ".join(sorted(ctx.taken_names)) or "none",
    }

    def fill(section: str) -> str:
        return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], section)

    blocks = [fill(template.persona), fill(template.instruction)]
    blocks.append(f"Test case:\n```java\n{values['test_source']}\n```")
    if stage is PromptStage.DATA_REFINEMENT:
        blocks.append(f"Class under test:\n```java\n{values['class_source']}\n```")
    if stage is PromptStage.NAME_SUGGESTION:
        taken = sorted(ctx.taken_names)
        listing = "\n".join(f"- {name}" for name in taken) if taken else "- none"
        blocks.append(f"Names already in use (do not reuse any of them):\n{listing}")
    if ctx.extra_notes:
        blocks.append(f"Note: {ctx.extra_notes.strip()}")
    blocks.append(fill(template.reasoning_cue))
    blocks.append(fill(template.format_spec))
    return "\n\n".join(blocks) + "\n"


def parse_name_response(response: str) -> str:
    """
    Extract a test method name from a model response.

    Looks in a fenced block first, then a backticked token, then the
    longest camelCase or test-prefixed word. The result always starts
    with "test".

    Raises:
        NoNameFound: If no plausible identifier is present.
    """
    name = _find_name(response)
    if name is None:
        raise NoNameFound(f"no method name in response: {response[:80]!r}")

    if name.startswith("Test"):
        name = "t" + name[1:]
    elif not name.startswith("test"):
        name = "test" + name[0].upper() + name[1:]
    if not is_identifier(name):
        raise NoNameFound(f"not an identifier: {name!r}")
    return name


def _find_name(response: str) -> str | None:
    for match in _FENCE_RE.finditer(response):
        content = match.group(1)
        method = _METHOD_RE.search(content)
        if method:
            return method.group(1)
        word = _first_word(content)
        if word:
            return word

    for match in _BACKTICK_RE.finditer(response):
        word = _first_word(match.group(1))
        if word:
            return word

    candidates = [w for w in _WORD_RE.findall(response) if _plausible(w)]
    if not candidates:
        return None
    return max(candidates, key=len)


def _first_word(text: str) -> str | None:
    for word in _WORD_RE.findall(text):
        if word not in RESERVED_WORDS and word not in ("Test", "Override"):
            return word
    return None


def _plausible(word: str) -> bool:
    if word in RESERVED_WORDS:
        return False
    return bool(_CAMEL_RE.search(word) or _TESTISH_RE.match(word))
