"""Corpus walking and output layout."""

import logging
from dataclasses import dataclass
from pathlib import Path

from testenhance.lang.errors import ParseError
from testenhance.lang.nodes import TestCase
from testenhance.lang.parser import parse_test_file
from testenhance.lang.printer import render

logger = logging.getLogger(__name__)

TEST_FILE_SUFFIX = "_test.txt"
CLASS_FILE_SUFFIX = ".txt"
BASELINE_DIR = "baseline"


@dataclass
class CorpusFile:
    """One parsed test file and its optional class source."""
    path: Path
    stem: str
    tests: list[TestCase]
    class_source: str | None = None

    @property
    def class_name(self) -> str:
        return self.path.name[: -len(TEST_FILE_SUFFIX)]


def find_test_files(input_dir: Path) -> list[Path]:
    """Every `*_test.txt` below input_dir, in sorted order."""
    return sorted(p for p in Path(input_dir).rglob(f"*{TEST_FILE_SUFFIX}") if p.is_file())


def class_source_for(test_file: Path, class_sources_dir: Path | None) -> str | None:
    """The text of `Foo.txt` for `Foo_test.txt`, if present."""
    if class_sources_dir is None:
        return None
    class_file = Path(class_sources_dir) / (test_file.name[: -len(TEST_FILE_SUFFIX)] + CLASS_FILE_SUFFIX)
    if not class_file.is_file():
        logger.info("No class source for %s; data refinement disabled", test_file.name)
        return None
    try:
        return class_file.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        logger.warning("Cannot read class source %s: %s", class_file, e)
        return None


def load_corpus(input_dir: Path, class_sources_dir: Path | None = None) -> tuple[list[CorpusFile], list[str]]:
    """
    Parse every test file below input_dir.

    Returns:
        (parsed files, relative paths of files skipped because they do not parse)
    """
    input_dir = Path(input_dir)
    files: list[CorpusFile] = []
    skipped: list[str] = []
    for path in find_test_files(input_dir):
        relative = path.relative_to(input_dir)
        try:
            tests = parse_test_file(path.read_text(encoding="utf-8"))
        except (ParseError, OSError, UnicodeDecodeError) as e:
            logger.warning("Skipping %s: %s", relative, e)
            skipped.append(relative.as_posix())
            continue
        stem = relative.with_suffix("").as_posix()
        files.append(CorpusFile(path, stem, tests, class_source_for(path, class_sources_dir)))
    logger.info("Loaded %d test file(s), skipped %d", len(files), len(skipped))
    return files, skipped


def write_tests(directory: Path, tests: list[TestCase]) -> list[Path]:
    """Write one `<name>.txt` per test."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for test in tests:
        path = directory / f"{test.name}.txt"
        path.write_text(render(test), encoding="utf-8")
        written.append(path)
    return written


def write_suite(output_dir: Path, stem: str, tests: list[TestCase], baselines: list[TestCase]) -> None:
    """Enhanced tests under `<output>/<stem>/`, baselines under `<output>/baseline/<stem>/`."""
    output_dir = Path(output_dir)
    write_tests(output_dir / stem, tests)
    write_tests(output_dir / BASELINE_DIR / stem, baselines)
