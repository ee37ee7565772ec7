"""Compile and stability checks for enhanced tests."""

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from testenhance.lang.errors import ParseError
from testenhance.lang.nodes import TestCase
from testenhance.lang.parser import parse_test_case
from testenhance.lang.printer import render

logger = logging.getLogger(__name__)

FILE_PLACEHOLDER = "{file}"
RUN_FLAG = "--run"


class VerifierSpawnFailure(Exception):
    """The verifier command could not be started."""
    pass


class VerifierMode(Enum):
    BUILTIN_SYNTAX = "builtin_syntax"
    EXTERNAL = "external"


@dataclass
class VerifierCommand:
    """How Stage 4 checks a test."""
    mode: VerifierMode = VerifierMode.BUILTIN_SYNTAX
    command_template: str = ""
    unstable_markers: tuple[str, ...] = ("Exception", "Error")
    assertion_markers: tuple[str, ...] = (
        "AssertionError", "AssertionFailedError", "ComparisonFailure",
    )
    timeout_seconds: float = 60

    def validate(self) -> None:
        """Raise ValueError if external mode has no command."""
        if self.mode is VerifierMode.EXTERNAL and not self.command_template.strip():
            raise ValueError("external verifier requires a command template")


class VerifyStatus(Enum):
    COMPILED_STABLE = "compiled_stable"
    COMPILED_UNSTABLE = "compiled_unstable"
    COMPILE_ERROR = "compile_error"


@dataclass(frozen=True)
class VerifyResult:
    status: VerifyStatus
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status is VerifyStatus.COMPILED_STABLE


class Verifier:
    """
    Runs the configured check on a rendered test.

    In external mode the command template is split shell-style, `{file}`
    is replaced by the path of the rendered test, and the run phase is the
    same command with `--run` appended.
    """

    def __init__(self, command: VerifierCommand | None = None):
        self._command = command or VerifierCommand()
        self._command.validate()

    @property
    def command(self) -> VerifierCommand:
        return self._command

    def verify(self, test: TestCase) -> VerifyResult:
        """
        Check one test.

        Raises:
            VerifierSpawnFailure: If the external command cannot be started.
        """
        source = render(test)
        if self._command.mode is VerifierMode.BUILTIN_SYNTAX:
            return self._verify_builtin(source)

        with tempfile.TemporaryDirectory(prefix="testenhance-") as tmp:
            path = Path(tmp) / f"{test.name}.txt"
            path.write_text(source, encoding="utf-8")
            return self._verify_external(path)

    def _verify_builtin(self, source: str) -> VerifyResult:
        try:
            parse_test_case(source)
        except ParseError as e:
            return VerifyResult(VerifyStatus.COMPILE_ERROR, str(e))
        return VerifyResult(VerifyStatus.COMPILED_STABLE)

    def _verify_external(self, path: Path) -> VerifyResult:
        args = [token.replace(FILE_PLACEHOLDER, str(path))
                for token in shlex.split(self._command.command_template)]

        code, output = self._run_command(args)
        if code is None:
            return VerifyResult(VerifyStatus.COMPILE_ERROR, "compile step timed out")
        if code != 0:
            return VerifyResult(VerifyStatus.COMPILE_ERROR, output.strip() or f"exit {code}")

        code, output = self._run_command(args + [RUN_FLAG])
        if code is None:
            return VerifyResult(VerifyStatus.COMPILED_UNSTABLE, "run step timed out")
        if code != 0 and self._is_unstable(output):
            return VerifyResult(VerifyStatus.COMPILED_UNSTABLE, output.strip())
        if code != 0:
            # Assertion failures are the test's own verdict, not instability
            logger.debug("Run step of %s failed on an assertion", path.name)
        return VerifyResult(VerifyStatus.COMPILED_STABLE)

    def _is_unstable(self, output: str) -> bool:
        if any(marker in output for marker in self._command.assertion_markers):
            return False
        return any(marker in output for marker in self._command.unstable_markers)

    def _run_command(self, args: list[str]) -> tuple[int | None, str]:
        """Run a command; returns (exit code or None on timeout, combined output)."""
        try:
            result = subprocess.run(
                args,
                capture_output=True,
                text=True,
                timeout=self._command.timeout_seconds,
            )
        except subprocess.TimeoutExpired:
            logger.warning("Verifier command timed out: %s", args[0])
            return None, ""
        except OSError as e:
            raise VerifierSpawnFailure(f"Cannot run {args[0] if args else '<empty>'}: {e}") from e
        return result.returncode, (result.stdout or "") + (result.stderr or "")


def compile_and_verify(test: TestCase, command: VerifierCommand) -> VerifyResult:
    return Verifier(command).verify(test)
