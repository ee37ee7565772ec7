"""Shared fixtures: corpus paths, the weapon example and fake completion backends."""

import re
import sys
from pathlib import Path

import pytest

from testenhance.core.verifier import VerifierCommand, VerifierMode
from testenhance.lang.parser import parse_test_case
from testenhance.llm.client import Backend

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
CLASSES_DIR = FIXTURES / "classes"

WEAPON_TEST = """\
@Test(timeout = 4000)
public void test0() throws Throwable {
    WeaponGameData weaponGameData0 = new WeaponGameData(0, 0, 0, "N&zMn$@6gffi<", "", 0);
    WeaponGameData weaponGameData1 = new WeaponGameData(0, 0, 0, "", "", 0);
    int int0 = weaponGameData0.getDmgBonus();
    boolean boolean0 = weaponGameData0.equals(weaponGameData1);
    assertFalse(boolean0);
}
"""

WEAPON_ENHANCED = """\
```java
@Test(timeout = 4000)
public void test0() throws Throwable {
    // Given two weapons with different names
    WeaponGameData ninjaSword = new WeaponGameData(0, 0, 0, "N&zMn$@6gffi<", "", 0);
    WeaponGameData defaultWeapon = new WeaponGameData(0, 0, 0, "", "", 0);
    // When comparing them
    int dmgBonus = ninjaSword.getDmgBonus();
    boolean isEqual = ninjaSword.equals(defaultWeapon);
    // Then they are not equal
    assertFalse("weapons should differ", isEqual);
}
```
"""

UNRELATED = "```java\nassertTrue(true);\n```"

_TEST_SOURCE_RE = re.compile(r"Test case:\n```java\n(.*?)\n```", re.DOTALL)
_NAME_RE = re.compile(r"\bvoid\s+(\w+)\s*\(")


def fake_answer(prompt: str) -> str:
    """
    Answer any stage prompt well: refinement echoes the test, post-processing
    adds Given/When/Then comments and naming appends "Readable".
    """
    source = _TEST_SOURCE_RE.search(prompt).group(1)
    if "Names already in use" in prompt:
        return f"I suggest `{_NAME_RE.search(source).group(1)}Readable`."
    if "Class under test:" in prompt:
        return f"```java\n{source}\n```"
    return f"```java\n// Given the fixture\n// When it is exercised\n// Then it holds\n{source}\n```"


class FakeEnhancer(Backend):
    """Backend answering from fake_answer and counting calls per stage."""

    name = "fake"

    def __init__(self):
        self.calls: list[str] = []

    def _complete(self, request):
        self.calls.append(request.stage_tag)
        return fake_answer(request.prompt)


@pytest.fixture
def weapon_test():
    return parse_test_case(WEAPON_TEST)


@pytest.fixture
def fake_enhancer():
    return FakeEnhancer()


def stub_verifier(directory: Path, body: str) -> VerifierCommand:
    """Write a Python verifier stub and return an external command running it."""
    script = directory / "verify_stub.py"
    script.write_text("import sys\n" + body, encoding="utf-8")
    return VerifierCommand(
        mode=VerifierMode.EXTERNAL,
        command_template=f'"{sys.executable}" "{script}" {{file}}',
        timeout_seconds=30,
    )


@pytest.fixture
def make_verifier(tmp_path):
    return lambda body: stub_verifier(tmp_path, body)
