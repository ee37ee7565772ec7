"""Per-test outcomes and the suite report."""

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from testenhance.core.repair import RepairLog
from testenhance.metrics.codebleu import CodeBleuScore

SCHEMA_VERSION = 1


class OutcomeKind(Enum):
    IMPROVED = "improved"
    STAGNATED = "stagnated"
    REVERTED = "reverted"


@dataclass
class EnhancementOutcome:
    """How the enhancement ladder ended for one test."""
    kind: OutcomeKind
    attempts_used: int = 0
    repair_log: RepairLog = field(default_factory=RepairLog)
    final_score: CodeBleuScore | None = None
    reason: str = ""


@dataclass
class TestRecord:
    """Report line for one baseline test."""
    source_file: str
    baseline_name: str
    final_name: str = ""
    outcome: EnhancementOutcome | None = None
    verify_status: str | None = None
    refined: bool = False
    dropped: bool = False
    drop_reason: str = ""
    error: str | None = None
    refine_log: RepairLog = field(default_factory=RepairLog)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        data = {
            "file": self.source_file,
            "baseline_name": self.baseline_name,
            "name": self.final_name or self.baseline_name,
            "refined": self.refined,
        }
        if self.refined:
            data["refine_actions"] = self.refine_log.to_list()
        if self.error is not None:
            data["error"] = self.error
            return data
        outcome = self.outcome
        data["outcome"] = outcome.kind.value
        data["attempts"] = outcome.attempts_used
        data["reason"] = outcome.reason
        data["score"] = outcome.final_score.to_dict() if outcome.final_score else None
        data["repair_actions"] = outcome.repair_log.to_list()
        data["verify"] = self.verify_status
        data["dropped"] = self.dropped
        if self.dropped:
            data["drop_reason"] = self.drop_reason
        return data


@dataclass
class VerifyTally:
    passed: int = 0
    failed: int = 0
    unstable: int = 0

    def add(self, other: "VerifyTally") -> None:
        self.passed += other.passed
        self.failed += other.failed
        self.unstable += other.unstable

    def to_dict(self) -> dict:
        return {"passed": self.passed, "failed": self.failed, "unstable": self.unstable}


def _pct(part: int, whole: int) -> float:
    return round(100.0 * part / whole, 2) if whole else 0.0


@dataclass
class SuiteReport:
    """
    Outcome accounting for one or more suites.

    Errored tests are listed separately and excluded from the totals, so
    improved + stagnated + reverted always equals tests.
    """
    records: list[TestRecord] = field(default_factory=list)
    verify: VerifyTally = field(default_factory=VerifyTally)
    skipped_files: list[str] = field(default_factory=list)
    deduplicated: int = 0
    opaque_catalogue: Counter = field(default_factory=Counter)
    duration_seconds: float = 0.0

    @property
    def outcomes(self) -> list[TestRecord]:
        return [r for r in self.records if r.error is None]

    @property
    def errors(self) -> list[TestRecord]:
        return [r for r in self.records if r.error is not None]

    @property
    def dropped(self) -> list[TestRecord]:
        return [r for r in self.outcomes if r.dropped]

    def count(self, kind: OutcomeKind) -> int:
        return sum(1 for r in self.outcomes if r.outcome.kind is kind)

    @property
    def totals(self) -> dict:
        return {
            "tests": len(self.outcomes),
            "improved": self.count(OutcomeKind.IMPROVED),
            "reverted": self.count(OutcomeKind.REVERTED),
            "stagnated": self.count(OutcomeKind.STAGNATED),
            "errored": len(self.errors),
        }

    @property
    def percentages(self) -> dict:
        tests = len(self.outcomes)
        return {
            "improved_pct": _pct(self.count(OutcomeKind.IMPROVED), tests),
            "reverted_pct": _pct(self.count(OutcomeKind.REVERTED), tests),
            "stagnated_pct": _pct(self.count(OutcomeKind.STAGNATED), tests),
        }

    @classmethod
    def merge(cls, reports) -> "SuiteReport":
        """Aggregate several reports in order."""
        merged = cls()
        for report in reports:
            merged.records.extend(report.records)
            merged.verify.add(report.verify)
            merged.skipped_files.extend(report.skipped_files)
            merged.deduplicated += report.deduplicated
            merged.opaque_catalogue.update(report.opaque_catalogue)
            merged.duration_seconds += report.duration_seconds
        return merged

    def to_dict(self, include_duration: bool = True) -> dict:
        data = {
            "schema_version": SCHEMA_VERSION,
            "totals": self.totals,
            "percentages": self.percentages,
            "verify": self.verify.to_dict(),
            "deduplicated": self.deduplicated,
            "dropped_baselines": [r.baseline_name for r in self.dropped],
            "skipped_files": list(self.skipped_files),
            "errors": [r.to_dict() for r in self.errors],
            "opaque_catalogue": dict(sorted(self.opaque_catalogue.items())),
            "tests": [r.to_dict() for r in self.outcomes],
        }
        if include_duration:
            data["duration_seconds"] = round(self.duration_seconds, 3)
        return data
