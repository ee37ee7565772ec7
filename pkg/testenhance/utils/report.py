"""JSON report emission."""

import json
import logging
from pathlib import Path

from testenhance.core.outcomes import SuiteReport

logger = logging.getLogger(__name__)


class ReportError(Exception):
    """The report could not be written."""
    pass


def report_json(report: SuiteReport, include_duration: bool = True) -> str:
    return json.dumps(report.to_dict(include_duration), indent=2, ensure_ascii=False) + "\n"


def emit_report(report: SuiteReport, path: Path, include_duration: bool = True) -> None:
    """
    Write the report as one JSON document.

    Raises:
        ReportError: On any IO failure.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_json(report, include_duration), encoding="utf-8")
    except OSError as e:
        raise ReportError(f"Cannot write report {path}: {e}") from e
    logger.info("Report written to %s", path)
