"""Command-line entry point."""

import json
import logging
import os
import sys
import time
from pathlib import Path

import click

from testenhance import __version__
from testenhance.core.outcomes import SuiteReport
from testenhance.core.pipeline import EnhancementPipeline
from testenhance.core.prompts import TemplateError, load_templates
from testenhance.core.repair import ApiManifest
from testenhance.llm.cassette import Cassette, CassetteError
from testenhance.llm.client import (
    Backend,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
)
from testenhance.metrics.codebleu import CodeBleuError, codebleu
from testenhance.utils.corpus import load_corpus, write_suite
from testenhance.utils.report import ReportError, emit_report
from testenhance.utils.settings import BackendKind, ConfigError, RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURES = 2


def _fail(message: str, code: int) -> None:
    click.echo(f"Error: {message}", err=True)
    click.get_current_context().exit(code)


def build_backend(config: RunConfig) -> Backend:
    """
    Create the completion backend selected by config.

    Raises:
        ConfigError: If a script or cassette cannot be loaded.
    """
    if config.backend is BackendKind.SCRIPTED:
        try:
            responses = json.loads(config.script_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load --script {config.script_path}: {e}") from e
        if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
            raise ConfigError("--script must be a JSON list of strings")
        return ScriptedBackend(responses)

    try:
        if config.backend is BackendKind.REPLAY:
            return ReplayBackend(Cassette.load(config.cassette_path, must_exist=True))
        live = HttpBackend(config.endpoint)
        if config.record:
            return RecordingBackend(live, Cassette.load(config.cassette_path))
        return live
    except CassetteError as e:
        raise ConfigError(str(e)) from e


@click.group()
@click.version_option(__version__, prog_name="testenhance")
@click.option("--verbose", is_flag=True, help="Log every attempt and repair action.")
def cli(verbose: bool):
    """Enhance machine-generated unit tests with an LLM."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


_path = click.Path(path_type=Path)


@cli.command()
@click.option("--input", "input_dir", type=_path, help="Directory of *_test.txt files.")
@click.option("--output", "output_dir", type=_path, help="Directory for enhanced tests.")
@click.option("--class-sources", "class_sources_dir", type=_path,
              help="Directory of class sources (Foo.txt for Foo_test.txt).")
@click.option("--backend", type=click.Choice([k.value for k in BackendKind]))
@click.option("--cassette", "cassette_path", type=_path, help="Cassette file (*.cassette.jsonl).")
@click.option("--record", is_flag=True, default=None, help="Record live answers into the cassette.")
@click.option("--endpoint", help="LLM endpoint (default from LLM_ENDPOINT).")
@click.option("--model", help="Model id (default from LLM_MODEL).")
@click.option("--threshold", "codebleu_threshold", type=float, help="CodeBLEU gate.")
@click.option("--workers", type=int, help="Worker pool width.")
@click.option("--strict-logic", "strict_logic_check", is_flag=True, default=None,
              help="Reject enhancements that change statements, calls or literals.")
@click.option("--no-duration", is_flag=True, help="Omit the duration from the report.")
@click.option("--report", "report_path", type=_path, help="Report path (default <output>/report.json).")
@click.option("--verifier-cmd", "verifier_command", help="External verifier; {file} is the test path.")
@click.option("--config", "config_file", type=_path, help="JSON configuration file.")
@click.option("--templates", "templates_dir", type=_path, help="Directory of prompt templates.")
@click.option("--script", "script_path", type=_path, help="JSON list of scripted responses.")
@click.option("--api-manifest", type=_path, help="Extra calls accepted during data refinement.")
def enhance(config_file, no_duration, **flags):
    """Run the enhancement pipeline over a corpus."""
    started = time.monotonic()
    # Unset flags must not override the config file.
    for name in ("record", "strict_logic_check"):
        flags[name] = flags[name] or None
    if no_duration:
        flags["include_duration"] = False
    try:
        config = load_run_config(config_file, os.environ, flags)
        config.validate()
        templates = load_templates(config.templates_dir)
        manifest = None
        if config.api_manifest is not None:
            manifest = ApiManifest.parse(config.api_manifest.read_text(encoding="utf-8"))
        backend = build_backend(config)
    except (ConfigError, TemplateError) as e:
        _fail(str(e), EXIT_CONFIG)
    except OSError as e:
        _fail(f"cannot read --api-manifest: {e}", EXIT_CONFIG)

    corpus, skipped = load_corpus(config.input_dir, config.class_sources_dir)
    pipeline = EnhancementPipeline(backend, config.pipeline, templates, manifest, config.workers)

    reports = []
    try:
        for corpus_file in corpus:
            logger.info("Enhancing %s (%d tests)", corpus_file.stem, len(corpus_file.tests))
            result = pipeline.enhance_suite(
                corpus_file.tests, corpus_file.class_source, corpus_file.stem
            )
            write_suite(config.output_dir, corpus_file.stem, result.tests, result.baselines)
            reports.append(result.report)
    except OSError as e:
        _fail(f"cannot write output: {e}", EXIT_FAILURES)
    finally:
        backend.close()

    report = SuiteReport.merge(reports)
    report.skipped_files = skipped
    report.duration_seconds = time.monotonic() - started
    try:
        emit_report(report, config.resolved_report_path, config.include_duration)
    except ReportError as e:
        _fail(str(e), EXIT_FAILURES)

    totals, pct = report.totals, report.percentages
    click.echo(
        f"{totals['tests']} tests: {totals['improved']} improved ({pct['improved_pct']:.2f}%), "
        f"{totals['reverted']} reverted ({pct['reverted_pct']:.2f}%), "
        f"{totals['stagnated']} stagnated ({pct['stagnated_pct']:.2f}%), "
        f"{totals['errored']} errored, {len(skipped)} file(s) skipped"
    )
    click.get_current_context().exit(EXIT_FAILURES if report.errors else EXIT_OK)


@cli.command()
@click.argument("candidate", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("reference", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def score(candidate: Path, reference: Path):
    """Print the CodeBLEU components of CANDIDATE against REFERENCE."""
    try:
        result = codebleu(candidate.read_text(encoding="utf-8"), reference.read_text(encoding="utf-8"))
    except CodeBleuError as e:
        _fail(str(e), EXIT_CONFIG)
    click.echo(json.dumps(result.to_dict(), indent=2))


def run_cli(args) -> int:
    """Run the command group on args and return the exit code."""
    try:
        result = cli.main(args=list(args), prog_name="testenhance", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_CONFIG
    return result if isinstance(result, int) else EXIT_OK


def main():
    sys.exit(run_cli(sys.argv[1:]))
