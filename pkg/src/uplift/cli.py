"""The uplift command line: plan, run, bench, and report subcommands.

Configuration comes from a JSON file (--config, default uplift.json when
present) with flags overriding individual keys. Exit codes form a closed
set: 0 success, 2 config/IO, 3 unparseable plan, 4 failed generation,
5 dangling reference or unknown category.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from .agents import AgentContext, PromptLibrary, DEFAULT_PROMPT_DIR, manager_confirm, manager_plan, render_tasks
from .backend import Backend, DEFAULT_MODEL, HttpBackend, load_script
from .errors import (
    DanglingReference,
    ConfigError,
    PlanParseError,
    UnknownCategory,
    UpliftError,
)
from .evaluation import (
    aggregate,
    emit_report,
    ingest_ledger,
    ingest_replaced_functions,
    ingest_scores,
    read_bench_index,
    run_bench,
    write_bench_index,
)
from .model import artifact_from_file, load_requirements
from .pipeline import (
    BASELINE_MODES,
    PipelineConfig,
    PipelineMode,
    RunStatus,
    Transcript,
    run_baseline,
    run_pipeline,
    write_transcript,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLAN = 3
EXIT_FAILED_GENERATION = 4
EXIT_REFERENCE = 5

DEFAULT_CONFIG_NAME = "uplift.json"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"


@dataclasses.dataclass
class CliConfig:
    backend_kind: str = "http"
    backend_endpoint: str = DEFAULT_ENDPOINT
    backend_model: str = DEFAULT_MODEL
    backend_script_path: str | None = None
    pipeline_mode: str = PipelineMode.SYSTEM_MANAGER.value
    pipeline_max_loop_iterations: int = 2
    pipeline_failed_error_threshold: int = 7
    prompts_dir: str = str(DEFAULT_PROMPT_DIR)
    bench_repetitions: int = 10
    bench_parallelism: int = 1

    def validate(self) -> None:
        if self.backend_kind not in ("http", "script"):
            raise ConfigError(f"backend.kind must be http or script, got {self.backend_kind!r}")
        if self.backend_kind == "script" and not self.backend_script_path:
            raise ConfigError("backend.kind=script requires backend.script_path")
        if self.backend_kind == "http" and self.backend_script_path:
            raise ConfigError("backend.script_path is only valid with backend.kind=script")
        if self.bench_repetitions < 1:
            raise ConfigError("bench.repetitions must be >= 1")
        if self.bench_parallelism < 1:
            raise ConfigError("bench.parallelism must be >= 1")
        try:
            PipelineMode(self.pipeline_mode)
        except ValueError:
            raise ConfigError(f"unknown pipeline.mode {self.pipeline_mode!r}") from None


_SECTION_KEYS = {
    "backend": {"kind", "endpoint", "model", "script_path"},
    "pipeline": {"mode", "max_loop_iterations", "failed_error_threshold"},
    "prompts": {"dir"},
    "bench": {"repetitions", "parallelism"},
}


def load_config(path: str | None) -> CliConfig:
    config = CliConfig()
    chosen = Path(path) if path else Path(DEFAULT_CONFIG_NAME)
    if path is None and not chosen.is_file():
        return config
    if not chosen.is_file():
        raise ConfigError(f"config file not found: {chosen}")
    try:
        data = json.loads(chosen.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{chosen}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{chosen}: expected a JSON object")
    for section, keys in data.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{chosen}: unknown section {section!r}")
        if not isinstance(keys, dict):
            raise ConfigError(f"{chosen}: section {section!r} must be an object")
        for key, value in keys.items():
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{chosen}: unknown key {section}.{key}")
            setattr(config, f"{section}_{key}", value)
    return config


def apply_flags(config: CliConfig, args: argparse.Namespace) -> CliConfig:
    if getattr(args, "backend", None):
        config.backend_kind = args.backend
    if getattr(args, "script", None):
        config.backend_script_path = args.script
        config.backend_kind = "script"
    if getattr(args, "mode", None):
        config.pipeline_mode = args.mode
    if getattr(args, "reps", None) is not None:
        config.bench_repetitions = args.reps
    if getattr(args, "max_loop", None) is not None:
        config.pipeline_max_loop_iterations = args.max_loop
    config.validate()
    return config


def make_backend(config: CliConfig) -> Backend:
    if config.backend_kind == "script":
        return load_script(config.backend_script_path)
    return HttpBackend(config.backend_endpoint)


def pipeline_config(config: CliConfig, backend: Backend) -> PipelineConfig:
    return PipelineConfig(
        mode=PipelineMode(config.pipeline_mode),
        backend=backend,
        prompt_dir=Path(config.prompts_dir),
        max_loop_iterations=config.pipeline_max_loop_iterations,
        failed_error_threshold=config.pipeline_failed_error_threshold,
        model=config.backend_model,
    )


def cmd_plan(args: argparse.Namespace) -> int:
    config = apply_flags(load_config(args.config), args)
    requirements = load_requirements(args.requirements)
    ctx = AgentContext(
        backend=make_backend(config),
        prompts=PromptLibrary(config.prompts_dir),
        transcript=Transcript("plan"),
        model=config.backend_model,
    )
    try:
        plan = manager_confirm(ctx, manager_plan(ctx, requirements), requirements)
    except PlanParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLAN
    print(render_tasks(plan))
    return EXIT_OK


def _run_one(config: CliConfig, input_path: Path, spec_path: Path, out_dir: Path):
    backend = make_backend(config)
    pconfig = pipeline_config(config, backend)
    code = artifact_from_file(input_path)
    transcript = Transcript("run-001")
    if pconfig.mode in BASELINE_MODES:
        prompt_text = spec_path.read_text(encoding="utf-8")
        outcome = run_baseline(code, prompt_text, pconfig, transcript=transcript)
    else:
        requirements = load_requirements(spec_path)
        outcome = run_pipeline(code, requirements, pconfig, transcript=transcript)
    case_dir = out_dir / input_path.stem
    case_dir.mkdir(parents=True, exist_ok=True)
    write_transcript(outcome, transcript.entries, case_dir / f"{outcome.run_id}.jsonl")
    if outcome.final_code is not None:
        updated = case_dir / f"{outcome.run_id}.updated{input_path.suffix}"
        updated.write_text(outcome.final_code.content + "\n", encoding="utf-8")
    return outcome


def cmd_run(args: argparse.Namespace) -> int:
    config = apply_flags(load_config(args.config), args)
    out_dir = Path(args.out or "out")
    outcome = _run_one(config, Path(args.input), Path(args.spec), out_dir)
    loc = outcome.final_code.loc if outcome.final_code is not None else "-"
    print(
        f"{outcome.run_id} status={outcome.status.value} "
        f"duration={outcome.duration_seconds:.3f}s loc={loc} tasks={outcome.task_count}"
    )
    if outcome.status is RunStatus.FAILED_GENERATION:
        return EXIT_FAILED_GENERATION
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = apply_flags(load_config(args.config), args)
    case_dir = Path(args.case_dir)
    if not case_dir.is_dir():
        raise ConfigError(f"case directory not found: {case_dir}")
    if config.backend_kind == "script":
        def factory(i: int) -> Backend:
            return load_script(config.backend_script_path)

        backend: Backend = factory(0)
    else:
        factory = None
        backend = make_backend(config)
    pconfig = pipeline_config(config, backend)
    out_dir = Path(args.out or "out") / case_dir.name
    outcomes = run_bench(
        case_dir,
        pconfig,
        config.bench_repetitions,
        out_dir=out_dir,
        backend_factory=factory,
        parallelism=config.bench_parallelism,
    )
    write_bench_index(outcomes, out_dir / "index.csv")
    failed = sum(1 for o in outcomes if o.status is RunStatus.FAILED_GENERATION)
    print(f"{len(outcomes)} runs ({failed} failed) -> {out_dir / 'index.csv'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    case_out = Path(args.case_out_dir)
    records = read_bench_index(case_out / "index.csv")
    errors = ingest_ledger(args.ledger)
    scores = ingest_scores(args.scores) if args.scores else []
    replaced = ingest_replaced_functions(args.rf) if args.rf else None
    config = load_config(args.config)
    metrics = aggregate(
        records,
        errors,
        scores,
        args.label,
        replaced_functions=replaced,
        failed_error_threshold=config.pipeline_failed_error_threshold,
    )
    out_dir = Path(args.out) if args.out else case_out
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report([metrics], out_dir / "report.csv")
    parts = [
        f"label={metrics.method_label}",
        f"runs={metrics.runs_total}",
        f"failed={metrics.runs_failed}",
        f"mean_errors={metrics.mean_errors:.3f}",
        f"sd_errors={metrics.sd_errors:.3f}",
        f"mean_loc={metrics.mean_loc:.3f}",
        f"mean_duration={metrics.mean_duration_seconds:.3f}s",
        f"fully_correct={metrics.fully_correct_runs}",
    ]
    if metrics.requirement_means is not None:
        means = ",".join(f"{m:.3f}" for m in metrics.requirement_means)
        parts.append(f"requirement_means=[{means}]")
        parts.append(f"requirement_total={metrics.requirement_total:.3f}")
    if metrics.mean_replaced_functions is not None:
        parts.append(f"mean_replaced_functions={metrics.mean_replaced_functions:.3f}")
    print(" ".join(parts))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uplift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="JSON config file (default uplift.json)")
        p.add_argument("--backend", choices=["http", "script"], default=None)
        p.add_argument("--script", default=None, help="scripted-backend JSON file")
        p.add_argument("--mode", choices=[m.value for m in PipelineMode], default=None)
        p.add_argument("--reps", type=int, default=None, help="bench repetitions")
        p.add_argument("--max-loop", type=int, default=None, dest="max_loop")
        p.add_argument(
            "--out",
            default=None,
            help="output directory (default: out/, or the case output directory for report)",
        )

    plan = sub.add_parser("plan", help="print the manager's confirmed task plan")
    plan.add_argument("requirements")
    shared(plan)
    plan.set_defaults(func=cmd_plan)

    run = sub.add_parser("run", help="execute one run and write its artifacts")
    run.add_argument("input", help="source file to update")
    run.add_argument("spec", help="requirements file (system modes) or prompt file (baselines)")
    shared(run)
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="repeat a case and write an index.csv")
    bench.add_argument("case_dir", help="directory with original.<ext> and requirements.txt/prompt.txt")
    shared(bench)
    bench.set_defaults(func=cmd_bench)

    report = sub.add_parser("report", help="aggregate bench artifacts against a human error ledger")
    report.add_argument("case_out_dir", help="bench output directory containing index.csv")
    report.add_argument("ledger", help="error ledger CSV")
    report.add_argument("--scores", default=None, help="requirement score CSV")
    report.add_argument("--rf", default=None, help="replaced-functions sidecar CSV")
    report.add_argument("--label", required=True, help="method label for the report row")
    shared(report)
    report.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DanglingReference, UnknownCategory) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except PlanParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except UpliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
