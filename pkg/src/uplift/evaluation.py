"""Evaluation harness: repeated-run bench driver, human error-ledger
ingestion with same-mistake dedup, requirement 0/1 scoring, and the
aggregate statistics behind the report tables.

Error classification itself stays human. The harness ingests a ledger keyed
by mistake_id (the explicit "same mistake" assertion) rather than judging
code.
"""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from .backend import Backend
from .errors import (
    ConfigError,
    DanglingReference,
    EmptyInput,
    LedgerParseError,
    UnknownCategory,
)
from .model import artifact_from_file, load_requirements
from .pipeline import (
    BASELINE_MODES,
    PipelineConfig,
    RunOutcome,
    RunStatus,
    Transcript,
    run_baseline,
    run_pipeline,
    write_transcript,
)

LEDGER_HEADER = ["run_id", "mistake_id", "category", "description"]
SCORES_HEADER = ["run_id", "requirement_index", "value"]
RF_HEADER = ["run_id", "replaced_functions"]
INDEX_HEADER = ["run_id", "status", "duration_seconds", "loc"]


class ErrorCategory(str, Enum):
    """The four classifiable error kinds; a failed generation is a run
    status, not an error record."""

    FATAL = "fatal"
    RUNTIME = "runtime"
    CONTENT = "content"
    MISSING_ADDITIONAL = "missing_additional"


def parse_category(value: str) -> ErrorCategory:
    normalized = value.strip().lower().replace("/", "_").replace("-", "_").replace(" ", "_")
    try:
        return ErrorCategory(normalized)
    except ValueError:
        raise UnknownCategory(
            f"unknown error category {value!r}; expected one of "
            + ", ".join(c.value for c in ErrorCategory)
        ) from None


@dataclass(frozen=True)
class ErrorRecord:
    run_id: str
    mistake_id: str
    category: ErrorCategory
    description: str

    def __post_init__(self):
        if not self.run_id or not self.mistake_id:
            raise ValueError("run_id and mistake_id must be non-empty")
        if not self.description.strip():
            raise ValueError("description must be non-empty")


@dataclass(frozen=True)
class RequirementScoreRecord:
    run_id: str
    requirement_index: int
    value: int

    def __post_init__(self):
        if self.requirement_index < 1:
            raise ValueError("requirement_index must be positive")
        if self.value not in (0, 1):
            raise ValueError("value must be 0 or 1")


@dataclass(frozen=True)
class RunRecord:
    """The per-run facts aggregation needs; either adapted from a live
    RunOutcome or reloaded from a bench index.csv."""

    run_id: str
    status: RunStatus
    duration_seconds: float
    loc: int | None

    @classmethod
    def from_outcome(cls, outcome: RunOutcome) -> "RunRecord":
        return cls(
            run_id=outcome.run_id,
            status=outcome.status,
            duration_seconds=outcome.duration_seconds,
            loc=outcome.final_code.loc if outcome.final_code is not None else None,
        )


@dataclass(frozen=True)
class RunMetrics:
    run_id: str
    different_errors: int | None
    loc: int | None
    duration_seconds: float
    status: RunStatus
    replaced_functions: int | None = None


@dataclass(frozen=True)
class AggregateMetrics:
    method_label: str
    mean_errors: float
    sd_errors: float
    mean_loc: float
    mean_duration_seconds: float
    runs_total: int
    runs_failed: int
    fully_correct_runs: int
    category_counts: Mapping[ErrorCategory, int]
    requirement_means: tuple[float, ...] | None = None
    requirement_total: float | None = None
    mean_replaced_functions: float | None = None


def population_sd(values: Sequence[float]) -> float:
    """Standard deviation with divisor N, matching the published aggregates.

    Values are sorted before reduction so the result is exactly invariant
    under permutation of the input.
    """
    if not values:
        raise EmptyInput("population_sd of an empty list")
    return statistics.pstdev(sorted(values))


def _mean(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    return statistics.fmean(sorted(values))


def _read_csv(stream: TextIO, expected_header: list[str], source: str) -> Iterable[tuple[int, list[str]]]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise LedgerParseError(f"{source}: empty file, expected header {','.join(expected_header)}")
    if [h.strip() for h in header] != expected_header:
        raise LedgerParseError(
            f"{source}: bad header {','.join(header)!r}, expected {','.join(expected_header)}"
        )
    for row_number, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(expected_header):
            raise LedgerParseError(f"{source}: expected {len(expected_header)} fields", row=row_number)
        yield row_number, [cell.strip() for cell in row]


def read_ledger(stream: TextIO, source: str = "ledger") -> list[ErrorRecord]:
    """Parse error records from CSV text, collapsing duplicate
    (run_id, mistake_id) rows to the first occurrence."""
    records: dict[tuple[str, str], ErrorRecord] = {}
    for row_number, (run_id, mistake_id, category, description) in _read_csv(
        stream, LEDGER_HEADER, source
    ):
        if not run_id or not mistake_id or not description:
            raise LedgerParseError(f"{source}: empty field", row=row_number)
        key = (run_id, mistake_id)
        if key in records:
            continue
        records[key] = ErrorRecord(
            run_id=run_id,
            mistake_id=mistake_id,
            category=parse_category(category),
            description=description,
        )
    return list(records.values())


def ingest_ledger(path: str | Path) -> list[ErrorRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_ledger(fh, source=str(path))


def read_scores(stream: TextIO, source: str = "scores") -> list[RequirementScoreRecord]:
    records: dict[tuple[str, int], RequirementScoreRecord] = {}
    for row_number, (run_id, index, value) in _read_csv(stream, SCORES_HEADER, source):
        try:
            record = RequirementScoreRecord(
                run_id=run_id, requirement_index=int(index), value=int(value)
            )
        except ValueError as exc:
            raise LedgerParseError(f"{source}: {exc}", row=row_number) from None
        key = (record.run_id, record.requirement_index)
        if key in records:
            raise LedgerParseError(f"{source}: duplicate score for {key}", row=row_number)
        records[key] = record
    return list(records.values())


def ingest_scores(path: str | Path) -> list[RequirementScoreRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_scores(fh, source=str(path))


def ingest_replaced_functions(path: str | Path) -> dict[str, int]:
    with open(path, encoding="utf-8", newline="") as fh:
        counts: dict[str, int] = {}
        for row_number, (run_id, count) in _read_csv(fh, RF_HEADER, str(path)):
            if run_id in counts:
                raise LedgerParseError(f"{path}: duplicate run_id {run_id}", row=row_number)
            try:
                counts[run_id] = int(count)
            except ValueError:
                raise LedgerParseError(f"{path}: bad count {count!r}", row=row_number) from None
            if counts[run_id] < 0:
                raise LedgerParseError(f"{path}: negative count", row=row_number)
        return counts


def _as_record(outcome: RunOutcome | RunRecord) -> RunRecord:
    if isinstance(outcome, RunRecord):
        return outcome
    return RunRecord.from_outcome(outcome)


def run_metrics(
    outcomes: Sequence[RunOutcome | RunRecord],
    errors: Sequence[ErrorRecord],
    replaced_functions: Mapping[str, int] | None = None,
) -> list[RunMetrics]:
    """Per-run metric rows; failed runs carry no error count."""
    records = [_as_record(o) for o in outcomes]
    by_run: dict[str, set[str]] = {}
    for err in errors:
        by_run.setdefault(err.run_id, set()).add(err.mistake_id)
    rows = []
    for rec in records:
        failed = rec.status is RunStatus.FAILED_GENERATION
        rows.append(
            RunMetrics(
                run_id=rec.run_id,
                different_errors=None if failed else len(by_run.get(rec.run_id, ())),
                loc=rec.loc,
                duration_seconds=rec.duration_seconds,
                status=rec.status,
                replaced_functions=(replaced_functions or {}).get(rec.run_id),
            )
        )
    return rows


def aggregate(
    outcomes: Sequence[RunOutcome | RunRecord],
    errors: Sequence[ErrorRecord],
    scores: Sequence[RequirementScoreRecord],
    label: str,
    *,
    replaced_functions: Mapping[str, int] | None = None,
    failed_error_threshold: int = 7,
) -> AggregateMetrics:
    """Cross-run aggregation for one method label.

    A run counts as failed when its status says so or when it carries more
    than failed_error_threshold distinct mistakes. Failed runs are excluded
    from the error/LOC/duration means but score 0 on every requirement and
    still count toward runs_total.
    """
    records = [_as_record(o) for o in outcomes]
    known = {r.run_id for r in records}
    if len(known) != len(records):
        raise ValueError("duplicate run_id among outcomes")
    for collection, kind in ((errors, "error"), (scores, "score")):
        for item in collection:
            if item.run_id not in known:
                raise DanglingReference(f"{kind} record cites unknown run_id {item.run_id!r}")
    for run_id in replaced_functions or {}:
        if run_id not in known:
            raise DanglingReference(f"replaced-functions row cites unknown run_id {run_id!r}")

    distinct: dict[str, set[str]] = {}
    for err in errors:
        distinct.setdefault(err.run_id, set()).add(err.mistake_id)

    def is_failed(rec: RunRecord) -> bool:
        return (
            rec.status is RunStatus.FAILED_GENERATION
            or len(distinct.get(rec.run_id, ())) > failed_error_threshold
        )

    completed = [r for r in records if not is_failed(r)]
    completed_ids = {r.run_id for r in completed}
    error_counts = [len(distinct.get(r.run_id, ())) for r in completed]

    score_map = {(s.run_id, s.requirement_index): s.value for s in scores}
    indices = sorted({s.requirement_index for s in scores})
    requirement_means: tuple[float, ...] | None = None
    requirement_total: float | None = None
    if scores:
        means = []
        for index in indices:
            values = [
                score_map.get((r.run_id, index), 0) if r.run_id in completed_ids else 0
                for r in records
            ]
            means.append(_mean(values) if records else 0.0)
        requirement_means = tuple(means)
        requirement_total = sum(requirement_means)

    def fully_correct(rec: RunRecord) -> bool:
        if distinct.get(rec.run_id):
            return False
        return all(score_map.get((rec.run_id, i), 0) == 1 for i in indices)

    category_counts = {category: 0 for category in ErrorCategory}
    for err in errors:
        category_counts[err.category] += 1

    mean_rf: float | None = None
    if replaced_functions is not None:
        mean_rf = _mean([replaced_functions.get(r.run_id, 0) for r in completed])

    return AggregateMetrics(
        method_label=label,
        mean_errors=_mean(error_counts),
        sd_errors=population_sd(error_counts) if error_counts else 0.0,
        mean_loc=_mean([r.loc for r in completed if r.loc is not None]),
        mean_duration_seconds=_mean([r.duration_seconds for r in completed]),
        runs_total=len(records),
        runs_failed=len(records) - len(completed),
        fully_correct_runs=sum(1 for r in completed if fully_correct(r)),
        category_counts=category_counts,
        requirement_means=requirement_means,
        requirement_total=requirement_total,
        mean_replaced_functions=mean_rf,
    )


def _find_original(case_dir: Path) -> Path:
    candidates = sorted(p for p in case_dir.glob("original.*") if p.is_file())
    if len(candidates) != 1:
        raise ConfigError(f"{case_dir}: expected exactly one original.<ext> file, found {len(candidates)}")
    return candidates[0]


def run_bench(
    case_dir: str | Path,
    config: PipelineConfig,
    repetitions: int,
    *,
    out_dir: str | Path,
    backend_factory: Callable[[int], Backend] | None = None,
    parallelism: int = 1,
) -> list[RunOutcome]:
    """Repeat a case `repetitions` times, persisting one transcript and (for
    completed runs) one updated file per run.

    backend_factory(i) supplies a fresh backend per 1-based repetition so
    scripted runs never share consumption state. Per-run failures become
    failed outcomes; they never abort the batch.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    case_dir = Path(case_dir)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    original_path = _find_original(case_dir)
    code = artifact_from_file(original_path)
    baseline = config.mode in BASELINE_MODES
    if baseline:
        prompt_path = case_dir / "prompt.txt"
        if not prompt_path.is_file():
            raise ConfigError(f"{case_dir}: baseline modes need a prompt.txt")
        prompt_text = prompt_path.read_text(encoding="utf-8")
        requirements = None
    else:
        requirements = load_requirements(case_dir / "requirements.txt")
        prompt_text = ""

    def one_run(i: int) -> RunOutcome:
        run_id = f"run-{i:03d}"
        backend = backend_factory(i) if backend_factory is not None else config.backend
        run_config = replace(config, backend=backend)
        transcript = Transcript(run_id)
        if baseline:
            outcome = run_baseline(code, prompt_text, run_config, transcript=transcript)
        else:
            outcome = run_pipeline(code, requirements, run_config, transcript=transcript)
        write_transcript(outcome, transcript.entries, out_path / f"{run_id}.jsonl")
        if outcome.final_code is not None:
            updated = out_path / f"{run_id}.updated{original_path.suffix}"
            updated.write_text(outcome.final_code.content + "\n", encoding="utf-8")
        return outcome

    indexes = range(1, repetitions + 1)
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one_run, indexes))
    return [one_run(i) for i in indexes]


def write_bench_index(outcomes: Sequence[RunOutcome | RunRecord], path: str | Path) -> None:
    records = [_as_record(o) for o in outcomes]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INDEX_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.run_id,
                    rec.status.value,
                    f"{rec.duration_seconds:.3f}",
                    "" if rec.loc is None else rec.loc,
                ]
            )


def read_bench_index(path: str | Path) -> list[RunRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        records = []
        for row_number, (run_id, status, duration, loc) in _read_csv(fh, INDEX_HEADER, str(path)):
            try:
                records.append(
                    RunRecord(
                        run_id=run_id,
                        status=RunStatus(status),
                        duration_seconds=float(duration),
                        loc=int(loc) if loc else None,
                    )
                )
            except ValueError as exc:
                raise LedgerParseError(f"{path}: {exc}", row=row_number) from None
        return records


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.3f}"


def emit_report(metrics: Sequence[AggregateMetrics], path: str | Path) -> None:
    """Write report.csv plus the category-count JSON sidecar.

    Deterministic: identical metrics re-emit byte-identical files.
    """
    if not metrics:
        raise ValueError("emit_report needs at least one aggregate")
    path = Path(path)
    req_width = max((len(m.requirement_means or ()) for m in metrics), default=0)
    header = [
        "method_label",
        "mean_errors",
        "sd_errors",
        "mean_loc",
        "mean_duration_seconds",
        "runs_total",
        "runs_failed",
        "fully_correct_runs",
        *[f"requirement_mean_{i}" for i in range(1, req_width + 1)],
        "requirement_total",
        "mean_replaced_functions",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in metrics:
            means = list(m.requirement_means or ())
            means += [None] * (req_width - len(means))
            writer.writerow(
                [
                    m.method_label,
                    _fmt(m.mean_errors),
                    _fmt(m.sd_errors),
                    _fmt(m.mean_loc),
                    _fmt(m.mean_duration_seconds),
                    m.runs_total,
                    m.runs_failed,
                    m.fully_correct_runs,
                    *[_fmt(v) for v in means],
                    _fmt(m.requirement_total),
                    _fmt(m.mean_replaced_functions),
                ]
            )
    sidecar = path.with_name(path.stem + ".categories.json")
    payload = {
        m.method_label: {category.value: m.category_counts.get(category, 0) for category in ErrorCategory}
        for m in metrics
    }
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
