"""JSON-Lines human-judgment datasets.

One record per line::

    {"sample_id": str, "task": str, "source": str, "references": [str],
     "outputs": [{"system_id": str, "text": str, "human_scores": {aspect: number}}]}
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .prompt import Direction
from .tasks import TaskKind


class Strategy(str, Enum):
    SAMPLE = "SampleLevel"
    DATASET = "DatasetLevel"

    @classmethod
    def parse(cls, value: str | Strategy) -> Strategy:
        if isinstance(value, Strategy):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if key in (member.value.lower(), member.value.lower().removesuffix("level")):
                return member
        raise ValueError(f"unknown strategy {value!r}")


class DatasetError(ValueError):
    """Malformed dataset file or record; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SystemOutput:
    system_id: str
    text: str
    human_scores: dict[str, float] = field(default_factory=dict, hash=False)

    def __post_init__(self) -> None:
        if not self.text:
            raise DatasetError("output text is empty", field="text")
        for aspect, value in self.human_scores.items():
            if not math.isfinite(value):
                raise DatasetError(f"human score for {aspect} is not finite", field="human_scores")


@dataclass(frozen=True)
class GenSample:
    sample_id: str
    task: TaskKind
    source: str
    references: tuple[str, ...]
    outputs: tuple[SystemOutput, ...]

    def __post_init__(self) -> None:
        if not self.outputs:
            raise DatasetError("sample has no outputs", field="outputs")
        if self.task in (TaskKind.MT, TaskKind.D2T) and not self.references:
            raise DatasetError(f"{self.task.value} samples need at least one reference", field="references")

    def has_scores(self, aspects: Sequence[str]) -> bool:
        return all(a in o.human_scores for o in self.outputs for a in aspects)


DEFAULT_DIRECTION = {
    TaskKind.SUMM: Direction.SRC_TO_HYPO,
    TaskKind.MT: Direction.REF_BIDIR,
    TaskKind.D2T: Direction.REF_BIDIR,
    TaskKind.DIAG_TURN: Direction.BOOLEAN_QA,
    TaskKind.DIAG_DIALOG: Direction.BOOLEAN_QA,
}


def default_strategy(task: TaskKind) -> Strategy:
    return Strategy.DATASET if task.is_dialogue else Strategy.SAMPLE


@dataclass(frozen=True)
class Dataset:
    name: str
    task: TaskKind
    samples: tuple[GenSample, ...]
    default_direction: Direction | None = None
    default_strategy: Strategy | None = None

    def __post_init__(self) -> None:
        if not self.samples:
            raise DatasetError("dataset is empty")
        seen: set[str] = set()
        for s in self.samples:
            if s.task != self.task:
                raise DatasetError(f"sample {s.sample_id} has task {s.task.value}, dataset is {self.task.value}")
            if s.sample_id in seen:
                raise DatasetError(f"duplicate sample_id {s.sample_id!r}")
            seen.add(s.sample_id)
        if self.default_direction is None:
            object.__setattr__(self, "default_direction", DEFAULT_DIRECTION[self.task])
        if self.default_strategy is None:
            object.__setattr__(self, "default_strategy", default_strategy(self.task))

    def __len__(self) -> int:
        return len(self.samples)

    def sample(self, sample_id: str) -> GenSample:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        raise KeyError(sample_id)


def _require(obj: dict, key: str, kind: type | tuple[type, ...], line: int):
    if key not in obj:
        raise DatasetError(f"missing field {key!r}", line=line, field=key)
    value = obj[key]
    if not isinstance(value, kind):
        raise DatasetError(f"field {key!r} has wrong type {type(value).__name__}", line=line, field=key)
    return value


def _parse_record(obj: object, line: int) -> GenSample:
    if not isinstance(obj, dict):
        raise DatasetError("record is not a JSON object", line=line)
    sample_id = _require(obj, "sample_id", str, line)
    task_name = _require(obj, "task", str, line)
    try:
        task = TaskKind.parse(task_name)
    except ValueError as exc:
        raise DatasetError(str(exc), line=line, field="task") from None
    source = _require(obj, "source", str, line)
    refs = obj.get("references", [])
    if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
        raise DatasetError("field 'references' must be a list of strings", line=line, field="references")
    raw_outputs = _require(obj, "outputs", list, line)
    outputs = []
    for k, out in enumerate(raw_outputs):
        if not isinstance(out, dict):
            raise DatasetError(f"outputs[{k}] is not an object", line=line, field="outputs")
        system_id = _require(out, "system_id", str, line)
        text = _require(out, "text", str, line)
        scores = out.get("human_scores", {})
        if not isinstance(scores, dict) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in scores.values()
        ):
            raise DatasetError(f"outputs[{k}].human_scores must map aspect to number", line=line, field="human_scores")
        try:
            outputs.append(SystemOutput(system_id, text, {str(a): float(v) for a, v in scores.items()}))
        except DatasetError as exc:
            raise DatasetError(f"outputs[{k}]: {exc}", line=line, field=exc.field) from None
    try:
        return GenSample(sample_id, task, source, tuple(refs), tuple(outputs))
    except DatasetError as exc:
        raise DatasetError(str(exc), line=line, field=exc.field) from None


def load(path: str | Path, schema: str | TaskKind | None = None) -> Dataset:
    """Read and validate a JSON-Lines dataset.

    ``schema`` is the expected task kind; when omitted it is taken from the
    first record. Blank lines are ignored.
    """
    path = Path(path)
    expected = TaskKind.parse(schema) if schema is not None else None
    samples: list[GenSample] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line=lineno) from None
            sample = _parse_record(obj, lineno)
            if expected is None:
                expected = sample.task
            if sample.task != expected:
                raise DatasetError(
                    f"task {sample.task.value} does not match dataset task {expected.value}", line=lineno, field="task"
                )
            if sample.sample_id in seen:
                raise DatasetError(
                    f"duplicate sample_id {sample.sample_id!r} (first on line {seen[sample.sample_id]})",
                    line=lineno,
                    field="sample_id",
                )
            seen[sample.sample_id] = lineno
            samples.append(sample)
    if not samples:
        raise DatasetError(f"{path} contains no samples")
    return Dataset(path.stem, expected, tuple(samples))


def sample_to_json(sample: GenSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "task": sample.task.value,
        "source": sample.source,
        "references": list(sample.references),
        "outputs": [
            {"system_id": o.system_id, "text": o.text, "human_scores": dict(o.human_scores)} for o in sample.outputs
        ],
    }


def save(ds: Dataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in ds.samples:
            fh.write(json.dumps(sample_to_json(s), ensure_ascii=False) + "\n")


def subsample(ds: Dataset, n: int, seed: int, prefer_aspects: Sequence[str] = ()) -> Dataset:
    """Pick ``n`` whole samples, deterministically for a given seed.

    Samples whose outputs all carry human scores for every aspect in
    ``prefer_aspects`` are taken first; the remainder is filled at random.
    Selected samples keep their original dataset order.
    """
    if not 1 <= n <= len(ds.samples):
        raise ValueError(f"subsample size {n} out of range 1..{len(ds.samples)}")
    rng = random.Random(seed)
    indices = range(len(ds.samples))
    preferred = [i for i in indices if prefer_aspects and ds.samples[i].has_scores(prefer_aspects)]
    taken = set(preferred)
    rest = [i for i in indices if i not in taken]
    rng.shuffle(preferred)
    rng.shuffle(rest)
    chosen = sorted((preferred + rest)[:n])
    return replace(ds, samples=tuple(ds.samples[i] for i in chosen))
