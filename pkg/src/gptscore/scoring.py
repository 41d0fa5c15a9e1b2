"""GPTScore values and batch scoring over datasets."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .backends import Backend, TokenScore
from .datasets import Dataset, GenSample, SystemOutput
from .prompt import (
    Demonstration,
    Direction,
    PromptTemplate,
    RenderedPrompt,
    Setting,
    TemplateRegistry,
    demonstration_for,
    render,
    select_demos,
)


class ScoringError(RuntimeError):
    def __init__(self, message: str, completed: int = 0, total: int = 0):
        super().__init__(message)
        self.completed = completed
        self.total = total


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    system_id: str
    aspect: str
    direction: Direction
    setting: Setting
    k: int
    value: float
    token_count: int
    model_id: str = ""

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("score value must be finite")
        if self.token_count < 1:
            raise ValueError("token_count must be >= 1")
        if self.k != 0 and self.setting is not Setting.IDM:
            raise ValueError("k must be 0 unless setting is IDM")

    def to_json(self) -> dict:
        row = asdict(self)
        row["direction"] = self.direction.value
        row["setting"] = self.setting.value
        return row

    @classmethod
    def from_json(cls, row: dict) -> ScoreRecord:
        return cls(
            sample_id=str(row["sample_id"]),
            system_id=str(row["system_id"]),
            aspect=str(row["aspect"]),
            direction=Direction.parse(row["direction"]),
            setting=Setting.parse(row["setting"]),
            k=int(row["k"]),
            value=float(row["value"]),
            token_count=int(row["token_count"]),
            model_id=str(row.get("model_id", "")),
        )


def gptscore(tokens: Sequence[TokenScore] | Sequence[float]) -> float:
    """Length-normalised log-likelihood: the mean of the target-token logprobs."""
    if not tokens:
        raise ValueError("gptscore of an empty token list")
    values = [t.logprob if isinstance(t, TokenScore) else float(t) for t in tokens]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite logprob")
    return math.fsum(values) / len(values)


def _check_template(tpl: PromptTemplate, sample: GenSample) -> None:
    if tpl.direction in (Direction.REF_TO_HYPO, Direction.HYPO_TO_REF, Direction.REF_BIDIR) and not sample.references:
        raise ScoringError(f"sample {sample.sample_id}: {tpl.direction.value} needs a reference")


def prompts_for(
    templates: TemplateRegistry,
    tpl: PromptTemplate,
    sample: GenSample,
    output: SystemOutput,
    demos: Sequence[Demonstration],
) -> list[RenderedPrompt]:
    """One prompt per scored direction (two for RefBidir)."""
    _check_template(tpl, sample)
    return [render(part, sample, output, demos) for part in templates.components(tpl)]


def _combine(parts: list[list[TokenScore]]) -> tuple[float, int]:
    values = [gptscore(p) for p in parts]
    return math.fsum(values) / len(values), sum(len(p) for p in parts)


def _resolve_template(templates: TemplateRegistry, task, aspect: str, direction: Direction, setting: Setting):
    tpl = templates.get(task, aspect, direction)
    return tpl.vanilla() if setting is Setting.VAL else tpl


def score_output(
    backend: Backend,
    templates: TemplateRegistry,
    sample: GenSample,
    output: SystemOutput,
    aspect: str,
    direction: Direction | str,
    setting: Setting | str,
    demos: Sequence[Demonstration] = (),
) -> ScoreRecord:
    """Score one system output; RefBidir averages the two directional scores."""
    direction = Direction.parse(direction)
    setting = Setting.parse(setting)
    if setting is not Setting.IDM and demos:
        raise ValueError(f"demonstrations are only used in the IDM setting, got {setting.value}")
    tpl = _resolve_template(templates, sample.task, aspect, direction, setting)
    prompts = prompts_for(templates, tpl, sample, output, demos)
    value, count = _combine([backend.token_logprobs(p) for p in prompts])
    if setting is Setting.IDM and not demos:
        setting = Setting.IST
    return ScoreRecord(
        sample.sample_id, output.system_id, aspect, direction, setting, len(demos), value, count, backend.cfg.model_id
    )


def demo_pool(ds: Dataset, index: int) -> list[Demonstration]:
    """Exemplars for sample ``index``: every other sample paired with its first output."""
    return [demonstration_for(ds.task, s, s.outputs[0]) for i, s in enumerate(ds.samples) if i != index]


def score_dataset(
    backend: Backend,
    templates: TemplateRegistry,
    ds: Dataset,
    aspect: str,
    direction: Direction | str | None = None,
    setting: Setting | str = Setting.IST,
    k: int = 0,
    seed: int = 0,
    template_override: PromptTemplate | None = None,
) -> list[ScoreRecord]:
    """Score every (sample, output) pair; records come back in dataset order.

    Demonstrations for sample ``i`` are drawn with seed ``seed ^ i`` from the
    other samples. ``template_override`` replaces the registry template (used
    for composed aspect definitions).
    """
    direction = Direction.parse(direction) if direction is not None else ds.default_direction
    setting = Setting.parse(setting)
    if k and setting is not Setting.IDM:
        raise ValueError("k > 0 requires the IDM setting")
    if setting is Setting.IDM and k > len(ds.samples) - 1:
        raise ValueError(f"k={k} needs at least {k + 1} samples, dataset has {len(ds.samples)}")

    if template_override is not None:
        tpl = template_override.vanilla() if setting is Setting.VAL else template_override
    else:
        tpl = _resolve_template(templates, ds.task, aspect, direction, setting)
    recorded_setting = Setting.IST if setting is Setting.IDM and k == 0 else setting

    jobs: list[tuple[GenSample, SystemOutput, int, list[RenderedPrompt]]] = []
    for i, sample in enumerate(ds.samples):
        demos = select_demos(demo_pool(ds, i), k, seed ^ i) if k else []
        for output in sample.outputs:
            jobs.append((sample, output, len(demos), prompts_for(templates, tpl, sample, output, demos)))

    flat = [p for job in jobs for p in job[3]]
    results: list[list[TokenScore] | None] = [None] * len(flat)

    def run(idx: int) -> None:
        results[idx] = backend.token_logprobs(flat[idx])

    workers = max(1, backend.max_parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, i) for i in range(len(flat))]
        errors = []
        for fut in futures:
            exc = fut.exception()
            if exc is not None:
                errors.append(exc)
    if errors:
        done = sum(r is not None for r in results)
        raise ScoringError(
            f"{len(errors)} of {len(flat)} requests failed ({done} completed); first error: {errors[0]}",
            completed=done,
            total=len(flat),
        ) from errors[0]

    records = []
    pos = 0
    for sample, output, n_demos, prompts in jobs:
        parts = [results[pos + j] for j in range(len(prompts))]
        pos += len(prompts)
        value, count = _combine(parts)  # type: ignore[arg-type]
        records.append(
            ScoreRecord(
                sample.sample_id,
                output.system_id,
                aspect,
                direction,
                recorded_setting,
                n_demos,
                value,
                count,
                backend.cfg.model_id,
            )
        )
    return records


def write_records(records: Iterable[ScoreRecord], path: str | Path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> list[ScoreRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(ScoreRecord.from_json(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad score record ({exc})") from None
    return records
