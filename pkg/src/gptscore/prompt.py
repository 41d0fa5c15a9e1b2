"""Prompt templates and rendering into (prefix, target) pairs.

Layout of a rendered prompt::

    instruction <HEAD> demo_1 <SEP> ... demo_K <SEP> frame-up-to-target | target

``SEP`` is a blank line. ``HEAD`` is ``SEP`` as well, except for boolean-QA
dialogue prompts where the question and the conversation are separated by a
single newline. The instruction block is dropped for vanilla templates. The
prefix always ends right before the first byte of the target.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .tasks import TaskKind

if TYPE_CHECKING:
    from .datasets import GenSample, SystemOutput

SEP = "\n\n"
DIALOGUE_HEADER = "Answer the question based on the conversation between a human and AI.\nQuestion: "
DIALOGUE_OPTIONS = " (a) Yes. (b) No."
YES_ANSWER = " Yes."
PLACEHOLDERS = ("src", "ref", "hypo", "History", "answer")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


class PromptError(ValueError):
    pass


class Direction(str, Enum):
    SRC_TO_HYPO = "SrcToHypo"
    REF_TO_HYPO = "RefToHypo"
    HYPO_TO_REF = "HypoToRef"
    REF_BIDIR = "RefBidir"
    BOOLEAN_QA = "BooleanQA"

    @classmethod
    def parse(cls, value: str | Direction) -> Direction:
        if isinstance(value, Direction):
            return value
        aliases = {
            "src->hypo": cls.SRC_TO_HYPO,
            "ref->hypo": cls.REF_TO_HYPO,
            "hypo->ref": cls.HYPO_TO_REF,
            "ref<->hypo": cls.REF_BIDIR,
            "bool": cls.BOOLEAN_QA,
        }
        text = str(value).strip()
        if text.lower() in aliases:
            return aliases[text.lower()]
        for member in cls:
            if member.value.lower() == text.lower():
                return member
        raise ValueError(f"unknown direction {value!r}")


class Setting(str, Enum):
    VAL = "VAL"
    IST = "IST"
    IDM = "IDM"

    @classmethod
    def parse(cls, value: str | Setting) -> Setting:
        if isinstance(value, Setting):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown setting {value!r}; expected val, ist or idm") from None


@dataclass(frozen=True)
class PromptTemplate:
    task: TaskKind
    aspect: str
    direction: Direction
    instruction: str
    frame: str
    target_marker: str

    def __post_init__(self) -> None:
        marker = "{" + self.target_marker + "}"
        if self.target_marker not in PLACEHOLDERS:
            raise PromptError(f"unknown target marker {self.target_marker!r}")
        if self.frame.count(marker) != 1:
            raise PromptError(f"frame must contain {marker} exactly once")
        if not self.frame.endswith(marker):
            raise PromptError("frame must end with the target marker")
        if self.direction is Direction.BOOLEAN_QA and not self.task.is_dialogue:
            raise PromptError("BooleanQA templates are only valid for dialogue tasks")

    @property
    def template_id(self) -> str:
        return f"{self.task.value}/{self.aspect}/{self.direction.value}"

    @property
    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.frame)

    @property
    def head_separator(self) -> str:
        return "\n" if self.direction is Direction.BOOLEAN_QA else SEP

    def vanilla(self) -> PromptTemplate:
        """Same frame with the instruction removed (VAL setting)."""
        return replace(self, instruction="")

    def with_definition(self, text: str) -> PromptTemplate:
        """Swap the aspect wording: the question for boolean-QA, else the whole instruction."""
        if self.direction is Direction.BOOLEAN_QA:
            return replace(self, instruction=DIALOGUE_HEADER + text + DIALOGUE_OPTIONS)
        return replace(self, instruction=text)

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "aspect": self.aspect,
            "direction": self.direction.value,
            "instruction": self.instruction,
            "frame": self.frame,
            "target_marker": self.target_marker,
        }

    @classmethod
    def from_json(cls, row: Mapping) -> PromptTemplate:
        return cls(
            task=TaskKind.parse(row["task"]),
            aspect=row["aspect"],
            direction=Direction.parse(row["direction"]),
            instruction=row["instruction"],
            frame=row["frame"],
            target_marker=row["target_marker"],
        )


@dataclass(frozen=True)
class Demonstration:
    bindings: Mapping[str, str] = field(hash=False)

    def covers(self, tpl: PromptTemplate) -> bool:
        return all(p in self.bindings for p in tpl.placeholders)


@dataclass(frozen=True)
class RenderedPrompt:
    prefix: str
    target: str
    template_id: str = ""
    k: int = 0
    setting: Setting = Setting.IST

    def __post_init__(self) -> None:
        if not self.target:
            raise PromptError("rendered target is empty")

    @property
    def full(self) -> str:
        return self.prefix + self.target


def _substitute(text: str, bindings: Mapping[str, str]) -> str:
    def sub(m: re.Match) -> str:
        try:
            return bindings[m.group(1)]
        except KeyError:
            raise PromptError(f"no value for placeholder {{{m.group(1)}}}") from None

    return _PLACEHOLDER_RE.sub(sub, text)


def _history(task: TaskKind, history: str, response: str) -> str:
    if task is TaskKind.DIAG_TURN:
        return f"{history}\n{response}" if history else response
    # dialogue-level: the evaluated text is the whole conversation
    return f"{history}\n{response}" if history and response else (history or response)


def sample_bindings(task: TaskKind, sample: GenSample, output: SystemOutput) -> dict[str, str]:
    """Placeholder values for one (sample, output); the first reference is used."""
    values = {"src": sample.source, "hypo": output.text}
    if sample.references:
        values["ref"] = sample.references[0]
    if task.is_dialogue:
        values["History"] = _history(task, sample.source, output.text)
        values["answer"] = YES_ANSWER
    return values


def demonstration_for(task: TaskKind, sample: GenSample, output: SystemOutput) -> Demonstration:
    return Demonstration(sample_bindings(task, sample, output))


def _render(tpl: PromptTemplate, values: Mapping[str, str], demos: Sequence[Demonstration]) -> RenderedPrompt:
    marker = "{" + tpl.target_marker + "}"
    frame_head = tpl.frame[: -len(marker)]
    blocks = []
    for i, demo in enumerate(demos):
        missing = [p for p in tpl.placeholders if p not in demo.bindings]
        if missing:
            raise PromptError(f"demonstration {i} does not cover placeholders {missing}")
        blocks.append(_substitute(tpl.frame, demo.bindings))
    if tpl.target_marker not in values:
        raise PromptError(f"no value for target placeholder {marker}")
    blocks.append(_substitute(frame_head, values))
    body = SEP.join(blocks)
    prefix = tpl.instruction + tpl.head_separator + body if tpl.instruction else body
    if not tpl.instruction:
        setting = Setting.VAL
    else:
        setting = Setting.IDM if demos else Setting.IST
    return RenderedPrompt(prefix, values[tpl.target_marker], tpl.template_id, len(demos), setting)


def render(
    tpl: PromptTemplate,
    sample: GenSample,
    output: SystemOutput,
    demos: Sequence[Demonstration] = (),
) -> RenderedPrompt:
    return _render(tpl, sample_bindings(tpl.task, sample, output), demos)


def render_dialogue(
    tpl: PromptTemplate,
    history: str,
    response: str,
    demos: Sequence[Demonstration] = (),
) -> RenderedPrompt:
    """Boolean-QA rendering; turn-level appends ``response`` as the final turn."""
    if tpl.direction is not Direction.BOOLEAN_QA or not tpl.task.is_dialogue:
        raise PromptError(f"{tpl.template_id} is not a dialogue boolean-QA template")
    values = {"History": _history(tpl.task, history, response), "answer": YES_ANSWER}
    return _render(tpl, values, demos)


def select_demos(pool: Sequence[Demonstration], k: int, seed: int) -> list[Demonstration]:
    """Draw ``k`` demonstrations uniformly without replacement, in draw order."""
    if k < 0 or k > len(pool):
        raise ValueError(f"cannot select {k} demonstrations from a pool of {len(pool)}")
    return random.Random(seed).sample(list(pool), k)


_PARAPHRASE = {
    Direction.REF_TO_HYPO: ("{ref} In other words, {hypo}", "hypo"),
    Direction.HYPO_TO_REF: ("{hypo} In other words, {ref}", "ref"),
}


class TemplateRegistry:
    """Templates keyed by (task, aspect, direction).

    RefToHypo and HypoToRef are derived from a RefBidir row when not stored
    explicitly.
    """

    def __init__(self, templates: Iterable[PromptTemplate]):
        self._rows: dict[tuple[TaskKind, str, Direction], PromptTemplate] = {}
        for tpl in templates:
            key = (tpl.task, tpl.aspect, tpl.direction)
            if key in self._rows:
                raise PromptError(f"duplicate template {tpl.template_id}")
            self._rows[key] = tpl

    def __iter__(self):
        return iter(self._rows.values())

    def __len__(self) -> int:
        return len(self._rows)

    def get(self, task: TaskKind | str, aspect: str, direction: Direction | str) -> PromptTemplate:
        task = TaskKind.parse(task)
        direction = Direction.parse(direction)
        hit = self._rows.get((task, aspect, direction))
        if hit is not None:
            return hit
        if direction in _PARAPHRASE:
            bidir = self._rows.get((task, aspect, Direction.REF_BIDIR))
            if bidir is not None:
                frame, marker = _PARAPHRASE[direction]
                return replace(bidir, direction=direction, frame=frame, target_marker=marker)
        raise PromptError(f"no template for {task.value}/{aspect}/{direction.value}")

    def components(self, tpl: PromptTemplate) -> list[PromptTemplate]:
        """Concrete single-direction templates that make up ``tpl``."""
        if tpl.direction is not Direction.REF_BIDIR:
            return [tpl]
        return [
            replace(tpl, direction=d, frame=_PARAPHRASE[d][0], target_marker=_PARAPHRASE[d][1])
            for d in (Direction.REF_TO_HYPO, Direction.HYPO_TO_REF)
        ]

    def replaced(self, tpl: PromptTemplate) -> TemplateRegistry:
        rows = dict(self._rows)
        rows[(tpl.task, tpl.aspect, tpl.direction)] = tpl
        return TemplateRegistry(rows.values())

    def to_json(self) -> list[dict]:
        return [t.to_json() for t in self._rows.values()]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> TemplateRegistry:
        return cls(PromptTemplate.from_json(r) for r in json.loads(Path(path).read_text(encoding="utf-8")))


def builtin_templates() -> TemplateRegistry:
    text = resources.files("gptscore").joinpath("data/templates.json").read_text(encoding="utf-8")
    return TemplateRegistry(PromptTemplate.from_json(r) for r in json.loads(text))
