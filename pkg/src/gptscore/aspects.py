"""Evaluation aspects and definition composition.

The builtin registry ships the 22 aspects with their definitions and task
applicability. ``adjective_form`` is only used when composing definitions
mechanically; the values for aspects that never appear in a shipped
composition (COV, FAC, CON, INF, COH, ACC, MQM, ERR, DIV, DEP, LIK, FLE, INQ,
NAT) were picked by hand.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .tasks import TASK_FAMILIES, TaskKind

_KEY_RE = re.compile(r"^[A-Z]{2,4}$")


class AspectError(ValueError):
    pass


class UnknownAspectError(AspectError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown aspect"


@dataclass(frozen=True)
class AspectSpec:
    key: str
    name: str
    definition: str
    adjective_form: str
    tasks: frozenset[str]
    per_task_definitions: dict[str, str] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self) -> None:
        if not _KEY_RE.match(self.key):
            raise AspectError(f"aspect key {self.key!r} must be 2-4 uppercase letters")
        if not self.definition or self.definition[-1] not in "?.":
            raise AspectError(f"definition of {self.key} must end with '?' or '.'")
        if not self.tasks:
            raise AspectError(f"aspect {self.key} has no tasks")
        unknown = set(self.tasks) - set(TASK_FAMILIES)
        if unknown:
            raise AspectError(f"aspect {self.key} lists unknown tasks {sorted(unknown)}")

    def definition_for(self, task: str | TaskKind | None = None) -> str:
        """Definition text, preferring a task-specific variant when one exists."""
        if task is None:
            return self.definition
        family = str(task.value if isinstance(task, TaskKind) else task)
        if family not in TASK_FAMILIES:
            family = TaskKind.parse(family).family
        return self.per_task_definitions.get(family, self.definition)


@dataclass(frozen=True)
class AspectChain:
    target: str
    extras: tuple[str, ...]
    composed_definition: str

    def __post_init__(self) -> None:
        if self.target in self.extras:
            raise AspectError("target aspect may not appear among extras")
        if len(set(self.extras)) != len(self.extras):
            raise AspectError("duplicate aspects in extras")


class AspectRegistry:
    """Immutable lookup of aspects plus composition overrides."""

    def __init__(
        self,
        aspects: Iterable[AspectSpec],
        overrides: dict[tuple[str, frozenset[str]], tuple[tuple[str, ...], str]] | None = None,
    ) -> None:
        self._aspects: dict[str, AspectSpec] = {}
        for spec in aspects:
            if spec.key in self._aspects:
                raise AspectError(f"duplicate aspect key {spec.key}")
            self._aspects[spec.key] = spec
        # (target, set of extras) -> (extras in stored order, definition)
        self._overrides = dict(overrides or {})

    def __contains__(self, key: object) -> bool:
        return key in self._aspects

    def __iter__(self):
        return iter(self._aspects.values())

    def __len__(self) -> int:
        return len(self._aspects)

    def keys(self) -> list[str]:
        return list(self._aspects)

    def lookup(self, key: str) -> AspectSpec:
        try:
            return self._aspects[key]
        except KeyError:
            raise UnknownAspectError(f"unknown aspect {key!r}") from None

    def override(self, target: str, extras: Sequence[str]) -> str | None:
        hit = self._overrides.get((target, frozenset(extras)))
        return hit[1] if hit else None

    def overrides(self) -> list[tuple[str, tuple[str, ...], str]]:
        return [(t, stored, text) for (t, _), (stored, text) in self._overrides.items()]

    def to_json(self) -> list[dict]:
        rows = []
        for spec in self._aspects.values():
            row: dict = {
                "key": spec.key,
                "name": spec.name,
                "definition": spec.definition,
                "adjective_form": spec.adjective_form,
                "tasks": sorted(spec.tasks),
            }
            if spec.per_task_definitions:
                row["per_task_definitions"] = dict(spec.per_task_definitions)
            own = [
                {"extras": list(stored), "definition": text}
                for (target, _), (stored, text) in self._overrides.items()
                if target == spec.key
            ]
            if own:
                row["overrides"] = own
            rows.append(row)
        return rows

    @classmethod
    def from_json(cls, rows: list[dict]) -> AspectRegistry:
        aspects = []
        overrides: dict[tuple[str, frozenset[str]], tuple[tuple[str, ...], str]] = {}
        for row in rows:
            aspects.append(
                AspectSpec(
                    key=row["key"],
                    name=row["name"],
                    definition=row["definition"],
                    adjective_form=row["adjective_form"],
                    tasks=frozenset(row["tasks"]),
                    per_task_definitions=dict(row.get("per_task_definitions", {})),
                )
            )
            for ov in row.get("overrides", []):
                extras = tuple(ov["extras"])
                overrides[(row["key"], frozenset(extras))] = (extras, ov["definition"])
        registry = cls(aspects, overrides)
        for target, extras, _ in registry.overrides():
            for key in (target, *extras):
                registry.lookup(key)
        return registry

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> AspectRegistry:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def builtin_registry() -> AspectRegistry:
    text = resources.files("gptscore").joinpath("data/aspects.json").read_text(encoding="utf-8")
    return AspectRegistry.from_json(json.loads(text))


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def _join(words: Sequence[str]) -> str:
    if len(words) == 1:
        return words[0]
    if len(words) == 2:
        return f"{words[0]} and {words[1]}"
    return ", ".join(words[:-1]) + f", and {words[-1]}"


def compose_definition(registry: AspectRegistry, target: str, extras: Sequence[str]) -> str:
    """Merge the definitions of ``extras`` into the definition of ``target``.

    Shipped overrides win; otherwise the text is built as
    ``Is this a/an <target-adj> response that is <adj1>, ..., and <adjk>?``.
    With no extras (and no override) the target's own definition is returned.
    """
    extras = list(extras)
    specs = [registry.lookup(k) for k in (target, *extras)]
    AspectChain(target, tuple(extras), "")  # validates duplicates / self-reference
    common = frozenset.intersection(*(s.tasks for s in specs))
    if not common:
        raise AspectError(f"aspects {[s.key for s in specs]} do not share a task kind")

    hit = registry.override(target, extras)
    if hit is not None:
        return hit
    head = specs[0]
    if not extras:
        return head.definition
    adjectives = [s.adjective_form for s in specs[1:]]
    return f"Is this {_article(head.adjective_form)} {head.adjective_form} response that is {_join(adjectives)}?"


def compose_chain(registry: AspectRegistry, target: str, extras: Sequence[str]) -> AspectChain:
    return AspectChain(target, tuple(extras), compose_definition(registry, target, extras))
