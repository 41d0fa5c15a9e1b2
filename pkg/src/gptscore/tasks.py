from __future__ import annotations

from enum import Enum


class TaskKind(str, Enum):
    SUMM = "Summ"
    MT = "MT"
    D2T = "D2T"
    DIAG_TURN = "DiagTurn"
    DIAG_DIALOG = "DiagDialog"

    @property
    def family(self) -> str:
        """Task family used by the aspect table (turn/dialogue both map to ``Diag``)."""
        if self in (TaskKind.DIAG_TURN, TaskKind.DIAG_DIALOG):
            return "Diag"
        return self.value

    @property
    def is_dialogue(self) -> bool:
        return self.family == "Diag"

    @classmethod
    def parse(cls, value: str | TaskKind) -> TaskKind:
        if isinstance(value, TaskKind):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown task kind {value!r}; expected one of {[m.value for m in cls]}")


TASK_FAMILIES = ("Summ", "MT", "D2T", "Diag")
