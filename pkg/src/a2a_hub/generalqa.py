"""General-knowledge route backed by a deterministic canned-answer table.

Stands in for a managed LLM service so the benchmark stays reproducible
offline; a real model adapter would implement the same answer(query) call.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

from .router import normalize_query


class AnswerTableError(ValueError):
    """Canned-answer table failed startup validation."""


@dataclass(frozen=True)
class CannedEntry:
    pattern: str
    answer: str


class GeneralAnswerBackend(Protocol):
    def answer(self, query: str) -> str: ...


class CannedAnswerTable:
    """Ordered pattern -> answer table; first match wins, default otherwise."""

    def __init__(self, entries: list[CannedEntry], default_answer: str):
        self.entries = list(entries)
        self.default_answer = default_answer
        self._compiled = []
        for entry in entries:
            try:
                self._compiled.append((re.compile(entry.pattern, re.IGNORECASE),
                                       entry.answer))
            except re.error as exc:
                raise AnswerTableError(
                    f"bad canned-answer pattern {entry.pattern!r}: {exc}") from exc

    def answer(self, query: str) -> str:
        normalized = normalize_query(query)
        for pattern, text in self._compiled:
            if pattern.search(normalized):
                return text
        return self.default_answer


def answer_general(query: str, table: CannedAnswerTable) -> str:
    return table.answer(query)
