"""Sensitive-word screening for item titles and generated subjects.

All block patterns are compiled into one Aho-Corasick automaton so a scan
is a single pass over the text regardless of lexicon size. Two modes:

* SUBSTRING: every occurrence of a block pattern is a hit.
* TOKEN_ALIGNED: a hit fully contained inside an occurrence of an allow
  pattern is reported but marked suppressed (バーカ inside シルバーカー).
  This stands in for a morphological segmenter; callers may also pass
  extra allow intervals from a real tokenizer.

Offsets are Unicode codepoint indices, never bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import RecommendedItem
from .utils import JsonlError, iter_jsonl


class MatchMode(str, Enum):
    SUBSTRING = "substring"
    TOKEN_ALIGNED = "token_aligned"


class EntryKind(str, Enum):
    BLOCK = "block"
    ALLOW = "allow"


class EmptyLexicon(ValueError):
    pass


class DuplicatePattern(ValueError):
    pass


@dataclass(frozen=True)
class LexiconEntry:
    pattern: str
    kind: EntryKind
    reason: str = ""
    added_on: date = date(1970, 1, 1)

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("empty pattern")


@dataclass(frozen=True, order=True)
class MatchSpan:
    start: int
    end: int
    pattern: str
    suppressed_by_allow: bool = False


class _Automaton:
    """Plain Aho-Corasick over codepoints: goto/fail links, merged outputs."""

    def __init__(self, patterns: Sequence[str]):
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[list[str]] = [[]]
        for pattern in patterns:
            self._insert(pattern)
        self._build_links()

    def _insert(self, pattern: str) -> None:
        node = 0
        for ch in pattern:
            nxt = self._goto[node].get(ch)
            if nxt is None:
                nxt = len(self._goto)
                self._goto[node][ch] = nxt
                self._goto.append({})
                self._fail.append(0)
                self._out.append([])
            node = nxt
        self._out[node].append(pattern)

    def _build_links(self) -> None:
        queue = list(self._goto[0].values())
        i = 0
        while i < len(queue):  # BFS; queue grows while iterating
            node = queue[i]
            i += 1
            for ch, child in self._goto[node].items():
                queue.append(child)
                fail = self._fail[node]
                while fail and ch not in self._goto[fail]:
                    fail = self._fail[fail]
                self._fail[child] = self._goto[fail].get(ch, 0)
                self._out[child] = self._out[child] + self._out[self._fail[child]]

    def find_all(self, text: str) -> list[tuple[int, int, str]]:
        """All (start, end, pattern) occurrences, overlapping included."""
        hits = []
        node = 0
        for i, ch in enumerate(text):
            while node and ch not in self._goto[node]:
                node = self._fail[node]
            node = self._goto[node].get(ch, 0)
            for pattern in self._out[node]:
                hits.append((i - len(pattern) + 1, i + 1, pattern))
        return hits


@dataclass(frozen=True)
class CompiledLexicon:
    block_patterns: tuple[str, ...]
    allow_patterns: tuple[str, ...]
    version: date
    _matcher: _Automaton
    _allow_matcher: _Automaton | None


def compile_lexicon(entries: Sequence[LexiconEntry]) -> CompiledLexicon:
    """Build the one-pass matcher; duplicate (pattern, kind) pairs are an error."""
    if not entries:
        raise EmptyLexicon("no lexicon entries")
    seen: set[tuple[str, EntryKind]] = set()
    for entry in entries:
        key = (entry.pattern, entry.kind)
        if key in seen:
            raise DuplicatePattern(f"{entry.kind.value} pattern {entry.pattern!r} repeated")
        seen.add(key)
    block = tuple(e.pattern for e in entries if e.kind is EntryKind.BLOCK)
    allow = tuple(e.pattern for e in entries if e.kind is EntryKind.ALLOW)
    return CompiledLexicon(
        block_patterns=block,
        allow_patterns=allow,
        version=max(e.added_on for e in entries),
        _matcher=_Automaton(block),
        _allow_matcher=_Automaton(allow) if allow else None,
    )


def scan(
    text: str,
    lex: CompiledLexicon,
    mode: MatchMode = MatchMode.SUBSTRING,
    extra_allow_intervals: Iterable[tuple[int, int]] | None = None,
) -> list[MatchSpan]:
    """Locate block-pattern occurrences, sorted by (start, end).

    In TOKEN_ALIGNED mode a span is suppressed when some allow occurrence
    (or caller-supplied interval, e.g. from a segmenter) fully contains it.
    """
    hits = lex._matcher.find_all(text)
    if mode is MatchMode.SUBSTRING:
        spans = [MatchSpan(s, e, p) for s, e, p in hits]
    else:
        allow_intervals: list[tuple[int, int]] = []
        if lex._allow_matcher is not None:
            allow_intervals = [(s, e) for s, e, _ in lex._allow_matcher.find_all(text)]
        if extra_allow_intervals:
            allow_intervals.extend(extra_allow_intervals)
        spans = [
            MatchSpan(
                s, e, p,
                suppressed_by_allow=any(a <= s and e <= b for a, b in allow_intervals),
            )
            for s, e, p in hits
        ]
    return sorted(spans)


def filter_items(
    items: Sequence[RecommendedItem],
    lex: CompiledLexicon,
    mode: MatchMode = MatchMode.SUBSTRING,
) -> tuple[list[RecommendedItem], list[tuple[RecommendedItem, list[MatchSpan]]]]:
    """Partition items into (kept, dropped) on unsuppressed title hits."""
    kept: list[RecommendedItem] = []
    dropped: list[tuple[RecommendedItem, list[MatchSpan]]] = []
    for item in items:
        spans = scan(item.title, lex, mode)
        if any(not s.suppressed_by_allow for s in spans):
            dropped.append((item, spans))
        else:
            kept.append(item)
    return kept, dropped


def entry_from_dict(obj: dict) -> LexiconEntry:
    return LexiconEntry(
        pattern=str(obj["pattern"]),
        kind=EntryKind(obj.get("kind", "block")),
        reason=str(obj.get("reason", "")),
        added_on=date.fromisoformat(obj["added_on"]) if obj.get("added_on") else date(1970, 1, 1),
    )


def load_entries(path: str | Path, as_of: date | None = None) -> list[LexiconEntry]:
    """Read a JSONL lexicon file.

    The list is updated weekly; passing ``as_of`` keeps only entries whose
    added_on date is on or before the campaign date, i.e. the newest
    lexicon version available at that time.
    """
    entries = []
    try:
        for lineno, obj in iter_jsonl(path):
            try:
                entries.append(entry_from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    except JsonlError as exc:
        raise ValueError(str(exc)) from exc
    if as_of is not None:
        entries = [e for e in entries if e.added_on <= as_of]
    return entries
