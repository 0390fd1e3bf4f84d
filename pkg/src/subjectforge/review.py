"""Human review workflow: sampling, verdict recording, findings, promotion.

State lives in an append-only JSONL event log that is replayed at startup;
good enough for desk scale and keeps every decision auditable. A decided
item never silently returns to pending -- only the explicit, logged reopen
operation does that.
"""

from __future__ import annotations

import json
import random
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lexicon import EntryKind, LexiconEntry
from .titlegen import FewShotExample
from .utils import format_rfc3339, iter_jsonl, parse_rfc3339, utcnow


class ReviewStatus(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"


class ReviewTag(str, Enum):
    REPETITIVE_PHRASING = "RepetitivePhrasing"
    AWKWARD_COMBINATION = "AwkwardCombination"
    EXCESSIVE_LENGTH = "ExcessiveLength"
    UNNATURAL_LANGUAGE = "UnnaturalLanguage"
    INCOMPLETE_WORDS = "IncompleteWords"
    SENSITIVE_ITEM = "SensitiveItem"


class EmptyPopulation(ValueError):
    pass


class NotFound(KeyError):
    pass


class AlreadyDecided(RuntimeError):
    def __init__(self, item_id: str):
        super().__init__(f"item {item_id} already decided with a different payload")
        self.item_id = item_id


@dataclass(frozen=True)
class ReviewCandidate:
    id: str
    subject: str
    context_lines: tuple[str, ...] = ()
    judge_scores: Mapping[str, int] | None = None


@dataclass(frozen=True)
class ReviewItem:
    id: str
    subject: str
    context_lines: tuple[str, ...] = ()
    status: ReviewStatus = ReviewStatus.PENDING
    tags: tuple[ReviewTag, ...] = ()
    reviewer: str = ""
    decided_at: datetime | None = None
    iteration: int = 1
    judge_scores: Mapping[str, int] | None = None
    ng_term: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "subject": self.subject,
            "context_lines": list(self.context_lines),
            "status": self.status.value,
            "tags": [t.value for t in self.tags],
            "reviewer": self.reviewer,
            "decided_at": format_rfc3339(self.decided_at) if self.decided_at else None,
            "iteration": self.iteration,
            "judge_scores": dict(self.judge_scores) if self.judge_scores else None,
            "ng_term": self.ng_term,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ReviewItem":
        return ReviewItem(
            id=obj["id"],
            subject=obj["subject"],
            context_lines=tuple(obj.get("context_lines", ())),
            status=ReviewStatus(obj.get("status", "pending")),
            tags=tuple(ReviewTag(t) for t in obj.get("tags", ())),
            reviewer=obj.get("reviewer", ""),
            decided_at=parse_rfc3339(obj["decided_at"]) if obj.get("decided_at") else None,
            iteration=int(obj.get("iteration", 1)),
            judge_scores=obj.get("judge_scores"),
            ng_term=obj.get("ng_term"),
        )


@dataclass
class SampleResult:
    items: list[ReviewItem]
    warning: str | None = None


def sample_for_review(
    candidates: Sequence[ReviewCandidate],
    n: int,
    seed: int,
    iteration: int = 1,
) -> SampleResult:
    """Seeded uniform sample without replacement, as pending review items."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not candidates:
        raise EmptyPopulation("nothing to sample")
    warning = None
    if n >= len(candidates):
        chosen = list(candidates)
        if n > len(candidates):
            warning = f"requested {n} but population has only {len(candidates)}"
    else:
        chosen = random.Random(seed).sample(list(candidates), n)
    items = [
        ReviewItem(
            id=c.id,
            subject=c.subject,
            context_lines=tuple(c.context_lines),
            iteration=iteration,
            judge_scores=c.judge_scores,
        )
        for c in chosen
    ]
    return SampleResult(items=items, warning=warning)


@dataclass
class FindingsReport:
    total: int
    pending: int
    approved: int
    rejected: int
    approval_rate: float | None
    tag_counts: dict[str, int]
    by_iteration: dict[int, dict]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "pending": self.pending,
            "approved": self.approved,
            "rejected": self.rejected,
            "approval_rate": self.approval_rate,
            "tag_counts": dict(self.tag_counts),
            "by_iteration": {str(k): v for k, v in self.by_iteration.items()},
        }


def aggregate_findings(items: Iterable[ReviewItem]) -> FindingsReport:
    """Tally verdicts and problem tags; rate is None (not 0) with nothing decided."""
    items = list(items)
    approved = sum(1 for i in items if i.status is ReviewStatus.APPROVED)
    rejected = sum(1 for i in items if i.status is ReviewStatus.REJECTED)
    decided = approved + rejected
    tag_counts: dict[str, int] = {t.value: 0 for t in ReviewTag}
    for item in items:
        for tag in item.tags:
            tag_counts[tag.value] += 1
    by_iteration: dict[int, dict] = {}
    for item in items:
        row = by_iteration.setdefault(
            item.iteration, {"total": 0, "approved": 0, "rejected": 0, "approval_rate": None}
        )
        row["total"] += 1
        if item.status is ReviewStatus.APPROVED:
            row["approved"] += 1
        elif item.status is ReviewStatus.REJECTED:
            row["rejected"] += 1
    for row in by_iteration.values():
        d = row["approved"] + row["rejected"]
        row["approval_rate"] = row["approved"] / d if d else None
    return FindingsReport(
        total=len(items),
        pending=len(items) - decided,
        approved=approved,
        rejected=rejected,
        approval_rate=approved / decided if decided else None,
        tag_counts=tag_counts,
        by_iteration=by_iteration,
    )


@dataclass
class PromotionDiff:
    few_shot: list[FewShotExample]
    lexicon_candidates: list[LexiconEntry]

    def to_dict(self) -> dict:
        return {
            "few_shot": [
                {
                    "subject": ex.subject,
                    "input_lines": list(ex.input_lines),
                    "positive": ex.positive,
                }
                for ex in self.few_shot
            ],
            "lexicon_candidates": [
                {"pattern": e.pattern, "kind": e.kind.value, "reason": e.reason}
                for e in self.lexicon_candidates
            ],
        }


def promote_examples(items: Iterable[ReviewItem]) -> PromotionDiff:
    """Turn decided items into prompt/lexicon improvements, as a diff only.

    Approved items become positive few-shot pairs with their original
    context. Rejections tagged SensitiveItem with a recorded NG substring
    become candidate block entries; a human confirms before activation.
    """
    few_shot: list[FewShotExample] = []
    candidates: list[LexiconEntry] = []
    seen_patterns: set[str] = set()
    for item in items:
        if item.status is ReviewStatus.APPROVED:
            few_shot.append(
                FewShotExample(subject=item.subject, input_lines=tuple(item.context_lines))
            )
        elif item.status is ReviewStatus.REJECTED and ReviewTag.SENSITIVE_ITEM in item.tags:
            if item.ng_term and item.ng_term not in seen_patterns:
                seen_patterns.add(item.ng_term)
                candidates.append(
                    LexiconEntry(
                        pattern=item.ng_term,
                        kind=EntryKind.BLOCK,
                        reason=f"review finding on item {item.id}",
                        added_on=date.today(),
                    )
                )
    return PromotionDiff(few_shot=few_shot, lexicon_candidates=candidates)


class CandidateStatus(str, Enum):
    CANDIDATE = "candidate"
    ACTIVE = "active"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class LexiconCandidate:
    id: str
    pattern: str
    reason: str = ""
    status: CandidateStatus = CandidateStatus.CANDIDATE
    source_item_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "pattern": self.pattern,
            "reason": self.reason,
            "status": self.status.value,
            "source_item_id": self.source_item_id,
        }


class ReviewStore:
    """Append-only event log with an in-memory view; one writer at a time."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._candidates: dict[str, LexiconCandidate] = {}
        self._candidate_order: list[str] = []
        if self._path.exists():
            self._replay()

    def _replay(self) -> None:
        for _, event in iter_jsonl(self._path):
            kind = event.get("type")
            if kind == "item_added":
                item = ReviewItem.from_dict(event["item"])
                if item.id not in self._items:
                    self._order.append(item.id)
                self._items[item.id] = item
            elif kind == "verdict":
                self._apply_verdict_event(event)
            elif kind == "reopened":
                item = self._items[event["item_id"]]
                self._items[item.id] = replace(
                    item, status=ReviewStatus.PENDING, tags=(), reviewer="",
                    decided_at=None, ng_term=None,
                )
            elif kind == "candidate_added":
                cand = LexiconCandidate(
                    id=event["candidate"]["id"],
                    pattern=event["candidate"]["pattern"],
                    reason=event["candidate"].get("reason", ""),
                    status=CandidateStatus(event["candidate"].get("status", "candidate")),
                    source_item_id=event["candidate"].get("source_item_id"),
                )
                if cand.id not in self._candidates:
                    self._candidate_order.append(cand.id)
                self._candidates[cand.id] = cand
            elif kind == "candidate_status":
                cand = self._candidates[event["candidate_id"]]
                self._candidates[cand.id] = replace(
                    cand, status=CandidateStatus(event["status"])
                )

    def _apply_verdict_event(self, event: dict) -> None:
        item = self._items[event["item_id"]]
        self._items[item.id] = replace(
            item,
            status=ReviewStatus(event["status"]),
            tags=tuple(ReviewTag(t) for t in event.get("tags", ())),
            reviewer=event.get("reviewer", ""),
            decided_at=parse_rfc3339(event["decided_at"]),
            ng_term=event.get("ng_term"),
        )

    def _append(self, event: dict) -> None:
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    # -- items ---------------------------------------------------------

    def add_items(self, items: Iterable[ReviewItem]) -> int:
        """Register pending items; ids already present are left untouched."""
        added = 0
        with self._lock:
            for item in items:
                if item.id in self._items:
                    continue
                self._items[item.id] = item
                self._order.append(item.id)
                self._append({"type": "item_added", "item": item.to_dict()})
                added += 1
        return added

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise NotFound(item_id)
        return item

    def items(self) -> list[ReviewItem]:
        return [self._items[i] for i in self._order]

    def queue(
        self,
        status: ReviewStatus | None = None,
        limit: int | None = None,
        cursor: int = 0,
    ) -> tuple[list[ReviewItem], int | None, dict[str, int]]:
        """Page through items in insertion order; cursor is the next offset."""
        counts = {s.value: 0 for s in ReviewStatus}
        for item in self.items():
            counts[item.status.value] += 1
        selected = [i for i in self.items() if status is None or i.status is status]
        window = selected[cursor:]
        if limit is not None:
            window = window[:limit]
        next_cursor = cursor + len(window)
        if next_cursor >= len(selected):
            next_cursor = None
        return window, next_cursor, counts

    def record_verdict(
        self,
        item_id: str,
        verdict: ReviewStatus,
        tags: Sequence[ReviewTag] = (),
        reviewer: str = "",
        ng_term: str | None = None,
    ) -> ReviewItem:
        """Decide a pending item; identical re-submission is a no-op."""
        if verdict not in (ReviewStatus.APPROVED, ReviewStatus.REJECTED):
            raise ValueError("verdict must be approved or rejected")
        tags = tuple(tags)
        with self._lock:
            item = self.get(item_id)
            if item.status is not ReviewStatus.PENDING:
                same = (
                    item.status is verdict
                    and set(item.tags) == set(tags)
                    and item.reviewer == reviewer
                    and item.ng_term == ng_term
                )
                if same:
                    return item
                raise AlreadyDecided(item_id)
            decided_at = utcnow()
            event = {
                "type": "verdict",
                "item_id": item_id,
                "status": verdict.value,
                "tags": [t.value for t in tags],
                "reviewer": reviewer,
                "ng_term": ng_term,
                "decided_at": format_rfc3339(decided_at),
            }
            self._apply_verdict_event(event)
            self._append(event)
            return self._items[item_id]

    def reopen(self, item_id: str, reviewer: str = "") -> ReviewItem:
        with self._lock:
            item = self.get(item_id)
            if item.status is ReviewStatus.PENDING:
                return item
            self._items[item_id] = replace(
                item, status=ReviewStatus.PENDING, tags=(), reviewer="",
                decided_at=None, ng_term=None,
            )
            self._append({"type": "reopened", "item_id": item_id, "reviewer": reviewer})
            return self._items[item_id]

    def report(self) -> FindingsReport:
        return aggregate_findings(self.items())

    # -- lexicon candidates --------------------------------------------

    def add_candidate(
        self, pattern: str, reason: str = "", source_item_id: str | None = None
    ) -> LexiconCandidate:
        """Queue a block-pattern candidate; same live pattern is returned as-is."""
        if not pattern:
            raise ValueError("empty pattern")
        with self._lock:
            for cand in self._candidates.values():
                if cand.pattern == pattern and cand.status is not CandidateStatus.DISCARDED:
                    return cand
            cand = LexiconCandidate(
                id=uuid.uuid4().hex[:12],
                pattern=pattern,
                reason=reason,
                source_item_id=source_item_id,
            )
            self._candidates[cand.id] = cand
            self._candidate_order.append(cand.id)
            self._append({"type": "candidate_added", "candidate": cand.to_dict()})
            return cand

    def candidates(self, status: CandidateStatus | None = None) -> list[LexiconCandidate]:
        result = [self._candidates[c] for c in self._candidate_order]
        if status is not None:
            result = [c for c in result if c.status is status]
        return result

    def _set_candidate_status(self, candidate_id: str, status: CandidateStatus) -> LexiconCandidate:
        with self._lock:
            cand = self._candidates.get(candidate_id)
            if cand is None:
                raise NotFound(candidate_id)
            if cand.status is not status:
                self._candidates[candidate_id] = replace(cand, status=status)
                self._append(
                    {"type": "candidate_status", "candidate_id": candidate_id, "status": status.value}
                )
            return self._candidates[candidate_id]

    def activate_candidate(self, candidate_id: str) -> LexiconCandidate:
        return self._set_candidate_status(candidate_id, CandidateStatus.ACTIVE)

    def discard_candidate(self, candidate_id: str) -> LexiconCandidate:
        return self._set_candidate_status(candidate_id, CandidateStatus.DISCARDED)

    def active_block_entries(self) -> list[LexiconEntry]:
        return [
            LexiconEntry(
                pattern=c.pattern, kind=EntryKind.BLOCK, reason=c.reason, added_on=date.today()
            )
            for c in self.candidates(CandidateStatus.ACTIVE)
        ]
