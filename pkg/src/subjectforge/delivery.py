"""Email assembly, pluggable delivery sinks, and the campaign event log.

Every eligible user ends in exactly one terminal event, Sent or
SendFailed, so funnel counts always reconcile. The log is JSONL with a
schema header line; one writer thread appends whole lines fed through an
internal queue. Open/tap/purchase events cannot happen at desk scale, so a
seeded simulator synthesizes them (clearly marked) for the analysis stage.
"""

from __future__ import annotations

import json
import queue
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import httpx

from .catalog import RecommendedItem
from .cohort import Variant, fnv1a_64
from .titlegen import TitleResult, TitleSource
from .utils import JsonlError, format_rfc3339, iter_jsonl, parse_rfc3339, utcnow

SCHEMA_VERSION = "subjectforge.events/1"

DEFAULT_DISCLOSURE = "※この件名はAIによって生成されました"


class EventType(str, Enum):
    TARGETED = "targeted"
    SENT = "sent"
    SEND_FAILED = "send_failed"
    OPEN = "open"
    ITEM_TAP = "item_tap"
    PURCHASE = "purchase"
    UNSUBSCRIBE = "unsubscribe"


class NoItemsRemaining(ValueError):
    pass


class SinkUnavailable(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class SchemaError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class EmailDoc:
    email_id: str
    user_id: str
    variant: Variant
    subject: str
    items: tuple[RecommendedItem, ...]
    body_template_id: str
    title_source: TitleSource
    attempts: int
    created_at: datetime
    disclosure: str | None = None

    def render(self) -> dict:
        return {
            "email_id": self.email_id,
            "user_id": self.user_id,
            "variant": self.variant.value,
            "subject": self.subject,
            "body_template_id": self.body_template_id,
            "items": [
                {
                    "item_id": it.item_id,
                    "title": it.title,
                    "category": it.category,
                    "price": it.price,
                    "rank": it.rank,
                }
                for it in self.items
            ],
            "disclosure": self.disclosure,
            "created_at": format_rfc3339(self.created_at),
        }


@dataclass(frozen=True)
class EventRecord:
    ts: datetime
    campaign_id: str
    user_id: str
    variant: Variant
    event: EventType
    email_id: str = ""
    title_source: str | None = None
    attempts: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ts": format_rfc3339(self.ts),
            "campaign_id": self.campaign_id,
            "user_id": self.user_id,
            "variant": self.variant.value,
            "event": self.event.value,
            "email_id": self.email_id,
            "title_source": self.title_source,
            "attempts": self.attempts,
            "meta": self.meta,
        }

    @staticmethod
    def from_dict(obj: dict) -> "EventRecord":
        return EventRecord(
            ts=parse_rfc3339(obj["ts"]),
            campaign_id=obj["campaign_id"],
            user_id=obj["user_id"],
            variant=Variant(obj["variant"]),
            event=EventType(obj["event"]),
            email_id=obj.get("email_id", ""),
            title_source=obj.get("title_source"),
            attempts=int(obj.get("attempts", 0)),
            meta=obj.get("meta", {}) or {},
        )


def email_id_for(campaign_id: str, user_id: str) -> str:
    return format(fnv1a_64(f"{campaign_id}:{user_id}".encode("utf-8")), "016x")


def assemble_email(
    title: TitleResult,
    items: Sequence[RecommendedItem],
    template_id: str,
    *,
    campaign_id: str,
    user_id: str,
    variant: Variant,
    disclosure_policy: str = "all",
    disclosure_text: str = DEFAULT_DISCLOSURE,
    now: datetime | None = None,
) -> EmailDoc:
    """Bundle the released title with the surviving items into one email."""
    if not items:
        raise NoItemsRemaining(f"user {user_id}: no items left after filtering")
    if title.violations:
        raise ValueError(f"user {user_id}: refusing to assemble a title with violations")
    if disclosure_policy not in ("all", "llm_only"):
        raise ValueError(f"unknown disclosure policy {disclosure_policy!r}")
    disclose = disclosure_policy == "all" or title.source is TitleSource.LLM
    return EmailDoc(
        email_id=email_id_for(campaign_id, user_id),
        user_id=user_id,
        variant=variant,
        subject=title.subject,
        items=tuple(items),
        body_template_id=template_id,
        title_source=title.source,
        attempts=title.attempts,
        created_at=now or utcnow(),
        disclosure=disclosure_text if disclose else None,
    )


class NullSink:
    """Dry-run sink: accepts everything, writes nothing."""

    dry_run = True

    def send(self, email: EmailDoc) -> dict:
        return {"dry_run": True}


class FileSink:
    """Writes each rendered email as JSON into a directory."""

    dry_run = False

    def __init__(self, out_dir: str | Path):
        self._dir = Path(out_dir)
        self._dir.mkdir(parents=True, exist_ok=True)

    def send(self, email: EmailDoc) -> dict:
        path = self._dir / f"{email.email_id}.json"
        path.write_text(
            json.dumps(email.render(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        return {"path": str(path)}


class WebhookSink:
    """POSTs the rendered email to an HTTP endpoint."""

    dry_run = False

    def __init__(self, url: str, timeout: float = 10.0):
        self._url = url
        self._http = httpx.Client(timeout=timeout)

    def send(self, email: EmailDoc) -> dict:
        try:
            resp = self._http.post(self._url, json=email.render())
        except httpx.HTTPError as exc:
            raise SinkUnavailable(f"webhook unreachable: {type(exc).__name__}") from exc
        if resp.status_code < 200 or resp.status_code >= 300:
            raise SinkUnavailable(f"webhook returned {resp.status_code}", status=resp.status_code)
        return {"status": resp.status_code}


def deliver(email: EmailDoc, sink, campaign_id: str, now: datetime | None = None) -> EventRecord:
    """Push one email through a sink; always yields exactly one terminal event."""
    ts = now or utcnow()
    base = dict(
        ts=ts,
        campaign_id=campaign_id,
        user_id=email.user_id,
        variant=email.variant,
        email_id=email.email_id,
        title_source=email.title_source.value,
        attempts=email.attempts,
    )
    try:
        meta = sink.send(email)
    except SinkUnavailable as exc:
        meta = {"reason": str(exc)}
        if exc.status is not None:
            meta["status"] = exc.status
        return EventRecord(event=EventType.SEND_FAILED, meta=meta, **base)
    if getattr(sink, "dry_run", False):
        meta = dict(meta)
        meta["dry_run"] = True
    return EventRecord(event=EventType.SENT, meta=meta, **base)


class EventLogWriter:
    """Single-writer JSONL appender fed through an internal queue.

    Lines are written whole by one thread, so concurrent producers can
    never tear a record. Creates the schema header when the file is new.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._queue: queue.Queue = queue.Queue()
        if not self._path.exists() or self._path.stat().st_size == 0:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.write_text(json.dumps({"schema": SCHEMA_VERSION}) + "\n", encoding="utf-8")
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def _drain(self) -> None:
        with open(self._path, "a", encoding="utf-8") as fh:
            while True:
                record = self._queue.get()
                if record is None:
                    fh.flush()
                    return
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

    def append(self, record: EventRecord) -> None:
        self._queue.put(record)

    def close(self) -> None:
        self._queue.put(None)
        self._thread.join()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_event_log(path: str | Path) -> Iterator[EventRecord]:
    """Yield records, validating the header line and per-line schema."""
    first = True
    try:
        for lineno, obj in iter_jsonl(path):
            if first:
                first = False
                if not isinstance(obj, dict) or "schema" not in obj:
                    raise SchemaError(lineno, "missing schema header")
                if obj["schema"] != SCHEMA_VERSION:
                    raise SchemaError(lineno, f"unsupported schema {obj['schema']!r}")
                continue
            try:
                yield EventRecord.from_dict(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(lineno, str(exc)) from exc
    except JsonlError as exc:
        raise SchemaError(exc.lineno, "invalid JSON") from exc


def sent_user_ids(path: str | Path, campaign_id: str) -> set[str]:
    """Users already holding a Sent event in this log; used to resume."""
    done = set()
    for record in read_event_log(path):
        if record.campaign_id == campaign_id and record.event is EventType.SENT:
            done.add(record.user_id)
    return done


@dataclass(frozen=True)
class VariantProbs:
    open: float = 0.10
    tap_given_open: float = 0.30
    purchase_given_open: float = 0.05
    purchase_organic: float = 0.01
    unsubscribe_given_open: float = 0.02


@dataclass(frozen=True)
class EngagementProbs:
    control: VariantProbs = VariantProbs()
    treatment: VariantProbs = VariantProbs()

    @staticmethod
    def from_dict(obj: dict) -> "EngagementProbs":
        return EngagementProbs(
            control=VariantProbs(**obj.get("control", {})),
            treatment=VariantProbs(**obj.get("treatment", {})),
        )

    def for_variant(self, variant: Variant) -> VariantProbs:
        return self.control if variant is Variant.CONTROL else self.treatment


def sim_engagement(
    log_path: str | Path,
    probs: EngagementProbs,
    seed: int,
    attribution_window_hours: float = 24.0,
) -> dict:
    """Append synthetic Open/ItemTap/Purchase/Unsubscribe events to a log.

    Purely a desk-scale stand-in for real engagement; every event it
    writes carries meta.synthetic=true. Each record's randomness derives
    from (seed, email or user), so results do not depend on the order a
    parallel run happened to write the log in.
    """
    records = list(read_event_log(log_path))
    counts = {"open": 0, "item_tap": 0, "purchase": 0, "unsubscribe": 0}
    synthetic: list[EventRecord] = []

    def emit(event: EventType, base: EventRecord, ts: datetime, email_id: str) -> None:
        synthetic.append(
            EventRecord(
                ts=ts,
                campaign_id=base.campaign_id,
                user_id=base.user_id,
                variant=base.variant,
                event=event,
                email_id=email_id,
                meta={"synthetic": True},
            )
        )
        counts[event.value] += 1

    def record_rng(record: EventRecord) -> random.Random:
        key = f"{seed}:{record.event.value}:{record.email_id or record.user_id}"
        return random.Random(fnv1a_64(key.encode("utf-8")))

    for record in records:
        p = probs.for_variant(record.variant)
        rng = record_rng(record)
        if record.event is EventType.SENT:
            if rng.random() < p.open:
                open_ts = record.ts + timedelta(minutes=rng.uniform(1, 720))
                emit(EventType.OPEN, record, open_ts, record.email_id)
                if rng.random() < p.tap_given_open:
                    emit(
                        EventType.ITEM_TAP,
                        record,
                        open_ts + timedelta(minutes=rng.uniform(1, 30)),
                        record.email_id,
                    )
                if rng.random() < p.purchase_given_open:
                    delta_h = rng.uniform(0.1, attribution_window_hours * 0.5)
                    emit(
                        EventType.PURCHASE,
                        record,
                        open_ts + timedelta(hours=delta_h),
                        record.email_id,
                    )
                if rng.random() < p.unsubscribe_given_open:
                    emit(
                        EventType.UNSUBSCRIBE,
                        record,
                        open_ts + timedelta(minutes=rng.uniform(1, 60)),
                        record.email_id,
                    )
        elif record.event is EventType.TARGETED:
            if rng.random() < p.purchase_organic:
                emit(
                    EventType.PURCHASE,
                    record,
                    record.ts + timedelta(hours=rng.uniform(1, 72)),
                    "",
                )

    with EventLogWriter(log_path) as writer:
        for record in synthetic:
            writer.append(record)
    return counts
