"""Funnel rates, lifts, and pooled two-proportion z-tests over event logs.

Rates are carried as exact fractions; z is the pooled two-proportion
statistic, positive when treatment is higher. Effects classify as
significant (|z| >= 1.96), hinting (1 < |z| < 1.96), or neutral
(|z| <= 1). Purchase attribution: a purchase counts "via email" when it
falls within a configurable window after an open of the same email;
"overall" counts any purchase by a targeted user.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .cohort import Variant
from .delivery import EventRecord, EventType, read_event_log

Z_SIGNIFICANT = 1.96
Z_HINTING = 1.0

REPORT_SCHEMA = "subjectforge.report/1"


class OrderingViolation(ValueError):
    def __init__(self, email_id: str, message: str):
        super().__init__(f"email {email_id or '<none>'}: {message}")
        self.email_id = email_id


class DegeneratePool(ValueError):
    pass


class ZeroBaseline(ValueError):
    pass


class MissingVariant(ValueError):
    pass


class Classification(str, Enum):
    SIGNIFICANT = "significant"
    HINTING = "hinting"
    NEUTRAL = "neutral"


@dataclass
class VariantCounts:
    targeted: int = 0
    sent: int = 0
    opened: int = 0
    item_taps: int = 0
    buyers_via_email: int = 0
    buyers_overall: int = 0
    unsubscribes: int = 0


@dataclass
class RateTable:
    control: VariantCounts
    treatment: VariantCounts

    def for_variant(self, variant: Variant) -> VariantCounts:
        return self.control if variant is Variant.CONTROL else self.treatment

    def to_dict(self) -> dict:
        return {"control": vars(self.control), "treatment": vars(self.treatment)}


@dataclass
class MetricResult:
    metric_name: str
    control_rate: Fraction | None
    treatment_rate: Fraction | None
    relative_lift_pct: float | None
    z_value: float | None
    classification: Classification | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "control_rate": float(self.control_rate) if self.control_rate is not None else None,
            "treatment_rate": float(self.treatment_rate) if self.treatment_rate is not None else None,
            "relative_lift_pct": self.relative_lift_pct,
            "z_value": self.z_value,
            "classification": self.classification.value if self.classification else None,
            "note": self.note,
        }


def aggregate_rates(
    source: str | Path | Iterable[EventRecord],
    attribution_window_hours: float = 24.0,
) -> RateTable:
    """Tally the delivery funnel per variant from an event stream.

    Duplicate events per (email, event type) count once; funnel events
    must follow Targeted/Sent/Open ordering or the log is rejected.
    """
    records = read_event_log(source) if isinstance(source, (str, Path)) else source
    table = RateTable(control=VariantCounts(), treatment=VariantCounts())
    targeted_users: set[str] = set()
    sent_ts: dict[str, object] = {}
    open_ts: dict[str, object] = {}
    tapped_emails: set[str] = set()
    unsub_users: dict[Variant, set[str]] = {Variant.CONTROL: set(), Variant.TREATMENT: set()}
    buyers: dict[Variant, set[str]] = {Variant.CONTROL: set(), Variant.TREATMENT: set()}
    via_buyers: dict[Variant, set[str]] = {Variant.CONTROL: set(), Variant.TREATMENT: set()}
    pending_purchases: list[EventRecord] = []
    window = timedelta(hours=attribution_window_hours)

    for record in records:
        counts = table.for_variant(record.variant)
        event = record.event
        if event is EventType.TARGETED:
            if record.user_id not in targeted_users:
                targeted_users.add(record.user_id)
                counts.targeted += 1
            continue
        if record.user_id not in targeted_users:
            raise OrderingViolation(record.email_id, f"{event.value} for untargeted user")
        if event is EventType.SENT:
            if record.email_id not in sent_ts:
                sent_ts[record.email_id] = record.ts
                counts.sent += 1
        elif event is EventType.SEND_FAILED:
            pass
        elif event is EventType.OPEN:
            if record.email_id not in sent_ts:
                raise OrderingViolation(record.email_id, "open before sent")
            if record.ts < sent_ts[record.email_id]:
                raise OrderingViolation(record.email_id, "open timestamp precedes sent")
            if record.email_id not in open_ts:
                open_ts[record.email_id] = record.ts
                counts.opened += 1
        elif event is EventType.ITEM_TAP:
            if record.email_id not in open_ts:
                raise OrderingViolation(record.email_id, "item tap before open")
            if record.ts < open_ts[record.email_id]:
                raise OrderingViolation(record.email_id, "tap timestamp precedes open")
            if record.email_id not in tapped_emails:
                tapped_emails.add(record.email_id)
                counts.item_taps += 1
        elif event is EventType.PURCHASE:
            buyers[record.variant].add(record.user_id)
            if record.email_id:
                pending_purchases.append(record)
        elif event is EventType.UNSUBSCRIBE:
            unsub_users[record.variant].add(record.user_id)

    for record in pending_purchases:
        opened = open_ts.get(record.email_id)
        if opened is not None and opened <= record.ts <= opened + window:
            via_buyers[record.variant].add(record.user_id)

    for variant in (Variant.CONTROL, Variant.TREATMENT):
        counts = table.for_variant(variant)
        counts.buyers_overall = len(buyers[variant])
        counts.buyers_via_email = len(via_buyers[variant])
        counts.unsubscribes = len(unsub_users[variant])
    return table


def two_proportion_z(c_success: int, c_total: int, t_success: int, t_total: int) -> float:
    """Pooled two-proportion z; positive when the treatment rate is higher."""
    if c_total <= 0 or t_total <= 0:
        raise ValueError("totals must be positive")
    if not 0 <= c_success <= c_total or not 0 <= t_success <= t_total:
        raise ValueError("successes must be within totals")
    pooled = Fraction(c_success + t_success, c_total + t_total)
    if pooled == 0 or pooled == 1:
        raise DegeneratePool(f"pooled proportion is {float(pooled):g}; z undefined")
    diff = t_success / t_total - c_success / c_total
    se = math.sqrt(float(pooled) * (1.0 - float(pooled)) * (1.0 / c_total + 1.0 / t_total))
    return diff / se


def relative_lift(control_rate, treatment_rate) -> float:
    """Percent change of treatment over control, to two decimals."""
    if control_rate == 0:
        raise ZeroBaseline("control rate is zero; lift undefined")
    return round(100.0 * (float(treatment_rate) - float(control_rate)) / float(control_rate), 2)


def classify(z: float) -> Classification:
    if abs(z) >= Z_SIGNIFICANT:
        return Classification.SIGNIFICANT
    if abs(z) > Z_HINTING:
        return Classification.HINTING
    return Classification.NEUTRAL


_METRICS = (
    # name, numerator field, denominator field ("targeted"/"sent"/"opened")
    ("send_rate", "sent", "targeted"),
    ("open_rate", "opened", "sent"),
    ("item_tap_rate", "item_taps", None),  # denominator configurable
    ("buyer_conversion_via_email", "buyers_via_email", "targeted"),
    ("buyer_conversion_overall", "buyers_overall", "targeted"),
    ("unsubscribe_rate", "unsubscribes", "sent"),
)


def metric_counts(
    table: RateTable, tap_denominator: str = "opens"
) -> list[tuple[str, int, int, int, int]]:
    """(name, control successes, control total, treatment successes, treatment total)."""
    if tap_denominator not in ("opens", "sends"):
        raise ValueError(f"tap_denominator must be opens or sends, got {tap_denominator!r}")
    rows = []
    for name, num_field, den_field in _METRICS:
        if den_field is None:
            den_field = "opened" if tap_denominator == "opens" else "sent"
        rows.append(
            (
                name,
                getattr(table.control, num_field),
                getattr(table.control, den_field),
                getattr(table.treatment, num_field),
                getattr(table.treatment, den_field),
            )
        )
    return rows


def analyze(
    source: str | Path | Iterable[EventRecord] | RateTable,
    tap_denominator: str = "opens",
    attribution_window_hours: float = 24.0,
) -> list[MetricResult]:
    """Produce one MetricResult per funnel metric from a log or rate table."""
    if isinstance(source, RateTable):
        table = source
    else:
        table = aggregate_rates(source, attribution_window_hours)
    if table.control.targeted == 0 or table.treatment.targeted == 0:
        raise MissingVariant("log must contain targeted users in both variants")

    results = []
    for name, cs, cn, ts, tn in metric_counts(table, tap_denominator):
        note = ""
        c_rate = Fraction(cs, cn) if cn else None
        t_rate = Fraction(ts, tn) if tn else None
        lift = None
        z = None
        classification = None
        if cn == 0 or tn == 0:
            note = "empty denominator"
        else:
            try:
                z = two_proportion_z(cs, cn, ts, tn)
                classification = classify(z)
            except DegeneratePool as exc:
                note = str(exc)
            try:
                lift = relative_lift(c_rate, t_rate)
            except ZeroBaseline as exc:
                note = (note + "; " if note else "") + str(exc)
        results.append(
            MetricResult(
                metric_name=name,
                control_rate=c_rate,
                treatment_rate=t_rate,
                relative_lift_pct=lift,
                z_value=z,
                classification=classification,
                note=note,
            )
        )
    return results


def render_table(results: Sequence[MetricResult]) -> str:
    headers = ("Metric", "Control", "Treatment", "Lift %", "z", "Class")
    rows = [headers]
    for r in results:
        rows.append(
            (
                r.metric_name,
                f"{float(r.control_rate):.5f}" if r.control_rate is not None else "n/a",
                f"{float(r.treatment_rate):.5f}" if r.treatment_rate is not None else "n/a",
                f"{r.relative_lift_pct:+.2f}" if r.relative_lift_pct is not None else "n/a",
                f"{r.z_value:+.2f}" if r.z_value is not None else "n/a",
                r.classification.value if r.classification else "n/a",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines)


def report_json(results: Sequence[MetricResult], table: RateTable | None = None) -> str:
    payload = {"schema": REPORT_SCHEMA, "metrics": [r.to_dict() for r in results]}
    if table is not None:
        payload["counts"] = table.to_dict()
    return json.dumps(payload, ensure_ascii=False, indent=2)
