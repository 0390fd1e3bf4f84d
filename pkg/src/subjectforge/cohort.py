"""User selection and deterministic experiment assignment.

Eligibility: lapsed users (no access for ``inactive_days_min`` days, strict)
who were active within the last year, purchased within the last six months,
and are opted in to email. Assignment hashes ``experiment_id:salt:user_id``
with 64-bit FNV-1a into 10,000 buckets, so sub-percent splits are stable
across runs, processes, and languages.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .utils import JsonlError, iter_jsonl, parse_rfc3339


class Variant(str, Enum):
    CONTROL = "control"
    TREATMENT = "treatment"


class FutureTimestamp(ValueError):
    def __init__(self, user_id: str, field_name: str):
        super().__init__(f"user {user_id}: {field_name} is in the future")
        self.user_id = user_id


class MalformedRecord(ValueError):
    pass


class EmptyIdentifier(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    last_access_at: datetime
    first_access_at: datetime
    last_purchase_at: datetime | None = None
    email_opt_in: bool = True

    def __post_init__(self):
        if not self.user_id:
            raise MalformedRecord("empty user_id")
        if self.first_access_at > self.last_access_at:
            raise MalformedRecord(
                f"user {self.user_id}: first_access_at after last_access_at"
            )


@dataclass(frozen=True)
class CohortRules:
    inactive_days_min: int = 7
    active_within_days: int = 365
    purchased_within_days: int = 180
    require_opt_in: bool = True

    def __post_init__(self):
        if min(self.inactive_days_min, self.active_within_days, self.purchased_within_days) <= 0:
            raise ValueError("cohort windows must be positive")
        if self.inactive_days_min >= self.active_within_days:
            raise ValueError("inactive_days_min must be below active_within_days")


@dataclass(frozen=True)
class Assignment:
    user_id: str
    experiment_id: str
    variant: Variant
    bucket: int


@dataclass
class SplitReport:
    total: int
    counts: dict[str, int]
    observed_fraction: float
    # worst absolute gap between a bucket's observed share and uniform 1/10000
    max_bucket_deviation: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(self.counts),
            "observed_fraction": self.observed_fraction,
            "max_bucket_deviation": self.max_bucket_deviation,
        }


BUCKET_COUNT = 10_000

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a; stable across platforms, unlike ``hash()``."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def bucket_of(user_id: str, experiment_id: str, salt: str) -> int:
    return fnv1a_64(f"{experiment_id}:{salt}:{user_id}".encode("utf-8")) % BUCKET_COUNT


def assign_variant(
    user_id: str, experiment_id: str, salt: str, split_fraction: float
) -> Assignment:
    """Deterministically place a user in control or treatment.

    Pure function of its arguments: safe across restarts and call order.
    Treatment iff bucket < split_fraction * 10000, so raising the split only
    ever moves users into treatment, never out.
    """
    if not user_id or not experiment_id:
        raise EmptyIdentifier("user_id and experiment_id must be non-empty")
    if not 0 < split_fraction < 1:
        raise ValueError(f"split_fraction must be in (0, 1), got {split_fraction}")
    bucket = bucket_of(user_id, experiment_id, salt)
    variant = Variant.TREATMENT if bucket < split_fraction * BUCKET_COUNT else Variant.CONTROL
    return Assignment(user_id=user_id, experiment_id=experiment_id, variant=variant, bucket=bucket)


def select_eligible(
    users: Sequence[UserRecord], rules: CohortRules, now: datetime
) -> list[UserRecord]:
    """Filter users to the campaign cohort, preserving input order.

    The inactivity cut is strict (last access must be *older* than the
    window); the activity and purchase windows are inclusive.
    """
    for user in users:
        for name in ("last_access_at", "first_access_at", "last_purchase_at"):
            ts = getattr(user, name)
            if ts is not None and ts > now:
                raise FutureTimestamp(user.user_id, name)

    selected = []
    for user in users:
        if now - user.last_access_at <= timedelta(days=rules.inactive_days_min):
            continue
        if now - user.last_access_at > timedelta(days=rules.active_within_days):
            continue
        if user.last_purchase_at is None:
            continue
        if now - user.last_purchase_at > timedelta(days=rules.purchased_within_days):
            continue
        if rules.require_opt_in and not user.email_opt_in:
            continue
        selected.append(user)
    return selected


def audit_split(assignments: Sequence[Assignment]) -> SplitReport:
    """Summarize an assignment batch: variant counts and bucket skew."""
    if not assignments:
        raise EmptyInput("no assignments to audit")
    counts = {Variant.CONTROL.value: 0, Variant.TREATMENT.value: 0}
    bucket_counts = [0] * BUCKET_COUNT
    for a in assignments:
        counts[a.variant.value] += 1
        bucket_counts[a.bucket] += 1
    total = len(assignments)
    uniform = 1.0 / BUCKET_COUNT
    max_dev = max(abs(c / total - uniform) for c in bucket_counts)
    return SplitReport(
        total=total,
        counts=counts,
        observed_fraction=counts[Variant.TREATMENT.value] / total,
        max_bucket_deviation=max_dev,
    )


_REQUIRED_FIELDS = ("user_id", "last_access_at", "first_access_at")


def user_from_dict(obj: dict) -> UserRecord:
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise MalformedRecord(f"missing field {name!r}")
    purchase = obj.get("last_purchase_at")
    try:
        return UserRecord(
            user_id=str(obj["user_id"]),
            last_access_at=parse_rfc3339(obj["last_access_at"]),
            first_access_at=parse_rfc3339(obj["first_access_at"]),
            last_purchase_at=parse_rfc3339(purchase) if purchase else None,
            email_opt_in=bool(obj.get("email_opt_in", True)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MalformedRecord):
            raise
        raise MalformedRecord(str(exc)) from exc


def load_users(path: str | Path) -> list[UserRecord]:
    """Read a JSONL users file; user_id must be unique within the file."""
    users: list[UserRecord] = []
    seen: set[str] = set()
    try:
        for lineno, obj in iter_jsonl(path):
            try:
                user = user_from_dict(obj)
            except MalformedRecord as exc:
                raise MalformedRecord(f"line {lineno}: {exc}") from exc
            if user.user_id in seen:
                raise MalformedRecord(f"line {lineno}: duplicate user_id {user.user_id!r}")
            seen.add(user.user_id)
            users.append(user)
    except JsonlError as exc:
        raise MalformedRecord(str(exc)) from exc
    return users


def assign_all(
    users: Iterable[UserRecord], experiment_id: str, salt: str, split_fraction: float
) -> list[Assignment]:
    return [assign_variant(u.user_id, experiment_id, salt, split_fraction) for u in users]
