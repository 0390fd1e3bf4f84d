from __future__ import annotations

import json
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import pytest

from subjectforge.catalog import RecommendedItem
from subjectforge.cohort import UserRecord
from subjectforge.lexicon import EntryKind, LexiconEntry, compile_lexicon
from subjectforge.llmclient import ChatTransportError

NOW = datetime(2026, 8, 10, 12, 0, 0, tzinfo=timezone.utc)

# Screening corpus: four flagged item titles and their no-good substrings.
TABLE3_TITLES = {
    "新米コシヒカリ30kgを早い者勝ちで！": "30kg",
    "あほの坂田グッズをチェックしよう": "あほ",
    "おまえをオタクにしてやるから全巻セットを集めました": "おまえ",
    "介護用シルバーカーを集めました": "バーカ",
}

APPENDIX_CONTEXT_LINES = [
    "検索キーワード：ヴィンテージ 商品例：Leeの90年代デニムジーンズ USA製",
    "検索キーワード：New Era 商品例：ニューヨーク・メッツ 帽子 サイズ7 1/8",
]

APPENDIX_POSITIVE_SUBJECTS = [
    "新作ゴルフウェア＆プロ愛用クラブを集めました",
    "春の読書におすすめの文庫本をご覧ください",
    "人気アニメキャラクターグッズをチェックしよう",
]


def block_entries():
    return [
        LexiconEntry("30kg", EntryKind.BLOCK, "heavy item", date(2026, 1, 5)),
        LexiconEntry("あほ", EntryKind.BLOCK, "rude", date(2026, 1, 5)),
        LexiconEntry("おまえ", EntryKind.BLOCK, "condescending", date(2026, 1, 5)),
        LexiconEntry("バーカ", EntryKind.BLOCK, "slang insult", date(2026, 1, 5)),
    ]


def allow_entries():
    return [LexiconEntry("シルバーカー", EntryKind.ALLOW, "legitimate product", date(2026, 1, 12))]


@pytest.fixture
def table3_lexicon():
    return compile_lexicon(block_entries() + allow_entries())


@pytest.fixture
def table3_block_only():
    return compile_lexicon(block_entries())


def make_user(
    user_id: str,
    days_since_access: float = 11,
    days_since_purchase: float | None = 90,
    days_since_first_access: float = 400,
    opt_in: bool = True,
    now: datetime = NOW,
) -> UserRecord:
    return UserRecord(
        user_id=user_id,
        last_access_at=now - timedelta(days=days_since_access),
        first_access_at=now - timedelta(days=days_since_first_access),
        last_purchase_at=(
            now - timedelta(days=days_since_purchase) if days_since_purchase is not None else None
        ),
        email_opt_in=opt_in,
    )


def make_item(item_id: str, title: str, category: str = "misc", rank: int = 1, price: int = 1000):
    return RecommendedItem(item_id=item_id, title=title, category=category, price=price, rank=rank)


class ScriptedClient:
    """Chat stub driven by a list of outcomes; Exception entries raise, the last repeats."""

    def __init__(self, script, model: str = "scripted", temperature: float = 0.7):
        self.script = list(script)
        self.calls = 0
        self.model = model
        self.temperature = temperature

    def complete(self, messages):
        outcome = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def dead_client() -> ScriptedClient:
    return ScriptedClient([ChatTransportError("connection refused")])


def subject_json(subject: str) -> str:
    return json.dumps({"subject": subject}, ensure_ascii=False)


# A compliant 32-codepoint subject with exactly one CTA phrase.
GOOD_SUBJECT = "秋の新作ゴルフウェア＆プロ愛用の人気クラブ最新モデルを集めました"


def write_users_file(path: Path, users) -> Path:
    from subjectforge.utils import format_rfc3339

    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            fh.write(
                json.dumps(
                    {
                        "user_id": u.user_id,
                        "last_access_at": format_rfc3339(u.last_access_at),
                        "first_access_at": format_rfc3339(u.first_access_at),
                        "last_purchase_at": (
                            format_rfc3339(u.last_purchase_at) if u.last_purchase_at else None
                        ),
                        "email_opt_in": u.email_opt_in,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def write_recs_file(path: Path, per_user: dict) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for user_id, items in per_user.items():
            for it in items:
                fh.write(
                    json.dumps(
                        {
                            "user_id": user_id,
                            "item_id": it.item_id,
                            "title": it.title,
                            "category": it.category,
                            "price": it.price,
                            "rank": it.rank,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    return path


def build_campaign_files(
    base: Path,
    n_eligible: int = 20,
    n_ineligible: int = 5,
    stub_response: str | dict | None = None,
    fallback_enabled: bool = True,
    sink: str = "null",
    workers: int = 4,
    mode: str = "substring",
    extra_config: dict | None = None,
) -> Path:
    """Write users/recs/lexicon/stub/config files; every eligible user keeps
    two clean items and loses one to the sensitive-word filter."""
    users = [make_user(f"user-{i:05d}") for i in range(n_eligible)]
    users += [make_user(f"fresh-{i:03d}", days_since_access=2) for i in range(n_ineligible)]
    write_users_file(base / "users.jsonl", users)

    recs = {}
    for i in range(n_eligible):
        uid = f"user-{i:05d}"
        recs[uid] = [
            make_item(f"{uid}-a", f"ゴルフクラブ {i}", category="sports", rank=1),
            make_item(f"{uid}-b", f"ゴルフシューズ {i}", category="sports", rank=2),
            make_item(f"{uid}-c", f"あほの坂田グッズ {i}", category="goods", rank=3),
        ]
    write_recs_file(base / "recs.jsonl", recs)
    write_lexicon_file(base / "lexicon.jsonl", block_entries() + allow_entries())

    if stub_response is None:
        stub_response = subject_json(GOOD_SUBJECT)
    (base / "stub.json").write_text(
        json.dumps({"__default__": stub_response}, ensure_ascii=False), encoding="utf-8"
    )

    config = {
        "experiment": {"experiment_id": "exp-test", "salt": "pepper", "split_fraction": 0.5},
        "cohort": {"users_path": "users.jsonl", "now": NOW.isoformat().replace("+00:00", "Z")},
        "catalog": {"recommendations_path": "recs.jsonl"},
        "lexicon": {"path": "lexicon.jsonl", "mode": mode},
        "prompt": {},
        "client": {
            "kind": "stub",
            "fixture_path": "stub.json",
            "retry_budget": 2,
            "fallback_enabled": fallback_enabled,
        },
        "delivery": {
            "sink": sink,
            "out_dir": "outbox",
            "events_path": "events.jsonl",
            "workers": workers,
        },
    }
    if extra_config:
        config.update(extra_config)
    path = base / "campaign.json"
    path.write_text(json.dumps(config, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def write_lexicon_file(path: Path, entries) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(
                json.dumps(
                    {
                        "pattern": e.pattern,
                        "kind": e.kind.value,
                        "reason": e.reason,
                        "added_on": e.added_on.isoformat(),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path
