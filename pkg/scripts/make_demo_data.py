#!/usr/bin/env python3
"""Generate a self-contained demo campaign workspace.

Writes users, recommendations, search keywords, a sensitive-word lexicon,
a keyed stub-response fixture for the chat client, and a campaign config
into --out. The stub responses are keyed by the exact request fingerprint
the pipeline will produce, so the demo exercises the same code path as a
live model endpoint.

Usage:
    python scripts/make_demo_data.py --out demo --users 400 --seed 7
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from datetime import date, timedelta, timezone, datetime
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from subjectforge.campaign import load_campaign_config
from subjectforge.catalog import build_user_context, group_by_category
from subjectforge.cohort import Variant, assign_variant
from subjectforge.lexicon import compile_lexicon, filter_items, load_entries
from subjectforge.llmclient import request_fingerprint
from subjectforge.titlegen import PromptConfig, build_prompt, validate_title
from subjectforge.utils import format_rfc3339, write_jsonl

NOW = datetime(2026, 8, 10, 9, 0, 0, tzinfo=timezone.utc)

CATALOG = {
    "ゴルフ": ["キャロウェイ ドライバー 10.5度", "ゴルフシューズ 26.5cm", "パター 34インチ", "ゴルフウェア 上下セット"],
    "デニム": ["Leeの90年代デニムジーンズ USA製", "リーバイス 501 W32", "ヴィンテージ デニムジャケット"],
    "帽子": ["ニューヨーク・メッツ 帽子 サイズ7 1/8", "ベースボールキャップ 黒", "ハット 麦わら"],
    "文庫本": ["春の文庫本セット 10冊", "ミステリー文庫 まとめ売り", "随筆集 名作選"],
    "アニメ": ["人気アニメキャラクターフィギュア", "アニメグッズ 缶バッジセット", "限定ポスター B2"],
    "家電": ["コーヒーメーカー 全自動", "加湿器 大容量", "電気ケトル 1L"],
}

NG_ITEMS = [
    ("あほの坂田グッズ 限定", "アニメ"),
    ("新米コシヒカリ30kgまとめ売り", "家電"),
    ("おまえをオタクにしてやる 全巻セット", "アニメ"),
]

KEYWORD_POOL = ["ヴィンテージ", "New Era", "ゴルフ", "文庫本", "アニメ", "家電", "デニム"]

# one valid reply per CTA, rotated across users (each 30-45 codepoints,
# exactly one CTA, no prohibited wording)
STUB_SUBJECTS = [
    "春のゴルフ用品とヴィンテージデニムの逸品を集めました",
    "人気ブランドの帽子と限定アニメグッズを見てみませんか",
    "読書の春におすすめの文庫本と随筆の名作をチェックしよう",
    "暮らしを整える人気家電とコーヒー用品をご覧ください",
    "こだわりのヴィンテージデニムと帽子の組合せを探してみよう",
]

LEXICON_ROWS = [
    {"pattern": "30kg", "kind": "block", "reason": "heavy item, needs segmentation", "added_on": "2026-01-05"},
    {"pattern": "あほ", "kind": "block", "reason": "rude and disrespectful", "added_on": "2026-01-05"},
    {"pattern": "おまえ", "kind": "block", "reason": "condescending register", "added_on": "2026-01-05"},
    {"pattern": "バーカ", "kind": "block", "reason": "slang insult", "added_on": "2026-01-05"},
    {"pattern": "シルバーカー", "kind": "allow", "reason": "legitimate mobility product", "added_on": "2026-01-12"},
]


def make_users(n: int, rng: random.Random) -> list[dict]:
    users = []
    for i in range(n):
        uid = f"demo-{i:05d}"
        # roughly half the population matches the lapsed-buyer cohort
        if rng.random() < 0.55:
            access_days = rng.uniform(8, 60)
            purchase_days = rng.uniform(1, 175)
            opt_in = rng.random() > 0.05
        else:
            access_days = rng.choice([rng.uniform(0, 6), rng.uniform(370, 500)])
            purchase_days = rng.uniform(1, 400)
            opt_in = rng.random() > 0.3
        users.append(
            {
                "user_id": uid,
                "last_access_at": format_rfc3339(NOW - timedelta(days=access_days)),
                "first_access_at": format_rfc3339(NOW - timedelta(days=rng.uniform(200, 900) + access_days)),
                "last_purchase_at": format_rfc3339(NOW - timedelta(days=purchase_days)),
                "email_opt_in": opt_in,
            }
        )
    return users


def make_recommendations(users: list[dict], rng: random.Random) -> tuple[list[dict], list[dict]]:
    rec_rows, kw_rows = [], []
    for user in users:
        uid = user["user_id"]
        categories = rng.sample(list(CATALOG), rng.randint(2, 3))
        rank = 1
        for cat in categories:
            for title in rng.sample(CATALOG[cat], rng.randint(1, 2)):
                rec_rows.append(
                    {
                        "user_id": uid,
                        "item_id": f"{uid}-r{rank}",
                        "title": title,
                        "category": cat,
                        "price": rng.randrange(500, 50_000, 100),
                        "rank": rank,
                    }
                )
                rank += 1
        if rng.random() < 0.25:  # sprinkle items the filter must drop
            title, cat = rng.choice(NG_ITEMS)
            rec_rows.append(
                {
                    "user_id": uid,
                    "item_id": f"{uid}-r{rank}",
                    "title": title,
                    "category": cat,
                    "price": rng.randrange(500, 20_000, 100),
                    "rank": rank,
                }
            )
        if rng.random() < 0.6:
            kw_rows.append({"user_id": uid, "keywords": rng.sample(KEYWORD_POOL, rng.randint(1, 2))})
    return rec_rows, kw_rows


def build_config(out: Path) -> dict:
    return {
        "experiment": {"experiment_id": "demo-2026-08", "salt": "demo-salt", "split_fraction": 0.5},
        "cohort": {"users_path": "users.jsonl", "now": format_rfc3339(NOW)},
        "catalog": {
            "recommendations_path": "recommendations.jsonl",
            "keywords_path": "keywords.jsonl",
            "max_categories": 3,
            "max_per_category": 4,
        },
        "lexicon": {"path": "lexicon.jsonl", "mode": "token_aligned"},
        "prompt": {},
        "client": {
            "kind": "stub",
            "fixture_path": "stub_responses.json",
            "model": "demo-model",
            "temperature": 0.7,
            "retry_budget": 2,
            "fallback_enabled": True,
        },
        "delivery": {
            "sink": "file",
            "out_dir": "outbox",
            "events_path": "events.jsonl",
            "workers": 4,
        },
        "engagement": {
            "control": {"open": 0.10, "tap_given_open": 0.25, "purchase_given_open": 0.04},
            "treatment": {"open": 0.12, "tap_given_open": 0.31, "purchase_given_open": 0.045},
        },
        "review": {"store_path": "review_log.jsonl"},
    }


def make_stub_fixture(out: Path, config_path: Path) -> dict:
    """Key one valid reply to each treatment user's exact request."""
    config = load_campaign_config(config_path)
    from subjectforge.catalog import load_recommendations
    from subjectforge.campaign import load_keywords
    from subjectforge.cohort import load_users, select_eligible

    cfg = PromptConfig()
    for subject in STUB_SUBJECTS:
        violations, _ = validate_title(subject, cfg)
        if violations:
            raise SystemExit(f"stub subject violates the prompt rules: {subject} {violations}")

    users = select_eligible(load_users(config.users_path), config.rules, NOW)
    recs = load_recommendations(config.recommendations_path)
    keywords = load_keywords(config.keywords_path)
    lex = compile_lexicon(load_entries(config.lexicon_path))

    fixture: dict = {"__default__": json.dumps({"subject": STUB_SUBJECTS[0]}, ensure_ascii=False)}
    for idx, user in enumerate(users):
        assignment = assign_variant(user.user_id, config.experiment_id, config.salt, config.split_fraction)
        if assignment.variant is not Variant.TREATMENT:
            continue
        kept, _ = filter_items(recs.get(user.user_id, []), lex, config.lexicon_mode)
        if not kept:
            continue
        grouped = group_by_category(kept, config.max_categories, config.max_per_category)
        ctx = build_user_context(user.user_id, keywords.get(user.user_id, []), grouped)
        messages = build_prompt(ctx, cfg)
        key = request_fingerprint("demo-model", messages, 0.7)
        subject = STUB_SUBJECTS[idx % len(STUB_SUBJECTS)]
        fixture[key] = json.dumps({"subject": subject}, ensure_ascii=False)
    return fixture


def main() -> int:
    parser = argparse.ArgumentParser(description="generate demo campaign data")
    parser.add_argument("--out", default="demo")
    parser.add_argument("--users", type=int, default=400)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    users = make_users(args.users, rng)
    write_jsonl(out / "users.jsonl", users)
    rec_rows, kw_rows = make_recommendations(users, rng)
    write_jsonl(out / "recommendations.jsonl", rec_rows)
    write_jsonl(out / "keywords.jsonl", kw_rows)
    write_jsonl(out / "lexicon.jsonl", LEXICON_ROWS)

    config_path = out / "campaign.json"
    config_path.write_text(json.dumps(build_config(out), ensure_ascii=False, indent=2), encoding="utf-8")

    fixture = make_stub_fixture(out, config_path)
    (out / "stub_responses.json").write_text(
        json.dumps(fixture, ensure_ascii=False, indent=2), encoding="utf-8"
    )

    print(f"demo workspace in {out}/")
    print(f"  users: {len(users)}, recommendation rows: {len(rec_rows)}, stubbed replies: {len(fixture) - 1}")
    print(f"  next: python scripts/run_demo.py --demo-dir {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
