"""Command-line entry points for the campaign pipeline and review service.

Usage:
    subjectforge run --config campaign.json [--dry-run]
    subjectforge cohort --config campaign.json [--out assignments.jsonl]
    subjectforge generate --config campaign.json [--limit N] [--out titles.jsonl]
    subjectforge qa-sample --config campaign.json --n 1000 --seed 7
    subjectforge serve-review --config campaign.json [--host H] [--port P]
    subjectforge simulate-engagement --config campaign.json --seed 7
    subjectforge analyze --log events.jsonl --format table
    subjectforge lexicon scan --lexicon lexicon.jsonl --mode substring --text ...
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrics
from .campaign import (
    CampaignConfig,
    generate_records,
    load_campaign_config,
    run_campaign,
)
from .cohort import assign_all, audit_split, load_users, select_eligible
from .delivery import EngagementProbs, sim_engagement
from .lexicon import MatchMode, compile_lexicon, load_entries, scan
from .review import ReviewCandidate, ReviewStore, sample_for_review
from .service import create_app
from .titlegen import ConfigError
from .utils import utcnow, write_jsonl


def _config(args) -> CampaignConfig:
    return load_campaign_config(args.config)


def _review_store(config: CampaignConfig, override: str | None) -> ReviewStore:
    path = Path(override) if override else (config.review_store_path or Path("review_log.jsonl"))
    return ReviewStore(path)


def cmd_run(args) -> int:
    summary = run_campaign(_config(args), dry_run=args.dry_run)
    print(json.dumps(summary.to_dict(), indent=2))
    return 0


def cmd_cohort(args) -> int:
    config = _config(args)
    users = load_users(config.users_path)
    eligible = select_eligible(users, config.rules, config.now or utcnow())
    assignments = assign_all(eligible, config.experiment_id, config.salt, config.split_fraction)
    if args.out:
        write_jsonl(
            args.out,
            (
                {"user_id": a.user_id, "variant": a.variant.value, "bucket": a.bucket}
                for a in assignments
            ),
        )
    report = audit_split(assignments) if assignments else None
    print(
        json.dumps(
            {
                "input_users": len(users),
                "eligible": len(eligible),
                "split": report.to_dict() if report else None,
            },
            indent=2,
        )
    )
    return 0


def cmd_generate(args) -> int:
    config = _config(args)
    records = generate_records(config, limit=args.limit)
    if args.out:
        write_jsonl(args.out, records)
        print(f"wrote {len(records)} title records to {args.out}")
    else:
        for record in records:
            print(json.dumps(record, ensure_ascii=False))
    return 0


def cmd_qa_sample(args) -> int:
    config = _config(args)
    records = generate_records(config, limit=args.limit)
    population = [
        ReviewCandidate(
            id=f"{config.campaign_id}:{r['user_id']}",
            subject=r["subject"],
            context_lines=tuple(r["context_lines"]),
        )
        for r in records
        if r["source"] == "llm" or args.all_sources
    ]
    if not population:
        print("nothing to sample (no llm-generated titles)", file=sys.stderr)
        return 1
    result = sample_for_review(population, args.n, args.seed, iteration=args.iteration)
    store = _review_store(config, args.store)
    added = store.add_items(result.items)
    out = {"sampled": len(result.items), "added": added, "warning": result.warning}
    print(json.dumps(out))
    return 0


def cmd_serve_review(args) -> int:
    import uvicorn

    config = _config(args)
    store = _review_store(config, args.store)
    entries = (
        load_entries(config.lexicon_path, config.lexicon_as_of)
        if config.lexicon_path.exists()
        else []
    )
    static_dir = args.static_dir or config.review_static_dir
    app = create_app(
        store,
        base_entries=entries,
        token=args.token or config.review_token,
        static_dir=static_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_simulate(args) -> int:
    config = _config(args)
    log_path = Path(args.log) if args.log else config.events_path
    probs = EngagementProbs.from_dict(config.engagement)
    counts = sim_engagement(
        log_path, probs, args.seed, attribution_window_hours=args.window_hours
    )
    print(json.dumps(counts))
    return 0


def cmd_analyze(args) -> int:
    results = metrics.analyze(
        args.log,
        tap_denominator=args.tap_denominator,
        attribution_window_hours=args.window_hours,
    )
    if args.format == "json":
        table = metrics.aggregate_rates(args.log, args.window_hours)
        print(metrics.report_json(results, table))
    else:
        print(metrics.render_table(results))
    return 0


def cmd_review(args) -> int:
    # operates on the store directly; do not run against a live service
    config = _config(args)
    store = _review_store(config, args.store)
    from .review import CandidateStatus, ReviewStatus, ReviewTag

    action = args.review_cmd
    if action == "queue":
        status = None if args.status == "all" else ReviewStatus(args.status)
        items, _, counts = store.queue(status, limit=args.limit)
        print(json.dumps({"items": [i.to_dict() for i in items], "counts": counts}, ensure_ascii=False, indent=2))
    elif action == "verdict":
        item = store.record_verdict(
            args.id,
            ReviewStatus(args.verdict),
            [ReviewTag(t) for t in args.tag],
            reviewer=args.reviewer,
            ng_term=args.ng_term,
        )
        print(json.dumps(item.to_dict(), ensure_ascii=False))
    elif action == "reopen":
        print(json.dumps(store.reopen(args.id, args.reviewer).to_dict(), ensure_ascii=False))
    elif action == "report":
        print(json.dumps(store.report().to_dict(), ensure_ascii=False, indent=2))
    elif action == "candidates":
        if args.add:
            cand = store.add_candidate(args.add, args.reason)
            print(json.dumps(cand.to_dict(), ensure_ascii=False))
        elif args.activate:
            print(json.dumps(store.activate_candidate(args.activate).to_dict(), ensure_ascii=False))
        elif args.discard:
            print(json.dumps(store.discard_candidate(args.discard).to_dict(), ensure_ascii=False))
        else:
            status = CandidateStatus(args.status) if args.status else None
            print(
                json.dumps(
                    {"candidates": [c.to_dict() for c in store.candidates(status)]},
                    ensure_ascii=False,
                    indent=2,
                )
            )
    elif action == "promote":
        from .review import promote_examples

        diff = promote_examples(store.items())
        for entry in diff.lexicon_candidates:
            store.add_candidate(entry.pattern, entry.reason)
        print(json.dumps(diff.to_dict(), ensure_ascii=False, indent=2))
    return 0


def cmd_lexicon_scan(args) -> int:
    if args.lexicon:
        entries = load_entries(args.lexicon)
    elif args.config:
        config = load_campaign_config(args.config)
        entries = load_entries(config.lexicon_path, config.lexicon_as_of)
    else:
        print("--lexicon or --config required", file=sys.stderr)
        return 2
    lex = compile_lexicon(entries)
    text = args.text if args.text is not None else sys.stdin.read()
    spans = scan(text, lex, MatchMode(args.mode))
    print(
        json.dumps(
            [
                {
                    "pattern": s.pattern,
                    "start": s.start,
                    "end": s.end,
                    "suppressed_by_allow": s.suppressed_by_allow,
                }
                for s in spans
            ],
            ensure_ascii=False,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subjectforge")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run the full campaign pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cohort", help="select eligible users and audit the split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write assignments JSONL here")
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("generate", help="generate titles without delivering")
    p.add_argument("--config", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", help="write title records JSONL here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("qa-sample", help="sample generated titles into the review queue")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--store", help="review store path (default from config)")
    p.add_argument("--all-sources", action="store_true", help="sample non-LLM titles too")
    p.set_defaults(func=cmd_qa_sample)

    p = sub.add_parser("serve-review", help="start the review REST service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--store", help="review store path (default from config)")
    p.add_argument("--token", help="static bearer token")
    p.add_argument("--static-dir", help="directory with the console SPA build")
    p.set_defaults(func=cmd_serve_review)

    p = sub.add_parser("simulate-engagement", help="append synthetic engagement events")
    p.add_argument("--config", required=True)
    p.add_argument("--log", help="event log (default from config)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-hours", type=float, default=24.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="compute funnel metrics from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--tap-denominator", choices=("opens", "sends"), default="opens")
    p.add_argument("--window-hours", type=float, default=24.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("review", help="drive the review workflow without the console")
    rev_sub = p.add_subparsers(dest="review_cmd", required=True)
    common = {"--config": dict(required=True), "--store": dict(help="review store path")}

    pq = rev_sub.add_parser("queue", help="list review items as JSON")
    pq.add_argument("--status", default="pending", choices=("pending", "approved", "rejected", "all"))
    pq.add_argument("--limit", type=int, default=50)
    pv = rev_sub.add_parser("verdict", help="decide one item")
    pv.add_argument("--id", required=True)
    pv.add_argument("--verdict", required=True, choices=("approved", "rejected"))
    pv.add_argument("--tag", action="append", default=[])
    pv.add_argument("--reviewer", default="cli")
    pv.add_argument("--ng-term")
    pr = rev_sub.add_parser("reopen", help="reopen a decided item (logged)")
    pr.add_argument("--id", required=True)
    pr.add_argument("--reviewer", default="cli")
    rev_sub.add_parser("report", help="print the findings report")
    pc = rev_sub.add_parser("candidates", help="list or edit lexicon candidates")
    pc.add_argument("--status", choices=("candidate", "active", "discarded"))
    pc.add_argument("--add", help="queue a new block pattern")
    pc.add_argument("--reason", default="")
    pc.add_argument("--activate", help="candidate id to activate")
    pc.add_argument("--discard", help="candidate id to discard")
    rev_sub.add_parser("promote", help="derive few-shot/lexicon diff from decided items")
    for sp in (pq, pv, pr, pc, *(rev_sub.choices[c] for c in ("report", "promote"))):
        for flag, kwargs in common.items():
            sp.add_argument(flag, **kwargs)
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("lexicon", help="lexicon tools")
    lex_sub = p.add_subparsers(dest="lexicon_cmd", required=True)
    ps = lex_sub.add_parser("scan", help="scan text and print match spans as JSON")
    ps.add_argument("--lexicon", help="lexicon JSONL path")
    ps.add_argument("--config", help="campaign config (alternative to --lexicon)")
    ps.add_argument("--mode", choices=("substring", "token_aligned"), default="substring")
    ps.add_argument("--text", help="text to scan (stdin when omitted)")
    ps.set_defaults(func=cmd_lexicon_scan)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
