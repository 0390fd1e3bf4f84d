"""Campaign configuration and end-to-end orchestration.

One config JSON drives the whole run: cohort selection, assignment,
recommendation ingestion, sensitive-word filtering, title generation,
optional judging, assembly, and delivery. Per-user stages run in a bounded
worker pool; one user's failure becomes a SendFailed event, never an
aborted run.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any

from .catalog import (
    RecommendedItem,
    build_user_context,
    group_by_category,
    load_recommendations,
    EmptyContext,
)
from .cohort import (
    Assignment,
    CohortRules,
    Variant,
    assign_variant,
    load_users,
    select_eligible,
)
from .delivery import (
    DEFAULT_DISCLOSURE,
    EventLogWriter,
    EventRecord,
    EventType,
    FileSink,
    NoItemsRemaining,
    NullSink,
    WebhookSink,
    assemble_email,
    deliver,
    sent_user_ids,
)
from .judge import JudgeRubric, judge_title
from .lexicon import CompiledLexicon, MatchMode, compile_lexicon, filter_items, load_entries
from .llmclient import FileStubClient, HttpChatClient
from .titlegen import (
    ConfigError,
    DEFAULT_CONTROL_TEMPLATE,
    EmptyItemTitle,
    FewShotExample,
    GenerationFailed,
    PromptConfig,
    TitleSource,
    generate_title,
)
from .utils import iter_jsonl, parse_rfc3339, utcnow

log = logging.getLogger(__name__)


@dataclass
class CampaignConfig:
    experiment_id: str
    salt: str
    split_fraction: float
    users_path: Path
    rules: CohortRules
    now: datetime | None
    recommendations_path: Path
    keywords_path: Path | None
    max_categories: int
    max_per_category: int
    lexicon_path: Path
    lexicon_mode: MatchMode
    lexicon_as_of: date | None
    prompt: PromptConfig
    control_template: str
    client_kind: str
    client_options: dict
    retry_budget: int
    backoff: tuple[float, ...]
    fallback_enabled: bool
    sink_kind: str
    sink_options: dict
    events_path: Path
    disclosure_policy: str
    disclosure_text: str
    body_template_id: str
    judge_enabled: bool
    judge_blocking: bool
    workers: int
    engagement: dict = field(default_factory=dict)
    review_store_path: Path | None = None
    review_token: str | None = None
    review_static_dir: Path | None = None

    @property
    def campaign_id(self) -> str:
        return self.experiment_id


def _require(section: dict, section_name: str, key: str) -> Any:
    if key not in section:
        raise ConfigError(f"{section_name}.{key}")
    return section[key]


def load_campaign_config(path: str | Path) -> CampaignConfig:
    """Parse and validate the campaign JSON; missing fields name their path."""
    base = Path(path).parent
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    for section in ("cohort", "catalog", "lexicon", "client", "delivery", "experiment"):
        if section not in raw:
            raise ConfigError(section)

    cohort = raw["cohort"]
    catalog = raw["catalog"]
    lexicon = raw["lexicon"]
    prompt = raw.get("prompt", {})
    client = raw["client"]
    delivery = raw["delivery"]
    experiment = raw["experiment"]

    rules_raw = cohort.get("rules", {})
    try:
        rules = CohortRules(
            inactive_days_min=int(rules_raw.get("inactive_days_min", 7)),
            active_within_days=int(rules_raw.get("active_within_days", 365)),
            purchased_within_days=int(rules_raw.get("purchased_within_days", 180)),
            require_opt_in=bool(rules_raw.get("require_opt_in", True)),
        )
    except ValueError as exc:
        raise ConfigError(f"cohort.rules: {exc}") from exc

    few_shot_raw = prompt.get("few_shot")
    prompt_kwargs: dict = {}
    if few_shot_raw is not None:
        prompt_kwargs["few_shot"] = tuple(
            FewShotExample(
                subject=ex["subject"],
                input_lines=tuple(ex.get("input_lines", ())),
                positive=bool(ex.get("positive", True)),
                note=ex.get("note", ""),
            )
            for ex in few_shot_raw
        )
    if "cta_phrases" in prompt:
        prompt_kwargs["cta_phrases"] = tuple(prompt["cta_phrases"])
    if "prohibited_terms" in prompt:
        prompt_kwargs["prohibited_terms"] = tuple(prompt["prohibited_terms"])
    try:
        prompt_cfg = PromptConfig(
            length_min=int(prompt.get("length_min", 30)),
            length_max=int(prompt.get("length_max", 45)),
            length_min_is_hard=bool(prompt.get("length_min_is_hard", False)),
            item_title_max=int(prompt.get("item_title_max", 25)),
            **prompt_kwargs,
        )
    except ConfigError as exc:
        raise ConfigError(f"prompt: {exc}") from exc

    client_kind = _require(client, "client", "kind")
    if client_kind not in ("stub", "http"):
        raise ConfigError(f"client.kind: unknown {client_kind!r}")
    client_options = dict(client)
    client_options.pop("kind", None)
    for policy_key in ("retry_budget", "backoff", "fallback_enabled"):
        client_options.pop(policy_key, None)
    if client_kind == "stub":
        fixture = _require(client, "client", "fixture_path")
        client_options["fixture_path"] = resolve(fixture)
    else:
        _require(client, "client", "base_url")
        _require(client, "client", "model")

    sink_kind = delivery.get("sink", "file")
    if sink_kind not in ("file", "null", "webhook"):
        raise ConfigError(f"delivery.sink: unknown {sink_kind!r}")
    sink_options: dict = {}
    if sink_kind == "file":
        sink_options["out_dir"] = resolve(delivery.get("out_dir", "outbox"))
    elif sink_kind == "webhook":
        sink_options["url"] = _require(delivery, "delivery", "url")
    judge_raw = delivery.get("judge", {})
    review_raw = raw.get("review", {})

    return CampaignConfig(
        experiment_id=str(_require(experiment, "experiment", "experiment_id")),
        salt=str(_require(experiment, "experiment", "salt")),
        split_fraction=float(experiment.get("split_fraction", 0.5)),
        users_path=resolve(_require(cohort, "cohort", "users_path")),
        rules=rules,
        now=parse_rfc3339(cohort["now"]) if cohort.get("now") else None,
        recommendations_path=resolve(_require(catalog, "catalog", "recommendations_path")),
        keywords_path=resolve(catalog["keywords_path"]) if catalog.get("keywords_path") else None,
        max_categories=int(catalog.get("max_categories", 3)),
        max_per_category=int(catalog.get("max_per_category", 4)),
        lexicon_path=resolve(_require(lexicon, "lexicon", "path")),
        lexicon_mode=MatchMode(lexicon.get("mode", "substring")),
        lexicon_as_of=date.fromisoformat(lexicon["as_of"]) if lexicon.get("as_of") else None,
        prompt=prompt_cfg,
        control_template=prompt.get("control_template", DEFAULT_CONTROL_TEMPLATE),
        client_kind=client_kind,
        client_options=client_options,
        retry_budget=int(client.get("retry_budget", 2)),
        backoff=tuple(client.get("backoff", ())),
        fallback_enabled=bool(client.get("fallback_enabled", True)),
        sink_kind=sink_kind,
        sink_options=sink_options,
        events_path=resolve(_require(delivery, "delivery", "events_path")),
        disclosure_policy=delivery.get("disclosure", "all"),
        disclosure_text=delivery.get("disclosure_text", DEFAULT_DISCLOSURE),
        body_template_id=delivery.get("body_template_id", "default-body"),
        judge_enabled=bool(judge_raw.get("enabled", False)),
        judge_blocking=bool(judge_raw.get("blocking", False)),
        workers=int(delivery.get("workers", 4)),
        engagement=raw.get("engagement", {}),
        review_store_path=resolve(review_raw["store_path"]) if review_raw.get("store_path") else None,
        review_token=review_raw.get("token"),
        review_static_dir=resolve(review_raw["static_dir"]) if review_raw.get("static_dir") else None,
    )


def make_client(config: CampaignConfig):
    opts = config.client_options
    if config.client_kind == "stub":
        return FileStubClient(
            fixture_path=opts["fixture_path"],
            model=opts.get("model", "stub-model"),
            temperature=float(opts.get("temperature", 0.7)),
            rate_limit_rps=opts.get("rate_limit_rps"),
        )
    return HttpChatClient(
        base_url=opts["base_url"],
        model=opts["model"],
        temperature=float(opts.get("temperature", 0.7)),
        max_tokens=int(opts.get("max_tokens", 128)),
        timeout=float(opts.get("timeout", 30.0)),
        rate_limit_rps=opts.get("rate_limit_rps"),
    )


def make_sink(config: CampaignConfig, dry_run: bool):
    if dry_run or config.sink_kind == "null":
        return NullSink()
    if config.sink_kind == "file":
        return FileSink(config.sink_options["out_dir"])
    return WebhookSink(config.sink_options["url"])


def load_keywords(path: Path | None) -> dict[str, list[str]]:
    if path is None:
        return {}
    result: dict[str, list[str]] = {}
    for _, obj in iter_jsonl(path):
        result[str(obj["user_id"])] = [str(k) for k in obj.get("keywords", ())]
    return result


@dataclass
class CampaignSummary:
    input_users: int = 0
    eligible: int = 0
    resumed_skipped: int = 0
    targeted: int = 0
    assigned: dict = field(default_factory=lambda: {"control": 0, "treatment": 0})
    items_seen: int = 0
    items_dropped: int = 0
    users_no_items: int = 0
    generated: dict = field(default_factory=lambda: {"llm": 0, "template": 0, "fallback": 0})
    generation_failed: int = 0
    judge_rejected: int = 0
    sent: int = 0
    send_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "input_users": self.input_users,
            "eligible": self.eligible,
            "resumed_skipped": self.resumed_skipped,
            "targeted": self.targeted,
            "assigned": dict(self.assigned),
            "items_seen": self.items_seen,
            "items_dropped": self.items_dropped,
            "users_no_items": self.users_no_items,
            "generated": dict(self.generated),
            "generation_failed": self.generation_failed,
            "judge_rejected": self.judge_rejected,
            "sent": self.sent,
            "send_failed": self.send_failed,
        }


@dataclass
class _UserOutcome:
    variant: Variant
    items_seen: int = 0
    items_dropped: int = 0
    no_items: bool = False
    source: TitleSource | None = None
    generation_failed: bool = False
    judge_rejected: bool = False
    sent: bool = False


def _process_user(
    user_id: str,
    assignment: Assignment,
    config: CampaignConfig,
    recs: dict[str, list[RecommendedItem]],
    keywords: dict[str, list[str]],
    lex: CompiledLexicon,
    client,
    sink,
    writer: EventLogWriter,
) -> _UserOutcome:
    outcome = _UserOutcome(variant=assignment.variant)
    campaign_id = config.campaign_id
    now = utcnow()
    writer.append(
        EventRecord(
            ts=now,
            campaign_id=campaign_id,
            user_id=user_id,
            variant=assignment.variant,
            event=EventType.TARGETED,
        )
    )

    def fail(reason: str, extra: dict | None = None) -> _UserOutcome:
        meta = {"reason": reason}
        if extra:
            meta.update(extra)
        if sink is not None and getattr(sink, "dry_run", False):
            meta["dry_run"] = True
        writer.append(
            EventRecord(
                ts=utcnow(),
                campaign_id=campaign_id,
                user_id=user_id,
                variant=assignment.variant,
                event=EventType.SEND_FAILED,
                meta=meta,
            )
        )
        return outcome

    items = recs.get(user_id, [])
    outcome.items_seen = len(items)
    kept, dropped = filter_items(items, lex, config.lexicon_mode)
    outcome.items_dropped = len(dropped)
    if not kept:
        outcome.no_items = True
        return fail("no_items_remaining")

    grouped = group_by_category(kept, config.max_categories, config.max_per_category)
    try:
        ctx = build_user_context(user_id, keywords.get(user_id, []), grouped)
        title = generate_title(
            ctx,
            assignment.variant,
            client=client,
            cfg=config.prompt,
            lex=lex,
            template=config.control_template,
            retry_budget=config.retry_budget,
            fallback_enabled=config.fallback_enabled,
            mode=config.lexicon_mode,
            backoff=config.backoff,
        )
    except (GenerationFailed, EmptyItemTitle, EmptyContext) as exc:
        outcome.generation_failed = True
        return fail("generation_failed", {"error": str(exc)})
    outcome.source = title.source

    if config.judge_enabled and title.source is TitleSource.LLM:
        try:
            verdict = judge_title(title.subject, ctx, JudgeRubric(), client)
            if not verdict.passed and config.judge_blocking:
                outcome.judge_rejected = True
                return fail("judge_rejected", {"scores": dict(verdict.scores)})
        except Exception as exc:  # advisory stage: never blocks on judge trouble
            log.warning("judge unavailable for user %s: %s", user_id, exc)

    try:
        email = assemble_email(
            title,
            kept,
            config.body_template_id,
            campaign_id=campaign_id,
            user_id=user_id,
            variant=assignment.variant,
            disclosure_policy=config.disclosure_policy,
            disclosure_text=config.disclosure_text,
        )
    except NoItemsRemaining:
        outcome.no_items = True
        return fail("no_items_remaining")

    record = deliver(email, sink, campaign_id)
    writer.append(record)
    outcome.sent = record.event is EventType.SENT
    return outcome


def run_campaign(config: CampaignConfig, dry_run: bool = False) -> CampaignSummary:
    """Execute the full pipeline; every processed user ends Sent or SendFailed.

    A --dry-run invocation delivers to the null sink and logs to a sibling
    events file, so previews never mark users as already delivered.
    """
    summary = CampaignSummary()
    users = load_users(config.users_path)
    summary.input_users = len(users)
    now = config.now or utcnow()
    eligible = select_eligible(users, config.rules, now)
    summary.eligible = len(eligible)

    events_path = config.events_path
    if dry_run:
        events_path = events_path.with_name(events_path.stem + ".dry-run" + events_path.suffix)
    done: set[str] = set()
    if events_path.exists():
        done = sent_user_ids(events_path, config.campaign_id)

    recs = load_recommendations(config.recommendations_path)
    keywords = load_keywords(config.keywords_path)
    entries = load_entries(config.lexicon_path, config.lexicon_as_of)
    lex = compile_lexicon(entries)
    client = make_client(config)
    sink = make_sink(config, dry_run)

    with EventLogWriter(events_path) as writer:
        pending = []
        for user in eligible:
            if user.user_id in done:
                summary.resumed_skipped += 1
                continue
            assignment = assign_variant(
                user.user_id, config.experiment_id, config.salt, config.split_fraction
            )
            summary.assigned[assignment.variant.value] += 1
            pending.append((user.user_id, assignment))

        def worker(entry) -> _UserOutcome:
            user_id, assignment = entry
            try:
                return _process_user(
                    user_id, assignment, config, recs, keywords, lex, client, sink, writer
                )
            except Exception as exc:  # tolerate per-user failures
                log.exception("user %s failed", user_id)
                outcome = _UserOutcome(variant=assignment.variant)
                writer.append(
                    EventRecord(
                        ts=utcnow(),
                        campaign_id=config.campaign_id,
                        user_id=user_id,
                        variant=assignment.variant,
                        event=EventType.SEND_FAILED,
                        meta={"reason": "internal_error", "error": str(exc)},
                    )
                )
                return outcome

        if config.workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                outcomes = list(pool.map(worker, pending))
        else:
            outcomes = [worker(entry) for entry in pending]

    for outcome in outcomes:
        summary.targeted += 1
        summary.items_seen += outcome.items_seen
        summary.items_dropped += outcome.items_dropped
        if outcome.no_items:
            summary.users_no_items += 1
        if outcome.source is not None:
            summary.generated[outcome.source.value] += 1
        if outcome.generation_failed:
            summary.generation_failed += 1
        if outcome.judge_rejected:
            summary.judge_rejected += 1
        if outcome.sent:
            summary.sent += 1
        else:
            summary.send_failed += 1
    return summary


def generate_records(config: CampaignConfig, limit: int | None = None) -> list[dict]:
    """Run the pipeline up to title generation; used by `generate`/`qa-sample`."""
    users = load_users(config.users_path)
    now = config.now or utcnow()
    eligible = select_eligible(users, config.rules, now)
    if limit is not None:
        eligible = eligible[:limit]
    recs = load_recommendations(config.recommendations_path)
    keywords = load_keywords(config.keywords_path)
    lex = compile_lexicon(load_entries(config.lexicon_path, config.lexicon_as_of))
    client = make_client(config)

    results = []
    for user in eligible:
        assignment = assign_variant(
            user.user_id, config.experiment_id, config.salt, config.split_fraction
        )
        kept, _ = filter_items(recs.get(user.user_id, []), lex, config.lexicon_mode)
        if not kept:
            continue
        grouped = group_by_category(kept, config.max_categories, config.max_per_category)
        try:
            ctx = build_user_context(user.user_id, keywords.get(user.user_id, []), grouped)
            title = generate_title(
                ctx,
                assignment.variant,
                client=client,
                cfg=config.prompt,
                lex=lex,
                template=config.control_template,
                retry_budget=config.retry_budget,
                fallback_enabled=config.fallback_enabled,
                mode=config.lexicon_mode,
                backoff=config.backoff,
            )
        except (GenerationFailed, EmptyItemTitle, EmptyContext):
            continue
        results.append(
            {
                "user_id": user.user_id,
                "variant": assignment.variant.value,
                "subject": title.subject,
                "source": title.source.value,
                "attempts": title.attempts,
                "warnings": [f"{w.code.value}: {w.detail}" for w in title.warnings],
                "context_lines": list(ctx.context_lines),
            }
        )
    return results
