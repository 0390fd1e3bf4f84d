"""Subject-line production for both experiment arms.

Control renders a fixed template around the top recommended item.
Treatment builds a rule-heavy system prompt, calls the chat client with a
small retry budget, parses the JSON reply, and re-checks every rule the
prompt states with mechanical validators; a hard violation burns a retry,
and an exhausted budget falls back to the control template (configurable).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

from .catalog import UserContext, EmptyContext
from .cohort import Variant
from .lexicon import CompiledLexicon, MatchMode, scan
from .llmclient import ChatClient, ChatTransportError, MessageList

DEFAULT_CTA_PHRASES = (
    "を集めました",
    "を見てみませんか",
    "をチェックしよう",
    "をご覧ください",
    "を探してみよう",
)

DEFAULT_PROHIBITED_TERMS = ("特集", "セクシー")

DEFAULT_CONTROL_TEMPLATE = "'{item}' and other items are currently on sale right now"

RULE_GROUPS = (
    "technical_parameters",
    "content_structure",
    "tone_style",
    "cta_guidelines",
    "prohibited_elements",
)

DEFAULT_SYSTEM_RULES: Mapping[str, str] = {
    "technical_parameters": (
        "Write one email subject line in Japanese only."
    ),
    "content_structure": (
        "Combine products only when they share a category or audience "
        "(e.g. ゴルフクラブとゴルフシューズ, never ゴルフクラブと料理本).\n"
        "Effective shapes: product + brand + feature + CTA / "
        "category + benefit + CTA / limited-time angle + product + CTA.\n"
        "Vary the opening instead of always leading with a product name: "
        "questions (あなたの〇〇をアップグレードしませんか？), statements "
        "(こだわりの〇〇が新登場), implied benefits (快適な〇〇体験をお届け)."
    ),
    "tone_style": (
        "Keep a professional yet approachable voice that reflects quality "
        "merchandising.\n"
        "Match the wording to the audience the items suggest (collectors, "
        "beginners, enthusiasts).\n"
        "Subtle seasonal touches are welcome; never explicit dates."
    ),
    "cta_guidelines": (
        "Use exactly one call-to-action phrase per subject line, chosen "
        "from the rotation below."
    ),
    "prohibited_elements": (
        "Never include adult or suggestive content, gambling references, "
        "manipulative language, counterfeit goods, misleading health "
        "claims, or financial promotions such as discounts and coupons.\n"
        "No excessive punctuation (!!!, ???) and no trailing promotional "
        "tails like 特別なセット！.\n"
        "Keep character width consistent and use 「＆」, never mixed with 「&」."
    ),
}


class TitleSource(str, Enum):
    LLM = "llm"
    TEMPLATE = "template"
    FALLBACK = "fallback"


class ViolationCode(str, Enum):
    LENGTH_MAX = "LengthMax"
    LENGTH_MIN = "LengthMin"
    CTA_COUNT = "CtaCount"
    PROHIBITED_TERM = "ProhibitedTerm"
    MIXED_WIDTH_SYMBOLS = "MixedWidthSymbols"
    EMPTY_SUBJECT = "EmptySubject"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    detail: str = ""


class EmptyItemTitle(ValueError):
    pass


class MissingPlaceholder(ValueError):
    pass


class ConfigError(ValueError):
    pass


class SubjectParseError(ValueError):
    """Base for failures extracting the subject from a model reply."""


class MalformedResponse(SubjectParseError):
    pass


class MissingSubject(SubjectParseError):
    pass


class EmptySubject(SubjectParseError):
    pass


class Exhausted(RuntimeError):
    def __init__(self, last_error: Exception | None, attempts: int):
        super().__init__(f"retry budget exhausted after {attempts} attempts: {last_error}")
        self.last_error = last_error
        self.attempts = attempts


class GenerationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class FewShotExample:
    subject: str
    input_lines: tuple[str, ...] = ()
    positive: bool = True
    note: str = ""


DEFAULT_FEW_SHOT = (
    FewShotExample(subject="新作ゴルフウェア＆プロ愛用クラブを集めました"),
    FewShotExample(subject="春の読書におすすめの文庫本をご覧ください"),
    FewShotExample(subject="人気アニメキャラクターグッズをチェックしよう"),
    FewShotExample(
        subject="米米CLUBのDVDコレクションを見てみませんか？",
        positive=False,
        note="too generic",
    ),
    FewShotExample(
        subject="シルクスイートとじゃがいもを探してみよう",
        positive=False,
        note="unrelated items",
    ),
    FewShotExample(
        subject="美しい小皿や仏像をチェックしよう！心安らぐ商品が勢揃い",
        positive=False,
        note="too verbose",
    ),
    FewShotExample(
        subject="アメリカ製ヴィンテージLeeデニムをご覧ください",
        input_lines=(
            "検索キーワード：ヴィンテージ 商品例：Leeの90年代デニムジーンズ USA製",
            "検索キーワード：New Era 商品例：ニューヨーク・メッツ 帽子 サイズ7 1/8",
        ),
    ),
)


@dataclass(frozen=True)
class PromptConfig:
    length_min: int = 30
    length_max: int = 45
    cta_phrases: tuple[str, ...] = DEFAULT_CTA_PHRASES
    prohibited_terms: tuple[str, ...] = DEFAULT_PROHIBITED_TERMS
    system_rules: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_SYSTEM_RULES))
    few_shot: tuple[FewShotExample, ...] = DEFAULT_FEW_SHOT
    # the stated minimum is advisory: known-good short subjects exist
    length_min_is_hard: bool = False
    item_title_max: int = 25

    def __post_init__(self):
        if not self.cta_phrases:
            raise ConfigError("cta_phrases must be non-empty")
        if len(set(self.cta_phrases)) != len(self.cta_phrases):
            raise ConfigError("cta_phrases must be pairwise distinct")
        if self.length_min > self.length_max:
            raise ConfigError("length_min must not exceed length_max")
        missing = [g for g in RULE_GROUPS if g not in self.system_rules]
        if missing:
            raise ConfigError(f"system_rules missing groups: {missing}")


@dataclass(frozen=True)
class TitleCandidate:
    subject: str
    raw_response: str
    attempt: int


@dataclass(frozen=True)
class TitleResult:
    subject: str
    source: TitleSource
    attempts: int
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()


def render_template_title(
    first_item_title: str,
    template: str = DEFAULT_CONTROL_TEMPLATE,
    item_title_max: int = 25,
) -> str:
    """Substitute the top item into the control template, truncating long titles."""
    title = first_item_title.strip()
    if not title:
        raise EmptyItemTitle("first item title is empty")
    if "{item}" not in template:
        raise MissingPlaceholder("template has no {item} placeholder")
    if len(title) > item_title_max:
        title = title[:item_title_max] + "…"
    return template.replace("{item}", title, 1)


def _render_system_message(cfg: PromptConfig) -> str:
    sections = []
    sections.append(
        "You are an expert copywriter AI that crafts engaging thematic "
        "email subject lines in Japanese for a marketplace's item "
        "recommendation emails."
    )
    technical = [
        cfg.system_rules["technical_parameters"],
        f"Keep the subject between {cfg.length_min} and {cfg.length_max} characters "
        "so it stays fully visible in every client.",
        'Return only JSON of the form {"subject":"○○"} with no other text.',
    ]
    sections.append("## TECHNICAL PARAMETERS\n" + "\n".join(technical))
    sections.append("## CONTENT STRUCTURE\n" + cfg.system_rules["content_structure"])
    sections.append("## TONE & STYLE\n" + cfg.system_rules["tone_style"])
    cta = [cfg.system_rules["cta_guidelines"], "CTA rotation:"]
    cta += [f"- {phrase}" for phrase in cfg.cta_phrases]
    sections.append("## CTA GUIDELINES\n" + "\n".join(cta))
    prohibited = [cfg.system_rules["prohibited_elements"]]
    if cfg.prohibited_terms:
        prohibited.append("Never use these terms, even when they appear in the input:")
        prohibited += [f"- {term}" for term in cfg.prohibited_terms]
    sections.append("## PROHIBITED ELEMENTS\n" + "\n".join(prohibited))

    if cfg.few_shot:
        lines = ["## EXAMPLES"]
        for ex in cfg.few_shot:
            verdict = "GOOD" if ex.positive else "AVOID"
            note = f" ({ex.note})" if ex.note else ""
            rendered = json.dumps({"subject": ex.subject}, ensure_ascii=False)
            if ex.input_lines:
                lines.append(f"{verdict}{note}:")
                lines.append("Input: " + json.dumps(list(ex.input_lines), ensure_ascii=False))
                lines.append("Output: " + rendered)
            else:
                lines.append(f"{verdict}{note}: {rendered}")
        sections.append("\n".join(lines))

    return "\n\n".join(sections)


def build_prompt(ctx: UserContext, cfg: PromptConfig) -> MessageList:
    """Assemble the system and user messages; byte-stable for fixed inputs.

    The user message is the JSON array of context lines, exactly as the
    model is expected to see it.
    """
    if not ctx.context_lines:
        raise EmptyContext(f"user {ctx.user_id}: no context lines")
    return [
        {"role": "system", "content": _render_system_message(cfg)},
        {"role": "user", "content": json.dumps(list(ctx.context_lines), ensure_ascii=False)},
    ]


def parse_subject_json(raw: str) -> str:
    """Extract the "subject" value from a model reply, tolerating code fences."""
    text = raw.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1:
            text = text[first_newline + 1 :]
        else:
            text = text[3:]
        if text.rstrip().endswith("```"):
            text = text.rstrip()[:-3]
        text = text.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedResponse("not a JSON object")
    if "subject" not in obj:
        raise MissingSubject('no "subject" field')
    subject = obj["subject"]
    if not isinstance(subject, str):
        raise MalformedResponse("subject is not a string")
    if not subject.strip():
        raise EmptySubject("subject is empty")
    return subject


def validate_title(
    subject: str,
    cfg: PromptConfig,
    lex: CompiledLexicon | None = None,
    mode: MatchMode = MatchMode.SUBSTRING,
) -> tuple[list[Violation], list[Violation]]:
    """Re-check the prompt's rules mechanically; returns (violations, warnings).

    Length is counted in Unicode codepoints (full-width characters count
    as one). The short-length finding is a warning unless configured hard.
    """
    if not subject.strip():
        return [Violation(ViolationCode.EMPTY_SUBJECT)], []

    violations: list[Violation] = []
    warnings: list[Violation] = []
    length = len(subject)
    if length > cfg.length_max:
        violations.append(
            Violation(ViolationCode.LENGTH_MAX, f"{length} codepoints > {cfg.length_max}")
        )
    if length < cfg.length_min:
        finding = Violation(ViolationCode.LENGTH_MIN, f"{length} codepoints < {cfg.length_min}")
        (violations if cfg.length_min_is_hard else warnings).append(finding)

    cta_hits = [(p, subject.count(p)) for p in cfg.cta_phrases if p in subject]
    total_ctas = sum(n for _, n in cta_hits)
    if total_ctas != 1:
        found = ", ".join(f"{p}×{n}" for p, n in cta_hits) or "none"
        violations.append(Violation(ViolationCode.CTA_COUNT, f"expected exactly 1 CTA, found {found}"))

    for term in cfg.prohibited_terms:
        for _ in range(subject.count(term)):
            violations.append(Violation(ViolationCode.PROHIBITED_TERM, term))
    if lex is not None:
        for span in scan(subject, lex, mode):
            if not span.suppressed_by_allow:
                violations.append(
                    Violation(
                        ViolationCode.PROHIBITED_TERM,
                        f"{span.pattern} at {span.start}..{span.end}",
                    )
                )

    if "＆" in subject and "&" in subject:
        violations.append(Violation(ViolationCode.MIXED_WIDTH_SYMBOLS, "both ＆ and & present"))

    return violations, warnings


def request_title(
    client: ChatClient,
    messages: MessageList,
    retry_budget: int = 2,
    backoff: Sequence[float] = (),
    sleep: Callable[[float], None] = time.sleep,
) -> TitleCandidate:
    """Call the chat client until a parseable subject comes back.

    Transport errors, non-2xx statuses, and unparseable bodies each burn
    one of the ``retry_budget + 1`` attempts; the attempt number of the
    success is recorded on the candidate.
    """
    if retry_budget < 0:
        raise ConfigError("retry_budget must be >= 0")
    last_error: Exception | None = None
    for attempt in range(1, retry_budget + 2):
        try:
            raw = client.complete(messages)
            return TitleCandidate(subject=parse_subject_json(raw), raw_response=raw, attempt=attempt)
        except (ChatTransportError, SubjectParseError) as exc:
            last_error = exc
            if attempt <= retry_budget and backoff:
                delay = backoff[min(attempt - 1, len(backoff) - 1)]
                if delay > 0:
                    sleep(delay)
    raise Exhausted(last_error, attempts=retry_budget + 1)


def generate_title(
    ctx: UserContext,
    variant,
    *,
    client: ChatClient | None = None,
    cfg: PromptConfig,
    lex: CompiledLexicon | None = None,
    template: str = DEFAULT_CONTROL_TEMPLATE,
    retry_budget: int = 2,
    fallback_enabled: bool = True,
    mode: MatchMode = MatchMode.SUBSTRING,
    backoff: Sequence[float] = (),
    sleep: Callable[[float], None] = time.sleep,
) -> TitleResult:
    """Produce the released subject line for one user.

    Control renders the template (attempts=0). Treatment keeps requesting
    until a candidate passes validation; hard violations consume retries
    from the same budget as transport failures, so delivery timing stays
    bounded. Released results always carry zero violations.
    """

    def template_subject() -> str:
        first = ctx.first_item_title()
        if first is None:
            raise EmptyItemTitle(f"user {ctx.user_id}: no items for template title")
        return render_template_title(first, template, cfg.item_title_max)

    if Variant(variant) is Variant.CONTROL:
        return TitleResult(subject=template_subject(), source=TitleSource.TEMPLATE, attempts=0)

    if client is None:
        raise ConfigError("treatment generation requires a chat client")
    messages = build_prompt(ctx, cfg)
    attempts_used = 0
    last_failure: Exception | list[Violation] | None = None
    while attempts_used <= retry_budget:
        try:
            candidate = request_title(
                client, messages, retry_budget - attempts_used, backoff, sleep
            )
        except Exhausted as exc:
            attempts_used += exc.attempts
            last_failure = exc.last_error
            break
        attempts_used += candidate.attempt
        violations, warnings = validate_title(candidate.subject, cfg, lex, mode)
        if not violations:
            return TitleResult(
                subject=candidate.subject,
                source=TitleSource.LLM,
                attempts=attempts_used,
                warnings=tuple(warnings),
            )
        last_failure = violations

    if fallback_enabled:
        return TitleResult(
            subject=template_subject(),
            source=TitleSource.FALLBACK,
            attempts=retry_budget + 1,
        )
    raise GenerationFailed(
        f"user {ctx.user_id}: treatment generation exhausted after "
        f"{retry_budget + 1} attempts ({last_failure})"
    )
