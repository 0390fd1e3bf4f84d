"""Second-model screening of generated subjects against a scored rubric.

The judge model returns integer scores per dimension; the pass decision is
always recomputed locally from the rubric thresholds, never trusted from
the model's own output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .catalog import UserContext
from .llmclient import ChatClient, ChatTransportError

SCALE_MIN, SCALE_MAX = 1, 5

DEFAULT_DIMENSIONS = (
    ("appropriateness", "Is the subject appropriate for a broad marketplace audience?"),
    ("family_friendliness", "Is the content safe for all ages?"),
    ("relevance_to_items", "Does the subject reflect the listed items?"),
)


class JudgeUnavailable(RuntimeError):
    pass


class MalformedVerdict(ValueError):
    pass


@dataclass(frozen=True)
class JudgeRubric:
    dimensions: tuple[tuple[str, str], ...] = DEFAULT_DIMENSIONS
    pass_threshold: Mapping[str, int] | int = 3

    def __post_init__(self):
        if not self.dimensions:
            raise ValueError("rubric needs at least one dimension")
        for name in self.dimension_names():
            t = self.threshold_for(name)
            if not SCALE_MIN <= t <= SCALE_MAX:
                raise ValueError(f"threshold for {name} outside scale: {t}")

    def dimension_names(self) -> list[str]:
        return [name for name, _ in self.dimensions]

    def threshold_for(self, dimension: str) -> int:
        if isinstance(self.pass_threshold, int):
            return self.pass_threshold
        return int(self.pass_threshold[dimension])


@dataclass(frozen=True)
class JudgeVerdict:
    scores: Mapping[str, int]
    passed: bool
    rationale: str = ""
    judge_model: str = ""


def compute_pass(scores: Mapping[str, int], rubric: JudgeRubric) -> bool:
    """Pure threshold rule; re-derivable from stored scores at any time."""
    return all(scores[name] >= rubric.threshold_for(name) for name in rubric.dimension_names())


def _judge_messages(subject: str, context_lines: tuple[str, ...], rubric: JudgeRubric) -> list[dict]:
    dims = "\n".join(
        f"- {name} ({SCALE_MIN}-{SCALE_MAX}): {description}"
        for name, description in rubric.dimensions
    )
    system = (
        "You are a strict quality judge for marketing email subject lines.\n"
        f"Score the candidate subject on each dimension from {SCALE_MIN} (worst) "
        f"to {SCALE_MAX} (best):\n{dims}\n"
        "Return only JSON: {\"scores\": {<dimension>: <integer>, ...}, "
        "\"rationale\": \"<one sentence>\"}."
    )
    user = json.dumps(
        {"subject": subject, "context": list(context_lines)}, ensure_ascii=False
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def judge_title(
    subject: str,
    ctx: UserContext | None,
    rubric: JudgeRubric,
    client: ChatClient,
    retry_budget: int = 2,
) -> JudgeVerdict:
    """Score one subject; transport failures are retried, bad JSON is not."""
    context_lines = ctx.context_lines if ctx is not None else ()
    messages = _judge_messages(subject, tuple(context_lines), rubric)
    last_error: Exception | None = None
    raw: str | None = None
    for _ in range(retry_budget + 1):
        try:
            raw = client.complete(messages)
            break
        except ChatTransportError as exc:
            last_error = exc
    if raw is None:
        raise JudgeUnavailable(f"judge transport failed: {last_error}")

    try:
        obj = json.loads(raw.strip())
    except json.JSONDecodeError as exc:
        raise MalformedVerdict(f"judge reply is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedVerdict("judge reply is not a JSON object")
    raw_scores = obj.get("scores", obj)  # tolerate a flat scores object
    if not isinstance(raw_scores, dict):
        raise MalformedVerdict("scores is not an object")

    scores: dict[str, int] = {}
    for name in rubric.dimension_names():
        value = raw_scores.get(name)
        if not isinstance(value, int) or isinstance(value, bool):
            raise MalformedVerdict(f"missing or non-integer score for {name!r}")
        if not SCALE_MIN <= value <= SCALE_MAX:
            raise MalformedVerdict(f"score for {name!r} outside scale: {value}")
        scores[name] = value

    return JudgeVerdict(
        scores=scores,
        passed=compute_pass(scores, rubric),
        rationale=str(obj.get("rationale", "")),
        judge_model=getattr(client, "model", ""),
    )
