"""Recommendation ingestion and prompt-context construction.

Items arrive ranked per user; we bucket titles by category (best rank
first) and emit the context lines the title generator feeds to the model:

    検索キーワード：{keyword} 商品例：{item title}

Keywords pair positionally with the grouped titles; a missing side yields
a keyword-only or item-only line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .utils import JsonlError, iter_jsonl

KEYWORD_PREFIX = "検索キーワード："
ITEM_PREFIX = "商品例："


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DuplicateRank(ValueError):
    def __init__(self, user_id: str, rank: int):
        super().__init__(f"user {user_id}: duplicate rank {rank}")
        self.user_id = user_id


class EmptyContext(ValueError):
    pass


@dataclass(frozen=True)
class RecommendedItem:
    item_id: str
    title: str
    category: str
    price: int
    rank: int

    def __post_init__(self):
        if not self.title.strip():
            raise ValueError(f"item {self.item_id}: empty title")
        if self.price < 0:
            raise ValueError(f"item {self.item_id}: negative price")
        if self.rank < 1:
            raise ValueError(f"item {self.item_id}: rank must be >= 1")


@dataclass(frozen=True)
class UserContext:
    user_id: str
    search_keywords: tuple[str, ...]
    grouped_items: tuple[tuple[str, tuple[str, ...]], ...]  # (category, titles)
    context_lines: tuple[str, ...]

    def flat_titles(self) -> list[str]:
        return [t for _, titles in self.grouped_items for t in titles]

    def first_item_title(self) -> str | None:
        for _, titles in self.grouped_items:
            if titles:
                return titles[0]
        return None


_ITEM_FIELDS = ("user_id", "item_id", "title", "category", "price", "rank")


def load_recommendations(path: str | Path) -> dict[str, list[RecommendedItem]]:
    """Read a JSONL recommendations file into rank-sorted per-user lists.

    Repeats of the same (user, item) keep the better (lower) rank; two
    distinct items on the same rank are an error.
    """
    per_user: dict[str, dict[str, RecommendedItem]] = {}
    try:
        for lineno, obj in iter_jsonl(path):
            if not isinstance(obj, dict):
                raise ParseError(lineno, "expected an object")
            for name in _ITEM_FIELDS:
                if name not in obj:
                    raise ParseError(lineno, f"missing field {name!r}")
            try:
                item = RecommendedItem(
                    item_id=str(obj["item_id"]),
                    title=str(obj["title"]),
                    category=str(obj["category"]),
                    price=int(obj["price"]),
                    rank=int(obj["rank"]),
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(lineno, str(exc)) from exc
            user_id = str(obj["user_id"])
            bucket = per_user.setdefault(user_id, {})
            prior = bucket.get(item.item_id)
            if prior is None or item.rank < prior.rank:
                bucket[item.item_id] = item
    except JsonlError as exc:
        raise ParseError(exc.lineno, "invalid JSON") from exc

    result: dict[str, list[RecommendedItem]] = {}
    for user_id, items in per_user.items():
        ordered = sorted(items.values(), key=lambda it: it.rank)
        for a, b in zip(ordered, ordered[1:]):
            if a.rank == b.rank:
                raise DuplicateRank(user_id, a.rank)
        result[user_id] = ordered
    return result


def group_by_category(
    items: Sequence[RecommendedItem],
    max_categories: int = 3,
    max_per_category: int = 4,
) -> list[tuple[str, list[str]]]:
    """Bucket rank-sorted items by category, capped to bound prompt size.

    Categories are ordered by their best contained rank; within a category
    titles keep rank order. Only the top ``max_categories`` categories are
    kept, each truncated to ``max_per_category`` titles.
    """
    by_category: dict[str, list[RecommendedItem]] = {}
    order: list[str] = []
    for item in items:
        if item.category not in by_category:
            by_category[item.category] = []
            order.append(item.category)
        by_category[item.category].append(item)
    grouped = []
    for category in order[:max_categories]:
        titles = [it.title for it in by_category[category][:max_per_category]]
        grouped.append((category, titles))
    return grouped


def build_user_context(
    user_id: str,
    search_keywords: Sequence[str],
    grouped: Sequence[tuple[str, Sequence[str]]],
) -> UserContext:
    """Render the context lines pairing the i-th keyword with the i-th title."""
    flat = [t for _, titles in grouped for t in titles]
    keywords = [k for k in search_keywords if k.strip()]
    if not flat and not keywords:
        raise EmptyContext(f"user {user_id}: no keywords and no items")

    lines = []
    for i in range(max(len(keywords), len(flat))):
        kw = keywords[i] if i < len(keywords) else None
        title = flat[i] if i < len(flat) else None
        if kw is not None and title is not None:
            lines.append(f"{KEYWORD_PREFIX}{kw} {ITEM_PREFIX}{title}")
        elif kw is not None:
            lines.append(f"{KEYWORD_PREFIX}{kw}")
        else:
            lines.append(f"{ITEM_PREFIX}{title}")

    return UserContext(
        user_id=user_id,
        search_keywords=tuple(keywords),
        grouped_items=tuple((c, tuple(ts)) for c, ts in grouped),
        context_lines=tuple(lines),
    )
