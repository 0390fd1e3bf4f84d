from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from subjectforge.catalog import (
    DuplicateRank,
    EmptyContext,
    ParseError,
    RecommendedItem,
    build_user_context,
    group_by_category,
    load_recommendations,
)

from conftest import APPENDIX_CONTEXT_LINES, make_item


def _write(tmp_path, rows):
    path = tmp_path / "recs.jsonl"
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in rows) + "\n")
    return path


def _row(user_id, item_id, rank, title="品", category="c", price=100):
    return {
        "user_id": user_id,
        "item_id": item_id,
        "title": title,
        "category": category,
        "price": price,
        "rank": rank,
    }


class TestLoadRecommendations:
    def test_sorts_by_rank(self, tmp_path):
        path = _write(
            tmp_path, [_row("u", "i2", 2), _row("u", "i1", 1), _row("u", "i3", 3)]
        )
        recs = load_recommendations(path)
        assert [i.rank for i in recs["u"]] == [1, 2, 3]

    def test_empty_stream(self, tmp_path):
        path = tmp_path / "recs.jsonl"
        path.write_text("")
        assert load_recommendations(path) == {}

    def test_negative_price_is_parse_error_with_line(self, tmp_path):
        path = _write(tmp_path, [_row("u", "i1", 1), _row("u", "i2", 2, price=-5)])
        with pytest.raises(ParseError) as exc:
            load_recommendations(path)
        assert exc.value.lineno == 2

    def test_invalid_json_line(self, tmp_path):
        path = tmp_path / "recs.jsonl"
        path.write_text(json.dumps(_row("u", "i1", 1)) + "\nnonsense\n")
        with pytest.raises(ParseError) as exc:
            load_recommendations(path)
        assert exc.value.lineno == 2

    def test_duplicate_item_keeps_better_rank(self, tmp_path):
        path = _write(tmp_path, [_row("u", "i1", 5), _row("u", "i1", 2)])
        recs = load_recommendations(path)
        assert [(i.item_id, i.rank) for i in recs["u"]] == [("i1", 2)]

    def test_distinct_items_same_rank_rejected(self, tmp_path):
        path = _write(tmp_path, [_row("u", "i1", 1), _row("u", "i2", 1)])
        with pytest.raises(DuplicateRank):
            load_recommendations(path)


class TestGroupByCategory:
    def test_basic_grouping(self):
        items = [
            make_item("i1", "t1", category="catA", rank=1),
            make_item("i2", "t2", category="catB", rank=2),
            make_item("i3", "t3", category="catA", rank=3),
        ]
        grouped = group_by_category(items, max_categories=2, max_per_category=2)
        assert grouped == [("catA", ["t1", "t3"]), ("catB", ["t2"])]

    def test_category_cap_keeps_best_ranked_categories(self):
        # 5 categories on ranks 1..5; brute-force selection says the 3
        # categories holding ranks 1..3 survive.
        items = [make_item(f"i{r}", f"t{r}", category=f"cat{r}", rank=r) for r in range(1, 6)]
        best_by_cat = {}
        for it in items:
            best_by_cat.setdefault(it.category, it.rank)
        expected = sorted(best_by_cat, key=best_by_cat.get)[:3]
        grouped = group_by_category(items, max_categories=3, max_per_category=4)
        assert [c for c, _ in grouped] == expected == ["cat1", "cat2", "cat3"]

    def test_single_item(self):
        grouped = group_by_category([make_item("i", "題名", category="c", rank=1)])
        assert grouped == [("c", ["題名"])]

    def test_empty(self):
        assert group_by_category([]) == []

    @given(
        st.lists(
            st.tuples(st.sampled_from("abcde"), st.integers(1, 50)),
            max_size=30,
            unique_by=lambda t: t[1],
        ),
        st.integers(1, 4),
        st.integers(1, 4),
    )
    def test_conservation(self, spec, max_cats, max_per):
        items = sorted(
            (make_item(f"i{rank}", f"t{rank}", category=cat, rank=rank) for cat, rank in spec),
            key=lambda i: i.rank,
        )
        grouped = group_by_category(items, max_cats, max_per)
        total = sum(len(titles) for _, titles in grouped)
        assert total <= min(len(items), max_cats * max_per)
        n_cats = len({i.category for i in items})
        if n_cats <= max_cats and all(
            sum(1 for i in items if i.category == c) <= max_per
            for c in {i.category for i in items}
        ):
            assert total == len(items)


class TestBuildUserContext:
    def test_appendix_pairing(self):
        ctx = build_user_context(
            "u",
            ["ヴィンテージ", "New Era"],
            [
                (
                    "fashion",
                    ["Leeの90年代デニムジーンズ USA製", "ニューヨーク・メッツ 帽子 サイズ7 1/8"],
                )
            ],
        )
        assert list(ctx.context_lines) == APPENDIX_CONTEXT_LINES

    def test_item_only_line(self):
        ctx = build_user_context("u", [], [("sports", ["ゴルフクラブ"])])
        assert list(ctx.context_lines) == ["商品例：ゴルフクラブ"]

    def test_keyword_only_line(self):
        ctx = build_user_context("u", ["ヴィンテージ"], [])
        assert list(ctx.context_lines) == ["検索キーワード：ヴィンテージ"]

    def test_uneven_lengths(self):
        ctx = build_user_context("u", ["kw1"], [("c", ["t1", "t2"])])
        assert list(ctx.context_lines) == ["検索キーワード：kw1 商品例：t1", "商品例：t2"]

    def test_both_empty(self):
        with pytest.raises(EmptyContext):
            build_user_context("u", [], [])

    def test_byte_stable(self):
        args = ("u", ["kw"], [("c", ["t1"]), ("d", ["t2"])])
        assert build_user_context(*args).context_lines == build_user_context(*args).context_lines

    def test_first_item_title(self):
        ctx = build_user_context("u", [], [("c", ["先頭", "次点"]), ("d", ["他"])])
        assert ctx.first_item_title() == "先頭"
        assert ctx.flat_titles() == ["先頭", "次点", "他"]


class TestRecommendedItem:
    def test_invariants(self):
        with pytest.raises(ValueError):
            RecommendedItem("i", "  ", "c", 100, 1)
        with pytest.raises(ValueError):
            RecommendedItem("i", "t", "c", -1, 1)
        with pytest.raises(ValueError):
            RecommendedItem("i", "t", "c", 0, 0)
