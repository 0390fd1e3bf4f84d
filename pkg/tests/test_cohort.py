from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subjectforge.cohort import (
    Assignment,
    BUCKET_COUNT,
    CohortRules,
    EmptyIdentifier,
    EmptyInput,
    FutureTimestamp,
    MalformedRecord,
    Variant,
    assign_variant,
    audit_split,
    bucket_of,
    fnv1a_64,
    load_users,
    select_eligible,
    user_from_dict,
)

from conftest import NOW, make_user


# Independent FNV-1a reference, written from the published constants.
def _fnv1a_reference(data: bytes) -> int:
    h = 14695981039346656037
    for b in data:
        h ^= b
        h = (h * 1099511628211) % (1 << 64)
    return h


class TestFnv:
    def test_matches_independent_reference(self):
        for key in (b"", b"a", b"exp:salt:user-1", "実験:塩:利用者".encode("utf-8")):
            assert fnv1a_64(key) == _fnv1a_reference(key)

    def test_known_vectors(self):
        # published FNV-1a test vectors
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a_64(b"foobar") == 0x85944171F73967E8


class TestSelectEligible:
    def test_lapsed_recent_buyer_included(self):
        user = make_user("u1", days_since_access=11, days_since_purchase=90)
        assert select_eligible([user], CohortRules(), NOW) == [user]

    def test_recently_active_excluded(self):
        user = make_user("u2", days_since_access=2)
        assert select_eligible([user], CohortRules(), NOW) == []

    def test_stale_purchase_excluded(self):
        user = make_user("u3", days_since_purchase=240)
        assert select_eligible([user], CohortRules(), NOW) == []

    def test_no_purchase_excluded(self):
        user = make_user("u4", days_since_purchase=None)
        assert select_eligible([user], CohortRules(), NOW) == []

    def test_inactive_beyond_year_excluded(self):
        user = make_user("u5", days_since_access=400, days_since_purchase=90)
        assert select_eligible([user], CohortRules(), NOW) == []

    def test_opt_out_excluded_by_default(self):
        user = make_user("u6", opt_in=False)
        assert select_eligible([user], CohortRules(), NOW) == []
        relaxed = CohortRules(require_opt_in=False)
        assert select_eligible([user], relaxed, NOW) == [user]

    def test_inactivity_boundary_is_strict(self):
        on_boundary = make_user("u7", days_since_access=7)
        just_past = make_user("u8", days_since_access=7.001)
        selected = select_eligible([on_boundary, just_past], CohortRules(), NOW)
        assert [u.user_id for u in selected] == ["u8"]

    def test_purchase_boundary_is_inclusive(self):
        user = make_user("u9", days_since_purchase=180)
        assert select_eligible([user], CohortRules(), NOW) == [user]

    def test_future_timestamp_rejected(self):
        user = make_user("u10", days_since_access=-1)
        with pytest.raises(FutureTimestamp):
            select_eligible([user], CohortRules(), NOW)

    def test_order_preserved_and_idempotent(self):
        users = [make_user(f"u{i}", days_since_access=8 + i) for i in range(10)]
        selected = select_eligible(users, CohortRules(), NOW)
        assert [u.user_id for u in selected] == [u.user_id for u in users]
        assert select_eligible(selected, CohortRules(), NOW) == selected

    @given(st.permutations(list(range(8))))
    def test_per_user_decision_commutes_with_permutation(self, perm):
        users = [
            make_user(f"u{i}", days_since_access=5 + i, days_since_purchase=60 + 30 * i)
            for i in range(8)
        ]
        baseline = {u.user_id for u in select_eligible(users, CohortRules(), NOW)}
        shuffled = [users[i] for i in perm]
        permuted = select_eligible(shuffled, CohortRules(), NOW)
        assert {u.user_id for u in permuted} == baseline
        assert [u.user_id for u in permuted] == [
            u.user_id for u in shuffled if u.user_id in baseline
        ]


class TestAssignment:
    def test_deterministic(self):
        a = assign_variant("user-1", "exp-1", "salt", 0.5)
        b = assign_variant("user-1", "exp-1", "salt", 0.5)
        assert a == b

    def test_bucket_matches_hash(self):
        a = assign_variant("user-1", "exp-1", "salt", 0.5)
        assert a.bucket == _fnv1a_reference(b"exp-1:salt:user-1") % BUCKET_COUNT

    def test_empty_identifiers_rejected(self):
        with pytest.raises(EmptyIdentifier):
            assign_variant("", "exp", "s", 0.5)
        with pytest.raises(EmptyIdentifier):
            assign_variant("u", "", "s", 0.5)

    def test_split_fraction_bounds(self):
        with pytest.raises(ValueError):
            assign_variant("u", "e", "s", 0.0)
        with pytest.raises(ValueError):
            assign_variant("u", "e", "s", 1.0)

    def test_salt_change_rebuckets_most_users(self):
        ids = [f"user-{i:05d}" for i in range(10_000)]
        changed = sum(
            1
            for uid in ids
            if bucket_of(uid, "exp-1", "salt-a") != bucket_of(uid, "exp-1", "salt-b")
        )
        assert changed >= 9_900

    @given(st.text(min_size=1, max_size=20), st.floats(min_value=0.01, max_value=0.98))
    @settings(max_examples=200)
    def test_monotone_in_split_fraction(self, user_id, fraction):
        low = assign_variant(user_id, "exp", "s", fraction)
        high = assign_variant(user_id, "exp", "s", min(fraction + 0.01, 0.99))
        if low.variant is Variant.TREATMENT:
            assert high.variant is Variant.TREATMENT

    def test_balance_over_50k_ids(self):
        ids = [f"user-{i:06d}" for i in range(50_000)]
        n_treat = sum(
            1 for uid in ids if assign_variant(uid, "exp-1", "salt", 0.5).variant is Variant.TREATMENT
        )
        assert 0.49 <= n_treat / 50_000 <= 0.51


class TestAuditSplit:
    def test_fraction(self):
        assignments = [
            Assignment(f"u{i}", "e", Variant.TREATMENT if i < 5 else Variant.CONTROL, i)
            for i in range(10)
        ]
        report = audit_split(assignments)
        assert report.total == 10
        assert report.counts == {"control": 5, "treatment": 5}
        assert report.observed_fraction == 0.5

    def test_all_control(self):
        assignments = [Assignment(f"u{i}", "e", Variant.CONTROL, i) for i in range(4)]
        assert audit_split(assignments).observed_fraction == 0.0

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            audit_split([])

    def test_matches_enumeration_oracle(self):
        ids = [f"user-{i:05d}" for i in range(20_000)]
        assignments = [assign_variant(uid, "exp-1", "salt", 0.5) for uid in ids]
        report = audit_split(assignments)
        oracle_treat = sum(
            1 for uid in ids if _fnv1a_reference(f"exp-1:salt:{uid}".encode()) % 10_000 < 5_000
        )
        assert report.counts["treatment"] == oracle_treat
        assert report.observed_fraction == oracle_treat / 20_000


class TestLoadUsers:
    def test_round_trip(self, tmp_path):
        from conftest import write_users_file

        users = [make_user("a"), make_user("b", days_since_purchase=None)]
        path = write_users_file(tmp_path / "users.jsonl", users)
        loaded = load_users(path)
        assert [u.user_id for u in loaded] == ["a", "b"]
        assert loaded[1].last_purchase_at is None

    def test_missing_field(self):
        with pytest.raises(MalformedRecord):
            user_from_dict({"user_id": "x", "last_access_at": "2026-08-01T00:00:00Z"})

    def test_duplicate_user_id(self, tmp_path):
        path = tmp_path / "users.jsonl"
        row = json.dumps(
            {
                "user_id": "dup",
                "last_access_at": "2026-07-01T00:00:00Z",
                "first_access_at": "2025-01-01T00:00:00Z",
            }
        )
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(MalformedRecord, match="duplicate"):
            load_users(path)

    def test_first_access_after_last_access(self):
        with pytest.raises(MalformedRecord):
            user_from_dict(
                {
                    "user_id": "x",
                    "last_access_at": "2026-01-01T00:00:00Z",
                    "first_access_at": "2026-02-01T00:00:00Z",
                }
            )


class TestCohortRules:
    def test_window_ordering_enforced(self):
        with pytest.raises(ValueError):
            CohortRules(inactive_days_min=400, active_within_days=365)

    def test_positive_windows(self):
        with pytest.raises(ValueError):
            CohortRules(inactive_days_min=0)
