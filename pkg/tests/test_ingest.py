import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratingcohorts.errors import MalformedRecordError, UnknownBusinessError
from ratingcohorts.ingest import (BusinessRecord, FilterStats, ParseStats, RatingRecord, RatingTable,
                                  business_to_json, filter_restaurant_reviews, is_restaurant_category,
                                  parse_businesses, parse_reviews, parse_users, review_to_json,
                                  user_to_json, write_reviews_csv)


class TestParseReviews:
    def test_fixture_with_malformed_line(self, data_dir):
        stats = ParseStats()
        with open(data_dir / "reviews_3lines.jsonl", "rb") as fh:
            recs = list(parse_reviews(fh, "json", stats=stats))
        assert recs == [RatingRecord("alice", "b1", 4), RatingRecord("bob", "b1", 2)]
        assert stats.records == 2
        assert stats.skipped == 1
        assert stats.errors[0][0] == 2

    def test_strict_raises_on_malformed(self, data_dir):
        with open(data_dir / "reviews_3lines.jsonl", "rb") as fh:
            with pytest.raises(MalformedRecordError) as err:
                list(parse_reviews(fh, "json", strict=True))
        assert err.value.line_no == 2

    @pytest.mark.parametrize("fmt", ["json", "csv"])
    def test_empty_stream(self, fmt):
        stats = ParseStats()
        assert list(parse_reviews(io.BytesIO(b""), fmt, stats=stats)) == []
        assert stats.skipped == 0

    def test_csv(self, data_dir):
        with open(data_dir / "reviews_5.csv", "rb") as fh:
            recs = list(parse_reviews(fh, "csv"))
        assert len(recs) == 5
        assert recs[0] == RatingRecord("alice", "b1", 5)

    @pytest.mark.parametrize("line", [
        '{"user_id": "u", "business_id": "b", "stars": 6}',
        '{"user_id": "u", "business_id": "b", "stars": 0}',
        '{"user_id": "u", "business_id": "b", "stars": 3.5}',
        '{"user_id": "", "business_id": "b", "stars": 3}',
        '{"user_id": "u", "stars": 3}',
        '{"user_id": "u", "business_id": "b", "stars": true}',
        '[1, 2, 3]',
        'not json',
    ])
    def test_invalid_lines_are_skipped(self, line):
        stats = ParseStats()
        assert list(parse_reviews(io.StringIO(line + "\n"), "json", stats=stats)) == []
        assert stats.skipped == 1

    def test_csv_wrong_width(self):
        text = "user_id,business_id,stars\nu,b,3\nu,b\n"
        stats = ParseStats()
        assert len(list(parse_reviews(io.StringIO(text), "csv", stats=stats))) == 1
        assert stats.skipped == 1

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            list(parse_reviews(io.StringIO(""), "xml"))


class TestParseBusinessesAndUsers:
    def test_restaurant_flags(self, data_dir):
        with open(data_dir / "businesses_5.jsonl", "rb") as fh:
            recs = {b.business_id: b for b in parse_businesses(fh, "json")}
        assert recs["b1"].is_restaurant
        assert not recs["b2"].is_restaurant
        assert recs["b3"].is_restaurant
        assert not recs["b4"].is_restaurant
        assert not recs["b5"].is_restaurant
        assert recs["b1"].source_review_count == 210
        assert recs["b3"].source_score == 4.5

    @pytest.mark.parametrize("cats,expected", [
        ("Nightlife, Restaurants", True),
        ("Auto Repair", False),
        ("RESTAURANTS", True),
        ("Restaurant Supplies", False),
        (None, False),
        (["Food", "Restaurants"], True),
    ])
    def test_category_token(self, cats, expected):
        assert is_restaurant_category(cats) is expected

    def test_half_star_score_enforced(self):
        line = '{"business_id": "b", "review_count": 3, "stars": 3.7, "categories": "Restaurants"}\n'
        stats = ParseStats()
        assert list(parse_businesses(io.StringIO(line), "json", stats=stats)) == []
        assert stats.skipped == 1

    def test_users_fixture(self, data_dir):
        with open(data_dir / "users_2.jsonl", "rb") as fh:
            recs = list(parse_users(fh, "json"))
        assert [(u.user_id, u.source_review_count, u.source_average) for u in recs] == [
            ("alice", 12, 4.25), ("bob", 3, 2.33)]

    def test_users_empty(self):
        assert list(parse_users(io.BytesIO(b""), "json")) == []


class TestRoundTrip:
    def test_fixture_round_trip(self, data_dir):
        for path, parse, dump in [
            ("users_2.jsonl", parse_users, user_to_json),
            ("businesses_5.jsonl", parse_businesses, business_to_json),
            ("reviews_3lines.jsonl", parse_reviews, review_to_json),
        ]:
            with open(data_dir / path, "rb") as fh:
                first = list(parse(fh, "json"))
            text = "\n".join(dump(r) for r in first) + "\n"
            assert list(parse(io.StringIO(text), "json")) == first

    def test_csv_round_trip(self, data_dir):
        with open(data_dir / "reviews_5.csv", "rb") as fh:
            first = list(parse_reviews(fh, "csv"))
        buf = io.StringIO()
        write_reviews_csv(first, buf)
        buf.seek(0)
        assert list(parse_reviews(buf, "csv")) == first

    def test_table_round_trip(self, data_dir):
        with open(data_dir / "reviews_5.csv", "rb") as fh:
            recs = list(parse_reviews(fh, "csv"))
        table = RatingTable.from_records(recs)
        assert list(table.records()) == recs
        assert table.n_users == 4 and table.n_businesses == 5


class TestFilter:
    def test_against_double_loop(self, data_dir):
        with open(data_dir / "reviews_5.csv", "rb") as fh:
            reviews = list(parse_reviews(fh, "csv"))
        with open(data_dir / "businesses_5.jsonl", "rb") as fh:
            businesses = list(parse_businesses(fh, "json"))
        expected = []
        for r in reviews:
            for b in businesses:
                if r.business_id == b.business_id and b.is_restaurant:
                    expected.append(r)
        stats = FilterStats()
        got = list(filter_restaurant_reviews(reviews, businesses, stats=stats))
        assert got == expected
        assert [r.business_id for r in got] == ["b1", "b3"]
        assert stats.unknown_business == 1
        assert stats.not_restaurant == 2

    def test_no_restaurants(self):
        reviews = [RatingRecord("u", "b", 3)]
        assert list(filter_restaurant_reviews(reviews, [BusinessRecord("b", 1, 3.0, False)])) == []

    def test_strict_unknown_business(self):
        with pytest.raises(UnknownBusinessError):
            list(filter_restaurant_reviews([RatingRecord("u", "zz", 3)], [], strict=True))


review_st = st.builds(RatingRecord, st.sampled_from(["u1", "u2", "u3", "u4"]),
                      st.sampled_from(["b1", "b2", "b3"]), st.integers(1, 5))


@settings(max_examples=200, deadline=None)
@given(st.lists(review_st, max_size=40), st.data())
def test_counts_invariant_under_chunking(records, data):
    text = "".join(review_to_json(r) + "\n" for r in records) + "garbage\n"
    lines = text.splitlines(keepends=True)
    cut = data.draw(st.integers(0, len(lines)))
    whole = ParseStats()
    list(parse_reviews(io.StringIO(text), "json", stats=whole))
    a, b = ParseStats(), ParseStats()
    list(parse_reviews(io.StringIO("".join(lines[:cut])), "json", stats=a))
    list(parse_reviews(io.StringIO("".join(lines[cut:])), "json", stats=b))
    merged = a.merge(b)
    assert (merged.records, merged.skipped) == (whole.records, whole.skipped) == (len(records), 1)


@settings(max_examples=100, deadline=None)
@given(st.lists(review_st, max_size=40), st.sets(st.sampled_from(["b1", "b2", "b3"])))
def test_filter_properties(records, restaurants):
    businesses = [BusinessRecord(b, 1, 3.0, b in restaurants) for b in ("b1", "b2", "b3")]
    out = list(filter_restaurant_reviews(records, businesses))
    assert len(out) <= len(records)
    assert all(r.business_id in restaurants for r in out)
    assert out == [r for r in records if r.business_id in restaurants]


def test_table_codes_index_ids():
    t = RatingTable.from_columns(["x", "y", "x"], ["p", "p", "q"], [1, 2, 3])
    np.testing.assert_array_equal(t.user_ids[t.user_codes], ["x", "y", "x"])
    np.testing.assert_array_equal(t.business_ids[t.business_codes], ["p", "p", "q"])
