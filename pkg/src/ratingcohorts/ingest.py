"""Line-oriented parsers for the review, business and user tables.

Two on-disk formats are understood:

* ``json``: the Yelp academic dataset layout, one JSON object per line with
  the public field names (``user_id``, ``business_id``, ``stars``,
  ``review_count``, ``average_stars``, ``categories``).
* ``csv``: a generic comma-separated file with a header row.  Reviews use
  ``user_id,business_id,stars``; businesses ``business_id,review_count,stars,
  categories``; users ``user_id,review_count,average_stars``.

Parsers are generators so multi-gigabyte inputs never sit in memory as
Python objects.  Bad lines are skipped and tallied in a :class:`ParseStats`
unless ``strict=True``, in which case the first one raises
:class:`~ratingcohorts.errors.MalformedRecordError`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any

import numpy as np
import pandas as pd

from .errors import MalformedRecordError, RatingDataError, UnknownBusinessError

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv")
RESTAURANT_TAG = "restaurants"
REVIEW_CSV_HEADER = ("user_id", "business_id", "stars")
BUSINESS_CSV_HEADER = ("business_id", "review_count", "stars", "categories")
USER_CSV_HEADER = ("user_id", "review_count", "average_stars")

# keep only the first few bad lines verbatim; the count is always exact
_MAX_KEPT_ERRORS = 20


@dataclass(frozen=True, slots=True)
class RatingRecord:
    user_id: str
    business_id: str
    stars: int

    def __post_init__(self):
        if not self.user_id or not self.business_id:
            raise ValueError("user_id and business_id must be non-empty")
        if self.stars not in (1, 2, 3, 4, 5):
            raise ValueError(f"stars must be an integer in 1..5, got {self.stars!r}")


@dataclass(frozen=True, slots=True)
class BusinessRecord:
    business_id: str
    source_review_count: int
    source_score: float
    is_restaurant: bool

    def __post_init__(self):
        if not self.business_id:
            raise ValueError("business_id must be non-empty")
        if self.source_review_count < 0:
            raise ValueError("review_count must be non-negative")
        doubled = self.source_score * 2
        if not (1.0 <= self.source_score <= 5.0) or doubled != math.floor(doubled):
            raise ValueError(f"score must be a half-star value in [1, 5], got {self.source_score!r}")


@dataclass(frozen=True, slots=True)
class UserRecord:
    user_id: str
    source_review_count: int
    source_average: float

    def __post_init__(self):
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        if self.source_review_count < 0:
            raise ValueError("review_count must be non-negative")
        if self.source_review_count > 0 and not (1.0 <= self.source_average <= 5.0):
            raise ValueError(f"average_stars must lie in [1, 5], got {self.source_average!r}")


@dataclass
class ParseStats:
    """Running tallies for one parse (or filter) pass."""

    lines: int = 0
    records: int = 0
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    def note_error(self, line_no: int, reason: str) -> None:
        self.skipped += 1
        if len(self.errors) < _MAX_KEPT_ERRORS:
            self.errors.append((line_no, reason))

    def merge(self, other: ParseStats) -> ParseStats:
        return ParseStats(
            self.lines + other.lines,
            self.records + other.records,
            self.skipped + other.skipped,
            (self.errors + other.errors)[:_MAX_KEPT_ERRORS],
        )


@dataclass
class FilterStats:
    kept: int = 0
    not_restaurant: int = 0
    unknown_business: int = 0


def is_restaurant_category(categories: str | list[str] | None) -> bool:
    """True iff one comma-separated category token equals "Restaurants"."""
    if not categories:
        return False
    tokens = categories if isinstance(categories, list) else categories.split(",")
    return any(tok.strip().lower() == RESTAURANT_TAG for tok in tokens)


def _as_stars(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("stars is not numeric")
    if isinstance(value, str):
        value = float(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"stars {value!r} is not a whole number")
        value = int(value)
    if not isinstance(value, int):
        raise ValueError(f"stars has type {type(value).__name__}")
    return value


def _as_count(value: Any) -> int:
    if isinstance(value, str):
        value = float(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"count {value!r} is not a whole number")
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError("count is not an integer")
    return value


def _as_id(value: Any) -> str:
    if not isinstance(value, str):
        raise ValueError("id is not a string")
    return value


def _review_from_fields(d: Mapping[str, Any]) -> RatingRecord:
    return RatingRecord(_as_id(d["user_id"]), _as_id(d["business_id"]), _as_stars(d["stars"]))


def _business_from_fields(d: Mapping[str, Any]) -> BusinessRecord:
    return BusinessRecord(
        _as_id(d["business_id"]),
        _as_count(d["review_count"]),
        float(d["stars"]),
        is_restaurant_category(d.get("categories")),
    )


def _user_from_fields(d: Mapping[str, Any]) -> UserRecord:
    return UserRecord(_as_id(d["user_id"]), _as_count(d["review_count"]), float(d["average_stars"]))


def _text_lines(stream: IO) -> Iterator[str]:
    if isinstance(stream, io.TextIOBase):
        yield from stream
        return
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw


def _parse(stream: IO, fmt: str, build: Callable[[Mapping[str, Any]], Any],
           header: tuple[str, ...], strict: bool, stats: ParseStats | None) -> Iterator[Any]:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    stats = stats if stats is not None else ParseStats()
    lines = _text_lines(stream)

    if fmt == "json":
        rows = ((no, line) for no, line in enumerate(lines, start=1))
        decode = json.loads
    else:
        reader = csv.reader(lines)
        try:
            columns = next(reader)
        except StopIteration:
            return
        columns = [c.strip() for c in columns]
        missing = [c for c in header if c not in columns]
        # categories is optional for businesses
        missing = [c for c in missing if c != "categories"]
        if missing:
            raise RatingDataError(f"CSV header lacks columns {missing}")
        width = len(columns)
        rows = ((reader.line_num, row) for row in reader)

        def decode(row):
            if len(row) != width:
                raise ValueError(f"expected {width} fields, got {len(row)}")
            return dict(zip(columns, row))

    for line_no, item in rows:
        if fmt == "json" and not item.strip():
            continue
        if fmt == "csv" and not item:
            continue
        stats.lines += 1
        try:
            fields = decode(item)
            if not isinstance(fields, dict):
                raise ValueError("record is not an object")
            rec = build(fields)
        except (ValueError, KeyError, TypeError) as exc:
            reason = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
            if strict:
                raise MalformedRecordError(line_no, reason) from exc
            stats.note_error(line_no, reason)
            continue
        stats.records += 1
        yield rec


def parse_reviews(stream: IO, fmt: str = "json", *, strict: bool = False,
                  stats: ParseStats | None = None) -> Iterator[RatingRecord]:
    """Yield one :class:`RatingRecord` per well-formed review line, in order.

    Review text, dates and vote fields are ignored.  Pass a :class:`ParseStats`
    to collect line / skip counts.
    """
    return _parse(stream, fmt, _review_from_fields, REVIEW_CSV_HEADER, strict, stats)


def parse_businesses(stream: IO, fmt: str = "json", *, strict: bool = False,
                     stats: ParseStats | None = None) -> Iterator[BusinessRecord]:
    return _parse(stream, fmt, _business_from_fields, BUSINESS_CSV_HEADER, strict, stats)


def parse_users(stream: IO, fmt: str = "json", *, strict: bool = False,
                stats: ParseStats | None = None) -> Iterator[UserRecord]:
    return _parse(stream, fmt, _user_from_fields, USER_CSV_HEADER, strict, stats)


def filter_restaurant_reviews(reviews: Iterable[RatingRecord],
                              businesses: Iterable[BusinessRecord] | Mapping[str, BusinessRecord],
                              *, strict: bool = False,
                              stats: FilterStats | None = None) -> Iterator[RatingRecord]:
    """Keep reviews whose business carries the restaurant tag, preserving order.

    Reviews of businesses absent from ``businesses`` are dropped and counted
    in ``stats.unknown_business`` (or raise under ``strict``).
    """
    if isinstance(businesses, Mapping):
        flags = {bid: b.is_restaurant for bid, b in businesses.items()}
    else:
        flags = {b.business_id: b.is_restaurant for b in businesses}
    stats = stats if stats is not None else FilterStats()
    for rec in reviews:
        flag = flags.get(rec.business_id)
        if flag is None:
            if strict:
                raise UnknownBusinessError(f"review references unknown business {rec.business_id!r}")
            stats.unknown_business += 1
        elif flag:
            stats.kept += 1
            yield rec
        else:
            stats.not_restaurant += 1


# -- serialization ---------------------------------------------------------

def review_to_json(rec: RatingRecord) -> str:
    return json.dumps({"user_id": rec.user_id, "business_id": rec.business_id, "stars": rec.stars})


def business_to_json(rec: BusinessRecord) -> str:
    return json.dumps({
        "business_id": rec.business_id,
        "review_count": rec.source_review_count,
        "stars": rec.source_score,
        "categories": "Restaurants" if rec.is_restaurant else None,
    })


def user_to_json(rec: UserRecord) -> str:
    return json.dumps({
        "user_id": rec.user_id,
        "review_count": rec.source_review_count,
        "average_stars": rec.source_average,
    })


def write_reviews_csv(records: Iterable[RatingRecord], out: IO[str] | str | Path) -> int:
    """Write reviews in the generic CSV format; returns the number of rows."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            return write_reviews_csv(records, fh)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REVIEW_CSV_HEADER)
    n = 0
    for rec in records:
        writer.writerow((rec.user_id, rec.business_id, rec.stars))
        n += 1
    return n


# -- columnar storage ------------------------------------------------------

def _as_array(values, dtype) -> np.ndarray:
    if not isinstance(values, (np.ndarray, pd.Series)):
        values = list(values)
    return np.asarray(values, dtype=dtype)


@dataclass(frozen=True)
class RatingTable:
    """Ratings stored column-wise with integer-coded users and businesses.

    ``user_ids[user_codes[k]]`` is the author of rating ``k``.  Id arrays are
    in first-appearance order, so the coding is a pure function of the input
    sequence.
    """

    user_ids: np.ndarray
    business_ids: np.ndarray
    user_codes: np.ndarray
    business_codes: np.ndarray
    stars: np.ndarray

    def __len__(self) -> int:
        return len(self.stars)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_businesses(self) -> int:
        return len(self.business_ids)

    @classmethod
    def from_columns(cls, user_id: Iterable[str], business_id: Iterable[str],
                     stars: Iterable[int]) -> RatingTable:
        ucodes, uids = pd.factorize(_as_array(user_id, object))
        bcodes, bids = pd.factorize(_as_array(business_id, object))
        s = _as_array(stars, None)
        if len(s) != len(ucodes) or len(s) != len(bcodes):
            raise ValueError("column lengths differ")
        if len(s) and (s.min() < 1 or s.max() > 5 or np.any(s != np.round(s))):
            raise RatingDataError("stars must be integers in 1..5")
        return cls(
            np.asarray(uids, dtype=object),
            np.asarray(bids, dtype=object),
            ucodes.astype(np.int64),
            bcodes.astype(np.int64),
            s.astype(np.int8),
        )

    @classmethod
    def from_records(cls, records: Iterable[RatingRecord]) -> RatingTable:
        users: list[str] = []
        businesses: list[str] = []
        stars: list[int] = []
        for rec in records:
            users.append(rec.user_id)
            businesses.append(rec.business_id)
            stars.append(rec.stars)
        return cls.from_columns(users, businesses, np.asarray(stars, dtype=np.int8))

    def records(self) -> Iterator[RatingRecord]:
        for u, b, s in zip(self.user_ids[self.user_codes], self.business_ids[self.business_codes], self.stars):
            yield RatingRecord(u, b, int(s))

    def take(self, mask: np.ndarray) -> RatingTable:
        """Subset of rows; ids that no longer occur are dropped from the coding."""
        ucodes, uidx = pd.factorize(self.user_codes[mask])
        bcodes, bidx = pd.factorize(self.business_codes[mask])
        return RatingTable(self.user_ids[uidx], self.business_ids[bidx], ucodes.astype(self.user_codes.dtype),
                           bcodes.astype(self.business_codes.dtype), self.stars[mask])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "user_id": self.user_ids[self.user_codes],
            "business_id": self.business_ids[self.business_codes],
            "stars": self.stars.astype(np.int64),
        })


def read_reviews(path: str | Path, fmt: str = "csv", *, strict: bool = False) -> tuple[RatingTable, ParseStats]:
    """Load a review file into a :class:`RatingTable`."""
    stats = ParseStats()
    with open(path, "rb") as fh:
        table = RatingTable.from_records(parse_reviews(fh, fmt, strict=strict, stats=stats))
    if stats.skipped:
        logger.warning("%s: skipped %d malformed lines", path, stats.skipped)
    logger.info("%s: %d ratings, %d users, %d businesses", path, len(table), table.n_users, table.n_businesses)
    return table, stats
