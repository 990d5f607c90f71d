"""Folksonomy data model, TSV ingestion/emission and tag cleaning.

A folksonomy is a collection of posts. Each post is one user's complete tag set
for one document at one point in time; it decomposes into tag assignments
``(user, document, tag)``.

Classes:
    TagAssignment: A single (user, document, tag) triple.
    Post: One user's tag set for one document.
    QueryPost: A post whose tags are to be predicted.
    TaggingDataset: Immutable collection of posts with id indexes.
    IngestReport: Counters filled while parsing a tag-assignment stream.

Functions:
    parse_posts: Read a tag-assignment TSV stream into a dataset.
    clean_tags: Apply a cleaning profile to a dataset.
    write_posts / write_queries / read_queries: TSV emission and reload.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from fnmatch import fnmatchcase
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Literal, Mapping, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

CleaningProfile = Literal["generic", "citeulike", "bibsonomy-bibtex"]

_EPOCH = datetime(1970, 1, 1)

DEFAULT_COLUMNS: Mapping[str, int] = MappingProxyType({"user": 0, "document": 1, "tag": 2, "timestamp": 3})

# Automatically generated tags removed per profile.
_PROFILE_EXACT: Mapping[str, frozenset[str]] = MappingProxyType(
    {
        "generic": frozenset(),
        "citeulike": frozenset({"no-tag", "bibtex-import"}),
        "bibsonomy-bibtex": frozenset({"jabrefnokeywordassigned", "myown"}),
    }
)
_PROFILE_PATTERNS: Mapping[str, tuple[str, ...]] = MappingProxyType(
    {
        "generic": (),
        "citeulike": ("*file-import*", "*import-*"),
        "bibsonomy-bibtex": (),
    }
)


class TimestampError(ValueError):
    """Raised (or recorded) for a line whose timestamp cannot be parsed."""

    def __init__(self, line: int, value: str) -> None:
        super().__init__(f"line {line}: unparseable timestamp {value!r}")
        self.line = line
        self.value = value


@dataclass(frozen=True)
class TagAssignment:
    """A single (user, document, tag) triple."""

    user: str
    document: str
    tag: str


@dataclass(frozen=True)
class Post:
    """One user's complete tag set for one document."""

    user: str
    document: str
    tags: frozenset[str]
    timestamp: datetime

    def assignments(self) -> Iterator[TagAssignment]:
        """Yield the post's tag assignments in tag order."""
        for tag in sorted(self.tags):
            yield TagAssignment(self.user, self.document, tag)

    def replace_tags(self, tags: Iterable[str]) -> Post:
        return Post(self.user, self.document, frozenset(tags), self.timestamp)


@dataclass(frozen=True)
class QueryPost:
    """A post whose tags are to be predicted.

    ``true_tags`` is present in evaluation and ``None`` for live queries. The
    user and document do not need to exist in the training data.
    """

    user: str
    document: str
    true_tags: frozenset[str] | None = None
    timestamp: datetime | None = None

    @classmethod
    def from_post(cls, post: Post) -> QueryPost:
        return cls(post.user, post.document, post.tags, post.timestamp)


def _post_order(post: Post) -> tuple[datetime, str, str]:
    return (post.timestamp, post.user, post.document)


@dataclass(frozen=True)
class TaggingDataset:
    """Immutable collection of posts with user, document and tag indexes.

    Posts are kept in canonical ``(timestamp, user, document)`` order and there
    is at most one post per ``(user, document)`` pair. The index maps hold
    positions into ``posts``.
    """

    posts: tuple[Post, ...]
    user_index: Mapping[str, tuple[int, ...]] = field(init=False, repr=False, compare=False)
    document_index: Mapping[str, tuple[int, ...]] = field(init=False, repr=False, compare=False)
    tag_index: Mapping[str, tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        users: dict[str, list[int]] = defaultdict(list)
        documents: dict[str, list[int]] = defaultdict(list)
        tags: dict[str, list[int]] = defaultdict(list)
        seen: set[tuple[str, str]] = set()
        for position, post in enumerate(self.posts):
            if not post.tags:
                raise ValueError(f"post ({post.user}, {post.document}) has no tags")
            key = (post.user, post.document)
            if key in seen:
                raise ValueError(f"duplicate post for user {post.user!r} and document {post.document!r}")
            seen.add(key)
            users[post.user].append(position)
            documents[post.document].append(position)
            for tag in post.tags:
                tags[tag].append(position)
        object.__setattr__(self, "user_index", MappingProxyType({k: tuple(v) for k, v in users.items()}))
        object.__setattr__(self, "document_index", MappingProxyType({k: tuple(v) for k, v in documents.items()}))
        object.__setattr__(self, "tag_index", MappingProxyType({k: tuple(v) for k, v in tags.items()}))

    @classmethod
    def from_posts(cls, posts: Iterable[Post]) -> TaggingDataset:
        """Build a dataset, keeping the latest post per (user, document) pair."""
        latest: dict[tuple[str, str], Post] = {}
        for post in posts:
            if not post.tags:
                continue
            key = (post.user, post.document)
            current = latest.get(key)
            if current is None or post.timestamp >= current.timestamp:
                latest[key] = post
        return cls(tuple(sorted(latest.values(), key=_post_order)))

    @classmethod
    def empty(cls) -> TaggingDataset:
        return cls(())

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self) -> Iterator[Post]:
        return iter(self.posts)

    @property
    def users(self) -> frozenset[str]:
        return frozenset(self.user_index)

    @property
    def documents(self) -> frozenset[str]:
        return frozenset(self.document_index)

    @property
    def tags(self) -> frozenset[str]:
        return frozenset(self.tag_index)

    @property
    def n_assignments(self) -> int:
        return sum(len(post.tags) for post in self.posts)

    def assignments(self) -> Iterator[TagAssignment]:
        for post in self.posts:
            yield from post.assignments()

    def posts_of_user(self, user: str) -> list[Post]:
        return [self.posts[i] for i in self.user_index.get(user, ())]

    def posts_of_document(self, document: str) -> list[Post]:
        return [self.posts[i] for i in self.document_index.get(document, ())]

    def time_range(self) -> tuple[datetime, datetime] | None:
        if not self.posts:
            return None
        return self.posts[0].timestamp, self.posts[-1].timestamp

    def summary(self) -> dict[str, int]:
        return {
            "posts": len(self.posts),
            "assignments": self.n_assignments,
            "users": len(self.user_index),
            "documents": len(self.document_index),
            "tags": len(self.tag_index),
        }


@dataclass
class IngestReport:
    """Counters collected while parsing a tag-assignment stream."""

    lines: int = 0
    malformed: int = 0
    duplicates: int = 0
    posts: int = 0
    timestamp_errors: list[TimestampError] = field(default_factory=list)

    def as_dict(self) -> dict[str, int]:
        return {
            "lines": self.lines,
            "malformed": self.malformed,
            "timestamp_errors": len(self.timestamp_errors),
            "duplicates": self.duplicates,
            "posts": self.posts,
        }


def read_tsv(source: IO[str] | str | Path, min_columns: int = 1) -> pd.DataFrame:
    """Read a header-less UTF-8 TSV into string columns ``0 .. width-1``.

    The index is the 1-based line number. Blank lines are dropped, missing
    trailing fields read as empty strings and quotes are plain characters.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as handle:
            text = handle.read()
    else:
        text = source.read()
    width = max(min_columns, max((line.count("\t") + 1 for line in text.split("\n")), default=1))
    if not text.strip():
        return pd.DataFrame(columns=range(width), dtype=str)
    frame = pd.read_csv(
        io.StringIO(text),
        sep="\t",
        header=None,
        names=range(width),
        dtype=str,
        keep_default_na=False,
        quoting=csv.QUOTE_NONE,
        skip_blank_lines=False,
        engine="python",
    ).fillna("")
    frame.index = frame.index + 1
    return frame[(frame.apply(lambda column: column.str.strip()) != "").any(axis=1)]


def _read_frame(source: IO[str] | str | Path, columns: Mapping[str, int], report: IngestReport) -> pd.DataFrame:
    """Pick the four named columns, indexed by 1-based line number."""
    frame = read_tsv(source, max(columns.values()) + 1)
    report.lines += len(frame)
    picked = pd.DataFrame(
        {name: frame[columns[name]].str.strip() for name in ("user", "document", "tag", "timestamp")},
        index=frame.index,
    )
    malformed = (picked == "").any(axis=1)
    report.malformed += int(malformed.sum())
    return picked[~malformed]


def parse_posts(
    stream: IO[str] | str | Path,
    columns: Mapping[str, int] = DEFAULT_COLUMNS,
    *,
    report: IngestReport | None = None,
    strict: bool = False,
) -> TaggingDataset:
    """Parse a UTF-8 TSV stream with one tag assignment per line.

    Assignments sharing ``(user, document, timestamp)`` form one post;
    duplicate triples collapse. When a (user, document) pair carries several
    timestamps, the latest tag set is kept. Malformed lines (too few fields,
    empty fields) are skipped and counted. A line with an unparseable timestamp
    is recorded as a ``TimestampError`` and skipped, or raised when ``strict``.

    Args:
        stream: Text stream, or a path to open.
        columns: Column positions of ``user``, ``document``, ``tag`` and ``timestamp``.
        report: Optional report that receives the line and post counts.
        strict: Raise on the first unparseable timestamp instead of skipping it.
    """
    report = report if report is not None else IngestReport()
    missing = {"user", "document", "tag", "timestamp"} - set(columns)
    if missing:
        raise ValueError(f"column mapping lacks {sorted(missing)}")

    picked = _read_frame(stream, columns, report)
    if report.malformed:
        logger.warning(f"Skipped {report.malformed} malformed lines")
    if picked.empty:
        logger.info(f"Parsed {report.lines} lines into 0 posts")
        return TaggingDataset.empty()

    parsed = pd.to_datetime(picked["timestamp"], errors="coerce", format="ISO8601", utc=True)
    bad = parsed.isna()
    for number, value in zip(picked.index[bad], picked["timestamp"][bad]):
        error = TimestampError(int(number), value)
        if strict:
            raise error
        report.timestamp_errors.append(error)
    if bad.any():
        logger.warning(f"Skipped {int(bad.sum())} lines with unparseable timestamps")
    picked = picked.assign(timestamp=parsed.dt.tz_localize(None))[~bad]

    before = len(picked)
    picked = picked.drop_duplicates(subset=["user", "document", "tag", "timestamp"])
    report.duplicates = before - len(picked)

    posts = [
        Post(user, document, frozenset(group["tag"]), timestamp.to_pydatetime())
        for (user, document, timestamp), group in picked.groupby(["user", "document", "timestamp"], sort=True)
    ]
    dataset = TaggingDataset.from_posts(posts)
    report.posts = len(dataset)
    logger.info(f"Parsed {report.lines} lines into {report.posts} posts")
    return dataset


def _removed_by_profile(tag: str, profile: CleaningProfile) -> bool:
    if tag in _PROFILE_EXACT[profile]:
        return True
    return any(fnmatchcase(tag, pattern) for pattern in _PROFILE_PATTERNS[profile])


def clean_tags(dataset: TaggingDataset, profile: CleaningProfile = "generic") -> TaggingDataset:
    """Lower-case all tags and drop profile-specific generated tags.

    Duplicate assignments produced by case folding collapse, and posts left
    without tags are removed.
    """
    if profile not in _PROFILE_EXACT:
        raise ValueError(f"unknown cleaning profile {profile!r}; expected one of {sorted(_PROFILE_EXACT)}")
    cleaned: list[Post] = []
    dropped_posts = 0
    for post in dataset.posts:
        tags = {tag.lower() for tag in post.tags}
        tags = {tag for tag in tags if tag and not _removed_by_profile(tag, profile)}
        if not tags:
            dropped_posts += 1
            continue
        cleaned.append(post.replace_tags(tags))
    result = TaggingDataset.from_posts(cleaned)
    logger.info(
        f"Cleaned with profile {profile!r}: {len(dataset)} -> {len(result)} posts "
        f"({dataset.n_assignments - result.n_assignments} assignments removed, {dropped_posts} posts emptied)"
    )
    return result


def _iso(timestamp: datetime | None) -> str:
    return timestamp.isoformat() if timestamp is not None else ""


def write_posts(dataset: TaggingDataset | Iterable[Post], target: IO[str] | str | Path) -> int:
    """Write posts as one ``user \\t document \\t tag \\t timestamp`` line per assignment."""
    lines = [
        f"{post.user}\t{post.document}\t{tag}\t{_iso(post.timestamp)}\n"
        for post in dataset
        for tag in sorted(post.tags)
    ]
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            handle.writelines(lines)
    else:
        target.writelines(lines)
    return len(lines)


def write_queries(queries: Sequence[QueryPost], target: IO[str] | str | Path) -> int:
    """Write evaluation queries in the post TSV format (true tags as tag column)."""
    posts = [
        Post(q.user, q.document, q.true_tags or frozenset(), q.timestamp or _EPOCH) for q in queries
    ]
    return write_posts(posts, target)


def read_queries(source: IO[str] | str | Path) -> list[QueryPost]:
    """Read queries written by ``write_queries`` (or any post TSV)."""
    return [QueryPost.from_post(post) for post in parse_posts(source)]
