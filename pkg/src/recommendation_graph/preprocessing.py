"""Post-cores, train/test splits, stratified sampling and the max-recall oracle."""

from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Literal, Mapping, Sequence

import numpy as np
import pandas as pd

from recommendation_graph.dataset import Post, QueryPost, TaggingDataset

logger = logging.getLogger(__name__)

SplitMethod = Literal["date", "leave-one-out"]
Window = timedelta | pd.DateOffset

_WINDOW_PATTERN = re.compile(r"^\s*(\d+)\s*([a-zA-Z]+)\s*$")
_WINDOW_UNITS = {
    "d": "days",
    "day": "days",
    "days": "days",
    "w": "weeks",
    "week": "weeks",
    "weeks": "weeks",
    "h": "hours",
    "hour": "hours",
    "hours": "hours",
    "m": "months",
    "month": "months",
    "months": "months",
    "y": "years",
    "year": "years",
    "years": "years",
}


def parse_window(text: str) -> Window:
    """Parse ``"10D"``, ``"2M"``, ``"12months"`` or ``"1y"`` into a window.

    Day, week and hour units become a ``timedelta``; month and year units become a
    calendar ``pd.DateOffset``.
    """
    match = _WINDOW_PATTERN.match(text)
    if not match:
        raise ValueError(f"cannot parse window {text!r}; expected e.g. '10D' or '2M'")
    amount = int(match.group(1))
    unit = _WINDOW_UNITS.get(match.group(2).lower())
    if unit is None:
        raise ValueError(f"unknown window unit in {text!r}")
    if amount <= 0:
        raise ValueError("window must be positive")
    if unit in ("months", "years"):
        return pd.DateOffset(**{unit: amount})
    return timedelta(**{unit: amount})


def _calendar_months(window: pd.DateOffset) -> int:
    kwds = dict(window.kwds)
    months = (kwds.pop("months", 0) + 12 * kwds.pop("years", 0)) * window.n
    if kwds:
        raise ValueError(f"calendar windows take months or years only, got {sorted(kwds)}")
    return months


def _check_window(window: Window) -> None:
    if isinstance(window, pd.DateOffset):
        if _calendar_months(window) <= 0:
            raise ValueError("window must be positive")
    elif not isinstance(window, timedelta):
        raise TypeError(f"unsupported window type {type(window).__name__}")
    elif window <= timedelta(0):
        raise ValueError("window must be positive")


def _window_start(end: datetime, window: Window) -> tuple[datetime, bool]:
    """Return the window's lower bound and whether the bound is inclusive.

    Calendar windows cover whole months counted back from the month of ``end``;
    duration windows cover the half-open interval ``(end - window, end]``.
    """
    if isinstance(window, pd.DateOffset):
        month_start = pd.Timestamp(end).normalize().replace(day=1)
        start = month_start - pd.DateOffset(months=_calendar_months(window) - 1)
        return start.to_pydatetime(), True
    return end - window, False


def _in_window(timestamp: datetime, start: datetime, inclusive: bool) -> bool:
    return timestamp >= start if inclusive else timestamp > start


def compute_post_core(dataset: TaggingDataset, n: int, *, strict: bool = False) -> TaggingDataset:
    """Return the post-core at level ``n``.

    The result is the maximal sub-dataset in which every user, document and tag
    appears in at least ``n`` posts, computed as the fixed point of iterative
    removal. By default a failing tag removes only its assignment and a post is
    dropped once it has no tags left; ``strict`` drops the whole post instead.
    """
    if n < 1:
        raise ValueError("post-core level must be >= 1")
    current: dict[tuple[str, str], tuple[set[str], datetime]] = {
        (post.user, post.document): (set(post.tags), post.timestamp) for post in dataset.posts
    }
    rounds = 0
    while True:
        rounds += 1
        users = Counter(user for user, _ in current)
        documents = Counter(document for _, document in current)
        tags = Counter(tag for tag_set, _ in current.values() for tag in tag_set)
        changed = False
        for key in list(current):
            user, document = key
            tag_set, _ = current[key]
            if users[user] < n or documents[document] < n:
                del current[key]
                changed = True
                continue
            failing = {tag for tag in tag_set if tags[tag] < n}
            if not failing:
                continue
            changed = True
            if strict or failing == tag_set:
                del current[key]
            else:
                tag_set -= failing
        if not changed:
            break
    result = TaggingDataset.from_posts(
        Post(user, document, frozenset(tag_set), timestamp)
        for (user, document), (tag_set, timestamp) in current.items()
    )
    logger.info(f"Post-core n={n}{' (strict)' if strict else ''}: {len(dataset)} -> {len(result)} posts in {rounds} rounds")
    return result


def date_split(
    dataset: TaggingDataset,
    test_window: Window,
    *,
    train_window: Window | None = None,
) -> tuple[TaggingDataset, list[QueryPost]]:
    """Split off the most recent ``test_window`` of the data as test posts.

    With ``train_window`` the training part keeps only the posts within that
    window before the test period.
    """
    _check_window(test_window)
    if train_window is not None:
        _check_window(train_window)
    span = dataset.time_range()
    if span is None:
        return TaggingDataset.empty(), []
    _, end = span
    test_start, inclusive = _window_start(end, test_window)
    test_posts = [post for post in dataset.posts if _in_window(post.timestamp, test_start, inclusive)]
    train_posts = [post for post in dataset.posts if not _in_window(post.timestamp, test_start, inclusive)]

    if train_window is not None and train_posts:
        if isinstance(train_window, pd.DateOffset):
            lower = (pd.Timestamp(test_start) - train_window).to_pydatetime()
            train_posts = [post for post in train_posts if post.timestamp >= lower]
        else:
            train_posts = [post for post in train_posts if post.timestamp > test_start - train_window]

    train = TaggingDataset.from_posts(train_posts)
    test = [QueryPost.from_post(post) for post in test_posts]
    logger.info(f"Date split at {test_start.isoformat()}: {len(train)} train posts, {len(test)} test posts")
    return train, test


def leave_one_out_split(dataset: TaggingDataset) -> tuple[TaggingDataset, list[QueryPost]]:
    """Move every user's most recent post to the test set.

    Timestamp ties are broken by document id: among equally recent posts the
    lexicographically greatest document id is treated as the most recent.
    """
    if not len(dataset):
        raise ValueError("leave-one-out split needs a non-empty dataset")
    latest: dict[str, Post] = {}
    for post in dataset.posts:
        current = latest.get(post.user)
        if current is None or (post.timestamp, post.document) > (current.timestamp, current.document):
            latest[post.user] = post
    held_out = {(post.user, post.document) for post in latest.values()}
    train = TaggingDataset.from_posts(p for p in dataset.posts if (p.user, p.document) not in held_out)
    test = [QueryPost.from_post(post) for post in sorted(latest.values(), key=lambda p: (p.user, p.document))]
    logger.info(f"Leave-one-out split: {len(train)} train posts, {len(test)} test posts")
    return train, test


def tuning_split(
    train: TaggingDataset,
    method: SplitMethod = "date",
    *,
    test_window: Window | None = None,
    train_window: Window | None = None,
) -> tuple[TaggingDataset, list[QueryPost]]:
    """Apply the split procedure again to the training data for parameter tuning."""
    if method == "leave-one-out":
        return leave_one_out_split(train)
    if test_window is None:
        raise ValueError("a date tuning split needs a test window")
    return date_split(train, test_window, train_window=train_window)


@dataclass
class SampleReport:
    """Strata and counts of a stratified document sample."""

    seed: int
    target_posts: int
    sampled_posts: int = 0
    sampled_documents: int = 0
    strata: dict[int, dict[str, int]] = field(default_factory=dict)

    def as_dict(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "target_posts": self.target_posts,
            "sampled_posts": self.sampled_posts,
            "sampled_documents": self.sampled_documents,
            "strata": {str(k): v for k, v in sorted(self.strata.items())},
        }


def stratified_sample(
    dataset: TaggingDataset,
    target_posts: int,
    seed: int,
    *,
    report: SampleReport | None = None,
) -> TaggingDataset:
    """Draw a document sample stratified by the documents' post counts.

    Documents are binned by post count and shuffled within each bin with a
    generator seeded by ``seed``. Bins are then visited by largest deficit
    against their share of all documents, so the sample keeps the input's
    distribution of documents over post counts. All posts of every drawn
    document are kept; drawing stops once the accumulated post count reaches
    ``target_posts``.
    """
    total = len(dataset)
    if target_posts < 1:
        raise ValueError("target_posts must be positive")
    if target_posts > total:
        raise ValueError(f"target of {target_posts} posts exceeds the {total} available")

    bins: dict[int, list[str]] = defaultdict(list)
    for document in sorted(dataset.document_index):
        bins[len(dataset.document_index[document])].append(document)
    rng = np.random.default_rng(seed)
    queues = {size: [docs[i] for i in rng.permutation(len(docs))] for size, docs in sorted(bins.items())}
    n_documents = sum(len(docs) for docs in bins.values())
    shares = {size: len(docs) / n_documents for size, docs in bins.items()}
    taken: Counter[int] = Counter()

    chosen: list[str] = []
    accumulated = 0
    while accumulated < target_posts:
        drawn = len(chosen) + 1
        size = max(
            (s for s in queues if taken[s] < len(queues[s])),
            key=lambda s: (shares[s] * drawn - taken[s], -s),
        )
        chosen.append(queues[size][taken[size]])
        taken[size] += 1
        accumulated += size

    keep = set(chosen)
    sample = TaggingDataset.from_posts(post for post in dataset.posts if post.document in keep)
    if report is not None:
        report.sampled_posts = len(sample)
        report.sampled_documents = len(chosen)
        report.strata = {size: {"available": len(bins[size]), "sampled": taken[size]} for size in sorted(bins)}
    logger.info(f"Stratified sample (seed={seed}): {len(chosen)} documents, {len(sample)} posts")
    return sample


def stratified_samples(
    dataset: TaggingDataset, target_posts: int, seeds: Sequence[int]
) -> list[tuple[TaggingDataset, SampleReport]]:
    """Draw one sample per seed, for sample-size variation studies."""
    samples = []
    for seed in seeds:
        report = SampleReport(seed=seed, target_posts=target_posts)
        samples.append((stratified_sample(dataset, target_posts, seed, report=report), report))
    return samples


def theoretical_max_recall(
    train: TaggingDataset, test: Sequence[QueryPost], n_values: Sequence[int]
) -> Mapping[int, float]:
    """Best achievable mean recall@N when only training tags can be recommended.

    Each test post contributes ``min(N, |true tags known in train|) / |true tags|``.
    Posts without true tags are skipped.
    """
    scored = [query for query in test if query.true_tags]
    if not scored:
        raise ValueError("theoretical max recall needs test posts with true tags")
    if any(n < 1 for n in n_values):
        raise ValueError("N values must be positive")
    known = train.tag_index
    counts = np.array([sum(1 for tag in q.true_tags or () if tag in known) for q in scored], dtype=float)
    sizes = np.array([len(q.true_tags or ()) for q in scored], dtype=float)
    return {n: float(np.mean(np.minimum(n, counts) / sizes)) for n in n_values}
