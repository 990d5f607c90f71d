"""Seeded synthetic folksonomies and small hand-built fixtures.

The generator produces topic-structured tagging data with titles, spread over
a fixed number of calendar months. The fixtures are tiny datasets whose
spreading behaviour can be worked out by hand.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import pandas as pd

from recommendation_graph.dataset import Post, TaggingDataset, write_posts

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2023, 1, 1)
_COMMON_WORDS = ("study", "analysis", "method", "model", "approach", "results", "system", "network")


@dataclass(frozen=True)
class SyntheticFolksonomy:
    dataset: TaggingDataset
    content: pd.DataFrame
    seed: int
    months: int


def _popularity(n: int, exponent: float = 0.8) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1) ** exponent
    return weights / weights.sum()


def _month_bounds(start: datetime, month: int) -> tuple[datetime, int]:
    """First instant of the ``month``-th month after ``start`` and its length in seconds."""
    begin = (pd.Timestamp(start) + pd.DateOffset(months=month)).to_pydatetime()
    end = (pd.Timestamp(start) + pd.DateOffset(months=month + 1)).to_pydatetime()
    return begin, int((end - begin).total_seconds())


def generate_folksonomy(
    *,
    n_users: int = 60,
    n_documents: int = 200,
    n_tags: int = 80,
    n_posts: int = 1000,
    n_topics: int = 8,
    months: int = 14,
    seed: int = 0,
    start: datetime = DEFAULT_START,
) -> SyntheticFolksonomy:
    """Generate a topic-structured folksonomy with document titles.

    Every tag and document belongs to one topic; users are interested in one
    or two topics and tag documents of those topics with topic tags. Users,
    documents and tags follow a power-law popularity. Timestamps are spread
    over ``months`` calendar months from ``start``; each month holds at least
    one post when ``n_posts >= months``.
    """
    if min(n_users, n_documents, n_tags, n_posts, n_topics, months) < 1:
        raise ValueError("generator sizes must be positive")
    if n_tags < n_topics or n_documents < n_topics:
        raise ValueError("need at least one tag and one document per topic")
    rng = np.random.default_rng(seed)

    tags = [f"tag{i:03d}" for i in range(n_tags)]
    documents = [f"doc{i:04d}" for i in range(n_documents)]
    users = [f"user{i:03d}" for i in range(n_users)]
    tags_by_topic = [[tag for i, tag in enumerate(tags) if i % n_topics == topic] for topic in range(n_topics)]
    docs_by_topic = [[doc for i, doc in enumerate(documents) if i % n_topics == topic] for topic in range(n_topics)]
    interests = [
        rng.choice(n_topics, size=min(n_topics, 1 + int(rng.integers(2))), replace=False) for _ in users
    ]
    user_weights = _popularity(n_users)

    posts: list[Post] = []
    seen: set[tuple[str, str]] = set()
    attempts = 0
    while len(posts) < n_posts and attempts < n_posts * 50:
        attempts += 1
        u = int(rng.choice(n_users, p=user_weights))
        topic = int(rng.choice(interests[u]))
        topic_docs = docs_by_topic[topic]
        document = topic_docs[int(rng.choice(len(topic_docs), p=_popularity(len(topic_docs))))]
        if (users[u], document) in seen:
            continue
        topic_tags = tags_by_topic[topic]
        size = min(len(topic_tags), 1 + int(rng.poisson(1.5)))
        chosen = rng.choice(len(topic_tags), size=size, replace=False, p=_popularity(len(topic_tags)))
        month = len(posts) if len(posts) < months else int(rng.integers(months))
        begin, length = _month_bounds(start, month)
        timestamp = begin + timedelta(seconds=int(rng.integers(length)))
        seen.add((users[u], document))
        posts.append(Post(users[u], document, frozenset(topic_tags[i] for i in chosen), timestamp))
    if len(posts) < n_posts:
        logger.warning(f"Generated {len(posts)} of {n_posts} posts; the user/document space is too small")

    rows = []
    for i, document in enumerate(documents):
        topic = i % n_topics
        words = [f"topic{topic}word{int(j)}" for j in rng.integers(12, size=3)]
        words.append(_COMMON_WORDS[int(rng.integers(len(_COMMON_WORDS)))])
        title = " ".join(words)
        fulltext = " ".join(words + [f"topic{topic}word{int(j)}" for j in rng.integers(12, size=8)])
        rows.append((document, title, fulltext))
        if i % 7 == 0:
            rows.append((document, f"{title} revisited", ""))
    content = pd.DataFrame(rows, columns=["document", "title", "fulltext"], dtype=str)

    dataset = TaggingDataset.from_posts(posts)
    logger.info(f"Generated synthetic folksonomy (seed={seed}): {dataset.summary()}")
    return SyntheticFolksonomy(dataset=dataset, content=content, seed=seed, months=months)


def _fixture(rows: list[tuple[str, str, set[str]]]) -> TaggingDataset:
    return TaggingDataset.from_posts(
        Post(user, document, frozenset(tags), DEFAULT_START + timedelta(days=i))
        for i, (user, document, tags) in enumerate(rows)
    )


def spreading_fraction_fixture() -> TaggingDataset:
    """Five posts where u1 sends 2/8 of its weight to t3 and d3 sends 1/2 to t4."""
    return _fixture(
        [
            ("u1", "d1", {"t1", "t2", "t3"}),
            ("u1", "d2", {"t3"}),
            ("u2", "d1", {"t4"}),
            ("u3", "d2", {"t5"}),
            ("u4", "d3", {"t4"}),
        ]
    )


def swash_back_fixture(extra_posts: int = 10) -> TaggingDataset:
    """u1 tagged t1 and t2 once each; t1 is shared with a very active user, t2 with a one-post user.

    Iterative spreading from u1 ranks t2 above t1 because weight sent from t1
    to the active user is diluted before it returns.
    """
    rows = [
        ("u1", "d1", {"t1"}),
        ("u1", "d2", {"t2"}),
        ("u2", "d3", {"t1"}),
        ("u3", "d5", {"t2"}),
    ]
    rows.extend(("u2", f"dx{i}", {f"tx{i}"}) for i in range(extra_posts))
    return _fixture(rows)


def triangle_fixture(other_users: int = 5) -> TaggingDataset:
    """u1 tagged a popular document d1 with t1 and an obscure document d2 with t2.

    Iterative spreading from u1 ranks t2 above t1 because d1 spreads its
    weight over many neighbours.
    """
    rows = [("u1", "d1", {"t1"}), ("u1", "d2", {"t2"})]
    rows.extend((f"u{i}", "d1", {f"t{i}"}) for i in range(3, 3 + other_users))
    return _fixture(rows)


FIXTURES: Mapping[str, Callable[[], TaggingDataset]] = {
    "spreading_fraction": spreading_fraction_fixture,
    "swash_back": swash_back_fixture,
    "triangle": triangle_fixture,
}

DEMO_CONFIG = """\
# Demo configuration; CLI flags override these values.
variant=folksonomy
spreader=iterative
mode=differential
b=0.5
d=0.1
top_n=10
seed=0
"""


def write_content(content: pd.DataFrame, target: str | Path) -> None:
    content[["document", "title", "fulltext"]].to_csv(target, sep="\t", header=False, index=False, lineterminator="\n")


def write_demo(output_dir: str | Path, *, seed: int = 0, n_posts: int = 1000) -> list[Path]:
    """Write the fixtures, a synthetic dataset, its titles and a config file as demo inputs."""
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in FIXTURES.items():
        path = directory / f"fixture_{name}.tsv"
        write_posts(build(), path)
        written.append(path)
    synthetic = generate_folksonomy(n_posts=n_posts, seed=seed)
    write_posts(synthetic.dataset, directory / "synthetic.tsv")
    write_content(synthetic.content, directory / "content.tsv")
    (directory / "demo.env").write_text(DEMO_CONFIG, encoding="utf-8")
    written.extend([directory / "synthetic.tsv", directory / "content.tsv", directory / "demo.env"])
    logger.info(f"Wrote {len(written)} demo files to {directory}")
    return written
