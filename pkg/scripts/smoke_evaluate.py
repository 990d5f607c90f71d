#!/usr/bin/env python3
"""Manual smoke test for the recommender on synthetic data.

Usage:
    python scripts/smoke_evaluate.py --posts 2000 --seed 3

The script:
1. Ranks tags for the hand-built fixtures and prints the rankings.
2. Generates a synthetic folksonomy, splits it by date and evaluates a few
   spreader settings against the theoretical maximum recall.

Intended for manual checks only (not part of automated CI).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any

# Ensure local src/ is importable when running from repo root
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
SRC_PATH = os.path.join(ROOT, "src")
if SRC_PATH not in sys.path:
    sys.path.insert(0, SRC_PATH)

from recommendation_graph.configuration import Configuration  # noqa: E402
from recommendation_graph.content import build_content_model  # noqa: E402
from recommendation_graph.dataset import QueryPost  # noqa: E402
from recommendation_graph.evaluation import run_experiment  # noqa: E402
from recommendation_graph.graph import recommend  # noqa: E402
from recommendation_graph.preprocessing import (  # noqa: E402
    compute_post_core,
    date_split,
    parse_window,
    theoretical_max_recall,
)
from recommendation_graph.services import RecommenderResources  # noqa: E402
from recommendation_graph.synthetic import FIXTURES, generate_folksonomy  # noqa: E402

SETTINGS: dict[str, dict[str, Any]] = {
    "differential": {},
    "zero-pref": {"mode": "zero-pref"},
    "pathrank-pl2": {"spreader": "pathrank", "pl": 2},
    "post-sum": {"variant": "post", "retrieval": "post-sum"},
    "similar-titles": {"k_similar": 5, "content_policy": "new-documents"},
}


def dump_section(title: str, payload: Any) -> None:
    """Pretty-print a section header and JSON payload."""
    print(f"\n=== {title} ===")
    if isinstance(payload, (dict, list)):
        print(json.dumps(payload, indent=2))
    else:
        print(payload)


def rank_fixtures(top_n: int) -> None:
    for name, build in FIXTURES.items():
        dataset = build()
        engine = RecommenderResources.build(dataset, Configuration())
        first = dataset.posts[0]
        rankings = {}
        for spreader in ("iterative", "pathrank"):
            ranking = recommend(QueryPost(first.user, "unseen"), engine, {"spreader": spreader, "top_n": top_n})
            rankings[spreader] = [[tag, round(score, 6)] for tag, score in ranking]
        dump_section(f"Fixture {name} (query user {first.user})", rankings)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--posts", type=int, default=1500, help="Synthetic posts to generate (default: 1500).")
    parser.add_argument("--seed", type=int, default=0, help="Generator seed (default: 0).")
    parser.add_argument("--core", type=int, default=2, help="Post-core level applied before splitting (default: 2).")
    parser.add_argument("--test-window", default="2m", help="Test period of the date split (default: 2m).")
    parser.add_argument("--top-n", type=int, default=5, help="Largest N evaluated (default: 5).")
    args = parser.parse_args()

    logging.basicConfig(level=logging.WARNING, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    rank_fixtures(args.top_n)

    synthetic = generate_folksonomy(n_posts=args.posts, seed=args.seed)
    dataset = compute_post_core(synthetic.dataset, args.core) if args.core > 1 else synthetic.dataset
    train, test = date_split(dataset, parse_window(args.test_window))
    dump_section("Split", {"train": train.summary(), "test_posts": len(test)})
    if not test:
        print("No test posts; increase --posts or the test window.")
        return

    content = build_content_model(synthetic.content, "title")
    n_values = list(range(1, args.top_n + 1))
    bound = theoretical_max_recall(train, test, n_values)
    rows = {"max-recall": [round(bound[n], 4) for n in n_values]}
    for name, overrides in SETTINGS.items():
        configuration = Configuration(top_n=args.top_n, seed=args.seed).with_overrides(overrides)
        result = run_experiment(train, test, configuration, n_values, content=content, progress=True)
        rows[name] = [round(result.at(n).recall, 4) for n in n_values]
        if result.failed_posts:
            rows[f"{name} failed"] = [result.failed_posts]
    dump_section(f"Recall@N for N={n_values}", rows)


if __name__ == "__main__":
    main()
