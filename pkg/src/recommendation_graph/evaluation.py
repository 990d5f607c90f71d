"""Recall, precision and F1 at N, experiment runs and result files."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Collection, Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from recommendation_graph.configuration import Configuration
from recommendation_graph.content import DocumentContentModel
from recommendation_graph.dataset import QueryPost, TaggingDataset
from recommendation_graph.graph import recommend
from recommendation_graph.services import RecommenderResources

logger = logging.getLogger(__name__)

Recommender = Callable[[QueryPost], Sequence[str]]
RankedRecommender = Callable[[QueryPost], tuple[list[str], str | None]]

SUMMARY_FILE = "summary.csv"
TIMINGS_FILE = "timings.csv"
DETAILS_FILE = "details.tsv"
CURVE_FILE = "recall_at_n.dat"
RESULT_FILE = "result.json"


def recall_precision_f1(recommended: Sequence[str], true_tags: Collection[str], n: int) -> tuple[float, float, float]:
    """Score the top ``n`` recommendations against the true tags.

    Precision is taken over the tags actually recommended, which may be fewer
    than ``n``.
    """
    if not true_tags:
        raise ValueError("true tags must be non-empty")
    if n < 1:
        raise ValueError("n must be positive")
    top = list(dict.fromkeys(recommended))[:n]
    hits = len(set(top) & set(true_tags))
    recall = hits / len(set(true_tags))
    precision = hits / len(top) if top else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return recall, precision, f1


class PostDetail(BaseModel):
    """Per-post outcome of an experiment; one metric entry per evaluated N."""

    user: str
    document: str
    true_tags: list[str]
    recommended: list[str]
    recall: list[float]
    precision: list[float]
    f1: list[float]
    fallback: str | None = None
    error: str | None = None


class MetricsAtN(BaseModel):
    n: int
    recall: float
    precision: float
    f1: float
    posts: int


class EvalResult(BaseModel):
    """Mean metrics per N with the per-post details they were averaged from."""

    config_hash: str
    configuration: dict[str, Any]
    seed: int
    n_values: list[int]
    metrics: list[MetricsAtN]
    details: list[PostDetail] = Field(default_factory=list, repr=False)
    excluded_posts: int = 0
    failed_posts: int = 0
    fallback_posts: int = 0
    averaging: Literal["macro"] = "macro"
    precision_denominator: Literal["recommended"] = "recommended"
    seconds: float = 0.0

    def at(self, n: int) -> MetricsAtN:
        for metrics in self.metrics:
            if metrics.n == n:
                return metrics
        raise LookupError(f"no metrics for N={n}")

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "config_hash": self.config_hash,
                    "N": m.n,
                    "recall": m.recall,
                    "precision": m.precision,
                    "f1": m.f1,
                    "posts": m.posts,
                }
                for m in self.metrics
            ]
        )


def _evaluate_post(query: QueryPost, ranked: RankedRecommender, n_values: Sequence[int]) -> PostDetail:
    true_tags = sorted(query.true_tags or ())
    try:
        recommended, fallback = ranked(query)
    except Exception as exc:  # noqa: BLE001
        logger.warning(f"Recommender failed for ({query.user}, {query.document}): {exc}")
        zeros = [0.0] * len(n_values)
        return PostDetail(
            user=query.user,
            document=query.document,
            true_tags=true_tags,
            recommended=[],
            recall=zeros,
            precision=zeros,
            f1=zeros,
            error=f"{type(exc).__name__}: {exc}",
        )
    scores = [recall_precision_f1(recommended, true_tags, n) for n in n_values]
    return PostDetail(
        user=query.user,
        document=query.document,
        true_tags=true_tags,
        recommended=recommended,
        recall=[s[0] for s in scores],
        precision=[s[1] for s in scores],
        f1=[s[2] for s in scores],
        fallback=fallback,
    )


def _ranked_recommender(
    train: TaggingDataset,
    configuration: Configuration,
    top_n: int,
    content: DocumentContentModel | None,
    resources: RecommenderResources | None,
    recommender: Recommender | None,
) -> RankedRecommender:
    """Return a callable giving the recommended tags and the fallback used, if any."""
    if recommender is not None:
        custom = recommender
        return lambda query: (list(custom(query)), None)
    run_configuration = configuration.with_overrides({"top_n": top_n})
    engine = resources if resources is not None else RecommenderResources.build(train, run_configuration, content)

    def ranked(query: QueryPost) -> tuple[list[str], str | None]:
        ranking = recommend(query, engine, run_configuration)
        return ranking.tags, ranking.fallback

    return ranked


def run_experiment(
    train: TaggingDataset,
    test: Sequence[QueryPost],
    configuration: Configuration,
    n_values: Sequence[int] | None = None,
    *,
    content: DocumentContentModel | None = None,
    resources: RecommenderResources | None = None,
    recommender: Recommender | None = None,
    output_dir: str | Path | None = None,
    progress: bool = True,
) -> EvalResult:
    """Recommend tags for every test post and average recall, precision and F1 per N.

    Posts without true tags are excluded and counted. A post whose
    recommendation fails is recorded with its error and scores 0. With
    ``recommender`` the given callable replaces the configured engine.
    """
    n_values = sorted(set(n_values or range(1, configuration.top_n + 1)))
    if not n_values or n_values[0] < 1:
        raise ValueError("N values must be positive")
    started = time.perf_counter()

    scored = [query for query in test if query.true_tags]
    excluded = len(test) - len(scored)
    if excluded:
        logger.warning(f"Excluded {excluded} test posts without true tags")

    ranked = _ranked_recommender(train, configuration, max(n_values), content, resources, recommender)

    with ThreadPoolExecutor(max_workers=configuration.threads) as executor:
        details = list(
            tqdm(
                executor.map(lambda q: _evaluate_post(q, ranked, n_values), scored),
                total=len(scored),
                desc=f"evaluate {configuration.config_hash()}",
                disable=not progress,
            )
        )

    metrics = _aggregate(details, n_values)
    result = EvalResult(
        config_hash=configuration.config_hash(),
        configuration=configuration.as_dict(),
        seed=configuration.seed,
        n_values=list(n_values),
        metrics=metrics,
        details=details,
        excluded_posts=excluded,
        failed_posts=sum(1 for detail in details if detail.error),
        fallback_posts=sum(1 for detail in details if detail.fallback),
        seconds=time.perf_counter() - started,
    )
    if result.failed_posts:
        logger.warning(f"{result.failed_posts} of {len(details)} posts failed and were scored 0")
    for m in metrics:
        logger.info(f"N={m.n}: recall={m.recall:.4f} precision={m.precision:.4f} f1={m.f1:.4f}")
    if output_dir is not None:
        write_results([result], output_dir)
    return result


def _aggregate(details: Sequence[PostDetail], n_values: Sequence[int]) -> list[MetricsAtN]:
    if not details:
        return [MetricsAtN(n=n, recall=0.0, precision=0.0, f1=0.0, posts=0) for n in n_values]
    recall = np.array([d.recall for d in details], dtype=float)
    precision = np.array([d.precision for d in details], dtype=float)
    f1 = np.array([d.f1 for d in details], dtype=float)
    return [
        MetricsAtN(
            n=n,
            recall=float(recall[:, i].mean()),
            precision=float(precision[:, i].mean()),
            f1=float(f1[:, i].mean()),
            posts=len(details),
        )
        for i, n in enumerate(n_values)
    ]


def run_sweep(
    train: TaggingDataset,
    test: Sequence[QueryPost],
    configuration: Configuration,
    key: str,
    values: Sequence[Any],
    n_values: Sequence[int] | None = None,
    *,
    content: DocumentContentModel | None = None,
    output_dir: str | Path | None = None,
    progress: bool = True,
) -> list[EvalResult]:
    """Run one experiment per value of a configuration key.

    Graphs are rebuilt only when the graph variant changes.
    """
    resources_by_variant: dict[str, RecommenderResources] = {}
    results = []
    for value in values:
        swept = configuration.with_overrides({key: value})
        resources = resources_by_variant.get(swept.variant)
        if resources is None:
            resources = RecommenderResources.build(train, swept, content)
            resources_by_variant[swept.variant] = resources
        logger.info(f"Sweep {key}={value} ({swept.config_hash()})")
        results.append(
            run_experiment(train, test, swept, n_values, content=content, resources=resources, progress=progress)
        )
    if output_dir is not None:
        write_results(results, output_dir)
    return results


def details_frame(result: EvalResult) -> pd.DataFrame:
    rows = []
    for detail in result.details:
        row: dict[str, Any] = {
            "user": detail.user,
            "document": detail.document,
            "true_tags": ",".join(detail.true_tags),
            "recommended": ",".join(detail.recommended),
            "fallback": detail.fallback or "",
            "error": detail.error or "",
        }
        for i, n in enumerate(result.n_values):
            row[f"recall@{n}"] = detail.recall[i]
            row[f"precision@{n}"] = detail.precision[i]
            row[f"f1@{n}"] = detail.f1[i]
        rows.append(row)
    return pd.DataFrame(rows)


def write_results(results: Sequence[EvalResult], output_dir: str | Path) -> list[Path]:
    """Write summary, timing, per-post detail and plot files for one or more results.

    ``summary.csv`` depends only on the inputs and configuration; wall-clock
    times go to ``timings.csv``.
    """
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    summary = pd.concat([r.summary_frame() for r in results], ignore_index=True)
    summary.to_csv(directory / SUMMARY_FILE, index=False, float_format="%.10f", lineterminator="\n")
    written.append(directory / SUMMARY_FILE)

    timings = pd.DataFrame(
        [{"config_hash": r.config_hash, "seconds": round(r.seconds, 6), "posts": len(r.details)} for r in results]
    )
    timings.to_csv(directory / TIMINGS_FILE, index=False, lineterminator="\n")
    written.append(directory / TIMINGS_FILE)

    for result in results:
        suffix = "" if len(results) == 1 else f"-{result.config_hash}"
        details_path = directory / DETAILS_FILE.replace(".tsv", f"{suffix}.tsv")
        details_frame(result).to_csv(details_path, sep="\t", index=False, float_format="%.10f", lineterminator="\n")
        curve_path = directory / CURVE_FILE.replace(".dat", f"{suffix}.dat")
        lines = ["# N recall precision f1\n"] + [
            f"{m.n} {m.recall:.10f} {m.precision:.10f} {m.f1:.10f}\n" for m in result.metrics
        ]
        curve_path.write_text("".join(lines), encoding="utf-8")
        result_path = directory / RESULT_FILE.replace(".json", f"{suffix}.json")
        result_path.write_text(result.model_dump_json(indent=2, exclude={"details", "seconds"}), encoding="utf-8")
        written.extend([details_path, curve_path, result_path])
    return written
