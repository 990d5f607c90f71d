"""Shared, read-only resources used by the recommendation graph nodes."""

from __future__ import annotations

import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

from recommendation_graph.configuration import Configuration
from recommendation_graph.content import DocumentContentModel, SimilarityList, top_k_similar
from recommendation_graph.dataset import TaggingDataset
from recommendation_graph.folksonomy_graph import GraphModel, build_graph
from recommendation_graph.spreading import (
    PrecomputeCache,
    TagRanking,
    WeightVector,
    folkrank_spread,
    original_balance,
    pathrank_cache,
    tag_scores,
    uniform_preferences,
    unit_spread_cache,
)

logger = logging.getLogger(__name__)

DEFAULT_FALLBACK_NEIGHBORS = 10


@dataclass(eq=False)
class RecommenderResources:
    """Training data, graph and content model shared by all queries of one engine.

    Derived vectors (the global ranking and per-node precompute caches) are
    computed on first use, keyed by the parameters they depend on, and never
    modified afterwards.
    """

    train: TaggingDataset
    graph: GraphModel
    content: DocumentContentModel | None = None
    _global: dict[tuple[Any, ...], WeightVector] = field(default_factory=dict, repr=False)
    _caches: dict[tuple[Any, ...], PrecomputeCache] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def build(
        cls,
        train: TaggingDataset,
        configuration: Configuration,
        content: DocumentContentModel | None = None,
    ) -> RecommenderResources:
        """Build the configured graph variant over ``train``."""
        return cls(train=train, graph=build_graph(configuration.variant, train, content), content=content)

    @cached_property
    def train_documents(self) -> frozenset[str]:
        return self.train.documents

    def balance(self, configuration: Configuration) -> float:
        if configuration.balance == "original":
            return original_balance(self.train)
        return configuration.b

    def global_weights(self, configuration: Configuration) -> WeightVector:
        """Uniform-preference spreading over the whole graph."""
        key = (configuration.d, configuration.epsilon, configuration.max_iterations, configuration.total_weight)
        with self._lock:
            cached = self._global.get(key)
        if cached is not None:
            return cached
        prefs = uniform_preferences(self.graph, configuration.total_weight)
        computed = folkrank_spread(
            self.graph, prefs, configuration.d, configuration.epsilon, max_iterations=configuration.max_iterations
        )
        logger.info(f"Computed global weights in {computed.iterations} iterations")
        with self._lock:
            return self._global.setdefault(key, computed)

    def global_ranking(self, configuration: Configuration) -> TagRanking:
        return tag_scores(self.global_weights(configuration), self.graph, configuration.retrieval, mode="global")

    def spread_cache(self, configuration: Configuration) -> PrecomputeCache:
        """Per-node weight vectors for the configured spreader."""
        if configuration.spreader == "pathrank":
            key: tuple[Any, ...] = ("pathrank", configuration.pl, configuration.backedges)
        else:
            key = ("iterative", configuration.d, configuration.epsilon, configuration.max_iterations)
        with self._lock:
            cache = self._caches.get(key)
            if cache is None:
                if configuration.spreader == "pathrank":
                    cache = pathrank_cache(self.graph, configuration.pl, configuration.backedges)
                else:
                    cache = unit_spread_cache(
                        self.graph, configuration.d, configuration.epsilon, max_iterations=configuration.max_iterations
                    )
                self._caches[key] = cache
            return cache

    def similar_documents(self, document: str, k: int) -> SimilarityList:
        if self.content is None:
            return SimilarityList(document)
        return top_k_similar(document, self.content, k, self.train_documents)

    def content_popular(self, document: str, k: int) -> TagRanking:
        """Tags of the training documents most similar to ``document``, weighted by similarity."""
        similar = self.similar_documents(document, k)
        scores: Counter[str] = Counter()
        for neighbor, similarity in similar:
            for post in self.train.posts_of_document(neighbor):
                for tag in post.tags:
                    scores[tag] += similarity
        return TagRanking.from_scores(scores, mode="content-popular", fallback="content")
