"""Main entrypoint for the tag recommendation graph.

The graph answers one ``QueryPost``: it builds the preference vector, spreads
weight over the training graph, reads tag scores and keeps the top N. Queries
whose user and document are both unknown are routed to a popular-tags fallback.
"""

from __future__ import annotations

import logging
from dataclasses import asdict
from typing import Any, Mapping

from langchain_core.runnables import RunnableConfig
from langgraph.graph import StateGraph

from recommendation_graph.configuration import Configuration
from recommendation_graph.dataset import QueryPost
from recommendation_graph.services import DEFAULT_FALLBACK_NEIGHBORS, RecommenderResources
from recommendation_graph.spreading import (
    EmptyPreferenceError,
    TagRanking,
    combine_from_cache,
    differential_weights,
    folkrank_spread,
    make_preference_vector,
    tag_scores,
)
from recommendation_graph.state import InputState, State

logger = logging.getLogger(__name__)


def _content_preferences(state: State, configuration: Configuration) -> Any:
    """Word vector, similar documents, or ``None`` for the query document alone."""
    resources = state.resources
    document = state.query.document
    if configuration.variant == "content":
        if resources.content is None:
            raise RuntimeError("the content variant needs a document content model")
        return resources.content.vector(document) or None
    if configuration.k_similar <= 0 or resources.content is None:
        return None
    if configuration.content_policy == "new-documents" and document in resources.train_documents:
        return None
    return resources.similar_documents(document, configuration.k_similar) or None


def build_preferences(state: State, *, config: RunnableConfig) -> dict[str, Any]:
    """Build the query's preference vector, or mark the query for the fallback."""
    configuration = Configuration.from_runnable_config(config)
    resources = state.resources
    content_prefs = _content_preferences(state, configuration)
    baseline = (
        configuration.baseline_share
        if configuration.spreader == "iterative" and configuration.mode == "differential" and not configuration.precompute
        else 0.0
    )
    try:
        prefs = make_preference_vector(
            state.query,
            resources.graph,
            resources.balance(configuration),
            content_prefs,
            total=configuration.total_weight,
            baseline_share=baseline,
        )
    except EmptyPreferenceError as exc:
        has_content = resources.content is not None and state.query.document in resources.content
        fallback = "content" if has_content else "global"
        logger.debug(f"Query ({state.query.user}, {state.query.document}) falls back to {fallback}: {exc}")
        return {"fallback": fallback, "trace": {"node": "build_preferences", "fallback": fallback}}

    similar = content_prefs if content_prefs is not None and not isinstance(content_prefs, Mapping) else None
    return {
        "preferences": prefs,
        "similar": similar,
        "trace": {"node": "build_preferences", "entries": len(prefs.entries)},
    }


def route_preferences(state: State) -> str:
    """Spread weights when a preference vector exists, otherwise use popular tags."""
    if state.preferences is None:
        return "fallback_popular"
    return "spread_weights"


def spread_weights(state: State, *, config: RunnableConfig) -> dict[str, Any]:
    """Spread weight from the preference vector with the configured spreader."""
    configuration = Configuration.from_runnable_config(config)
    resources = state.resources
    prefs = state.preferences
    if prefs is None:
        raise RuntimeError("spread_weights needs a preference vector")

    if configuration.spreader == "pathrank" or configuration.precompute:
        vector = combine_from_cache(prefs, resources.spread_cache(configuration))
        return {
            "weights": vector.weights,
            "edges_traversed": vector.edges_traversed,
            "trace": {"node": "spread_weights", "spreader": configuration.spreader, "combined": len(prefs.entries)},
        }
    if configuration.mode == "differential":
        weights = differential_weights(
            resources.graph,
            prefs,
            configuration.d,
            configuration.epsilon,
            global_weights=resources.global_weights(configuration),
            max_iterations=configuration.max_iterations,
        )
        return {"weights": weights, "trace": {"node": "spread_weights", "mode": "differential"}}
    vector = folkrank_spread(
        resources.graph, prefs, configuration.d, configuration.epsilon, max_iterations=configuration.max_iterations
    )
    return {
        "weights": vector.weights,
        "edges_traversed": vector.edges_traversed,
        "trace": {"node": "spread_weights", "mode": "zero-pref", "iterations": vector.iterations},
    }


def _ranking_mode(configuration: Configuration) -> str:
    return "pathrank" if configuration.spreader == "pathrank" else configuration.mode


def score_tags(state: State, *, config: RunnableConfig) -> dict[str, Any]:
    """Read tag scores off the node weights and keep the top N."""
    configuration = Configuration.from_runnable_config(config)
    if state.weights is None:
        raise RuntimeError("score_tags needs spread weights")
    ranking = tag_scores(
        state.weights, state.resources.graph, configuration.retrieval, mode=_ranking_mode(configuration)
    )
    return {"ranking": ranking.top(configuration.top_n)}


def fallback_popular(state: State, *, config: RunnableConfig) -> dict[str, Any]:
    """Recommend content-related popular tags, or the global ranking when there is no content."""
    configuration = Configuration.from_runnable_config(config)
    resources = state.resources
    ranking: TagRanking | None = None
    if state.fallback == "content":
        neighbors = configuration.k_similar or DEFAULT_FALLBACK_NEIGHBORS
        ranking = resources.content_popular(state.query.document, neighbors)
    if not ranking:
        global_ranking = resources.global_ranking(configuration)
        ranking = TagRanking(global_ranking.entries, global_ranking.mode, "global")
    return {
        "ranking": ranking.top(configuration.top_n),
        "fallback": ranking.fallback,
        "trace": {"node": "fallback_popular", "fallback": ranking.fallback},
    }


builder = StateGraph(State, input=InputState, config_schema=Configuration)
builder.add_node("build_preferences", build_preferences)
builder.add_node("spread_weights", spread_weights)
builder.add_node("score_tags", score_tags)
builder.add_node("fallback_popular", fallback_popular)

builder.add_edge("__start__", "build_preferences")
builder.add_conditional_edges(
    "build_preferences",
    route_preferences,
    {
        "spread_weights": "spread_weights",
        "fallback_popular": "fallback_popular",
    },
)
builder.add_edge("spread_weights", "score_tags")
builder.add_edge("score_tags", "__end__")
builder.add_edge("fallback_popular", "__end__")

graph = builder.compile(
    interrupt_before=[],
    interrupt_after=[],
)
graph.name = "TagRecommendationGraph"


def recommend(
    query: QueryPost,
    resources: RecommenderResources,
    configuration: Configuration | Mapping[str, Any] | None = None,
) -> TagRanking:
    """Run the recommendation graph for one query and return its top-N tags.

    A mapping is validated like a configuration file, so unknown keys fail
    before any computation.
    """
    if configuration is None:
        configuration = Configuration()
    elif not isinstance(configuration, Configuration):
        configuration = Configuration.from_mapping(configuration)
    result = graph.invoke(
        {"query": query, "resources": resources},
        config={"configurable": asdict(configuration)},
    )
    return result["ranking"]
