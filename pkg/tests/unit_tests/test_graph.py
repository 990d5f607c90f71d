from __future__ import annotations

from dataclasses import asdict

import pandas as pd
import pytest

from recommendation_graph import graph, recommend
from recommendation_graph.configuration import Configuration
from recommendation_graph.content import DocumentContentModel, build_content_model
from recommendation_graph.dataset import QueryPost
from recommendation_graph.services import RecommenderResources
from recommendation_graph.state import InputState
from recommendation_graph.synthetic import spreading_fraction_fixture, swash_back_fixture


@pytest.fixture
def content() -> DocumentContentModel:
    frame = pd.DataFrame(
        [
            ("d1", "graph ranking", ""),
            ("d2", "graph search", ""),
            ("d3", "web search", ""),
            ("dnew", "graph ranking methods", ""),
        ],
        columns=["document", "title", "fulltext"],
    )
    return build_content_model(frame, "title")


@pytest.fixture
def resources() -> RecommenderResources:
    return RecommenderResources.build(spreading_fraction_fixture(), Configuration())


def test_recommend_prefers_less_diluted_tag() -> None:
    engine = RecommenderResources.build(swash_back_fixture(), Configuration())

    for mode in ("differential", "zero-pref"):
        ranking = recommend(QueryPost("u1", "unseen"), engine, {"mode": mode, "epsilon": "1e-8"})
        assert ranking.tags[:2] == ["t2", "t1"]
        assert ranking.fallback is None
        assert ranking.mode == mode


def test_recommend_truncates_to_top_n(resources: RecommenderResources) -> None:
    ranking = recommend(QueryPost("u1", "d1"), resources, Configuration(top_n=2))

    assert len(ranking) == 2
    assert set(ranking.tags) <= spreading_fraction_fixture().tags


def test_unknown_user_and_document_fall_back_to_global(resources: RecommenderResources) -> None:
    ranking = recommend(QueryPost("stranger", "unseen"), resources)

    assert ranking.fallback == "global"
    assert ranking.tags == resources.global_ranking(Configuration()).top(10).tags
    assert len(ranking) == 5


def test_new_document_with_content_falls_back_to_similar_documents(content: DocumentContentModel) -> None:
    engine = RecommenderResources.build(spreading_fraction_fixture(), Configuration(), content)

    ranking = recommend(QueryPost("stranger", "dnew"), engine)

    assert ranking.fallback == "content"
    assert ranking.mode == "content-popular"
    assert ranking.tags[0] == "t3"
    assert set(ranking.tags) == {"t1", "t2", "t3", "t4", "t5"}


def test_similar_documents_replace_unknown_query_document(content: DocumentContentModel) -> None:
    engine = RecommenderResources.build(spreading_fraction_fixture(), Configuration(), content)

    ranking = recommend(QueryPost("stranger", "dnew"), engine, {"k_similar": 2, "mode": "zero-pref"})

    assert ranking.fallback is None
    assert ranking.tags[0] == "t3"


def test_content_policy_new_documents_keeps_known_document(content: DocumentContentModel) -> None:
    engine = RecommenderResources.build(spreading_fraction_fixture(), Configuration(), content)
    query = QueryPost("u2", "d1")

    plain = recommend(query, engine, {"mode": "zero-pref"})
    policy = recommend(query, engine, {"mode": "zero-pref", "k_similar": 2, "content_policy": "new-documents"})

    assert policy.entries == plain.entries


def test_content_variant_spreads_over_words(content: DocumentContentModel) -> None:
    configuration = Configuration(variant="content")
    engine = RecommenderResources.build(spreading_fraction_fixture(), configuration, content)

    ranking = recommend(QueryPost("u1", "dnew"), engine, configuration)
    missing = recommend(QueryPost("stranger", "no-text"), engine, configuration)

    assert ranking.fallback is None
    assert len(ranking) > 0
    assert missing.fallback == "global"


def test_pathrank_recommendation(resources: RecommenderResources) -> None:
    ranking = recommend(QueryPost("u1", "d2"), resources, {"spreader": "pathrank", "pl": 1})

    assert ranking.mode == "pathrank"
    assert dict(ranking.entries) == {
        "t3": pytest.approx(0.25),
        "t5": pytest.approx(0.125),
        "t1": pytest.approx(0.0625),
        "t2": pytest.approx(0.0625),
    }
    assert ranking.tags == ["t3", "t5", "t1", "t2"]


def test_precomputed_spreading_matches_direct(resources: RecommenderResources) -> None:
    settings = {"mode": "zero-pref", "d": 0.5, "epsilon": 1e-12}
    query = QueryPost("u1", "d3")

    direct = recommend(query, resources, settings)
    cached = recommend(query, resources, {**settings, "precompute": True})

    assert set(cached.tags) == set(direct.tags)
    assert dict(cached.entries) == pytest.approx(dict(direct.entries), abs=1e-9)


def test_post_sum_retrieval() -> None:
    configuration = Configuration(variant="post", retrieval="post-sum", mode="zero-pref")
    engine = RecommenderResources.build(spreading_fraction_fixture(), configuration)

    ranking = recommend(QueryPost("u1", "d1"), engine, configuration)

    assert ranking.fallback is None
    assert set(ranking.tags) <= {"t1", "t2", "t3", "t4", "t5"}
    assert len(ranking) > 0


def test_mapping_configuration_is_validated(resources: RecommenderResources) -> None:
    with pytest.raises(ValueError, match="unknown configuration key"):
        recommend(QueryPost("u1", "d1"), resources, {"damping": 0.2})


def test_graph_records_trace(resources: RecommenderResources) -> None:
    result = graph.invoke(
        {"query": QueryPost("u1", "d1"), "resources": resources},
        config={"configurable": asdict(Configuration())},
    )

    assert [record["node"] for record in result["trace"]] == ["build_preferences", "spread_weights"]
    assert result["preferences"] is not None
    assert result["ranking"].tags


def test_global_weights_are_cached(resources: RecommenderResources) -> None:
    configuration = Configuration()

    assert resources.global_weights(configuration) is resources.global_weights(configuration)
    assert resources.spread_cache(Configuration(spreader="pathrank")) is resources.spread_cache(
        Configuration(spreader="pathrank")
    )


def test_graph_takes_the_query_as_input() -> None:
    assert InputState in graph.builder.schemas
    assert {"query", "resources"} <= set(graph.builder.schemas[InputState])
