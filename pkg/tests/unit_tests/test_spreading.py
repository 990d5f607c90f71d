from __future__ import annotations

from collections import Counter
from types import MappingProxyType

import numpy as np
import pytest

from recommendation_graph.content import SimilarityList
from recommendation_graph.dataset import QueryPost, TaggingDataset
from recommendation_graph.folksonomy_graph import GraphModel, build_folksonomy_graph, build_graph, build_post_graph
from recommendation_graph.spreading import (
    ConvergenceError,
    EmptyPreferenceError,
    PreferenceVector,
    RetrievalModeError,
    TagRanking,
    WeightVector,
    combine_from_cache,
    combine_weight_vectors,
    differential_rank,
    differential_weights,
    folkrank_spread,
    make_preference_vector,
    original_balance,
    pathrank_cache,
    pathrank_spread,
    tag_scores,
    uniform_preferences,
    unit_spread_cache,
    zero_preference_rank,
)
from recommendation_graph.synthetic import (
    FIXTURES,
    generate_folksonomy,
    spreading_fraction_fixture,
    swash_back_fixture,
    triangle_fixture,
)


def _random_dataset(seed: int) -> TaggingDataset:
    rng = np.random.default_rng(seed)
    return generate_folksonomy(
        n_users=int(rng.integers(3, 30)),
        n_documents=int(rng.integers(3, 50)),
        n_tags=int(rng.integers(3, 50)),
        n_posts=int(rng.integers(5, 100)),
        n_topics=2,
        seed=seed,
    ).dataset


def _random_query(dataset: TaggingDataset, seed: int) -> QueryPost:
    rng = np.random.default_rng(seed)
    posts = dataset.posts
    return QueryPost(posts[int(rng.integers(len(posts)))].user, posts[int(rng.integers(len(posts)))].document)


def _dense_oracle(graph: GraphModel, prefs: PreferenceVector, d: float) -> np.ndarray:
    adjacency = graph.adjacency.toarray()
    transition = adjacency / adjacency.sum(axis=0, keepdims=True)
    system = np.eye(graph.n_nodes) - (1.0 - d) * transition
    return np.linalg.solve(system, d * prefs.dense(graph.n_nodes))


def _score(ranking: TagRanking, tag: str) -> float:
    return dict(ranking.entries).get(tag, 0.0)


def _assert_same_order(expected: dict[str, float], actual: TagRanking, gap: float) -> None:
    """Pairs of tags whose expected scores differ by more than ``gap`` keep their order."""
    position = {tag: i for i, tag in enumerate(actual.tags)}
    tags = sorted(expected, key=lambda t: (-expected[t], t))
    for i, a in enumerate(tags):
        for b in tags[i + 1 :]:
            if expected[a] - expected[b] > gap:
                assert position[a] < position.get(b, len(position)), (a, b)


@pytest.fixture
def fraction_graph() -> GraphModel:
    return build_folksonomy_graph(spreading_fraction_fixture())


# Preference vectors


def test_preference_vector_balances_user_and_document(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d3"), fraction_graph, 0.3, total=2.0)

    assert prefs.as_dict(fraction_graph) == {
        ("user", "u1"): pytest.approx(0.6),
        ("document", "d3"): pytest.approx(1.4),
    }
    assert prefs.dense(fraction_graph.n_nodes).sum() == pytest.approx(2.0)


def test_preference_vector_moves_mass_to_present_side(fraction_graph: GraphModel) -> None:
    only_user = make_preference_vector(QueryPost("u1", "new-doc"), fraction_graph, 0.3)
    only_document = make_preference_vector(QueryPost("new-user", "d2"), fraction_graph, 0.3)

    assert only_user.as_dict(fraction_graph) == {("user", "u1"): pytest.approx(1.0)}
    assert only_document.as_dict(fraction_graph) == {("document", "d2"): pytest.approx(1.0)}
    with pytest.raises(EmptyPreferenceError):
        make_preference_vector(QueryPost("new-user", "new-doc"), fraction_graph, 0.3)


def test_preference_vector_with_similar_documents(fraction_graph: GraphModel) -> None:
    similar = SimilarityList("new-doc", (("d1", 0.75), ("d2", 0.25)))

    prefs = make_preference_vector(QueryPost("u1", "new-doc"), fraction_graph, 0.5, similar)

    assert prefs.as_dict(fraction_graph) == {
        ("user", "u1"): pytest.approx(0.5),
        ("document", "d1"): pytest.approx(0.375),
        ("document", "d2"): pytest.approx(0.125),
    }


def test_preference_vector_baseline_share(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d1"), fraction_graph, 0.5, baseline_share=0.1)
    dense = prefs.dense(fraction_graph.n_nodes)

    assert dense.sum() == pytest.approx(1.0)
    assert dense.min() == pytest.approx(0.1 / fraction_graph.n_nodes)
    assert dense[fraction_graph.index("user", "u1")] == pytest.approx(0.45 + 0.1 / fraction_graph.n_nodes)


def test_preference_vector_validates_arguments(fraction_graph: GraphModel) -> None:
    query = QueryPost("u1", "d1")
    for kwargs in ({"b": 1.5}, {"b": -0.1}):
        with pytest.raises(ValueError):
            make_preference_vector(query, fraction_graph, **kwargs)
    with pytest.raises(ValueError):
        make_preference_vector(query, fraction_graph, 0.5, baseline_share=1.0)
    with pytest.raises(ValueError):
        make_preference_vector(query, fraction_graph, 0.5, total=0.0)


def test_original_balance() -> None:
    assert original_balance(spreading_fraction_fixture()) == pytest.approx(4 / 7)
    with pytest.raises(ValueError):
        original_balance(TaggingDataset.empty())


# Iterative spreading


@pytest.mark.parametrize("seed", range(25))
def test_iterative_spreading_matches_dense_solution(seed: int) -> None:
    dataset = _random_dataset(seed)
    graph = build_folksonomy_graph(dataset)
    prefs = make_preference_vector(_random_query(dataset, seed), graph, 0.5)

    for d in (0.1, 0.5):
        vector = folkrank_spread(graph, prefs, d, 1e-13, max_iterations=5000)
        assert np.allclose(vector.weights, _dense_oracle(graph, prefs, d), rtol=0, atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_iterative_spreading_conserves_weight(seed: int) -> None:
    dataset = _random_dataset(seed)
    graph = build_folksonomy_graph(dataset)
    total = 37.5
    prefs = make_preference_vector(_random_query(dataset, seed), graph, 0.5, total=total)

    vector = folkrank_spread(graph, prefs)

    assert vector.totals
    assert all(abs(step - total) < 1e-6 for step in vector.totals)
    assert vector.total == pytest.approx(total, abs=1e-6)


def test_iterative_spreading_counts_both_directions_of_every_edge(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d1"), fraction_graph, 0.5)

    vector = folkrank_spread(fraction_graph, prefs)

    assert vector.edges_traversed == vector.iterations * 2 * fraction_graph.n_edges


def test_iterative_spreading_is_scale_invariant(fraction_graph: GraphModel) -> None:
    query = QueryPost("u1", "d3")
    base = folkrank_spread(fraction_graph, make_preference_vector(query, fraction_graph, 0.5, total=1.0))

    for factor in (2.0, 8.0, 64.0):
        scaled = folkrank_spread(fraction_graph, make_preference_vector(query, fraction_graph, 0.5, total=factor))
        assert scaled.iterations == base.iterations
        assert np.array_equal(scaled.weights, factor * base.weights)


def test_iterative_spreading_raises_without_convergence(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d1"), fraction_graph, 0.5)

    with pytest.raises(ConvergenceError) as excinfo:
        folkrank_spread(fraction_graph, prefs, 0.1, 1e-15, max_iterations=3)

    assert excinfo.value.last.iterations == 3
    assert excinfo.value.last.total == pytest.approx(1.0)


def test_iterative_spreading_validates_parameters(fraction_graph: GraphModel) -> None:
    prefs = uniform_preferences(fraction_graph)
    with pytest.raises(ValueError):
        folkrank_spread(fraction_graph, prefs, 0.0)
    with pytest.raises(ValueError):
        folkrank_spread(fraction_graph, prefs, 0.1, 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_full_damping_returns_the_preference_vector(seed: int) -> None:
    dataset = _random_dataset(seed)
    graph = build_folksonomy_graph(dataset)
    prefs = make_preference_vector(_random_query(dataset, seed), graph, 0.5, baseline_share=0.1)

    vector = folkrank_spread(graph, prefs, 1.0, 1e-12)

    assert vector.iterations <= 2
    assert np.array_equal(vector.weights, prefs.dense(graph.n_nodes))


@pytest.mark.parametrize("seed", range(10))
def test_lower_damping_moves_weights_towards_global_popularity(seed: int) -> None:
    dataset = _random_dataset(seed)
    graph = build_folksonomy_graph(dataset)
    prefs = make_preference_vector(_random_query(dataset, seed), graph, 0.5)
    popularity = graph.strength / graph.total_strength

    distances = []
    for d in (0.9, 0.7, 0.5, 0.3, 0.1, 0.05):
        weights = folkrank_spread(graph, prefs, d, 1e-13, max_iterations=5000).weights
        distances.append(float((((weights - popularity) ** 2) / popularity).sum()))

    for closer, farther in zip(distances[1:], distances):
        assert closer <= farther * (1 + 1e-9)


def test_swash_back_favours_the_tag_of_the_quiet_user() -> None:
    graph = build_folksonomy_graph(swash_back_fixture())
    prefs = make_preference_vector(QueryPost("u1", "new"), graph, 0.5)

    ranking = zero_preference_rank(graph, prefs)

    assert _score(ranking, "t2") > _score(ranking, "t1")


def test_popular_document_spreads_less_to_its_tag() -> None:
    graph = build_folksonomy_graph(triangle_fixture())
    prefs = make_preference_vector(QueryPost("u1", "new"), graph, 0.5)

    ranking = zero_preference_rank(graph, prefs)

    assert _score(ranking, "t2") > _score(ranking, "t1")


# Differential ranking


def test_uniform_preferences_give_zero_differential_scores(fraction_graph: GraphModel) -> None:
    scores = differential_weights(fraction_graph, uniform_preferences(fraction_graph))

    assert not scores.any()


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_differential_ranking_equals_zero_preference_ranking(name: str) -> None:
    dataset = FIXTURES[name]()
    graph = build_folksonomy_graph(dataset)
    query = QueryPost("u1", "new")
    zero = zero_preference_rank(graph, make_preference_vector(query, graph, 0.5), 0.2, 1e-12)

    personalized = make_preference_vector(query, graph, 0.5, baseline_share=0.1)
    global_weights = folkrank_spread(graph, uniform_preferences(graph), 0.2, 1e-12)
    differential = differential_rank(graph, personalized, 0.2, 1e-12, global_weights=global_weights)

    assert differential.tags[:5] == zero.tags[:5]
    for tag, score in zero:
        assert _score(differential, tag) == pytest.approx(0.9 * score, abs=1e-9)


def test_differential_ranking_on_synthetic_data() -> None:
    dataset = generate_folksonomy(n_posts=400, seed=12).dataset
    graph = build_folksonomy_graph(dataset)
    query = _random_query(dataset, 12)
    zero = zero_preference_rank(graph, make_preference_vector(query, graph, 0.5), 0.2, 1e-12)

    differential = differential_rank(
        graph, make_preference_vector(query, graph, 0.5, baseline_share=0.1), 0.2, 1e-12
    )

    _assert_same_order({tag: 0.9 * score for tag, score in zero}, differential, 1e-8)


def test_zero_preference_rank_rejects_baseline(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d1"), fraction_graph, 0.5, baseline_share=0.1)

    with pytest.raises(ValueError):
        zero_preference_rank(fraction_graph, prefs)


# PathRank


def test_pathrank_equalizes_swash_back() -> None:
    graph = build_folksonomy_graph(swash_back_fixture())

    vector = pathrank_spread(graph, ("user", "u1"), 3)
    ranking = tag_scores(vector, graph, mode="pathrank")

    assert abs(_score(ranking, "t1") - _score(ranking, "t2")) < 1e-12
    assert _score(ranking, "t1") > 0


def test_pathrank_equalizes_triangle() -> None:
    graph = build_folksonomy_graph(triangle_fixture())

    vector = pathrank_spread(graph, ("user", "u1"), 3)

    weights = vector.as_dict(graph)
    assert weights[("tag", "t1")] == weights[("tag", "t2")]


def test_pathrank_levels() -> None:
    graph = build_folksonomy_graph(triangle_fixture())
    source = ("user", "u1")

    assert pathrank_spread(graph, source, 0).as_dict(graph) == {source: 1.0}
    first = pathrank_spread(graph, source, 1).as_dict(graph)
    assert first == {
        source: 1.0,
        ("document", "d1"): 0.25,
        ("document", "d2"): 0.25,
        ("tag", "t1"): 0.25,
        ("tag", "t2"): 0.25,
    }


def test_pathrank_back_edge_policies() -> None:
    graph = build_folksonomy_graph(triangle_fixture())

    discarded = pathrank_spread(graph, ("user", "u1"), 2).as_dict(graph)
    renormalized = pathrank_spread(graph, ("user", "u1"), 2, backedges="renormalize").as_dict(graph)

    assert discarded[("user", "u3")] == pytest.approx(0.25 / 12)
    assert renormalized[("user", "u3")] == pytest.approx(0.25 / 10)
    assert renormalized[("tag", "t3")] == pytest.approx(0.25 / 10)
    assert discarded[("tag", "t1")] == renormalized[("tag", "t1")] == 0.25


@pytest.mark.parametrize("seed", range(10))
def test_pathrank_traverses_each_edge_at_most_once(seed: int) -> None:
    graph = build_folksonomy_graph(_random_dataset(seed))

    for index in range(graph.n_nodes):
        for backedges in ("discard", "renormalize"):
            vector = pathrank_spread(graph, index, 50, backedges=backedges)
            assert vector.edges_traversed <= graph.n_edges


def test_pathrank_validates_arguments(fraction_graph: GraphModel) -> None:
    with pytest.raises(ValueError):
        pathrank_spread(fraction_graph, ("user", "u1"), -1)
    with pytest.raises(ValueError):
        pathrank_spread(fraction_graph, ("user", "u1"), 2, backedges="keep")  # type: ignore[arg-type]
    with pytest.raises(LookupError):
        pathrank_spread(fraction_graph, ("user", "nobody"), 2)


def _cooccurrence_scores(dataset: TaggingDataset, entries: dict[tuple[str, str], float]) -> dict[str, float]:
    """Immediate-neighbourhood tag scores computed straight from the posts."""
    total = sum(entries.values())
    scores: Counter[str] = Counter()
    for (kind, node_id), weight in entries.items():
        posts = dataset.posts_of_user(node_id) if kind == "user" else dataset.posts_of_document(node_id)
        assignments = sum(len(post.tags) for post in posts)
        for post in posts:
            for tag in post.tags:
                # a user's (or document's) strength is twice its number of assignments
                scores[tag] += weight / total / (2 * assignments)
    return dict(scores)


@pytest.mark.parametrize("seed", range(25))
def test_pathrank_path_length_one_is_cooccurrence(seed: int) -> None:
    dataset = _random_dataset(seed)
    graph = build_folksonomy_graph(dataset)
    query = _random_query(dataset, seed + 100)
    prefs = make_preference_vector(query, graph, 0.5)

    ranking = tag_scores(combine_from_cache(prefs, pathrank_cache(graph, 1)), graph, mode="pathrank")

    expected = _cooccurrence_scores(dataset, {graph.nodes[i]: w for i, w in prefs.entries.items()})
    assert set(ranking.tags) == set(expected)
    for tag, score in ranking:
        assert score == pytest.approx(expected[tag], rel=1e-12)
    _assert_same_order(expected, ranking, 1e-12)


# Combination, tag scores and caches


def test_combine_weight_vectors_normalizes_coefficients() -> None:
    a = WeightVector(np.array([1.0, 0.0]), edges_traversed=2)
    b = WeightVector(np.array([0.0, 1.0]), edges_traversed=3)

    combined = combine_weight_vectors([(a, 3.0), (b, 1.0)])

    assert np.allclose(combined.weights, [0.75, 0.25])
    assert combined.edges_traversed == 5
    with pytest.raises(ValueError):
        combine_weight_vectors([])
    with pytest.raises(ValueError):
        combine_weight_vectors([(a, 0.0)])


def test_precompute_cache_returns_the_same_vectors(fraction_graph: GraphModel) -> None:
    cache = pathrank_cache(fraction_graph, 2)
    index = fraction_graph.index("user", "u1")

    first = cache.get(index)

    assert cache.get(index) is first
    assert index in cache and len(cache) == 1
    cache.warm(fraction_graph.nodes_of_kind("document"))
    assert len(cache) == 4


def test_cached_pathrank_combination_equals_direct_spreading(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u2", "d2"), fraction_graph, 0.5)
    direct = combine_weight_vectors(
        [(pathrank_spread(fraction_graph, i, 2), w) for i, w in sorted(prefs.entries.items())]
    )

    cached = combine_from_cache(prefs, pathrank_cache(fraction_graph, 2))

    assert np.array_equal(cached.weights, direct.weights)


def test_unit_cache_combination_matches_iterative_spreading(fraction_graph: GraphModel) -> None:
    prefs = make_preference_vector(QueryPost("u1", "d3"), fraction_graph, 0.4)

    combined = combine_from_cache(prefs, unit_spread_cache(fraction_graph, 0.5, 1e-13))
    direct = folkrank_spread(fraction_graph, prefs, 0.5, 1e-13)

    assert combined.total == pytest.approx(1.0)
    assert np.allclose(combined.weights, direct.weights, rtol=0, atol=1e-10)


def test_combine_from_cache_needs_entries(fraction_graph: GraphModel) -> None:
    with pytest.raises(ValueError):
        combine_from_cache(uniform_preferences(fraction_graph), pathrank_cache(fraction_graph, 1))


def test_post_sum_retrieval() -> None:
    dataset = spreading_fraction_fixture()
    graph = build_post_graph(dataset)
    weights = np.zeros(graph.n_nodes)
    for post in graph.nodes_of_kind("post"):
        weights[post] = 1.0

    ranking = tag_scores(weights, graph, "post-sum")

    assert dict(ranking.entries) == {"t1": 1.0, "t2": 1.0, "t3": 2.0, "t4": 2.0, "t5": 1.0}
    assert ranking.tags[:2] == ["t3", "t4"]
    folksonomy = build_graph("folksonomy", dataset)
    with pytest.raises(RetrievalModeError):
        tag_scores(np.ones(folksonomy.n_nodes), folksonomy, "post-sum")


def test_tag_ranking_keeps_positive_scores_in_order() -> None:
    ranking = TagRanking.from_scores({"b": 0.5, "a": 0.5, "c": 0.0, "d": -1.0, "e": 0.7}, "zero-pref")

    assert ranking.tags == ["e", "a", "b"]
    assert ranking.top(2).tags == ["e", "a"]
    assert len(ranking.top(10)) == 3


def test_spreading_output_tags_come_from_the_graph() -> None:
    dataset = generate_folksonomy(n_posts=200, seed=3).dataset
    graph = build_folksonomy_graph(dataset)
    prefs = make_preference_vector(_random_query(dataset, 3), graph, 0.5)

    ranking = zero_preference_rank(graph, prefs)

    assert set(ranking.tags) <= dataset.tags


def test_preference_vector_over_words() -> None:
    graph = GraphModel.from_edges(
        "content",
        [
            (("user", "u1"), ("word", "graph"), 0.5),
            (("word", "graph"), ("tag", "t1"), 0.5),
            (("user", "u1"), ("tag", "t1"), 1.0),
        ],
    )

    prefs = make_preference_vector(QueryPost("u2", "doc"), graph, 0.5, MappingProxyType({"graph": 0.8, "absent": 0.2}))

    assert prefs.as_dict(graph) == {("word", "graph"): pytest.approx(1.0)}
