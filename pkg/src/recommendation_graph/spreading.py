"""Weight spreading over folksonomy graphs.

Two spreaders are provided. ``folkrank_spread`` iterates
``w <- (1 - d) * A w + d * p`` until the total absolute change falls below
``epsilon * TW``, where ``A`` pushes each node's weight to its neighbors in
proportion to edge weight. ``pathrank_spread`` expands breadth-first from a
single preference node and finalizes each node's weight the first time it is
reached.

Tag scores are read off a weight vector either directly from the tag nodes or,
on post graphs, by summing the weights of the posts each tag belongs to.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterator, Literal, Mapping, Sequence

import numpy as np
from scipy import sparse

from recommendation_graph.content import SimilarityList
from recommendation_graph.dataset import QueryPost, TaggingDataset
from recommendation_graph.folksonomy_graph import GraphModel, Node

logger = logging.getLogger(__name__)

SpreaderKind = Literal["iterative", "pathrank"]
RankingMode = Literal["differential", "zero-pref"]
TagRetrieval = Literal["direct", "post-sum"]
BackEdgePolicy = Literal["discard", "renormalize"]

DEFAULT_MAX_ITERATIONS = 200


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Node weights over a graph's interned node ids.

    Attributes:
        weights: One weight per graph node.
        iterations: Iterations used by the iterative spreader (0 for PathRank).
        edges_traversed: Directed edge traversals performed while spreading.
        totals: Total weight after each iteration of the iterative spreader.
    """

    weights: np.ndarray
    iterations: int = 0
    edges_traversed: int = 0
    totals: tuple[float, ...] = ()

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def as_dict(self, graph: GraphModel) -> dict[Node, float]:
        return {graph.nodes[i]: float(self.weights[i]) for i in np.flatnonzero(self.weights)}


class ConvergenceError(RuntimeError):
    """Iterative spreading did not converge within the iteration cap."""

    def __init__(self, message: str, last: WeightVector) -> None:
        super().__init__(message)
        self.last = last


class EmptyPreferenceError(LookupError):
    """Neither the query user nor any document-side node is in the graph."""


class RetrievalModeError(ValueError):
    """A tag retrieval method was requested on a graph variant that cannot support it."""


@dataclass(frozen=True, eq=False)
class PreferenceVector:
    """Preference weights injected by the damping term.

    ``baseline_share`` of ``total`` is spread uniformly over all nodes and the
    nodes in ``entries`` additionally receive their entry, so that the weights
    sum to ``total``.
    """

    entries: Mapping[int, float]
    total: float
    baseline_share: float = 0.0

    def dense(self, n_nodes: int) -> np.ndarray:
        vector = np.full(n_nodes, self.baseline_share * self.total / n_nodes, dtype=float)
        for index, weight in self.entries.items():
            vector[index] += weight
        return vector

    def as_dict(self, graph: GraphModel) -> dict[Node, float]:
        dense = self.dense(graph.n_nodes)
        return {graph.nodes[i]: float(dense[i]) for i in np.flatnonzero(dense)}


def uniform_preferences(graph: GraphModel, total: float = 1.0) -> PreferenceVector:
    """Equal preference on every node; the basis of the global ranking."""
    return PreferenceVector(MappingProxyType({}), total, 1.0)


def original_balance(train: TaggingDataset) -> float:
    """Balance ``|U| / (|U| + |D|)`` giving users and documents equal per-node preference."""
    users, documents = len(train.user_index), len(train.document_index)
    if users + documents == 0:
        raise ValueError("balance needs at least one user or document")
    return users / (users + documents)


def make_preference_vector(
    query: QueryPost,
    graph: GraphModel,
    b: float,
    content_prefs: SimilarityList | Mapping[str, float] | None = None,
    *,
    total: float = 1.0,
    baseline_share: float = 0.0,
) -> PreferenceVector:
    """Build the preference vector of ``query``.

    The query user receives ``b`` of the query-side mass and the document side
    the remaining ``1 - b``. The document side is the query document itself,
    or the training documents of a ``SimilarityList`` weighted by similarity, or
    the words of a word vector weighted by Tf-Idf. Mass aimed at nodes absent
    from the graph is moved to the side that is present.

    With ``baseline_share > 0`` that share of ``total`` is spread uniformly over
    all nodes and only the rest goes to the query side.

    Raises:
        EmptyPreferenceError: Neither side has a node in the graph.
    """
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"balance b must lie in [0, 1], got {b}")
    if not 0.0 <= baseline_share < 1.0:
        raise ValueError(f"baseline share must lie in [0, 1), got {baseline_share}")
    if total <= 0:
        raise ValueError("total preference weight must be positive")

    user = graph.index("user", query.user)
    document_side = _document_side(query, graph, content_prefs)
    if user is None and not document_side:
        raise EmptyPreferenceError(f"neither user {query.user!r} nor document {query.document!r} is in the graph")

    query_mass = (1.0 - baseline_share) * total
    if user is None:
        user_share = 0.0
    elif not document_side:
        user_share = 1.0
    else:
        user_share = b

    entries: dict[int, float] = {}
    if user is not None and user_share > 0:
        entries[user] = user_share * query_mass
    for index, fraction in document_side.items():
        weight = (1.0 - user_share) * query_mass * fraction
        if weight > 0:
            entries[index] = entries.get(index, 0.0) + weight

    return PreferenceVector(MappingProxyType(entries), total, baseline_share)


def _document_side(
    query: QueryPost, graph: GraphModel, content_prefs: SimilarityList | Mapping[str, float] | None
) -> dict[int, float]:
    """Present document-side nodes with fractions summing to 1."""
    if isinstance(content_prefs, SimilarityList):
        candidates = [(graph.index("document", document), score) for document, score in content_prefs]
    elif content_prefs is not None:
        candidates = [(graph.index("word", word), score) for word, score in sorted(content_prefs.items())]
    else:
        candidates = [(graph.index("document", query.document), 1.0)]
    present = [(index, score) for index, score in candidates if index is not None and score > 0]
    mass = sum(score for _, score in present)
    if mass <= 0:
        return {}
    side: dict[int, float] = {}
    for index, score in present:
        side[index] = side.get(index, 0.0) + score / mass
    return side


def folkrank_spread(
    graph: GraphModel,
    prefs: PreferenceVector,
    d: float = 0.1,
    epsilon: float = 1e-6,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> WeightVector:
    """Iterate the damped spreading rule to its fixed point.

    Starting weights are uniform with total ``TW = prefs.total``. Weight held by
    isolated nodes is routed back through the damping term so the total stays
    ``TW``. Iteration stops once the summed absolute change drops below
    ``epsilon * TW``.

    Raises:
        ConvergenceError: ``max_iterations`` was reached first; carries the last vector.
    """
    if not 0.0 < d <= 1.0:
        raise ValueError(f"damping d must lie in (0, 1], got {d}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = graph.n_nodes
    total = prefs.total
    transition = graph.transition
    dangling = graph.dangling
    preference = prefs.dense(n)
    weights = np.full(n, total / n, dtype=float)
    totals: list[float] = []
    traversed = 0

    for iteration in range(1, max_iterations + 1):
        lost = float(weights[dangling].sum()) if dangling.any() else 0.0
        updated = (1.0 - d) * (transition @ weights) + (d + (1.0 - d) * lost / total) * preference
        traversed += transition.nnz
        delta = float(np.abs(updated - weights).sum())
        weights = updated
        totals.append(float(weights.sum()))
        logger.debug(f"iteration {iteration}: delta={delta:.3e}")
        if delta < epsilon * total:
            return WeightVector(weights, iteration, traversed, tuple(totals))

    last = WeightVector(weights, max_iterations, traversed, tuple(totals))
    raise ConvergenceError(f"no convergence after {max_iterations} iterations", last)


def differential_weights(
    graph: GraphModel,
    prefs: PreferenceVector,
    d: float = 0.1,
    epsilon: float = 1e-6,
    *,
    global_weights: WeightVector | None = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> np.ndarray:
    """Personalized weights minus the global weights scaled by the preference baseline share.

    The global run uses uniform preferences of the same total. With uniform
    personalized preferences the result is zero everywhere.
    """
    personalized = folkrank_spread(graph, prefs, d, epsilon, max_iterations=max_iterations)
    if global_weights is None:
        global_weights = folkrank_spread(
            graph, uniform_preferences(graph, prefs.total), d, epsilon, max_iterations=max_iterations
        )
    return personalized.weights - prefs.baseline_share * global_weights.weights


@dataclass(frozen=True)
class TagRanking:
    """Tags ordered by descending score, ties by tag."""

    entries: tuple[tuple[str, float], ...]
    mode: str
    fallback: str | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    @property
    def tags(self) -> list[str]:
        return [tag for tag, _ in self.entries]

    def top(self, n: int) -> TagRanking:
        return TagRanking(self.entries[:n], self.mode, self.fallback)

    @classmethod
    def from_scores(cls, scores: Mapping[str, float], mode: str, fallback: str | None = None) -> TagRanking:
        """Rank the positive scores."""
        ranked = sorted(((t, float(s)) for t, s in scores.items() if s > 0), key=lambda item: (-item[1], item[0]))
        return cls(tuple(ranked), mode, fallback)


def differential_rank(
    graph: GraphModel,
    prefs: PreferenceVector,
    d: float = 0.1,
    epsilon: float = 1e-6,
    *,
    global_weights: WeightVector | None = None,
    retrieval: TagRetrieval = "direct",
) -> TagRanking:
    """Rank tags by personalized minus global weight."""
    scores = differential_weights(graph, prefs, d, epsilon, global_weights=global_weights)
    return tag_scores(scores, graph, retrieval, mode="differential")


def zero_preference_rank(
    graph: GraphModel,
    prefs: PreferenceVector,
    d: float = 0.1,
    epsilon: float = 1e-6,
    *,
    retrieval: TagRetrieval = "direct",
) -> TagRanking:
    """Rank tags by the weights of a single run whose preferences sit on the query nodes only."""
    if prefs.baseline_share:
        raise ValueError("zero-preference ranking expects preferences without a uniform baseline")
    return tag_scores(folkrank_spread(graph, prefs, d, epsilon), graph, retrieval, mode="zero-pref")


def pathrank_spread(
    graph: GraphModel,
    preference_node: Node | int,
    pl: int,
    *,
    backedges: BackEdgePolicy = "discard",
) -> WeightVector:
    """Breadth-first spreading from one preference node up to path length ``pl``.

    The preference node holds weight 1. At each level every node reached in the
    previous level spreads its weight once over its edges in proportion to edge
    weight; a node reached for the first time is finalized with the sum of the
    contributions it receives at that level. Contributions toward finalized
    nodes are discarded (``backedges="discard"``) or the spreading fractions
    are taken over the edges to unfinalized nodes only (``"renormalize"``).
    Each edge is traversed at most once.
    """
    if pl < 0:
        raise ValueError("path length pl must be non-negative")
    if backedges not in ("discard", "renormalize"):
        raise ValueError(f"unknown back-edge policy {backedges!r}")
    source = preference_node if isinstance(preference_node, (int, np.integer)) else graph.node_index.get(preference_node)
    if source is None:
        raise LookupError(f"preference node {preference_node} is not in the graph")
    adjacency = graph.adjacency
    strength = graph.strength
    weights = np.zeros(graph.n_nodes, dtype=float)
    finalized = np.zeros(graph.n_nodes, dtype=bool)
    weights[source] = 1.0
    finalized[source] = True
    frontier = np.array([source], dtype=np.int64)
    traversed = 0

    for _ in range(pl):
        block = adjacency[frontier].tocoo()
        open_edges = ~finalized[block.col]
        if not open_edges.any():
            break
        rows, targets, edge_weights = block.row[open_edges], block.col[open_edges], block.data[open_edges]
        senders = frontier[rows]
        if backedges == "renormalize":
            denominators = np.bincount(rows, weights=edge_weights, minlength=len(frontier))[rows]
        else:
            denominators = strength[senders]
        incoming = np.zeros(graph.n_nodes, dtype=float)
        np.add.at(incoming, targets, weights[senders] * edge_weights / denominators)
        traversed += len(targets)
        frontier = np.unique(targets)
        weights[frontier] = incoming[frontier]
        finalized[frontier] = True

    return WeightVector(weights, 0, traversed)


def combine_weight_vectors(vectors: Sequence[tuple[WeightVector, float]]) -> WeightVector:
    """Weighted average of weight vectors, combination weights normalized to sum 1."""
    if not vectors:
        raise ValueError("at least one weight vector is required")
    coefficients = np.array([weight for _, weight in vectors], dtype=float)
    if (coefficients < 0).any() or coefficients.sum() <= 0:
        raise ValueError("combination weights must be non-negative and not all zero")
    coefficients = coefficients / coefficients.sum()
    combined = np.zeros_like(vectors[0][0].weights)
    for (vector, _), coefficient in zip(vectors, coefficients):
        if coefficient:
            combined = combined + coefficient * vector.weights
    return WeightVector(
        combined,
        max(vector.iterations for vector, _ in vectors),
        sum(vector.edges_traversed for vector, _ in vectors),
    )


def tag_scores(
    weights: WeightVector | np.ndarray,
    graph: GraphModel,
    retrieval: TagRetrieval = "direct",
    *,
    mode: str = "zero-pref",
) -> TagRanking:
    """Score tags from node weights.

    ``direct`` reads each tag node's own weight. ``post-sum`` (post graphs only)
    scores a tag by the summed weight of the post nodes it connects to,
    independent of how many tags those posts carry.
    """
    values = weights.weights if isinstance(weights, WeightVector) else weights
    tags = graph.nodes_of_kind("tag")
    if retrieval == "direct":
        scores = values[tags]
    elif retrieval == "post-sum":
        if graph.variant != "post":
            raise RetrievalModeError(f"post-sum retrieval needs a post graph, not {graph.variant!r}")
        posts = graph.nodes_of_kind("post")
        membership = graph.adjacency[tags][:, posts]
        membership = sparse.csr_matrix(
            (np.ones_like(membership.data), membership.indices, membership.indptr), shape=membership.shape
        )
        scores = membership @ values[posts]
    else:
        raise ValueError(f"unknown tag retrieval {retrieval!r}")
    return TagRanking.from_scores(dict(zip(graph.ids(tags), scores.tolist())), mode)


class PrecomputeCache:
    """Write-once store of per-node weight vectors, shared across queries.

    A vector is computed on first request and every later request returns the
    very same object, so combining cached vectors is identical to spreading
    directly.
    """

    def __init__(self, compute: Callable[[int], WeightVector]) -> None:
        self._compute = compute
        self._vectors: dict[int, WeightVector] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, index: object) -> bool:
        return index in self._vectors

    def get(self, index: int) -> WeightVector:
        vector = self._vectors.get(index)
        if vector is not None:
            return vector
        computed = self._compute(index)
        with self._lock:
            return self._vectors.setdefault(index, computed)

    def warm(self, indices: Sequence[int]) -> None:
        """Compute the vectors of ``indices`` ahead of queries."""
        for index in indices:
            self.get(int(index))


def pathrank_cache(graph: GraphModel, pl: int, backedges: BackEdgePolicy = "discard") -> PrecomputeCache:
    return PrecomputeCache(lambda index: pathrank_spread(graph, index, pl, backedges=backedges))


def unit_spread_cache(
    graph: GraphModel, d: float, epsilon: float, *, max_iterations: int = DEFAULT_MAX_ITERATIONS
) -> PrecomputeCache:
    """Iterative spreading with all preference on a single node, one vector per node.

    Every vector has total weight 1, so combinations have total weight 1 too.
    """

    def compute(index: int) -> WeightVector:
        prefs = PreferenceVector(MappingProxyType({index: 1.0}), 1.0)
        return folkrank_spread(graph, prefs, d, epsilon, max_iterations=max_iterations)

    return PrecomputeCache(compute)


def combine_from_cache(prefs: PreferenceVector, cache: PrecomputeCache) -> WeightVector:
    """Combine cached per-node vectors, weighted by the preference entries."""
    if not prefs.entries:
        raise ValueError("cannot combine per-node vectors without preference entries")
    indices = sorted(prefs.entries)
    return combine_weight_vectors([(cache.get(index), prefs.entries[index]) for index in indices])
