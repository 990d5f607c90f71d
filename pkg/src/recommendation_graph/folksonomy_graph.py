"""Weighted undirected graphs built from tagging data.

Four variants are supported:

* ``folksonomy``: users, documents and tags; an edge weight counts the tag
  assignments both end points appear in.
* ``adapted``: as ``folksonomy`` but every user-document edge weighs 1.
* ``post``: an explicit node per post, connected to its user and document with
  weight 1 and to each of its tags with weight ``1 / |tags|``.
* ``content``: documents replaced by the words of their Tf-Idf vectors.

Graphs are stored as a symmetric ``scipy.sparse`` CSR adjacency over nodes
interned to dense integer ids, sorted by kind and then id.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Literal, Mapping

import numpy as np
from scipy import sparse

from recommendation_graph.content import DocumentContentModel
from recommendation_graph.dataset import TaggingDataset, read_tsv

logger = logging.getLogger(__name__)

NodeKind = Literal["user", "document", "tag", "post", "word"]
GraphVariant = Literal["folksonomy", "adapted", "post", "content"]
Node = tuple[NodeKind, str]

NODE_KINDS: tuple[NodeKind, ...] = ("user", "document", "tag", "post", "word")

ALLOWED_EDGES: Mapping[str, frozenset[frozenset[str]]] = MappingProxyType(
    {
        "folksonomy": frozenset({frozenset({"user", "document"}), frozenset({"user", "tag"}), frozenset({"document", "tag"})}),
        "adapted": frozenset({frozenset({"user", "document"}), frozenset({"user", "tag"}), frozenset({"document", "tag"})}),
        "post": frozenset({frozenset({"user", "post"}), frozenset({"document", "post"}), frozenset({"tag", "post"})}),
        "content": frozenset({frozenset({"user", "word"}), frozenset({"user", "tag"}), frozenset({"word", "tag"})}),
    }
)

POST_ID_SEPARATOR = "\x1f"


def post_node_id(user: str, document: str) -> str:
    return f"{user}{POST_ID_SEPARATOR}{document}"


@dataclass(frozen=True, eq=False)
class GraphModel:
    """Immutable weighted undirected graph over typed nodes.

    ``adjacency[i, j]`` is the weight of the edge between nodes ``i`` and ``j``;
    ``strength[i]`` is the total weight incident to node ``i``.
    """

    variant: GraphVariant
    nodes: tuple[Node, ...]
    adjacency: sparse.csr_matrix = field(repr=False)
    node_index: Mapping[Node, int] = field(init=False, repr=False, compare=False)
    kinds: np.ndarray = field(init=False, repr=False, compare=False)
    strength: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.variant not in ALLOWED_EDGES:
            raise ValueError(f"unknown graph variant {self.variant!r}")
        n = len(self.nodes)
        if self.adjacency.shape != (n, n):
            raise ValueError(f"adjacency shape {self.adjacency.shape} does not match {n} nodes")
        index = {node: i for i, node in enumerate(self.nodes)}
        if len(index) != n:
            raise ValueError("duplicate nodes in graph")
        object.__setattr__(self, "node_index", MappingProxyType(index))
        object.__setattr__(self, "kinds", np.array([NODE_KINDS.index(kind) for kind, _ in self.nodes], dtype=np.int8))
        object.__setattr__(self, "strength", np.asarray(self.adjacency.sum(axis=1)).ravel())
        self._validate()

    @classmethod
    def from_edges(cls, variant: GraphVariant, edges: Iterable[tuple[Node, Node, float]]) -> GraphModel:
        """Build a graph from undirected weighted edges; repeated edges add up."""
        weights: dict[tuple[Node, Node], float] = defaultdict(float)
        for a, b, weight in edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            key = (a, b) if a <= b else (b, a)
            weights[key] += weight
        nodes = tuple(sorted({node for pair in weights for node in pair}, key=_node_order))
        index = {node: i for i, node in enumerate(nodes)}
        rows = np.fromiter((index[a] for a, _ in weights), dtype=np.int64, count=len(weights))
        cols = np.fromiter((index[b] for _, b in weights), dtype=np.int64, count=len(weights))
        values = np.fromiter(weights.values(), dtype=float, count=len(weights))
        upper = sparse.coo_matrix((values, (rows, cols)), shape=(len(nodes), len(nodes)))
        adjacency = (upper + upper.T).tocsr()
        adjacency.sort_indices()
        return cls(variant=variant, nodes=nodes, adjacency=adjacency)

    def _validate(self) -> None:
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        if self.adjacency.diagonal().any():
            raise ValueError("graph contains self-loops")
        if (self.adjacency != self.adjacency.T).nnz:
            raise ValueError("adjacency is not symmetric")
        if upper.nnz and upper.data.min() <= 0:
            raise ValueError("edge weights must be positive")
        allowed = ALLOWED_EDGES[self.variant]
        pairs = set(zip(self.kinds[upper.row].tolist(), self.kinds[upper.col].tolist()))
        for a, b in pairs:
            if frozenset({NODE_KINDS[a], NODE_KINDS[b]}) not in allowed:
                raise ValueError(f"{self.variant} graph may not connect {NODE_KINDS[a]} and {NODE_KINDS[b]} nodes")

    def __contains__(self, node: object) -> bool:
        return node in self.node_index

    def index(self, kind: NodeKind, node_id: str) -> int | None:
        return self.node_index.get((kind, node_id))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def total_strength(self) -> float:
        return float(self.strength.sum())

    def nodes_of_kind(self, kind: NodeKind) -> np.ndarray:
        """Indices of all nodes of ``kind``, in id order."""
        return self._kind_positions[kind]

    @cached_property
    def _kind_positions(self) -> dict[str, np.ndarray]:
        return {kind: np.flatnonzero(self.kinds == code) for code, kind in enumerate(NODE_KINDS)}

    def ids(self, indices: Iterable[int]) -> list[str]:
        return [self.nodes[i][1] for i in indices]

    def edge_weight(self, a: Node, b: Node) -> float:
        """Weight of the edge between ``a`` and ``b``; 0 when absent."""
        i, j = self.node_index.get(a), self.node_index.get(b)
        if i is None or j is None:
            return 0.0
        return float(self.adjacency[i, j])

    def neighbors(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and edge weights of node ``index``."""
        start, end = self.adjacency.indptr[index], self.adjacency.indptr[index + 1]
        return self.adjacency.indices[start:end], self.adjacency.data[start:end]

    @cached_property
    def transition(self) -> sparse.csr_matrix:
        """Column-normalized adjacency: column ``j`` holds the fractions node ``j`` sends to each neighbor.

        Columns of isolated nodes are zero.
        """
        inverse = np.divide(1.0, self.strength, out=np.zeros_like(self.strength), where=self.strength > 0)
        return (self.adjacency @ sparse.diags(inverse)).tocsr()

    @cached_property
    def dangling(self) -> np.ndarray:
        """Boolean mask of isolated nodes."""
        return self.strength <= 0

    def summary(self) -> dict[str, int]:
        counts = {kind: int(len(self.nodes_of_kind(kind))) for kind in NODE_KINDS if len(self.nodes_of_kind(kind))}
        return {**counts, "nodes": self.n_nodes, "edges": self.n_edges}


def _node_order(node: Node) -> tuple[int, str]:
    return (NODE_KINDS.index(node[0]), node[1])


def _log_build(graph: GraphModel) -> GraphModel:
    logger.info(f"Built {graph.variant} graph: {graph.summary()}")
    return graph


def _require_posts(train: TaggingDataset) -> None:
    if not len(train):
        raise ValueError("cannot build a graph from an empty training dataset")


def build_folksonomy_graph(train: TaggingDataset) -> GraphModel:
    """Edge weight = number of tag assignments that contain both end points."""
    _require_posts(train)
    return _log_build(GraphModel.from_edges("folksonomy", _tripartite_edges(train, unit_user_document=False)))


def build_adapted_graph(train: TaggingDataset) -> GraphModel:
    """As ``build_folksonomy_graph`` with every user-document edge at weight 1."""
    _require_posts(train)
    return _log_build(GraphModel.from_edges("adapted", _tripartite_edges(train, unit_user_document=True)))


def _tripartite_edges(train: TaggingDataset, *, unit_user_document: bool) -> Iterable[tuple[Node, Node, float]]:
    for post in train.posts:
        user: Node = ("user", post.user)
        document: Node = ("document", post.document)
        yield user, document, 1.0 if unit_user_document else float(len(post.tags))
        for tag in post.tags:
            yield user, ("tag", tag), 1.0
            yield document, ("tag", tag), 1.0


def build_post_graph(train: TaggingDataset) -> GraphModel:
    """One node per post; users, documents and tags connect only to posts."""
    _require_posts(train)

    def edges() -> Iterable[tuple[Node, Node, float]]:
        for post in train.posts:
            node: Node = ("post", post_node_id(post.user, post.document))
            yield node, ("user", post.user), 1.0
            yield node, ("document", post.document), 1.0
            share = 1.0 / len(post.tags)
            for tag in post.tags:
                yield node, ("tag", tag), share

    return _log_build(GraphModel.from_edges("post", edges()))


def build_content_graph(train: TaggingDataset, content: DocumentContentModel) -> GraphModel:
    """Replace documents by the words of their normalized Tf-Idf vectors.

    ``weight(u, w)`` and ``weight(w, t)`` sum ``TfIdf(w, d)`` over the posts of
    ``u`` (respectively the posts tagged ``t``) whose document contains ``w``;
    ``weight(u, t)`` counts the posts of ``u`` tagged ``t``.
    """
    _require_posts(train)
    missing = [post.document for post in train.posts if post.document not in content]
    if missing:
        logger.warning(f"{len(set(missing))} training documents have no content; they contribute no word edges")

    def edges() -> Iterable[tuple[Node, Node, float]]:
        for post in train.posts:
            user: Node = ("user", post.user)
            vector = content.vector(post.document)
            for word, score in vector.items():
                yield user, ("word", word), score
                for tag in post.tags:
                    yield ("word", word), ("tag", tag), score
            for tag in post.tags:
                yield user, ("tag", tag), 1.0

    return _log_build(GraphModel.from_edges("content", edges()))


def build_graph(
    variant: GraphVariant, train: TaggingDataset, content: DocumentContentModel | None = None
) -> GraphModel:
    """Build the graph variant named by ``variant``."""
    if variant == "folksonomy":
        return build_folksonomy_graph(train)
    if variant == "adapted":
        return build_adapted_graph(train)
    if variant == "post":
        return build_post_graph(train)
    if variant == "content":
        if content is None:
            raise RuntimeError("the content graph needs a document content model")
        return build_content_graph(train, content)
    raise ValueError(f"unknown graph variant {variant!r}")


def row_stochastic_spread(graph: GraphModel, node: Node | int, weight: float) -> dict[Node, float]:
    """Split ``weight`` over the neighbors of ``node`` in proportion to edge weight.

    Isolated nodes spread nothing.
    """
    index = node if isinstance(node, (int, np.integer)) else graph.node_index.get(node)
    if index is None:
        raise LookupError(f"node {node} is not in the graph")
    strength = graph.strength[index]
    if strength <= 0:
        return {}
    neighbors, weights = graph.neighbors(int(index))
    return {graph.nodes[j]: float(weight * w / strength) for j, w in zip(neighbors, weights)}


def write_edge_list(graph: GraphModel, target: IO[str] | str | Path) -> int:
    """Write ``kind_a \\t id_a \\t kind_b \\t id_b \\t weight`` lines, one per undirected edge."""
    upper = sparse.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    lines = [f"# variant={graph.variant}\n"]
    for i, j, weight in zip(upper.row[order], upper.col[order], upper.data[order]):
        (kind_a, id_a), (kind_b, id_b) = graph.nodes[i], graph.nodes[j]
        lines.append(f"{kind_a}\t{id_a}\t{kind_b}\t{id_b}\t{float(weight)!r}\n")
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            handle.writelines(lines)
    else:
        target.writelines(lines)
    return len(lines) - 1


def read_edge_list(source: IO[str] | str | Path) -> GraphModel:
    """Read a graph written by ``write_edge_list``."""
    frame = read_tsv(source, 5)
    header = frame[0].str.startswith("#")
    variant: str | None = None
    for line in frame.loc[header, 0]:
        key, _, value = line[1:].strip().partition("=")
        if key.strip() == "variant":
            variant = value.strip()
    edges: list[tuple[Node, Node, float]] = []
    for number, row in frame[~header].iterrows():
        fields = row.tolist()
        if "" in fields[:5] or any(fields[5:]) or fields[0] not in NODE_KINDS or fields[2] not in NODE_KINDS:
            raise ValueError(f"line {number}: malformed edge {fields[:5]!r}")
        edges.append(((fields[0], fields[1]), (fields[2], fields[3]), float(fields[4])))  # type: ignore[arg-type]
    if variant is None:
        raise ValueError("edge list lacks a '# variant=' header")
    return GraphModel.from_edges(variant, edges)  # type: ignore[arg-type]
