"""Document content model: tokenization, Tf-Idf vectors and cosine similarity.

Each document is a bag of words scored with
``(tc(w, d) / |d|) * log2(|D| / dc(w))`` and normalized so that a document's
scores sum to 1. Documents in which no word discriminates keep an empty vector.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Literal, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from sklearn.feature_extraction import DictVectorizer
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics.pairwise import cosine_similarity as pairwise_cosine

from recommendation_graph.dataset import read_tsv

logger = logging.getLogger(__name__)

ContentSource = Literal["title", "fulltext"]

STOPWORDS_RESOURCE = "stopwords_en.txt"
MIN_WORD_LENGTH = 3
MAX_WORD_LENGTH = 20

_WORD = re.compile(r"[^\W_]+")


@lru_cache(maxsize=1)
def load_stopwords() -> frozenset[str]:
    """Return the bundled English stop-word list."""
    text = resources.files(__package__).joinpath(STOPWORDS_RESOURCE).read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


@lru_cache(maxsize=1)
def stopwords_sha256() -> str:
    data = resources.files(__package__).joinpath(STOPWORDS_RESOURCE).read_bytes()
    return hashlib.sha256(data).hexdigest()


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Split text into lower-case words, dropping stop-words and words outside [3, 20] characters.

    Words are maximal runs of letters and digits. No stemming is applied.
    """
    stopwords = load_stopwords() if stopwords is None else stopwords
    return [
        word
        for word in _WORD.findall(text.lower())
        if word not in stopwords and MIN_WORD_LENGTH <= len(word) <= MAX_WORD_LENGTH
    ]


def concatenate_title_variants(titles: Sequence[str]) -> str:
    """Join a document's title variants so repeated words count once per variant."""
    if not titles:
        raise ValueError("at least one title variant is required")
    return " ".join(titles)


@dataclass(frozen=True)
class DocumentContentModel:
    """Per-document Tf-Idf word vectors over one corpus.

    Attributes:
        vectors: Document id to ``{word: score}``; only positive scores are stored.
        n_documents: Corpus size ``|D|``.
        document_frequency: Word to the number of documents containing it.
        source: Which text the vectors were computed from.
        empty_documents: Documents whose vector is empty.
    """

    vectors: Mapping[str, Mapping[str, float]]
    n_documents: int
    document_frequency: Mapping[str, int]
    source: ContentSource = "title"
    empty_documents: tuple[str, ...] = field(default=())

    def __contains__(self, document: object) -> bool:
        return document in self.vectors

    def vector(self, document: str) -> Mapping[str, float]:
        """The document's word vector; empty for unknown documents."""
        return self.vectors.get(document, MappingProxyType({}))

    @cached_property
    def _index(self) -> tuple[tuple[str, ...], dict[str, int], sparse.csr_matrix]:
        documents = tuple(sorted(self.vectors))
        vocabulary = {word: i for i, word in enumerate(sorted(self.document_frequency))}
        rows, cols, values = [], [], []
        for row, document in enumerate(documents):
            for word, score in self.vectors[document].items():
                rows.append(row)
                cols.append(vocabulary[word])
                values.append(score)
        matrix = sparse.csr_matrix(
            (np.asarray(values, dtype=float), (rows, cols)), shape=(len(documents), max(len(vocabulary), 1))
        )
        return documents, {d: i for i, d in enumerate(documents)}, matrix


def compute_tfidf(
    corpus: Mapping[str, Sequence[str]],
    *,
    source: ContentSource = "title",
    normalize: bool = True,
) -> DocumentContentModel:
    """Score every word of every document with log2 Tf-Idf.

    Args:
        corpus: Document id to its token list (see ``tokenize``).
        source: Recorded on the model.
        normalize: Scale each document's scores to sum to 1. With ``False`` the
            raw Tf-Idf scores are kept.
    """
    if not corpus:
        raise ValueError("cannot build a content model from an empty corpus")
    documents = sorted(corpus)
    token_lists = [list(corpus[document]) for document in documents]
    n_documents = len(documents)

    if not any(token_lists):
        logger.warning(f"No words in any of {n_documents} documents; all content vectors are empty")
        empty = MappingProxyType({})
        return DocumentContentModel(
            vectors=MappingProxyType({d: empty for d in documents}),
            n_documents=n_documents,
            document_frequency=MappingProxyType({}),
            source=source,
            empty_documents=tuple(documents),
        )

    vectorizer = CountVectorizer(analyzer=_identity)
    counts = vectorizer.fit_transform(token_lists).tocsr().astype(float)
    words = vectorizer.get_feature_names_out()
    lengths = np.asarray(counts.sum(axis=1)).ravel()
    frequency = np.asarray((counts > 0).sum(axis=0)).ravel()

    inverse_length = np.divide(1.0, lengths, out=np.zeros_like(lengths), where=lengths > 0)
    idf = np.log2(n_documents / frequency)
    scores = (sparse.diags(inverse_length) @ counts @ sparse.diags(idf)).tocsr()
    scores.eliminate_zeros()
    if normalize:
        totals = np.asarray(scores.sum(axis=1)).ravel()
        scale = np.divide(1.0, totals, out=np.zeros_like(totals), where=totals > 0)
        scores = (sparse.diags(scale) @ scores).tocsr()

    vectors: dict[str, Mapping[str, float]] = {}
    empty_documents = []
    for row, document in enumerate(documents):
        start, end = scores.indptr[row], scores.indptr[row + 1]
        vector = {str(words[j]): float(v) for j, v in zip(scores.indices[start:end], scores.data[start:end]) if v > 0}
        if not vector:
            empty_documents.append(document)
        vectors[document] = MappingProxyType(vector)

    if empty_documents:
        logger.info(f"{len(empty_documents)} of {n_documents} documents have empty content vectors")
    return DocumentContentModel(
        vectors=MappingProxyType(vectors),
        n_documents=n_documents,
        document_frequency=MappingProxyType({str(w): int(c) for w, c in zip(words, frequency)}),
        source=source,
        empty_documents=tuple(empty_documents),
    )


def _identity(tokens: list[str]) -> list[str]:
    return tokens


def _cosine_to_row(matrix: sparse.csr_matrix, row: int) -> np.ndarray:
    """Cosine of every row of ``matrix`` to row ``row``; zero-norm rows score 0."""
    return np.minimum(pairwise_cosine(matrix, matrix[row]).ravel(), 1.0)


def cosine_similarity(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    """Cosine of two non-negative word vectors; 0 when either has zero norm."""
    if not a or not b:
        return 0.0
    matrix = DictVectorizer(sort=True).fit_transform([dict(a), dict(b)]).tocsr()
    return float(_cosine_to_row(matrix, 0)[1])


@dataclass(frozen=True)
class SimilarityList:
    """Training documents most similar to a query document, scores summing to 1."""

    query: str
    entries: tuple[tuple[str, float], ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)


def top_k_similar(
    query: str,
    model: DocumentContentModel,
    k: int,
    train_ids: Iterable[str] | frozenset[str],
) -> SimilarityList:
    """Rank training documents by cosine similarity to ``query``.

    A query document that is itself in the training set gets similarity 1 to
    itself. The top ``k`` positive scores are kept (ties by document id) and
    normalized to sum to 1. An all-zero result gives an empty list.
    """
    if k < 1:
        raise ValueError("k must be positive")
    train = train_ids if isinstance(train_ids, (set, frozenset)) else frozenset(train_ids)
    documents, positions, matrix = model._index
    scores: dict[str, float] = {}

    row = positions.get(query)
    if row is not None and matrix.nnz:
        similarities = _cosine_to_row(matrix, row)
        for position in np.flatnonzero(similarities > 0):
            document = documents[position]
            if document in train:
                scores[document] = float(similarities[position])
    if query in train:
        scores[query] = 1.0

    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    total = sum(score for _, score in ranked)
    if total <= 0:
        return SimilarityList(query)
    return SimilarityList(query, tuple((document, score / total) for document, score in ranked))


def read_content(source: IO[str] | str | Path) -> pd.DataFrame:
    """Read a ``document \\t title \\t fulltext`` TSV; several rows per document are title variants."""
    frame = read_tsv(source, 3)
    document = frame[0].str.strip()
    missing = document == ""
    if missing.any():
        logger.warning(f"Skipped {int(missing.sum())} content lines without a document id")
    fulltext = frame[list(frame.columns[2:])].agg("\t".join, axis=1).str.rstrip("\t") if len(frame) else frame[2]
    content = pd.DataFrame({"document": document, "title": frame[1], "fulltext": fulltext})
    return content[~missing].reset_index(drop=True)


def build_content_model(
    content: pd.DataFrame,
    source: ContentSource = "title",
    *,
    stopwords: frozenset[str] | None = None,
) -> DocumentContentModel:
    """Tokenize a content table and compute its normalized Tf-Idf model."""
    if source not in ("title", "fulltext"):
        raise ValueError(f"unknown content source {source!r}")
    corpus: dict[str, list[str]] = {}
    for document, group in content.groupby("document", sort=True):
        if source == "title":
            text = concatenate_title_variants(list(group["title"]))
        else:
            text = " ".join(t for t in group["fulltext"] if t)
        corpus[str(document)] = tokenize(text, stopwords)
    model = compute_tfidf(corpus, source=source)
    logger.info(f"Content model ({source}): {model.n_documents} documents, {len(model.document_frequency)} words")
    return model
