"""State management for the recommendation graph.

Classes:
    InputState: The query and the shared resources it is answered from.
    State: Everything the pipeline nodes produce for one query.

Functions:
    add_trace: Reducer that appends per-node trace records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, Any, Optional, Sequence, Union

import numpy as np

from recommendation_graph.content import SimilarityList
from recommendation_graph.dataset import QueryPost
from recommendation_graph.services import RecommenderResources
from recommendation_graph.spreading import PreferenceVector, TagRanking


def add_trace(
    existing: Optional[Sequence[dict[str, Any]]],
    new: Union[Sequence[dict[str, Any]], dict[str, Any], None],
) -> list[dict[str, Any]]:
    """Append trace records, preserving existing ones."""
    base = list(existing) if existing else []
    if new is None:
        return base
    if isinstance(new, dict):
        base.append(new)
    else:
        base.extend(new)
    return base


@dataclass(kw_only=True)
class InputState:
    """The query to recommend tags for.

    ``resources`` carries the training graph and content model; it is shared
    read-only by every query of one engine.
    """

    query: QueryPost
    resources: RecommenderResources


@dataclass(kw_only=True)
class State(InputState):
    """The state of one recommendation run."""

    preferences: Optional[PreferenceVector] = None
    """Preference vector of the query; ``None`` when neither query node is in the graph."""

    similar: Optional[SimilarityList] = None
    """Similar training documents used on the document side, if any."""

    weights: Optional[np.ndarray] = None
    """Node scores after spreading (differential scores in differential mode)."""

    edges_traversed: int = 0

    fallback: Optional[str] = None
    """Set to 'content' or 'global' when the query is answered from popular tags."""

    ranking: Optional[TagRanking] = None
    """The top-N recommendation."""

    trace: Annotated[list[dict[str, Any]], add_trace] = field(default_factory=list)
    """Lightweight records of what each node did."""
