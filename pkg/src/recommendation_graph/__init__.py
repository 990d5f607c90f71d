"""Graph-based tag recommendation.

Exports the compiled recommendation graph and the ``recommend`` helper that
runs it for one query.
"""

from recommendation_graph.graph import graph, recommend

__all__ = ["graph", "recommend"]
