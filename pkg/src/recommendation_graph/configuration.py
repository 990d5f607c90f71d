"""Define the configurable parameters for the recommender."""

from __future__ import annotations

import hashlib
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Type, TypeVar

from dotenv import dotenv_values
from langchain_core.runnables import RunnableConfig, ensure_config

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(kw_only=True)
class GraphConfiguration:
    """Configuration of the graph a recommender spreads over.

    This class selects the graph variant, the document content used by the
    content-aware variants and the way tag scores are read off node weights.
    """

    variant: Literal["folksonomy", "adapted", "post", "content"] = field(
        default="folksonomy",
        metadata={
            "description": "Graph variant: 'folksonomy', 'adapted' (unit user-document edges), 'post' (explicit post nodes) or 'content' (word nodes instead of documents)."
        },
    )

    retrieval: Literal["direct", "post-sum"] = field(
        default="direct",
        metadata={
            "description": "How tag scores are read: 'direct' from tag nodes, or 'post-sum' over the posts a tag belongs to (post graphs only)."
        },
    )

    content_source: Literal["title", "fulltext"] = field(
        default="title",
        metadata={"description": "Document text used for Tf-Idf vectors: concatenated title variants or full text."},
    )

    k_similar: int = field(
        default=0,
        metadata={
            "description": "Number of similar training documents placed in the preference vector. 0 uses the query document only."
        },
    )

    content_policy: Literal["always", "new-documents"] = field(
        default="always",
        metadata={
            "description": "Use similar documents for every query, or only when the query document is not in the training data."
        },
    )

    @classmethod
    def from_runnable_config(cls: Type[T], config: Optional[RunnableConfig] = None) -> T:
        """Create a configuration instance from a RunnableConfig object.

        Args:
            cls (Type[T]): The class itself.
            config (Optional[RunnableConfig]): The configuration object to use.

        Returns:
            T: An instance of the configuration with the specified values.
        """
        config = ensure_config(config)
        configurable = config.get("configurable") or {}
        _fields = {f.name for f in fields(cls) if f.init}
        return cls(**{k: v for k, v in configurable.items() if k in _fields})

    @classmethod
    def from_mapping(cls: Type[T], values: Mapping[str, Any]) -> T:
        """Create a configuration from loose ``key -> value`` pairs.

        Keys may use ``-`` or ``_``; string values are coerced to the field
        types. Unknown keys raise ``ValueError``.
        """
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls) if f.init}
        kwargs: dict[str, Any] = {}
        for raw_key, value in values.items():
            key = raw_key.strip().replace("-", "_").lower()
            if key not in known:
                raise ValueError(f"unknown configuration key {raw_key!r}")
            kwargs[key] = _coerce(key, value, hints[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls: Type[T], path: str | Path, overrides: Mapping[str, Any] | None = None) -> T:
        """Load a flat ``key=value`` file, then apply ``overrides`` on top."""
        if not Path(path).is_file():
            raise FileNotFoundError(f"configuration file not found: {path}")
        values: dict[str, Any] = {k: v for k, v in dotenv_values(path).items() if v is not None}
        values.update(overrides or {})
        return cls.from_mapping(values)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        hints = typing.get_type_hints(type(self))
        for f in fields(self):
            allowed = _literal_values(hints[f.name])
            if allowed and getattr(self, f.name) not in allowed:
                raise ValueError(f"{f.name} must be one of {list(allowed)}, got {getattr(self, f.name)!r}")
        if self.k_similar < 0:
            raise ValueError("k_similar must be non-negative")
        if self.retrieval == "post-sum" and self.variant != "post":
            raise ValueError("post-sum retrieval requires the 'post' graph variant")

    def as_dict(self) -> dict[str, Any]:
        return dict(sorted(asdict(self).items()))

    def canonical(self) -> str:
        """Sorted ``key=value`` lines; the input of ``config_hash``."""
        return "".join(f"{key}={value}\n" for key, value in self.as_dict().items())

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:12]

    def with_overrides(self: T, values: Mapping[str, Any]) -> T:
        """Return a copy with ``values`` applied, validated like ``from_mapping``."""
        merged = {**self.as_dict(), **{k.replace("-", "_"): v for k, v in values.items()}}
        return type(self).from_mapping(merged)


T = TypeVar("T", bound=GraphConfiguration)


@dataclass(kw_only=True)
class Configuration(GraphConfiguration):
    """The configuration for the recommender and evaluation runs."""

    spreader: Literal["iterative", "pathrank"] = field(
        default="iterative",
        metadata={"description": "Weight spreader: damped 'iterative' spreading or breadth-first 'pathrank'."},
    )

    mode: Literal["differential", "zero-pref"] = field(
        default="differential",
        metadata={
            "description": "Ranking mode of the iterative spreader: personalized minus global weights, or a single run with preference on the query nodes only."
        },
    )

    b: float = field(
        default=0.5,
        metadata={"description": "Share of the query preference given to the query user; the rest goes to the document side."},
    )

    balance: Literal["fixed", "original"] = field(
        default="fixed",
        metadata={"description": "'fixed' uses b as given; 'original' sets b = |U| / (|U| + |D|) from the training data."},
    )

    baseline_share: float = field(
        default=0.1,
        metadata={"description": "Share of the preference weight spread uniformly over all nodes in differential mode."},
    )

    d: float = field(
        default=0.1,
        metadata={"description": "Damping factor mixing graph spreading with the preference vector, in (0, 1]."},
    )

    epsilon: float = field(
        default=1e-6,
        metadata={"description": "Convergence threshold relative to the total weight."},
    )

    max_iterations: int = field(
        default=200,
        metadata={"description": "Iteration cap of the iterative spreader."},
    )

    total_weight: float = field(
        default=1.0,
        metadata={"description": "Total weight TW, equal to the total preference weight PW."},
    )

    pl: int = field(
        default=2,
        metadata={"description": "Maximum path length of PathRank spreading."},
    )

    backedges: Literal["discard", "renormalize"] = field(
        default="discard",
        metadata={
            "description": "PathRank weight aimed at already weighted nodes: 'discard' it, or 'renormalize' over the remaining edges."
        },
    )

    precompute: bool = field(
        default=False,
        metadata={
            "description": "Combine cached per-node iterative spreading vectors instead of spreading each query directly."
        },
    )

    top_n: int = field(
        default=10,
        metadata={"description": "Number of tags recommended (N); evaluation reports every N from 1 to top_n."},
    )

    seed: int = field(
        default=0,
        metadata={"description": "Seed for sampling and synthetic data."},
    )

    threads: int = field(
        default=1,
        metadata={"description": "Worker threads used to evaluate test posts."},
    )

    def validate(self) -> None:
        super().validate()
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")
        if not 0.0 < self.d <= 1.0:
            raise ValueError(f"d must lie in (0, 1], got {self.d}")
        if not 0.0 <= self.baseline_share < 1.0:
            raise ValueError(f"baseline_share must lie in [0, 1), got {self.baseline_share}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.total_weight <= 0:
            raise ValueError("total_weight must be positive")
        if self.pl < 0:
            raise ValueError("pl must be non-negative")
        if self.top_n < 1:
            raise ValueError("top_n must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


def _literal_values(hint: Any) -> tuple[Any, ...]:
    return typing.get_args(hint) if typing.get_origin(hint) is Literal else ()


def _coerce(key: str, value: Any, hint: Any) -> Any:
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError as exc:
        raise ValueError(f"invalid value {value!r} for {key}") from exc
    return text
