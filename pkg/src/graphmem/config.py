"""Application configuration: one JSON file covering every tunable.

Layout mirrors the subsystems: a provider section for the HTTP gateway, a
retrieval section, a builder section, plus paths and eval settings. Every
CLI flag maps onto one of these fields, and to_file/from_file round-trip
losslessly so a written config reproduces the exact run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .builder import BuilderConfig
from .graph import EdgeKind
from .llm import ProviderConfig
from .retrieval import RetrievalConfig

__all__ = ["AppConfig", "retrieval_to_dict", "retrieval_from_dict"]


def retrieval_to_dict(config: RetrievalConfig) -> dict:
    data = dataclasses.asdict(config)
    data["edge_weights"] = {kind.value: w for kind, w in config.edge_weights.items()}
    return data


def retrieval_from_dict(data: dict) -> RetrievalConfig:
    kwargs = dict(data)
    if "edge_weights" in kwargs:
        kwargs["edge_weights"] = {
            EdgeKind(name): float(w) for name, w in kwargs["edge_weights"].items()
        }
    return RetrievalConfig(**kwargs)


@dataclass
class AppConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    builder: BuilderConfig = field(default_factory=BuilderConfig)
    graph_dir: str = "graphs"
    results_dir: str = "results"
    # below this completed fraction an eval run exits nonzero
    eval_min_completion: float = 0.9
    eval_workers: int = 1

    def to_dict(self) -> dict:
        return {
            "provider": dataclasses.asdict(self.provider),
            "retrieval": retrieval_to_dict(self.retrieval),
            "builder": dataclasses.asdict(self.builder),
            "graph_dir": self.graph_dir,
            "results_dir": self.results_dir,
            "eval_min_completion": self.eval_min_completion,
            "eval_workers": self.eval_workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AppConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "provider" in data:
            kwargs["provider"] = ProviderConfig(**data["provider"])
        if "retrieval" in data:
            kwargs["retrieval"] = retrieval_from_dict(data["retrieval"])
        if "builder" in data:
            kwargs["builder"] = BuilderConfig(**data["builder"])
        for name in ("graph_dir", "results_dir", "eval_min_completion", "eval_workers"):
            if name in data:
                kwargs[name] = data[name]
        return cls(**kwargs)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)
