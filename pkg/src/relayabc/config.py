"""Scenario configuration, validation and the shipped presets."""

from __future__ import annotations

import copy
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .adversary import StrategySpec
from .errors import (
    ConfigInvalid,
    DiameterBoundViolated,
    HonestSubgraphDisconnected,
    HorizonTooShort,
    NotStronglyConnected,
    TooManyByzantine,
)
from .graph import DirectedNetwork, diameter, honest_subgraph, network_from_document

FORMAT_VERSION = 1


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one run.

    ``initial_values[k]`` belongs to the k-th honest node in increasing id
    order. Byzantine nodes without an entry in ``strategies`` stay silent.
    ``neighbor_mode="out"`` reads messages from out-neighbours instead of
    in-neighbours, for comparing against the literal pseudocode.
    """

    graph: Mapping
    initial_values: list[float]
    strategies: dict[int, StrategySpec] = field(default_factory=dict)
    D: int | str = "auto"
    T: int = 100
    default_value: float = 0.0
    seed: int = 0
    name: str = "custom"
    scheme: str = "hmac"
    neighbor_mode: str = "in"
    spread_threshold: float = 1e-6
    analysis: dict = field(default_factory=lambda: {"matrices": True, "mode": "trace"})

    def network(self) -> DirectedNetwork:
        return network_from_document(self.graph)

    def validate(self) -> tuple[DirectedNetwork, int]:
        """Check every precondition; return the network and the resolved ``D``."""
        try:
            net = self.network()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad graph document: {exc}", "graph") from exc
        if 3 * net.b >= net.m:
            raise TooManyByzantine(
                f"b={net.b} byzantine of m={net.m} nodes; need b strictly below m/3"
            )
        if len(self.initial_values) != net.h:
            raise ConfigInvalid(
                f"{len(self.initial_values)} initial values for {net.h} honest nodes",
                "initial_values",
            )
        if not all(math.isfinite(float(v)) for v in self.initial_values):
            raise ConfigInvalid("initial values must be finite", "initial_values")
        for node in self.strategies:
            if node not in net.byzantine:
                raise ConfigInvalid(f"strategy given for non-byzantine node {node}", "b_strategy")
        if self.neighbor_mode not in ("in", "out"):
            raise ConfigInvalid(f"neighbor_mode must be 'in' or 'out', got {self.neighbor_mode!r}")
        try:
            diam = diameter(honest_subgraph(net))
        except NotStronglyConnected as exc:
            raise HonestSubgraphDisconnected(
                f"honest subgraph is not bidirectionally connected: {exc}"
            ) from exc
        if self.D == "auto":
            D = max(diam, 1)
        else:
            D = int(self.D)
            if D < max(diam, 1):
                raise DiameterBoundViolated(
                    f"D={D} is below the honest-subgraph diameter {diam}"
                )
        if int(self.T) < D:
            raise HorizonTooShort(f"T={self.T} iterations is shorter than D={D}")
        return net, D

    def to_document(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "graph": copy.deepcopy(dict(self.graph)),
            "initial_values": [float(v) for v in self.initial_values],
            "b_strategy": {str(k): s.to_document() for k, s in sorted(self.strategies.items())},
            "D": self.D,
            "T": int(self.T),
            "default_value": float(self.default_value),
            "seed": int(self.seed),
            "scheme": self.scheme,
            "neighbor_mode": self.neighbor_mode,
            "spread_threshold": float(self.spread_threshold),
            "analysis": copy.deepcopy(self.analysis),
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> ScenarioConfig:
        try:
            graph = doc["graph"]
            if isinstance(graph, str):
                graph = copy.deepcopy(SCENARIO_PRESETS[graph].graph)
            cfg = cls(
                graph=graph,
                initial_values=[float(v) for v in doc["initial_values"]],
                strategies={
                    int(k): StrategySpec.from_document(v)
                    for k, v in doc.get("b_strategy", {}).items()
                },
                D=doc.get("D", "auto"),
                T=int(doc["T"]),
                default_value=float(doc.get("default_value", 0.0)),
                seed=int(doc.get("seed", 0)),
                name=doc.get("name", "custom"),
                scheme=doc.get("scheme", "hmac"),
                neighbor_mode=doc.get("neighbor_mode", "in"),
                spread_threshold=float(doc.get("spread_threshold", 1e-6)),
                analysis=dict(doc.get("analysis", {"matrices": True, "mode": "trace"})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"malformed scenario document: {exc!r}", "document") from exc
        if cfg.D != "auto" and not isinstance(cfg.D, int):
            raise ConfigInvalid(f"D must be an integer or 'auto', got {cfg.D!r}", "document")
        return cfg


def load_config(path) -> ScenarioConfig:
    """Read a scenario document, or a preset name prefixed with ``preset:``."""
    text = str(path)
    if text.startswith("preset:"):
        return preset(text.split(":", 1)[1])
    return ScenarioConfig.from_document(json.loads(Path(path).read_text()))


def _extreme(value: float = 100.0) -> StrategySpec:
    return StrategySpec("constant_extreme", {"value": value})


SCENARIO_PRESETS: dict[str, ScenarioConfig] = {
    "complete_h4_b1": ScenarioConfig(
        name="complete_h4_b1",
        graph={"preset": "complete", "h": 4, "b": 1},
        initial_values=[0.0, 1.0, 2.0, 3.0],
        strategies={4: _extreme()},
        D=1,
        T=500,
    ),
    "honest_cycle_h4_b1": ScenarioConfig(
        name="honest_cycle_h4_b1",
        graph={"preset": "honest_cycle_plus_byz", "h": 4, "b": 1},
        initial_values=[0.0, 1.0, 2.0, 3.0],
        strategies={4: _extreme()},
        D="auto",
        T=2000,
    ),
    "path_h5_b1": ScenarioConfig(
        name="path_h5_b1",
        graph={"preset": "bidirectional_path_plus_byz", "h": 5, "b": 1},
        initial_values=[0.0, 1.0, 2.0, 3.0, 4.0],
        strategies={5: _extreme()},
        D="auto",
        T=1000,
    ),
    "complete_h3_b1_scrambling": ScenarioConfig(
        name="complete_h3_b1_scrambling",
        graph={"preset": "complete", "h": 3, "b": 1},
        initial_values=[0.0, 1.0, 2.0],
        strategies={3: StrategySpec("random_equivocate", {"low": -1.0, "high": 3.0})},
        D=1,
        T=200,
    ),
}


def preset(name: str) -> ScenarioConfig:
    try:
        return copy.deepcopy(SCENARIO_PRESETS[name])
    except KeyError:
        raise ConfigInvalid(f"unknown preset {name!r}", "preset") from None
