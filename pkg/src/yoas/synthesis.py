"""Final assembly: apply a synthesis plan to reference recordings.

Channels are produced in dependency order along the plan's edges. Each
non-reference channel is written exactly once, from the feasible inbound
edge with the best recorded score (ties broken by source name). Reference
channels pass through bit-exact. Indirect edges synthesize their
intermediate first when nothing else has produced it yet.

Edge models own the whole source-to-target transform, including the sign
flip of inverted edges, so the assembler stays agnostic of model internals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ModelMissing, NotFound, PlanError
from .paths import PathEdge, SynthesisPlan
from .recording import Recording

EdgeModelFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass
class ModelRegistry:
    """Maps ordered channel pairs to synthesize callables."""

    models: dict[tuple[str, str], EdgeModelFn] = field(default_factory=dict)

    def register(self, source: str, target: str, fn: EdgeModelFn) -> None:
        self.models[(source, target)] = fn

    def get(self, source: str, target: str) -> EdgeModelFn | None:
        return self.models.get((source, target))

    def require(self, source: str, target: str) -> EdgeModelFn:
        fn = self.get(source, target)
        if fn is None:
            raise ModelMissing(f"no model registered for edge {source}->{target}")
        return fn


def choose_source(candidates: list[tuple[str, PathEdge]]) -> tuple[str, PathEdge]:
    """Pick the candidate with minimal recorded score; ties go lexicographic."""
    if not candidates:
        raise PlanError("no candidate edges to choose from")
    return min(candidates, key=lambda item: (item[1].score, item[0]))


def _edge_seed(seed: int, target: str) -> int:
    return int(np.random.SeedSequence([seed, abs(hash(target)) % (2**31)]).generate_state(1)[0])


def yoas_assemble(
    plan: SynthesisPlan,
    references: Recording,
    registry: ModelRegistry,
    seed: int = 0,
    ground_truth: Recording | None = None,
) -> tuple[Recording, dict]:
    """Produce every plan channel from the reference channels.

    Returns the assembled recording (channel order = plan order) plus a
    report of the edge used per channel, with correlation distances against
    ground truth when supplied.
    """
    channels = plan.channels()
    order = {name: i for i, name in enumerate(channels)}
    refs = set(plan.reference_set)
    for r in plan.reference_set:
        if r not in references.channel_names:
            raise NotFound(f"reference channel {r!r} missing from input recording")

    available: dict[str, np.ndarray] = {
        r: references.channel(r).astype(np.float64) for r in plan.reference_set
    }
    report: dict[str, dict] = {
        r: {"kind": "reference", "source": None, "via": None, "score": 0.0}
        for r in plan.reference_set
    }

    def run_edge(edge: PathEdge) -> None:
        src_signal = available[edge.source]
        if edge.kind == "indirect":
            if edge.via not in available:
                leg = registry.require(edge.source, edge.via)
                available[edge.via] = np.asarray(
                    leg(src_signal, _edge_seed(seed, edge.via)), dtype=np.float64
                )
                report[edge.via] = {
                    "kind": "indirect-leg",
                    "source": edge.source,
                    "via": None,
                    "score": edge.score,
                }
            fn = registry.require(edge.via, edge.target)
            src = available[edge.via]
        else:
            fn = registry.require(edge.source, edge.target)
            src = src_signal
        available[edge.target] = np.asarray(
            fn(src, _edge_seed(seed, edge.target)), dtype=np.float64
        )
        report[edge.target] = {
            "kind": edge.kind,
            "source": edge.source,
            "via": edge.via,
            "score": float(edge.score),
        }

    pending = [c for c in channels if c not in available]
    while pending:
        progressed = False
        for target in sorted(pending):
            candidates = []
            for e in plan.edges_into(target):
                if e.source not in available:
                    continue
                if e.kind == "indirect" and e.via not in available:
                    if registry.get(e.source, e.via) is None:
                        continue
                candidates.append((e.source, e))
            # a mutual edge recorded in the other orientation also serves us
            for e in plan.edges:
                if e.kind == "mutual" and e.target in available and e.source == target:
                    candidates.append((e.target, PathEdge("mutual", e.target, target, e.score)))
            if not candidates:
                continue
            run_edge(choose_source(candidates)[1])
            progressed = True
        pending = [c for c in channels if c not in available]
        if pending and not progressed:
            raise PlanError(
                f"assembly stalled; unreachable channels {sorted(pending)} "
                "(cycle among non-mutual edges or missing models)"
            )

    rows = [available[name] for name in channels]
    out = Recording(
        tuple(channels),
        np.stack(rows).astype(np.float32),
        references.rate,
        references.label,
    )
    # reference channels stay bit-exact in float32
    for r in plan.reference_set:
        out.samples[order[r]] = references.channel(r)

    if ground_truth is not None:
        from .errors import UndefinedCorrelation
        from .paths import correlation_distance

        for name in channels:
            if name in refs or name not in ground_truth.channel_names:
                continue
            try:
                d = correlation_distance(
                    out.channel(name).astype(np.float64),
                    ground_truth.channel(name).astype(np.float64),
                )
            except UndefinedCorrelation:
                d = 2.0
            report[name]["d_truth"] = round(float(d), 10)

    return out, report
