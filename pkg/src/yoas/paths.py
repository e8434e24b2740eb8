"""Generation-path planning over channel pairs.

Three threshold predicates decide whether a target channel can be produced
directly from a source, indirectly through an intermediate, or mutually
with a far symmetric partner; an inverted variant covers strongly
anti-correlated neighbors by negating the generated signal. A sweep over
ordered pairs classifies every candidate edge, divisions merge when their
reference channels generate each other, and a greedy pass then drops every
reference whose channels remain reachable from the rest.

The sweep is decoupled from model training through an edge-oracle callable
``(source, target) -> (n, T) generated target samples or None``; scores are
the mean correlation distance over those samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidTriple, NotFound, PlanError, UndefinedCorrelation
from .montage import Montage, RegionalDivision, physical_distance

EDGE_KINDS = ("direct", "indirect", "mutual", "inverted")


@dataclass(frozen=True)
class Thresholds:
    """Distance bounds (map units) and correlation-distance bounds."""

    l1: float
    l2: float
    l3: float
    p1: float = 0.3
    p2: float = 0.3
    p3: float = 0.1

    def __post_init__(self):
        for name in ("l1", "l2", "l3"):
            if getattr(self, name) <= 0:
                raise PlanError(f"{name} must be positive")
        for name in ("p1", "p2", "p3"):
            v = getattr(self, name)
            if not 0 <= v <= 2:
                raise PlanError(f"{name} must lie in [0, 2], got {v}")

    @staticmethod
    def for_montage(m: Montage, p1: float = 0.3, p2: float = 0.3,
                    p3: float = 0.1) -> "Thresholds":
        """The defaults: first two bounds at the map radius, third at its diameter."""
        return Thresholds(l1=m.radius, l2=m.radius, l3=2.0 * m.radius, p1=p1, p2=p2, p3=p3)


@dataclass(frozen=True)
class PathEdge:
    kind: str
    source: str
    target: str
    score: float
    via: str | None = None

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise PlanError(f"unknown edge kind {self.kind!r}")
        if self.source == self.target:
            raise PlanError(f"self-edge on {self.source!r}")
        if self.kind == "indirect":
            if self.via is None or self.via in (self.source, self.target):
                raise PlanError("indirect edge needs a distinct via channel")
        elif self.via is not None:
            raise PlanError(f"{self.kind} edge must not carry a via channel")


@dataclass
class SynthesisPlan:
    divisions: list[RegionalDivision]
    edges: list[PathEdge]
    reference_set: tuple[str, ...]

    def channels(self) -> list[str]:
        return [n for d in self.divisions for n in d.members]

    def edges_into(self, target: str) -> list[PathEdge]:
        return [e for e in self.edges if e.target == target]


# ---------------------------------------------------------------------------
# correlation distance


def correlation_distance(x, y) -> float:
    """|1 - pearson|; raises for constant inputs where the coefficient is undefined."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise PlanError(f"correlation needs two equal vectors of length >= 2, got {x.shape}/{y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.linalg.norm(xc) * np.linalg.norm(yc)
    if denom == 0:
        raise UndefinedCorrelation("correlation undefined for constant input")
    return float(abs(1.0 - (xc @ yc) / denom))


def mean_correlation_distance(x, samples) -> float:
    """Mean distance of x against every generated sample; constants score 2."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    scores = []
    for row in samples:
        try:
            scores.append(correlation_distance(x, row))
        except UndefinedCorrelation:
            scores.append(2.0)
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# hypothesis predicates


def check_hypothesis1(m: Montage, th: Thresholds, source: str, target: str,
                      source_signal, generated_target) -> bool:
    """Direct generation: close enough and the generated target tracks the source."""
    if source not in m or target not in m:
        raise NotFound(f"channels {source!r}/{target!r} must be in the montage")
    if physical_distance(m, source, target) > th.l1:
        return False
    return mean_correlation_distance(source_signal, generated_target) <= th.p1


def check_hypothesis2(m: Montage, th: Thresholds, source: str, via: str, target: str,
                      source_signal, via_signal, generated_via,
                      generated_target_from_via) -> bool:
    """Indirect generation through an intermediate; all three distances bound."""
    if len({source, via, target}) != 3:
        raise InvalidTriple(f"channels must be pairwise distinct: {source}, {via}, {target}")
    for a, b in ((source, via), (source, target), (via, target)):
        if physical_distance(m, a, b) > th.l2:
            return False
    if mean_correlation_distance(source_signal, generated_via) > th.p2:
        return False
    return mean_correlation_distance(via_signal, generated_target_from_via) <= th.p2


def check_hypothesis3(m: Montage, th: Thresholds, a: str, b: str,
                      a_signal, b_signal, generated_b_from_a,
                      generated_a_from_b) -> bool:
    """Mutual generation for strongly coupled pairs anywhere on the map."""
    if a == b:
        raise InvalidTriple("mutual check needs two distinct channels")
    if physical_distance(m, a, b) > th.l3:
        return False
    if mean_correlation_distance(a_signal, generated_b_from_a) > th.p3:
        return False
    return mean_correlation_distance(generated_a_from_b, b_signal) <= th.p3


# ---------------------------------------------------------------------------
# paradigm 1: edge refinement

EdgeOracle = Callable[[str, str], "np.ndarray | None"]


@dataclass
class PathSurvey:
    """Paradigm-1 output: classified edges plus per-pair oracle failures."""

    edges: list[PathEdge]
    failures: dict[tuple[str, str], str] = field(default_factory=dict)


def _oracle_samples(oracle, source, target, failures):
    key = (source, target)
    if key in failures:
        return None
    try:
        out = oracle(source, target)
    except Exception as exc:  # noqa: BLE001 - sweep must survive oracle failures
        failures[key] = str(exc)
        return None
    return None if out is None else np.atleast_2d(np.asarray(out, dtype=np.float64))


def paradigm1(channels, signals: Mapping[str, np.ndarray], oracle: EdgeOracle,
              m: Montage, th: Thresholds) -> PathSurvey:
    """Classify every ordered channel pair as direct, indirect, mutual,
    inverted or infeasible.

    Precedence follows the hypothesis order; the indirect via minimizes the
    larger leg distance with lexicographic tie-breaking. Oracle failures
    mark the pair infeasible and never abort the sweep.
    """
    channels = list(channels)
    edges: list[PathEdge] = []
    failures: dict[tuple[str, str], str] = {}
    gen = {}
    for s in channels:
        for t in channels:
            if s != t:
                gen[(s, t)] = _oracle_samples(oracle, s, t, failures)

    for s in channels:
        for t in channels:
            if s == t:
                continue
            g_st = gen[(s, t)]
            dist_st = physical_distance(m, s, t)

            if g_st is not None and dist_st <= th.l1:
                d = mean_correlation_distance(signals[s], g_st)
                if d <= th.p1:
                    edges.append(PathEdge("direct", s, t, round(d, 12)))
                    continue

            best_via = None
            if dist_st <= th.l2:
                for v in channels:
                    if v in (s, t):
                        continue
                    g_sv, g_vt = gen[(s, v)], gen[(v, t)]
                    if g_sv is None or g_vt is None:
                        continue
                    if physical_distance(m, s, v) > th.l2 or physical_distance(m, v, t) > th.l2:
                        continue
                    leg1 = mean_correlation_distance(signals[s], g_sv)
                    leg2 = mean_correlation_distance(signals[v], g_vt)
                    if leg1 <= th.p2 and leg2 <= th.p2:
                        worst = max(leg1, leg2)
                        if best_via is None or (worst, v) < best_via:
                            best_via = (worst, v)
            if best_via is not None:
                edges.append(PathEdge("indirect", s, t, round(best_via[0], 12), via=best_via[1]))
                continue

            g_ts = gen[(t, s)]
            if g_st is not None and g_ts is not None and dist_st <= th.l3:
                d_fwd = mean_correlation_distance(signals[s], g_st)
                d_rev = mean_correlation_distance(signals[t], g_ts)
                if d_fwd <= th.p3 and d_rev <= th.p3:
                    edges.append(PathEdge("mutual", s, t, round(max(d_fwd, d_rev), 12)))
                    continue

            if g_st is not None and dist_st <= th.l1:
                d_inv = mean_correlation_distance(signals[s], -g_st)
                if d_inv <= th.p1:
                    edges.append(PathEdge("inverted", s, t, round(d_inv, 12)))

    return PathSurvey(edges=edges, failures=failures)


# ---------------------------------------------------------------------------
# paradigm 2: division merging


class UnionFind:
    """Path-compressing disjoint sets over hashable items."""

    def __init__(self):
        self._parent = {}

    def find(self, a):
        path = []
        while self._parent.get(a, a) != a:
            path.append(a)
            a = self._parent[a]
        for node in path:
            self._parent[node] = a
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self._parent[rb] = ra


def paradigm2(divisions: list[RegionalDivision], edges: list[PathEdge]) -> list[RegionalDivision]:
    """Merge divisions whose reference channels generate each other.

    The merge test requires a feasible edge in both directions between the
    two references (a mutual edge counts for both). Merging is transitive;
    the merged reference is the lexicographically first original reference.
    """
    directed = {(e.source, e.target) for e in edges}
    directed |= {(e.target, e.source) for e in edges if e.kind == "mutual"}

    uf = UnionFind()
    for i, a in enumerate(divisions):
        for b in divisions[i + 1 :]:
            ra, rb = a.reference, b.reference
            if (ra, rb) in directed and (rb, ra) in directed:
                uf.union(a.id, b.id)

    groups: dict[int, list[RegionalDivision]] = {}
    for d in divisions:
        groups.setdefault(uf.find(d.id), []).append(d)

    merged = []
    for new_id, root in enumerate(sorted(groups, key=lambda r: min(d.id for d in groups[r])),
                                  start=1):
        parts = sorted(groups[root], key=lambda d: d.id)
        reference = min(p.reference for p in parts)
        members = [reference]
        for p in parts:
            members.extend(n for n in p.members if n != reference)
        merged.append(RegionalDivision(id=new_id, reference=reference, members=tuple(members)))
    return merged


# ---------------------------------------------------------------------------
# plan assembly and greedy optimization


def _closure(sources, edges) -> set[str]:
    reached = set(sources)
    frontier = list(sources)
    by_source: dict[str, list[PathEdge]] = {}
    for e in edges:
        by_source.setdefault(e.source, []).append(e)
        if e.kind == "mutual":
            by_source.setdefault(e.target, []).append(
                PathEdge("mutual", e.target, e.source, e.score)
            )
    while frontier:
        node = frontier.pop()
        for e in by_source.get(node, ()):
            if e.kind == "indirect" and e.via not in reached:
                # the intermediate channel is produced on the way
                reached.add(e.via)
                frontier.append(e.via)
            if e.target not in reached:
                reached.add(e.target)
                frontier.append(e.target)
    return reached


def build_plan(divisions: list[RegionalDivision], edges: list[PathEdge]) -> SynthesisPlan:
    """Assemble a covering plan; unreachable channels stay measured references."""
    channels = [n for d in divisions for n in d.members]
    refs = sorted(d.reference for d in divisions)
    reached = _closure(refs, edges)
    for name in sorted(channels):
        if name not in reached:
            refs.append(name)
            reached = _closure(refs, edges)
    return SynthesisPlan(divisions=list(divisions), edges=list(edges),
                         reference_set=tuple(sorted(set(refs))))


def optimize_paths(plan: SynthesisPlan) -> SynthesisPlan:
    """Greedily drop references whose channels stay covered by the others.

    Candidates are processed in descending division size (ties by name);
    a removal is kept only when full coverage survives, so the result
    always covers every channel. The output is a fixed point.
    """
    channels = set(plan.channels())
    size_of = {d.reference: d.size for d in plan.divisions}
    refs = set(plan.reference_set)

    changed = True
    while changed:
        changed = False
        for ref in sorted(refs, key=lambda r: (-size_of.get(r, 1), r)):
            if len(refs) == 1:
                break
            candidate = refs - {ref}
            if channels <= _closure(sorted(candidate), plan.edges):
                refs = candidate
                changed = True
    if channels - _closure(sorted(refs), plan.edges):
        raise PlanError("reference optimization broke coverage")
    return replace_reference_set(plan, tuple(sorted(refs)))


def replace_reference_set(plan: SynthesisPlan, refs: tuple[str, ...]) -> SynthesisPlan:
    """A new plan with merged division structure following the reference set.

    Divisions whose reference was dropped fold into the division of the
    lexicographically first remaining reference that reaches them.
    """
    remaining = list(refs)
    donors = [d for d in plan.divisions if d.reference not in refs]
    keepers = [d for d in plan.divisions if d.reference in refs]
    extra_refs = [r for r in refs if all(d.reference != r for d in keepers)]
    for r in sorted(extra_refs):
        keepers.append(RegionalDivision(id=0, reference=r, members=(r,)))

    members_of = {d.reference: [n for n in d.members] for d in keepers}
    claimed = {n for d in keepers for n in d.members}
    for donor in sorted(donors, key=lambda d: d.id):
        home = None
        for r in sorted(remaining):
            if donor.reference in _closure([r] + [n for n in members_of[r]], plan.edges):
                home = r
                break
        if home is None:
            home = sorted(remaining)[0]
        members_of[home].extend(n for n in donor.members if n not in claimed)
        claimed.update(donor.members)

    divisions = []
    for i, r in enumerate(sorted(members_of), start=1):
        ordered = [r] + [n for n in members_of[r] if n != r]
        divisions.append(RegionalDivision(id=i, reference=r, members=tuple(ordered)))
    return SynthesisPlan(divisions=divisions, edges=list(plan.edges), reference_set=refs)


# ---------------------------------------------------------------------------
# serialization


def plan_to_json(plan: SynthesisPlan) -> str:
    doc = {
        "reference_set": list(plan.reference_set),
        "divisions": [
            {"id": d.id, "reference": d.reference, "members": list(d.members)}
            for d in plan.divisions
        ],
        "edges": [
            {
                "source": e.source,
                "target": e.target,
                "kind": e.kind,
                "via": e.via,
                "score": round(float(e.score), 10),
            }
            for e in sorted(plan.edges, key=lambda e: (e.source, e.target, e.kind))
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def plan_from_json(text: str) -> SynthesisPlan:
    doc = json.loads(text)
    divisions = [
        RegionalDivision(id=d["id"], reference=d["reference"], members=tuple(d["members"]))
        for d in doc["divisions"]
    ]
    edges = [
        PathEdge(kind=e["kind"], source=e["source"], target=e["target"],
                 score=e["score"], via=e.get("via"))
        for e in doc["edges"]
    ]
    return SynthesisPlan(divisions=divisions, edges=edges,
                         reference_set=tuple(doc["reference_set"]))
