"""Electrode geometry: 10-20 head maps, physical distance, regional division.

A montage is a set of named electrodes with 2D positions on the head
projection disk. It is the source of the physical distance measure between
electrodes and of the distance thresholds used by the path planner (the
first two thresholds equal the map radius, the third its diameter).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, NotFound, ParseError


@dataclass(frozen=True)
class Electrode:
    """A named electrode with its projected 2D position."""

    name: str
    pos: tuple[float, float]


@dataclass(frozen=True)
class Montage:
    """Ordered electrode list plus the radius of the projection disk."""

    electrodes: tuple[Electrode, ...]
    radius: float = 1.0
    lobes: dict[str, str] = field(default_factory=dict)
    hemispheres: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"montage radius must be positive, got {self.radius}")
        if len(self.electrodes) < 2:
            raise ConfigError("a montage needs at least 2 electrodes")
        names = [e.name for e in self.electrodes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"duplicate electrode names: {dupes}")
        for e in self.electrodes:
            if math.hypot(*e.pos) > self.radius * (1 + 1e-6):
                raise ConfigError(
                    f"electrode {e.name} at {e.pos} lies outside the disk of radius {self.radius}"
                )
        object.__setattr__(self, "_pos", {e.name: e.pos for e in self.electrodes})

    @property
    def channel_names(self) -> list[str]:
        return [e.name for e in self.electrodes]

    def position(self, name: str) -> tuple[float, float]:
        try:
            return self._pos[name]
        except KeyError:
            raise NotFound(f"unknown channel {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._pos


@dataclass(frozen=True)
class RegionalDivision:
    """A group of channels sharing one reference channel.

    The reference is always the first member; members never overlap across
    divisions and together cover the whole montage.
    """

    id: int
    reference: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members or self.members[0] != self.reference:
            raise ConfigError(
                f"division {self.id}: reference {self.reference!r} must be the first member"
            )
        if len(set(self.members)) != len(self.members):
            raise ConfigError(f"division {self.id}: duplicate members")

    @property
    def size(self) -> int:
        return len(self.members)

    def non_reference_members(self) -> tuple[str, ...]:
        return self.members[1:]


@dataclass(frozen=True)
class GroupRule:
    """Selects channels by lobe (and optionally hemisphere) into one division.

    With lobe=None the rule matches every unclaimed channel. With
    reference=None the channel nearest the group centroid becomes the
    reference (ties broken lexicographically).
    """

    lobe: str | None = None
    hemisphere: str | None = None
    reference: str | None = None


@dataclass(frozen=True)
class DivisionRules:
    """Declarative recipe for the initial regional division."""

    groups: tuple[GroupRule, ...] = ()
    mutual_pairs: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def single(reference: str) -> "DivisionRules":
        return DivisionRules(groups=(GroupRule(reference=reference),))


def physical_distance(m: Montage, a: str, b: str) -> float:
    """Euclidean distance between two electrode positions. Symmetric, 0 iff a == b."""
    xa, ya = m.position(a)
    xb, yb = m.position(b)
    return math.hypot(xa - xb, ya - yb)


def distance_thresholds(m: Montage) -> tuple[float, float, float]:
    """The three planner distance bounds: (radius, radius, diameter)."""
    return (m.radius, m.radius, 2.0 * m.radius)


def initial_division(m: Montage, rules: DivisionRules) -> list[RegionalDivision]:
    """Partition the montage channels into regional divisions.

    Mutual pairs are claimed first as their own two-channel divisions, then
    each group rule collects the remaining channels matching its lobe and
    hemisphere selectors. Every channel must end up in exactly one division.
    """
    claimed: dict[str, int] = {}
    divisions: list[tuple[str, list[str]]] = []

    for a, b in rules.mutual_pairs:
        for name in (a, b):
            if name not in m:
                raise ConfigError(f"mutual pair channel {name!r} not in montage")
            if name in claimed:
                raise ConfigError(f"channel {name!r} claimed by more than one rule")
            claimed[name] = len(divisions)
        divisions.append((a, [a, b]))

    for rule in rules.groups:
        members = []
        for e in m.electrodes:
            if e.name in claimed:
                continue
            lobe = m.lobes.get(e.name)
            if rule.lobe is not None:
                if lobe is None:
                    raise ConfigError(f"channel {e.name!r} has no lobe annotation")
                if lobe != rule.lobe:
                    continue
            if rule.hemisphere is not None and m.hemispheres.get(e.name) != rule.hemisphere:
                continue
            members.append(e.name)
        if not members:
            raise ConfigError(
                f"group rule (lobe={rule.lobe!r}, hemisphere={rule.hemisphere!r}) matched no channels"
            )
        if rule.reference is not None:
            if rule.reference not in members:
                raise ConfigError(
                    f"configured reference {rule.reference!r} is not among group members {members}"
                )
            ref = rule.reference
        else:
            cx = sum(m.position(n)[0] for n in members) / len(members)
            cy = sum(m.position(n)[1] for n in members) / len(members)
            ref = min(members, key=lambda n: (math.hypot(m.position(n)[0] - cx, m.position(n)[1] - cy), n))
        for name in members:
            if name in claimed:
                raise ConfigError(f"channel {name!r} claimed by more than one rule")
            claimed[name] = len(divisions)
        divisions.append((ref, members))

    leftover = [e.name for e in m.electrodes if e.name not in claimed]
    if leftover:
        raise ConfigError(f"channels not covered by any division rule: {leftover}")

    out = []
    for i, (ref, members) in enumerate(divisions, start=1):
        ordered = [ref] + [n for n in members if n != ref]
        out.append(RegionalDivision(id=i, reference=ref, members=tuple(ordered)))
    return out


def parse_montage(text: str, source: str = "<string>") -> Montage:
    radius = None
    electrodes = []
    lobes: dict[str, str] = {}
    hemis: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "radius":
            if len(parts) != 2:
                raise ParseError(f"{source}: malformed radius declaration", line=lineno)
            try:
                radius = float(parts[1])
            except ValueError:
                raise ParseError(f"{source}: radius is not a number", line=lineno) from None
            continue
        if len(parts) != 5:
            raise ParseError(
                f"{source}: expected 'name x y lobe hemisphere', got {len(parts)} fields", line=lineno
            )
        name, xs, ys, lobe, hemi = parts
        try:
            x, y = float(xs), float(ys)
        except ValueError:
            raise ParseError(f"{source}: non-numeric coordinate for {name!r}", line=lineno) from None
        electrodes.append(Electrode(name=name, pos=(x, y)))
        if lobe != "-":
            lobes[name] = lobe
        if hemi != "-":
            hemis[name] = hemi
    if radius is None:
        raise ParseError(f"{source}: missing 'radius <float>' header line")
    return Montage(electrodes=tuple(electrodes), radius=radius, lobes=lobes, hemispheres=hemis)


def load_montage(path) -> Montage:
    p = Path(path)
    if not p.exists():
        raise NotFound(f"montage file {p} does not exist")
    return parse_montage(p.read_text(), source=str(p))


def _bundled(name: str) -> Montage:
    text = resources.files("yoas").joinpath(f"data/{name}").read_text()
    return parse_montage(text, source=name)


def montage_32() -> Montage:
    """The bundled 32-channel 10-20 head map."""
    return _bundled("montage32.txt")


def montage_desk8() -> Montage:
    """The bundled 8-channel desk-scale map."""
    return _bundled("desk8.txt")


def default_rules_32() -> DivisionRules:
    """Division recipe for the 32-channel map.

    References cover Fp1, Fz, Cz, A1, CP1, CP2, Pz, T5 and Oz; the strongly
    symmetric pairs (A1, A2) and (O1, O2) stay as their own mutual divisions.
    """
    return DivisionRules(
        groups=(
            GroupRule("frontal", "L", "Fp1"),
            GroupRule("frontal", "R", "Fp2"),
            GroupRule("midfrontal", None, "Fz"),
            GroupRule("central", None, "Cz"),
            GroupRule("centroparietal", "L", "CP1"),
            GroupRule("centroparietal", "R", "CP2"),
            GroupRule("parietal", None, "Pz"),
            GroupRule("temporoposterior", None, "T5"),
            GroupRule("parietooccipital", None, "Oz"),
        ),
        mutual_pairs=(("A1", "A2"), ("O1", "O2")),
    )


def default_rules_desk8() -> DivisionRules:
    return DivisionRules(
        groups=(
            GroupRule("frontal", None, "Fp1"),
            GroupRule("midline", None, "Cz"),
        ),
        mutual_pairs=(("A1", "A2"),),
    )
