"""Bias signals: per-channel differences against the division reference.

The bias of channel j in a division is the elementwise difference between
that channel and the division's reference channel. Reconstruction is the
exact inverse (bias + reference), so biases are kept in float64 even when
recordings are float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotFound, ShapeError
from .montage import RegionalDivision
from .recording import Recording, load as load_recording, save as save_recording


@dataclass
class BiasSet:
    """Bias vectors for every non-reference member of one division."""

    division_id: int
    reference_name: str
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.reference_name in self.entries:
            raise ShapeError("the reference channel itself must not carry a bias entry")
        lengths = {v.shape[-1] for v in self.entries.values()}
        if len(lengths) > 1:
            raise ShapeError(f"bias entries have mismatched lengths: {sorted(lengths)}")

    def channels(self) -> list[str]:
        return list(self.entries)


def extract_bias(r: Recording, d: RegionalDivision) -> BiasSet:
    """Biases of all non-reference division members relative to the reference."""
    for name in d.members:
        if name not in r.channel_names:
            raise NotFound(f"division member {name!r} missing from recording")
    ref = r.channel(d.reference).astype(np.float64)
    entries = {
        name: r.channel(name).astype(np.float64) - ref
        for name in d.non_reference_members()
    }
    return BiasSet(division_id=d.id, reference_name=d.reference, entries=entries)


def reconstruct(bias: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Inverse of extraction: channel = bias + reference."""
    bias = np.asarray(bias, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if bias.shape != reference.shape:
        raise ShapeError(f"bias shape {bias.shape} != reference shape {reference.shape}")
    return bias + reference


def negate(signal: np.ndarray) -> np.ndarray:
    """Elementwise sign flip; its own inverse."""
    return -np.asarray(signal)


def save_bias_set(bs: BiasSet, path, rate: float = 250.0) -> None:
    """Store the bias matrix as `.yeeg` with division metadata in a sidecar."""
    path = Path(path)
    names = bs.channels()
    data = np.stack([bs.entries[n] for n in names]) if names else np.zeros((0, 0))
    rec = Recording(tuple(names), data.astype(np.float32), rate) if names else None
    if rec is None:
        raise ShapeError("cannot serialize an empty bias set")
    save_recording(rec, path)
    sidecar = {
        "division_id": bs.division_id,
        "reference_name": bs.reference_name,
        "channels": names,
    }
    path.with_name(path.name + ".bias.json").write_text(json.dumps(sidecar, sort_keys=True))


def load_bias_set(path) -> BiasSet:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.name + ".bias.json").read_text())
    rec = load_recording(path)
    entries = {
        name: rec.samples[i].astype(np.float64)
        for i, name in enumerate(sidecar["channels"])
    }
    return BiasSet(
        division_id=sidecar["division_id"],
        reference_name=sidecar["reference_name"],
        entries=entries,
    )
