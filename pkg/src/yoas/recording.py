"""Multichannel signal data model, file IO and the synthetic desk-scale corpus.

Recordings hold a channels x samples matrix in microvolts together with the
sampling rate and an optional class label. Two file formats are supported:

* ``.csv``  - header row of channel names, one row per sample.
* ``.yeeg`` - 32-byte binary header (magic ``YOAS``, u32 version, u32
  channels, u64 samples, f64 rate, 4 reserved bytes), then a channel-major
  little-endian float32 payload. An optional ``<file>.meta.json`` sidecar
  carries channel names and the class label.

The corpus generator mixes band-limited unit-variance latents through the
eigen-factor of a declared correlation matrix, so the realized cross-channel
Pearson correlations track the declared couplings.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidWindow, NotFound, ParseError, SpecError
from .montage import Montage

_MAGIC = b"YOAS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQd4x")
assert _HEADER.size == 32


@dataclass
class Recording:
    """An immutable-by-convention multichannel recording."""

    channel_names: tuple[str, ...]
    samples: np.ndarray
    rate: float
    label: int | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if self.samples.ndim != 2:
            raise SpecError(f"samples must be 2D, got shape {self.samples.shape}")
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != self.samples.shape[0]:
            raise SpecError(
                f"{len(self.channel_names)} channel names for {self.samples.shape[0]} rows"
            )
        if self.rate <= 0:
            raise SpecError(f"sampling rate must be positive, got {self.rate}")
        self._index = {n: i for i, n in enumerate(self.channel_names)}

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.samples[self._index[name]]
        except KeyError:
            raise NotFound(f"channel {name!r} not in recording") from None

    def restrict(self, names) -> "Recording":
        """A new recording containing only the given channels, in that order."""
        rows = [self.channel(n) for n in names]
        return Recording(tuple(names), np.stack(rows), self.rate, self.label)

    def slice(self, start: int, stop: int) -> "Recording":
        return Recording(self.channel_names, self.samples[:, start:stop], self.rate, self.label)


@dataclass
class SegmentSet:
    """Equal-length windows cut from one recording."""

    segments: list[Recording]
    window: int
    stride: int

    def __post_init__(self):
        if self.window <= 0:
            raise InvalidWindow(f"window must be positive, got {self.window}")
        for s in self.segments:
            if s.n_samples != self.window:
                raise InvalidWindow("all segments must have exactly `window` samples")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def segment(r: Recording, window: int, stride: int) -> SegmentSet:
    """Cut ``floor((T - W) / stride) + 1`` windows; none crosses the boundary."""
    if window <= 0 or window > r.n_samples:
        raise InvalidWindow(
            f"window {window} out of range for recording of {r.n_samples} samples"
        )
    if stride <= 0:
        raise InvalidWindow(f"stride must be positive, got {stride}")
    starts = range(0, r.n_samples - window + 1, stride)
    return SegmentSet([r.slice(s, s + window) for s in starts], window, stride)


# ---------------------------------------------------------------------------
# file formats


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save(rec: Recording, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        _save_csv(rec, path)
    elif path.suffix == ".yeeg":
        _save_yeeg(rec, path)
    else:
        raise SpecError(f"unknown recording format {path.suffix!r}")


def load(path, rate: float = 250.0) -> Recording:
    """Load a recording; `rate` is only used for CSV, which does not store it."""
    path = Path(path)
    if not path.exists():
        raise NotFound(f"recording file {path} does not exist")
    if path.suffix == ".csv":
        return _load_csv(path, rate)
    if path.suffix == ".yeeg":
        return _load_yeeg(path)
    raise SpecError(f"unknown recording format {path.suffix!r}")


def _save_csv(rec: Recording, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(rec.channel_names)
        for row in rec.samples.T:
            w.writerow([format(v, ".10g") for v in row])


def _load_csv(path: Path, rate: float) -> Recording:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty CSV", line=1) from None
        names = [n.strip() for n in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"{path}: row has {len(row)} values, expected {len(names)}", line=lineno
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}: non-numeric value", line=lineno) from None
    if not rows:
        raise ParseError(f"{path}: CSV has a header but no samples", line=2)
    data = np.asarray(rows, dtype=np.float32).T
    return Recording(tuple(names), data, rate)


def _save_yeeg(rec: Recording, path: Path) -> None:
    data = np.ascontiguousarray(rec.samples, dtype="<f4")
    header = _HEADER.pack(_MAGIC, _VERSION, rec.n_channels, rec.n_samples, float(rec.rate))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
    meta = {"channel_names": list(rec.channel_names), "label": rec.label}
    _meta_path(path).write_text(json.dumps(meta, sort_keys=True))


def _load_yeeg(path: Path) -> Recording:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError(f"{path}: truncated header", offset=len(blob))
    magic, version, channels, samples, rate = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}", offset=0)
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported version {version}", offset=4)
    expected = _HEADER.size + channels * samples * 4
    if len(blob) != expected:
        raise ParseError(
            f"{path}: payload size {len(blob) - _HEADER.size} does not match header",
            offset=min(len(blob), expected),
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(channels, samples)
    names = [f"ch{i}" for i in range(channels)]
    label = None
    mp = _meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
        names = meta.get("channel_names", names)
        label = meta.get("label")
    return Recording(tuple(names), data.copy(), rate, label)


# ---------------------------------------------------------------------------
# synthetic corpus

DEFAULT_BANDS = ((1.0, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0))


@dataclass
class CorpusSpec:
    """Declarative description of a synthetic corpus.

    ``coupling`` is a symmetric correlation matrix (unit diagonal, PSD) over
    the channels; ``band_powers`` gives each channel's relative weight per
    band; ``noise_level`` is the fraction of each latent's variance that is
    white instead of band-limited (couplings are unaffected by it).
    """

    channel_names: tuple[str, ...]
    coupling: np.ndarray
    samples: int = 2048
    rate: float = 250.0
    n_classes: int = 3
    recordings_per_class: int = 2
    band_powers: np.ndarray | None = None
    bands: tuple = DEFAULT_BANDS
    noise_level: float = 0.25
    class_band_gain: float = 2.5
    amplitude: float = 20.0
    sinusoids_per_band: int = 4

    def __post_init__(self):
        self.channel_names = tuple(self.channel_names)
        self.coupling = np.asarray(self.coupling, dtype=float)
        c = len(self.channel_names)
        if self.coupling.shape != (c, c):
            raise SpecError(f"coupling must be {c}x{c}, got {self.coupling.shape}")
        if not np.allclose(self.coupling, self.coupling.T, atol=1e-12):
            raise SpecError("coupling matrix must be symmetric")
        if not np.allclose(np.diag(self.coupling), 1.0, atol=1e-12):
            raise SpecError("coupling matrix must have unit diagonal")
        eigvals = np.linalg.eigvalsh(self.coupling)
        if eigvals.min() < -1e-8:
            raise SpecError(
                f"coupling matrix is not positive semidefinite (min eigenvalue {eigvals.min():.3g})"
            )
        if self.band_powers is None:
            self.band_powers = np.ones((c, len(self.bands)))
        self.band_powers = np.asarray(self.band_powers, dtype=float)
        if self.band_powers.shape != (c, len(self.bands)):
            raise SpecError("band_powers must be channels x bands")
        if not 0.0 <= self.noise_level < 1.0:
            raise SpecError("noise_level must lie in [0, 1)")


def _mixing_factor(coupling: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(coupling)
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def _band_latent(rng, spec: CorpusSpec, weights: np.ndarray, t: np.ndarray) -> np.ndarray:
    """One unit-variance latent: band-weighted sinusoids plus white noise."""
    sig = np.zeros_like(t)
    for (lo, hi), w in zip(spec.bands, weights):
        if w <= 0:
            continue
        freqs = rng.uniform(lo, hi, size=spec.sinusoids_per_band)
        phases = rng.uniform(0, 2 * np.pi, size=spec.sinusoids_per_band)
        amps = rng.uniform(0.5, 1.0, size=spec.sinusoids_per_band) * w
        for f, p, a in zip(freqs, phases, amps):
            sig += a * np.sin(2 * np.pi * f * t + p)
    sd = sig.std()
    if sd > 0:
        sig = sig / sd
    eta = spec.noise_level
    if eta > 0:
        white = rng.standard_normal(t.shape)
        white /= max(white.std(), 1e-12)
        sig = np.sqrt(1 - eta**2) * sig + eta * white
    sd = sig.std()
    return sig / sd if sd > 0 else sig


def synthesize_recording(spec: CorpusSpec, label: int, rng) -> Recording:
    c = len(spec.channel_names)
    t = np.arange(spec.samples) / spec.rate
    weights = spec.band_powers.copy()
    boost_band = label % len(spec.bands)
    weights[:, boost_band] *= 1.0 + spec.class_band_gain
    latents = np.stack([_band_latent(rng, spec, weights[i], t) for i in range(c)])
    # orthonormalize the (already near-orthogonal) latents so the realized
    # sample correlations equal the declared couplings
    latents = latents - latents.mean(axis=1, keepdims=True)
    q, r = np.linalg.qr(latents.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    latents = (q * signs).T * np.sqrt(spec.samples)
    mixed = _mixing_factor(spec.coupling) @ latents
    # exact-unit couplings promise bitwise-equal channels
    for i in range(c):
        for j in range(i + 1, c):
            if spec.coupling[i, j] == 1.0:
                mixed[j] = mixed[i]
    mixed = mixed - mixed.mean(axis=1, keepdims=True)
    sd = mixed.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    mixed = mixed / sd * spec.amplitude
    return Recording(spec.channel_names, mixed.astype(np.float32), spec.rate, label)


def synthesize_corpus(montage: Montage, spec: CorpusSpec, seed: int) -> list[Recording]:
    """Deterministic corpus: `recordings_per_class` recordings per class."""
    for name in spec.channel_names:
        if name not in montage:
            raise SpecError(f"corpus channel {name!r} not in montage")
    n = spec.n_classes * spec.recordings_per_class
    seeds = np.random.SeedSequence(seed).spawn(n)
    out = []
    k = 0
    for label in range(spec.n_classes):
        for _ in range(spec.recordings_per_class):
            out.append(synthesize_recording(spec, label, np.random.default_rng(seeds[k])))
            k += 1
    return out
