"""Encoded feature sequences and their on-disk container.

A video arrives here already encoded as a [M, C] token matrix laid out over
a (T', H', W') spatiotemporal grid, T'-major. This module owns the ESCF
binary container for those tokens, sinusoidal positional encoding, exemplar
extraction from annotated repetition intervals, and a synthetic generator
that plants repeated motifs so the whole pipeline can train and evaluate
without any real videos.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import RepetitionAnnotation
from .numerics import Tensor

__all__ = [
    "FeatureSequence",
    "ExemplarLatent",
    "SyntheticSpec",
    "FeatureFileError",
    "BadMagicError",
    "UnsupportedVersionError",
    "GeometryError",
    "TruncatedPayloadError",
    "InfeasibleSpecError",
    "add_positional_encoding",
    "save_features",
    "load_features",
    "synth_sequence",
    "extract_exemplar",
]

ESCF_MAGIC = b"ESCF"
ESCF_VERSION = 1
# magic, version, T', H', W', C, raw frames R, frames per window
_HEADER = struct.Struct("<4s7I")

_ORIGINS = ("same_video", "other_video", "learned_z0")


class FeatureFileError(Exception):
    """Base class for feature-container parsing failures."""


class BadMagicError(FeatureFileError):
    """File does not start with the ESCF magic bytes."""


class UnsupportedVersionError(FeatureFileError):
    """Container version is not one this reader understands."""


class GeometryError(FeatureFileError):
    """Header dimensions are inconsistent (zero dims, T' not dividing R,
    or payload longer than the header claims)."""


class TruncatedPayloadError(FeatureFileError):
    """File ends before the header-declared payload is complete."""


class InfeasibleSpecError(ValueError):
    """Synthetic spec asks for more content than fits in max_frames."""


@dataclass(frozen=True)
class FeatureSequence:
    """Token matrix [M, C] over a (T', H', W') grid, T'-major row order.

    ``raw_frame_count`` records how many raw video frames the sequence
    covers, so annotations in frame units can be aligned to token bins.
    """

    tokens: Tensor
    grid: tuple[int, int, int]
    raw_frame_count: int
    frames_per_window: int
    source_id: str = ""

    def __post_init__(self):
        t, h, w = self.grid
        if min(t, h, w) < 1:
            raise ValueError(f"grid dims must be positive, got {self.grid}")
        if self.tokens.ndim != 2:
            raise ValueError(f"tokens must be [M, C], got shape {self.tokens.shape}")
        if self.tokens.shape[0] != t * h * w:
            raise ValueError(
                f"{self.tokens.shape[0]} tokens but grid {self.grid} implies {t * h * w}"
            )
        if self.raw_frame_count < 1 or self.frames_per_window < 1:
            raise ValueError("frame counts must be positive")
        if self.raw_frame_count % t != 0:
            raise ValueError(
                f"raw frame count {self.raw_frame_count} not divisible by T'={t}"
            )

    @property
    def channels(self) -> int:
        return self.tokens.shape[1]

    @property
    def frames_per_temporal_token(self) -> int:
        return self.raw_frame_count // self.grid[0]


@dataclass(frozen=True)
class ExemplarLatent:
    """One reference repetition as a fixed-size [M_e, C] token block."""

    tokens: Tensor
    origin: str = "same_video"
    interval: tuple[int, int] | None = None

    def __post_init__(self):
        if self.origin not in _ORIGINS:
            raise ValueError(f"origin must be one of {_ORIGINS}")
        if self.tokens.ndim != 2:
            raise ValueError(f"tokens must be [M_e, C], got shape {self.tokens.shape}")
        if self.origin == "learned_z0" and self.interval is not None:
            raise ValueError("the learned latent carries no source interval")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic feature sequence with planted repetitions.

    Each class label owns a smooth random motif; every occurrence resamples
    it to a per-occurrence duration (optionally with a mild monotone phase
    warp) and the per-frame signal is projected into C channels per spatial
    cell before noise is added.
    """

    count_range: tuple[int, int] = (2, 10)
    duration_range: tuple[int, int] = (32, 128)
    pause_prob: float = 0.5
    pause_range: tuple[int, int] = (8, 48)
    motif_dim: int = 6
    noise_sigma: float = 0.1
    seed: int = 0
    window_grid: tuple[int, int, int] = (4, 2, 2)
    channels: int = 32
    frames_per_window: int = 64
    max_frames: int = 2048
    n_classes: int = 5
    warp: float = 0.3

    def __post_init__(self):
        if not (0 <= self.count_range[0] <= self.count_range[1]):
            raise ValueError(f"bad count range {self.count_range}")
        if self.frames_per_window % self.window_grid[0] != 0:
            raise ValueError("window temporal size must divide frames_per_window")
        fptt = self.frames_per_window // self.window_grid[0]
        if self.duration_range[0] < fptt:
            raise ValueError(
                f"min duration {self.duration_range[0]} is under one temporal "
                f"token ({fptt} frames)"
            )
        if self.duration_range[0] > self.duration_range[1]:
            raise ValueError(f"bad duration range {self.duration_range}")
        if not (0.0 <= self.pause_prob <= 1.0):
            raise ValueError("pause_prob must be in [0, 1]")
        if self.max_frames % self.frames_per_window != 0:
            raise ValueError("max_frames must be a whole number of windows")
        if min(self.motif_dim, self.channels, self.n_classes) < 1:
            raise ValueError("motif_dim, channels, n_classes must be positive")

    @property
    def frames_per_temporal_token(self) -> int:
        return self.frames_per_window // self.window_grid[0]


def _sinusoid(positions: np.ndarray, channels: int) -> np.ndarray:
    """Standard interleaved sin/cos table: pe[p, 2i] = sin(p / 10000^(2i/C))."""
    pairs = channels // 2
    angles = positions[:, None] / (10000.0 ** (np.arange(pairs) * 2.0 / channels))
    pe = np.zeros((positions.shape[0], channels), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def add_positional_encoding(seq: FeatureSequence, mode: str = "flat") -> FeatureSequence:
    """Return a copy of ``seq`` with sinusoidal positions added to the tokens.

    ``flat`` encodes the flattened token index 0..M-1; ``factored`` splits
    the channels into three even-sized groups encoding t, h, w separately.
    Not idempotent: encoding twice adds the table twice, so callers must
    track whether a sequence is already encoded.
    """
    c = seq.channels
    if c % 2 != 0:
        raise ValueError(f"positional encoding needs an even channel count, got {c}")
    t, h, w = seq.grid
    m = t * h * w
    if mode == "flat":
        pe = _sinusoid(np.arange(m, dtype=np.float64), c)
    elif mode == "factored":
        if c < 6:
            raise ValueError("factored encoding needs at least 6 channels")
        side = (c // 6) * 2
        sizes = (c - 2 * side, side, side)
        tt, hh, ww = np.meshgrid(np.arange(t), np.arange(h), np.arange(w), indexing="ij")
        parts = [
            _sinusoid(axis.reshape(-1).astype(np.float64), size)
            for axis, size in zip((tt, hh, ww), sizes)
        ]
        pe = np.concatenate(parts, axis=1)
    else:
        raise ValueError(f"unknown positional encoding mode '{mode}'")
    return FeatureSequence(
        tokens=Tensor(seq.tokens.data + pe.astype(np.float32)),
        grid=seq.grid,
        raw_frame_count=seq.raw_frame_count,
        frames_per_window=seq.frames_per_window,
        source_id=seq.source_id,
    )


def save_features(seq: FeatureSequence, path) -> None:
    """Write ``seq`` as an ESCF v1 container (header + little-endian f32)."""
    t, h, w = seq.grid
    header = _HEADER.pack(
        ESCF_MAGIC,
        ESCF_VERSION,
        t,
        h,
        w,
        seq.channels,
        seq.raw_frame_count,
        seq.frames_per_window,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(seq.tokens.data, dtype="<f4").tobytes())


def load_features(path) -> FeatureSequence:
    """Read an ESCF v1 container back into a FeatureSequence.

    Failure modes are distinct exception types so callers can tell a foreign
    file (BadMagicError) from a newer writer (UnsupportedVersionError), an
    inconsistent header (GeometryError), or a short read (TruncatedPayloadError).
    """
    raw = Path(path).read_bytes()
    if raw[:4] != ESCF_MAGIC:
        raise BadMagicError(f"{path}: not an ESCF file")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header cut short")
    _, version, t, h, w, c, frames, fpw = _HEADER.unpack_from(raw)
    if version != ESCF_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}, expected {ESCF_VERSION}")
    if min(t, h, w, c, frames, fpw) < 1:
        raise GeometryError(f"{path}: zero dimension in header")
    if frames % t != 0:
        raise GeometryError(f"{path}: {frames} frames not divisible by T'={t}")
    expected = t * h * w * c * 4
    body = len(raw) - _HEADER.size
    if body < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {body} bytes, header implies {expected}"
        )
    if body > expected:
        raise GeometryError(f"{path}: {body - expected} trailing bytes after payload")
    tokens = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t * h * w, c)
    return FeatureSequence(
        tokens=Tensor(tokens),
        grid=(t, h, w),
        raw_frame_count=frames,
        frames_per_window=fpw,
        source_id=Path(path).stem,
    )


def _class_motif(spec: SyntheticSpec, class_label: int):
    """Smooth periodic motif for one class: a short random Fourier series."""
    rng = np.random.default_rng([spec.seed, 1000 + class_label])
    harmonics = 3
    amp = rng.standard_normal((harmonics, spec.motif_dim)) / np.sqrt(harmonics)
    phase = rng.uniform(0, 2 * np.pi, (harmonics, spec.motif_dim))

    def motif(ph: np.ndarray) -> np.ndarray:
        h = np.arange(1, harmonics + 1)[:, None]
        return np.einsum(
            "hd,phd->pd", amp, np.sin(2 * np.pi * h[None] * ph[:, None, None] + phase)
        )

    return motif


def _cell_projections(spec: SyntheticSpec, class_label: int):
    rng = np.random.default_rng([spec.seed, 2000 + class_label])
    cells = spec.window_grid[1] * spec.window_grid[2]
    proj = rng.standard_normal((cells, spec.motif_dim, spec.channels))
    proj /= np.sqrt(spec.motif_dim)
    bias = 0.5 * rng.standard_normal((cells, spec.channels))
    return proj, bias


def synth_sequence(
    spec: SyntheticSpec,
    index: int = 0,
    class_label: int | None = None,
    video_id: str | None = None,
) -> tuple[FeatureSequence, RepetitionAnnotation]:
    """Generate one synthetic video's features plus exact annotations.

    Deterministic in (spec.seed, index). ``class_label`` defaults to
    index % n_classes so round-robin generation balances classes.
    """
    if class_label is None:
        class_label = index % spec.n_classes
    rng = np.random.default_rng([spec.seed, 17, index])
    lo, hi = spec.count_range
    count = int(rng.integers(lo, hi + 1))
    durations = rng.integers(
        spec.duration_range[0], spec.duration_range[1] + 1, size=count
    )

    cursor = 0
    intervals = []
    for d in durations:
        if spec.pause_prob > 0 and rng.random() < spec.pause_prob:
            cursor += int(rng.integers(spec.pause_range[0], spec.pause_range[1] + 1))
        intervals.append((cursor, cursor + int(d)))
        cursor += int(d)
    if cursor > spec.max_frames:
        raise InfeasibleSpecError(
            f"content spans {cursor} frames, over the {spec.max_frames} cap"
        )
    fpw = spec.frames_per_window
    frames = max(fpw, ((cursor + fpw - 1) // fpw) * fpw)

    motif = _class_motif(spec, class_label)
    signal = np.zeros((frames, spec.motif_dim))
    for s, e in intervals:
        base = np.arange(e - s, dtype=np.float64) / (e - s)
        if spec.warp > 0:
            w = rng.uniform(0, spec.warp)
            base = base + w * np.sin(2 * np.pi * base) / (2 * np.pi)
        signal[s:e] = motif(base)

    fptt = spec.frames_per_temporal_token
    t_total = frames // fptt
    per_token = signal.reshape(t_total, fptt, spec.motif_dim).mean(axis=1)

    proj, bias = _cell_projections(spec, class_label)
    tokens = np.einsum("td,cde->tce", per_token, proj) + bias[None]
    if spec.noise_sigma > 0:
        tokens = tokens + rng.normal(0, spec.noise_sigma, tokens.shape)
    tokens = tokens.reshape(t_total * proj.shape[0], spec.channels)

    h, w = spec.window_grid[1], spec.window_grid[2]
    seq = FeatureSequence(
        tokens=Tensor(tokens),
        grid=(t_total, h, w),
        raw_frame_count=frames,
        frames_per_window=fpw,
        source_id=video_id if video_id is not None else f"synth{index:05d}",
    )
    ann = RepetitionAnnotation(count=count, repetitions=tuple(intervals))
    return seq, ann


def extract_exemplar(
    seq: FeatureSequence,
    interval: tuple[int, int],
    m_e: int | None = None,
    origin: str = "same_video",
) -> ExemplarLatent:
    """Cut one repetition out of ``seq`` as a fixed-size [M_e, C] latent.

    The interval's token rows are sampled uniformly by nearest index, so a
    span of exactly M_e rows is copied verbatim, a longer span is strided,
    and a shorter one repeats rows to fill the budget.
    """
    s, e = int(interval[0]), int(interval[1])
    if s >= e:
        raise ValueError(f"empty interval [{s}, {e})")
    if s < 0 or e > seq.raw_frame_count:
        raise ValueError(
            f"interval [{s}, {e}) outside [0, {seq.raw_frame_count})"
        )
    fptt = seq.frames_per_temporal_token
    hw = seq.grid[1] * seq.grid[2]
    if m_e is None:
        if seq.frames_per_window % fptt != 0:
            raise ValueError("cannot derive M_e: window not a whole number of tokens")
        m_e = (seq.frames_per_window // fptt) * hw
    a = s // fptt
    b = (e - 1) // fptt
    row0 = a * hw
    n = (b - a + 1) * hw
    idx = row0 + (np.arange(m_e) * n) // m_e
    return ExemplarLatent(
        tokens=Tensor(seq.tokens.data[idx]), origin=origin, interval=(s, e)
    )
