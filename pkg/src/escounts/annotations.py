"""Repetition annotations and density-map targets.

An annotation is a per-video repetition count plus (optionally) the list of
[start, end) intervals in raw-frame units. Count-only datasets get pseudo
intervals by uniform division. Density maps live on the downsampled temporal
axis (one bin per temporal token); each repetition contributes a discretized
Gaussian renormalized to unit mass, so the map sums to the count exactly.
That identity is load-bearing: the predicted count is the sum of the
predicted map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RepetitionAnnotation",
    "DensityMap",
    "make_pseudo_labels",
    "make_density_map",
    "downsample_alignment",
    "save_sidecar",
    "load_sidecar",
]


@dataclass(frozen=True)
class RepetitionAnnotation:
    """Count plus per-repetition [start, end) intervals in raw frames.

    ``repetitions`` may be empty while ``count`` > 0 (count-only datasets);
    use :func:`make_pseudo_labels` to materialize intervals in that case.
    """

    count: int
    repetitions: tuple[tuple[int, int], ...] = ()
    fps: float = 30.0
    is_pseudo: bool = False

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        reps = tuple((int(s), int(e)) for s, e in self.repetitions)
        object.__setattr__(self, "repetitions", reps)
        if reps and len(reps) != self.count:
            raise ValueError(
                f"{len(reps)} intervals but count={self.count}; intervals, "
                "when present, must be exhaustive"
            )
        for s, e in reps:
            if s >= e:
                raise ValueError(f"degenerate interval [{s}, {e})")
        if any(reps[i][0] > reps[i + 1][0] for i in range(len(reps) - 1)):
            raise ValueError("intervals must be sorted by start frame")


@dataclass(frozen=True)
class DensityMap:
    """Non-negative per-temporal-token signal; its sum is the count."""

    values: np.ndarray
    frames_per_temporal_token: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 1:
            raise ValueError(f"density map must be 1-D, got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("density map values must be non-negative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def count(self) -> float:
        return float(self.values.sum(dtype=np.float64))


def make_pseudo_labels(c: int, raw_frames: int, fps: float = 30.0) -> RepetitionAnnotation:
    """Fabricate intervals by dividing [0, raw_frames) into c equal parts.

    Boundary frames go to floor(i * R / c), so interval lengths differ by at
    most one frame and the intervals partition the video exactly. c=0 yields
    an empty annotation.
    """
    if c == 0:
        return RepetitionAnnotation(count=0, repetitions=(), fps=fps, is_pseudo=True)
    if c < 0:
        raise ValueError("count must be non-negative")
    if raw_frames < c:
        raise ValueError(f"cannot divide {raw_frames} frames into {c} segments")
    bounds = [(i * raw_frames) // c for i in range(c + 1)]
    reps = tuple((bounds[i], bounds[i + 1]) for i in range(c))
    return RepetitionAnnotation(count=c, repetitions=reps, fps=fps, is_pseudo=True)


def downsample_alignment(raw_frame: int, frames_per_temporal_token: int, t_tokens: int) -> int:
    """Map a raw-frame index to its temporal-token index.

    floor division, clamped to the last token for safety at the right edge.
    """
    limit = frames_per_temporal_token * t_tokens
    if raw_frame < 0 or raw_frame >= limit:
        raise ValueError(f"frame {raw_frame} outside [0, {limit})")
    return min(raw_frame // frames_per_temporal_token, t_tokens - 1)


def _interval_tokens(
    interval: tuple[int, int], frames_per_temporal_token: int
) -> tuple[int, int]:
    # inclusive token span [a, b] covered by a raw-frame interval [s, e)
    s, e = interval
    a = s // frames_per_temporal_token
    b = (e - 1) // frames_per_temporal_token
    return a, b


def make_density_map(
    ann: RepetitionAnnotation,
    t_tokens: int,
    frames_per_temporal_token: int,
    sigma: float = 0.5,
    variable_sigma: bool = False,
) -> DensityMap:
    """Render the ground-truth density map for one annotated video.

    Each repetition drops a Gaussian bump centred on the middle of its token
    span with width ``sigma`` (in temporal-token units). Kernels are
    discretized over the in-range bins and renormalized to sum to 1 exactly,
    which keeps sum(map) == count even when a bump is truncated by a video
    edge. ``sigma=0`` degenerates to a unit impulse at the nearest bin (ties
    round up). ``variable_sigma`` ignores ``sigma`` and uses one quarter of
    each interval's own token length instead.
    """
    if t_tokens < 1:
        raise ValueError("t_tokens must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if ann.count != len(ann.repetitions):
        raise ValueError(
            "annotation has no materialized intervals; build pseudo-labels first"
        )
    d = np.zeros(t_tokens, dtype=np.float64)
    bins = np.arange(t_tokens, dtype=np.float64)
    for s, e in ann.repetitions:
        a, b = _interval_tokens((s, e), frames_per_temporal_token)
        mu = 0.5 * (a + b)
        if mu < 0 or mu >= t_tokens:
            raise ValueError(f"interval [{s}, {e}) maps outside the token range")
        s_i = 0.25 * (e - s) / frames_per_temporal_token if variable_sigma else sigma
        if s_i == 0:
            d[min(int(np.floor(mu + 0.5)), t_tokens - 1)] += 1.0
            continue
        k = np.exp(-0.5 * ((bins - mu) / s_i) ** 2)
        d += k / k.sum()
    return DensityMap(
        values=d.astype(np.float32),
        frames_per_temporal_token=frames_per_temporal_token,
    )


def save_sidecar(
    path,
    annotation: RepetitionAnnotation,
    video_id: str,
    class_label: str,
) -> None:
    """Write the per-video annotation sidecar document."""
    record = {
        "video_id": video_id,
        "class_label": class_label,
        "fps": annotation.fps,
        "count": annotation.count,
        "repetitions": [[s, e] for s, e in annotation.repetitions],
    }
    with open(path, "w") as f:
        json.dump(record, f, indent=1)
        f.write("\n")


def load_sidecar(path) -> tuple[str, str, RepetitionAnnotation]:
    """Read a sidecar document, returning (video_id, class_label, annotation)."""
    with open(path) as f:
        record = json.load(f)
    ann = RepetitionAnnotation(
        count=int(record["count"]),
        repetitions=tuple((int(s), int(e)) for s, e in record["repetitions"]),
        fps=float(record.get("fps", 30.0)),
    )
    return str(record["video_id"]), str(record["class_label"]), ann
