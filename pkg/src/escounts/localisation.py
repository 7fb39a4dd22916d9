"""Repetition localisation: do density peaks land inside annotated intervals?

Peaks are strict local maxima of the predicted map kept when their height
above the map minimum reaches r = theta * (max - min). Matching against
annotated intervals is set-based: an interval with at least one peak is a
true positive (extra peaks in the same interval do not double-count), a
peak in no interval is a false positive, an interval with no peak is a
false negative, and the Jaccard index is TP / (TP + FP + FN).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import RepetitionAnnotation, downsample_alignment

__all__ = [
    "PeakSet",
    "detect_peaks",
    "jaccard",
    "localisation_report",
    "DEFAULT_THETA_GRID",
]

DEFAULT_THETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class PeakSet:
    """Sorted peak token indices plus the threshold that produced them."""

    indices: tuple[int, ...]
    r: float
    theta: float

    def __post_init__(self):
        if any(self.indices[i] >= self.indices[i + 1] for i in range(len(self.indices) - 1)):
            raise ValueError("peak indices must be strictly increasing")


def detect_peaks(values: np.ndarray, theta: float) -> PeakSet:
    """Thresholded local maxima of a density map.

    A run of equal values is a single candidate at its leftmost index and
    counts as a maximum when every existing neighbor run is strictly lower
    (so a boundary run needs only its one neighbor below it, and a constant
    map has no peaks at all). Candidates with value - min < theta * (max -
    min) are discarded.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("density map must be a non-empty vector")
    if not (0.0 <= theta <= 1.0):
        raise ValueError("theta must lie in [0, 1]")
    lo, hi = float(v.min()), float(v.max())
    r = theta * (hi - lo)

    # compress plateaus to (start index, value) runs
    starts = [0]
    for i in range(1, v.size):
        if v[i] != v[starts[-1]]:
            starts.append(i)
    runs = [(s, v[s]) for s in starts]

    peaks = []
    for j, (s, val) in enumerate(runs):
        if len(runs) == 1:
            break  # constant map: no neighbors, no peaks
        left_ok = j == 0 or runs[j - 1][1] < val
        right_ok = j == len(runs) - 1 or runs[j + 1][1] < val
        if left_ok and right_ok and (val - lo) >= r:
            peaks.append(s)
    return PeakSet(indices=tuple(peaks), r=r, theta=theta)


def jaccard(
    peaks: PeakSet,
    ann: RepetitionAnnotation,
    frames_per_temporal_token: int,
    t_tokens: int,
) -> float:
    """Set overlap between detected peaks and annotated repetitions.

    Intervals are mapped to closed token spans [a, b]; a peak exactly on a
    span edge counts as inside. Returns 1.0 when there are neither peaks
    nor repetitions (a correctly predicted empty video).
    """
    spans = []
    for s, e in ann.repetitions:
        a = downsample_alignment(s, frames_per_temporal_token, t_tokens)
        b = downsample_alignment(e - 1, frames_per_temporal_token, t_tokens)
        spans.append((a, b))
    if not spans and not peaks.indices:
        return 1.0
    tp = sum(1 for a, b in spans if any(a <= p <= b for p in peaks.indices))
    fp = sum(1 for p in peaks.indices if not any(a <= p <= b for a, b in spans))
    fn = len(spans) - tp
    return tp / (tp + fp + fn)


def localisation_report(
    records: list[tuple[np.ndarray, RepetitionAnnotation, int]],
    thetas: tuple[float, ...] = DEFAULT_THETA_GRID,
) -> tuple[dict[float, float], float]:
    """Mean Jaccard per threshold plus the unweighted threshold average.

    Each record is (predicted density values, annotation,
    frames_per_temporal_token).
    """
    if not records:
        raise ValueError("no records to score")
    per_theta: dict[float, float] = {}
    for theta in thetas:
        scores = []
        for values, ann, fptt in records:
            pk = detect_peaks(values, theta)
            scores.append(jaccard(pk, ann, fptt, len(values)))
        per_theta[theta] = float(np.mean(scores))
    avg = float(np.mean(list(per_theta.values())))
    return per_theta, avg
