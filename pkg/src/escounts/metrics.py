"""Counting metrics: MAE, RMSE, off-by-one and exact-match rates, groups.

MAE here is count-normalized (|c - c_hat| / c per video, averaged), so a
miss of 1 on a 20-rep video weighs less than on a 2-rep video. OBO and the
wider Off-By-N curve use the raw real-valued prediction; the exact-match
rate (OBZ, equal to Off-By-0) compares the rounded prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricReport",
    "compute_metrics",
    "off_by_n",
    "grouped_report",
    "DURATION_BINS_SECONDS",
    "REP_LENGTH_BINS_SECONDS",
    "GROUP_LABELS",
]

GROUP_LABELS = ("XS", "S", "M", "L", "XL")

# video-duration and repetition-length presets, seconds, [lo, hi) per label
DURATION_BINS_SECONDS = {
    "XS": (8.0, 11.0),
    "S": (11.0, 26.0),
    "M": (26.0, 33.9),
    "L": (33.9, 45.9),
    "XL": (45.9, 68.0),
}
REP_LENGTH_BINS_SECONDS = {
    "XS": (0.0, 0.96),
    "S": (0.96, 1.53),
    "M": (1.53, 2.29),
    "L": (2.29, 3.09),
    "XL": (3.09, float("inf")),
}


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    obo: float
    obz: float
    n: int
    obn: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.obo <= 1.0 and 0.0 <= self.obz <= 1.0):
            raise ValueError("rates must lie in [0, 1]")
        if self.obz > self.obo + 1e-12:
            raise ValueError("exact-match rate cannot exceed off-by-one rate")

    def as_dict(self) -> dict:
        d = {"mae": self.mae, "rmse": self.rmse, "obo": self.obo, "obz": self.obz, "n": self.n}
        if self.obn:
            d["obn"] = {str(k): v for k, v in self.obn.items()}
        return d


def compute_metrics(pairs: list[tuple[float, float]]) -> MetricReport:
    """Aggregate (true count, raw predicted count) pairs.

    MAE divides each absolute error by max(c, 1) so zero-count videos are
    well defined; RMSE and OBO use the raw prediction, the exact-match rate
    uses the prediction rounded half-up.
    """
    if not pairs:
        raise ValueError("no prediction pairs")
    c = np.array([p[0] for p in pairs], dtype=np.float64)
    ch = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.any(c < 0):
        raise ValueError("true counts must be non-negative")
    err = np.abs(c - ch)
    mae = float(np.mean(err / np.maximum(c, 1.0)))
    rmse = float(np.sqrt(np.mean((c - ch) ** 2)))
    obo = float(np.mean(err <= 1.0))
    obz = float(np.mean(_round_half_up(ch) == c))
    return MetricReport(mae=mae, rmse=rmse, obo=obo, obz=obz, n=len(pairs))


def off_by_n(pairs: list[tuple[float, float]], n_max: int) -> np.ndarray:
    """Accuracy at tolerance N for N = 0..n_max.

    N=0 is the exact-match rate on the rounded prediction; N >= 1 counts
    raw errors within N, so the curve meets OBO at N=1 and is monotone.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    c = np.array([p[0] for p in pairs], dtype=np.float64)
    ch = np.array([p[1] for p in pairs], dtype=np.float64)
    curve = np.empty(n_max + 1, dtype=np.float64)
    curve[0] = np.mean(_round_half_up(ch) == c)
    for n in range(1, n_max + 1):
        curve[n] = np.mean(np.abs(c - ch) <= n)
    return curve


def grouped_report(
    pairs: list[tuple[float, float]],
    values: list[float],
    bins,
    labels: tuple[str, ...] | None = None,
) -> dict[str, MetricReport]:
    """Per-group metrics, grouping videos by an auxiliary value.

    ``bins`` is either an int (that many equal-population groups, split by
    sorted value) or a mapping label -> [lo, hi) boundaries; an item
    falling outside every explicit bin is an error. Five equal-population
    groups default to the XS..XL labels.
    """
    if len(pairs) != len(values):
        raise ValueError("one grouping value per pair required")
    out: dict[str, MetricReport] = {}
    if isinstance(bins, int):
        if bins < 1 or bins > len(pairs):
            raise ValueError(f"cannot split {len(pairs)} items into {bins} groups")
        if labels is None:
            labels = GROUP_LABELS if bins == 5 else tuple(f"G{i + 1}" for i in range(bins))
        order = np.argsort(np.asarray(values), kind="stable")
        for label, chunk in zip(labels, np.array_split(order, bins)):
            out[label] = compute_metrics([pairs[i] for i in chunk])
        return out
    for label, (lo, hi) in bins.items():
        members = [p for p, v in zip(pairs, values) if lo <= v < hi]
        if members:
            out[label] = compute_metrics(members)
    assigned = sum(r.n for r in out.values())
    if assigned != len(pairs):
        stray = [v for v in values if not any(lo <= v < hi for lo, hi in bins.values())]
        raise ValueError(f"{len(stray)} items fall outside all bins, e.g. {stray[:3]}")
    return out
