"""Prediction with time-shift ensembling and split evaluation.

A single forward pass is sensitive to where the first window happens to
start, so inference runs K passes with staggered start offsets, realigns
each predicted density map to the global bin axis, and averages them where
they overlap. The predicted count is the sum of the averaged map.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .annotations import DensityMap
from .decoder import DecoderConfig, forward
from .exemplars import CorpusIndex, exemplars_for_inference
from .features import ExemplarLatent, FeatureSequence, add_positional_encoding
from .numerics import Tensor

__all__ = [
    "CountPrediction",
    "predict",
    "evaluate_split",
    "save_predictions",
    "load_predictions",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountPrediction:
    """Ensembled density, its sum (the raw count), and the rounded count."""

    density: DensityMap
    raw_count: float
    rounded_count: int
    per_shift: tuple[np.ndarray, ...] = ()
    video_id: str = ""

    def __post_init__(self):
        if self.raw_count < 0:
            raise ValueError("raw count must be non-negative")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _drop_leading_tokens(seq: FeatureSequence, shift: int) -> FeatureSequence:
    if shift == 0:
        return seq
    hw = seq.grid[1] * seq.grid[2]
    return FeatureSequence(
        tokens=Tensor(seq.tokens.data[shift * hw :]),
        grid=(seq.grid[0] - shift, seq.grid[1], seq.grid[2]),
        raw_frame_count=seq.raw_frame_count - shift * seq.frames_per_temporal_token,
        frames_per_window=seq.frames_per_window,
        source_id=seq.source_id,
    )


def predict(
    params: dict[str, Tensor],
    cfg: DecoderConfig,
    seq: FeatureSequence,
    exemplars: tuple[ExemplarLatent, ...] = (),
    k_shifts: int = 4,
) -> CountPrediction:
    """Ensemble K start offsets into one density map and count.

    Shift k starts at offset k * frames_per_window / K, quantized to whole
    temporal tokens. Each shifted map lands on global bins [shift, T'), and
    bins near the start are averaged over however many shifts cover them.
    Sequences too short to survive the largest offset fall back to K=1 with
    a warning. ``seq`` is the raw (unencoded) sequence; positional encoding
    is applied per shifted copy.
    """
    if k_shifts < 1:
        raise ValueError("k_shifts must be >= 1")
    fptt = seq.frames_per_temporal_token
    t_total = seq.grid[0]
    tokens_per_window = max(1, seq.frames_per_window // fptt)
    shifts = sorted({int(k * seq.frames_per_window / k_shifts) // fptt for k in range(k_shifts)})
    if t_total - shifts[-1] < tokens_per_window and len(shifts) > 1:
        log.warning(
            "%s: only %d temporal tokens, too short for %d-shift ensembling; using K=1",
            seq.source_id,
            t_total,
            k_shifts,
        )
        shifts = [0]

    acc = np.zeros(t_total, dtype=np.float64)
    cover = np.zeros(t_total, dtype=np.int64)
    per_shift = []
    for s in shifts:
        shifted = _drop_leading_tokens(seq, s)
        encoded = add_positional_encoding(shifted, mode=cfg.pe_mode)
        d = forward(params, cfg, encoded, exemplars).data
        acc[s:] += d
        cover[s:] += 1
        aligned = np.zeros(t_total, dtype=np.float32)
        aligned[s:] = d
        per_shift.append(aligned)
    ensembled = (acc / cover).astype(np.float32)
    raw = float(ensembled.sum(dtype=np.float64))
    return CountPrediction(
        density=DensityMap(values=ensembled, frames_per_temporal_token=fptt),
        raw_count=raw,
        rounded_count=_round_half_up(raw),
        per_shift=tuple(per_shift),
        video_id=seq.source_id,
    )


def evaluate_split(
    index: CorpusIndex,
    params: dict[str, Tensor],
    cfg: DecoderConfig,
    k_shifts: int = 4,
    shots: int = 0,
    shot_source: str = "test_video",
    donor_index: CorpusIndex | None = None,
    threads: int = 1,
) -> list[tuple[int, CountPrediction]]:
    """Predict every video in ``index``; returns (true count, prediction) pairs.

    ``shots=0`` is the zero-shot default. ``shots>0`` draws reference
    repetitions per video, from the video itself or from same-class donors
    in ``donor_index`` (typically the train split). Videos are processed in
    manifest order regardless of thread count, so reports are deterministic.
    """
    if len(index) == 0:
        raise ValueError("empty evaluation corpus")

    def run(item):
        ex = exemplars_for_inference(
            shots,
            shot_source,
            item,
            corpus_index=donor_index if shot_source == "train_class_donor" else index,
            m_e=cfg.m_e,
        )
        pred = predict(params, cfg, item.sequence, ex, k_shifts=k_shifts)
        return item.annotation.count, pred

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, index.items))
    return [run(item) for item in index.items]


def save_predictions(path, results: list[tuple[int, CountPrediction]]) -> None:
    """Dump one record per video for the localisation and report tools."""
    with open(path, "w") as f:
        for true_count, pred in results:
            rec = {
                "video_id": pred.video_id,
                "true_count": true_count,
                "raw_count": pred.raw_count,
                "rounded_count": pred.rounded_count,
                "density": [float(x) for x in pred.density.values],
                "frames_per_temporal_token": pred.density.frames_per_temporal_token,
            }
            f.write(json.dumps(rec) + "\n")


def load_predictions(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
