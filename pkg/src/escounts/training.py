"""Training loop: density regression objective, optimizer, augmentation.

The objective is MSE between predicted and target density maps plus MAE
between the target count and the predicted map's sum (normalized by the
count). Updates use adaptive moments with decoupled weight decay, gradients
accumulated over groups of single-video steps, and a stepwise-decayed
learning rate. Start-time augmentation drops a whole number of leading
temporal tokens and shifts the annotations to match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .annotations import RepetitionAnnotation, make_density_map
from .decoder import DecoderConfig, forward
from .exemplars import CorpusIndex, CorpusItem, ExemplarPolicy, sample_exemplars
from .features import FeatureSequence, add_positional_encoding
from .numerics import GradTape, Tensor

__all__ = [
    "TrainConfig",
    "LossReport",
    "AdamW",
    "loss",
    "lr_for_epoch",
    "time_shift_train",
    "train_epoch",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 5e-5
    lr_decay: float = 0.8
    decay_every: int = 60
    weight_decay: float = 5e-2
    accum_steps: int = 8
    batch: int = 1
    shot_set: tuple[int, ...] = (0, 1, 2)
    p_cross_video: float = 0.4
    per_instance_cross: bool = False
    sigma: float = 0.5
    variable_sigma: bool = False
    time_shift: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.decay_every, self.accum_steps, self.batch) < 1:
            raise ValueError("epochs, decay_every, accum_steps, batch must be positive")
        if self.lr <= 0 or not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr must be positive and decay in (0, 1]")
        if self.weight_decay < 0 or self.sigma < 0:
            raise ValueError("weight_decay and sigma must be non-negative")


@dataclass(frozen=True)
class LossReport:
    """One step's (or one epoch's mean) objective breakdown."""

    mse: float
    mae: float
    total: float
    n: int = 1

    def __post_init__(self):
        if abs(self.total - (self.mse + self.mae)) > 1e-6 * max(1.0, abs(self.total)):
            raise ValueError("total must equal mse + mae")

    @staticmethod
    def combine(reports: list["LossReport"]) -> "LossReport":
        n = sum(r.n for r in reports)
        mse = sum(r.mse * r.n for r in reports) / n
        mae = sum(r.mae * r.n for r in reports) / n
        return LossReport(mse=mse, mae=mae, total=mse + mae, n=n)


def loss(d: np.ndarray, d_pred: Tensor, c: float) -> tuple[Tensor, LossReport]:
    """Objective for one video; returns (differentiable total, report).

    MSE is the squared bin error averaged over the T' bins; MAE compares
    the predicted count (sum of the predicted map) against c, normalized by
    max(c, 1) so zero-count videos stay finite.
    """
    d = np.asarray(d, dtype=np.float32)
    if d.shape != d_pred.shape:
        raise ValueError(f"density length mismatch: {d.shape} vs {d_pred.shape}")
    if c < 0:
        raise ValueError("count must be non-negative")
    diff = nm.sub(d_pred, nm.tensor(d))
    mse = nm.tmean(nm.mul(diff, diff))
    mae = nm.mul(nm.tabs(nm.sub(nm.tsum(d_pred), float(c))), 1.0 / max(float(c), 1.0))
    total = nm.add(mse, mae)
    return total, LossReport(mse=mse.item(), mae=mae.item(), total=total.item())


class AdamW:
    """Adaptive moments with decoupled weight decay over a named param dict.

    Moments live as plain arrays keyed like the params; ``state_blobs`` /
    ``load_state_blobs`` round-trip them through checkpoints.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 5e-2,
    ):
        self.params = params
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float, grad_scale: float = 1.0) -> None:
        """One update from the accumulated gradients, scaled by ``grad_scale``."""
        b1, b2 = self.betas
        self.step_count += 1
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for k, p in self.params.items():
            g = p.grad * np.float32(grad_scale)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            data = p.data * (1.0 - lr * self.weight_decay) - lr * update
            self.params[k] = Tensor(data, requires_grad=True)

    def state_blobs(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.step_count], dtype=np.float32)}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state_blobs(self, blobs: dict[str, np.ndarray]) -> None:
        self.step_count = int(blobs["adam.step"][0])
        for k in self.params:
            self.m[k] = np.array(blobs[f"adam.m.{k}"], dtype=np.float32)
            self.v[k] = np.array(blobs[f"adam.v.{k}"], dtype=np.float32)


def lr_for_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Stepwise schedule: lr * decay^(epoch // decay_every)."""
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


def time_shift_train(
    seq: FeatureSequence,
    ann: RepetitionAnnotation,
    rng: np.random.Generator,
) -> tuple[FeatureSequence, RepetitionAnnotation]:
    """Start-time augmentation: drop a random whole-token prefix.

    The offset is drawn uniformly over [0, frames_per_window) and quantized
    to whole temporal tokens so features and labels stay aligned.
    Repetitions cut by the new start are clipped (their visible part keeps
    full unit mass downstream); fully hidden ones are dropped and the count
    decremented.
    """
    fptt = seq.frames_per_temporal_token
    tokens_per_window = max(1, seq.frames_per_window // fptt)
    t_total = seq.grid[0]
    shift = int(rng.integers(0, min(tokens_per_window, t_total)))
    if shift == 0:
        return seq, ann
    eps = shift * fptt
    hw = seq.grid[1] * seq.grid[2]
    shifted = FeatureSequence(
        tokens=Tensor(seq.tokens.data[shift * hw :]),
        grid=(t_total - shift, seq.grid[1], seq.grid[2]),
        raw_frame_count=seq.raw_frame_count - eps,
        frames_per_window=seq.frames_per_window,
        source_id=seq.source_id,
    )
    kept = []
    for s, e in ann.repetitions:
        if e - eps <= 0:
            continue
        kept.append((max(0, s - eps), e - eps))
    new_ann = RepetitionAnnotation(
        count=len(kept), repetitions=tuple(kept), fps=ann.fps, is_pseudo=ann.is_pseudo
    )
    return shifted, new_ann


def _instance_loss(
    item: CorpusItem,
    params: dict[str, Tensor],
    dcfg: DecoderConfig,
    tcfg: TrainConfig,
    index: CorpusIndex,
    policy: ExemplarPolicy,
    rng: np.random.Generator,
) -> tuple[Tensor, LossReport]:
    seq, ann = item.sequence, item.annotation
    if tcfg.time_shift:
        seq, ann = time_shift_train(seq, ann, rng)
    shifted_item = CorpusItem(
        video_id=item.video_id,
        class_label=item.class_label,
        sequence=seq,
        annotation=ann,
    )
    instance = sample_exemplars(policy, shifted_item, index, m_e=dcfg.m_e, rng=rng)
    target = make_density_map(
        ann,
        seq.grid[0],
        seq.frames_per_temporal_token,
        sigma=tcfg.sigma,
        variable_sigma=tcfg.variable_sigma,
    )
    encoded = add_positional_encoding(seq, mode=dcfg.pe_mode)
    d_pred = forward(params, dcfg, encoded, instance.exemplars)
    return loss(target.values, d_pred, ann.count)


def train_epoch(
    index: CorpusIndex,
    params: dict[str, Tensor],
    dcfg: DecoderConfig,
    tcfg: TrainConfig,
    opt: AdamW,
    epoch: int,
    log_file=None,
) -> LossReport:
    """One pass over the corpus; mutates ``params`` through ``opt``.

    Deterministic in (tcfg.seed, epoch), so resuming at epoch k replays the
    same instance order and augmentations that a straight run would see.
    Raises with the offending video id if any step produces non-finite
    values.
    """
    rng = np.random.default_rng([tcfg.seed, 100 + epoch])
    policy = ExemplarPolicy(
        shot_set=tcfg.shot_set,
        p_cross_video=tcfg.p_cross_video,
        per_instance_cross=tcfg.per_instance_cross,
    )
    lr = lr_for_epoch(tcfg, epoch)
    order = rng.permutation(len(index.items))
    reports = []
    opt.zero_grad()
    group = 0
    for pos, idx in enumerate(order):
        item = index.items[int(idx)]
        try:
            with GradTape() as tape:
                total, report = _instance_loss(
                    item, params, dcfg, tcfg, index, policy, rng
                )
                tape.backward(total)
        except nm.NonFiniteError as exc:
            raise RuntimeError(
                f"non-finite training step on video {item.video_id}"
            ) from exc
        reports.append(report)
        group += 1
        if group == tcfg.accum_steps or pos == len(order) - 1:
            opt.step(lr, grad_scale=1.0 / group)
            opt.zero_grad()
            group = 0
        if log_file is not None:
            rec = {
                "epoch": epoch,
                "step": pos,
                "mse": report.mse,
                "mae": report.mae,
                "lr": lr,
            }
            log_file.write(json.dumps(rec) + "\n")
    return LossReport.combine(reports)
