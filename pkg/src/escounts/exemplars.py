"""Exemplar selection for training and inference.

Training draws |S| from a shot set (default {0, 1, 2}); |S|=0 marks the
instance as zero-shot, to be served by the learned latent downstream. Each
sampled exemplar comes from a different video of the same class with
probability p, otherwise from the query video itself, and the repetition is
chosen uniformly among the source's annotated intervals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .annotations import RepetitionAnnotation, load_sidecar
from .features import ExemplarLatent, FeatureSequence, extract_exemplar, load_features

__all__ = [
    "ExemplarPolicy",
    "TrainingInstance",
    "CorpusItem",
    "CorpusIndex",
    "load_corpus",
    "sample_exemplars",
    "exemplars_for_inference",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExemplarPolicy:
    """How many exemplars to draw and where from.

    ``per_instance_cross=False`` tosses the cross-video coin independently
    per exemplar; True shares one toss per instance.
    """

    shot_set: tuple[int, ...] = (0, 1, 2)
    p_cross_video: float = 0.4
    seed: int = 0
    per_instance_cross: bool = False

    def __post_init__(self):
        if not self.shot_set or min(self.shot_set) < 0:
            raise ValueError(f"bad shot set {self.shot_set}")
        if not (0.0 <= self.p_cross_video <= 1.0):
            raise ValueError("p_cross_video must be in [0, 1]")


@dataclass(frozen=True)
class CorpusItem:
    """One video: features, annotation, and its class label."""

    video_id: str
    class_label: str
    sequence: FeatureSequence
    annotation: RepetitionAnnotation


class CorpusIndex:
    """Immutable class-label -> videos map used for donor lookup."""

    def __init__(self, items: list[CorpusItem]):
        self.items = tuple(items)
        by_class: dict[str, list[CorpusItem]] = {}
        for it in self.items:
            by_class.setdefault(it.class_label, []).append(it)
        self._by_class = {k: tuple(v) for k, v in by_class.items()}

    def __len__(self) -> int:
        return len(self.items)

    def classes(self) -> tuple[str, ...]:
        return tuple(self._by_class)

    def donors(self, class_label: str, exclude_video: str) -> tuple[CorpusItem, ...]:
        """Same-class videos with annotated repetitions, minus the query."""
        return tuple(
            it
            for it in self._by_class.get(class_label, ())
            if it.video_id != exclude_video and it.annotation.repetitions
        )


def load_corpus(corpus_dir, manifest_name: str) -> CorpusIndex:
    """Read every (ESCF, sidecar) pair listed in a manifest file."""
    from pathlib import Path

    root = Path(corpus_dir)
    manifest = root / manifest_name
    items = []
    for line in manifest.read_text().splitlines():
        name = line.strip()
        if not name:
            continue
        seq = load_features(root / name)
        video_id, class_label, ann = load_sidecar((root / name).with_suffix(".json"))
        items.append(
            CorpusItem(
                video_id=video_id,
                class_label=class_label,
                sequence=seq,
                annotation=ann,
            )
        )
    if not items:
        raise ValueError(f"manifest {manifest} lists no videos")
    return CorpusIndex(items)


@dataclass(frozen=True)
class TrainingInstance:
    """Query video paired with its sampled exemplar set."""

    query: CorpusItem
    exemplars: tuple[ExemplarLatent, ...] = ()
    uses_z0: bool = True

    def __post_init__(self):
        if self.uses_z0 != (len(self.exemplars) == 0):
            raise ValueError("uses_z0 must mirror an empty exemplar list")


def _pick_repetition(item: CorpusItem, rng: np.random.Generator) -> tuple[int, int]:
    reps = item.annotation.repetitions
    return reps[int(rng.integers(len(reps)))]


def sample_exemplars(
    policy: ExemplarPolicy,
    query: CorpusItem,
    corpus_index: CorpusIndex,
    m_e: int | None = None,
    rng: np.random.Generator | None = None,
) -> TrainingInstance:
    """Draw one training instance for ``query`` under ``policy``.

    Pass a shared ``rng`` to draw a stream of instances; the fallback
    constructs a fresh generator from the policy seed, which makes repeated
    calls identical.
    """
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    shots = int(policy.shot_set[int(rng.integers(len(policy.shot_set)))])
    if shots == 0:
        return TrainingInstance(query=query, exemplars=(), uses_z0=True)

    donors = corpus_index.donors(query.class_label, exclude_video=query.video_id)
    has_own = bool(query.annotation.repetitions)
    if not has_own and not donors:
        raise ValueError(
            f"video {query.video_id} has no annotated repetitions and class "
            f"{query.class_label} has no donors"
        )
    shared_cross = rng.random() < policy.p_cross_video if policy.per_instance_cross else None

    chosen = []
    for _ in range(shots):
        cross = (
            shared_cross
            if shared_cross is not None
            else rng.random() < policy.p_cross_video
        )
        if cross and not donors:
            log.warning(
                "no same-class donor for %s; falling back to same-video", query.video_id
            )
            cross = False
        if not cross and not has_own:
            cross = True
        if cross:
            donor = donors[int(rng.integers(len(donors)))]
            interval = _pick_repetition(donor, rng)
            chosen.append(
                extract_exemplar(donor.sequence, interval, m_e=m_e, origin="other_video")
            )
        else:
            interval = _pick_repetition(query, rng)
            chosen.append(
                extract_exemplar(query.sequence, interval, m_e=m_e, origin="same_video")
            )
    return TrainingInstance(query=query, exemplars=tuple(chosen), uses_z0=False)


def exemplars_for_inference(
    k: int,
    source: str,
    query: CorpusItem,
    corpus_index: CorpusIndex | None = None,
    m_e: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[ExemplarLatent, ...]:
    """Select ``k`` reference repetitions for evaluation.

    ``source='test_video'`` takes k distinct annotated repetitions from the
    query itself (the first k in order unless an rng is given);
    ``source='train_class_donor'`` draws from same-class videos in
    ``corpus_index``. k=0 returns an empty tuple, the zero-shot default.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return ()
    if source == "test_video":
        reps = query.annotation.repetitions
        if len(reps) < k:
            raise ValueError(
                f"{query.video_id} has {len(reps)} annotated repetitions, need {k}"
            )
        if rng is None:
            picked = reps[:k]
        else:
            idx = sorted(rng.choice(len(reps), size=k, replace=False))
            picked = tuple(reps[i] for i in idx)
        return tuple(
            extract_exemplar(query.sequence, iv, m_e=m_e, origin="same_video")
            for iv in picked
        )
    if source == "train_class_donor":
        if corpus_index is None:
            raise ValueError("donor mode needs a corpus index")
        donors = corpus_index.donors(query.class_label, exclude_video=query.video_id)
        if not donors:
            raise ValueError(f"no donors for class {query.class_label}")
        if rng is None:
            rng = np.random.default_rng(0)
        out = []
        for _ in range(k):
            donor = donors[int(rng.integers(len(donors)))]
            out.append(
                extract_exemplar(
                    donor.sequence,
                    _pick_repetition(donor, rng),
                    m_e=m_e,
                    origin="other_video",
                )
            )
        return tuple(out)
    raise ValueError(f"unknown exemplar source '{source}'")
