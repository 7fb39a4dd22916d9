"""
Exemplar sampling policies
==========================

During training the model sometimes gets reference repetitions from the
query video, sometimes from another video of the same class, and sometimes
none at all (it then falls back to a learned latent). This script tallies
what the sampling policy actually produces.
"""

import collections

import numpy as np

import escounts.exemplars as xm
import escounts.features as ft

# ---- a small two-class corpus
spec = ft.SyntheticSpec(seed=3, count_range=(2, 5), n_classes=2)
items = []
for i in range(10):
    seq, ann = ft.synth_sequence(spec, index=i, video_id=f"v{i:02d}")
    items.append(xm.CorpusItem(f"v{i:02d}", f"class{i % 2:02d}", seq, ann))
corpus = xm.CorpusIndex(items)
query = corpus.items[0]
print(f"corpus: {len(corpus)} videos, classes {corpus.classes()}")
print(f"query {query.video_id} (class {query.class_label}) has "
      f"{len(corpus.donors(query.class_label, query.video_id))} potential donors\n")

# ---- tally instance shapes under a few policies
for policy in (
    xm.ExemplarPolicy(shot_set=(0, 1, 2), p_cross_video=0.4),
    xm.ExemplarPolicy(shot_set=(0, 0, 1), p_cross_video=0.4),
    xm.ExemplarPolicy(shot_set=(1,), p_cross_video=1.0),
    xm.ExemplarPolicy(shot_set=(2,), p_cross_video=0.4, per_instance_cross=True),
):
    rng = np.random.default_rng(0)
    shots = collections.Counter()
    origins = collections.Counter()
    mixed = 0
    for _ in range(2000):
        inst = xm.sample_exemplars(policy, query, corpus, m_e=16, rng=rng)
        shots[len(inst.exemplars)] += 1
        origins.update(e.origin for e in inst.exemplars)
        if len({e.origin for e in inst.exemplars}) > 1:
            mixed += 1
    total = sum(origins.values()) or 1
    cross = origins["other_video"] / total
    print(f"shot_set={policy.shot_set} p_cross={policy.p_cross_video} "
          f"per_instance={policy.per_instance_cross}")
    print(f"  shots drawn: {dict(sorted(shots.items()))}")
    print(f"  cross-video fraction of exemplars: {cross:.2f}, "
          f"mixed-origin instances: {mixed}\n")

# ---- deterministic selection at evaluation time
ex_same = xm.exemplars_for_inference(2, "test_video", query, m_e=16)
print(f"eval, 2-shot from the test video itself: intervals "
      f"{[e.interval for e in ex_same]}, origins {[e.origin for e in ex_same]}")
ex_donor = xm.exemplars_for_inference(2, "train_class_donor", query, corpus_index=corpus, m_e=16)
print(f"eval, 2-shot from same-class donors:     intervals "
      f"{[e.interval for e in ex_donor]}, origins {[e.origin for e in ex_donor]}")
print(f"0-shot returns an empty tuple: {xm.exemplars_for_inference(0, 'test_video', query)}")
