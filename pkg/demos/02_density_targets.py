"""
From interval annotations to density-map targets
================================================

The counting objective regresses a per-token density whose sum is the
repetition count. This walks through the kernel choices and shows that
the sum is preserved exactly, including at video edges.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import escounts.annotations as an

FPTT = 8          # raw frames per temporal token
T_TOKENS = 24     # length of the density map

ann = an.RepetitionAnnotation(
    count=4,
    repetitions=((0, 24), (30, 62), (70, 110), (150, 188)),
)
print(f"annotation: count={ann.count}, intervals={list(ann.repetitions)}")
print(f"token span of each interval (inclusive): "
      f"{[an._interval_tokens(r, FPTT) for r in ann.repetitions]}\n")

fig, axes = plt.subplots(4, 1, figsize=(7, 6), sharex=True)
for ax, (label, kw) in zip(
    axes,
    [
        ("impulses (sigma=0)", dict(sigma=0.0)),
        ("sigma=0.5", dict(sigma=0.5)),
        ("sigma=2.0 (truncated at edges, renormalized)", dict(sigma=2.0)),
        ("variable sigma (quarter of each interval)", dict(sigma=1.0, variable_sigma=True)),
    ],
):
    d = an.make_density_map(ann, T_TOKENS, FPTT, **kw)
    total = d.values.sum(dtype=np.float64)
    print(f"{label:48s} sum = {total:.6f}")
    ax.bar(np.arange(T_TOKENS), d.values, width=0.9)
    ax.set_ylabel(label, rotation=0, ha="right", fontsize=8)
axes[-1].set_xlabel("temporal token")
fig.tight_layout()
out = Path(__file__).with_name("density_targets.svg")
fig.savefig(out)
print(f"\nwrote {out}")

# ---- count-only datasets get equal-split pseudo intervals
pseudo = an.make_pseudo_labels(3, raw_frames=T_TOKENS * FPTT)
print(f"\npseudo-labels for count=3 over {T_TOKENS * FPTT} frames: "
      f"{list(pseudo.repetitions)} (is_pseudo={pseudo.is_pseudo})")
d = an.make_density_map(pseudo, T_TOKENS, FPTT, sigma=0.5)
print(f"their density still sums to {d.values.sum(dtype=np.float64):.6f}")

# ---- raw-frame to token alignment used everywhere downstream
for frame in (0, 7, 8, 191):
    print(f"frame {frame:3d} -> token {an.downsample_alignment(frame, FPTT, T_TOKENS)}")
