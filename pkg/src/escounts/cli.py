"""Command line front end for the counting pipeline.

Subcommands cover the whole loop: corpus synthesis, training, evaluation,
single-file inference, peak localisation, self-benchmarking, and report
rendering. Settings resolve in layers: CLI flag > config file (--config,
JSON keyed by flag name with underscores) > preset > built-in default.
The environment variable ESCOUNTS_SEED, when set, overrides the seed from
every other layer.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import annotations as an
from . import decoder as dc
from . import exemplars as xm
from . import features as ft
from . import inference as inf
from . import localisation as lc
from . import metrics as mt
from . import training as tr

# geometry bundles; any individual flag overrides its preset entry
PRESETS = {
    "desk": dict(
        channels=32,
        heads=4,
        window=(2, 2, 2),
        window_grid=(4, 2, 2),
        m_e=16,
        frames_per_window=64,
    ),
    "full": dict(
        channels=512,
        heads=8,
        window=(4, 7, 7),
        window_grid=(8, 14, 14),
        m_e=1568,
        frames_per_window=64,
    ),
}

_EPILOG = """\
settings resolve as: CLI flag > --config JSON > --preset bundle > default.
ESCOUNTS_SEED overrides --seed everywhere. Ablation knobs and where they
live: --sigma --p-cross --shot-set --l-ca --l-wsa --window (train, bench),
--shots --k-shifts (eval, infer). The frame sampling rate is a property of
feature extraction; it is fixed in the feature file header, not here.
"""


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(p) for p in str(text).replace(",", " ").split())


def _floats2(text) -> tuple[float, float]:
    if isinstance(text, (tuple, list)):
        lo, hi = text
    else:
        lo, hi = str(text).replace(",", " ").split()
    return float(lo), float(hi)


class Settings:
    """Layered lookup over parsed args, config file, and preset."""

    def __init__(self, args: argparse.Namespace):
        self.cli = {k: v for k, v in vars(args).items() if v is not None}
        self.file: dict = {}
        path = self.cli.get("config")
        if path:
            with open(path) as f:
                self.file = json.load(f)
        name = self.cli.get("preset") or self.file.get("preset") or "desk"
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}, choose from {sorted(PRESETS)}")
        self.preset = PRESETS[name]

    def get(self, key: str, default=None):
        for layer in (self.cli, self.file, self.preset):
            if key in layer:
                return layer[key]
        return default

    def seed(self, default: int = 0) -> int:
        env = os.environ.get("ESCOUNTS_SEED")
        if env is not None:
            return int(env)
        return int(self.get("seed", default))


def decoder_config(s: Settings) -> dc.DecoderConfig:
    return dc.DecoderConfig(
        l_ca=int(s.get("l_ca", 2)),
        l_wsa=int(s.get("l_wsa", 3)),
        channels=int(s.get("channels")),
        heads=int(s.get("heads")),
        window=tuple(_ints(s.get("window"))),
        window_grid=tuple(_ints(s.get("window_grid"))),
        m_e=int(s.get("m_e")),
        mlp_ratio=int(s.get("mlp_ratio", 4)),
        head_agg=s.get("head_agg", "sum"),
        head_softplus=not bool(s.get("head_linear", False)),
        pe_mode=s.get("pe_mode", "flat"),
    )


def train_config(s: Settings) -> tr.TrainConfig:
    return tr.TrainConfig(
        epochs=int(s.get("epochs", 300)),
        lr=float(s.get("lr", 5e-5)),
        lr_decay=float(s.get("lr_decay", 0.8)),
        decay_every=int(s.get("decay_every", 60)),
        weight_decay=float(s.get("weight_decay", 5e-2)),
        accum_steps=int(s.get("accum_steps", 8)),
        shot_set=_ints(s.get("shot_set", (0, 1, 2))),
        p_cross_video=float(s.get("p_cross", 0.4)),
        per_instance_cross=bool(s.get("per_instance_cross", False)),
        sigma=float(s.get("sigma", 0.5)),
        variable_sigma=bool(s.get("variable_sigma", False)),
        time_shift=not bool(s.get("no_time_shift", False)),
        seed=s.seed(),
    )


def synth_spec(s: Settings) -> ft.SyntheticSpec:
    return ft.SyntheticSpec(
        count_range=tuple(_ints(s.get("count_range", (2, 10)))),
        duration_range=tuple(_ints(s.get("duration_range", (32, 128)))),
        pause_prob=float(s.get("pause_prob", 0.5)),
        pause_range=tuple(_ints(s.get("pause_range", (8, 48)))),
        motif_dim=int(s.get("motif_dim", 6)),
        noise_sigma=float(s.get("noise_sigma", 0.1)),
        seed=s.seed(),
        window_grid=tuple(_ints(s.get("window_grid"))),
        channels=int(s.get("channels")),
        frames_per_window=int(s.get("frames_per_window")),
        max_frames=int(s.get("max_frames", 2048)),
        n_classes=int(s.get("n_classes", 5)),
        warp=float(s.get("warp", 0.3)),
    )


def _metric_line(m: mt.MetricReport) -> str:
    return (
        f"n {m.n}  mae {m.mae:.4f}  rmse {m.rmse:.4f}  "
        f"obo {m.obo:.4f}  obz {m.obz:.4f}"
    )


def cmd_synth(s: Settings) -> int:
    spec = synth_spec(s)
    out = Path(s.get("out", "corpus"))
    out.mkdir(parents=True, exist_ok=True)
    n_train = int(s.get("n_train", 200))
    n_test = int(s.get("n_test", 50))
    manifests: dict[str, list[str]] = {"train": [], "test": []}
    for i in range(n_train + n_test):
        split = "train" if i < n_train else "test"
        j = i if i < n_train else i - n_train
        name = f"{split}{j:04d}"
        seq, ann = ft.synth_sequence(spec, index=i, video_id=name)
        ft.save_features(seq, out / f"{name}.escf")
        an.save_sidecar(out / f"{name}.json", ann, name, f"class{i % spec.n_classes:02d}")
        manifests[split].append(f"{name}.escf")
    for split, names in manifests.items():
        (out / f"{split}.txt").write_text("".join(n + "\n" for n in names))
    print(f"wrote {n_train} train + {n_test} test videos to {out}")
    return 0


def cmd_train(s: Settings) -> int:
    corpus = xm.load_corpus(s.get("corpus", "corpus"), s.get("manifest", "train.txt"))
    out_dir = Path(s.get("out", "run"))
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.esck"
    tcfg = train_config(s)
    resume = s.get("resume")
    if resume:
        # the checkpoint's architecture is authoritative on resume
        dcfg, params, meta, extras = dc.load_checkpoint(resume)
        opt = tr.AdamW(params, weight_decay=tcfg.weight_decay)
        opt.load_state_blobs(extras)
        start = int(meta.get("next_epoch", 0))
    else:
        dcfg = decoder_config(s)
        params = dc.init_params(dcfg, seed=tcfg.seed)
        opt = tr.AdamW(params, weight_decay=tcfg.weight_decay)
        start = 0
    every = int(s.get("checkpoint_every", 50))
    t0 = time.perf_counter()
    with open(out_dir / "train.jsonl", "a" if resume else "w") as log_f:
        for epoch in range(start, tcfg.epochs):
            rep = tr.train_epoch(corpus, params, dcfg, tcfg, opt, epoch, log_file=log_f)
            lr = tr.lr_for_epoch(tcfg, epoch)
            print(
                f"epoch {epoch:4d}  loss {rep.total:.4f}  mse {rep.mse:.4f}  "
                f"mae {rep.mae:.4f}  lr {lr:.3e}",
                flush=True,
            )
            if (epoch + 1) % every == 0 or epoch + 1 == tcfg.epochs:
                meta = {"next_epoch": epoch + 1, "seed": tcfg.seed}
                dc.save_checkpoint(
                    ckpt_path, dcfg, params, meta=meta, extra_blobs=opt.state_blobs()
                )
    print(f"trained in {time.perf_counter() - t0:.1f}s; checkpoint at {ckpt_path}")
    return 0


def _localisation_records(results, corpus):
    by_id = {item.video_id: item for item in corpus.items}
    records = []
    for _, pred in results:
        ann = by_id[pred.video_id].annotation
        records.append(
            (pred.density.values, ann, pred.density.frames_per_temporal_token)
        )
    return records


def _print_theta_table(per_theta: dict[float, float], avg: float) -> None:
    print("theta   " + "  ".join(f"{t:>5.1f}" for t in per_theta))
    print("jaccard " + "  ".join(f"{v:>5.3f}" for v in per_theta.values()))
    print(f"threshold-averaged jaccard {avg:.4f}")


def cmd_eval(s: Settings) -> int:
    cfg, params, _, _ = dc.load_checkpoint(s.get("checkpoint", "run/model.esck"))
    corpus_dir = s.get("corpus", "corpus")
    corpus = xm.load_corpus(corpus_dir, s.get("manifest", "test.txt"))
    shots = int(s.get("shots", 0))
    source = s.get("shot_source", "test_video")
    donor = None
    if shots > 0 and source == "train_class_donor":
        donor = xm.load_corpus(corpus_dir, s.get("donor_manifest", "train.txt"))
    results = inf.evaluate_split(
        corpus,
        params,
        cfg,
        k_shifts=int(s.get("k_shifts", 4)),
        shots=shots,
        shot_source=source,
        donor_index=donor,
        threads=int(s.get("threads", 1)),
    )
    pairs = [(float(t), p.raw_count) for t, p in results]
    m = mt.compute_metrics(pairs)
    print(_metric_line(m))
    per_theta, avg = lc.localisation_report(_localisation_records(results, corpus))
    _print_theta_table(per_theta, avg)
    report_dir = Path(s.get("report_dir", "reports"))
    report_dir.mkdir(parents=True, exist_ok=True)
    inf.save_predictions(report_dir / "predictions.jsonl", results)
    doc = {
        "metrics": m.as_dict(),
        "localisation": {"per_theta": {f"{t:.1f}": v for t, v in per_theta.items()}, "mean": avg},
        "shots": shots,
        "k_shifts": int(s.get("k_shifts", 4)),
    }
    (report_dir / "metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"reports in {report_dir}")
    return 0


def cmd_infer(s: Settings) -> int:
    cfg, params, _, _ = dc.load_checkpoint(s.get("checkpoint", "run/model.esck"))
    path = s.get("features")
    if path is None:
        raise ValueError("infer needs --features")
    seq = ft.load_features(path)
    exs = []
    for ex_path in s.get("exemplar", ()) or ():
        # an exemplar file holds one repetition's clip; resample all of it
        eseq = ft.load_features(ex_path)
        exs.append(
            ft.extract_exemplar(
                eseq, (0, eseq.raw_frame_count), m_e=cfg.m_e, origin="other_video"
            )
        )
    pred = inf.predict(params, cfg, seq, tuple(exs), k_shifts=int(s.get("k_shifts", 4)))
    print(f"{pred.video_id}: raw {pred.raw_count:.3f}  rounded {pred.rounded_count}")
    out = s.get("out")
    if out:
        doc = {
            "video_id": pred.video_id,
            "raw_count": pred.raw_count,
            "rounded_count": pred.rounded_count,
            "density": [float(x) for x in pred.density.values],
            "frames_per_temporal_token": pred.density.frames_per_temporal_token,
        }
        Path(out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_localise(s: Settings) -> int:
    preds = inf.load_predictions(s.get("predictions", "reports/predictions.jsonl"))
    corpus = xm.load_corpus(s.get("corpus", "corpus"), s.get("manifest", "test.txt"))
    by_id = {item.video_id: item for item in corpus.items}
    records = []
    for p in preds:
        ann = by_id[p["video_id"]].annotation
        records.append(
            (
                np.asarray(p["density"], dtype=np.float32),
                ann,
                int(p["frames_per_temporal_token"]),
            )
        )
    thetas = s.get("thetas")
    if thetas is not None:
        per_theta, avg = lc.localisation_report(
            records, tuple(float(t) for t in str(thetas).replace(",", " ").split())
        )
    else:
        per_theta, avg = lc.localisation_report(records)
    _print_theta_table(per_theta, avg)
    out = s.get("out")
    if out:
        doc = {
            "per_theta": {f"{t:.1f}": v for t, v in per_theta.items()},
            "mean": avg,
        }
        Path(out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_bench(s: Settings) -> int:
    spec = synth_spec(s)
    n = int(s.get("n_videos", 8))
    items = []
    for i in range(n):
        seq, ann = ft.synth_sequence(spec, index=i, video_id=f"bench{i:03d}")
        items.append(
            xm.CorpusItem(f"bench{i:03d}", f"class{i % spec.n_classes:02d}", seq, ann)
        )
    index = xm.CorpusIndex(items)
    dcfg = decoder_config(s)
    tcfg = train_config(s)
    params = dc.init_params(dcfg, seed=tcfg.seed)
    opt = tr.AdamW(params, weight_decay=tcfg.weight_decay)
    t0 = time.perf_counter()
    tr.train_epoch(index, params, dcfg, tcfg, opt, 0)
    train_sps = (time.perf_counter() - t0) / n
    k = int(s.get("k_shifts", 4))
    inf.predict(params, dcfg, items[0].sequence, k_shifts=k)  # warm path
    t0 = time.perf_counter()
    for item in items:
        inf.predict(params, dcfg, item.sequence, k_shifts=k)
    infer_sps = (time.perf_counter() - t0) / n
    print(f"{'phase':<16}sec/sample")
    print(f"{'train':<16}{train_sps:.4f}")
    print(f"{'infer (K=' + str(k) + ')':<16}{infer_sps:.4f}")
    out = s.get("out")
    if out:
        doc = {
            "n_videos": n,
            "train_sec_per_sample": train_sps,
            "infer_sec_per_sample": infer_sps,
            "k_shifts": k,
        }
        Path(out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_report(s: Settings) -> int:
    preds = inf.load_predictions(s.get("predictions", "reports/predictions.jsonl"))
    corpus = xm.load_corpus(s.get("corpus", "corpus"), s.get("manifest", "test.txt"))
    by_id = {item.video_id: item for item in corpus.items}
    pairs = []
    durations = []
    rep_lengths = []
    counts = []
    for p in preds:
        item = by_id[p["video_id"]]
        ann = item.annotation
        pairs.append((float(p["true_count"]), float(p["raw_count"])))
        durations.append(item.sequence.raw_frame_count / ann.fps)
        if ann.repetitions:
            rep_lengths.append(
                float(np.mean([(e - b) / ann.fps for b, e in ann.repetitions]))
            )
        elif ann.count > 0:
            rep_lengths.append(item.sequence.raw_frame_count / ann.fps / ann.count)
        else:
            rep_lengths.append(0.0)
        counts.append(float(ann.count))

    m = mt.compute_metrics(pairs)
    print(_metric_line(m))
    n_max = int(s.get("n_max", 3))
    curve = mt.off_by_n(pairs, n_max)
    print("off-by-N  " + "  ".join(f"N={i} {v:.3f}" for i, v in enumerate(curve)))

    group_by = s.get("group_by", "duration")
    values = {"duration": durations, "replength": rep_lengths, "count": counts}[group_by]
    preset = s.get("bins_preset")
    if preset == "duration-seconds":
        groups = mt.grouped_report(pairs, values, mt.DURATION_BINS_SECONDS)
    elif preset == "replength-seconds":
        groups = mt.grouped_report(pairs, values, mt.REP_LENGTH_BINS_SECONDS)
    else:
        groups = mt.grouped_report(pairs, values, int(s.get("bins", 5)))
    print(f"grouped by {group_by}:")
    print(f"{'group':<8}{'n':>4}{'mae':>8}{'rmse':>8}{'obo':>7}{'obz':>7}")
    for label, gm in groups.items():
        print(
            f"{label:<8}{gm.n:>4}{gm.mae:>8.3f}{gm.rmse:>8.3f}"
            f"{gm.obo:>7.3f}{gm.obz:>7.3f}"
        )

    report_dir = Path(s.get("report_dir", "reports"))
    report_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "metrics": m.as_dict(),
        "off_by_n": {str(i): float(v) for i, v in enumerate(curve)},
        "group_by": group_by,
        "groups": {label: gm.as_dict() for label, gm in groups.items()},
    }
    (report_dir / "report.json").write_text(json.dumps(doc, indent=1) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    true_c = [p[0] for p in pairs]
    raw_c = [p[1] for p in pairs]
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.scatter(true_c, raw_c, s=14, alpha=0.7, edgecolors="none")
    lim = max(max(true_c), max(raw_c)) * 1.05 + 0.5
    ax.plot([0, lim], [0, lim], lw=1.0, color="0.6", zorder=0)
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("annotated count")
    ax.set_ylabel("predicted count")
    fig.tight_layout()
    fig.savefig(report_dir / "scatter.svg")
    plt.close(fig)
    print(f"report.json and scatter.svg in {report_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file, keys match flag names")
    common.add_argument("--preset", choices=sorted(PRESETS), help="geometry bundle (default desk)")
    common.add_argument("--seed", type=int, help="RNG seed (default 0); ESCOUNTS_SEED wins")

    geom = argparse.ArgumentParser(add_help=False)
    geom.add_argument("--channels", type=int, help="token channel width C")
    geom.add_argument("--window-grid", help="per-window token grid T',H',W' e.g. 4,2,2")
    geom.add_argument("--frames-per-window", type=int, help="raw frames per encoder window")

    arch = argparse.ArgumentParser(add_help=False)
    arch.add_argument("--l-ca", type=int, help="exemplar cross-attention blocks L (default 2)")
    arch.add_argument("--l-wsa", type=int, help="windowed self-attention blocks L' (default 3)")
    arch.add_argument("--heads", type=int, help="attention heads")
    arch.add_argument("--window", help="attention window t,h,w e.g. 2,2,2")
    arch.add_argument("--m-e", type=int, help="tokens per exemplar latent")
    arch.add_argument("--mlp-ratio", type=int, help="MLP expansion ratio (default 4)")
    arch.add_argument("--head-agg", choices=("sum", "mean"), help="spatial aggregation (default sum)")
    arch.add_argument("--head-linear", action="store_const", const=True, help="drop the softplus on the head")
    arch.add_argument("--pe-mode", choices=("flat", "factored"), help="positional encoding layout")

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--epochs", type=int, help="training epochs (default 300)")
    fit.add_argument("--lr", type=float, help="base learning rate (default 5e-5)")
    fit.add_argument("--lr-decay", type=float, help="stepwise decay factor (default 0.8)")
    fit.add_argument("--decay-every", type=int, help="epochs per decay step (default 60)")
    fit.add_argument("--weight-decay", type=float, help="decoupled weight decay (default 0.05)")
    fit.add_argument("--accum-steps", type=int, help="gradient accumulation group (default 8)")
    fit.add_argument("--shot-set", help="exemplar counts sampled in training, e.g. 0,1,2")
    fit.add_argument("--p-cross", type=float, help="chance of cross-video exemplars (default 0.4)")
    fit.add_argument("--per-instance-cross", action="store_const", const=True,
                     help="one cross/same coin per instance instead of per exemplar")
    fit.add_argument("--sigma", type=float, help="density kernel width in tokens (default 0.5)")
    fit.add_argument("--variable-sigma", action="store_const", const=True,
                     help="scale sigma with each repetition's length")
    fit.add_argument("--no-time-shift", action="store_const", const=True,
                     help="disable start-offset augmentation")

    synth_src = argparse.ArgumentParser(add_help=False)
    synth_src.add_argument("--count-range", help="repetitions per video lo,hi (default 2,10)")
    synth_src.add_argument("--duration-range", help="frames per repetition lo,hi (default 32,128)")
    synth_src.add_argument("--pause-prob", type=float, help="chance of a pause before a repetition")
    synth_src.add_argument("--pause-range", help="pause length in frames lo,hi")
    synth_src.add_argument("--noise-sigma", type=float, help="additive feature noise (default 0.1)")
    synth_src.add_argument("--warp", type=float, help="phase warp strength (default 0.3)")
    synth_src.add_argument("--n-classes", type=int, help="number of motif classes (default 5)")
    synth_src.add_argument("--motif-dim", type=int, help="latent motif dimension (default 6)")
    synth_src.add_argument("--max-frames", type=int, help="cap on raw frames per video")

    p = argparse.ArgumentParser(
        prog="escounts",
        description="exemplar-based repetition counting over feature sequences",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[common, geom, synth_src],
                        help="write a synthetic feature corpus")
    sp.add_argument("--out", help="corpus directory (default corpus)")
    sp.add_argument("--n-train", type=int, help="training videos (default 200)")
    sp.add_argument("--n-test", type=int, help="test videos (default 50)")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", parents=[common, geom, arch, fit],
                        help="fit the decoder on a corpus split")
    tp.add_argument("--corpus", help="corpus directory (default corpus)")
    tp.add_argument("--manifest", help="split manifest (default train.txt)")
    tp.add_argument("--out", help="run directory (default run)")
    tp.add_argument("--checkpoint-every", type=int, help="epochs between checkpoints (default 50)")
    tp.add_argument("--resume", help="checkpoint to continue from")
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", parents=[common],
                        help="score a checkpoint on a split")
    ep.add_argument("--checkpoint", help="model checkpoint (default run/model.esck)")
    ep.add_argument("--corpus", help="corpus directory (default corpus)")
    ep.add_argument("--manifest", help="split manifest (default test.txt)")
    ep.add_argument("--shots", type=int, help="exemplars per video, 0 = zero-shot (default 0)")
    ep.add_argument("--shot-source", choices=("test_video", "train_class_donor"),
                    help="where reference repetitions come from")
    ep.add_argument("--donor-manifest", help="donor split for train_class_donor (default train.txt)")
    ep.add_argument("--k-shifts", type=int, help="start offsets ensembled per video (default 4)")
    ep.add_argument("--threads", type=int, help="worker threads (default 1)")
    ep.add_argument("--report-dir", help="output directory (default reports)")
    ep.set_defaults(func=cmd_eval)

    ip = sub.add_parser("infer", parents=[common],
                        help="count one feature file")
    ip.add_argument("--checkpoint", help="model checkpoint (default run/model.esck)")
    ip.add_argument("--features", help="feature file to count")
    ip.add_argument("--exemplar", action="append",
                    help="feature file of one reference repetition; repeatable")
    ip.add_argument("--k-shifts", type=int, help="start offsets ensembled (default 4)")
    ip.add_argument("--out", help="write the prediction as JSON here")
    ip.set_defaults(func=cmd_infer)

    lp = sub.add_parser("localise", parents=[common],
                        help="per-threshold peak agreement from a prediction dump")
    lp.add_argument("--predictions", help="predictions.jsonl from eval")
    lp.add_argument("--corpus", help="corpus directory (default corpus)")
    lp.add_argument("--manifest", help="split manifest (default test.txt)")
    lp.add_argument("--thetas", help="comma list of relative thresholds (default 0.1..0.9)")
    lp.add_argument("--out", help="write the table as JSON here")
    lp.set_defaults(func=cmd_localise)

    bp = sub.add_parser("bench", parents=[common, geom, arch, fit, synth_src],
                        help="sec/sample self-benchmark on synthetic data")
    bp.add_argument("--n-videos", type=int, help="benchmark corpus size (default 8)")
    bp.add_argument("--k-shifts", type=int, help="start offsets ensembled (default 4)")
    bp.add_argument("--out", help="write the table as JSON here")
    bp.set_defaults(func=cmd_bench)

    rp = sub.add_parser("report", parents=[common],
                        help="grouped tables and scatter plot from a prediction dump")
    rp.add_argument("--predictions", help="predictions.jsonl from eval")
    rp.add_argument("--corpus", help="corpus directory (default corpus)")
    rp.add_argument("--manifest", help="split manifest (default test.txt)")
    rp.add_argument("--group-by", choices=("duration", "replength", "count"),
                    help="grouping value (default duration)")
    rp.add_argument("--bins", type=int, help="equal-population groups (default 5)")
    rp.add_argument("--bins-preset", choices=("duration-seconds", "replength-seconds"),
                    help="fixed second-based boundaries instead of equal-population")
    rp.add_argument("--n-max", type=int, help="largest off-by-N tolerance (default 3)")
    rp.add_argument("--report-dir", help="output directory (default reports)")
    rp.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(Settings(args))
    except (ValueError, RuntimeError, OSError, ft.FeatureFileError, dc.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
