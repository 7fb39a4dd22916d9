"""Exemplar-guided repetition counting over precomputed feature sequences.

The pipeline, bottom to top:

- :mod:`escounts.numerics` - float32 tensors with reverse-mode gradients
- :mod:`escounts.features` - feature file format, positional encoding,
  synthetic corpus generation, exemplar extraction
- :mod:`escounts.annotations` - repetition intervals and density targets
- :mod:`escounts.exemplars` - corpus indexing and exemplar sampling policy
- :mod:`escounts.decoder` - cross-attention counting decoder + checkpoints
- :mod:`escounts.training` - objective, optimizer, augmentation, epoch loop
- :mod:`escounts.inference` - shift-ensembled prediction over a split
- :mod:`escounts.metrics` - count-accuracy reports and grouping
- :mod:`escounts.localisation` - density peaks vs annotated intervals
- :mod:`escounts.cli` - command line front end
"""

from .annotations import (
    DensityMap,
    RepetitionAnnotation,
    load_sidecar,
    make_density_map,
    make_pseudo_labels,
    save_sidecar,
)
from .decoder import (
    DecoderConfig,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .exemplars import (
    CorpusIndex,
    CorpusItem,
    ExemplarPolicy,
    exemplars_for_inference,
    load_corpus,
    sample_exemplars,
)
from .features import (
    ExemplarLatent,
    FeatureSequence,
    SyntheticSpec,
    add_positional_encoding,
    extract_exemplar,
    load_features,
    save_features,
    synth_sequence,
)
from .inference import CountPrediction, evaluate_split, predict
from .localisation import detect_peaks, jaccard, localisation_report
from .metrics import MetricReport, compute_metrics, grouped_report, off_by_n
from .training import AdamW, TrainConfig, loss, train_epoch

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "CorpusIndex",
    "CorpusItem",
    "CountPrediction",
    "DecoderConfig",
    "DensityMap",
    "ExemplarLatent",
    "ExemplarPolicy",
    "FeatureSequence",
    "MetricReport",
    "RepetitionAnnotation",
    "SyntheticSpec",
    "TrainConfig",
    "add_positional_encoding",
    "compute_metrics",
    "detect_peaks",
    "evaluate_split",
    "exemplars_for_inference",
    "extract_exemplar",
    "forward",
    "grouped_report",
    "init_params",
    "jaccard",
    "load_checkpoint",
    "load_corpus",
    "load_features",
    "load_sidecar",
    "localisation_report",
    "loss",
    "make_density_map",
    "make_pseudo_labels",
    "off_by_n",
    "predict",
    "sample_exemplars",
    "save_checkpoint",
    "save_features",
    "save_sidecar",
    "synth_sequence",
    "train_epoch",
]
