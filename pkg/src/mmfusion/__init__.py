"""Multimodal (audio, video, text) emotion regression with intermediate,
early and late fusion, CCC evaluation, output scaling and delay
compensation."""

__version__ = "0.1.0"

from .align import DelayScan, DelaySpec, delay_scan, shift_series
from .data import (Corpus, Partition, SubjectRecord, SynthConfig, generate_synthetic,
                   load_corpus, split_partition, write_corpus)
from .errors import DegenerateInputError, InputError, LoadError, MMFusionError, TrainingError
from .fusion import (FusionNetSpec, FusionParams, LateFusionModel, ModalityBranchSpec,
                     build_early, build_proposed, build_unimodal, fit_late_fusion,
                     forward_fused, modality_importance)
from .metrics import ccc, mse
from .nn import Checkpoint, NetworkParams, NetworkSpec, TrainConfig, backward, forward, train
from .postproc import (LabelStats, ScalerKind, apply_scaler, decimal_scale, min_max_scale,
                       std_ratio_scale)

__all__ = [
    "DelayScan", "DelaySpec", "delay_scan", "shift_series",
    "Corpus", "Partition", "SubjectRecord", "SynthConfig", "generate_synthetic",
    "load_corpus", "split_partition", "write_corpus",
    "DegenerateInputError", "InputError", "LoadError", "MMFusionError", "TrainingError",
    "FusionNetSpec", "FusionParams", "LateFusionModel", "ModalityBranchSpec",
    "build_early", "build_proposed", "build_unimodal", "fit_late_fusion",
    "forward_fused", "modality_importance",
    "ccc", "mse",
    "Checkpoint", "NetworkParams", "NetworkSpec", "TrainConfig", "backward", "forward", "train",
    "LabelStats", "ScalerKind", "apply_scaler", "decimal_scale", "min_max_scale",
    "std_ratio_scale",
]
