"""Experimental protocol: model construction per kind, training on the
train partition with selection on ``dev_select``, prediction and scoring
on ``dev_test``."""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .align import shifted_concat
from .data import Corpus, Partition, SubjectRecord, stack
from .errors import InputError
from .fusion import (MODALITIES, FusionParams, LateFusionModel, build_early,
                     build_proposed, build_unimodal, fit_late_fusion,
                     init_fusion_params, modality_importance)
from .metrics import ccc
from .nn import Checkpoint, NetworkParams, TrainConfig, init_params, train
from .postproc import LabelStats, ScalerKind, apply_scaler

# columns of the results table, in order
REPORT_SCALERS = (ScalerKind.NONE, ScalerKind.DECIMAL, ScalerKind.STD_RATIO, ScalerKind.MIN_MAX)


@dataclass(frozen=True)
class ModelKind:
    name: str
    modality: str = None

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        if text in ("proposed", "early"):
            return cls(text)
        if text.startswith("unimodal:"):
            mod = text.split(":", 1)[1]
            if mod in MODALITIES:
                return cls("unimodal", mod)
        raise InputError(f"unknown model kind {text!r}; expected proposed, early "
                         f"or unimodal:<{'|'.join(MODALITIES)}>")

    def __str__(self):
        return f"unimodal:{self.modality}" if self.modality else self.name

    @property
    def slug(self) -> str:
        return f"unimodal-{self.modality}" if self.modality else self.name


def build_model(kind: ModelKind, dimension: str, feature_dims, seed: int):
    """Freshly initialised network for ``kind``; weights depend only on ``seed``."""
    rng = np.random.default_rng([seed, 1])
    if kind.name == "proposed":
        return init_fusion_params(build_proposed(dimension, feature_dims), rng)
    if kind.name == "unimodal":
        return init_fusion_params(build_unimodal(kind.modality, dimension, feature_dims), rng)
    return init_params(build_early(dimension, feature_dims), rng)


def model_inputs(model, xs: Dict[str, np.ndarray]):
    """The tuple of input matrices ``model`` expects, from per-modality features."""
    if isinstance(model, FusionParams):
        return tuple(xs[m] for m in model.spec.modalities)
    if isinstance(model, NetworkParams):
        return (np.concatenate([xs[m] for m in MODALITIES], axis=1),)
    raise InputError(f"unsupported model type {type(model).__name__}")


def train_model(corpus: Corpus, partition: Partition, kind: ModelKind, dimension: str,
                cfg: TrainConfig, monitor: str = "ccc") -> Checkpoint:
    model = build_model(kind, dimension, corpus.feature_dims, cfg.rng_seed)
    xs_tr, y_tr = stack(corpus.select(partition.train), dimension)
    xs_dev, y_dev = stack(corpus.select(partition.dev_select), dimension)
    return train(model, (model_inputs(model, xs_tr), y_tr),
                 (model_inputs(model, xs_dev), y_dev), cfg, monitor)


def predict_records(model, records: Sequence[SubjectRecord]) -> List[np.ndarray]:
    """One prediction series per subject."""
    return [np.asarray(model.predict(*model_inputs(model, r.features)), dtype=np.float64)
            for r in records]


def label_stats(corpus: Corpus, partition: Partition, dimension: str) -> LabelStats:
    """Scaler statistics from training-partition labels only."""
    _, y = stack(corpus.select(partition.train), dimension)
    return LabelStats.from_labels(y)


def scale_segments(kind, segments, stats, literal_std_ratio=False):
    """Scale the concatenated predictions jointly, then split back per subject."""
    flat = np.concatenate(segments)
    scaled = apply_scaler(kind, flat, stats, literal_std_ratio)
    return np.split(scaled, np.cumsum([len(s) for s in segments])[:-1])


def score_columns(pred_segments, gold_segments, stats: LabelStats, delay_frames: int = 0,
                  literal_std_ratio: bool = False,
                  scalers=REPORT_SCALERS) -> Dict[str, float]:
    """CCC on the same raw predictions under each scaler, after delay compensation."""
    gold = np.concatenate(gold_segments)
    out = {}
    for kind in scalers:
        scaled = scale_segments(kind, pred_segments, stats, literal_std_ratio)
        out[ScalerKind(kind).value] = ccc(shifted_concat(scaled, delay_frames), gold)
    return out


def gold_segments(records: Sequence[SubjectRecord], dimension: str) -> List[np.ndarray]:
    return [r.labels[dimension] for r in records]


@dataclass
class LateFusionResult:
    model: LateFusionModel
    importance: np.ndarray
    fused_test: List[np.ndarray]
    unimodal_test: Dict[str, List[np.ndarray]]


def run_late_fusion(models: Dict[str, object], corpus: Corpus, partition: Partition,
                    dimension: str, scaler=ScalerKind.NONE, stats: LabelStats = None,
                    literal_std_ratio: bool = False) -> LateFusionResult:
    """Fit the linear combiner on ``dev_select`` predictions of the unimodal
    models and apply it to ``dev_test``.

    With a scaler other than ``none`` the unimodal outputs are scaled before
    fusion.
    """
    mods = [m for m in MODALITIES if m in models]
    sel = corpus.select(partition.dev_select)
    test = corpus.select(partition.dev_test)

    def preds(records):
        return {m: scale_segments(scaler, predict_records(models[m], records), stats,
                                  literal_std_ratio) for m in mods}

    p_sel, p_test = preds(sel), preds(test)
    gold_sel = np.concatenate(gold_segments(sel, dimension))
    model = fit_late_fusion([np.concatenate(p_sel[m]) for m in mods], gold_sel, mods)
    fused = [model.predict([p_test[m][i] for m in mods]) for i in range(len(test))]
    return LateFusionResult(model, modality_importance(model), fused, p_test)
