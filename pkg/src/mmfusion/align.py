"""Delay compensation between predictions and a lagging gold standard."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .metrics import ccc

DEFAULT_FRAME_PERIOD = 0.1


@dataclass(frozen=True)
class DelaySpec:
    delay_seconds: float
    frame_period_seconds: float = DEFAULT_FRAME_PERIOD

    def __post_init__(self):
        if self.frame_period_seconds <= 0:
            raise InputError("frame period must be positive")
        if self.delay_seconds < 0:
            raise InputError("delay must be non-negative")

    @property
    def frames(self) -> int:
        return int(round(self.delay_seconds / self.frame_period_seconds))


@dataclass(frozen=True)
class DelayScan:
    delays: np.ndarray
    cccs: np.ndarray
    best_delay: float
    best_ccc: float

    @property
    def best_index(self) -> int:
        return int(np.flatnonzero(self.delays == self.best_delay)[0])


def shift_frames(y, k: int) -> np.ndarray:
    """Delay ``y`` by ``k`` frames, repeating the first value at the front."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise InputError(f"expected a 1-D series, got shape {y.shape}")
    if k < 0:
        raise InputError(f"shift must be non-negative, got {k}")
    if k >= y.size:
        raise InputError(f"shift of {k} frames needs a series longer than {y.size}")
    if k == 0:
        return y.copy()
    out = np.empty_like(y)
    out[:k] = y[0]
    out[k:] = y[:-k]
    return out


def shift_series(y, spec: DelaySpec) -> np.ndarray:
    """Shift predictions later in time by ``spec.frames`` frames."""
    return shift_frames(y, spec.frames)


def _segments(series):
    if isinstance(series, np.ndarray) and series.ndim == 1:
        return [series]
    if isinstance(series, (list, tuple)) and series and np.ndim(series[0]) == 0:
        return [np.asarray(series, dtype=np.float64)]
    return [np.asarray(s, dtype=np.float64) for s in series]


def shifted_concat(predictions, k: int) -> np.ndarray:
    """Shift each per-subject segment by ``k`` frames, then concatenate."""
    return np.concatenate([shift_frames(s, k) for s in _segments(predictions)])


def delay_scan(predictions, gold, d_max: float, step: float,
               frame_period: float = DEFAULT_FRAME_PERIOD) -> DelayScan:
    """CCC as a function of the compensation delay over ``0, step, ..., d_max``.

    ``predictions`` and ``gold`` are either single series or parallel lists of
    per-subject series; segments are shifted independently so no values leak
    across subject boundaries. Ties go to the smaller delay.
    """
    if step < 0 or d_max < 0 or step > d_max:
        raise InputError(f"need 0 <= step <= d_max, got step={step}, d_max={d_max}")
    preds = _segments(predictions)
    golds = _segments(gold)
    if len(preds) != len(golds) or any(p.shape != g.shape for p, g in zip(preds, golds)):
        raise InputError("predictions and gold segments differ in count or length")
    if step == 0:
        delays = np.array([0.0])
    else:
        n = int(np.floor(d_max / step + 1e-9))
        delays = np.round(np.arange(n + 1) * step, 10)
    target = np.concatenate(golds)
    scores = np.array([
        ccc(shifted_concat(preds, DelaySpec(float(d), frame_period).frames), target)
        for d in delays
    ])
    best = int(np.argmax(scores))  # first maximum, i.e. smallest delay
    return DelayScan(delays, scores, float(delays[best]), float(scores[best]))
