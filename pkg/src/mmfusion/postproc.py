"""Output scalers that stretch attenuated regression outputs back toward
the magnitude of the training labels."""

import enum
import decimal
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InputError


class ScalerKind(str, enum.Enum):
    NONE = "none"
    MIN_MAX = "minmax"
    STD_RATIO = "stdratio"
    DECIMAL = "decimal"


@dataclass(frozen=True)
class LabelStats:
    """Range and population standard deviation of the training labels."""

    min_l: float
    max_l: float
    sigma_l: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.min_l, self.max_l, self.sigma_l)):
            raise InputError("label statistics must be finite")
        if self.min_l > self.max_l:
            raise InputError(f"min_l={self.min_l} exceeds max_l={self.max_l}")
        if self.sigma_l < 0:
            raise InputError(f"sigma_l must be >= 0, got {self.sigma_l}")

    @classmethod
    def from_labels(cls, labels) -> "LabelStats":
        y = np.asarray(labels, dtype=np.float64).ravel()
        if y.size == 0:
            raise InputError("cannot compute label statistics of an empty series")
        return cls(float(y.min()), float(y.max()), float(y.std()))


def _series(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise InputError(f"expected a 1-D prediction series, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("prediction series contains non-finite values")
    return y


def min_max_scale(y, stats: LabelStats) -> np.ndarray:
    """Affinely map the prediction range onto ``[stats.min_l, stats.max_l]``."""
    y = _series(y)
    lo, hi = y.min(), y.max()
    if hi <= lo:
        raise DegenerateInputError("min-max scaling of a constant prediction series")
    out = (stats.max_l - stats.min_l) * ((y - lo) / (hi - lo)) + stats.min_l
    # pin the extremes so the output range is exact
    out[y == lo] = stats.min_l
    out[y == hi] = stats.max_l
    return out


def std_ratio_scale(y, stats: LabelStats, literal: bool = False) -> np.ndarray:
    """Multiply by ``sigma_l / sigma_p`` so the output spread matches the labels.

    ``literal=True`` uses the inverted ratio ``sigma_p / sigma_l`` instead.
    """
    y = _series(y)
    sigma_p = float(y.std())
    if sigma_p == 0.0:
        raise DegenerateInputError("std-ratio scaling of a constant prediction series")
    if literal:
        if stats.sigma_l == 0.0:
            raise DegenerateInputError("literal std-ratio needs sigma_l > 0")
        return (sigma_p / stats.sigma_l) * y
    return (stats.sigma_l / sigma_p) * y


def _shift_decimal(y, k):
    """``y / 10**k`` rounded once, so the peak lands exactly in [0.1, 1)."""
    if abs(k) <= 22:
        # 10**|k| is exact here: one correctly rounded multiply or divide
        return y / 10.0**k if k >= 0 else y * 10.0**(-k)
    with decimal.localcontext() as ctx:
        ctx.prec = 800  # enough for any double, so the shift is exact
        out = np.vectorize(lambda v: float(decimal.Decimal(float(v)).scaleb(-k)),
                           otypes=[np.float64])(y)
    return out if np.ndim(y) else float(out)


def decimal_exponent(y) -> int:
    """Smallest integer k with ``max|y| / 10**k < 1`` (0 for all-zero input)."""
    y = _series(y)
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if peak == 0.0:
        return 0
    k = math.floor(math.log10(peak)) + 1
    # log10 can be off by one near exact powers of ten
    while _shift_decimal(peak, k) >= 1.0:
        k += 1
    while _shift_decimal(peak, k - 1) < 1.0:
        k -= 1
    return k


def decimal_scale(y) -> np.ndarray:
    """Shift the decimal point so the largest magnitude lies in [0.1, 1)."""
    y = _series(y)
    out = _shift_decimal(y, decimal_exponent(y))
    if out.size:
        top = np.max(np.abs(out))
        if 0.0 < top and 10.0 * top < 1.0:
            # the exact shift is >= 0.1 but rounded just below it (e.g. 1e-7 * 1e6);
            # lift the peak by the last ulp so the range contract holds
            hit = np.abs(out) == top
            out[hit] = np.copysign(0.1, out[hit])
    return out


def apply_scaler(kind, y, stats: LabelStats = None, literal_std_ratio: bool = False):
    kind = ScalerKind(kind)
    if kind is ScalerKind.NONE:
        return _series(y).copy()
    if kind is ScalerKind.DECIMAL:
        return decimal_scale(y)
    if stats is None:
        raise InputError(f"scaler {kind.value!r} needs label statistics")
    if kind is ScalerKind.MIN_MAX:
        return min_max_scale(y, stats)
    return std_ratio_scale(y, stats, literal=literal_std_ratio)
