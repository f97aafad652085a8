"""Loss and evaluation measures: mean squared error and the concordance
correlation coefficient (CCC).

Moments use population normalisation (divide by m). All arithmetic is
float64.
"""

import numpy as np

from .errors import DegenerateInputError, InputError


def _as_pair(predictions, gold, min_len=1):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    g = np.asarray(gold, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise InputError(
            f"length mismatch: {p.size} predictions vs {g.size} gold values"
        )
    if p.size < min_len:
        raise InputError(f"need at least {min_len} values, got {p.size}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise InputError("non-finite values in scored pair")
    return p, g


def mse(predictions, gold) -> float:
    """Mean of squared differences between ``predictions`` and ``gold``."""
    p, g = _as_pair(predictions, gold)
    d = p - g
    return float(np.mean(d * d))


def ccc(predictions, gold) -> float:
    """Concordance correlation coefficient between two equal-length series.

    Returns a value in [-1, 1]. When both series are constant the result is
    1.0 if the constants are equal and 0.0 otherwise.
    """
    p, g = _as_pair(predictions, gold, min_len=2)
    mp = p.mean()
    mg = g.mean()
    dp = p - mp
    dg = g - mg
    var_p = np.mean(dp * dp)
    var_g = np.mean(dg * dg)
    cov = np.mean(dp * dg)
    denom = var_p + var_g + (mp - mg) ** 2
    if denom == 0.0:
        return 1.0
    if var_p == 0.0 and var_g == 0.0:
        return 0.0
    value = 2.0 * cov / denom
    # rounding can push |value| a hair above one for near-identical inputs
    return float(min(1.0, max(-1.0, value)))


def ccc_strict(predictions, gold) -> float:
    """Like :func:`ccc` but raises instead of applying the constant-series
    conventions."""
    p, g = _as_pair(predictions, gold, min_len=2)
    if np.ptp(p) == 0.0 and np.ptp(g) == 0.0:
        raise DegenerateInputError("both sequences are constant; CCC undefined")
    return ccc(p, g)
