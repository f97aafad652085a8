"""Fusion strategies over the audio, video and text modalities.

* proposed (intermediate) fusion: one relu branch of two layers per modality,
  branch outputs concatenated in the fixed order audio, video, text, then a
  shared fully connected layer and a single linear output neuron, all trained
  jointly;
* early fusion: one MLP over the concatenated feature vectors;
* late fusion: least-squares linear combination of unimodal predictions.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateInputError, InputError, LoadError
from .nn import (NetworkParams, NetworkSpec, backprop, forward, forward_cached,
                 init_params, mlp_spec, mse_output_grad, stack_spec)

MODALITIES = ("audio", "video", "text")
DIMENSIONS = ("arousal", "valence", "liking")
DEFAULT_FEATURE_DIMS = {"audio": 1000, "video": 3000, "text": 521}

# per dimension: {modality: (layer1, layer2)}, fusion width
ARCHITECTURES = {
    "arousal": ({"audio": (50, 50), "video": (100, 100), "text": (200, 200)}, 100),
    "valence": ({"audio": (200, 200), "video": (200, 200), "text": (200, 200)}, 200),
    "liking": ({"audio": (50, 50), "video": (100, 100), "text": (100, 100)}, 50),
}


def _check_dimension(dimension):
    if dimension not in ARCHITECTURES:
        raise InputError(f"unknown emotional dimension {dimension!r}; "
                         f"expected one of {', '.join(DIMENSIONS)}")


def _feature_dims(input_dims):
    dims = dict(DEFAULT_FEATURE_DIMS)
    if input_dims:
        dims.update(input_dims)
    return dims


@dataclass(frozen=True)
class ModalityBranchSpec:
    modality: str
    input_dim: int
    layer1: int
    layer2: int

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InputError(f"unknown modality {self.modality!r}")
        if min(self.input_dim, self.layer1, self.layer2) <= 0:
            raise InputError("branch sizes must be positive")

    def network_spec(self) -> NetworkSpec:
        return stack_spec(self.input_dim, (self.layer1, self.layer2), "relu")


@dataclass(frozen=True)
class FusionNetSpec:
    """Independent branches merged by concatenation into a shared trunk.

    Three branches give the proposed network; a single branch is the
    unimodal network trained the same way.
    """

    branches: Tuple[ModalityBranchSpec, ...]
    fusion_width: int
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise InputError("need at least one branch")
        if self.output_dim != 1:
            raise InputError("the fusion network has exactly one output neuron")
        if self.fusion_width <= 0:
            raise InputError("fusion width must be positive")
        order = [MODALITIES.index(b.modality) for b in self.branches]
        if order != sorted(set(order)):
            raise InputError("branches must be distinct and ordered audio, video, text")

    @property
    def modalities(self) -> Tuple[str, ...]:
        return tuple(b.modality for b in self.branches)

    @property
    def trunk_input_dim(self) -> int:
        return sum(b.layer2 for b in self.branches)

    def trunk_spec(self) -> NetworkSpec:
        return mlp_spec(self.trunk_input_dim, (self.fusion_width,), self.output_dim)

    def to_dict(self):
        return {
            "branches": [[b.modality, b.input_dim, b.layer1, b.layer2] for b in self.branches],
            "fusion_width": self.fusion_width,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ModalityBranchSpec(m, int(i), int(a), int(b))
                         for m, i, a, b in d["branches"]), int(d["fusion_width"]))


def build_proposed(dimension: str, input_dims: Optional[Dict[str, int]] = None) -> FusionNetSpec:
    """Per-dimension branch-merge architecture (layer sizes fixed per dimension)."""
    _check_dimension(dimension)
    dims = _feature_dims(input_dims)
    layers, width = ARCHITECTURES[dimension]
    return FusionNetSpec(
        tuple(ModalityBranchSpec(m, dims[m], *layers[m]) for m in MODALITIES), width
    )


def build_unimodal(modality: str, dimension: str,
                   input_dims: Optional[Dict[str, int]] = None) -> FusionNetSpec:
    """The proposed network restricted to one modality's branch."""
    _check_dimension(dimension)
    dims = _feature_dims(input_dims)
    layers, width = ARCHITECTURES[dimension]
    if modality not in MODALITIES:
        raise InputError(f"unknown modality {modality!r}")
    return FusionNetSpec((ModalityBranchSpec(modality, dims[modality], *layers[modality]),), width)


def build_early(dimension: str, input_dims: Optional[Dict[str, int]] = None) -> NetworkSpec:
    """MLP over the concatenated features with two hidden layers of the
    dimension's fusion width."""
    _check_dimension(dimension)
    dims = _feature_dims(input_dims)
    width = ARCHITECTURES[dimension][1]
    return mlp_spec(sum(dims[m] for m in MODALITIES), (width, width), 1)


class FusionParams:
    """Trainable weights of a :class:`FusionNetSpec`."""

    kind = "fusion"

    def __init__(self, spec: FusionNetSpec, branches: Sequence[NetworkParams],
                 trunk: NetworkParams):
        if len(branches) != len(spec.branches):
            raise InputError("one parameter set per branch is required")
        for b, p in zip(spec.branches, branches):
            if p.spec != b.network_spec():
                raise InputError(f"{b.modality} branch parameters do not match its spec")
        if trunk.spec != spec.trunk_spec():
            raise InputError("trunk parameters do not match its spec")
        self.spec = spec
        self.branches = list(branches)
        self.trunk = trunk

    def arrays(self):
        out = []
        for p in self.branches:
            out.extend(p.arrays())
        out.extend(self.trunk.arrays())
        return out

    def copy(self):
        return FusionParams(self.spec, [p.copy() for p in self.branches], self.trunk.copy())

    def predict(self, *xs):
        return forward_fused(self, *xs)

    def loss_and_grads(self, xs, y):
        if len(xs) != len(self.branches):
            raise InputError(f"expected {len(self.branches)} inputs, got {len(xs)}")
        caches, hidden = [], []
        for p, x in zip(self.branches, xs):
            h, cache = forward_cached(p, x)
            caches.append(cache)
            hidden.append(h)
        merged = np.concatenate(hidden, axis=1)
        out, trunk_cache = forward_cached(self.trunk, merged)
        loss, d_out = mse_output_grad(out, y)
        trunk_grads, d_merged = backprop(self.trunk, trunk_cache, d_out)
        grads = []
        start = 0
        for p, cache, h in zip(self.branches, caches, hidden):
            stop = start + h.shape[1]
            g, _ = backprop(p, cache, d_merged[:, start:stop], input_grad=False)
            grads.extend(g)
            start = stop
        grads.extend(trunk_grads)
        return loss, grads

    def header(self):
        return {"kind": self.kind, "spec": self.spec.to_dict()}

    @classmethod
    def from_arrays(cls, spec: FusionNetSpec, arrays) -> "FusionParams":
        arrays = list(arrays)
        branches = []
        for b in spec.branches:
            bspec = b.network_spec()
            n = 2 * len(bspec.layers)
            branches.append(NetworkParams.from_arrays(bspec, arrays[:n]))
            arrays = arrays[n:]
        return cls(spec, branches, NetworkParams.from_arrays(spec.trunk_spec(), arrays))


def init_fusion_params(spec: FusionNetSpec, rng: np.random.Generator) -> FusionParams:
    branches = [init_params(b.network_spec(), rng) for b in spec.branches]
    return FusionParams(spec, branches, init_params(spec.trunk_spec(), rng))


def forward_fused(params: FusionParams, *xs):
    """Run each branch on its modality, concatenate, then run the trunk.

    Accepts one vector per modality (returns a scalar) or one batch matrix
    per modality (returns a 1-D array).
    """
    if len(xs) != len(params.branches):
        raise InputError(f"expected {len(params.branches)} modality inputs, got {len(xs)}")
    hidden = [forward(p, x) for p, x in zip(params.branches, xs)]
    if len({h.shape[:-1] for h in hidden}) != 1:
        raise InputError("modality inputs disagree on the number of samples")
    out = forward(params.trunk, np.concatenate(hidden, axis=-1))
    return out[..., 0]


def model_from_checkpoint(header, arrays):
    """Rebuild a trained model from :func:`mmfusion.nn.read_checkpoint` output."""
    kind = header.get("kind")
    if kind == NetworkParams.kind:
        return NetworkParams.from_arrays(NetworkSpec.from_dict(header["spec"]), arrays)
    if kind == FusionParams.kind:
        return FusionParams.from_arrays(FusionNetSpec.from_dict(header["spec"]), arrays)
    raise LoadError(f"unknown model kind {kind!r} in checkpoint")


# -- late fusion --------------------------------------------------------------

@dataclass(frozen=True)
class LateFusionModel:
    coefficients: Tuple[float, ...]
    intercept: float
    modalities: Tuple[str, ...] = MODALITIES
    rank_deficient: bool = False

    def predict(self, per_modality_predictions) -> np.ndarray:
        cols = _prediction_matrix(per_modality_predictions, len(self.coefficients))
        return cols @ np.asarray(self.coefficients) + self.intercept


def _prediction_matrix(per_modality_predictions, n_expected=None):
    if isinstance(per_modality_predictions, dict):
        per_modality_predictions = [per_modality_predictions[m] for m in MODALITIES
                                    if m in per_modality_predictions]
    cols = [np.asarray(p, dtype=np.float64).ravel() for p in per_modality_predictions]
    if n_expected is not None and len(cols) != n_expected:
        raise InputError(f"expected {n_expected} prediction series, got {len(cols)}")
    if len({c.size for c in cols}) != 1:
        raise InputError("prediction series differ in length")
    return np.column_stack(cols)


def fit_late_fusion(per_modality_predictions, gold,
                    modalities: Sequence[str] = MODALITIES) -> LateFusionModel:
    """Least-squares fit, with intercept, of ``gold`` on the unimodal predictions.

    A rank-deficient design is solved with the minimum-norm solution and
    flagged on the returned model.
    """
    P = _prediction_matrix(per_modality_predictions)
    y = np.asarray(gold, dtype=np.float64).ravel()
    if P.shape[0] != y.size:
        raise InputError(f"{P.shape[0]} predictions vs {y.size} gold values")
    if y.size < 4:
        raise InputError("late fusion needs at least 4 samples")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(y))):
        raise InputError("non-finite values in late-fusion inputs")
    design = np.column_stack([P, np.ones(y.size)])
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    return LateFusionModel(
        tuple(float(b) for b in beta[:-1]), float(beta[-1]),
        tuple(modalities)[:P.shape[1]], bool(rank < design.shape[1]),
    )


def modality_importance(model: LateFusionModel) -> np.ndarray:
    """Signed share of each coefficient in their sum, in percent.

    The intercept is excluded; shares always sum to 100 and may be negative.
    """
    w = np.asarray(model.coefficients, dtype=np.float64)
    total = w.sum()
    if total == 0.0:
        raise DegenerateInputError("late-fusion coefficients sum to zero")
    return 100.0 * w / total
