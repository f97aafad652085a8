"""Multimodal corpora: in-memory records, the on-disk CSV layout, subject
partitioning and a seeded synthetic generator.

On-disk layout::

    <root>/meta.json            {"frame_period": 0.1,
                                 "feature_dims": {"audio": 1000, ...},
                                 "subjects": ["subject_01", ...]}
    <root>/<subject>/audio.csv  one row per frame, no header
    <root>/<subject>/video.csv
    <root>/<subject>/text.csv
    <root>/<subject>/labels.csv header "frame,arousal,valence,liking"

Values are written with Python's shortest round-trip float repr, so a
write/load cycle reproduces every float64 exactly.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .align import DEFAULT_FRAME_PERIOD, shift_frames
from .errors import InputError, LoadError
from .fusion import DIMENSIONS, MODALITIES, DEFAULT_FEATURE_DIMS

META_FILE = "meta.json"
LABEL_FILE = "labels.csv"


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    features: Mapping[str, np.ndarray]
    labels: Mapping[str, np.ndarray]

    @property
    def n_frames(self) -> int:
        return int(self.labels[DIMENSIONS[0]].shape[0])


def validate_record(rec: SubjectRecord, feature_dims: Mapping[str, int]) -> None:
    """Shared validator for loaded and generated records."""
    if set(rec.features) != set(MODALITIES):
        raise InputError(f"{rec.subject_id}: expected modalities {MODALITIES}, "
                         f"got {tuple(sorted(rec.features))}")
    if set(rec.labels) != set(DIMENSIONS):
        raise InputError(f"{rec.subject_id}: expected label dimensions {DIMENSIONS}")
    m = None
    for dim in DIMENSIONS:
        y = rec.labels[dim]
        if y.ndim != 1:
            raise InputError(f"{rec.subject_id}: {dim} labels must be 1-D")
        if m is None:
            m = y.shape[0]
        elif y.shape[0] != m:
            raise InputError(f"{rec.subject_id}: {dim} has {y.shape[0]} frames, expected {m}")
        if not np.all(np.isfinite(y)):
            raise InputError(f"{rec.subject_id}: non-finite {dim} labels")
    if m == 0:
        raise InputError(f"{rec.subject_id}: no frames")
    for mod in MODALITIES:
        x = rec.features[mod]
        want = (m, feature_dims[mod])
        if x.shape != want:
            raise InputError(f"{rec.subject_id}: {mod} features have shape {x.shape}, "
                             f"expected {want}")
        if not np.all(np.isfinite(x)):
            raise InputError(f"{rec.subject_id}: non-finite {mod} features")


@dataclass
class Corpus:
    records: List[SubjectRecord]
    frame_period: float = DEFAULT_FRAME_PERIOD
    feature_dims: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_FEATURE_DIMS))

    def __post_init__(self):
        ids = [r.subject_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate subject ids")
        for rec in self.records:
            validate_record(rec, self.feature_dims)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def subject_ids(self) -> List[str]:
        return [r.subject_id for r in self.records]

    def select(self, ids: Sequence[str]) -> List[SubjectRecord]:
        by_id = {r.subject_id: r for r in self.records}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise InputError(f"subjects not in corpus: {', '.join(missing)}")
        return [by_id[i] for i in ids]


def stack(records: Sequence[SubjectRecord], dimension: str):
    """Frame-concatenated features ``{modality: (N, d)}`` and labels ``(N,)``."""
    xs = {m: np.concatenate([r.features[m] for r in records]) for m in MODALITIES}
    y = np.concatenate([r.labels[dimension] for r in records])
    return xs, y


# -- CSV IO -------------------------------------------------------------------

def _fmt_row(values) -> str:
    return ",".join(repr(v) for v in values)


def write_corpus(corpus: Corpus, root) -> None:
    os.makedirs(root, exist_ok=True)
    meta = {
        "frame_period": corpus.frame_period,
        "feature_dims": {m: corpus.feature_dims[m] for m in MODALITIES},
        "subjects": corpus.subject_ids,
    }
    with open(os.path.join(root, META_FILE), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for rec in corpus.records:
        sdir = os.path.join(root, rec.subject_id)
        os.makedirs(sdir, exist_ok=True)
        for mod in MODALITIES:
            with open(os.path.join(sdir, f"{mod}.csv"), "w", encoding="utf-8", newline="") as fh:
                for row in rec.features[mod].tolist():
                    fh.write(_fmt_row(row) + "\n")
        with open(os.path.join(sdir, LABEL_FILE), "w", encoding="utf-8", newline="") as fh:
            fh.write("frame," + ",".join(DIMENSIONS) + "\n")
            cols = [rec.labels[d].tolist() for d in DIMENSIONS]
            for i, vals in enumerate(zip(*cols)):
                fh.write(f"{i}," + _fmt_row(vals) + "\n")


def _read_matrix(path, n_cols, skip_header=False):
    if not os.path.isfile(path):
        raise LoadError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != n_cols:
                raise LoadError(f"{path}:{lineno}: expected {n_cols} columns, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise LoadError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    return np.array(rows, dtype=np.float64).reshape(len(rows), n_cols)


def _is_float(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_corpus(root) -> Corpus:
    """Read and validate a corpus written in the documented CSV layout."""
    meta_path = os.path.join(root, META_FILE)
    if not os.path.isfile(meta_path):
        raise LoadError(f"missing file: {meta_path}")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        frame_period = float(meta.get("frame_period", DEFAULT_FRAME_PERIOD))
        dims = {m: int(meta.get("feature_dims", DEFAULT_FEATURE_DIMS)[m]) for m in MODALITIES}
    except (ValueError, KeyError, TypeError) as exc:
        raise LoadError(f"{meta_path}: malformed metadata ({exc})") from exc
    subjects = meta.get("subjects")
    if subjects is None:
        subjects = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    records = []
    for sid in subjects:
        sdir = os.path.join(root, sid)
        if not os.path.isdir(sdir):
            raise LoadError(f"missing subject directory: {sdir}")
        labels_path = os.path.join(sdir, LABEL_FILE)
        lab = _read_matrix(labels_path, 1 + len(DIMENSIONS), skip_header=True)
        if not np.array_equal(lab[:, 0], np.arange(lab.shape[0])):
            raise LoadError(f"{labels_path}: frame column must count 0, 1, 2, ...")
        features = {}
        for mod in MODALITIES:
            path = os.path.join(sdir, f"{mod}.csv")
            x = _read_matrix(path, dims[mod])
            if x.shape[0] != lab.shape[0]:
                raise LoadError(f"{path}: {x.shape[0]} rows but {lab.shape[0]} labelled frames")
            features[mod] = x
        labels = {d: lab[:, i + 1].copy() for i, d in enumerate(DIMENSIONS)}
        records.append(SubjectRecord(sid, features, labels))
    try:
        return Corpus(records, frame_period, dims)
    except InputError as exc:
        raise LoadError(str(exc)) from exc


# -- partitioning -------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    train: Tuple[str, ...]
    dev_select: Tuple[str, ...]
    dev_test: Tuple[str, ...]

    def to_dict(self):
        return {"train": list(self.train), "dev_select": list(self.dev_select),
                "dev_test": list(self.dev_test)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["train"]), tuple(d["dev_select"]), tuple(d["dev_test"]))


def split_partition(subject_ids: Sequence[str], n_select: int, rng_seed: int,
                    n_dev: int) -> Partition:
    """Draw ``n_dev`` development subjects, then ``n_select`` of those for
    model selection; the remaining development subjects form the test subset
    and everything else is training data."""
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise InputError("duplicate subject ids")
    if not 0 < n_dev < len(ids):
        raise InputError(f"n_dev must be in [1, {len(ids) - 1}], got {n_dev}")
    if not 0 < n_select < n_dev:
        raise InputError(f"n_select must be in [1, {n_dev - 1}], got {n_select}")
    order = np.random.default_rng(rng_seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    dev, train = shuffled[:n_dev], shuffled[n_dev:]
    return Partition(tuple(sorted(train)), tuple(sorted(dev[:n_select])),
                     tuple(sorted(dev[n_select:])))


# -- synthetic corpora --------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Settings for :func:`generate_synthetic`.

    Every modality is ``(snr * latent + nuisance_sigma * nuisance) @ embedding
    + noise_sigma * N(0, 1)``, where ``nuisance`` is a smooth trace private to
    the modality and subject. The first three latent traces, scaled by
    ``label_scale``, are the arousal, valence and liking labels. A private
    nuisance limits what any single modality can recover, so fusing them
    pays off.
    """

    n_subjects: int = 20
    frames_per_subject: int = 500
    latent_dim: int = 6
    noise_sigma: float = 0.5
    nuisance_sigma: float = 0.7
    modality_snr: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    rng_seed: int = 0
    delay_seconds: Optional[Mapping[str, float]] = None
    feature_dims: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_FEATURE_DIMS))
    frame_period: float = DEFAULT_FRAME_PERIOD
    smoothness: float = 0.95
    smoothing_window: int = 9
    label_scale: float = 0.3

    def __post_init__(self):
        if self.n_subjects <= 0 or self.frames_per_subject <= 0:
            raise InputError("subject and frame counts must be positive")
        if self.latent_dim < len(DIMENSIONS):
            raise InputError(f"latent_dim must be at least {len(DIMENSIONS)}")
        if min(self.noise_sigma, self.nuisance_sigma) < 0 or any(s < 0 for s in self.modality_snr):
            raise InputError("noise and SNR values must be non-negative")
        if len(self.modality_snr) != len(MODALITIES):
            raise InputError("need one SNR per modality")
        if any(self.feature_dims[m] <= 0 for m in MODALITIES):
            raise InputError("feature dims must be positive")
        if not 0 <= self.smoothness < 1 or self.smoothing_window <= 0:
            raise InputError("smoothness must be in [0, 1) and the window positive")
        if self.frame_period <= 0:
            raise InputError("frame period must be positive")
        for dim, d in (self.delay_seconds or {}).items():
            if dim not in DIMENSIONS or d < 0:
                raise InputError(f"bad delay entry {dim!r}: {d}")

    def delay_frames(self, dimension) -> int:
        d = (self.delay_seconds or {}).get(dimension, 0.0)
        return int(round(d / self.frame_period))


def _smooth_trace(rng, n, rho, window):
    burn = 5 * window + 50
    steps = rng.standard_normal(n + burn + window - 1)
    walk = np.empty_like(steps)
    acc = 0.0
    for i, s in enumerate(steps):
        acc = rho * acc + s
        walk[i] = acc
    smooth = np.convolve(walk, np.ones(window) / window, mode="valid")[burn:]
    smooth = smooth - smooth.mean()
    sd = smooth.std()
    return smooth / sd if sd > 0 else smooth


def _latent(rng, cfg):
    return np.column_stack([
        _smooth_trace(rng, cfg.frames_per_subject, cfg.smoothness, cfg.smoothing_window)
        for _ in range(cfg.latent_dim)
    ])


def generate_synthetic(cfg: SynthConfig) -> Corpus:
    """Seeded stand-in corpus with smooth latent emotion traces.

    Subject ``k`` depends only on ``cfg.rng_seed`` and ``k``.
    """
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_subjects + 1)
    shared = np.random.default_rng(seeds[0])
    embed = {m: shared.standard_normal((cfg.latent_dim, cfg.feature_dims[m]))
             / np.sqrt(cfg.latent_dim) for m in MODALITIES}
    width = len(str(cfg.n_subjects))
    records = []
    for k in range(cfg.n_subjects):
        rng = np.random.default_rng(seeds[k + 1])
        z = _latent(rng, cfg)
        features = {}
        for m, snr in zip(MODALITIES, cfg.modality_snr):
            view = snr * z
            if cfg.nuisance_sigma > 0:
                view = view + cfg.nuisance_sigma * _latent(rng, cfg)
            noise = rng.standard_normal((cfg.frames_per_subject, cfg.feature_dims[m]))
            features[m] = view @ embed[m] + cfg.noise_sigma * noise
        labels = {}
        for i, dim in enumerate(DIMENSIONS):
            trace = cfg.label_scale * z[:, i]
            k_delay = cfg.delay_frames(dim)
            labels[dim] = shift_frames(trace, k_delay) if k_delay else trace
        records.append(SubjectRecord(f"subject_{k + 1:0{max(2, width)}d}", features, labels))
    return Corpus(records, cfg.frame_period, {m: cfg.feature_dims[m] for m in MODALITIES})
