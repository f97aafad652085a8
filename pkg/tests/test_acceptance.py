"""Acceptance suite: one test per criterion, each printing a pass/fail line
in the terminal summary.

Criteria 5-7 run the command-line pipeline in-process on seeded synthetic
corpora (feature dims 100/300/52 to keep a single CPU under the time
budget). The whole pipeline is run twice, in separate directories, and
criterion 8 compares the two trees byte for byte.
"""

import csv
import os
import time

import numpy as np
import pytest

from mmfusion.align import delay_scan
from mmfusion.cli import main
from mmfusion.data import load_corpus, split_partition
from mmfusion.fusion import (DIMENSIONS, MODALITIES, build_proposed, forward_fused,
                             init_fusion_params)
from mmfusion.metrics import ccc, mse
from mmfusion.nn import backward, init_params, mlp_spec
from mmfusion.postproc import (LabelStats, decimal_scale, min_max_scale, std_ratio_scale)
from oracles import (finite_difference_grads, naive_ccc, naive_mse, population_std,
                     relative_error)

FEATURE_DIMS = ["100", "300", "52"]
LAYER_SIZES = {
    "arousal": ({"audio": (50, 50), "video": (100, 100), "text": (200, 200)}, 100, 350),
    "valence": ({"audio": (200, 200), "video": (200, 200), "text": (200, 200)}, 200, 600),
    "liking": ({"audio": (50, 50), "video": (100, 100), "text": (100, 100)}, 50, 250),
}
DEFAULT_INPUTS = {"audio": 1000, "video": 3000, "text": 521}


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"mmfusion {' '.join(map(str, argv))} exited with {code}"


# -- criterion 1 --------------------------------------------------------------

def test_criterion_1_metric_oracles(acceptance_record):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_ccc = worst_mse = 0.0
    props = True
    for _ in range(1000):
        n = int(rng.integers(2, 501))
        scale, offset = 10.0 ** rng.uniform(-3, 3), rng.normal(scale=5)
        gold = offset + scale * rng.normal(size=n)
        pred = rng.uniform(-1, 1) * gold + scale * rng.normal(size=n) + rng.normal()
        worst_ccc = max(worst_ccc, rel(ccc(pred, gold), naive_ccc(pred, gold)))
        worst_mse = max(worst_mse, rel(mse(pred, gold), naive_mse(pred, gold)))
        c = ccc(pred, gold)
        props &= ccc(gold, gold) == 1.0 and abs(c) <= 1.0 and c == ccc(gold, pred)
    elapsed = time.perf_counter() - start
    passed = worst_ccc <= 1e-12 and worst_mse <= 1e-12 and props and elapsed < 5.0
    acceptance_record(1, passed, f"max rel err ccc {worst_ccc:.1e}, mse {worst_mse:.1e}; "
                                 f"properties {'ok' if props else 'violated'}; {elapsed:.2f} s")
    assert passed


# -- criterion 2 --------------------------------------------------------------

def test_criterion_2_gradients(acceptance_record):
    start = time.perf_counter()
    worst, n_nets = 0.0, 60
    for seed in range(n_nets):
        rng = np.random.default_rng(seed)
        hidden = [int(w) for w in rng.integers(1, 17, size=int(rng.integers(0, 3)))]
        spec = mlp_spec(int(rng.integers(1, 17)), hidden,
                        hidden_activation=str(rng.choice(["relu", "linear"])))
        net = init_params(spec, rng)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x, y = rng.normal(size=(8, spec.in_dim)), rng.normal(size=8)
        _, grads = backward(net, x, y)
        numeric = finite_difference_grads(lambda: mse(net.predict(x), y), net.arrays(), 1e-5)
        worst = max([worst] + [relative_error(a, n) for a, n in zip(grads, numeric)])
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-4 and elapsed < 30.0
    acceptance_record(2, passed, f"{n_nets} networks, max rel err {worst:.1e}; {elapsed:.2f} s")
    assert passed


# -- criterion 3 --------------------------------------------------------------

def oracle_fused(params, xs):
    """Branch by branch, layer by layer, written out explicitly."""
    hidden = []
    for branch, x in zip(params.branches, xs):
        a = x
        for w, b in zip(branch.weights, branch.biases):
            a = np.maximum(a @ w.T + b, 0.0)
        hidden.append(a)
    t = params.trunk
    h = np.maximum(np.concatenate(hidden, axis=-1) @ t.weights[0].T + t.biases[0], 0.0)
    return (h @ t.weights[1].T + t.biases[1])[..., 0]


def test_criterion_3_architecture(acceptance_record):
    problems = []
    for dim, (branches, width, trunk_in) in LAYER_SIZES.items():
        spec = build_proposed(dim)
        got = {b.modality: (b.layer1, b.layer2) for b in spec.branches}
        if spec.modalities != MODALITIES or got != branches:
            problems.append(f"{dim} branches {got}")
        if {b.modality: b.input_dim for b in spec.branches} != DEFAULT_INPUTS:
            problems.append(f"{dim} input dims")
        trunk = spec.trunk_spec()
        shape = [(l.in_dim, l.out_dim, l.activation) for l in trunk.layers]
        if shape != [(trunk_in, width, "relu"), (width, 1, "linear")]:
            problems.append(f"{dim} trunk {shape}")
        for b in spec.branches:
            acts = [l.activation for l in b.network_spec().layers]
            if acts != ["relu", "relu"]:
                problems.append(f"{dim} {b.modality} activations {acts}")

        rng = np.random.default_rng(7)
        params = init_fusion_params(spec, rng)
        for a in params.arrays():
            a += rng.normal(scale=0.05, size=a.shape)
        xs = [rng.normal(size=(100, DEFAULT_INPUTS[m])) for m in MODALITIES]
        if forward_fused(params, *xs).tobytes() != oracle_fused(params, xs).tobytes():
            problems.append(f"{dim} batch forward differs")
        for i in range(100):
            single = [x[i] for x in xs]
            if forward_fused(params, *single).tobytes() != oracle_fused(params, single).tobytes():
                problems.append(f"{dim} input {i} differs")
                break
    passed = not problems
    acceptance_record(3, passed, "layer sizes exact, 3 x 100 inputs bit-identical" if passed
                      else "; ".join(problems))
    assert passed, problems


# -- criterion 4 --------------------------------------------------------------

def test_criterion_4_scalers(acceptance_record):
    rng = np.random.default_rng(11)
    worst_mm = worst_std = 0.0
    decimal_ok = True
    for i in range(1000):
        n = int(rng.integers(2, 300))
        # offset up to ~100x the spread: far beyond that, any rescaling rounds
        # away the spread at the offset's magnitude
        y = 10.0 ** rng.uniform(-8, 8) * (rng.normal(size=n) + rng.normal(scale=10.0 ** rng.uniform(-2, 2)))
        if i % 50 == 0:
            y[0] = 10.0 ** int(rng.integers(-5, 6))  # exact powers of ten are the edge case
            y[1:] = rng.uniform(-0.5, 0.5, n - 1) * y[0]
        lo, span = rng.normal(scale=3), 10.0 ** rng.uniform(-2, 2)
        stats = LabelStats(lo, lo + span, 10.0 ** rng.uniform(-3, 1))
        mm = min_max_scale(y, stats)
        worst_mm = max(worst_mm, abs(mm.min() - stats.min_l), abs(mm.max() - stats.max_l))
        worst_std = max(worst_std, rel(population_std(std_ratio_scale(y, stats)), stats.sigma_l))
        peak = float(np.max(np.abs(decimal_scale(y))))
        decimal_ok &= peak < 1.0 <= 10.0 * peak
    passed = worst_mm <= 1e-10 and worst_std <= 1e-10 and decimal_ok
    acceptance_record(4, passed, f"min-max range err {worst_mm:.1e}, std rel err {worst_std:.1e}, "
                                 f"decimal bounds {'ok' if decimal_ok else 'violated'}")
    assert passed


# -- criteria 5-8: the command-line pipeline ----------------------------------

def run_delay(root):
    corpus, run = root / "corpus", root / "run"
    cli("synth", "--out", corpus, "--feature-dims", *FEATURE_DIMS, "--delay", 1.5,
        "--nuisance", 0, "--seed", 0)
    cli("train", "--corpus", corpus, "--run-dir", run, "--model", "unimodal:video",
        "--dimension", "arousal", "--epochs", 10, "--seed", 0)
    start = time.perf_counter()
    cli("delay-scan", "--corpus", corpus, "--run-dir", run, "--model", "unimodal:video",
        "--dimension", "arousal", "--max", 3.0, "--step", 0.1)
    scan_time = time.perf_counter() - start
    cli("eval", "--corpus", corpus, "--run-dir", run, "--model", "unimodal:video",
        "--dimension", "arousal")
    cli("eval", "--corpus", corpus, "--run-dir", run, "--model", "unimodal:video",
        "--dimension", "arousal", "--delay", 1.5, "--out", run / "compensated")
    cli("report", "--run-dir", run)
    return scan_time


def run_fusion(root):
    corpus, run = root / "corpus", root / "run"
    cli("synth", "--out", corpus, "--feature-dims", *FEATURE_DIMS, "--noise", 0.5,
        "--nuisance", 0.7, "--seed", 0)
    for model in ["proposed"] + [f"unimodal:{m}" for m in MODALITIES]:
        cli("train", "--corpus", corpus, "--run-dir", run, "--model", model, "--all",
            "--epochs", 15, "--seed", 0)
        cli("eval", "--corpus", corpus, "--run-dir", run, "--model", model, "--all")
    cli("report", "--run-dir", run)


def run_late(root):
    corpus, run = root / "corpus", root / "run"
    cli("synth", "--out", corpus, "--feature-dims", *FEATURE_DIMS, "--snr", 1, 1, 0,
        "--noise", 0.5, "--nuisance", 0, "--seed", 0)
    for m in MODALITIES:
        cli("train", "--corpus", corpus, "--run-dir", run, "--model", f"unimodal:{m}", "--all",
            "--epochs", 15, "--seed", 0)
        cli("eval", "--corpus", corpus, "--run-dir", run, "--model", f"unimodal:{m}", "--all")
    cli("fuse-late", "--corpus", corpus, "--run-dir", run, "--all")
    cli("report", "--run-dir", run)


def run_pipeline(root):
    timings = {}
    for name, fn in (("delay", run_delay), ("fusion", run_fusion), ("late", run_late)):
        start = time.perf_counter()
        extra = fn(root / name)
        timings[name] = time.perf_counter() - start
        if extra is not None:
            timings[name + "_scan"] = extra
    return timings


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    first = run_pipeline(base / "first")
    second = run_pipeline(base / "second")
    return base, first, second


@pytest.mark.slow
def test_criterion_5_delay_recovery(pipeline, acceptance_record):
    base, timings, _ = pipeline
    rows = read_rows(base / "first" / "delay" / "run" / "delay_unimodal-video_arousal.csv")
    (best,) = [r for r in rows if r["best"] == "1"]
    delays = [float(r["delay_s"]) for r in rows]
    net_delay = float(best["delay_s"])

    # closed-form cross-check: least-squares readout fitted on the training
    # subjects, scanned on the same dev subjects
    start = time.perf_counter()
    corpus = load_corpus(base / "first" / "delay" / "corpus")
    part = split_partition(sorted(corpus.subject_ids), 3, 0, n_dev=8)

    def design(records):
        x = np.hstack([np.concatenate([r.features[m] for r in records]) for m in MODALITIES])
        return np.column_stack([x, np.ones(len(x))])
    train = corpus.select(part.train)
    beta = np.linalg.lstsq(design(train), np.concatenate([r.labels["arousal"] for r in train]),
                           rcond=None)[0]
    sel = corpus.select(part.dev_select)
    ols = delay_scan([design([r]) @ beta for r in sel], [r.labels["arousal"] for r in sel], 3.0, 0.1)
    ols_time = time.perf_counter() - start

    run = base / "first" / "delay" / "run"
    comp = [read_rows(d / "eval_unimodal-video_arousal.csv")[0]["none"]
            for d in (run, run / "compensated")]
    scan_time = timings["delay_scan"]
    passed = (delays == pytest.approx(np.arange(31) * 0.1) and abs(net_delay - 1.5) <= 0.1 + 1e-9
              and abs(ols.best_delay - 1.5) <= 0.1 + 1e-9 and scan_time < 10.0 and ols_time < 10.0)
    acceptance_record(5, passed, f"network best delay {net_delay:g} s, least-squares readout "
                                 f"{ols.best_delay:g} s (true 1.5); scan {scan_time:.2f} s; "
                                 f"dev_test CCC {float(comp[0]):.3f} -> {float(comp[1]):.3f} "
                                 f"with compensation")
    assert passed


@pytest.mark.slow
def test_criterion_6_end_to_end_fusion(pipeline, acceptance_record):
    base, timings, _ = pipeline
    run = base / "first" / "fusion" / "run"
    parts, passed = [], timings["fusion"] < 300.0
    for dim in DIMENSIONS:
        prop = float(read_rows(run / f"eval_proposed_{dim}.csv")[0]["none"])
        uni = {m: float(read_rows(run / f"eval_unimodal-{m}_{dim}.csv")[0]["none"])
               for m in MODALITIES}
        best = max(uni.values())
        passed &= prop >= 0.7 and prop > best
        parts.append(f"{dim} {prop:.3f} vs {best:.3f}")
    acceptance_record(6, passed, "proposed vs best unimodal dev_test CCC: " + ", ".join(parts)
                      + f"; {timings['fusion']:.0f} s")
    assert passed


@pytest.mark.slow
def test_criterion_7_late_fusion(pipeline, acceptance_record):
    base, _, _ = pipeline
    run = base / "first" / "late" / "run"
    parts, passed = [], True
    for dim in DIMENSIONS:
        imp = {r["modality"]: float(r["importance_pct"])
               for r in read_rows(run / f"importance_{dim}.csv")}
        late = float(read_rows(run / f"eval_late_{dim}.csv")[0]["none"])
        best = max(float(read_rows(run / f"eval_unimodal-{m}_{dim}.csv")[0]["none"])
                   for m in MODALITIES)
        passed &= abs(imp["text"]) < 10.0 and late >= best - 0.02
        parts.append(f"{dim} text {imp['text']:+.1f}%, late {late:.3f} vs {best:.3f}")
    acceptance_record(7, passed, "; ".join(parts))
    assert passed


@pytest.mark.slow
def test_criterion_8_determinism(pipeline, acceptance_record):
    base, _, _ = pipeline
    first, second = base / "first", base / "second"
    files, diffs = [], []
    for dirpath, _, names in os.walk(first):
        for name in names:
            files.append(os.path.relpath(os.path.join(dirpath, name), first))
    others = [os.path.relpath(os.path.join(d, n), second)
              for d, _, ns in os.walk(second) for n in ns]
    if sorted(files) != sorted(others):
        diffs.append("file sets differ")
    for rel_path in files:
        with open(first / rel_path, "rb") as fa, open(second / rel_path, "rb") as fb:
            if fa.read() != fb.read():
                diffs.append(rel_path)
    kinds = {ext: sum(f.endswith(ext) for f in files) for ext in (".ckpt", "_log.csv")}
    reports = sum(os.path.basename(f) == "results_table.csv" for f in files)
    passed = not diffs and kinds[".ckpt"] > 0 and reports == 3
    acceptance_record(8, passed, f"{len(files)} files compared ({kinds['.ckpt']} checkpoints, "
                                 f"{kinds['_log.csv']} logs, {reports} report tables); "
                                 f"{len(diffs)} differ" + (f": {diffs[:3]}" if diffs else ""))
    assert passed, diffs
