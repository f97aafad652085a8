"""Command-line front end.

Subcommands: synth, train, eval, delay-scan, fuse-late, report. Every
command writes into a run directory; file names are
``<model>_<dimension>.ckpt``, ``<model>_<dimension>_log.csv``,
``eval_<model>_<dimension>.csv``, ``predictions_<model>_<dimension>.csv``,
``delay_<model>_<dimension>.csv``, ``importance_<dimension>.csv`` and
``late_model_<dimension>.json``. See README.md for column layouts.
"""

import argparse
import csv
import glob
import json
import os
import sys

from . import __version__
from .align import DEFAULT_FRAME_PERIOD, DelaySpec, delay_scan, shifted_concat
from .data import Partition, SynthConfig, generate_synthetic, load_corpus, split_partition, write_corpus
from .errors import InputError, LoadError, MMFusionError
from .experiment import (REPORT_SCALERS, ModelKind, gold_segments, label_stats,
                         predict_records, run_late_fusion, scale_segments,
                         score_columns, train_model)
from .fusion import DIMENSIONS, MODALITIES, DEFAULT_FEATURE_DIMS, model_from_checkpoint
from .nn import TrainConfig, checkpoint_header, read_checkpoint, write_checkpoint
from .postproc import ScalerKind

EVAL_COLUMNS = ["model", "dimension", "subset", "delay_s"] + [s.value for s in REPORT_SCALERS]
TABLE_SCALERS = (ScalerKind.NONE, ScalerKind.DECIMAL, ScalerKind.STD_RATIO)
MODEL_ORDER = ["early", "proposed", "late"] + [f"unimodal-{m}" for m in MODALITIES]


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _dimensions(args):
    return list(DIMENSIONS) if args.all else [args.dimension]


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(x):
    return repr(float(x))


def _ckpt_path(run_dir, slug, dimension):
    return os.path.join(run_dir, f"{slug}_{dimension}.ckpt")


def _load_model(path):
    header, arrays = read_checkpoint(path)
    return model_from_checkpoint(header, arrays), header


def _check_dims(header, corpus, path):
    want = header.get("feature_dims")
    if want and {m: int(want[m]) for m in MODALITIES} != corpus.feature_dims:
        raise InputError(f"{path}: checkpoint expects feature dims {want}, "
                         f"corpus has {corpus.feature_dims}")


def _targets(args):
    """(checkpoint path, model slug, dimension) triples named by the flags."""
    if args.checkpoint:
        header, _ = read_checkpoint(args.checkpoint)
        return [(args.checkpoint, ModelKind.parse(header["model"]).slug, header["dimension"])]
    slug = ModelKind.parse(args.model).slug
    return [(_ckpt_path(args.run_dir, slug, d), slug, d) for d in _dimensions(args)]


# -- commands -----------------------------------------------------------------

def cmd_synth(args):
    delays = {d: getattr(args, f"delay_{d}") for d in DIMENSIONS}
    delays = {d: (v if v is not None else args.delay) for d, v in delays.items()}
    cfg = SynthConfig(
        n_subjects=args.subjects, frames_per_subject=args.frames, latent_dim=args.latent_dim,
        noise_sigma=args.noise, nuisance_sigma=args.nuisance, modality_snr=tuple(args.snr), rng_seed=args.seed,
        delay_seconds=delays, feature_dims=dict(zip(MODALITIES, args.feature_dims)),
        frame_period=args.frame_period,
    )
    corpus = generate_synthetic(cfg)
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} subjects x {args.frames} frames to {args.out}")


def cmd_train(args):
    corpus = load_corpus(args.corpus)
    partition = split_partition(sorted(corpus.subject_ids), args.select_subjects,
                                args.partition_seed, n_dev=args.dev_subjects)
    kind = ModelKind.parse(args.model)
    cfg = TrainConfig(args.lr, args.epochs, args.batch_size, args.seed, args.optimizer)
    os.makedirs(args.run_dir, exist_ok=True)
    for dim in _dimensions(args):
        ckpt = train_model(corpus, partition, kind, dim, cfg, args.monitor)
        extra = {
            "model": str(kind), "dimension": dim, "partition": partition.to_dict(),
            "feature_dims": corpus.feature_dims, "frame_period": corpus.frame_period,
            "input_dim": sum(corpus.feature_dims[m] for m in
                             ([kind.modality] if kind.modality else MODALITIES)),
            "train_config": {"learning_rate": cfg.learning_rate, "epochs": cfg.epochs,
                             "batch_size": cfg.batch_size, "rng_seed": cfg.rng_seed,
                             "optimizer": cfg.optimizer},
        }
        path = _ckpt_path(args.run_dir, kind.slug, dim)
        write_checkpoint(path, checkpoint_header(ckpt, extra), ckpt.best_params.arrays())
        _write_csv(os.path.join(args.run_dir, f"{kind.slug}_{dim}_log.csv"),
                   ["epoch", "train_mse", "dev_loss", "dev_ccc"],
                   [[r.epoch, _num(r.train_mse), _num(r.dev_loss), _num(r.dev_ccc)]
                    for r in ckpt.log])
        print(f"{kind} {dim}: best epoch {ckpt.best_epoch}, dev CCC {ckpt.best_dev_ccc:.4f}, "
              f"dev MSE {ckpt.best_dev_loss:.4f} -> {path}")


def cmd_eval(args):
    corpus = load_corpus(args.corpus)
    for path, slug, dim in _targets(args):
        model, header = _load_model(path)
        _check_dims(header, corpus, path)
        partition = Partition.from_dict(header["partition"])
        records = corpus.select(partition.dev_test)
        stats = label_stats(corpus, partition, dim)
        k = DelaySpec(args.delay, corpus.frame_period).frames
        preds = predict_records(model, records)
        golds = gold_segments(records, dim)
        scores = score_columns(preds, golds, stats, k, args.std_ratio_literal)
        out_dir = args.out or os.path.dirname(path) or "."
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, f"eval_{slug}_{dim}.csv"), EVAL_COLUMNS,
                   [[slug, dim, "dev_test", _num(args.delay)]
                    + [_num(scores[s.value]) for s in REPORT_SCALERS]])
        scaled = scale_segments(args.scaler, preds, stats, args.std_ratio_literal)
        rows = []
        for rec, raw, sc, gold in zip(records, preds, scaled, golds):
            raw_s = shifted_concat([raw], k)
            sc_s = shifted_concat([sc], k)
            rows.extend([rec.subject_id, i, _num(g), _num(r), _num(s)]
                        for i, (g, r, s) in enumerate(zip(gold, raw_s, sc_s)))
        _write_csv(os.path.join(out_dir, f"predictions_{slug}_{dim}.csv"),
                   ["subject", "frame", "gold", "raw", f"scaled_{ScalerKind(args.scaler).value}"],
                   rows)
        cols = "  ".join(f"{s.value}={scores[s.value]:.4f}" for s in REPORT_SCALERS)
        print(f"{slug} {dim} dev_test CCC: {cols}")


def cmd_delay_scan(args):
    corpus = load_corpus(args.corpus)
    for path, slug, dim in _targets(args):
        model, header = _load_model(path)
        _check_dims(header, corpus, path)
        partition = Partition.from_dict(header["partition"])
        records = corpus.select(getattr(partition, args.subset))
        scan = delay_scan(predict_records(model, records), gold_segments(records, dim),
                          args.max, args.step, corpus.frame_period)
        out_dir = args.out or os.path.dirname(path) or "."
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, f"delay_{slug}_{dim}.csv"), ["delay_s", "ccc", "best"],
                   [[_num(d), _num(c), int(i == scan.best_index)]
                    for i, (d, c) in enumerate(zip(scan.delays, scan.cccs))])
        print(f"{slug} {dim}: best delay {scan.best_delay:g} s, CCC {scan.best_ccc:.4f}")


def cmd_fuse_late(args):
    if args.checkpoints and args.all:
        raise InputError("--checkpoints names one dimension's models; use --dimension")
    corpus = load_corpus(args.corpus)
    for dim in _dimensions(args):
        paths = args.checkpoints or [_ckpt_path(args.run_dir, f"unimodal-{m}", dim)
                                     for m in MODALITIES]
        missing = [p for p in paths if not os.path.isfile(p)]
        if missing:
            raise LoadError(f"missing unimodal checkpoints: {', '.join(missing)}")
        models, partition = {}, None
        for p in paths:
            model, header = _load_model(p)
            _check_dims(header, corpus, p)
            kind = ModelKind.parse(header["model"])
            if kind.name != "unimodal" or header["dimension"] != dim:
                raise InputError(f"{p}: expected a unimodal {dim} checkpoint, "
                                 f"got {kind} for {header['dimension']}")
            part = Partition.from_dict(header["partition"])
            if partition is not None and part != partition:
                raise InputError(f"{p}: trained on a different partition")
            partition = part
            models[kind.modality] = model
        stats = label_stats(corpus, partition, dim)
        pre = args.scaler if args.fuse_scaled else ScalerKind.NONE
        res = run_late_fusion(models, corpus, partition, dim, pre, stats, args.std_ratio_literal)
        records = corpus.select(partition.dev_test)
        k = DelaySpec(args.delay, corpus.frame_period).frames
        scores = score_columns(res.fused_test, gold_segments(records, dim), stats, k,
                               args.std_ratio_literal)
        out_dir = args.out or args.run_dir
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(os.path.join(out_dir, f"eval_late_{dim}.csv"), EVAL_COLUMNS,
                   [["late", dim, "dev_test", _num(args.delay)]
                    + [_num(scores[s.value]) for s in REPORT_SCALERS]])
        _write_csv(os.path.join(out_dir, f"importance_{dim}.csv"),
                   ["modality", "coefficient", "importance_pct"],
                   [[m, _num(w), _num(p)] for m, w, p in
                    zip(res.model.modalities, res.model.coefficients, res.importance)])
        with open(os.path.join(out_dir, f"late_model_{dim}.json"), "w", encoding="utf-8") as fh:
            json.dump({"dimension": dim, "modalities": list(res.model.modalities),
                       "coefficients": list(res.model.coefficients),
                       "intercept": res.model.intercept,
                       "rank_deficient": res.model.rank_deficient,
                       "fused_inputs": ScalerKind(pre).value}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        shares = ", ".join(f"{m} {p:.1f}%" for m, p in zip(res.model.modalities, res.importance))
        flag = " (rank-deficient design, minimum-norm fit)" if res.model.rank_deficient else ""
        print(f"late {dim}: CCC none={scores['none']:.4f}; importance {shares}{flag}")


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _model_rank(slug):
    return (MODEL_ORDER.index(slug) if slug in MODEL_ORDER else len(MODEL_ORDER), slug)


def cmd_report(args):
    run = args.run_dir
    eval_files = sorted(glob.glob(os.path.join(run, "eval_*.csv")))
    if not eval_files:
        raise LoadError(f"no eval_*.csv files in {run}; run 'eval' (and 'fuse-late') first")
    table = {}
    for path in eval_files:
        for row in _read_csv(path):
            table.setdefault(row["model"], {})[row["dimension"]] = row
    dims = [d for d in DIMENSIONS if any(d in v for v in table.values())]
    header = ["model"] + [f"{d}_{s.value}" for d in dims for s in TABLE_SCALERS]
    rows = []
    for slug in sorted(table, key=_model_rank):
        rows.append([slug] + [table[slug][d][s.value] if d in table[slug] else "NA"
                              for d in dims for s in TABLE_SCALERS])
    _write_csv(os.path.join(run, "results_table.csv"), header, rows)
    with open(os.path.join(run, "results_table.txt"), "w", encoding="utf-8") as fh:
        fh.write(_format_table(header, rows))
    written = ["results_table.csv", "results_table.txt"]

    delay_files = sorted(glob.glob(os.path.join(run, "delay_*.csv")))
    if delay_files:
        out = []
        for path in delay_files:
            slug, dim = os.path.basename(path)[len("delay_"):-len(".csv")].rsplit("_", 1)
            out.extend([slug, dim, r["delay_s"], r["ccc"], r["best"]] for r in _read_csv(path))
        _write_csv(os.path.join(run, "delay_curves.csv"),
                   ["model", "dimension", "delay_s", "ccc", "best"], out)
        written.append("delay_curves.csv")
    else:
        print(f"note: no delay_*.csv in {run}; skipping delay_curves.csv", file=sys.stderr)

    imp_files = sorted(glob.glob(os.path.join(run, "importance_*.csv")))
    if imp_files:
        out = []
        for path in imp_files:
            dim = os.path.basename(path)[len("importance_"):-len(".csv")]
            out.extend([dim, r["modality"], r["coefficient"], r["importance_pct"]]
                       for r in _read_csv(path))
        _write_csv(os.path.join(run, "importance.csv"),
                   ["dimension", "modality", "coefficient", "importance_pct"], out)
        written.append("importance.csv")
    else:
        print(f"note: no importance_*.csv in {run}; skipping importance.csv", file=sys.stderr)
    sys.stdout.write(_format_table(header, rows))
    print("wrote " + ", ".join(os.path.join(run, w) for w in written))


def _format_table(header, rows):
    def cell(v):
        try:
            return f"{float(v):.3f}"
        except ValueError:
            return v
    cells = [header] + [[r[0]] + [cell(v) for v in r[1:]] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    lines = ["  ".join(c[i].ljust(widths[i]) for i in range(len(c))).rstrip() for c in cells]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


# -- parser -------------------------------------------------------------------

def _add_dimension(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dimension", choices=DIMENSIONS)
    g.add_argument("--all", action="store_true", help="run arousal, valence and liking in turn")


def _add_scaling(p):
    p.add_argument("--scaler", choices=[s.value for s in ScalerKind], default="none")
    p.add_argument("--std-ratio-literal", action="store_true",
                   help="use sigma_pred / sigma_label instead of sigma_label / sigma_pred")
    p.add_argument("--delay", type=_nonneg_float, default=0.0,
                   help="delay compensation in seconds applied before scoring")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=_positive_int, default=20)
    p.add_argument("--frames", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-dim", type=_positive_int, default=6)
    p.add_argument("--noise", type=_nonneg_float, default=0.5,
                   help="std of white per-feature noise")
    p.add_argument("--nuisance", type=_nonneg_float, default=0.7,
                   help="std of the smooth per-modality nuisance mixed into each view")
    p.add_argument("--snr", type=_nonneg_float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("AUDIO", "VIDEO", "TEXT"))
    p.add_argument("--feature-dims", type=_positive_int, nargs=3,
                   default=[DEFAULT_FEATURE_DIMS[m] for m in MODALITIES],
                   metavar=("AUDIO", "VIDEO", "TEXT"))
    p.add_argument("--frame-period", type=_positive_float, default=DEFAULT_FRAME_PERIOD)
    p.add_argument("--delay", type=_nonneg_float, default=0.0,
                   help="label lag in seconds for every dimension")
    for d in DIMENSIONS:
        p.add_argument(f"--delay-{d}", type=_nonneg_float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model per dimension")
    p.add_argument("--corpus", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--model", default="proposed",
                   help="proposed, early or unimodal:{audio,video,text}")
    _add_dimension(p)
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--lr", type=_nonneg_float, default=1e-3)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--monitor", choices=["ccc", "loss"], default="ccc")
    p.add_argument("--dev-subjects", type=_positive_int, default=8)
    p.add_argument("--select-subjects", type=_positive_int, default=3)
    p.add_argument("--partition-seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "score a checkpoint on dev_test"),
                              ("delay-scan", cmd_delay_scan, "CCC as a function of delay")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--corpus", required=True)
        p.add_argument("--checkpoint", help="explicit checkpoint file")
        p.add_argument("--run-dir", default=".")
        p.add_argument("--model", default="proposed")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--dimension", choices=DIMENSIONS)
        g.add_argument("--all", action="store_true")
        p.add_argument("--out", help="output directory (default: checkpoint directory)")
        if name == "eval":
            _add_scaling(p)
        else:
            p.add_argument("--max", type=_nonneg_float, default=3.0)
            p.add_argument("--step", type=_nonneg_float, default=0.1)
            p.add_argument("--subset", choices=["dev_select", "dev_test"], default="dev_select")
        p.set_defaults(func=func)

    p = sub.add_parser("fuse-late", help="linear late fusion of unimodal checkpoints")
    p.add_argument("--corpus", required=True)
    p.add_argument("--run-dir", default=".")
    p.add_argument("--checkpoints", nargs="+", help="explicit unimodal checkpoint files")
    _add_dimension(p)
    _add_scaling(p)
    p.add_argument("--fuse-scaled", action="store_true",
                   help="fuse outputs after applying --scaler instead of raw outputs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse_late)

    p = sub.add_parser("report", help="aggregate a run directory into tables")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("eval", "delay-scan") and not args.checkpoint \
            and not (args.dimension or args.all):
        parser.error(f"{args.command}: give --checkpoint, --dimension or --all")
    try:
        args.func(args)
    except (MMFusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
