"""Command-line surface: synth, preprocess, train, evaluate, compare.

Every run that produces files also writes a manifest.json capturing the
command, resolved config, seed, sha256 of each input file, output paths and
wall time, so a result can be traced back to exactly what produced it.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clinical import load_scoring_table
from .data import (
    MODALITIES,
    DataFormatError,
    GeneratorConfig,
    generate_synthetic_cohort,
    load_cohort,
    preprocess_cohort,
    write_cohort,
)
from .kernels import BACKEND
from .layers import VARIANTS, ModelConfig
from .metrics import auc, roc_curve
from .training import CvReport, TrainConfig, cross_validate, save_checkpoint


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed,
                    inputs, outputs, t0: float) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "backend": BACKEND,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": [str(o) for o in outputs],
        "duration_seconds": round(time.monotonic() - t0, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _cohort_inputs(data_dir: Path) -> list[Path]:
    return [data_dir / "static.csv", data_dir / "visits.csv", data_dir / "catalog.json"]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    d = GeneratorConfig().to_dict()
    inputs = []
    if args.config:
        d.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        inputs.append(args.config)
    if args.patients is not None:
        d["n_patients"] = args.patients
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        cfg = GeneratorConfig.from_dict(d)
    except TypeError as exc:
        raise SystemExit(f"synth: bad generator config: {exc}")
    cohort = generate_synthetic_cohort(cfg)
    out_dir = Path(args.out)
    write_cohort(cohort, out_dir)
    outputs = ["static.csv", "visits.csv", "catalog.json"]
    _write_manifest(out_dir, "synth", cfg.to_dict(), cfg.seed, inputs,
                    [out_dir / o for o in outputs], t0)
    n_pos = sum(r.label for r in cohort.records)
    print(f"wrote {len(cohort.records)} patients ({n_pos} positive) to {out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    t0 = time.monotonic()
    data_dir = Path(args.data)
    cohort = load_cohort(data_dir)
    modalities = None if args.modalities == "all" else _csv_list(args.modalities)
    pre = preprocess_cohort(cohort, threshold=args.threshold, modalities=modalities)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "n_patients": len(pre.sequences),
        "n_features": pre.n_features,
        "feature_names": pre.catalog.feature_names(),
        "dropped_by_prevalence": pre.dropped,
        "scaling_table": {k: list(v) for k, v in pre.scaling_table.items()},
        "medians": pre.medians,
    }
    (out_dir / "scaling.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    _write_manifest(out_dir, "preprocess",
                    {"threshold": args.threshold, "modalities": modalities},
                    None, _cohort_inputs(data_dir), [out_dir / "scaling.json"], t0)
    print(f"{len(pre.sequences)} patients, {pre.n_features} features, "
          f"dropped {len(pre.dropped)} low-prevalence variables")
    return 0


def _train_config(args, variant: str) -> TrainConfig:
    model = ModelConfig(
        variant=variant,
        hidden_size=args.hidden,
        num_layers=args.layers,
        window=args.window,
        attn_dim=args.attn_dim,
    )
    return TrainConfig(
        model=model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_start=args.lr_start,
        lr_end=args.lr_end,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    t0 = time.monotonic()
    data_dir = Path(args.data)
    cohort = load_cohort(data_dir)
    config = _train_config(args, args.variant)
    modalities = None if args.modalities == "all" else _csv_list(args.modalities)
    table = load_scoring_table(args.scoring_table) if args.scoring_table else None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "report.json"]

    def sink(fold: int, ckpt) -> None:
        path = out_dir / f"fold{fold}.ckpt"
        save_checkpoint(ckpt, path)
        outputs.append(path)

    report = cross_validate(
        cohort, config, k=args.folds, val_fraction=args.val_fraction,
        threshold=args.threshold, modalities=modalities, scoring_table=table,
        checkpoint_sink=sink,
    )
    report.save(out_dir / "report.json")
    inputs = _cohort_inputs(data_dir)
    if args.scoring_table:
        inputs.append(Path(args.scoring_table))
    _write_manifest(out_dir, "train", config.to_dict(), config.seed, inputs, outputs, t0)
    for f in report.folds:
        print(f"fold {f.fold}: test auc {f.test_auc:.4f}")
    print(f"{args.variant}: mean test auc {report.mean_auc:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    scores = []
    labels = []
    path = Path(args.scores)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["score", "label"]:
            raise SystemExit(f"evaluate: {path} must have a header starting score,label")
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise SystemExit(f"evaluate: {path}:{lineno}: expected score,label")
            try:
                scores.append(float(row[0]))
                labels.append(float(row[1]))
            except ValueError:
                raise SystemExit(f"evaluate: {path}:{lineno}: not numeric: {row[:2]}")
    value = auc(scores, labels)
    print(f"auc\t{value!r}")
    if args.roc:
        fpr, tpr, thr = roc_curve(scores, labels)
        with open(args.roc, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, h in zip(fpr, tpr, thr):
                w.writerow([repr(float(f)), repr(float(t)), repr(float(h))])
    return 0


def cmd_compare(args) -> int:
    t0 = time.monotonic()
    data_dir = Path(args.data)
    cohort = load_cohort(data_dir)
    variants = _csv_list(args.variants)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise SystemExit(f"compare: unknown variants {unknown}; choose from {list(VARIANTS)}")
    seeds = [int(s) for s in _csv_list(args.seeds)]
    if not seeds:
        raise SystemExit("compare: need at least one seed")
    modalities = None if args.modalities == "all" else _csv_list(args.modalities)
    table = load_scoring_table(args.scoring_table) if args.scoring_table else None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: dict[str, list[CvReport]] = {}
    for variant in variants:
        per_seed = []
        for seed in seeds:
            cfg_args = argparse.Namespace(**vars(args))
            cfg_args.seed = seed
            config = _train_config(cfg_args, variant)
            report = cross_validate(
                cohort, config, k=args.folds, val_fraction=args.val_fraction,
                threshold=args.threshold, modalities=modalities, scoring_table=table,
            )
            per_seed.append(report)
            print(f"{variant} seed {seed}: mean test auc {report.mean_auc:.4f}")
        results[variant] = per_seed

    rows = []
    for variant, reports in results.items():
        means = np.array([r.mean_auc for r in reports])
        rows.append((variant, float(means.mean()), float(means.std(ddof=0)), list(means)))
    rows.sort(key=lambda r: -r[1])

    with open(out_dir / "table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "mean_auc", "sd_auc"] + [f"seed_{s}" for s in seeds])
        for variant, mean, sd, means in rows:
            w.writerow([variant, f"{mean:.6f}", f"{sd:.6f}"] + [f"{m:.6f}" for m in means])

    detail = {
        variant: [r.to_dict() for r in reports] for variant, reports in results.items()
    }
    (out_dir / "compare.json").write_text(json.dumps(detail, indent=2), encoding="utf-8")
    _write_manifest(
        out_dir, "compare",
        {"variants": variants, "seeds": seeds, "folds": args.folds,
         "epochs": args.epochs, "modalities": modalities},
        seeds, _cohort_inputs(data_dir),
        [out_dir / "table.csv", out_dir / "compare.json"], t0,
    )
    print(f"\nranking ({out_dir / 'table.csv'}):")
    for variant, mean, sd, _ in rows:
        print(f"  {variant:>14s}  {mean:.4f} +/- {sd:.4f}")
    return 0


# ---------------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--lr-start", type=float, default=1e-3)
    p.add_argument("--lr-end", type=float, default=1e-5)
    p.add_argument("--hidden", type=int, default=32, help="hidden width H")
    p.add_argument("--layers", type=int, default=2, help="stacked LSTM depth")
    p.add_argument("--window", type=int, default=6, help="windowed-LSTM span t")
    p.add_argument("--attn-dim", type=int, default=8, help="query/key embedding width")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=0.95,
                   help="prevalence threshold; variables observed by <= this fraction are dropped")
    p.add_argument("--modalities", default="all",
                   help=f"comma list from {', '.join(MODALITIES)}, or 'all'")
    p.add_argument("--scoring-table", default=None,
                   help="JSON scoring table for the clinical baseline")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqrisk",
                                 description="Sequence risk prediction on clinical visit data")
    ap.add_argument("--version", action="version", version=f"seqrisk {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON generator-config overrides")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("preprocess", help="fit and report preprocessing statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--modalities", default="all")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="cross-validated training of one variant")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="AUC (and ROC points) from a score file")
    p.add_argument("--scores", required=True, help="CSV with header score,label")
    p.add_argument("--roc", default=None, help="write ROC points to this CSV")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare", help="run several variants across seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
