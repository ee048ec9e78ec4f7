# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from .core.classutils import Family, Refresh, TrainingSet
from .data.corpus import Dataset, load_corpus, write_manifest
from .data.curation import split_train_eval, curate_training_set
from .data.synthetic import synthesize_corpus
from .evaluation.metrics import evaluate
from .experiment.config import ExperimentConfig, FORMATS, DEFAULT_SEED
from .experiment.report import ExperimentReport, emit_report, compare_reports, comparison_frame
from .experiment.runner import run_experiment
from .models.checkpoint import save_checkpoint, load_checkpoint
from .models.zoo import BackbonePreset, build_backbone
from .settings.supervised import SupervisedConfig, train_supervised, predict_labels
from .settings.pseudo_labeling import PseudoLabelConfig, train_semi_supervised, pseudo_label
from .settings.contrastive import ContrastiveConfig, pretrain_contrastive
from .settings.clustering import cluster_label
from .errors import LabelForgeError, UsageError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]

def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if getattr(args, "config", None) else ExperimentConfig()
    changes = {"seed": getattr(args, "seed", None), "out_dir": getattr(args, "out", None)}
    if getattr(args, "sets", None):
        changes["training_sets"] = tuple(_csv_list(args.sets))
    if getattr(args, "presets", None):
        changes["presets"] = tuple(_csv_list(args.presets))
    if getattr(args, "format", None):
        changes["formats"] = tuple(_csv_list(args.format))
    config = config.override(**changes)
    if getattr(args, "refresh", None):
        config = replace(config, pseudo=replace(config.pseudo, refresh=Refresh(args.refresh)))
    return config

def _preset(name: str, corpus: Dataset, size: tuple[int, int] | None = None) -> BackbonePreset:
    h, w, c = corpus.image_shape
    if size is not None:
        h, w = size
    return BackbonePreset.named(name, input_size=(h, w, c))

def _print_json(payload: dict):
    print(json.dumps(payload, sort_keys=True, indent=2))

def cmd_synth(args) -> int:
    corpus = synthesize_corpus(args.samples, size=(args.size, args.size), separability=args.separability,
                               seed=args.seed)
    manifest = write_manifest(corpus, Path(args.out) / "manifest.csv")
    print(manifest)
    return 0

def cmd_curate(args) -> int:
    corpus = load_corpus(args.manifest)
    out = Path(args.out)
    if args.train_only:
        train = corpus
    else:
        train, held_out = split_train_eval(corpus, seed=args.seed)
        write_manifest(train, out / "train.csv", out / "payloads")
        write_manifest(held_out, out / "eval.csv", out / "payloads")
    ledgers = []
    try:
        sets = TrainingSet.parse(args.sets) if args.sets else list(TrainingSet)
    except ValueError as err:
        raise UsageError(str(err)) from None
    for ts in sets:
        labeled, unlabeled, ledger = curate_training_set(train, ts, args.seed)
        write_manifest(labeled, out / ts.name / "labeled.csv", out / "payloads")
        write_manifest(unlabeled, out / ts.name / "unlabeled.csv", out / "payloads")
        frame = ledger.to_frame()
        frame.to_csv(out / ts.name / "ledger.csv", lineterminator="\n")
        print(f"{ts.name}: {len(labeled)} labeled, {len(unlabeled)} unlabeled")
        print(frame.to_string())
        ledgers.append(ledger.to_dict())
    with open(out / "ledgers.json", "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(ledgers, sort_keys=True, indent=2) + "\n")
    return 0

def cmd_train(args) -> int:
    data = load_corpus(args.manifest)
    if args.init:
        model = load_checkpoint(args.init)
        fresh = build_backbone(model.preset, args.seed, with_projection=False)
        fresh.load_backbone_from(model)
        model = fresh
    else:
        model = build_backbone(_preset(args.preset, data), args.seed, with_projection=False)
    config = SupervisedConfig(epochs=args.epochs, augment=args.augment)
    trained = train_supervised(model, data, config, args.seed)
    path = save_checkpoint(trained.model, args.out, training={"setting": "supervised", **config.to_dict()})
    trained.history.to_csv(Path(args.out).with_suffix(".history.csv"))
    print(path)
    return 0

def cmd_pretrain(args) -> int:
    data = load_corpus(args.manifest, allow_unlabeled=True)
    config = ContrastiveConfig(epochs=args.epochs, temperature=args.temperature, batch_size=args.batch_size)
    result = pretrain_contrastive(_preset(args.preset, data), data, config, args.seed)
    path = save_checkpoint(result.encoder, args.out, training={"setting": "contrastive", **config.to_dict()})
    result.history.to_csv(Path(args.out).with_suffix(".history.csv"))
    print(path)
    return 0

def cmd_label(args) -> int:
    unlabeled = load_corpus(args.manifest, allow_unlabeled=True)
    if args.method == "cluster":
        if not (args.checkpoint and args.anchors):
            raise UsageError("Cluster labeling needs --checkpoint (a pretrained encoder) and --anchors.")
        relabeled = cluster_label(load_checkpoint(args.checkpoint), unlabeled, load_corpus(args.anchors), args.seed)
    elif args.checkpoint:
        relabeled = pseudo_label(load_checkpoint(args.checkpoint), unlabeled)
    elif args.labeled:
        labeled = load_corpus(args.labeled)
        config = PseudoLabelConfig(epochs=args.epochs, refresh=Refresh(args.refresh))
        result = train_semi_supervised(_preset(args.preset, labeled), labeled, unlabeled, config, args.seed)
        relabeled = result.relabeled
    else:
        raise UsageError("Pseudo-labeling needs either --checkpoint or --labeled.")
    print(write_manifest(relabeled, args.out, Path(args.out).parent / "payloads"))
    return 0

def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = load_corpus(args.manifest)
    counts, metrics = evaluate(predict_labels(model, data), data.assigned_labels())
    _print_json({"counts": counts.to_dict(), "metrics": metrics.to_dict()})
    return 0

def cmd_compare(args) -> int:
    results = compare_reports(ExperimentReport.from_json(args.reports[0]), ExperimentReport.from_json(args.reports[1]),
                              args.alpha)
    if not results:
        print("No comparable cells (need at least two successful cells in common).")
        return 0
    print(comparison_frame(results).to_string())
    return 0

def cmd_run_all(args) -> int:
    config = _load_config(args)
    report = run_experiment(config)
    for path in emit_report(report, config.out_dir, config.formats):
        print(path)
    return 1 if report.provenance["failed_cells"] else 0

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelforge",
                                     description="Compare supervised, semi-supervised and self-supervised training "
                                                 "on curated labeled/unlabeled training sets.")
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)
    presets = [f.value for f in Family]

    p = sub.add_parser("synth", help="generate a synthetic two-class corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=625)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--separability", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("curate", help="split a corpus and write TSk manifests with their ledgers")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sets", "--set", dest="sets")
    p.add_argument("--train-only", action="store_true", help="treat the manifest as the train split")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("train", help="supervised training of one backbone")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--preset", choices=presets, default="mini-res")
    p.add_argument("--init", help="checkpoint whose backbone initializes the model")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain", help="contrastive pretraining on unlabeled samples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--preset", choices=presets, default="mini-res")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("label", help="assign pseudo or cluster labels to an unlabeled manifest")
    p.add_argument("--method", choices=["pseudo", "cluster"], default="pseudo")
    p.add_argument("--manifest", required=True, help="unlabeled manifest")
    p.add_argument("--out", required=True, help="relabeled manifest path")
    p.add_argument("--checkpoint")
    p.add_argument("--labeled", help="labeled manifest, trains a pseudo-labeling model when no checkpoint is given")
    p.add_argument("--anchors", help="labeled manifest naming the clusters")
    p.add_argument("--preset", choices=presets, default="mini-res")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--refresh", choices=[r.value for r in Refresh], default=Refresh.PerEpoch.value)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a labeled manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="paired t-tests between two reports")
    p.add_argument("reports", nargs=2)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run-all", help="run the full training-set x backbone grid")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--sets")
    p.add_argument("--presets")
    p.add_argument("--format", help=f"comma-separated subset of {','.join(FORMATS)}")
    p.add_argument("--refresh", choices=[r.value for r in Refresh])
    p.set_defaults(func=cmd_run_all)
    return parser

def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format=LOG_FORMAT)
    try:
        return args.func(args)
    except LabelForgeError as err:
        print(f"labelforge: error: {err}", file=sys.stderr)
        return 2
