"""Command-line interface.

Subcommands: synth, features, train, extract, fit, predict, evaluate,
pipeline, sweep, curves. Report-producing commands write delimited text
plus a matplotlib rendering of the same data next to it (disable with
report.figures=false). Exit codes: 0 success, 1 usage error, 2 data error,
3 training/convergence error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from . import descriptor, pipeline, svm
from .baselines import max_vote
from .config import load_config
from .dataset import load_event_waveform, load_manifest
from .errors import RegbankError, UsageError
from .features import extract_event_features
from .pipeline import (emit_curves, evaluate, feature_config_from,
                       prepare_events, render_report, resolve_dataset,
                       run_pipeline, sweep_segment_size, synth_spec_from,
                       train_bank, train_matchers)
from .synth import synth_dataset, write_synth_dataset


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="config file with key=value lines")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config value")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regbank",
                     description="regressor-bank audio event toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("features", help="export per-segment features")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train regressor bank and matchers")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True,
                   help="output bundle path")

    p = sub.add_parser("extract", help="export descriptors for a split")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit", help="fit the configured classifier")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--bundle", type=Path, required=True,
                   help="bundle from `train`")
    p.add_argument("--out", type=Path, required=True,
                   help="output bundle path with the classifier added")

    p = sub.add_parser("predict", help="predict labels for a split")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score a predictions file")
    _add_common(p)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True,
                   help="output directory for report files")

    p = sub.add_parser("pipeline", help="run the full train/test pipeline")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True,
                   help="output directory for report files")
    p.add_argument("--save-bundle", type=Path, default=None)

    p = sub.add_parser("sweep", help="rerun the pipeline over segment sizes")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--sizes", default="30,40,50,60,70,80,90,100")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("curves", help="export score curves for one event")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--event", type=int, default=0,
                   help="manifest row index (0-based)")
    p.add_argument("--class-name", required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _load_cfg(args) -> dict:
    cfg = load_config(args.config, args.overrides)
    if getattr(args, "manifest", None):
        cfg["data.manifest"] = str(args.manifest)
    return cfg


def _dataset(cfg, args):
    manifest = None
    if getattr(args, "manifest", None):
        manifest = load_manifest(args.manifest)
    return resolve_dataset(cfg, manifest, None)


def _figures_enabled(cfg) -> bool:
    return bool(cfg.get("report.figures", True))


def _write_report_files(result: pipeline.PipelineResult, out_dir: Path,
                        cfg) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_report(result.report))
    lines = ["event_id,true,predicted"]
    for row in result.predictions:
        lines.append(f"{row['event_id']},{row['true']},{row['predicted']}")
    (out_dir / "predictions.csv").write_text("\n".join(lines) + "\n")
    if _figures_enabled(cfg):
        from .plotting import save_confusion_figure
        save_confusion_figure(result.report, out_dir / "confusion.png")
    timing = " ".join(f"{k}={v:.2f}s" for k, v in result.report.timing.items())
    print(f"accuracy={result.report.accuracy:.4f} "
          f"macro_f1={result.report.macro_f1:.4f}")
    print(f"timing: {timing}")
    print(f"report written to {out_dir / 'report.txt'}")


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    ds = synth_dataset(synth_spec_from(cfg), int(cfg["synth.seed"]))
    manifest_path = write_synth_dataset(ds, args.out)
    print(f"wrote {len(ds.manifest)} events to {manifest_path}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_cfg(args)
    manifest = load_manifest(args.manifest)
    fcfg = feature_config_from(cfg)
    names = fcfg.feature_names()
    lines = ["event_id,segment_index," + ",".join(names)]
    for i, row in enumerate(manifest.rows):
        w = load_event_waveform(manifest, row)
        feats = extract_event_features(w, fcfg)
        for n, vec in enumerate(feats):
            values = ",".join(repr(float(v)) for v in vec)
            lines.append(f"{row.path}#{i},{n},{values}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    print(f"wrote features for {len(manifest)} events to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    manifest, waveforms = _dataset(cfg, args)
    data = prepare_events(cfg, manifest, waveforms)
    bank = train_bank(data, cfg)
    full, folded = train_matchers(data, cfg, need_folded=True)
    components = {
        "feature_config": feature_config_from(cfg),
        "class_names": data.class_names,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "bank": bank,
        "matcher": full,
        "folded_matchers": folded,
        "system": str(cfg["system"]),
    }
    bundle_io.save_bundle(args.out, components)
    print(f"trained {len(bank)} regressors and {folded.k}+1 matchers; "
          f"bundle at {args.out}")
    return 0


def _descriptor_rows(cfg, data, components, split: str):
    """(event_id, label, raw, normalized, phi_hat) rows for one split."""
    bank = components["bank"]
    pad_factor = int(cfg["descriptor.pad_factor"])
    if split == "train":
        folded = components["folded_matchers"]
        raw, hats, stats, normalized = \
            descriptor.extract_training_descriptors(
                data.train_features, bank, folded, pad_factor,
                workers=int(cfg["workers"]))
        ids, labels = data.train_ids, data.train_labels
    else:
        full = components["matcher"]
        stats = components.get("normalizer")
        raw = np.vstack([
            descriptor.extract_bor(bank, full, f, pad_factor)
            for f in data.test_features])
        hats = np.vstack([
            descriptor.extract_unstructured(full, f)
            for f in data.test_features])
        if stats is None:
            stats = descriptor.fit_normalizer(raw)
        normalized = np.vstack([descriptor.normalize(r, stats).phi
                                for r in raw])
        ids, labels = data.test_ids, data.test_labels
    return ids, labels, raw, normalized, hats, stats


def cmd_extract(args) -> int:
    cfg = _load_cfg(args)
    components = bundle_io.load_bundle(args.bundle)
    manifest, waveforms = _dataset(cfg, args)
    data = prepare_events(cfg, manifest, waveforms)
    ids, labels, raw, normalized, hats, _ = _descriptor_rows(
        cfg, data, components, args.split)
    c = raw.shape[1]
    header = (["event_id", "class"]
              + [f"raw_{i}" for i in range(c)]
              + [f"norm_{i}" for i in range(c)]
              + [f"hat_{i}" for i in range(c)])
    lines = [",".join(header)]
    names = components["class_names"]
    for eid, lab, r, nrm, h in zip(ids, labels, raw, normalized, hats):
        vals = [repr(float(v)) for v in (*r, *nrm, *h)]
        lines.append(",".join([eid, names[lab] if lab >= 0 else ""] + vals))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(ids)} descriptors to {args.out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    components = bundle_io.load_bundle(args.bundle)
    manifest, waveforms = _dataset(cfg, args)
    data = prepare_events(cfg, manifest, waveforms)
    system = str(cfg["system"])
    if system in ("bow", "pbow"):
        codebook, model, extras = pipeline.fit_bow_system(
            system, cfg, data.train_features, data.train_labels)
        components["codebook"] = codebook
        components["svm"] = model
    elif system == "max_voting":
        extras = {}
    else:
        _, labels, _, normalized, hats, stats = _descriptor_rows(
            cfg, data, components, "train")
        components["normalizer"] = stats
        records = [{"phi": p, "phi_hat": h}
                   for p, h in zip(normalized, hats)]
        model, extras = pipeline.fit_svm_system(system, cfg, records,
                                                data.train_labels)
        components["svm"] = model
    components["system"] = system
    components["config"] = {k: cfg[k] for k in sorted(cfg)}
    bundle_io.save_bundle(args.out, components)
    detail = " ".join(f"{k}={v}" for k, v in extras.items())
    print(f"fitted {system} {detail}; bundle at {args.out}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    components = bundle_io.load_bundle(args.bundle)
    manifest, waveforms = _dataset(cfg, args)
    cfg["split.test"] = args.split
    data = prepare_events(cfg, manifest, waveforms,
                          require_test_labels=False)
    system = components.get("system", str(cfg["system"]))
    names = components["class_names"]
    pad_factor = int(cfg["descriptor.pad_factor"])
    if system in ("bow", "pbow"):
        records = [{"bow": pipeline.encode_bow(system, cfg, f,
                                               components["codebook"])}
                   for f in data.test_features]
        preds = svm.predict_many(components["svm"], records)
    elif system == "max_voting":
        preds = [max_vote(descriptor.extract_bor(
            components["bank"], components["matcher"], f, pad_factor))
            for f in data.test_features]
    else:
        _, _, _, normalized, hats, _ = _descriptor_rows(
            cfg, data, components, "test")
        records = [{"phi": p, "phi_hat": h}
                   for p, h in zip(normalized, hats)]
        preds = svm.predict_many(components["svm"], records)
    lines = ["event_id,true,predicted"]
    for eid, lab, p in zip(data.test_ids, data.test_labels, preds):
        true = data.class_names[lab] if 0 <= lab < len(data.class_names) \
            else ""
        lines.append(f"{eid},{true},{names[p]}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    lines = args.predictions.read_text().splitlines()
    if not lines or lines[0] != "event_id,true,predicted":
        raise RegbankError(
            f"{args.predictions}: expected header event_id,true,predicted")
    truths, preds = [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        _, true, pred = line.split(",")
        truths.append(true)
        preds.append(pred)
    classes = sorted(set(truths) | set(preds))
    to_id = {c: i for i, c in enumerate(classes)}
    report = evaluate([to_id[t] for t in truths], [to_id[p] for p in preds],
                      classes)
    report.config = {k: cfg[k] for k in sorted(cfg)}
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.txt").write_text(render_report(report))
    if _figures_enabled(cfg):
        from .plotting import save_confusion_figure
        save_confusion_figure(report, args.out / "confusion.png")
    print(f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    manifest, waveforms = _dataset(cfg, args)
    result = run_pipeline(cfg, manifest, waveforms)
    _write_report_files(result, args.out, cfg)
    if args.save_bundle:
        bundle_io.save_bundle(args.save_bundle, result.components)
        print(f"bundle at {args.save_bundle}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    manifest, waveforms = _dataset(cfg, args)
    sizes = [float(v) for v in str(args.sizes).split(",") if v.strip()]
    rows = sweep_segment_size(cfg, sizes, manifest, waveforms)
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["win_ms,status,accuracy,macro_f1,error"]
    for r in rows:
        acc = repr(r["accuracy"]) if r["status"] == "ok" else ""
        f1 = repr(r["macro_f1"]) if r["status"] == "ok" else ""
        err = str(r["error"]).replace(",", ";")
        lines.append(f"{r['win_ms']:g},{r['status']},{acc},{f1},{err}")
    (args.out / "sweep.csv").write_text("\n".join(lines) + "\n")
    if _figures_enabled(cfg):
        from .plotting import save_sweep_figure
        save_sweep_figure(rows, args.out / "sweep.png")
    for r in rows:
        mark = f"accuracy={r['accuracy']:.4f}" if r["status"] == "ok" \
            else f"FAILED: {r['error']}"
        print(f"win_ms={r['win_ms']:g} {mark}")
    return 0


def cmd_curves(args) -> int:
    cfg = _load_cfg(args)
    components = bundle_io.load_bundle(args.bundle)
    manifest, waveforms = _dataset(cfg, args)
    if not 0 <= args.event < len(manifest.rows):
        raise RegbankError(f"event index {args.event} out of range")
    row = manifest.rows[args.event]
    names = components["class_names"]
    if args.class_name not in names:
        raise RegbankError(f"unknown class {args.class_name!r}; "
                           f"bundle has {', '.join(names)}")
    class_index = names.index(args.class_name)
    fcfg = components["feature_config"]
    w = load_event_waveform(manifest, row, waveforms)
    feats = extract_event_features(w, fcfg)
    forest = components["bank"][class_index]
    args.out.mkdir(parents=True, exist_ok=True)
    rows = emit_curves(forest, components["matcher"], feats, fcfg.hop_ms,
                       args.out / "curves.csv",
                       int(cfg["descriptor.pad_factor"]))
    if _figures_enabled(cfg):
        from .plotting import save_curve_figure
        save_curve_figure(rows, args.out / "curves.png",
                          title=f"{row.path} vs {args.class_name}")
    print(f"wrote {len(rows)} curve rows to {args.out / 'curves.csv'}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "extract": cmd_extract,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except RegbankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
