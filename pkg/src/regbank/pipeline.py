"""End-to-end pipelines: features -> models -> descriptors -> classifier.

``run_systems`` trains the shared stages once (features, regressor bank,
matchers, descriptors) and then evaluates any subset of classification
systems on top of them; ``run_pipeline`` is the single-system view used by
the CLI. Reports are rendered deterministically: wall-clock timings stay on
the report object but never enter the serialized text.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, descriptor, matcher, regforest, svm
from .config import parse_name_list, parse_number_list
from .dataset import DatasetManifest, load_event_waveform, load_manifest
from .errors import LengthMismatch, RegbankError
from .features import FeatureConfig, Waveform, extract_event_features
from .synth import SynthSpec, synth_dataset

BOR_SYSTEMS = ("bor_linear", "bor_chi2", "bor_plus", "max_voting")
MATCHER_SYSTEMS = BOR_SYSTEMS + ("phi_hat",)


@dataclass
class EvaluationReport:
    accuracy: float
    macro_f1: float
    classes: list[str]
    per_class: list[dict]
    confusion: np.ndarray
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    report: EvaluationReport
    components: dict
    predictions: list[dict]


@contextmanager
def _stage(name: str, timing: dict | None = None):
    start = time.perf_counter()
    try:
        yield
    except RegbankError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc
    finally:
        if timing is not None:
            timing[name] = timing.get(name, 0.0) + time.perf_counter() - start


def evaluate(y_true, y_pred, class_names: list[str]) -> EvaluationReport:
    """Accuracy, per-class precision/recall/F1, macro-F1, confusion matrix.

    ``y_true``/``y_pred`` hold class indices into ``class_names``; the
    confusion matrix has true classes on rows.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) != len(y_pred):
        raise LengthMismatch("predictions and truths differ in length")
    if len(y_true) == 0:
        raise LengthMismatch("nothing to evaluate")
    c = len(class_names)
    confusion = np.zeros((c, c), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1
    accuracy = float(np.trace(confusion)) / len(y_true)
    per_class = []
    f1s = []
    for i, name in enumerate(class_names):
        tp = float(confusion[i, i])
        predicted = float(confusion[:, i].sum())
        actual = float(confusion[i, :].sum())
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / actual if actual > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        per_class.append({"class": name, "precision": precision,
                          "recall": recall, "f1": f1,
                          "support": int(actual)})
        f1s.append(f1)
    return EvaluationReport(accuracy=accuracy,
                            macro_f1=float(np.mean(f1s)),
                            classes=list(class_names),
                            per_class=per_class, confusion=confusion)


def feature_config_from(cfg: dict) -> FeatureConfig:
    return FeatureConfig(
        win_ms=float(cfg["features.win_ms"]),
        overlap_ms=float(cfg["features.overlap_ms"]),
        n_bands=int(cfg["features.n_bands"]),
        f_min=float(cfg["features.f_min"]),
        window=str(cfg["features.window"]),
    )


def resolve_dataset(cfg: dict,
                    manifest: DatasetManifest | None = None,
                    waveforms: dict[str, Waveform] | None = None,
                    ) -> tuple[DatasetManifest, dict[str, Waveform] | None]:
    """Manifest passed in, named in the config, or synthesized."""
    if manifest is not None:
        return manifest, waveforms
    if cfg.get("synth.enable"):
        ds = synth_dataset(synth_spec_from(cfg), int(cfg["synth.seed"]))
        return ds.manifest, ds.waveforms
    path = str(cfg.get("data.manifest", ""))
    if not path:
        raise RegbankError("no dataset: set data.manifest or synth.enable")
    return load_manifest(path), None


def synth_spec_from(cfg: dict) -> SynthSpec:
    return SynthSpec(
        n_classes=int(cfg["synth.classes"]),
        events_per_class=int(cfg["synth.events_per_class"]),
        units_per_class=int(cfg["synth.units_per_class"]),
        unit_ms=float(cfg["synth.unit_ms"]),
        noise_sigma=float(cfg["synth.noise_sigma"]),
        duration_jitter=float(cfg["synth.duration_jitter"]),
        shared_histogram=bool(cfg["synth.shared_histogram"]),
        train_fraction=float(cfg["synth.train_fraction"]),
    )


@dataclass
class PreparedData:
    class_names: list[str]
    train_ids: list[str]
    train_labels: list[int]
    train_features: list[np.ndarray]
    test_ids: list[str]
    test_labels: list[int]
    test_features: list[np.ndarray]
    hop_ms: float


def prepare_events(cfg: dict, manifest: DatasetManifest,
                   waveforms: dict[str, Waveform] | None,
                   require_test_labels: bool = True) -> PreparedData:
    fcfg = feature_config_from(cfg)
    train_rows = manifest.split_rows(str(cfg["split.train"]))
    test_rows = manifest.split_rows(str(cfg["split.test"]))
    if not train_rows:
        raise RegbankError(f"no rows with split={cfg['split.train']!r}")
    class_names = sorted({r.class_name for _, r in train_rows
                          if r.class_name is not None})
    to_id = {name: i for i, name in enumerate(class_names)}

    def build(rows, require_label):
        ids, labels, feats = [], [], []
        for i, row in rows:
            if row.class_name is None:
                if require_label:
                    raise RegbankError(f"row {i + 1} has no class label")
                label = -1
            elif row.class_name not in to_id:
                # unknown class: keep the event, drop the label
                if require_label:
                    raise RegbankError(
                        f"row {i + 1}: class {row.class_name!r} absent "
                        "from the training split")
                label = -1
            else:
                label = to_id[row.class_name]
            w = load_event_waveform(manifest, row, waveforms)
            ids.append(f"{row.path}#{i}")
            labels.append(label)
            feats.append(extract_event_features(w, fcfg))
        return ids, labels, feats

    train_ids, train_labels, train_features = build(train_rows, True)
    test_ids, test_labels, test_features = build(test_rows,
                                                 require_test_labels)
    return PreparedData(class_names=class_names, train_ids=train_ids,
                        train_labels=train_labels,
                        train_features=train_features,
                        test_ids=test_ids, test_labels=test_labels,
                        test_features=test_features, hop_ms=fcfg.hop_ms)


def forest_config_from(cfg: dict) -> regforest.ForestConfig:
    return regforest.ForestConfig(
        n_trees=int(cfg["forest.trees"]),
        tests_per_node=int(cfg["forest.tests_per_node"]),
        max_depth=int(cfg["forest.max_depth"]),
        min_samples=int(cfg["forest.min_samples"]),
        subsample=float(cfg["forest.subsample"]),
        var_floor=float(cfg["forest.var_floor"]),
    )


def matcher_config_from(cfg: dict) -> matcher.MatcherConfig:
    return matcher.MatcherConfig(
        n_trees=int(cfg["matcher.trees"]),
        max_depth=int(cfg["matcher.max_depth"]),
        min_samples_split=int(cfg["matcher.min_samples_split"]),
        mtry=int(cfg["matcher.mtry"]),
    )


def train_bank(data: PreparedData, cfg: dict) -> list:
    """One regression forest per class, trained on the full training split."""
    fcfg = forest_config_from(cfg)
    seed = int(cfg["seed"])
    workers = int(cfg["workers"])
    bank = []
    for c in range(len(data.class_names)):
        events = [f for f, lab in zip(data.train_features, data.train_labels)
                  if lab == c]
        bank.append(regforest.train_forest(events, fcfg, (seed, 11, c),
                                           class_id=c, workers=workers))
    return bank


def train_matchers(data: PreparedData, cfg: dict, need_folded: bool
                   ) -> tuple[matcher.MatcherModel,
                              matcher.FoldedMatchers | None]:
    mcfg = matcher_config_from(cfg)
    seed = int(cfg["seed"])
    workers = int(cfg["workers"])
    x = np.vstack(data.train_features)
    y = np.concatenate([
        np.full(len(f), lab, dtype=np.int64)
        for f, lab in zip(data.train_features, data.train_labels)
    ])
    full = matcher.train_matcher(x, y, mcfg, (seed, 21), workers=workers)
    folded = None
    if need_folded:
        folded = matcher.train_folded_matchers(
            data.train_features, data.train_labels,
            int(cfg["matcher.folds"]), mcfg, (seed, 31), workers=workers)
    return full, folded


def _records(phis: np.ndarray, hats: np.ndarray) -> list[dict]:
    return [{"phi": p, "phi_hat": h} for p, h in zip(phis, hats)]


def _bor_grid(system: str, cfg: dict, records: list[dict]) -> list[tuple]:
    c_grid = parse_number_list(cfg["svm.c_grid"])
    gamma_grid = parse_number_list(cfg["svm.gamma_grid"])
    if system == "bor_linear":
        specs = [svm.KernelSpec("linear", channels=("phi",))]
    elif system in ("bor_chi2", "phi_hat"):
        channel = "phi" if system == "bor_chi2" else "phi_hat"
        scales = svm.channel_scales(records, [channel])
        gammas = sorted(set(gamma_grid) | {1.0 / scales[channel]})
        specs = [svm.KernelSpec("chi2", gamma=g, channels=(channel,))
                 for g in gammas]
    elif system == "bor_plus":
        scales = svm.channel_scales(records, ["phi", "phi_hat"])
        specs = [svm.KernelSpec("extended_gaussian",
                                channels=("phi", "phi_hat"), scales=scales)]
    else:
        raise ValueError(f"not an SVM system: {system}")
    return [(spec, c) for spec in specs for c in c_grid]


def fit_svm_system(system: str, cfg: dict, train_records, train_labels
                   ) -> tuple[svm.SvmModel, dict]:
    """Tune the system's kernel grid by CV and fit the final machine."""
    grid = _bor_grid(system, cfg, train_records)
    result = svm.tune(train_records, train_labels, grid,
                      folds=int(cfg["svm.tune_folds"]),
                      loo=bool(cfg["svm.loo"]), seed=int(cfg["seed"]),
                      tol=float(cfg["svm.tol"]))
    model = svm.ovo_train(train_records, train_labels, result.spec,
                          result.c_reg, tol=float(cfg["svm.tol"]))
    extras = {"kernel": result.spec.describe(), "c_reg": result.c_reg,
              "cv_accuracy": result.accuracy}
    return model, extras


def encode_bow(system: str, cfg: dict, features: np.ndarray,
               codebook: baselines.Codebook) -> np.ndarray:
    if system == "pbow":
        return baselines.pbow_encode(features, codebook,
                                     int(cfg["bow.levels"]))
    return baselines.bow_encode(features, codebook)


def fit_bow_system(system: str, cfg: dict, train_features, train_labels
                   ) -> tuple[baselines.Codebook, svm.SvmModel, dict]:
    """Pick the codebook size by CV, tune the kernel, fit the final SVM."""
    seed = int(cfg["seed"])
    sizes = [int(v) for v in parse_number_list(cfg["bow.codebook_sizes"])]
    c_grid = parse_number_list(cfg["svm.c_grid"])
    gamma_grid = parse_number_list(cfg["svm.gamma_grid"])
    kernel_kinds = parse_name_list(cfg["bow.kernels"])

    pool = np.vstack(train_features)
    best = None
    for size in sizes:
        codebook = baselines.kmeans(pool, size, seed=[seed, 41, size],
                                    max_iters=int(cfg["bow.kmeans_iters"]))
        train_records = [{"bow": encode_bow(system, cfg, f, codebook)}
                         for f in train_features]
        grid = []
        for kind in kernel_kinds:
            if kind in ("linear", "hist"):
                grid += [(svm.KernelSpec(kind, channels=("bow",)), c)
                         for c in c_grid]
            elif kind in ("rbf", "chi2"):
                gammas = list(gamma_grid)
                if kind == "chi2":
                    scale = svm.channel_scales(train_records, ["bow"])["bow"]
                    gammas = sorted(set(gammas) | {1.0 / scale})
                grid += [(svm.KernelSpec(kind, gamma=g, channels=("bow",)), c)
                         for g in gammas for c in c_grid]
        result = svm.tune(train_records, train_labels, grid,
                          folds=int(cfg["svm.tune_folds"]),
                          loo=bool(cfg["svm.loo"]), seed=seed,
                          tol=float(cfg["svm.tol"]))
        if best is None or (result.accuracy, -size) > (best[0].accuracy,
                                                       -best[1]):
            best = (result, size, codebook)
    result, size, codebook = best

    train_records = [{"bow": encode_bow(system, cfg, f, codebook)}
                     for f in train_features]
    model = svm.ovo_train(train_records, train_labels, result.spec,
                          result.c_reg, tol=float(cfg["svm.tol"]))
    extras = {"kernel": result.spec.describe(), "c_reg": result.c_reg,
              "cv_accuracy": result.accuracy, "codebook_size": size}
    return codebook, model, extras


def run_systems(cfg: dict, manifest: DatasetManifest | None = None,
                waveforms: dict[str, Waveform] | None = None,
                systems: list[str] | None = None) -> dict[str, PipelineResult]:
    """Train shared stages once and evaluate each requested system."""
    systems = systems or [str(cfg["system"])]
    timing: dict = {}
    with _stage("data", timing):
        manifest, waveforms = resolve_dataset(cfg, manifest, waveforms)
    with _stage("features", timing):
        data = prepare_events(cfg, manifest, waveforms)

    pad_factor = int(cfg["descriptor.pad_factor"])
    workers = int(cfg["workers"])
    need_bank = any(s in BOR_SYSTEMS for s in systems)
    need_matcher = any(s in MATCHER_SYSTEMS for s in systems)
    need_folded = any(s in ("bor_linear", "bor_chi2", "bor_plus", "phi_hat")
                      for s in systems)

    components: dict = {
        "feature_config": feature_config_from(cfg),
        "class_names": data.class_names,
        "config": {k: cfg[k] for k in sorted(cfg)},
    }
    bank = full_matcher = folded = None
    if need_bank:
        with _stage("regressors", timing):
            bank = train_bank(data, cfg)
            components["bank"] = bank
    if need_matcher:
        with _stage("matcher", timing):
            full_matcher, folded = train_matchers(data, cfg, need_folded)
            components["matcher"] = full_matcher
            if folded is not None:
                components["folded_matchers"] = folded

    train_records = test_records = None
    test_raw_phi = None
    stats = None
    if need_folded:
        with _stage("descriptors-train", timing):
            if bank is not None:
                raw, hats, stats, normalized = \
                    descriptor.extract_training_descriptors(
                        data.train_features, bank, folded, pad_factor,
                        workers=workers)
            else:
                # phi_hat-only run: no regressor bank required
                hats = np.vstack([
                    descriptor.extract_unstructured(
                        folded.matcher_for_event(i), data.train_features[i])
                    for i in range(len(data.train_features))
                ])
                normalized = np.zeros((len(hats), len(data.class_names)))
                stats = descriptor.fit_normalizer(normalized)
            train_records = _records(normalized, hats)
            components["normalizer"] = stats
    if need_bank or need_folded:
        with _stage("descriptors-test", timing):
            test_hats = np.vstack([
                descriptor.extract_unstructured(full_matcher, f)
                for f in data.test_features])
            if bank is not None:
                test_raw_phi = np.vstack([
                    descriptor.extract_bor(bank, full_matcher, f, pad_factor)
                    for f in data.test_features])
                if stats is not None:
                    test_norm = np.vstack([
                        descriptor.normalize(r, stats).phi
                        for r in test_raw_phi])
                else:
                    test_norm = test_raw_phi
            else:
                test_norm = np.zeros((len(test_hats),
                                      len(data.class_names)))
            test_records = _records(test_norm, test_hats)

    results: dict[str, PipelineResult] = {}
    for system in systems:
        sys_timing = dict(timing)
        sys_components = dict(components)
        if system in ("bow", "pbow"):
            with _stage("codebook", sys_timing):
                codebook, model, extras = fit_bow_system(
                    system, cfg, data.train_features, data.train_labels)
                sys_components["codebook"] = codebook
                sys_components["svm"] = model
            with _stage("predict", sys_timing):
                bow_test = [{"bow": encode_bow(system, cfg, f, codebook)}
                            for f in data.test_features]
                preds = svm.predict_many(model, bow_test)
        elif system == "max_voting":
            with _stage("predict", sys_timing):
                preds = [baselines.max_vote(row) for row in test_raw_phi]
                extras = {}
        else:
            with _stage("classifier", sys_timing):
                model, extras = fit_svm_system(
                    system, cfg, train_records, data.train_labels)
                sys_components["svm"] = model
            with _stage("predict", sys_timing):
                preds = svm.predict_many(model, test_records)
        with _stage("evaluate", sys_timing):
            report = evaluate(data.test_labels, preds, data.class_names)
        report.config = {k: cfg[k] for k in sorted(cfg)}
        report.extras = {"system": system, **extras}
        report.timing = sys_timing
        sys_components["system"] = system
        predictions = [
            {"event_id": eid,
             "true": data.class_names[t] if t >= 0 else "",
             "predicted": data.class_names[p]}
            for eid, t, p in zip(data.test_ids, data.test_labels, preds)
        ]
        results[system] = PipelineResult(report=report,
                                         components=sys_components,
                                         predictions=predictions)
    return results


def run_pipeline(cfg: dict, manifest: DatasetManifest | None = None,
                 waveforms: dict[str, Waveform] | None = None
                 ) -> PipelineResult:
    """Execute the configured system end to end."""
    return run_systems(cfg, manifest, waveforms)[str(cfg["system"])]


def sweep_segment_size(cfg: dict, sizes=None,
                       manifest: DatasetManifest | None = None,
                       waveforms: dict[str, Waveform] | None = None
                       ) -> list[dict]:
    """Rerun the pipeline for each window size; failures mark their row."""
    sizes = list(sizes) if sizes is not None else [30, 40, 50, 60, 70, 80,
                                                   90, 100]
    rows = []
    for size in sizes:
        cfg_row = dict(cfg)
        cfg_row["features.win_ms"] = float(size)
        try:
            result = run_pipeline(cfg_row, manifest, waveforms)
            rows.append({"win_ms": float(size), "status": "ok",
                         "accuracy": result.report.accuracy,
                         "macro_f1": result.report.macro_f1, "error": ""})
        except RegbankError as exc:
            rows.append({"win_ms": float(size), "status": "failed",
                         "accuracy": "", "macro_f1": "", "error": str(exc)})
    return rows


def emit_curves(forest, matcher_model, features: np.ndarray, hop_ms: float,
                path, pad_factor: int = 5) -> list[dict]:
    """Write the padded-grid onset/offset curves as delimited text.

    Columns: n (padded grid index), time_ms (n * hop_ms from the padded
    grid origin), f_plus, f_minus. Returns the rows as dicts.
    """
    padded = descriptor.pad_sequence(features, pad_factor)
    curves = descriptor.score_curves(forest, matcher_model, padded)
    rows = []
    lines = ["n,time_ms,f_plus,f_minus"]
    for n in range(len(curves)):
        row = {"n": n, "time_ms": n * hop_ms,
               "f_plus": float(curves.f_plus[n]),
               "f_minus": float(curves.f_minus[n])}
        rows.append(row)
        lines.append(f"{n},{n * hop_ms!r},{row['f_plus']!r},"
                     f"{row['f_minus']!r}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n")
    return rows


def render_report(report: EvaluationReport) -> str:
    """Deterministic delimited rendering; timings are deliberately omitted."""
    lines = ["# regbank report", "schema,regbank-report-v1", "[summary]",
             "metric,value",
             f"accuracy,{report.accuracy!r}",
             f"macro_f1,{report.macro_f1!r}",
             f"n_test,{int(report.confusion.sum())}",
             "[per_class]", "class,precision,recall,f1,support"]
    for row in report.per_class:
        lines.append(f"{row['class']},{row['precision']!r},{row['recall']!r},"
                     f"{row['f1']!r},{row['support']}")
    lines.append("[confusion]")
    lines.append("true\\pred," + ",".join(report.classes))
    for i, name in enumerate(report.classes):
        lines.append(name + "," + ",".join(str(int(v))
                                           for v in report.confusion[i]))
    lines.append("[selection]")
    lines.append("key,value")
    for key in sorted(report.extras):
        lines.append(f"{key},{report.extras[key]}")
    lines.append("[config]")
    lines.append("key,value")
    for key in sorted(report.config):
        lines.append(f"{key},{report.config[key]}")
    return "\n".join(lines) + "\n"
