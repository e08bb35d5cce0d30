"""Pipeline stages behind the CLI: generate, featurize, train, evaluate, explain, report."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from flowlens import explain as xai
from flowlens.dataset import (
    SyntheticConfig, default_split_counts, generate_flows, plan_windows, read_dataset, read_flows,
    read_label_intervals, split_train_val_test, write_dataset, write_flows, write_label_intervals,
)
from flowlens.errors import ConfigError, DataError
from flowlens.evaluation import TABLE_COLUMNS, ComparisonTable, evaluate_models, read_comparison_csv
from flowlens.features import FEATURE_NAMES, WindowConfig, featurize
from flowlens.models import TABLE_KINDS, FittedModel, ModelSpec, fit_model
from flowlens.persist import load_model, save_model

log = logging.getLogger(__name__)

SEED_ENV = "FLOWLENS_SEED"
DEPENDENCE_FEATURES = ("packet_count_5s", "inter_arrival_time", "spectral_entropy",
                  "frequency_band_energy", "packet_size", "src_port")
CI_ALIASES = {"hm": "hanley_mcneil", "hanley_mcneil": "hanley_mcneil", "boot": "bootstrap", "bootstrap": "bootstrap"}


@dataclass
class PipelineConfig:
    seed: int = 42
    # generate
    n_flows: int = 1300
    rate: float = 0.10
    difficulty: str = "easy"
    # featurize
    window: float = 5.0
    stride: float = 5.0
    min_packets: int = 1
    splits: tuple[int, int, int] | None = None  # None: 7/3/3 proportions of the row count
    # train / evaluate
    models: tuple[str, ...] = TABLE_KINDS
    ci: str = "hanley_mcneil"
    # explain
    explain_model: str = "rf"
    explain_split: str = "val"
    instances: tuple[int, ...] | None = None  # None: the three highest-scoring rows
    features: tuple[str, ...] = DEPENDENCE_FEATURES
    color_feature: str | None = None
    thresholds: tuple[float, ...] = (0.74, 0.99)
    out_dir: str = "flowlens_out"


def _parse_value(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}[name]
    raw = raw.strip()
    try:
        if "tuple[int" in ftype:
            return None if raw.lower() in ("", "none", "auto") else tuple(int(v) for v in raw.split(","))
        if "tuple[float" in ftype:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if "tuple[str" in ftype:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
        if "None" in ftype and raw.lower() in ("", "none", "auto"):
            return None
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def load_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(names))}")
        values[key] = _parse_value(key, raw)
    return values


def build_config(file_values: Mapping | None = None, overrides: Mapping | None = None,
                 environ: Mapping[str, str] | None = None) -> PipelineConfig:
    """Defaults < config file < ``FLOWLENS_SEED`` < command-line overrides."""
    environ = os.environ if environ is None else environ
    values = dict(file_values or {})
    if environ.get(SEED_ENV):
        try:
            values["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = PipelineConfig(**values)
    cfg.ci = CI_ALIASES.get(cfg.ci, cfg.ci)
    if cfg.ci not in ("hanley_mcneil", "bootstrap"):
        raise ConfigError(f"ci must be hm or boot, got {cfg.ci!r}")
    for kind in cfg.models:
        ModelSpec(kind)
    unknown = [f for f in (*cfg.features, cfg.color_feature) if f is not None and f not in FEATURE_NAMES]
    if unknown:
        raise ConfigError(f"unknown features {unknown}; valid names: {', '.join(FEATURE_NAMES)}")
    if cfg.splits is not None and (len(cfg.splits) != 3 or min(cfg.splits) < 0):
        raise ConfigError(f"splits must be three non-negative counts, got {cfg.splits}")
    return cfg


def _require(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


def labels_path_for(flows_path: str | Path) -> Path:
    p = Path(flows_path)
    return p.with_name(p.stem + ".labels.csv")


def generate_stage(cfg: PipelineConfig, out: str | Path, labels_out: str | Path | None = None) -> int:
    synth = SyntheticConfig(n_flows=cfg.n_flows, anomaly_rate=cfg.rate, difficulty=cfg.difficulty, seed=cfg.seed)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n = write_flows((rec for rec, _ in generate_flows(synth)), out)
    write_label_intervals(plan_windows(synth), labels_out or labels_path_for(out))
    log.info("wrote %d flow records to %s", n, out)
    return n


def featurize_stage(cfg: PipelineConfig, flows_path: str | Path, out: str | Path,
                    labels_path: str | Path | None = None) -> int:
    flows = read_flows(_require(Path(flows_path), "flow file"))
    labels_path = Path(labels_path) if labels_path else labels_path_for(flows_path)
    intervals = read_label_intervals(labels_path) if labels_path.is_file() else None
    if intervals is None:
        log.warning("no label intervals at %s; every window is labeled 0", labels_path)
    # anchor the window grid at t=0 so windows line up with generated windows
    wcfg = WindowConfig(cfg.window, cfg.stride, cfg.min_packets, origin=0.0)
    data, _ = featurize(flows, wcfg, intervals)
    counts = cfg.splits or default_split_counts(len(data))
    data = split_train_val_test(data, counts, cfg.seed)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out)
    return len(data)


def load_labeled(path: str | Path):
    return read_dataset(_require(Path(path), "dataset file"), FEATURE_NAMES)


def train_stage(cfg: PipelineConfig, kind: str, data_path: str | Path, out_model: str | Path,
                params: Mapping | None = None) -> FittedModel:
    data = load_labeled(data_path)
    X, y = data.subset("train")
    if X.shape[0] == 0:
        raise DataError(f"{data_path}: no rows tagged 'train'")
    model = fit_model(ModelSpec(kind, dict(params or {})), X, y, cfg.seed)
    Path(out_model).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out_model, FEATURE_NAMES)
    return model


def emit_report(table: ComparisonTable | None, rocs: Mapping | None, importance: xai.GlobalImportance | None,
                out_dir: str | Path, waterfalls: Mapping[int, xai.WaterfallDecomposition] | None = None) -> list[Path]:
    """Write the plot-ready artifacts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if table is not None:
        table.to_csv(out_dir / "comparison.csv")
        table.to_json(out_dir / "comparison.json")
        written += [out_dir / "comparison.csv", out_dir / "comparison.json"]
    for (model, split), roc in (rocs or {}).items():
        path = out_dir / f"roc_{model}_{split}.csv"
        roc.to_csv(path)
        written.append(path)
    if importance is not None:
        importance.to_csv(out_dir / "importance.csv")
        written.append(out_dir / "importance.csv")
    for instance, wf in (waterfalls or {}).items():
        path = out_dir / f"waterfall_{instance}.json"
        wf.to_json(path)
        written.append(path)
    return written


def evaluate_stage(cfg: PipelineConfig, model_paths: Sequence[str | Path], data_path: str | Path,
                   out_dir: str | Path) -> ComparisonTable:
    models = {}
    slugs = {}
    for path in model_paths:
        _require(Path(path), "trained model file")
        model, _ = load_model(path, FEATURE_NAMES)
        models[model.spec.name] = model
        slugs[model.spec.name] = model.kind
    data = load_labeled(data_path)
    table, rocs = evaluate_models(models, data, cfg.ci, cfg.seed)
    emit_report(table, {(slugs[name], split): roc for (name, split), roc in rocs.items()}, None, out_dir)
    return table


def explain_stage(cfg: PipelineConfig, model_path: str | Path, data_path: str | Path, out_dir: str | Path):
    model, _ = load_model(_require(Path(model_path), "trained model file"), FEATURE_NAMES)
    data = load_labeled(data_path)
    X, _ = data.subset(cfg.explain_split)
    if X.shape[0] == 0:
        raise DataError(f"{data_path}: no rows tagged {cfg.explain_split!r}")
    explanations = xai.tree_shap(model, X, FEATURE_NAMES)
    importance = xai.global_importance(explanations)
    if cfg.instances is None:
        outputs = np.array([e.model_output for e in explanations])
        instances = tuple(int(i) for i in np.argsort(-outputs, kind="stable")[:3])
    else:
        instances = cfg.instances
    bad = [i for i in instances if not 0 <= i < len(explanations)]
    if bad:
        raise DataError(f"instance indices {bad} outside the {len(explanations)} {cfg.explain_split} rows")
    link = xai.link_for(model)
    waterfalls = {i: xai.waterfall(explanations[i], cfg.thresholds, link) for i in instances}

    out_dir = Path(out_dir)
    emit_report(None, None, importance, out_dir, waterfalls)
    doc = {str(i): explanations[i].to_dict() for i in instances}
    (out_dir / "explanations.json").write_text(json.dumps(doc, indent=2) + "\n")
    for name in cfg.features:
        series = xai.dependence_data(explanations, name, cfg.color_feature)
        series.to_csv(out_dir / f"dependence_{name}.csv")
    return importance


def report_stage(out_dir: str | Path) -> Path:
    """Summarize comparison.csv and importance.csv into a plain-text report.txt."""
    out_dir = Path(out_dir)
    rows = read_comparison_csv(_require(out_dir / "comparison.csv", "comparison table"))
    widths = [max(len(r[i]) for r in [list(TABLE_COLUMNS)] + rows) for i in range(len(TABLE_COLUMNS))]
    lines = ["Model comparison", ""]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [list(TABLE_COLUMNS)] + rows]
    imp_path = out_dir / "importance.csv"
    if imp_path.is_file():
        with open(imp_path, newline="") as fh:
            imp = list(csv.DictReader(fh))
        lines += ["", "Global importance (mean |SHAP|)", ""]
        lines += [f"{r['feature']} {float(r['mean_abs_shap']):.3f}" for r in imp[:3]]
    path = out_dir / "report.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def run_all(cfg: PipelineConfig, out_dir: str | Path | None = None) -> Path:
    work = Path(out_dir or cfg.out_dir)
    work.mkdir(parents=True, exist_ok=True)
    flows = work / "flows.csv"
    dataset = work / "dataset.csv"
    generate_stage(cfg, flows)
    featurize_stage(cfg, flows, dataset)
    model_paths = []
    for kind in cfg.models:
        path = work / "models" / f"{kind}.json"
        train_stage(cfg, kind, dataset, path)
        model_paths.append(path)
    report_dir = work / "report"
    evaluate_stage(cfg, model_paths, dataset, report_dir)
    if cfg.explain_model in cfg.models:
        explain_stage(cfg, work / "models" / f"{cfg.explain_model}.json", dataset, report_dir)
    return report_stage(report_dir)
