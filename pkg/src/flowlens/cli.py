"""Command-line driver: ``flowlens <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from flowlens import pipeline
from flowlens.errors import ConfigError, FlowlensError
from flowlens.models import DEFAULTS

KINDS = ("rf", "gb", "ada", "dt", "logreg", "svm", "nb", "knn", "majority")


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _split_counts(text: str) -> tuple[int, int, int]:
    counts = _csv_ints(text)
    if len(counts) != 3:
        raise argparse.ArgumentTypeError("--splits takes three counts: train,val,test")
    return counts


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowlens", description="Network-flow anomaly detection pipeline.")
    parser.add_argument("--config", help="flat key = value config file (flags override it)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--seed", type=int)
        return p

    p = common(sub.add_parser("generate", help="write a synthetic flow CSV plus its label sidecar"))
    p.add_argument("--n", dest="n_flows", type=int, help="number of 5 s windows to synthesize")
    p.add_argument("--rate", type=float)
    p.add_argument("--difficulty", choices=("easy", "hard"))
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", help="label-interval CSV (default <stem>.labels.csv)")

    p = common(sub.add_parser("featurize", help="window flows into the labeled feature dataset"))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", help="label-interval CSV (default <stem>.labels.csv next to --in)")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float)
    p.add_argument("--stride", type=float)
    p.add_argument("--splits", type=_split_counts, help="train,val,test row counts")

    p = common(sub.add_parser("train", help="fit one model on the train split"))
    p.add_argument("--model", required=True, choices=KINDS)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override, repeatable")

    p = common(sub.add_parser("evaluate", help="score saved models on every split"))
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ci", choices=("hm", "boot"))
    p.add_argument("--out-dir", required=True)

    p = common(sub.add_parser("explain", help="Tree SHAP explanations for a saved tree model"))
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--split", dest="explain_split", choices=("train", "val", "test"))
    p.add_argument("--instances", type=_csv_ints, help="row indices within the split")
    p.add_argument("--feature", dest="features", action="append", help="dependence feature, repeatable")
    p.add_argument("--color-feature")
    p.add_argument("--thresholds", type=_csv_floats, help="extra waterfall thresholds")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="summarize an output directory into report.txt")
    p.add_argument("--out-dir", required=True)

    p = common(sub.add_parser("all", help="run every stage with one seed"))
    p.add_argument("--n", dest="n_flows", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--difficulty", choices=("easy", "hard"))
    p.add_argument("--ci", choices=("hm", "boot"))
    p.add_argument("--out-dir")
    return parser


def _parse_params(kind: str, pairs: list[str]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--param expects KEY=VALUE, got {pair!r}")
        key, raw = pair.split("=", 1)
        default = DEFAULTS[kind].get(key)
        if raw.lower() == "none":
            value = None
        elif isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int) or (default is None and raw.lstrip("-").isdigit()):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
        params[key] = value
    return params


_CONFIG_KEYS = ("seed", "n_flows", "rate", "difficulty", "window", "stride", "splits", "ci",
                "explain_split", "instances", "features", "color_feature", "thresholds", "out_dir")


def _config(args) -> pipeline.PipelineConfig:
    file_values = pipeline.load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
    if overrides.get("features"):
        overrides["features"] = tuple(overrides["features"])
    return pipeline.build_config(file_values, overrides)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "generate":
            pipeline.generate_stage(cfg, args.out, args.labels_out)
        elif args.command == "featurize":
            pipeline.featurize_stage(cfg, args.input, args.out, args.labels)
        elif args.command == "train":
            pipeline.train_stage(cfg, args.model, args.input, args.out_model, _parse_params(args.model, args.param))
        elif args.command == "evaluate":
            table = pipeline.evaluate_stage(cfg, args.models, args.input, args.out_dir)
            print(table)
        elif args.command == "explain":
            importance = pipeline.explain_stage(cfg, args.model, args.input, args.out_dir)
            print("\n".join(importance.top(3)))
        elif args.command == "report":
            print(Path(pipeline.report_stage(args.out_dir)).read_text(), end="")
        elif args.command == "all":
            print(Path(pipeline.run_all(cfg)).read_text(), end="")
    except ConfigError as exc:
        print(f"flowlens: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FlowlensError, OSError) as exc:
        print(f"flowlens: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
