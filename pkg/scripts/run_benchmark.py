"""Fit every comparison model on the seeded synthetic benchmark and print the table.

    python scripts/run_benchmark.py --difficulty hard --seed 7 --ci boot
"""

import argparse
import time

from flowlens.dataset import SyntheticConfig, generate_flows, plan_windows, split_train_val_test
from flowlens.evaluation import cross_validate, evaluate_all
from flowlens.features import WindowConfig, featurize
from flowlens.models import TABLE_KINDS, ModelSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--difficulty", choices=("easy", "hard"), default="easy")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--n", type=int, default=1300)
    ap.add_argument("--rate", type=float, default=0.10)
    ap.add_argument("--ci", choices=("hm", "boot"), default="hm")
    ap.add_argument("--cv", action="store_true", help="also run stratified 5-fold CV for RF")
    args = ap.parse_args()

    t0 = time.perf_counter()
    cfg = SyntheticConfig(n_flows=args.n, anomaly_rate=args.rate, difficulty=args.difficulty, seed=args.seed)
    flows = [r for r, _ in generate_flows(cfg)]
    intervals = [(p.start, p.end, p.label) for p in plan_windows(cfg)]
    data, _ = featurize(flows, WindowConfig(origin=0.0), intervals)
    n_train = round(len(data) * 7 / 13)
    n_val = round(len(data) * 3 / 13)
    data = split_train_val_test(data, (n_train, n_val, len(data) - n_train - n_val), args.seed)
    print(f"{len(flows)} packets -> {len(data)} windows ({int(data.labels.sum())} anomalous) "
          f"in {time.perf_counter() - t0:.1f}s")

    t0 = time.perf_counter()
    ci = "bootstrap" if args.ci == "boot" else "hanley_mcneil"
    table, _, _ = evaluate_all([ModelSpec(k) for k in TABLE_KINDS], data, seed=args.seed, ci=ci)
    print(table)
    print(f"fit + evaluate: {time.perf_counter() - t0:.1f}s")

    if args.cv:
        cv = cross_validate(ModelSpec("rf"), data, k=5, seed=args.seed)
        print(f"RF 5-fold AUC {cv.mean_auc:.4f} +/- {cv.std_auc:.4f}")


if __name__ == "__main__":
    main()
