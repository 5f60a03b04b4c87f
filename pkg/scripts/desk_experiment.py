"""Run the desk-scale experiment end to end and write its results to a directory.

    python3 scripts/desk_experiment.py --out runs/desk [--config overrides.json]

Writes surrogate.msnn, generator.msnn (with their training curves), designs for the three
inverse designers as .msds files, per-design CSVs and a summary.json.
"""
import argparse
import csv
import dataclasses
import json
import logging
import time
from pathlib import Path

import numpy as np

from metasurf import experiment
from metasurf.config import TrainConfig
from metasurf.data import Dataset, write_dataset
from metasurf.metrics import evaluate_designs
from metasurf.nn import save_checkpoint
from metasurf.oracle import simulate


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--config", type=Path, help="JSON file of TrainConfig fields")
    ap.add_argument("--gan-batch", type=int, default=32, help="generator batch (default 32, sized for one core)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    cfg = dataclasses.replace(cfg, gan_batch=args.gan_batch)
    args.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    train, test = experiment.split_data(cfg)
    sur = experiment.fit_surrogate(cfg, train, test)
    save_checkpoint(args.out / "surrogate.msnn", sur.model.state_dict())
    write_csv(args.out / "surrogate.msnn.csv", ["epoch", "train_l1", "test_l1"],
              [(i + 1, a, b) for i, (a, b) in enumerate(zip(sur.report.train_l1, sur.report.test_l1))])
    gen = experiment.fit_generator(cfg, train, sur.model)
    save_checkpoint(args.out / "generator.msnn", gen.model.state_dict())
    gen.report.write_csv(args.out / "generator.msnn.csv")
    cmp_ = experiment.compare_inverse(cfg, test, sur.model, gen.model)
    total = time.perf_counter() - t0

    designs = {"xgan": np.stack([r.pattern for r in cmp_.xgan]), "random": cmp_.random,
               "sa": np.stack([r.pattern for r in cmp_.sa])}
    for name, pats in designs.items():
        responses = simulate(pats)
        write_dataset(args.out / f"{name}.msds", Dataset(pats, responses))
        evals = evaluate_designs(cmp_.targets, responses)
        write_csv(args.out / f"{name}_per_design.csv", ["design", "mae", "mse", "var"],
                  [(i, e.mae, e.mse, e.var) for i, e in enumerate(evals)])
    np.savetxt(args.out / "targets.txt", cmp_.targets, fmt="%.9g")

    summary = {
        "config": dataclasses.asdict(cfg),
        "surrogate": {"seconds": sur.seconds, "test_l1": sur.report.test_l1[-1], "acc_ave": sur.report.acc_ave},
        "generator": {"seconds": gen.seconds},
        "reports": {name: dataclasses.asdict(rep) for name, rep in cmp_.reports.items()},
        "sa_seconds_per_design": cmp_.sa_seconds_per_design,
        "generator_seconds_per_sample": cmp_.generator_seconds_per_sample,
        "speed_ratio": cmp_.speed_ratio,
        "total_seconds": total,
    }
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary["reports"], indent=2))


if __name__ == "__main__":
    main()
