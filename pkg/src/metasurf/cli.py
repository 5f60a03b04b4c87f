"""Command line entry point: ``python3 -m metasurf <command> ...``."""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path

EXIT_USAGE = 2

log = logging.getLogger("metasurf")


class UsageError(Exception):
    """Bad or missing command line input; exits with status 2."""


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metasurf", description="Metasurface inverse design toolkit")
    p.add_argument("--config", help="JSON run configuration (flat TrainConfig keys)")
    p.add_argument("--seed", type=int, help="override every seed in the configuration")
    p.add_argument("--threads", type=int, help="BLAS thread count (applied before numpy loads)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample random patterns and label them with the oracle")
    g.add_argument("--samples", type=int)
    g.add_argument("--out", required=True)

    s = sub.add_parser("train-surrogate", help="fit the forward surrogate")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--curves", help="per-epoch loss CSV (default: <out>.csv)")

    x = sub.add_parser("train-xgan", help="train the generator against a frozen surrogate")
    x.add_argument("--data", required=True)
    x.add_argument("--surrogate")
    x.add_argument("--out", required=True)
    x.add_argument("--curves", help="per-step loss CSV (default: <out>.csv)")

    d = sub.add_parser("design", help="generate a pattern for a target response")
    d.add_argument("--model", required=True)
    d.add_argument("--target", required=True,
                   help="target file (dataset or text rows of 100 values) or an index into the test split")
    d.add_argument("--data", help="dataset whose test split an integer --target indexes")
    d.add_argument("--tau", type=float)
    d.add_argument("--attempts", type=int)
    d.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="score designs against targets")
    e.add_argument("--designs", required=True)
    e.add_argument("--targets", required=True)
    e.add_argument("--mode", choices=("oracle", "surrogate"), default="oracle")
    e.add_argument("--surrogate", help="surrogate checkpoint for --mode surrogate")
    e.add_argument("--per-design", help="per-design MAE CSV")
    e.add_argument("--report", help="write the metrics JSON here as well as stdout")

    b = sub.add_parser("baseline-sa", help="simulated annealing designs scored by the surrogate")
    b.add_argument("--targets", required=True)
    b.add_argument("--surrogate")
    b.add_argument("--out", required=True)
    b.add_argument("--traces", help="directory for per-target trace CSVs")
    return p


# ---------------------------------------------------------------------------
# helpers (imports are deferred so --threads can take effect)
# ---------------------------------------------------------------------------


def _require_file(value, flag: str) -> Path:
    if not value:
        raise UsageError(f"{flag} is required")
    path = Path(value)
    if not path.is_file():
        raise UsageError(f"{flag}: no such file {value}")
    return path


def _load_surrogate(path):
    from .nn import load_checkpoint
    from .surrogate import FResNet
    model = FResNet()
    model.load_state_dict(load_checkpoint(path))
    model.eval()
    return model


def _load_generator(path, cfg):
    from .nn import load_checkpoint
    from .xgan import Generator
    gen = Generator(cfg.xgan_config().generator)
    gen.load_state_dict(load_checkpoint(path))
    gen.eval()
    return gen


def read_targets(path):
    """Target responses [M, 100] from a dataset file or whitespace/comma separated text rows."""
    import numpy as np
    from .data import MAGIC, read_dataset
    from .oracle import N_FREQ
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_dataset(path).responses.astype(np.float64)
    try:
        text = path.read_text(encoding="utf-8").replace(",", " ")
        rows = np.loadtxt(io.StringIO(text), ndmin=2)
    except (ValueError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot parse targets in {path}: {exc}") from None
    if rows.shape[1] != N_FREQ or not np.all(np.isfinite(rows)):
        raise UsageError(f"targets in {path} must be rows of {N_FREQ} finite values, got shape {rows.shape}")
    return rows


def _write_validated(path, ds):
    """Write a dataset and confirm it reads back to the same bytes with valid patterns."""
    from .data import encode, read_dataset, write_dataset
    from .pattern import validate_pattern
    write_dataset(path, ds)
    back = read_dataset(path)
    if encode(back) != encode(ds):
        raise RuntimeError(f"{path} did not round-trip")
    for p in back.patterns:
        validate_pattern(p)


def _write_csv(path, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args, cfg) -> dict:
    from .data import generate_dataset
    n = args.samples if args.samples is not None else cfg.samples
    if n < 1:
        raise UsageError("--samples must be >= 1")
    ds = generate_dataset(n, cfg.data_seed)
    _write_validated(args.out, ds)
    return {"samples": n, "out": args.out}


def cmd_train_surrogate(args, cfg) -> dict:
    from .data import read_dataset
    from .nn import save_checkpoint
    from .surrogate import train_surrogate
    train, test = read_dataset(_require_file(args.data, "--data")).split(cfg.split)
    model, rep = train_surrogate(
        train.patterns, train.responses, test.patterns, test.responses,
        epochs=cfg.surrogate_epochs, batch=cfg.surrogate_batch, lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2), seed=cfg.surrogate_seed)
    save_checkpoint(args.out, model.state_dict())
    curves = args.curves or args.out + ".csv"
    _write_csv(curves, ["epoch", "train_l1", "test_l1"],
               [[k, repr(a), repr(b)] for k, (a, b) in enumerate(zip(rep.train_l1, rep.test_l1))])
    return {"out": args.out, "curves": curves, "test_mae_ave": rep.mae_ave, "acc_ave": rep.acc_ave,
            "r2": rep.r2, "mean_predictor_mae": rep.baseline_mae}


def cmd_train_xgan(args, cfg) -> dict:
    from .data import read_dataset
    from .nn import save_checkpoint
    from .xgan import train_xgan
    surrogate = _load_surrogate(_require_file(args.surrogate, "--surrogate"))
    train, _ = read_dataset(_require_file(args.data, "--data")).split(cfg.split)
    G, _, rep = train_xgan(train.patterns, train.responses, surrogate, cfg.xgan_config())
    save_checkpoint(args.out, G.state_dict())
    curves = args.curves or args.out + ".csv"
    rep.write_csv(curves)
    return {"out": args.out, "curves": curves, "steps": len(rep.step),
            "final_L_G": rep.loss_g[-1], "final_L_D": rep.loss_d[-1], "seconds": rep.seconds}


def _resolve_targets(args, cfg):
    if args.target.lstrip("-").isdigit():
        from .data import read_dataset
        _, test = read_dataset(_require_file(args.data, "--data")).split(cfg.split)
        k = int(args.target)
        if not 0 <= k < len(test):
            raise UsageError(f"--target index {k} outside the test split of {len(test)} records")
        return test.responses[k:k + 1].astype("float64")
    return read_targets(_require_file(args.target, "--target"))


def cmd_design(args, cfg) -> dict:
    import time

    import numpy as np
    from .data import Dataset
    from .oracle import simulate
    from .pattern import to_text
    from .xgan import design
    G = _load_generator(_require_file(args.model, "--model"), cfg)
    targets = _resolve_targets(args, cfg)
    tau = cfg.tau if args.tau is None else args.tau
    attempts = cfg.max_attempts if args.attempts is None else args.attempts
    t0 = time.perf_counter()
    results = [design(t, G, tau=tau, max_attempts=attempts, seed=cfg.gan_seed) for t in targets]
    seconds = (time.perf_counter() - t0) / len(targets)
    pats = np.stack([r.pattern for r in results])
    _write_validated(args.out, Dataset(pats, simulate(pats)))
    np.savetxt(args.out + ".target.txt", targets, fmt="%.9g")
    for r in results:
        print(to_text(r.pattern))
        print()
    return {"out": args.out, "targets": args.out + ".target.txt",
            "mae": [r.mae for r in results], "attempts": [r.attempts for r in results],
            "seconds_per_design": seconds}


def cmd_evaluate(args, cfg) -> dict:
    from .data import read_dataset
    from .errors import ContractError
    from .metrics import evaluate_designs, report
    from .oracle import simulate
    from .surrogate import predict
    designs = read_dataset(_require_file(args.designs, "--designs"))
    targets = read_targets(_require_file(args.targets, "--targets"))
    if len(designs) != len(targets):
        raise ContractError(f"{len(designs)} designs but {len(targets)} targets")
    if args.mode == "oracle":
        achieved = simulate(designs.patterns)
    else:
        achieved = predict(_load_surrogate(_require_file(args.surrogate, "--surrogate")), designs.patterns)
    evals = evaluate_designs(targets, achieved)
    rep = report(evals)
    if args.per_design:
        _write_csv(args.per_design, ["design", "mae", "mse", "var"],
                   [[k, repr(e.mae), repr(e.mse), repr(e.var)] for k, e in enumerate(evals)])
    if args.report:
        Path(args.report).write_text(rep.to_json() + "\n")
    return json.loads(rep.to_json())


def cmd_baseline_sa(args, cfg) -> dict:
    from .data import Dataset
    from .oracle import simulate
    from .sa import sa_design_many
    surrogate = _load_surrogate(_require_file(args.surrogate, "--surrogate"))
    targets = read_targets(_require_file(args.targets, "--targets"))
    results = sa_design_many(targets, surrogate, cfg.sa_config())
    import numpy as np
    pats = np.stack([r.pattern for r in results])
    _write_validated(args.out, Dataset(pats, simulate(pats)))
    if args.traces:
        Path(args.traces).mkdir(parents=True, exist_ok=True)
        for k, r in enumerate(results):
            r.trace.write_csv(Path(args.traces) / f"trace_{k:04d}.csv")
    return {"out": args.out, "designs": len(results),
            "seconds_per_design": results[0].seconds if results else 0.0,
            "surrogate_mae": [r.objective for r in results]}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-surrogate": cmd_train_surrogate,
    "train-xgan": cmd_train_xgan,
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "baseline-sa": cmd_baseline_sa,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    from .config import TrainConfig
    from .errors import ConfigError, ContractError, FormatError, ValidationError
    try:
        cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        summary = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"metasurf {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ContractError, FormatError, ValidationError, OSError) as exc:
        print(f"metasurf {args.command}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
