"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .ablation import AblationSettings, run_ablation
from .evaluation import task_metrics
from .models import Variant, build_model, load_checkpoint, save_checkpoint
from .permutation import Permutation
from .records import make_header, read_jsonl, write_jsonl
from .sampler import SamplerConfig, sample_many
from .softrank import BridgeParams, Reference
from .tasks import generate_dataset, load_dataset, save_dataset
from .training import ForwardProcess, TrainConfig, train
from .validation import run_suite

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
TRAIN_EPOCHS = 50
OUT_ENV = "SRDIFF_OUT"

DEFAULTS = {
    "task": "sorting",
    "n": 5,
    "model": "mlp",
    "eta": 0.3,
    "steps": 20,
    "reference": "uniform",
    "forward": "softrank",
    "param": "sigma0",
    "seed": None,
    "out": None,
    "count": 100,
    "threads": 1,
    "trajectories": False,
    "data": None,
    "checkpoint": None,
    "samples": None,
    "epochs": None,
    "lr": 0.1,
    "batch_size": 32,
    "train_count": 1000,
    "eval_count": 300,
    "repeats": 3,
}

log = logging.getLogger("srdiff")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    a = p.add_argument
    a("--config", help="JSON file of option values; flags override it")
    a("--task", choices=["sorting", "tsp"], default=None, help="benchmark task (default sorting)")
    a("--n", type=int, default=None, help="items per instance (default 5)")
    a("--model", default=None, help="oracle, tabular, mlp or pointer (comma list for ablate)")
    a("--eta", type=float, default=None, help="bridge noise scale (default 0.3)")
    a("--steps", type=int, default=None, help="reverse steps K on a uniform grid (default 20)")
    a("--reference", choices=[r.value for r in Reference], default=None, help="reference distribution")
    a("--forward", default=None, help="softrank or riffle (comma list for ablate)")
    a("--param", default=None, help="sigma0 or sigma_prev (comma list for ablate)")
    a("--seed", type=int, default=None, help="base random seed (required)")
    a("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./runs)")
    a("--count", type=int, default=None, help="number of instances (default 100)")
    a("--threads", type=int, default=None, help="worker cap for sampling (results do not depend on it)")
    a("--trajectories", action="store_true", default=None, help="also write reverse trajectories")
    a("--data", default=None, help="dataset file from gen-data")
    a("--checkpoint", default=None, help="checkpoint file from train")
    a("--samples", default=None, help="samples file from sample")
    a("--epochs", type=int, default=None, help=f"training epochs (default {TRAIN_EPOCHS}; ablate {AblationSettings.epochs})")
    a("--lr", type=float, default=None, help="learning rate of plain gradient descent (default 0.1)")
    a("--batch-size", type=int, default=None, help="minibatch size (default 32)")
    a("--train-count", type=int, default=None, help="ablate: training instances per cell")
    a("--eval-count", type=int, default=None, help="ablate: held-out instances per cell")
    a("--repeats", type=int, default=None, help="ablate: training seeds averaged per cell")
    a("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srdiff", description="Soft-rank diffusion over permutations.")
    parser.add_argument("--version", action="version", version=f"srdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "generate a synthetic dataset",
        "train": "train a denoiser",
        "sample": "run the reverse sampler on a dataset",
        "eval": "score samples against ground truth",
        "validate-kernels": "numerical checks of the bridge kernels",
        "ablate": "forward x parametrization x head grid on toy sorting",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text, description=text))
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["seed"] is None:
        raise UsageError("--seed is required")
    if cfg["epochs"] is None:
        cfg["epochs"] = AblationSettings.epochs if args.command == "ablate" else TRAIN_EPOCHS
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV, "runs")
    if not cfg["eta"] > 0:
        raise UsageError(f"--eta must be positive, got {cfg['eta']}")
    if cfg["steps"] < 1 or cfg["n"] < 2 or cfg["count"] < 1 or cfg["threads"] < 1:
        raise UsageError("--steps, --count and --threads must be >= 1 and --n >= 2")
    for key in ("data", "checkpoint", "samples"):
        if cfg[key] is not None and not Path(cfg[key]).is_file():
            raise UsageError(f"--{key} file not found: {cfg[key]}")
    cfg["command"] = args.command
    return cfg


def _bridge(cfg) -> BridgeParams:
    return BridgeParams.uniform_grid(cfg["eta"], cfg["steps"], Reference(cfg["reference"]))


def _dataset(cfg):
    if cfg["data"]:
        ds = load_dataset(cfg["data"])
        if ds.n != cfg["n"] and cfg.get("_n_explicit"):
            raise UsageError(f"dataset has n={ds.n} but --n {cfg['n']} was given")
        return ds
    return generate_dataset(cfg["task"], cfg["n"], cfg["count"], cfg["seed"])


def _model(cfg, n, n_features):
    if cfg["checkpoint"]:
        model = load_checkpoint(cfg["checkpoint"])
        if model.n != n or model.n_features != n_features:
            raise UsageError(f"checkpoint expects n={model.n}, F={model.n_features}; data has n={n}, F={n_features}")
        return model
    return build_model(cfg["model"], n, n_features, n_steps=cfg["steps"], seed=cfg["seed"])


def _public(cfg) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def cmd_gen_data(cfg) -> int:
    ds = generate_dataset(cfg["task"], cfg["n"], cfg["count"], cfg["seed"])
    path = Path(cfg["out"]) / "dataset.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path, {"version": f"srdiff-{__version__}"})
    print(path)
    return EXIT_OK


def cmd_train(cfg) -> int:
    ds = _dataset(cfg)
    pairs = ds.training_pairs()
    if any(s is None for _, s in pairs):
        raise UsageError("dataset has no labels to train on")
    n_features = pairs[0][0].shape[1]
    model = _model(cfg, ds.n, n_features)
    if model.variant is Variant.ORACLE:
        raise UsageError("the oracle model has no parameters to train")
    tc = TrainConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        bridge=_bridge(cfg),
        seed=cfg["seed"],
        parametrization=cfg["param"],
        forward=cfg["forward"],
    )
    model, trace = train(model, pairs, tc)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    header = make_header("srdiff-checkpoint-meta", _public(cfg))
    save_checkpoint(model, out / "checkpoint.jsonl", extra={"config_hash": header["config_hash"], "task": ds.kind})
    write_jsonl(out / "loss_trace.jsonl", make_header("srdiff-loss-trace", _public(cfg)),
                ({"epoch": i, "loss": loss} for i, loss in enumerate(trace)))
    print(f"final loss {trace[-1]:.6f}")
    return EXIT_OK


def _run_sampler(cfg, ds):
    feats = [inst.features() for inst in ds.instances]
    model = _model(cfg, ds.n, feats[0].shape[1])
    sampler = SamplerConfig(
        _bridge(cfg), model, record_trajectory=bool(cfg["trajectories"]),
        forward=cfg["forward"], parametrization=cfg["param"],
    )
    return sample_many(feats, sampler, cfg["seed"], cfg["threads"])


def cmd_sample(cfg) -> int:
    ds = _dataset(cfg)
    results = _run_sampler(cfg, ds)
    out = Path(cfg["out"])
    header = make_header("srdiff-samples", _public(cfg), kind=ds.kind, n=ds.n)
    write_jsonl(out / "samples.jsonl", header,
                ({"index": i, "perm": list(p.ranks)} for i, (p, _) in enumerate(results)))
    if cfg["trajectories"]:
        recs = ({"index": i, **step.to_record()} for i, (_, traj) in enumerate(results) for step in traj)
        write_jsonl(out / "trajectories.jsonl", make_header("srdiff-trajectory", _public(cfg)), recs)
    print(out / "samples.jsonl")
    return EXIT_OK


def cmd_eval(cfg) -> int:
    ds = _dataset(cfg)
    if cfg["samples"]:
        header, recs = read_jsonl(cfg["samples"])
        if header.get("schema") != "srdiff-samples":
            raise UsageError(f"{cfg['samples']} is not a samples file")
        if len(recs) != len(ds.instances):
            raise UsageError(f"{len(recs)} samples for {len(ds.instances)} instances")
        preds = [Permutation(r["perm"]) for r in sorted(recs, key=lambda r: r["index"])]
    else:
        preds = [p for p, _ in _run_sampler(cfg, ds)]
    if any(p.n != ds.n for p in preds):
        raise UsageError("sample size does not match dataset")
    metrics = task_metrics(ds.kind, preds, ds.instances)
    out = Path(cfg["out"])
    write_jsonl(out / "metrics.jsonl", make_header("srdiff-metrics", _public(cfg), kind=ds.kind, n=ds.n), [metrics])
    for k, v in metrics.items():
        print(f"{k}\t{v}")
    return EXIT_OK


def cmd_validate_kernels(cfg) -> int:
    checks = run_suite(seed=cfg["seed"], eta=cfg["eta"] if cfg["_eta_explicit"] else 0.1)
    out = Path(cfg["out"])
    write_jsonl(out / "kernels_report.jsonl", make_header("srdiff-kernel-report", _public(cfg)),
                [c.to_record() for c in checks])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}\t{c.name}\t{json.dumps(c.to_record(), sort_keys=True)}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


def _split(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def cmd_ablate(cfg) -> int:
    settings = AblationSettings(
        n=cfg["n"], train_count=cfg["train_count"], eval_count=cfg["eval_count"], epochs=cfg["epochs"],
        lr=cfg["lr"], batch_size=cfg["batch_size"], repeats=cfg["repeats"], seed=cfg["seed"], threads=cfg["threads"],
    )
    try:
        forwards = [ForwardProcess(f) for f in _split(cfg["forward"])]
        params = [p for p in _split(cfg["param"])]
        variants = [Variant(v) for v in _split(cfg["model"])]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if Variant.ORACLE in variants:
        raise UsageError("the oracle cannot be ablated")
    rows = run_ablation(forwards, params, variants, _bridge(cfg), settings)
    out = Path(cfg["out"])
    write_jsonl(out / "ablation.jsonl", make_header("srdiff-ablation", _public(cfg)), rows)
    cols = ["Forward Process", "Reverse Model", "Parametrization", "kendall_tau", "accuracy", "correctness"]
    print("\t".join(cols))
    for row in rows:
        print("\t".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "validate-kernels": cmd_validate_kernels,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        cfg["_n_explicit"] = args.n is not None
        cfg["_eta_explicit"] = args.eta is not None
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"srdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as exc:
        print(f"srdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
