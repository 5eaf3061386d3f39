"""Forward-process x parametrization x reverse-head grid on a toy sorting task."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .evaluation import sorting_metrics
from .models import Parametrization, Variant, build_model
from .sampler import SamplerConfig, sample_many
from .softrank import BridgeParams
from .tasks import generate_dataset
from .training import ForwardProcess, TrainConfig, train

REVERSE_MODEL_NAMES = {Variant.MLP: "cGPL", Variant.POINTER: "cGPL w/ Biaffine Pointer", Variant.TABULAR: "Tabular cGPL"}
FORWARD_NAMES = {ForwardProcess.SOFTRANK: "Soft-Rank", ForwardProcess.RIFFLE: "Riffle Shuffle"}
PARAM_NAMES = {Parametrization.SIGMA0: "x_0", Parametrization.SIGMA_PREV: "x_{t-1}"}


@dataclass(frozen=True)
class AblationSettings:
    n: int = 5
    train_count: int = 1000
    eval_count: int = 300
    epochs: int = 20
    lr: float = 0.1
    batch_size: int = 32
    repeats: int = 3
    seed: int = 0
    threads: int = 1


def run_cell(forward, parametrization, variant, bridge: BridgeParams, settings: AblationSettings) -> dict:
    """Train and evaluate one grid cell, averaging metrics over ``repeats`` training seeds."""
    forward, parametrization, variant = ForwardProcess(forward), Parametrization(parametrization), Variant(variant)
    test = generate_dataset("sorting", settings.n, settings.eval_count, settings.seed + 10_000)
    per_seed = []
    for r in range(settings.repeats):
        seed = settings.seed + r
        data = generate_dataset("sorting", settings.n, settings.train_count, seed)
        model = build_model(variant, settings.n, 1, n_steps=bridge.n_steps, seed=seed)
        cfg = TrainConfig(
            lr=settings.lr,
            batch_size=settings.batch_size,
            epochs=settings.epochs,
            bridge=bridge,
            seed=seed,
            parametrization=parametrization,
            forward=forward,
        )
        train(model, data.training_pairs(), cfg)
        sampler = SamplerConfig(bridge, model, forward=forward, parametrization=parametrization)
        out = sample_many([inst.features() for inst in test.instances], sampler, seed + 20_000, settings.threads)
        per_seed.append(sorting_metrics([p for p, _ in out], test.instances))
    row = {
        "Forward Process": FORWARD_NAMES[forward],
        "Reverse Model": REVERSE_MODEL_NAMES[variant],
        "Parametrization": PARAM_NAMES[parametrization],
    }
    for key in ("kendall_tau", "accuracy", "correctness"):
        row[key] = float(np.mean([m[key] for m in per_seed]))
    row["kendall_tau_per_seed"] = [m["kendall_tau"] for m in per_seed]
    return row


def run_ablation(forwards, parametrizations, variants, bridge: BridgeParams, settings: AblationSettings) -> list[dict]:
    return [
        run_cell(f, p, v, bridge, settings)
        for f, p, v in itertools.product(forwards, parametrizations, variants)
    ]
