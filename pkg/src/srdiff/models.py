"""Clean-permutation predictors p(sigma_0 | X_t, t) with hand-written gradients.

Every model scores the items of an *observed* instance, i.e. the items laid out
in their noisy order. Logits, prefixes and targets all index observed
positions 0..N-1; mapping back to original item ids is the caller's job.

Training rows are (example, stage) pairs under teacher forcing: row ``i`` of
an example sees the first ``i`` target positions as its prefix.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import MASK_VALUE, log_softmax

CHECKPOINT_FORMAT = "srdiff-checkpoint"
CHECKPOINT_VERSION = 1
ORACLE_LOGIT = 30.0
TIME_EMBED_DIM = 8


class Variant(str, enum.Enum):
    ORACLE = "oracle"
    TABULAR = "tabular"
    MLP = "mlp"
    POINTER = "pointer"


class Parametrization(str, enum.Enum):
    SIGMA0 = "sigma0"
    SIGMA_PREV = "sigma_prev"


class UninitializedModelError(RuntimeError):
    pass


@dataclass
class ObservedBatch:
    """Items in observed order, their times, and target sequences.

    items: (B, N, F) features; t: (B,); targets: (B, N) observed positions in
    the order the target permutation lists them.
    """

    items: np.ndarray
    t: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.items.ndim != 3 or self.targets.shape != self.items.shape[:2]:
            raise ValueError(f"bad batch shapes {self.items.shape}, {self.targets.shape}")
        if len(self.t) != len(self.items):
            raise ValueError("one time per example is required")
        if len(self.items) == 0:
            raise ValueError("empty batch")


def time_embedding(t) -> np.ndarray:
    """Sinusoidal features of shape (..., 8)."""
    t = np.asarray(t, dtype=float)[..., None]
    freqs = 0.5 * math.pi * 2.0 ** np.arange(TIME_EMBED_DIM // 2)
    return np.concatenate([np.sin(freqs * t), np.cos(freqs * t)], axis=-1)


def position_encoding(n: int) -> np.ndarray:
    pos = np.arange(n) / (n - 1)
    return np.stack([pos, np.sin(math.pi * pos), np.cos(math.pi * pos)], axis=-1)


def _prefix_context(targets: np.ndarray, n: int):
    """Teacher-forced selection matrices, each (B, N_stages, N).

    chosen: items already selected; last / first: one-hot of the most recent
    and the first selected item (all zero at stage 0).
    """
    B = targets.shape[0]
    S = targets.shape[1]
    onehot = np.zeros((B, S, n))
    onehot[np.arange(B)[:, None], np.arange(S)[None, :], targets] = 1.0
    chosen = np.cumsum(onehot, axis=1) - onehot
    last = np.zeros_like(onehot)
    last[:, 1:] = onehot[:, :-1]
    first = np.zeros_like(onehot)
    first[:, 1:] = onehot[:, :1]
    return chosen, last, first


def _single_row_context(prefix, n: int):
    chosen = np.zeros((1, 1, n))
    last = np.zeros((1, 1, n))
    first = np.zeros((1, 1, n))
    prefix = list(prefix)
    if prefix:
        chosen[0, 0, prefix] = 1.0
        last[0, 0, prefix[-1]] = 1.0
        first[0, 0, prefix[0]] = 1.0
    return chosen, last, first


def masked_cross_entropy(logits, chosen, targets):
    """Mean over examples of the summed stagewise NLL, and its logit gradient."""
    B, S, n = logits.shape
    masked = np.where(chosen > 0, MASK_VALUE, logits)
    logp = log_softmax(masked, axis=-1)
    bi, si = np.arange(B)[:, None], np.arange(S)[None, :]
    nll = -logp[bi, si, targets].sum() / B
    dlogits = np.exp(logp)
    dlogits[bi, si, targets] -= 1.0
    dlogits /= B
    return float(nll), dlogits


class Denoiser:
    """Base class: a flat parameter vector with named views."""

    variant: Variant
    prefix_agnostic = False

    def __init__(self, n: int, n_features: int):
        if n < 2:
            raise ValueError(f"n must be >= 2, got {n}")
        self.n = n
        self.n_features = n_features
        self.params: np.ndarray | None = None
        self._shapes: dict[str, tuple[int, ...]] = {}

    # parameter bookkeeping
    def _declare(self, shapes: dict[str, tuple[int, ...]]):
        self._shapes = shapes
        self.params = np.zeros(sum(math.prod(s) for s in shapes.values()))

    def _views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, pos = {}, 0
        for name, shape in self._shapes.items():
            size = math.prod(shape)
            out[name] = flat[pos : pos + size].reshape(shape)
            pos += size
        return out

    @property
    def p(self) -> dict[str, np.ndarray]:
        if self.params is None:
            raise UninitializedModelError(f"{self.variant.value} model has no parameters")
        # views stay valid under in-place updates; rebuild if the array is swapped
        cached = getattr(self, "_view_cache", None)
        if cached is None or cached[0] is not self.params:
            self._view_cache = (self.params, self._views(self.params))
        return self._view_cache[1]

    def arch(self) -> dict:
        return {"n": self.n, "n_features": self.n_features}

    # scoring
    def logits(self, items, t, chosen, last, first):
        out, _ = self._forward(items, t, chosen, last, first)
        return out

    def stage_scores(self, items, prefix, t) -> np.ndarray:
        """Stage logits over observed positions given the prefix so far."""
        if self.params is None:
            raise UninitializedModelError(f"{self.variant.value} model has no parameters")
        items = np.asarray(items, dtype=float)
        if items.ndim == 1:
            items = items[:, None]
        if len(prefix) >= self.n:
            raise ValueError("prefix already covers every item")
        ctx = _single_row_context(prefix, self.n)
        return self.logits(items[None], np.array([t], dtype=float), *ctx)[0, 0]

    def static_scores(self, items, t):
        raise TypeError("contextual model has no static score matrix")

    def loss_and_grad(self, batch: ObservedBatch) -> tuple[float, np.ndarray]:
        chosen, last, first = _prefix_context(batch.targets, self.n)
        logits, cache = self._forward(batch.items, batch.t, chosen, last, first)
        loss, dlogits = masked_cross_entropy(logits, chosen, batch.targets)
        return loss, self._backward(cache, dlogits)

    def loss(self, batch: ObservedBatch) -> float:
        chosen, last, first = _prefix_context(batch.targets, self.n)
        logits, _ = self._forward(batch.items, batch.t, chosen, last, first)
        return masked_cross_entropy(logits, chosen, batch.targets)[0]

    def _forward(self, items, t, chosen, last, first):
        raise NotImplementedError

    def _backward(self, cache, dlogits) -> np.ndarray:
        raise NotImplementedError


class OracleDenoiser(Denoiser):
    """Puts a saturated logit on the smallest remaining item value."""

    variant = Variant.ORACLE

    def __init__(self, n: int, n_features: int = 1):
        super().__init__(n, n_features)
        self.params = np.zeros(0)

    def _forward(self, items, t, chosen, last, first):
        values = np.asarray(items, dtype=float)[..., 0]  # (B, N)
        B, S = chosen.shape[:2]
        v = np.broadcast_to(values[:, None, :], (B, S, self.n))
        # stable argmin over remaining items
        v = np.where(chosen > 0, np.inf, v)
        nxt = np.argmin(v, axis=-1)
        logits = np.zeros((B, S, self.n))
        logits[np.arange(B)[:, None], np.arange(S)[None, :], nxt] = ORACLE_LOGIT
        return logits, None

    def _backward(self, cache, dlogits):
        return np.zeros(0)


def _lehmer_index(order) -> int:
    order = list(order)
    idx = 0
    n = len(order)
    for i, x in enumerate(order):
        smaller = sum(1 for y in order[i + 1 :] if y < x)
        idx += smaller * math.factorial(n - 1 - i)
    return idx


class TabularDenoiser(Denoiser):
    """Free logits per (time bucket, observed label ordering, prefix).

    The observed ordering is canonicalized by ranking feature column 0 of the
    observed items, so integer labels and raw sort keys both work.
    """

    variant = Variant.TABULAR
    MAX_N = 5

    def __init__(self, n: int, n_steps: int, n_features: int = 1):
        if n > self.MAX_N:
            raise ValueError(f"tabular model supports n <= {self.MAX_N}")
        super().__init__(n, n_features)
        self.n_steps = n_steps
        prefixes = [p for length in range(n) for p in itertools.permutations(range(n), length)]
        self._prefix_index = {p: i for i, p in enumerate(prefixes)}
        self._declare({"table": (n_steps + 1, math.factorial(n), len(prefixes), n)})

    def arch(self):
        return {**super().arch(), "n_steps": self.n_steps}

    def _bucket(self, t):
        return np.clip(np.rint(np.asarray(t) * self.n_steps).astype(int), 0, self.n_steps)

    def _order(self, items) -> int:
        ranks = np.argsort(np.argsort(np.asarray(items, dtype=float)[:, 0], kind="stable"), kind="stable")
        return _lehmer_index(ranks)

    def stage_scores(self, items, prefix, t):
        items = np.asarray(items, dtype=float)
        if items.ndim == 1:
            items = items[:, None]
        key = (self._bucket(t), self._order(items), self._prefix_index[tuple(int(x) for x in prefix)])
        return self.p["table"][key].copy()

    def _keys(self, batch: ObservedBatch):
        B, S = batch.targets.shape
        buckets = self._bucket(batch.t)
        orders = np.array([self._order(x) for x in batch.items])
        pidx = np.array([
            [self._prefix_index[tuple(int(x) for x in seq[:s])] for s in range(S)]
            for seq in batch.targets
        ])
        return (
            np.broadcast_to(buckets[:, None], (B, S)),
            np.broadcast_to(orders[:, None], (B, S)),
            pidx,
        )

    def loss_and_grad(self, batch):
        chosen, _, _ = _prefix_context(batch.targets, self.n)
        keys = self._keys(batch)
        loss, dlogits = masked_cross_entropy(self.p["table"][keys], chosen, batch.targets)
        grad = np.zeros_like(self.params)
        np.add.at(self._views(grad)["table"], keys, dlogits)
        return loss, grad

    def loss(self, batch):
        return self.loss_and_grad(batch)[0]


def _dense_init(rng, fan_out, fan_in):
    return rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)


class MLPDenoiser(Denoiser):
    """Two tanh layers over the flattened observed instance and a linear N-way head.

    Input per row: item features in observed order, multi-hot of the chosen
    positions, the prefix length / N, and the time embedding.
    """

    variant = Variant.MLP

    def __init__(self, n: int, n_features: int = 1, hidden: int = 64, seed: int = 0):
        super().__init__(n, n_features)
        self.hidden = hidden
        d_in = n * n_features + n + 1 + TIME_EMBED_DIM
        self._declare({
            "W1": (hidden, d_in), "b1": (hidden,),
            "W2": (hidden, hidden), "b2": (hidden,),
            "W3": (n, hidden), "b3": (n,),
        })
        rng = np.random.default_rng(seed)
        p = self.p
        p["W1"][:] = _dense_init(rng, hidden, d_in)
        p["W2"][:] = _dense_init(rng, hidden, hidden)

    def arch(self):
        return {**super().arch(), "hidden": self.hidden}

    def _forward(self, items, t, chosen, last, first):
        p = self.p
        items = np.asarray(items, dtype=float)
        B, S = chosen.shape[:2]
        flat = np.broadcast_to(items.reshape(B, 1, -1), (B, S, items.shape[1] * items.shape[2]))
        count = chosen.sum(-1, keepdims=True) / self.n
        temb = np.broadcast_to(time_embedding(t)[:, None, :], (B, S, TIME_EMBED_DIM))
        u = np.concatenate([flat, chosen, count, temb], axis=-1)
        h1 = np.tanh(u @ p["W1"].T + p["b1"])
        h2 = np.tanh(h1 @ p["W2"].T + p["b2"])
        logits = h2 @ p["W3"].T + p["b3"]
        return logits, (u, h1, h2)

    def _backward(self, cache, dlogits):
        u, h1, h2 = cache
        p = self.p
        grad = np.zeros_like(self.params)
        g = self._views(grad)
        g["W3"][:] = np.einsum("bsn,bsh->nh", dlogits, h2)
        g["b3"][:] = dlogits.sum((0, 1))
        dz2 = (dlogits @ p["W3"]) * (1.0 - h2**2)
        g["W2"][:] = np.einsum("bsh,bsk->hk", dz2, h1)
        g["b2"][:] = dz2.sum((0, 1))
        dz1 = (dz2 @ p["W2"]) * (1.0 - h1**2)
        g["W1"][:] = np.einsum("bsh,bsk->hk", dz1, u)
        g["b1"][:] = dz1.sum((0, 1))
        return grad


class PointerDenoiser(Denoiser):
    """Per-item tanh encoder, prefix-conditioned decoder, bi-affine pointer head.

    The decoder reads the mean item embedding, the summed embeddings of the
    chosen items, the prefix length / N, the embeddings of the first and the
    most recent chosen item, and the time embedding.
    """

    variant = Variant.POINTER

    def __init__(self, n: int, n_features: int = 1, width: int = 32, hidden: int = 64, seed: int = 0):
        super().__init__(n, n_features)
        self.width, self.hidden = width, hidden
        d = width
        d_item = n_features + 3 + TIME_EMBED_DIM
        d_ctx = 4 * d + 1 + TIME_EMBED_DIM
        self._declare({
            "A": (d, d_item), "a": (d,),
            "D1": (hidden, d_ctx), "g1": (hidden,),
            "D2": (d, hidden), "g2": (d,),
            "W": (d, d), "u": (d,), "v": (d,), "b": (1,),
        })
        rng = np.random.default_rng(seed)
        p = self.p
        p["A"][:] = _dense_init(rng, d, d_item)
        p["D1"][:] = _dense_init(rng, hidden, d_ctx)
        p["D2"][:] = _dense_init(rng, d, hidden)

    def arch(self):
        return {**super().arch(), "width": self.width, "hidden": self.hidden}

    def _forward(self, items, t, chosen, last, first):
        p = self.p
        items = np.asarray(items, dtype=float)
        B, n, _ = items.shape
        S = chosen.shape[1]
        temb = time_embedding(t)  # (B, 8)
        a_in = np.concatenate([
            items,
            np.broadcast_to(position_encoding(n), (B, n, 3)),
            np.broadcast_to(temb[:, None, :], (B, n, TIME_EMBED_DIM)),
        ], axis=-1)
        e = np.tanh(a_in @ p["A"].T + p["a"])  # (B, N, d)
        mean_sel = np.full((B, S, n), 1.0 / n)
        sels = (mean_sel, chosen, last, first)
        ctx_parts = [np.einsum("bsk,bkd->bsd", m, e) for m in sels]
        count = chosen.sum(-1, keepdims=True) / n
        c = np.concatenate(ctx_parts + [count, np.broadcast_to(temb[:, None, :], (B, S, TIME_EMBED_DIM))], axis=-1)
        h = np.tanh(c @ p["D1"].T + p["g1"])
        dstate = np.tanh(h @ p["D2"].T + p["g2"])  # (B, S, d)
        We = e @ p["W"].T  # rows W e_k
        logits = (
            np.einsum("bsd,bkd->bsk", dstate, We)
            + (dstate @ p["u"])[..., None]
            + (e @ p["v"])[:, None, :]
            + p["b"][0]
        )
        return logits, (a_in, e, sels, c, h, dstate, We)

    def _backward(self, cache, dlogits):
        a_in, e, sels, c, h, dstate, We = cache
        p = self.p
        d = self.width
        grad = np.zeros_like(self.params)
        g = self._views(grad)
        # bi-affine head
        g["W"][:] = np.einsum("bsk,bsp,bkq->pq", dlogits, dstate, e)
        row_sum = dlogits.sum(-1)  # (B, S)
        col_sum = dlogits.sum(1)  # (B, N)
        g["u"][:] = np.einsum("bs,bsp->p", row_sum, dstate)
        g["v"][:] = np.einsum("bk,bkq->q", col_sum, e)
        g["b"][0] = dlogits.sum()
        d_dstate = np.einsum("bsk,bkd->bsd", dlogits, We) + row_sum[..., None] * p["u"]
        de = np.einsum("bsk,bsp->bkp", dlogits, dstate @ p["W"]) + col_sum[..., None] * p["v"]
        # decoder
        dz2 = d_dstate * (1.0 - dstate**2)
        g["D2"][:] = np.einsum("bsd,bsh->dh", dz2, h)
        g["g2"][:] = dz2.sum((0, 1))
        dz1 = (dz2 @ p["D2"]) * (1.0 - h**2)
        g["D1"][:] = np.einsum("bsh,bsc->hc", dz1, c)
        g["g1"][:] = dz1.sum((0, 1))
        dc = dz1 @ p["D1"]
        for j, m in enumerate(sels):
            de += np.einsum("bsk,bsd->bkd", m, dc[..., j * d : (j + 1) * d])
        # encoder
        dze = de * (1.0 - e**2)
        g["A"][:] = np.einsum("bkd,bka->da", dze, a_in)
        g["a"][:] = dze.sum((0, 1))
        return grad


def build_model(variant, n: int, n_features: int = 1, n_steps: int = 20, seed: int = 0, **arch) -> Denoiser:
    variant = Variant(variant)
    if variant is Variant.ORACLE:
        return OracleDenoiser(n, n_features)
    if variant is Variant.TABULAR:
        return TabularDenoiser(n, n_steps, n_features)
    if variant is Variant.MLP:
        return MLPDenoiser(n, n_features, seed=seed, **arch)
    return PointerDenoiser(n, n_features, seed=seed, **arch)


def save_checkpoint(model: Denoiser, path, extra: dict | None = None) -> None:
    """Two JSON lines: an architecture header, then the flat parameters."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "variant": model.variant.value,
        "arch": model.arch(),
        "n_params": int(model.params.size),
    }
    if extra:
        header["meta"] = extra
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(json.dumps({"params": model.params.tolist()}) + "\n")


def load_checkpoint(path) -> Denoiser:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    arch = dict(header["arch"])
    n, n_features = arch.pop("n"), arch.pop("n_features")
    n_steps = arch.pop("n_steps", 20)
    model = build_model(header["variant"], n, n_features, n_steps=n_steps, **arch)
    params = np.asarray(json.loads(lines[1])["params"], dtype=float)
    if params.size != model.params.size:
        raise ValueError(f"checkpoint has {params.size} parameters, architecture needs {model.params.size}")
    model.params = params
    return model
