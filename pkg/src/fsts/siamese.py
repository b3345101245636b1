"""Siamese 1-D CNN: shared embedding blocks plus a weighted-L1 relational head.

Each embedding block applies ``conv('same') -> ReLU -> batch norm -> dropout
-> max pool``; the last block's feature map is flattened time-major.  The
relational head scores a pair as ``sigmoid(w . |f(a) - f(b)| + b)``.
"""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neural as nn
from .data import Dataset
from .pairs import PairSet, batch_pairs
from .seeding import rng_for

log = logging.getLogger(__name__)

DEFAULT_BLOCKS = ((128, 7, 3), (64, 5, 3), (64, 5, 2))


@dataclass(frozen=True)
class EmbeddingConfig:
    blocks: tuple = DEFAULT_BLOCKS  # (filter_count, filter_length, pool_size) per block
    dropout_rate: float = 0.2
    input_length: int = 187

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(v) for v in b) for b in self.blocks))
        if not self.blocks:
            raise ValueError("at least one block is required")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        t = self.input_length
        for filters, k, pool in self.blocks:
            if min(filters, k, pool) < 1:
                raise ValueError(f"block {(filters, k, pool)} has a non-positive entry")
            if k > t or pool > t:
                raise ValueError(f"block {(filters, k, pool)} does not fit time extent {t}")
            t //= pool

    def time_extents(self) -> list[int]:
        ts = [self.input_length]
        for _, _, pool in self.blocks:
            ts.append(ts[-1] // pool)
        return ts

    @property
    def embedding_dim(self) -> int:
        return self.blocks[-1][0] * self.time_extents()[-1]

    def to_dict(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks], "dropout_rate": self.dropout_rate,
                "input_length": self.input_length}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingConfig":
        return cls(tuple(tuple(b) for b in d["blocks"]), float(d["dropout_rate"]), int(d["input_length"]))


class SiameseNet:
    """Parameters and forward/backward passes of the Siamese network.

    ``params`` holds the learnable :class:`~fsts.neural.Param` objects and
    ``buffers`` the batch-norm running statistics, both keyed by stable names
    that the checkpoint format reuses.
    """

    def __init__(self, config: EmbeddingConfig = EmbeddingConfig(), seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = rng_for(seed, "init")
        self.params: dict[str, nn.Param] = {}
        self.buffers: dict[str, np.ndarray] = {}
        c_in = 1
        for i, (filters, k, _) in enumerate(config.blocks):
            limit = math.sqrt(6.0 / (k * c_in))
            self._add(f"block{i}.conv.weight", rng.uniform(-limit, limit, (k, c_in, filters)))
            self._add(f"block{i}.conv.bias", np.zeros(filters))
            self._add(f"block{i}.bn.gamma", np.ones(filters))
            self._add(f"block{i}.bn.beta", np.zeros(filters))
            self.buffers[f"block{i}.bn.running_mean"] = np.zeros(filters, self.dtype)
            self.buffers[f"block{i}.bn.running_var"] = np.ones(filters, self.dtype)
            c_in = filters
        d = config.embedding_dim
        limit = math.sqrt(6.0 / d)
        self._add("head.weight", rng.uniform(-limit, limit, (d, 1)))
        self._add("head.bias", np.zeros(1))

    def _add(self, name, value):
        self.params[name] = nn.Param(name, np.asarray(value, dtype=self.dtype))

    def p(self, name) -> np.ndarray:
        return self.params[name].value

    def tensors(self) -> dict[str, np.ndarray]:
        """Every learnable array and buffer, in checkpoint order."""
        out = {}
        for i in range(len(self.config.blocks)):
            for n in ("conv.weight", "conv.bias", "bn.gamma", "bn.beta"):
                out[f"block{i}.{n}"] = self.params[f"block{i}.{n}"].value
            for n in ("bn.running_mean", "bn.running_var"):
                out[f"block{i}.{n}"] = self.buffers[f"block{i}.{n}"]
        out["head.weight"] = self.params["head.weight"].value
        out["head.bias"] = self.params["head.bias"].value
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.tensors().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            target = self.params[name].value if name in self.params else self.buffers[name]
            if target.shape != value.shape:
                raise nn.ShapeError(f"{name}: expected shape {target.shape}, got {value.shape}")
            target[...] = value

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    # embedding -------------------------------------------------------------

    def embed(self, x, train: bool = False, rng: np.random.Generator | None = None, return_cache: bool = False):
        """Embed a ``(batch, input_length)`` stack (or one series) into ``(batch, embedding_dim)``."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        if single:
            x = x[None]
        if x.ndim != 2 or x.shape[1] != self.config.input_length:
            raise nn.ShapeError(f"expected series of length {self.config.input_length}, got shape {x.shape}")
        h = x[:, :, None]
        caches = []
        for i, (_, _, pool) in enumerate(self.config.blocks):
            pre = f"block{i}."
            conv_in = h
            h = nn.conv1d_forward(h, self.p(pre + "conv.weight"), self.p(pre + "conv.bias"))
            h, relu_in = nn.relu_forward(h)
            h, bn_cache = nn.batchnorm1d_forward(
                h, self.p(pre + "bn.gamma"), self.p(pre + "bn.beta"),
                self.buffers[pre + "bn.running_mean"], self.buffers[pre + "bn.running_var"], train)
            h, mask = nn.dropout_forward(h, self.config.dropout_rate, train, rng)
            h, pool_cache = nn.maxpool1d_forward(h, pool)
            caches.append((conv_in, relu_in, bn_cache, mask, pool_cache))
        shape = h.shape
        emb = h.reshape(len(h), -1)
        if single:
            emb = emb[0]
        if return_cache:
            return emb, (caches, shape)
        return emb

    def embed_backward(self, grad_emb, cache) -> None:
        caches, shape = cache
        g = grad_emb.reshape(shape)
        for i in reversed(range(len(self.config.blocks))):
            pre = f"block{i}."
            conv_in, relu_in, bn_cache, mask, pool_cache = caches[i]
            g = nn.maxpool1d_backward(g, pool_cache)
            g = nn.dropout_backward(g, mask)
            g, d_gamma, d_beta = nn.batchnorm1d_backward(g, bn_cache, self.p(pre + "bn.gamma"))
            self.params[pre + "bn.gamma"].accumulate(d_gamma)
            self.params[pre + "bn.beta"].accumulate(d_beta)
            g = nn.relu_backward(g, relu_in)
            g, d_w, d_b = nn.conv1d_backward(g, conv_in, self.p(pre + "conv.weight"))
            self.params[pre + "conv.weight"].accumulate(d_w)
            self.params[pre + "conv.bias"].accumulate(d_b)

    # relational head -------------------------------------------------------

    def logits(self, emb_a, emb_b):
        d, _ = nn.abs_diff_forward(np.atleast_2d(emb_a), np.atleast_2d(emb_b))
        z, _ = nn.dense_forward(d, self.p("head.weight"), self.p("head.bias"))
        return z[:, 0]

    def similarity(self, emb_a, emb_b):
        """Similarity in (0, 1); symmetric in its arguments bit for bit."""
        emb_a = np.asarray(emb_a)
        emb_b = np.asarray(emb_b)
        d = self.config.embedding_dim
        if emb_a.shape[-1] != d or emb_b.shape[-1] != d:
            raise nn.ShapeError(f"embeddings must have {d} features, got {emb_a.shape} and {emb_b.shape}")
        s = nn.sigmoid(self.logits(emb_a, emb_b))
        return s[0] if emb_a.ndim == 1 and emb_b.ndim == 1 else s

    # pair training ---------------------------------------------------------

    def pair_loss(self, xa, xb, y, train: bool = True, rng=None, backward: bool = True) -> tuple[float, np.ndarray]:
        """BCE of the predicted similarities for a batch of pairs; accumulates gradients if asked.

        Both sides go through the embedding as one stacked batch, so batch-norm
        statistics are pooled over the pair batch.
        """
        n = len(y)
        emb, cache = self.embed(np.concatenate([xa, xb]), train=train, rng=rng, return_cache=True)
        ea, eb = emb[:n], emb[n:]
        d, sign = nn.abs_diff_forward(ea, eb)
        z, dense_in = nn.dense_forward(d, self.p("head.weight"), self.p("head.bias"))
        prob = nn.sigmoid(z[:, 0])
        loss, _ = nn.bce_loss(prob, y)
        if backward:
            # sigmoid and BCE differentiated jointly: d loss / d z = (p - y) / n
            gz = ((prob - y) / n).astype(self.dtype)[:, None]
            gd, gw, gb = nn.dense_backward(gz, dense_in, self.p("head.weight"))
            self.params["head.weight"].accumulate(gw)
            self.params["head.bias"].accumulate(gb)
            ga, gbb = nn.abs_diff_backward(gd, sign)
            self.embed_backward(np.concatenate([ga, gbb]), cache)
        return loss, prob


class EarlyStopping:
    """Stop once the monitored loss has not strictly improved for ``patience`` epochs."""

    def __init__(self, patience: int = 20):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; returns True if it is a new best."""
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    patience: int = 20
    max_epochs: int = 200
    eval_batch_size: int = 1024

    def __post_init__(self):
        for k in ("learning_rate", "batch_size", "patience", "max_epochs", "eval_batch_size"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


@dataclass
class TrainReport:
    seed: int
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    wall_time: float = 0.0

    def to_text(self) -> str:
        lines = [
            "# fsts train report",
            f"# seed={self.seed} best_epoch={self.best_epoch} stop_reason={self.stop_reason} "
            f"wall_time={self.wall_time:.3f}",
            "epoch,train_loss,val_loss,val_accuracy",
        ]
        for i, (tl, vl, va) in enumerate(zip(self.train_loss, self.val_loss, self.val_accuracy), 1):
            lines.append(f"{i},{tl!r},{vl!r},{va!r}")
        return "\n".join(lines) + "\n"

    def comparable(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


class OverlapError(ValueError):
    """Training and validation pairs come from the same dataset."""


def evaluate_pairs(model: SiameseNet, pairs: PairSet, values: np.ndarray, batch_size: int = 1024):
    """Inference-mode mean BCE and accuracy at threshold 0.5 over a pair set."""
    used = np.unique(np.concatenate([pairs.index_a, pairs.index_b]))
    emb = np.empty((len(values), model.config.embedding_dim), dtype=model.dtype)
    for s in range(0, len(used), batch_size):
        idx = used[s:s + batch_size]
        emb[idx] = model.embed(values[idx], train=False)
    probs = np.empty(len(pairs))
    for s in range(0, len(pairs), batch_size):
        sl = slice(s, s + batch_size)
        probs[sl] = model.similarity(emb[pairs.index_a[sl]], emb[pairs.index_b[sl]])
    loss, _ = nn.bce_loss(probs, pairs.label)
    acc = float(np.mean((probs >= 0.5) == (pairs.label == 1)))
    return loss, acc


def pretrain(train_pairs: PairSet, val_pairs: PairSet, train_data: Dataset, val_data: Dataset,
             config: EmbeddingConfig = EmbeddingConfig(), hyper: TrainConfig = TrainConfig(),
             seed: int = 0, progress=None) -> tuple[SiameseNet, TrainReport]:
    """Adam on pair BCE with early stopping on validation BCE; returns the best-epoch model."""
    overlap = set(train_data.source_names) & set(val_data.source_names)
    if overlap:
        raise OverlapError(f"datasets used for both training and validation: {sorted(overlap)}")
    if len(train_pairs) == 0 or len(val_pairs) == 0:
        raise ValueError("training and validation pair sets must be non-empty")
    model = SiameseNet(config, seed=seed)
    xt = train_data.matrix(model.dtype)
    xv = val_data.matrix(model.dtype)
    for arr in (xt, xv):
        if arr.shape[1] != config.input_length:
            raise nn.ShapeError(f"series length {arr.shape[1]} != model input length {config.input_length}")
    opt = nn.AdamState(learning_rate=hyper.learning_rate)
    params = list(model.params.values())
    stopper = EarlyStopping(hyper.patience)
    report = TrainReport(seed=seed)
    best_state = model.state()
    t0 = time.perf_counter()
    for epoch in range(1, hyper.max_epochs + 1):
        drop_rng = rng_for(seed, "dropout", epoch)
        total, count = 0.0, 0
        for (xa, xb), y in batch_pairs(train_pairs, xt, hyper.batch_size, seed, epoch):
            model.zero_grad()
            loss, _ = model.pair_loss(xa, xb, y, train=True, rng=drop_rng)
            nn.adam_step(params, opt)
            total += loss * len(y)
            count += len(y)
        vloss, vacc = evaluate_pairs(model, val_pairs, xv, hyper.eval_batch_size)
        report.train_loss.append(total / count)
        report.val_loss.append(vloss)
        report.val_accuracy.append(vacc)
        if stopper.update(epoch, vloss):
            best_state = model.state()
        log.info("epoch %d train %.5f val %.5f acc %.4f", epoch, total / count, vloss, vacc)
        if progress is not None:
            progress(epoch, total / count, vloss, vacc)
        if stopper.should_stop:
            report.stop_reason = "patience"
            break
    else:
        report.stop_reason = "epoch_cap"
    model.load_state(best_state)
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - t0
    return model, report


def clone(model: SiameseNet) -> SiameseNet:
    return copy.deepcopy(model)
