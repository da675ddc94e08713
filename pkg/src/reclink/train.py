"""Contrastive fine-tuning of the built-in encoder.

Losses (supervised contrastive over in-batch positives, or online
contrastive over labeled pairs) are computed with exact analytic gradients
and backpropagated through l2 normalization and the linear projection into
the weight matrix, updated by AdamW under a linear warmup schedule. Only
the built-in provider is trainable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union

import numpy as np

from .encoder import EncoderConfig, EncoderModel, FeatureVector, featurize, save_model
from .errors import DataError, TrainingError
from .linkage import tune_threshold
from .tabular import ColumnSelector, Table
from .textprep import SeparatorSpec, serialize_record

LOSSES = ("supcon", "online_contrastive")
EVAL_MODES = ("retrieval_top1", "pairwise_f1")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "supcon"
    temperature: float = 0.07
    margin: float = 0.5
    max_lr: float = 2e-6
    warmup_fraction: float = 1.0
    epochs: int = 100
    batch_size: int = 64
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_mode: str = "retrieval_top1"

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise DataError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.eval_mode not in EVAL_MODES:
            raise DataError(f"unknown eval_mode {self.eval_mode!r}; expected one of {EVAL_MODES}")
        if self.temperature <= 0:
            raise DataError("temperature must be > 0")
        if not (0 < self.margin < 2):
            raise DataError("margin must lie in (0, 2)")
        if self.max_lr <= 0:
            raise DataError("max_lr must be > 0")
        if not (0 < self.warmup_fraction <= 1):
            raise DataError("warmup_fraction must lie in (0, 1]")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.batch_size < 2:
            raise DataError("batch_size must be >= 2")
        if self.weight_decay < 0:
            raise DataError("weight_decay must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise DataError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise DataError("adam_eps must be > 0")


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Read a flat key=value config file ('#' starts a comment)."""
    out: dict[str, str] = {}
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise DataError(f"{path} line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def train_config_from_mapping(mapping: dict[str, str]) -> TrainConfig:
    """Build a TrainConfig from string key/values, coercing by field type."""
    by_name = {f.name: f for f in fields(TrainConfig)}
    kwargs: dict[str, object] = {}
    for key, raw in mapping.items():
        if key not in by_name:
            raise DataError(f"unknown training config key {key!r}")
        typ = by_name[key].type
        try:
            if typ == "int":
                kwargs[key] = int(raw)
            elif typ == "float":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        except ValueError:
            raise DataError(f"config key {key!r}: cannot parse {raw!r} as {typ}") from None
    return TrainConfig(**kwargs)  # type: ignore[arg-type]


# --------------------------------------------------------------------------
# training datasets
# --------------------------------------------------------------------------

@dataclass
class PositivePairs:
    """Linked text pairs; each pair forms a two-member class."""

    left: list[str]
    right: list[str]

    def __post_init__(self) -> None:
        if not self.left or len(self.left) != len(self.right):
            raise DataError("positive pairs need equal, non-empty left/right lists")


@dataclass
class LabeledPairs:
    left: list[str]
    right: list[str]
    labels: list[int]

    def __post_init__(self) -> None:
        if not self.left or not (len(self.left) == len(self.right) == len(self.labels)):
            raise DataError("labeled pairs need equal, non-empty left/right/label lists")
        if not set(self.labels) <= {0, 1}:
            raise DataError("pair labels must be 0 or 1")


@dataclass
class ClusterRows:
    cluster_ids: list[str]
    texts: list[str]

    def __post_init__(self) -> None:
        if not self.texts or len(self.cluster_ids) != len(self.texts):
            raise DataError("cluster rows need equal, non-empty id/text lists")


TrainingDataset = Union[PositivePairs, LabeledPairs, ClusterRows]


def dataset_from_table(
    table: Table,
    left_cols: ColumnSelector | None = None,
    right_cols: ColumnSelector | None = None,
    label_col: str | None = None,
    cluster_id_col: str | None = None,
    cluster_text_cols: ColumnSelector | None = None,
    separator: SeparatorSpec | None = None,
) -> TrainingDataset:
    """Interpret a table as one of the three training dataset formats.

    A cluster id column selects the cluster format; otherwise a label
    column selects labeled pairs; otherwise positive pairs.
    """
    sep = separator or SeparatorSpec()

    def col_texts(selector: ColumnSelector) -> list[str]:
        selector.validate(table)
        return [serialize_record(i, row, selector, sep).text for i, row in table.iter_rows()]

    if cluster_id_col is not None:
        if cluster_text_cols is None:
            raise DataError("cluster datasets need both the id column and the text columns")
        if cluster_id_col not in table.columns:
            raise DataError(f"unknown cluster id column {cluster_id_col!r}")
        ids = [row[cluster_id_col] for _, row in table.iter_rows()]
        return ClusterRows(ids, col_texts(cluster_text_cols))
    if left_cols is None or right_cols is None:
        raise DataError("pair datasets need left and right text columns")
    left = col_texts(left_cols)
    right = col_texts(right_cols)
    if label_col is None:
        return PositivePairs(left, right)
    if label_col not in table.columns:
        raise DataError(f"unknown label column {label_col!r}")
    labels = []
    for i, row in table.iter_rows():
        raw = row[label_col].strip()
        if raw not in ("0", "1"):
            raise DataError(f"row {i}: label must be 0 or 1, got {raw!r}")
        labels.append(int(raw))
    return LabeledPairs(left, right, labels)


# --------------------------------------------------------------------------
# batches
# --------------------------------------------------------------------------

@dataclass
class ClassBatch:
    texts: list[str]
    labels: np.ndarray  # int64 class ids, aligned with texts


@dataclass
class PairBatch:
    left: list[str]
    right: list[str]
    labels: np.ndarray  # 0/1 per pair


def _class_groups(dataset: TrainingDataset) -> list[list[str]]:
    if isinstance(dataset, PositivePairs):
        return [[l, r] for l, r in zip(dataset.left, dataset.right)]
    assert isinstance(dataset, ClusterRows)
    groups: dict[str, list[str]] = {}
    for cid, text in zip(dataset.cluster_ids, dataset.texts):
        groups.setdefault(cid, []).append(text)
    return list(groups.values())


def _pack_class_batches(
    groups: list[list[str]], batch_size: int, rng: np.random.Generator
) -> list[ClassBatch]:
    # split oversized classes into chunks of >= 2 so every chunk keeps a positive
    chunks: list[tuple[int, list[str]]] = []
    for cid in rng.permutation(len(groups)):
        members = groups[int(cid)]
        pieces = [members[i:i + batch_size] for i in range(0, len(members), batch_size)]
        if len(pieces) > 1 and len(pieces[-1]) == 1:
            pieces[-1].insert(0, pieces[-2].pop())
        for piece in pieces:
            chunks.append((int(cid), piece))

    packed: list[list[tuple[int, list[str]]]] = []
    current: list[tuple[int, list[str]]] = []
    count = 0
    for chunk in chunks:
        if current and count + len(chunk[1]) > batch_size:
            packed.append(current)
            current, count = [], 0
        current.append(chunk)
        count += len(chunk[1])
    if current:
        packed.append(current)

    def has_positive(batch: list[tuple[int, list[str]]]) -> bool:
        return any(len(members) >= 2 for _, members in batch)

    # fold batches without an in-batch positive (all singleton classes) forward
    fixed: list[list[tuple[int, list[str]]]] = []
    carry: list[tuple[int, list[str]]] = []
    for batch in packed:
        batch = carry + batch
        carry = []
        if has_positive(batch) and sum(len(m) for _, m in batch) >= 2:
            fixed.append(batch)
        else:
            carry = batch
    if carry:
        if not fixed:
            raise DataError("supcon training needs at least one class with two members")
        fixed[-1].extend(carry)

    batches = []
    for batch in fixed:
        texts: list[str] = []
        labels: list[int] = []
        for cid, members in batch:
            texts.extend(members)
            labels.extend([cid] * len(members))
        batches.append(ClassBatch(texts, np.asarray(labels, dtype=np.int64)))
    return batches


def _pack_pair_batches(
    dataset: LabeledPairs, batch_size: int, rng: np.random.Generator
) -> list[PairBatch]:
    pos = np.flatnonzero(np.asarray(dataset.labels) == 1)
    neg = np.flatnonzero(np.asarray(dataset.labels) == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("online contrastive training needs both positive and negative pairs")
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    total = len(pos) + len(neg)
    n_batches = max(1, min(-(-total // batch_size), len(pos), len(neg)))
    batches = []
    for pos_chunk, neg_chunk in zip(np.array_split(pos, n_batches), np.array_split(neg, n_batches)):
        ids = np.concatenate([pos_chunk, neg_chunk])
        ids = ids[rng.permutation(len(ids))]
        batches.append(PairBatch(
            left=[dataset.left[i] for i in ids],
            right=[dataset.right[i] for i in ids],
            labels=np.asarray([dataset.labels[i] for i in ids], dtype=np.int64),
        ))
    return batches


def build_training_batches(
    dataset: TrainingDataset, config: TrainConfig, epoch: int
) -> list[ClassBatch] | list[PairBatch]:
    """Deterministic batches for one epoch, seeded by (config.seed, epoch).

    Class-grouped sampling keeps whole classes together so every batch
    contains at least one positive pair; labeled pairs are stratified so
    every batch sees both labels.
    """
    rng = np.random.default_rng([config.seed, epoch])
    if isinstance(dataset, LabeledPairs):
        return _pack_pair_batches(dataset, config.batch_size, rng)
    return _pack_class_batches(_class_groups(dataset), config.batch_size, rng)


# --------------------------------------------------------------------------
# losses (exact analytic gradients, verified against finite differences)
# --------------------------------------------------------------------------

def supcon_loss(
    embeddings: np.ndarray, labels: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss over a batch.

    For each anchor with at least one in-batch positive, averages
    -log softmax(z_i . z_p / temperature) over its positives, where the
    softmax runs over every other batch member; anchors without positives
    are skipped as anchors but still appear in denominators. Returns the
    mean over anchors and the gradient with respect to each embedding.
    """
    if temperature <= 0:
        raise DataError("temperature must be > 0")
    Z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    n = len(Z)
    if n < 2:
        raise DataError("supcon needs a batch of at least 2")
    S = (Z @ Z.T) / temperature
    off_diag = ~np.eye(n, dtype=bool)
    pos_mask = (y[:, None] == y[None, :]) & off_diag
    pos_counts = pos_mask.sum(axis=1)
    valid = pos_counts > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise DataError("supcon batch has no anchor with an in-batch positive")

    S_off = np.where(off_diag, S, -np.inf)
    row_max = S_off.max(axis=1, keepdims=True)
    exp_shifted = np.exp(S_off - row_max)
    denom = exp_shifted.sum(axis=1)
    lse = row_max[:, 0] + np.log(denom)

    mean_pos = np.zeros(n)
    mean_pos[valid] = (S * pos_mask).sum(axis=1)[valid] / pos_counts[valid]
    loss = float(np.mean((lse - mean_pos)[valid]))

    softmax = exp_shifted / denom[:, None]
    G = np.zeros((n, n))
    G[valid] = (softmax[valid] - pos_mask[valid] / pos_counts[valid, None]) / n_valid
    grad = (G + G.T) @ Z / temperature
    return loss, grad


def online_contrastive_loss(
    left: np.ndarray, right: np.ndarray, labels: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Online contrastive loss over labeled pairs with cosine distance.

    Only hard pairs contribute: negatives closer than the farthest
    positive, and positives farther than the closest negative. Loss is
    sum(d^2) over hard positives plus sum(max(0, margin - d)^2) over hard
    negatives. Returns (loss, grad_left, grad_right).
    """
    ZL = np.asarray(left, dtype=np.float64)
    ZR = np.asarray(right, dtype=np.float64)
    y = np.asarray(labels)
    if len(ZL) != len(ZR) or len(ZL) != len(y):
        raise DataError("pair batch arrays must be aligned")
    pos = y == 1
    neg = y == 0
    if not pos.any() or not neg.any():
        raise DataError("online contrastive needs at least one positive and one negative pair")
    d = 1.0 - np.sum(ZL * ZR, axis=1)
    hard_pos = pos & (d > d[neg].min())
    hard_neg = neg & (d < d[pos].max())
    slack = np.maximum(margin - d, 0.0)
    loss = float(np.sum(d[hard_pos] ** 2) + np.sum(slack[hard_neg] ** 2))
    g = np.zeros(len(d))
    g[hard_pos] = 2.0 * d[hard_pos]
    g[hard_neg] = -2.0 * slack[hard_neg]
    grad_left = -g[:, None] * ZR
    grad_right = -g[:, None] * ZL
    return loss, grad_left, grad_right


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "AdamWState":
        return cls(np.zeros(shape), np.zeros(shape))


def linear_schedule_lr(step: int, total_steps: int, max_lr: float, warmup_fraction: float) -> float:
    """Linear warmup over warmup_fraction of the run, then linear decay to 0.

    With warmup_fraction=1 the rate ramps 0 -> max_lr across the whole run
    and never decays (lr(total_steps) == max_lr).
    """
    if total_steps <= 0:
        return 0.0
    warm = warmup_fraction * total_steps
    if step <= warm:
        return max_lr * step / warm
    return max_lr * (total_steps - step) / (total_steps - warm)


def adamw_step(
    weights: np.ndarray,
    grad: np.ndarray,
    state: AdamWState,
    step: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> None:
    """One decoupled-weight-decay Adam update, in place. step is 1-based."""
    if state.m.shape != weights.shape or grad.shape != weights.shape:
        raise DataError("optimizer state/gradient shape mismatch")
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** step)
    v_hat = state.v / (1.0 - beta2 ** step)
    weights -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * weights)


# --------------------------------------------------------------------------
# forward/backward through the encoder
# --------------------------------------------------------------------------

class BatchEncoder:
    """Embeds texts with a featurize cache and backpropagates into the weights."""

    def __init__(self, config: EncoderConfig) -> None:
        self.config = config
        self._cache: dict[str, FeatureVector] = {}

    def features(self, text: str) -> FeatureVector:
        feats = self._cache.get(text)
        if feats is None:
            feats = featurize(text, self.config)
            self._cache[text] = feats
        return feats

    def forward(self, weights: np.ndarray, texts: list[str]):
        n = len(texts)
        Z = np.zeros((n, self.config.embed_dim))
        ctx: list[tuple[np.ndarray, np.ndarray, np.ndarray, float] | None] = [None] * n
        for i, text in enumerate(texts):
            feats = self.features(text)
            if feats.nnz == 0:
                continue
            fhat = feats.counts / max(feats.counts.sum(), 1.0)
            u = fhat @ weights[feats.indices]
            norm = float(np.linalg.norm(u))
            if norm == 0.0:
                continue
            z = u / norm
            Z[i] = z
            ctx[i] = (feats.indices, fhat, z, norm)
        return Z, ctx

    def backward(self, ctx, grad_z: np.ndarray, grad_weights: np.ndarray) -> None:
        """Accumulate d(loss)/d(weights) given d(loss)/d(embedding) rows."""
        for i, entry in enumerate(ctx):
            if entry is None:
                continue
            indices, fhat, z, norm = entry
            gz = grad_z[i]
            gu = (gz - np.dot(gz, z) * z) / norm
            grad_weights[indices] += fhat[:, None] * gu[None, :]


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_metric: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None
    checkpoint_path: str | None = None

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.epochs:
                fh.write(json.dumps(
                    {"epoch": s.epoch, "train_loss": s.train_loss, "val_metric": s.val_metric},
                    sort_keys=True))
                fh.write("\n")
            fh.write(json.dumps(
                {"best_epoch": self.best_epoch, "best_metric": self.best_metric,
                 "checkpoint": self.checkpoint_path}, sort_keys=True))
            fh.write("\n")


def _check_compat(config: TrainConfig, dataset: TrainingDataset, role: str) -> None:
    if config.loss == "supcon" and isinstance(dataset, LabeledPairs):
        raise DataError(f"supcon cannot train on labeled pairs ({role}); use online_contrastive")
    if config.loss == "online_contrastive" and not isinstance(dataset, LabeledPairs):
        raise DataError(f"online_contrastive needs labeled pairs ({role})")


def _embed_all(enc: BatchEncoder, weights: np.ndarray, texts: list[str]) -> tuple[np.ndarray, np.ndarray]:
    Z, ctx = enc.forward(weights, texts)
    valid = np.array([c is not None for c in ctx], dtype=bool)
    return Z, valid


def validation_metric(
    model: EncoderModel, val_ds: TrainingDataset, config: TrainConfig, enc: BatchEncoder | None = None
) -> float:
    """Validation score for checkpoint selection (higher is better)."""
    enc = enc or BatchEncoder(model.config)
    W = model.weights
    if config.eval_mode == "pairwise_f1":
        if not isinstance(val_ds, LabeledPairs):
            raise DataError("pairwise_f1 validation needs labeled pairs")
        ZL, okL = _embed_all(enc, W, val_ds.left)
        ZR, okR = _embed_all(enc, W, val_ds.right)
        sims = np.sum(ZL * ZR, axis=1)
        sims[~(okL & okR)] = -1.0
        _, f1 = tune_threshold(list(sims), list(val_ds.labels))
        return f1
    if isinstance(val_ds, PositivePairs):
        Q, okQ = _embed_all(enc, W, val_ds.left)
        K, okK = _embed_all(enc, W, val_ds.right)
        scores = Q @ K.T
        scores[:, ~okK] = -np.inf
        top1 = scores.argmax(axis=1)
        correct = (top1 == np.arange(len(Q))) & okQ
        return float(correct.mean())
    if isinstance(val_ds, ClusterRows):
        Z, ok = _embed_all(enc, W, val_ds.texts)
        scores = Z @ Z.T
        np.fill_diagonal(scores, -np.inf)
        scores[:, ~ok] = -np.inf
        top1 = scores.argmax(axis=1)
        ids = np.asarray(val_ds.cluster_ids)
        correct = (ids[top1] == ids) & ok
        return float(correct.mean())
    raise DataError("retrieval_top1 validation needs positive pairs or cluster rows")


def _batch_loss_and_grad(
    enc: BatchEncoder,
    weights: np.ndarray,
    batch: ClassBatch | PairBatch,
    config: TrainConfig,
    grad: np.ndarray,
) -> float:
    grad.fill(0.0)
    if isinstance(batch, ClassBatch):
        Z, ctx = enc.forward(weights, batch.texts)
        loss, dZ = supcon_loss(Z, batch.labels, config.temperature)
        enc.backward(ctx, dZ, grad)
        return loss
    texts = batch.left + batch.right
    Z, ctx = enc.forward(weights, texts)
    half = len(batch.left)
    loss, dL, dR = online_contrastive_loss(Z[:half], Z[half:], batch.labels, config.margin)
    enc.backward(ctx, np.vstack([dL, dR]), grad)
    return loss


def train(
    model: EncoderModel,
    train_ds: TrainingDataset,
    val_ds: TrainingDataset,
    config: TrainConfig,
    checkpoint_path: str | Path | None = None,
) -> tuple[EncoderModel, TrainReport]:
    """Fine-tune the encoder; returns the checkpoint with the best validation metric.

    Deterministic given config.seed: batch order, updates, and the report
    are bit-identical across runs on the same platform.
    """
    _check_compat(config, train_ds, "train")
    if config.eval_mode == "pairwise_f1" and not isinstance(val_ds, LabeledPairs):
        raise DataError("pairwise_f1 validation needs labeled pairs (val)")

    report = TrainReport(checkpoint_path=str(checkpoint_path) if checkpoint_path else None)
    if config.epochs == 0:
        best = model.copy()
        if checkpoint_path:
            save_model(best, checkpoint_path)
        return best, report

    enc = BatchEncoder(model.config)
    work = model.copy()
    per_epoch_batches = [build_training_batches(train_ds, config, e) for e in range(1, config.epochs + 1)]
    total_steps = sum(len(b) for b in per_epoch_batches)
    state = AdamWState.zeros(work.weights.shape)
    grad = np.zeros_like(work.weights)

    best: EncoderModel | None = None
    best_metric = -np.inf
    step = 0
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch_no, batch in enumerate(per_epoch_batches[epoch - 1]):
            step += 1
            loss = _batch_loss_and_grad(enc, work.weights, batch, config, grad)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}; "
                    f"grad norm {float(np.linalg.norm(grad)):.3e}")
            lr = linear_schedule_lr(step, total_steps, config.max_lr, config.warmup_fraction)
            adamw_step(work.weights, grad, state, step, lr,
                       config.beta1, config.beta2, config.adam_eps, config.weight_decay)
            losses.append(loss)
        metric = validation_metric(work, val_ds, config, enc)
        report.epochs.append(EpochStats(epoch, float(np.mean(losses)), metric))
        if metric > best_metric:
            best_metric = metric
            report.best_epoch = epoch
            report.best_metric = metric
            best = work.copy()

    assert best is not None
    if checkpoint_path:
        save_model(best, checkpoint_path)
    return best, report
