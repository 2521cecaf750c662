"""Optimization loop, cross-validation, and evaluation metrics.

Cross-validation is leakage-free by construction: each fold fits the whole
preprocessing pipeline (truncation bounds, imputation means, normalization)
on its training episodes only, then transforms both splits with those
statistics.  Training itself is mini-batch Adam on the mean log-loss, with
the best-validation-AUC checkpoint kept and patience-based early stopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from icurisk.ingest import MAX_MINUTES, RawEpisode
from icurisk.model import ModelConfig, ModelParams, forward_episode, log_loss
from icurisk.preprocess import EpisodeFeatures, PipelineStats, build_features, fit_pipeline


class TrainingDiverged(RuntimeError):
    """Raised when an epoch produces a non-finite loss."""


VARIANTS = ("lr-baseline", "lstm-mean", "lstm-attn", "bilstm-attn")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    folds: int = 5
    interval_minutes: int = 180

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("fold count must be at least 2")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch size, epochs, and patience must be positive")
        if self.interval_minutes <= 0:
            raise ValueError("interval_minutes must be positive")


@dataclass
class FoldResult:
    fold: int
    train_losses: list[float]
    val_auc: float
    best_epoch: int
    params: ModelParams
    val_ids: list[int]
    val_scores: np.ndarray
    val_labels: np.ndarray
    pipeline: PipelineStats | None = None


@dataclass
class CVResult:
    variant: str
    folds: list[FoldResult]
    mean_auc: float
    std_auc: float
    pooled_auc: float


def kfold_split(n: int, k: int, seed: int, labels) -> list[np.ndarray]:
    """Stratified k-fold indices: a disjoint partition of 0..n-1.

    Positives and negatives are shuffled separately and dealt round-robin,
    so fold sizes differ by at most one and each fold's positive count is
    within one of an even share.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"cannot split {n} items into {k} folds")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    rng = np.random.default_rng(seed)
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels != 1)
    rng.shuffle(positives)
    rng.shuffle(negatives)
    folds: list[list[int]] = [[] for _ in range(k)]
    for slot, idx in enumerate(np.concatenate([positives, negatives])):
        folds[slot % k].append(int(idx))
    return [np.sort(np.asarray(fold, dtype=np.intp)) for fold in folds]


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties count half.

    Rank-sum formulation with average ranks for tied scores, so the result
    matches brute-force pair counting exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} vs labels {labels.shape}")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")

    order = np.argsort(scores, kind="mergesort")
    ordered = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1] == ordered[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def adam_step(values: np.ndarray, grads: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    """One bias-corrected Adam update for a single array.

    Mutates the moment buffers in place and returns the updated values;
    ``t`` is the 1-based step count.
    """
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    m[...] = beta1 * m + (1.0 - beta1) * grads
    v[...] = beta2 * v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return values - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a list of tensors, reading each tensor's ``grad``."""

    def __init__(self, tensors, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(t.data) for t in self.tensors]
        self.v = [np.zeros_like(t.data) for t in self.tensors]

    def step(self) -> None:
        self.t += 1
        for i, tensor in enumerate(self.tensors):
            grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            tensor.data = adam_step(tensor.data, grad, self.m[i], self.v[i],
                                    self.t, self.lr, self.beta1, self.beta2, self.eps)


def _score_all(features: list[EpisodeFeatures], params: ModelParams) -> np.ndarray:
    return np.array([forward_episode(f.matrix, params).risk for f in features])


def train_fold(train_features: list[EpisodeFeatures],
               val_features: list[EpisodeFeatures],
               cfg: TrainConfig, model_cfg: ModelConfig,
               fold: int = 0, seed: int | None = None) -> FoldResult:
    """Train one fold; keeps the checkpoint with the best validation AUC.

    Expects features already transformed with statistics fitted on the
    training split only.  One seeded generator drives initialization,
    shuffling, and dropout, so a fixed seed gives a bit-identical run.
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    params = ModelParams.init(model_cfg, rng)
    optimizer = Adam([t for _, t in params.named_parameters()], cfg.learning_rate)
    val_labels = np.asarray([f.label for f in val_features])

    best_auc = -math.inf
    best_epoch = -1
    best_params = params.copy()
    epochs_since_best = 0
    train_losses: list[float] = []

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(train_features))
        epoch_losses = []
        for start in range(0, len(perm), cfg.batch_size):
            chunk = perm[start:start + cfg.batch_size]
            params.zero_grads()
            for idx in chunk:
                feat = train_features[idx]
                result = forward_episode(feat.matrix, params, train=True, rng=rng)
                loss = log_loss(result.tape, result.output, feat.label)
                result.tape.backward(loss)
                epoch_losses.append(float(loss.data[0]))
            params.scale_grads(1.0 / len(chunk))  # mean gradient over the batch
            optimizer.step()

        mean_loss = float(np.mean(epoch_losses))
        train_losses.append(mean_loss)
        if not math.isfinite(mean_loss):
            raise TrainingDiverged(
                f"fold {fold}: non-finite training loss at epoch {epoch}"
            )

        epoch_auc = auc(_score_all(val_features, params), val_labels)
        if epoch_auc > best_auc:
            best_auc = epoch_auc
            best_epoch = epoch
            best_params = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    final_scores = _score_all(val_features, best_params)
    return FoldResult(
        fold=fold,
        train_losses=train_losses,
        val_auc=auc(final_scores, val_labels),
        best_epoch=best_epoch,
        params=best_params,
        val_ids=[f.record_id for f in val_features],
        val_scores=final_scores,
        val_labels=val_labels,
    )


def apply_variant(variant: str, cfg: TrainConfig,
                  model_cfg: ModelConfig) -> tuple[TrainConfig, ModelConfig]:
    """Pin the fields a named configuration requires; other flags pass through."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    if variant == "lr-baseline":
        # Statistics over the whole 48 hours, plain logistic regression.
        cfg = replace(cfg, interval_minutes=MAX_MINUTES)
        model_cfg = replace(model_cfg, recurrent=False, dropout_in=0.0, dropout_out=0.0)
    elif variant == "lstm-mean":
        model_cfg = replace(model_cfg, recurrent=True, bidirectional=False, pooling="mean")
    elif variant == "lstm-attn":
        model_cfg = replace(model_cfg, recurrent=True, bidirectional=False, pooling="attention")
    else:  # bilstm-attn
        model_cfg = replace(model_cfg, recurrent=True, bidirectional=True, pooling="attention")
    return cfg, model_cfg


def describe_variant(model_cfg: ModelConfig) -> str:
    if not model_cfg.recurrent:
        return "lr-baseline"
    cell = "bilstm" if model_cfg.bidirectional else "lstm"
    pool = "attn" if model_cfg.pooling == "attention" else "mean"
    return f"{cell}-{pool}"


def cross_validate(episodes: list[RawEpisode], cfg: TrainConfig,
                   model_cfg: ModelConfig,
                   only_fold: int | None = None) -> CVResult:
    """Stratified k-fold training with per-fold preprocessing fits.

    Reports the mean and std of per-fold validation AUCs plus the pooled
    AUC over every episode's out-of-fold score.
    """
    labels = [ep.label for ep in episodes]
    if any(label is None for label in labels):
        raise ValueError("cross-validation needs labeled episodes")
    folds = kfold_split(len(episodes), cfg.folds, cfg.seed, labels)

    results: list[FoldResult] = []
    for fold_idx, val_idx in enumerate(folds):
        if only_fold is not None and fold_idx != only_fold:
            continue
        in_val = set(int(i) for i in val_idx)
        train_eps = [ep for j, ep in enumerate(episodes) if j not in in_val]
        val_eps = [episodes[int(j)] for j in val_idx]

        stats = fit_pipeline(train_eps, cfg.interval_minutes)
        train_features = [build_features(ep, stats) for ep in train_eps]
        val_features = [build_features(ep, stats) for ep in val_eps]

        fold_result = train_fold(train_features, val_features, cfg, model_cfg,
                                 fold=fold_idx, seed=cfg.seed + fold_idx)
        fold_result.pipeline = stats
        results.append(fold_result)

    aucs = np.array([r.val_auc for r in results])
    pooled_scores = np.concatenate([r.val_scores for r in results])
    pooled_labels = np.concatenate([r.val_labels for r in results])
    return CVResult(
        variant=describe_variant(model_cfg),
        folds=results,
        mean_auc=float(aucs.mean()),
        std_auc=float(aucs.std()),
        pooled_auc=auc(pooled_scores, pooled_labels),
    )


def baseline_lr(episodes: list[RawEpisode], cfg: TrainConfig,
                model_cfg: ModelConfig | None = None) -> CVResult:
    """Logistic regression on whole-stay statistics (single 48-hour interval)."""
    model_cfg = model_cfg or ModelConfig()
    cfg, model_cfg = apply_variant("lr-baseline", cfg, model_cfg)
    return cross_validate(episodes, cfg, model_cfg)
