"""The risk model: (bi)LSTM state tracking, attention pooling, logistic output.

Per interval t the LSTM cell computes

    i = sigmoid(Wi x + Ui h_prev + bi)        input gate
    f = sigmoid(Wf x + Uf h_prev + bf)        forget gate
    o = sigmoid(Wo x + Uo h_prev + bo)        output gate
    c_cand = tanh(Wc x + Uc h_prev + bc)      candidate memory
    c = f * c_prev + i * c_cand
    h = o * tanh(c)

with both states starting at zero.  A bidirectional model runs a second
cell over the reversed sequence and concatenates the two states per
interval.  Each of R reading heads scores every state with a small tanh
network, softmax-normalizes the scores over time, and forms a convex
combination of the states; the head readings are max-pooled elementwise
into the classifier feature z, and the risk is sigmoid(w . z + b).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from icurisk.autodiff import (
    ShapeMismatchError,
    Tape,
    Tensor,
    check_gradients,
)
from icurisk.preprocess import PipelineStats


class ModelFormatError(ValueError):
    """Raised when a model file has the wrong magic, version, or contents."""


MODEL_MAGIC = "icurisk-model"
MODEL_FORMAT_VERSION = 1

POOLING_MODES = ("attention", "mean")


@dataclass
class ModelConfig:
    """Architecture switches; every field maps to a CLI flag."""

    input_dim: int = 185
    hidden: int = 32
    heads: int = 2
    bidirectional: bool = False
    pooling: str = "attention"
    recurrent: bool = True  # False: classify the single interval directly
    attn_hidden: int = 16
    dropout_in: float = 0.5
    dropout_out: float = 0.5

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.hidden < 1 or self.heads < 1 or self.attn_hidden < 1 or self.input_dim < 1:
            raise ValueError("model dimensions must be positive")
        for rate in (self.dropout_in, self.dropout_out):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rates must be in [0, 1), got {rate}")

    @property
    def state_dim(self) -> int:
        """Width of the pooled feature the classifier consumes."""
        if not self.recurrent:
            return self.input_dim
        return self.hidden * (2 if self.bidirectional else 1)


@dataclass
class LstmDirection:
    """Gate weights for one direction: input, recurrent, bias per gate."""

    Wi: Tensor; Ui: Tensor; bi: Tensor
    Wf: Tensor; Uf: Tensor; bf: Tensor
    Wo: Tensor; Uo: Tensor; bo: Tensor
    Wc: Tensor; Uc: Tensor; bc: Tensor

    FIELDS = ("Wi", "Ui", "bi", "Wf", "Uf", "bf", "Wo", "Uo", "bo", "Wc", "Uc", "bc")


@dataclass
class AttentionHead:
    """One reading head's scoring net: score = v . tanh(M s + b) + c."""

    M: Tensor
    b: Tensor
    v: Tensor
    c: Tensor

    FIELDS = ("M", "b", "v", "c")


@dataclass
class Classifier:
    w: Tensor
    b: Tensor


@dataclass
class AttentionTrace:
    """Per-head attention probabilities and states for one scored episode."""

    record_id: int | None
    weights: np.ndarray  # heads x intervals, rows sum to 1
    states: np.ndarray   # intervals x state_dim
    risk: float


@dataclass
class ForwardResult:
    risk: float
    trace: AttentionTrace | None
    tape: Tape
    output: Tensor  # probability node, for attaching a loss


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _init_direction(cfg: ModelConfig, rng: np.random.Generator) -> LstmDirection:
    d, h = cfg.input_dim, cfg.hidden

    def w() -> Tensor:
        return Tensor(_glorot(rng, h, d))

    def u() -> Tensor:
        return Tensor(_glorot(rng, h, h))

    return LstmDirection(
        Wi=w(), Ui=u(), bi=Tensor(np.zeros(h)),
        Wf=w(), Uf=u(), bf=Tensor(np.ones(h)),  # +1 favors memory retention early on
        Wo=w(), Uo=u(), bo=Tensor(np.zeros(h)),
        Wc=w(), Uc=u(), bc=Tensor(np.zeros(h)),
    )


def _init_head(cfg: ModelConfig, rng: np.random.Generator) -> AttentionHead:
    a, s = cfg.attn_hidden, cfg.state_dim
    return AttentionHead(
        M=Tensor(_glorot(rng, a, s)),
        b=Tensor(np.zeros(a)),
        v=Tensor(_glorot(rng, 1, a)),
        c=Tensor(np.zeros(1)),
    )


class ModelParams:
    """All learnable tensors plus the configuration that shaped them."""

    def __init__(self, config: ModelConfig,
                 forward_lstm: LstmDirection | None,
                 backward_lstm: LstmDirection | None,
                 heads: list[AttentionHead],
                 classifier: Classifier):
        self.config = config
        self.forward_lstm = forward_lstm
        self.backward_lstm = backward_lstm
        self.heads = heads
        self.classifier = classifier

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        """Fresh parameters: Glorot-uniform weights, zero biases except bf=+1."""
        forward_lstm = _init_direction(config, rng) if config.recurrent else None
        backward_lstm = (
            _init_direction(config, rng)
            if config.recurrent and config.bidirectional else None
        )
        heads = (
            [_init_head(config, rng) for _ in range(config.heads)]
            if config.recurrent and config.pooling == "attention" else []
        )
        classifier = Classifier(
            w=Tensor(_glorot(rng, 1, config.state_dim)),
            b=Tensor(np.zeros(1)),
        )
        return cls(config, forward_lstm, backward_lstm, heads, classifier)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """All tensors in a fixed order (also the serialization order)."""
        out: list[tuple[str, Tensor]] = []
        for prefix, direction in (("fw", self.forward_lstm), ("bw", self.backward_lstm)):
            if direction is not None:
                out.extend((f"{prefix}.{name}", getattr(direction, name))
                           for name in LstmDirection.FIELDS)
        for r, head in enumerate(self.heads):
            out.extend((f"head{r}.{name}", getattr(head, name))
                       for name in AttentionHead.FIELDS)
        out.append(("out.w", self.classifier.w))
        out.append(("out.b", self.classifier.b))
        return out

    def zero_grads(self) -> None:
        for _, tensor in self.named_parameters():
            tensor.zero_grad()

    def scale_grads(self, factor: float) -> None:
        for _, tensor in self.named_parameters():
            if tensor.grad is not None:
                tensor.grad *= factor

    def copy(self) -> "ModelParams":
        clone = ModelParams.init(self.config, np.random.default_rng(0))
        ours = dict(self.named_parameters())
        for name, tensor in clone.named_parameters():
            tensor.data = ours[name].data.copy()
        return clone


# -- forward operations -----------------------------------------------------


def _affine(tape: Tape, W: Tensor, x: Tensor, U: Tensor, h: Tensor, b: Tensor) -> Tensor:
    return tape.add(tape.add(tape.matmul(W, x), tape.matmul(U, h)), b)


def lstm_cell(tape: Tape, x: Tensor, h_prev: Tensor, c_prev: Tensor,
              d: LstmDirection) -> tuple[Tensor, Tensor]:
    """One memory/state update; returns (h, c)."""
    i = tape.sigmoid(_affine(tape, d.Wi, x, d.Ui, h_prev, d.bi))
    f = tape.sigmoid(_affine(tape, d.Wf, x, d.Uf, h_prev, d.bf))
    o = tape.sigmoid(_affine(tape, d.Wo, x, d.Uo, h_prev, d.bo))
    c_cand = tape.tanh(_affine(tape, d.Wc, x, d.Uc, h_prev, d.bc))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, c_cand))
    h = tape.mul(o, tape.tanh(c))
    return h, c


def run_lstm(tape: Tape, xs: list[Tensor], d: LstmDirection,
             reverse: bool = False) -> list[Tensor]:
    """Iterate the cell from zero states; output is aligned by interval index.

    With ``reverse`` the rows are consumed last-to-first and the states
    re-reversed, so ``states[t]`` always belongs to input ``xs[t]``.
    """
    if not xs:
        raise ValueError("run_lstm: need at least one interval")
    hidden = d.bi.data.shape[0]
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    states = []
    for x in (reversed(xs) if reverse else xs):
        h, c = lstm_cell(tape, x, h, c, d)
        states.append(h)
    return states[::-1] if reverse else states


def run_bilstm(tape: Tape, xs: list[Tensor], forward: LstmDirection,
               backward: LstmDirection) -> list[Tensor]:
    """Joint states: forward and reverse-direction states concatenated per interval."""
    fwd = run_lstm(tape, xs, forward)
    bwd = run_lstm(tape, xs, backward, reverse=True)
    return [tape.concat([f, b]) for f, b in zip(fwd, bwd)]


def attention_weights(tape: Tape, states: list[Tensor], head: AttentionHead) -> Tensor:
    """Softmax-normalized relevance of each interval's state for one head."""
    scores = [
        tape.add(tape.matmul(head.v, tape.tanh(tape.add(tape.matmul(head.M, s), head.b))), head.c)
        for s in states
    ]
    return tape.softmax(tape.concat(scores))


def read_head(tape: Tape, states: list[Tensor], weights: Tensor) -> Tensor:
    """Convex combination of states under one head's attention weights."""
    return tape.weighted_sum(states, weights)


def pool_heads(tape: Tape, readings: list[Tensor]) -> Tensor:
    """Elementwise maximum across head readings."""
    if not readings:
        raise ValueError("pool_heads: need at least one reading")
    pooled = readings[0]
    for reading in readings[1:]:
        pooled = tape.maximum(pooled, reading)
    return pooled


def mean_pool(tape: Tape, states: list[Tensor]) -> Tensor:
    """Plain average of the states over time (the no-attention baseline)."""
    return tape.mean(states)


def classify(tape: Tape, z: Tensor, classifier: Classifier) -> Tensor:
    """Risk probability sigmoid(w . z + b), as a one-element tensor."""
    return tape.sigmoid(tape.add(tape.matmul(classifier.w, z), classifier.b))


def log_loss(tape: Tape, p: Tensor, y: int) -> Tensor:
    return tape.binary_cross_entropy(p, y)


def forward_episode(X: np.ndarray, params: ModelParams, train: bool = False,
                    rng: np.random.Generator | None = None,
                    record_id: int | None = None) -> ForwardResult:
    """Score one episode's feature matrix.

    In training mode, inverted dropout is applied to every input row and to
    the pooled feature z, drawing from ``rng``.  Evaluation mode is fully
    deterministic.  The attention trace is populated only for attention
    pooling.
    """
    cfg = params.config
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise ShapeMismatchError(
            f"episode matrix {X.shape} does not match input width {cfg.input_dim}"
        )
    if X.shape[0] < 1:
        raise ValueError("episode must have at least one interval")

    tape = Tape()
    xs = [Tensor(X[t]) for t in range(X.shape[0])]
    if train and cfg.dropout_in > 0:
        xs = [tape.dropout(x, cfg.dropout_in, rng) for x in xs]

    head_weights: list[Tensor] = []
    states: list[Tensor] = []
    if cfg.recurrent:
        if cfg.bidirectional:
            states = run_bilstm(tape, xs, params.forward_lstm, params.backward_lstm)
        else:
            states = run_lstm(tape, xs, params.forward_lstm)
        if cfg.pooling == "attention":
            head_weights = [attention_weights(tape, states, head) for head in params.heads]
            readings = [read_head(tape, states, a) for a in head_weights]
            z = pool_heads(tape, readings)
        else:
            z = mean_pool(tape, states)
    else:
        if X.shape[0] != 1:
            raise ValueError(
                f"non-recurrent model expects a single interval, got {X.shape[0]}"
            )
        z = xs[0]

    if train and cfg.dropout_out > 0:
        z = tape.dropout(z, cfg.dropout_out, rng)
    p = classify(tape, z, params.classifier)

    trace = None
    if head_weights:
        trace = AttentionTrace(
            record_id=record_id,
            weights=np.stack([a.data.copy() for a in head_weights]),
            states=np.stack([s.data.copy() for s in states]),
            risk=float(p.data[0]),
        )
    return ForwardResult(risk=float(p.data[0]), trace=trace, tape=tape, output=p)


def grad_check(config: ModelConfig, seed: int, intervals: int = 4,
               step: float = 1e-5) -> float:
    """Max relative error of tape gradients vs central finite differences.

    Builds a randomly initialized model and episode from ``seed`` and checks
    every parameter entry.  Dropout must be disabled: the check needs a
    deterministic forward pass.
    """
    if config.dropout_in > 0 or config.dropout_out > 0:
        raise ValueError("gradient check requires dropout rates of 0")
    rng = np.random.default_rng(seed)
    params = ModelParams.init(config, rng)
    t = intervals if config.recurrent else 1
    X = rng.standard_normal((t, config.input_dim))
    y = 1

    def build() -> tuple[Tape, Tensor]:
        result = forward_episode(X, params, train=False)
        return result.tape, log_loss(result.tape, result.output, y)

    return check_gradients(build, [t for _, t in params.named_parameters()], step)


# -- persistence ------------------------------------------------------------


def save_model(path, params: ModelParams, preprocess_stats: PipelineStats | None = None) -> None:
    """Write a self-describing model file (JSON container).

    The fitted preprocessing statistics are embedded so a saved model can
    score raw record files on its own.
    """
    doc = {
        "magic": MODEL_MAGIC,
        "version": MODEL_FORMAT_VERSION,
        "config": asdict(params.config),
        "preprocess": preprocess_stats.to_dict() if preprocess_stats else None,
        "params": {
            name: {"shape": list(tensor.shape), "data": tensor.data.ravel().tolist()}
            for name, tensor in params.named_parameters()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> tuple[ModelParams, PipelineStats | None]:
    """Load a model file; rejects unknown magic or version."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"not a model file: magic {doc.get('magic')!r}")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc.get('version')!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    config = ModelConfig(**doc["config"])
    params = ModelParams.init(config, np.random.default_rng(0))
    saved = doc["params"]
    expected = [name for name, _ in params.named_parameters()]
    if sorted(saved) != sorted(expected):
        raise ModelFormatError("parameter names do not match the configuration")
    for name, tensor in params.named_parameters():
        entry = saved[name]
        if tuple(entry["shape"]) != tensor.shape:
            raise ModelFormatError(
                f"parameter {name}: shape {entry['shape']} does not match {tensor.shape}"
            )
        tensor.data = np.asarray(entry["data"], dtype=np.float64).reshape(tensor.shape)
    stats = PipelineStats.from_dict(doc["preprocess"]) if doc.get("preprocess") else None
    return params, stats
