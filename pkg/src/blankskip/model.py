"""The transducer model: encoder stand-in, LSTM predictor, and both joiner variants.

The joiner combines an encoder frame and a predictor output by elementwise
addition (after optional projections to a shared join dimension) and produces
either a single (N+1)-way posterior (non-factorized) or a separately computed
blank probability and N-way non-blank distribution (factorized):

    p_blank    = sigmoid(blank_path(enc + pred))          # scalar path
    p_nonblank = (1 - p_blank) * softmax(nonblank_path(enc + pred))

Weights are immutable after load; all forward ops are pure, so concurrent
decodes over shared weights are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation
from .kernels import (
    LstmLayerWeights,
    LstmState,
    QuantTensor,
    fc_forward,
    log_sigmoid,
    log_softmax,
    lstm_step,
    lstm_zero_state,
    sigmoid,
    softmax,
    tensor_weight,
)

FACTORIZED = "factorized"
NONFACTORIZED = "nonfactorized"

# Probabilities are clamped away from {0, 1} before logs so log-domain scores
# stay finite even for fully saturated blank logits.
PROB_CLAMP = 1e-12


@dataclass
class ModelConfig:
    """Architecture descriptor; shapes of ModelWeights must agree with it."""

    vocab_size: int  # N non-blank tokens; blank is implicit
    enc_dim: int
    pred_dim: int
    join_dim: int
    joiner_kind: str = FACTORIZED
    joiner_hidden_layers: int = 0  # non-blank path (or the single non-factorized path)
    blank_hidden_layers: int = 0
    activation: str = "tanh"  # joiner hidden activation; tied to joiner_kind
    feature_dim: int = 0  # encoder input dim per frame; 0 means "same as enc_dim"
    encoder_hidden: tuple[int, ...] = ()
    frame_stack: int = 1
    frame_stride: int = 1
    embed_dim: int = 16
    pred_hidden: int = 64
    pred_layers: int = 1
    frame_duration_ms: float = 40.0

    def __post_init__(self):
        if self.feature_dim == 0:
            self.feature_dim = self.enc_dim
        self.encoder_hidden = tuple(self.encoder_hidden)

    def validate(self) -> None:
        if self.vocab_size < 1:
            raise ContractViolation("vocab_size must be >= 1")
        for name in ("enc_dim", "pred_dim", "join_dim", "embed_dim", "pred_hidden", "feature_dim"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"{name} must be >= 1")
        if self.joiner_kind not in (FACTORIZED, NONFACTORIZED):
            raise ContractViolation(f"unknown joiner_kind {self.joiner_kind!r}")
        expected = "tanh" if self.joiner_kind == FACTORIZED else "relu"
        if self.activation != expected:
            raise ContractViolation(
                f"{self.joiner_kind} joiners use {expected} activation, got {self.activation!r}"
            )
        if self.frame_stack < 1 or self.frame_stride < 1:
            raise ContractViolation("frame_stack and frame_stride must be >= 1")
        if self.frame_duration_ms <= 0:
            raise ContractViolation("frame_duration_ms must be positive")


@dataclass
class Linear:
    """A dense layer; w may be float or INT8-quantized."""

    w: np.ndarray | QuantTensor
    b: np.ndarray | None = None

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]


@dataclass
class EncoderWeights:
    """Causal FC stack over (stacked) feature windows; empty stack = identity."""

    layers: list[Linear] = field(default_factory=list)


@dataclass
class PredictorWeights:
    embedding: np.ndarray | QuantTensor  # (N, embed_dim)
    start_embedding: np.ndarray  # (embed_dim,) fed once for the empty history
    lstm: list[LstmLayerWeights] = field(default_factory=list)
    proj: Linear | None = None  # pred_hidden -> pred_dim


@dataclass
class JoinerWeights:
    """Either nf_stack (-> N+1 logits, blank at row 0) or blank/nonblank stacks."""

    enc_proj: Linear | None = None
    pred_proj: Linear | None = None
    nf_stack: list[Linear] | None = None
    blank_stack: list[Linear] | None = None
    nonblank_stack: list[Linear] | None = None


@dataclass
class ModelWeights:
    config: ModelConfig
    encoder: EncoderWeights
    predictor: PredictorWeights
    joiner: JoinerWeights


@dataclass
class EncFrame:
    """One encoder output step."""

    t: int
    vec: np.ndarray


@dataclass
class PredOut:
    """Predictor output after u emitted tokens, with its recurrent state."""

    u: int
    vec: np.ndarray
    state: LstmState


@dataclass
class Posterior:
    """Blank + non-blank distribution at one (enc, pred) pair.

    p_nonblank is None when the non-blank computation was skipped; in that
    case only the blank fields are meaningful.
    """

    p_blank: float
    log_p_blank: float
    p_nonblank: np.ndarray | None = None
    log_p_nonblank: np.ndarray | None = None


def clamp_prob(p: float) -> float:
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def _activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(x)
    if activation == "relu":
        return np.maximum(x, 0.0)
    raise ContractViolation(f"unknown activation {activation!r}")


def run_stack(layers: list[Linear], x: np.ndarray, activation: str) -> np.ndarray:
    """FC stack with the activation between layers (none after the last)."""
    for i, layer in enumerate(layers):
        x = fc_forward(layer.w, layer.b, x)
        if i + 1 < len(layers):
            x = _activate(x, activation)
    return x


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


def frame_windows(features: np.ndarray, stack: int, stride: int) -> np.ndarray:
    """Stack `stack` consecutive frames and subsample by `stride`.

    Output row j concatenates features[j*stride : j*stride + stack]; windows
    that would run past the end are dropped.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ContractViolation("features must be a non-empty (T, dim) array")
    T = features.shape[0]
    n_out = (T - stack) // stride + 1
    if n_out <= 0:
        raise ContractViolation(f"{T} frames cannot fill a window of {stack}")
    return np.stack(
        [features[j * stride : j * stride + stack].reshape(-1) for j in range(n_out)]
    )


def encode(model: ModelWeights, features: np.ndarray) -> list[EncFrame]:
    """Run the encoder stand-in over a feature sequence; one EncFrame per output step."""
    cfg = model.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
        raise ContractViolation(
            f"encoder expects (T, {cfg.feature_dim}) features, got {features.shape}"
        )
    windows = frame_windows(features, cfg.frame_stack, cfg.frame_stride)
    frames = []
    for t, win in enumerate(windows):
        vec = run_stack(model.encoder.layers, win, "tanh") if model.encoder.layers else win
        if vec.shape != (cfg.enc_dim,):
            raise ContractViolation(
                f"encoder produced dim {vec.shape}, config says {cfg.enc_dim}"
            )
        frames.append(EncFrame(t, vec))
    return frames


def encode_stream(model: ModelWeights, features: np.ndarray):
    """Generator form of encode(), used by the pipelined decode mode."""
    cfg = model.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
        raise ContractViolation(
            f"encoder expects (T, {cfg.feature_dim}) features, got {features.shape}"
        )
    windows = frame_windows(features, cfg.frame_stack, cfg.frame_stride)
    for t, win in enumerate(windows):
        vec = run_stack(model.encoder.layers, win, "tanh") if model.encoder.layers else win
        yield EncFrame(t, vec)


# ---------------------------------------------------------------------------
# Predictor
# ---------------------------------------------------------------------------


def start_pred(model: ModelWeights) -> PredOut:
    """Predictor output for the empty history: zero LSTM state advanced once
    on the start embedding."""
    pred = model.predictor
    state = lstm_zero_state(pred.lstm)
    state, top = lstm_step(state, np.asarray(pred.start_embedding, dtype=np.float64), pred.lstm)
    vec = fc_forward(pred.proj.w, pred.proj.b, top) if pred.proj else top
    return PredOut(0, vec, state)


def predict(model: ModelWeights, prev: PredOut, token: int) -> PredOut:
    """Advance the predictor by one emitted token."""
    cfg = model.config
    if not 0 <= token < cfg.vocab_size:
        raise ContractViolation(f"token {token} outside [0, {cfg.vocab_size})")
    pred = model.predictor
    emb = tensor_weight(pred.embedding)[token].astype(np.float64)
    state, top = lstm_step(prev.state, emb, pred.lstm)
    vec = fc_forward(pred.proj.w, pred.proj.b, top) if pred.proj else top
    return PredOut(prev.u + 1, vec, state)


# ---------------------------------------------------------------------------
# Joiners
# ---------------------------------------------------------------------------


def join_input(model: ModelWeights, enc_vec: np.ndarray, pred_vec: np.ndarray) -> np.ndarray:
    """Project (if configured) and add the encoder and predictor vectors."""
    cfg = model.config
    enc_vec = np.asarray(enc_vec, dtype=np.float64)
    pred_vec = np.asarray(pred_vec, dtype=np.float64)
    if enc_vec.shape != (cfg.enc_dim,):
        raise ContractViolation(f"enc vector dim {enc_vec.shape} != enc_dim {cfg.enc_dim}")
    if pred_vec.shape != (cfg.pred_dim,):
        raise ContractViolation(f"pred vector dim {pred_vec.shape} != pred_dim {cfg.pred_dim}")
    j = model.joiner
    e = fc_forward(j.enc_proj.w, j.enc_proj.b, enc_vec) if j.enc_proj else enc_vec
    p = fc_forward(j.pred_proj.w, j.pred_proj.b, pred_vec) if j.pred_proj else pred_vec
    if e.shape != (cfg.join_dim,) or p.shape != (cfg.join_dim,):
        raise ContractViolation("projected enc/pred dims do not match join_dim")
    return e + p


def blank_logit(model: ModelWeights, x: np.ndarray) -> float:
    """Scalar blank-path logit; cost is independent of the vocabulary size."""
    j = model.joiner
    if j.blank_stack is None:
        raise ContractViolation("model has no factorized blank path")
    out = run_stack(j.blank_stack, x, model.config.activation)
    if out.shape != (1,):
        raise ContractViolation(f"blank path must output exactly 1 logit, got {out.shape}")
    return float(out[0])


def nonblank_logits(model: ModelWeights, x: np.ndarray) -> np.ndarray:
    j = model.joiner
    if j.nonblank_stack is None:
        raise ContractViolation("model has no factorized non-blank path")
    out = run_stack(j.nonblank_stack, x, model.config.activation)
    if out.shape != (model.config.vocab_size,):
        raise ContractViolation("non-blank path output dim != vocab_size")
    return out


def nf_logits(model: ModelWeights, x: np.ndarray) -> np.ndarray:
    """Non-factorized joiner logits: blank at index 0, token k at index k+1."""
    j = model.joiner
    if j.nf_stack is None:
        raise ContractViolation("model has no non-factorized joiner")
    out = run_stack(j.nf_stack, x, model.config.activation)
    if out.shape != (model.config.vocab_size + 1,):
        raise ContractViolation("non-factorized joiner output dim != vocab_size + 1")
    return out


def joiner_blank(model: ModelWeights, enc: EncFrame, pred: PredOut) -> float:
    """Factorized blank probability sigmoid(blank_path(enc + pred))."""
    return sigmoid(blank_logit(model, join_input(model, enc.vec, pred.vec)))


def joiner_nonblank(
    model: ModelWeights, enc: EncFrame, pred: PredOut, p_blank: float
) -> np.ndarray:
    """Factorized non-blank probabilities (1 - p_blank) * softmax(nonblank logits)."""
    x = join_input(model, enc.vec, pred.vec)
    return (1.0 - p_blank) * softmax(nonblank_logits(model, x))


def joiner_nonfactorized(model: ModelWeights, enc: EncFrame, pred: PredOut) -> Posterior:
    """Full (N+1)-way posterior from a single softmax."""
    x = join_input(model, enc.vec, pred.vec)
    logp = log_softmax(nf_logits(model, x))
    p = np.exp(logp)
    return Posterior(
        p_blank=float(p[0]),
        log_p_blank=float(logp[0]),
        p_nonblank=p[1:],
        log_p_nonblank=logp[1:],
    )


def posterior(model: ModelWeights, enc: EncFrame, pred: PredOut) -> Posterior:
    """Full posterior for either joiner kind (never skips the non-blank part)."""
    if model.config.joiner_kind == NONFACTORIZED:
        return joiner_nonfactorized(model, enc, pred)
    x = join_input(model, enc.vec, pred.vec)
    lb = blank_logit(model, x)
    p_b = sigmoid(lb)
    log_pb = log_sigmoid(lb)
    log1m_pb = log_sigmoid(-lb)
    log_nb = log1m_pb + log_softmax(nonblank_logits(model, x))
    return Posterior(
        p_blank=p_b,
        log_p_blank=log_pb,
        p_nonblank=np.exp(log_nb),
        log_p_nonblank=log_nb,
    )


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def _stack_dims(layers: list[Linear], in_dim: int, out_dim: int, what: str) -> None:
    cur = in_dim
    for i, layer in enumerate(layers):
        if layer.in_dim != cur:
            raise ContractViolation(f"{what} layer {i} expects in_dim {cur}, has {layer.in_dim}")
        if layer.b is not None and np.asarray(layer.b).shape != (layer.out_dim,):
            raise ContractViolation(f"{what} layer {i} bias shape mismatch")
        cur = layer.out_dim
    if cur != out_dim:
        raise ContractViolation(f"{what} must end at dim {out_dim}, ends at {cur}")


def validate_model(model: ModelWeights) -> None:
    """Check that all weight shapes are mutually consistent with the config."""
    cfg = model.config
    cfg.validate()
    if model.encoder.layers:
        _stack_dims(
            model.encoder.layers, cfg.feature_dim * cfg.frame_stack, cfg.enc_dim, "encoder"
        )
    elif cfg.feature_dim * cfg.frame_stack != cfg.enc_dim:
        raise ContractViolation("identity encoder requires stacked feature dim == enc_dim")
    pred = model.predictor
    if tensor_weight(pred.embedding).shape != (cfg.vocab_size, cfg.embed_dim):
        raise ContractViolation("embedding shape != (vocab_size, embed_dim)")
    if np.asarray(pred.start_embedding).shape != (cfg.embed_dim,):
        raise ContractViolation("start_embedding shape != (embed_dim,)")
    if len(pred.lstm) != cfg.pred_layers:
        raise ContractViolation("predictor LSTM depth != pred_layers")
    in_dim = cfg.embed_dim
    for li, layer in enumerate(pred.lstm):
        if layer.input_size != in_dim or layer.hidden_size != cfg.pred_hidden:
            raise ContractViolation(f"predictor LSTM layer {li} shape mismatch")
        in_dim = cfg.pred_hidden
    if pred.proj is not None:
        _stack_dims([pred.proj], cfg.pred_hidden, cfg.pred_dim, "predictor projection")
    elif cfg.pred_hidden != cfg.pred_dim:
        raise ContractViolation("predictor without projection requires pred_hidden == pred_dim")
    j = model.joiner
    if j.enc_proj is not None:
        _stack_dims([j.enc_proj], cfg.enc_dim, cfg.join_dim, "enc projection")
    elif cfg.enc_dim != cfg.join_dim:
        raise ContractViolation("missing enc projection with enc_dim != join_dim")
    if j.pred_proj is not None:
        _stack_dims([j.pred_proj], cfg.pred_dim, cfg.join_dim, "pred projection")
    elif cfg.pred_dim != cfg.join_dim:
        raise ContractViolation("missing pred projection with pred_dim != join_dim")
    if cfg.joiner_kind == FACTORIZED:
        if j.blank_stack is None or j.nonblank_stack is None:
            raise ContractViolation("factorized model requires blank and non-blank stacks")
        if j.nf_stack is not None:
            raise ContractViolation("factorized model must not carry an nf stack")
        _stack_dims(j.blank_stack, cfg.join_dim, 1, "blank path")
        _stack_dims(j.nonblank_stack, cfg.join_dim, cfg.vocab_size, "non-blank path")
        if len(j.blank_stack) != cfg.blank_hidden_layers + 1:
            raise ContractViolation("blank path depth != blank_hidden_layers + 1")
        if len(j.nonblank_stack) != cfg.joiner_hidden_layers + 1:
            raise ContractViolation("non-blank path depth != joiner_hidden_layers + 1")
    else:
        if j.nf_stack is None:
            raise ContractViolation("non-factorized model requires an nf stack")
        if j.blank_stack is not None or j.nonblank_stack is not None:
            raise ContractViolation("non-factorized model must not carry factorized stacks")
        _stack_dims(j.nf_stack, cfg.join_dim, cfg.vocab_size + 1, "nf joiner")
        if len(j.nf_stack) != cfg.joiner_hidden_layers + 1:
            raise ContractViolation("nf joiner depth != joiner_hidden_layers + 1")


def model_tensors(model: ModelWeights) -> list[tuple[str, np.ndarray | QuantTensor]]:
    """Deterministically ordered (name, tensor) pairs; the file-format manifest order."""
    out: list[tuple[str, np.ndarray | QuantTensor]] = []

    def add(name, t):
        if t is not None:
            out.append((name, t))

    for i, layer in enumerate(model.encoder.layers):
        add(f"encoder.{i}.w", layer.w)
        add(f"encoder.{i}.b", layer.b)
    add("predictor.embedding", model.predictor.embedding)
    add("predictor.start_embedding", model.predictor.start_embedding)
    for i, layer in enumerate(model.predictor.lstm):
        add(f"predictor.lstm.{i}.w_x", layer.w_x)
        add(f"predictor.lstm.{i}.w_h", layer.w_h)
        add(f"predictor.lstm.{i}.b", layer.b)
    if model.predictor.proj is not None:
        add("predictor.proj.w", model.predictor.proj.w)
        add("predictor.proj.b", model.predictor.proj.b)
    j = model.joiner
    if j.enc_proj is not None:
        add("joiner.enc_proj.w", j.enc_proj.w)
        add("joiner.enc_proj.b", j.enc_proj.b)
    if j.pred_proj is not None:
        add("joiner.pred_proj.w", j.pred_proj.w)
        add("joiner.pred_proj.b", j.pred_proj.b)
    for stack_name in ("nf_stack", "blank_stack", "nonblank_stack"):
        stack = getattr(j, stack_name)
        if stack is None:
            continue
        short = {"nf_stack": "nf", "blank_stack": "blank", "nonblank_stack": "nonblank"}[stack_name]
        for i, layer in enumerate(stack):
            add(f"joiner.{short}.{i}.w", layer.w)
            add(f"joiner.{short}.{i}.b", layer.b)
    return out


def count_params(model: ModelWeights, component: str) -> int:
    """Total scalar parameters in one component ('encoder'/'predictor'/'joiner.*')."""
    total = 0
    for name, t in model_tensors(model):
        if name.startswith(component):
            arr = t.qdata if isinstance(t, QuantTensor) else np.asarray(t)
            total += arr.size
    return total


def quantize_model(model: ModelWeights) -> ModelWeights:
    """Return a copy with every 2-D float weight matrix INT8-quantized.

    Biases and 1-D tensors stay float: they are negligible for the memory-energy
    story and keep accumulation simple.
    """
    from .kernels import quantize_int8

    def q(t):
        if t is None or isinstance(t, QuantTensor):
            return t
        arr = np.asarray(t)
        return quantize_int8(arr) if arr.ndim == 2 else t

    def q_linear(l: Linear | None):
        return None if l is None else Linear(q(l.w), l.b)

    def q_stack(stack):
        return None if stack is None else [q_linear(l) for l in stack]

    enc = EncoderWeights([q_linear(l) for l in model.encoder.layers])
    pred = PredictorWeights(
        embedding=q(model.predictor.embedding),
        start_embedding=model.predictor.start_embedding,
        lstm=[
            LstmLayerWeights(q(l.w_x), q(l.w_h), l.b) for l in model.predictor.lstm
        ],
        proj=q_linear(model.predictor.proj),
    )
    joiner = JoinerWeights(
        enc_proj=q_linear(model.joiner.enc_proj),
        pred_proj=q_linear(model.joiner.pred_proj),
        nf_stack=q_stack(model.joiner.nf_stack),
        blank_stack=q_stack(model.joiner.blank_stack),
        nonblank_stack=q_stack(model.joiner.nonblank_stack),
    )
    return ModelWeights(replace(model.config), enc, pred, joiner)
