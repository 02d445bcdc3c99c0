"""Numeric kernels: fully-connected layers, LSTM cell, activations, INT8 quantization.

All operations are pure functions over immutable weight data; the only mutable
piece of state is the caller-owned LstmState.  Weights may be float arrays or
symmetric per-tensor INT8 ``QuantTensor``s; activations always stay in float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

# Smallest admissible quantization scale; keeps all-zero tensors representable.
QUANT_SCALE_FLOOR = 1e-12
QUANT_MAX = 127


@dataclass
class QuantTensor:
    """Symmetric per-tensor INT8 weights: value = qdata * scale."""

    qdata: np.ndarray  # int8, any shape
    scale: float

    def __post_init__(self):
        if self.qdata.dtype != np.int8:
            raise ContractViolation("qdata must be int8")
        if not self.scale > 0:
            raise ContractViolation("quantization scale must be positive")

    @property
    def shape(self):
        return self.qdata.shape

    @property
    def rows(self) -> int:
        return self.qdata.shape[0]

    @property
    def cols(self) -> int:
        return self.qdata.shape[1]


def quantize_int8(t: np.ndarray) -> QuantTensor:
    """Quantize a float tensor to symmetric INT8 with round-to-nearest-even.

    scale = max|t| / 127, floored at a tiny epsilon so all-zero tensors stay
    valid.  Round-trip error is bounded by scale/2 per element.
    """
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ContractViolation("cannot quantize non-finite values")
    scale = max(float(np.max(np.abs(t))) / QUANT_MAX, QUANT_SCALE_FLOOR) if t.size else QUANT_SCALE_FLOOR
    # np.round implements round-half-to-even.
    q = np.clip(np.round(t / scale), -QUANT_MAX, QUANT_MAX).astype(np.int8)
    return QuantTensor(q, scale)


def dequantize(q: QuantTensor) -> np.ndarray:
    """Expand a QuantTensor back to float32 values qdata * scale."""
    return (q.qdata.astype(np.float32) * np.float32(q.scale)).astype(np.float32)


def tensor_weight(w: np.ndarray | QuantTensor) -> np.ndarray:
    """Float view of a weight tensor, dequantizing if needed."""
    if isinstance(w, QuantTensor):
        return dequantize(w)
    return w


def fc_forward(
    w: np.ndarray | QuantTensor,
    b: np.ndarray | None,
    x: np.ndarray,
) -> np.ndarray:
    """Fully-connected forward pass: w @ x + b.

    For INT8 weights the integer tensor is widened once and the per-tensor
    scale applied after accumulation (activations are never quantized).
    """
    x = np.asarray(x)
    if isinstance(w, QuantTensor):
        if w.qdata.ndim != 2 or x.ndim != 1 or w.cols != x.shape[0]:
            raise ContractViolation(
                f"fc_forward dimension mismatch: w {w.qdata.shape} vs x {x.shape}"
            )
        y = (w.qdata.astype(np.float64) @ x.astype(np.float64)) * w.scale
    else:
        w = np.asarray(w)
        if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
            raise ContractViolation(
                f"fc_forward dimension mismatch: w {w.shape} vs x {x.shape}"
            )
        y = w.astype(np.float64) @ x.astype(np.float64)
    if b is not None:
        b = np.asarray(b)
        if b.shape != (y.shape[0],):
            raise ContractViolation(f"bias shape {b.shape} does not match output {y.shape}")
        y = y + b
    return y


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ContractViolation("softmax of empty vector")
    if not np.all(np.isfinite(logits)):
        raise ContractViolation("softmax input must be finite")
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / np.sum(e)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Stable log-softmax: z - logsumexp(z)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ContractViolation("log_softmax of empty vector")
    if not np.all(np.isfinite(logits)):
        raise ContractViolation("log_softmax input must be finite")
    z = logits - np.max(logits)
    return z - math.log(np.sum(np.exp(z)))


def sigmoid(x: float) -> float:
    """Logistic sigmoid, stable for large |x|."""
    x = float(x)
    if not math.isfinite(x):
        raise ContractViolation("sigmoid input must be finite")
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def log_sigmoid(x: float) -> float:
    """log(sigmoid(x)) = -softplus(-x), computed without intermediate overflow."""
    x = float(x)
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@dataclass
class LstmLayerWeights:
    """One LSTM layer.  Gate rows are ordered (input, forget, candidate, output).

    w_x: (4H, in_dim), w_h: (4H, H), b: (4H,).
    """

    w_x: np.ndarray | QuantTensor
    w_h: np.ndarray | QuantTensor
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        w = self.w_h.qdata if isinstance(self.w_h, QuantTensor) else self.w_h
        return w.shape[1]

    @property
    def input_size(self) -> int:
        w = self.w_x.qdata if isinstance(self.w_x, QuantTensor) else self.w_x
        return w.shape[1]


@dataclass
class LstmState:
    """Per-layer hidden and cell vectors, owned by a single hypothesis."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    def copy(self) -> "LstmState":
        return LstmState([v.copy() for v in self.h], [v.copy() for v in self.c])


def lstm_zero_state(layers: list[LstmLayerWeights]) -> LstmState:
    return LstmState(
        [np.zeros(l.hidden_size, dtype=np.float64) for l in layers],
        [np.zeros(l.hidden_size, dtype=np.float64) for l in layers],
    )


def lstm_step(
    state: LstmState, x: np.ndarray, layers: list[LstmLayerWeights]
) -> tuple[LstmState, np.ndarray]:
    """Advance a stacked LSTM by one step; returns (new state, top-layer output).

    Standard cell update: input/forget/output gates with sigmoid, candidate
    with tanh; c' = f*c + i*g, h' = o*tanh(c').
    """
    if len(state.h) != len(layers) or len(state.c) != len(layers):
        raise ContractViolation("LSTM state depth does not match layer stack")
    new_h, new_c = [], []
    inp = np.asarray(x, dtype=np.float64)
    for li, layer in enumerate(layers):
        H = layer.hidden_size
        if inp.shape != (layer.input_size,):
            raise ContractViolation(
                f"LSTM layer {li} expects input of size {layer.input_size}, got {inp.shape}"
            )
        if state.h[li].shape != (H,):
            raise ContractViolation(f"LSTM layer {li} state size mismatch")
        gates = fc_forward(layer.w_x, layer.b, inp) + fc_forward(layer.w_h, None, state.h[li])
        i = _sigmoid_vec(gates[0:H])
        f = _sigmoid_vec(gates[H : 2 * H])
        g = np.tanh(gates[2 * H : 3 * H])
        o = _sigmoid_vec(gates[3 * H : 4 * H])
        c = f * state.c[li] + i * g
        h = o * np.tanh(c)
        new_h.append(h)
        new_c.append(c)
        inp = h
    return LstmState(new_h, new_c), inp


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out
