"""Test fixture: build factorized joiner weights that reproduce a (t, u)-indexed
posterior table exactly.

The construction routes one-hot information through the real model machinery:

* encoder frames are one-hot in t (use ``one_hot_frames``; the encoder is the
  identity);
* the predictor is an LSTM wired as a saturated shift register whose FC
  projection emits exactly one-hot(u) (solved against the simulated hidden
  patterns, so gate-saturation residuals are absorbed);
* each joiner path has one tanh hidden layer of T*U "(t,u) detector" units
  (weights 1 on the matching enc and pred dims, bias -1.5) whose output
  projection is solved linearly so that the blank logit equals
  logit(p_blank[t,u]) and the non-blank logits equal the log of the
  renormalized non-blank mass.

Valid only for t < T and u < U; keep the beam's per-frame symbol budget below
U so decoding never leaves the table.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .kernels import LstmLayerWeights, lstm_step, lstm_zero_state
from .model import (
    FACTORIZED,
    EncoderWeights,
    JoinerWeights,
    Linear,
    ModelConfig,
    ModelWeights,
    PredictorWeights,
    clamp_prob,
)

_GATE_SAT = 30.0  # bias magnitude that saturates a gate
_DETECT = 100.0  # recurrent weight detecting the previous register position


def one_hot_frames(T: int, dim: int) -> np.ndarray:
    """Feature rows e_t for feeding a table model through the identity encoder."""
    if dim < T:
        raise ContractViolation("one-hot frames need dim >= T")
    return np.eye(T, dim, dtype=np.float32)


def make_posterior_model(
    p_blank: np.ndarray,
    p_nonblank: np.ndarray,
    frame_duration_ms: float = 40.0,
) -> ModelWeights:
    """Factorized model whose posterior at (frame t, u emitted tokens) equals the
    target table row, for any emitted token identities.

    p_blank: (T, U) blank probabilities; p_nonblank: (T, U, N) non-blank
    probabilities.  Every row must satisfy p_blank + sum(p_nonblank) == 1.
    """
    p_blank = np.asarray(p_blank, dtype=np.float64)
    p_nonblank = np.asarray(p_nonblank, dtype=np.float64)
    if p_blank.ndim != 2 or p_nonblank.ndim != 3 or p_nonblank.shape[:2] != p_blank.shape:
        raise ContractViolation("tables must be (T,U) blank and (T,U,N) non-blank")
    T, U = p_blank.shape
    N = p_nonblank.shape[2]
    if min(T, U, N) < 1:
        raise ContractViolation("table dims must be >= 1")
    if np.any(p_blank <= 0) or np.any(p_blank >= 1) or np.any(p_nonblank < 0):
        raise ContractViolation("target probabilities must lie in (0,1)")
    total = p_blank + p_nonblank.sum(axis=2)
    if np.max(np.abs(total - 1.0)) > 1e-6:
        raise ContractViolation("unnormalized target row: blank + non-blank mass != 1")

    D = T + U
    H = max(U - 1, 1)
    cfg = ModelConfig(
        vocab_size=N,
        enc_dim=D,
        pred_dim=D,
        join_dim=D,
        joiner_kind=FACTORIZED,
        joiner_hidden_layers=1,
        blank_hidden_layers=1,
        activation="tanh",
        feature_dim=D,
        embed_dim=1,
        pred_hidden=H,
        pred_layers=1,
        frame_duration_ms=frame_duration_ms,
    )

    lstm = [_shift_register_layer(H)]
    proj = _onehot_projection(lstm, T, U, D, H)
    predictor = PredictorWeights(
        embedding=np.zeros((N, 1), dtype=np.float64),
        start_embedding=np.zeros(1, dtype=np.float64),
        lstm=lstm,
        proj=proj,
    )

    detect = _detector_layer(T, U)
    P = _pattern_matrix(T, U)
    blank_targets = np.array(
        [[_logit(clamp_prob(p_blank[t, u])) for u in range(U)] for t in range(T)]
    ).reshape(T * U)
    w2_blank = np.linalg.solve(P, blank_targets).reshape(1, T * U)

    renorm = p_nonblank / np.maximum(1.0 - p_blank, 1e-12)[:, :, None]
    nb_targets = np.log(np.maximum(renorm, 1e-15)).reshape(T * U, N)
    w2_nb = np.linalg.solve(P, nb_targets).T  # (N, T*U)

    joiner = JoinerWeights(
        blank_stack=[detect, Linear(w2_blank, np.zeros(1))],
        nonblank_stack=[_detector_layer(T, U), Linear(w2_nb, np.zeros(N))],
    )
    return ModelWeights(cfg, EncoderWeights([]), predictor, joiner)


def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def _shift_register_layer(H: int) -> LstmLayerWeights:
    """LSTM layer acting as a step counter / shift register.

    Forget, candidate, and output gates are saturated open; input gate of
    register j opens once register j-1 is active (register 0 is always open),
    so cell j counts the steps since position j was reached and h becomes a
    thermometer code of the step count.
    """
    w_x = np.zeros((4 * H, 1), dtype=np.float64)
    w_h = np.zeros((4 * H, H), dtype=np.float64)
    b = np.full(4 * H, _GATE_SAT, dtype=np.float64)
    b[0] = _GATE_SAT  # input gate, register 0: always open
    for j in range(1, H):
        b[j] = -_DETECT / 2.0
        w_h[j, j - 1] = _DETECT
    return LstmLayerWeights(w_x, w_h, b)


def _onehot_projection(lstm, T: int, U: int, D: int, H: int) -> Linear:
    """Solve the FC projection so pred_vec(u) == e_{T+u} exactly.

    Simulates the actual LSTM (including the start-embedding step) to collect
    the hidden pattern for each u, then solves the affine system.
    """
    patterns = []
    state = lstm_zero_state(lstm)
    state, top = lstm_step(state, np.zeros(1), lstm)  # start-embedding step
    patterns.append(top)
    for _ in range(U - 1):
        state, top = lstm_step(state, np.zeros(1), lstm)
        patterns.append(top)
    targets = np.zeros((U, D), dtype=np.float64)
    for u in range(U):
        targets[u, T + u] = 1.0
    if U == 1:
        return Linear(np.zeros((D, H)), targets[0])
    haug = np.hstack([np.stack(patterns), np.ones((U, 1))])  # (U, H+1), square
    sol = np.linalg.solve(haug, targets)  # (H+1, D)
    return Linear(sol[:H].T.copy(), sol[H].copy())


def _detector_layer(T: int, U: int) -> Linear:
    w1 = np.zeros((T * U, T + U), dtype=np.float64)
    for t in range(T):
        for u in range(U):
            w1[t * U + u, t] = 1.0
            w1[t * U + u, T + u] = 1.0
    return Linear(w1, np.full(T * U, -1.5, dtype=np.float64))


def _pattern_matrix(T: int, U: int) -> np.ndarray:
    """Hidden activations of the detector layer for every one-hot (t,u) input."""
    same_t = np.kron(np.eye(T), np.ones((U, U)))
    same_u = np.kron(np.ones((T, T)), np.eye(U))
    return np.tanh(same_t + same_u - 1.5)


def random_tables(
    rng: np.random.Generator, T: int, U: int, N: int, blank_bias: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Random normalized posterior tables; blank_bias > 0 tilts mass toward blank."""
    blank_logits = rng.normal(blank_bias, 1.5, size=(T, U))
    p_b = 1.0 / (1.0 + np.exp(-blank_logits))
    raw = rng.dirichlet(np.ones(N), size=(T, U))
    p_nb = raw * (1.0 - p_b)[:, :, None]
    return p_b, p_nb
