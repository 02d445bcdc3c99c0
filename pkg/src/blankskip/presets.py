"""Desk-scale model presets.

These mirror the published architecture's *shape* (factorized vs not, hidden
layer counts) at desk-friendly sizes: 64-dim encoder output, a 2x64 LSTM
predictor, and a 64-token vocabulary.  Full-size components exist only as byte
tables for the power model (see power.PAPER_BYTES).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .kernels import LstmLayerWeights
from .model import (
    FACTORIZED,
    NONFACTORIZED,
    EncoderWeights,
    JoinerWeights,
    Linear,
    ModelConfig,
    ModelWeights,
    PredictorWeights,
    quantize_model,
    validate_model,
)

DESK_DIM = 64
DESK_VOCAB = 64

PRESETS = ("desk-f-small", "desk-f-large", "desk-nf-small", "desk-nf-large")


def desk_config(name: str) -> ModelConfig:
    if name not in PRESETS:
        raise ContractViolation(f"unknown preset {name!r}; choose from {PRESETS}")
    factorized = "-f-" in name
    large = name.endswith("large")
    return ModelConfig(
        vocab_size=DESK_VOCAB,
        enc_dim=DESK_DIM,
        pred_dim=DESK_DIM,
        join_dim=DESK_DIM,
        joiner_kind=FACTORIZED if factorized else NONFACTORIZED,
        joiner_hidden_layers=6 if large else 0,
        blank_hidden_layers=(1 if large else 0) if factorized else 0,
        activation="tanh" if factorized else "relu",
        feature_dim=DESK_DIM,
        encoder_hidden=(DESK_DIM,),
        embed_dim=32,
        pred_hidden=DESK_DIM,
        pred_layers=2,
    )


def _init_linear(rng: np.random.Generator, out_dim: int, in_dim: int, bias=True) -> Linear:
    w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
    return Linear(w, np.zeros(out_dim) if bias else None)


def _init_stack(rng, in_dim, hidden_layers, hidden_dim, out_dim) -> list[Linear]:
    dims = [in_dim] + [hidden_dim] * hidden_layers + [out_dim]
    return [_init_linear(rng, dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


def _init_lstm(rng, in_dim, hidden) -> LstmLayerWeights:
    w_x = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(4 * hidden, in_dim))
    w_h = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(4 * hidden, hidden))
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return LstmLayerWeights(w_x, w_h, b)


def desk_model(
    name: str, seed: int = 0, blank_bias: float = 1.5, quantize: bool = False
) -> ModelWeights:
    """Randomly initialized desk-scale model.

    blank_bias shifts the blank logit so random models behave like transducers
    (blank-dominated output) rather than emitting on every pop.
    """
    cfg = desk_config(name)
    rng = np.random.default_rng(seed)
    enc_dims = [cfg.feature_dim * cfg.frame_stack, *cfg.encoder_hidden, cfg.enc_dim]
    encoder = EncoderWeights(
        [_init_linear(rng, enc_dims[i + 1], enc_dims[i]) for i in range(len(enc_dims) - 1)]
    )
    lstm = []
    in_dim = cfg.embed_dim
    for _ in range(cfg.pred_layers):
        lstm.append(_init_lstm(rng, in_dim, cfg.pred_hidden))
        in_dim = cfg.pred_hidden
    predictor = PredictorWeights(
        embedding=rng.normal(0.0, 0.5, size=(cfg.vocab_size, cfg.embed_dim)),
        start_embedding=rng.normal(0.0, 0.5, size=cfg.embed_dim),
        lstm=lstm,
        proj=_init_linear(rng, cfg.pred_dim, cfg.pred_hidden),
    )
    if cfg.joiner_kind == FACTORIZED:
        blank_stack = _init_stack(rng, cfg.join_dim, cfg.blank_hidden_layers, cfg.join_dim, 1)
        blank_stack[-1].b[0] += blank_bias
        nonblank_stack = _init_stack(
            rng, cfg.join_dim, cfg.joiner_hidden_layers, cfg.join_dim, cfg.vocab_size
        )
        joiner = JoinerWeights(blank_stack=blank_stack, nonblank_stack=nonblank_stack)
    else:
        nf_stack = _init_stack(
            rng, cfg.join_dim, cfg.joiner_hidden_layers, cfg.join_dim, cfg.vocab_size + 1
        )
        nf_stack[-1].b[0] += blank_bias
        joiner = JoinerWeights(nf_stack=nf_stack)
    model = ModelWeights(cfg, encoder, predictor, joiner)
    validate_model(model)
    return quantize_model(model) if quantize else model
