"""Synthetic artifact generators: calibrated spiky trace suites, posterior-table
fixtures, and random small models for oracle checks.

The spiky suite is a set of encoder traces plus a "carrier" model whose blank
logit is read straight off the first trace dimension (the predictor path
contributes zero), so the blank probability seen by every joiner call is known
by construction.  Frame logits are a two-mode mixture: with probability q a
high mode (logit ~ N(10, 0.5) clipped to [9, 14], all above the 0.9997
spike line) and otherwise a moderate mode (logit ~ U(0.2, 2.45)).  The suite
manifest records the realized mixture, the designed NBP for every sweep
threshold, and the mandated decode config (beam width 1) under which calls
map 1:1 to frames and those designed values are exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .decoder import BeamConfig
from .errors import ContractViolation
from .formats import TRACE_FEATURES, TraceData, write_model, write_trace
from .kernels import LstmLayerWeights
from .metrics import nbp
from .model import (
    FACTORIZED,
    EncoderWeights,
    JoinerWeights,
    Linear,
    ModelConfig,
    ModelWeights,
    PredictorWeights,
    validate_model,
)
from .runner import decode_traces, merged_stats
from .tables import make_posterior_model, one_hot_frames, random_tables

SPIKE_LINE = 0.9997  # blank probabilities above this count as "spiky"
HIGH_MODE = (10.0, 0.5, 9.0, 14.0)  # mean, std, clip lo, clip hi
MODERATE_MODE = (0.2, 2.45)  # uniform lo, hi
PASSTHROUGH_SCALE = 100.0  # large-carrier blank path: logit ~= S * tanh(x / S)
SUITE_MANIFEST = "suite.json"
SWEEP_THRESHES = (16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.1)

# The suite's reference decode config.  At beam width 1 with the carrier's
# moderate mode bounded below 0.95 blank probability and a near-uniform
# non-blank softmax, every frame triggers exactly one pop and no prefix
# merges, so blank-joiner calls correspond 1:1 to frames.
SUITE_BEAM = BeamConfig(beam_width=1, max_symbols_per_frame=10)


def _zero_predictor(dim: int, vocab: int) -> PredictorWeights:
    hidden = 8
    return PredictorWeights(
        embedding=np.zeros((vocab, 4)),
        start_embedding=np.zeros(4),
        lstm=[LstmLayerWeights(np.zeros((4 * hidden, 4)), np.zeros((4 * hidden, hidden)),
                               np.zeros(4 * hidden))],
        proj=Linear(np.zeros((dim, hidden)), np.zeros(dim)),
    )


def carrier_model(joiner_size: str, dim: int = 64, seed: int = 0) -> ModelWeights:
    """Factorized model whose blank logit is trace dim 0 and whose non-blank
    softmax is (near-)uniform.

    'small' is projection-only and exact; 'large' mirrors the big-joiner shape
    (1 hidden blank layer, 6 hidden non-blank layers) with a tanh pass-through
    blank path (relative logit error < 1e-3 over the mixture's range).
    """
    if joiner_size not in ("small", "large"):
        raise ContractViolation("joiner_size must be 'small' or 'large'")
    vocab = dim - 1
    large = joiner_size == "large"
    cfg = ModelConfig(
        vocab_size=vocab,
        enc_dim=dim,
        pred_dim=dim,
        join_dim=dim,
        joiner_kind=FACTORIZED,
        joiner_hidden_layers=6 if large else 0,
        blank_hidden_layers=1 if large else 0,
        activation="tanh",
        feature_dim=dim,
        embed_dim=4,
        pred_hidden=8,
        pred_layers=1,
    )
    if large:
        h1 = np.zeros((dim, dim))
        h1[0, 0] = 1.0 / PASSTHROUGH_SCALE
        out = np.zeros((1, dim))
        out[0, 0] = PASSTHROUGH_SCALE
        blank_stack = [Linear(h1, np.zeros(dim)), Linear(out, np.zeros(1))]
        rng = np.random.default_rng(seed)
        width = 128
        dims = [dim] + [width] * 6 + [vocab]
        nonblank_stack = [
            Linear(rng.normal(0.0, 1e-3, size=(dims[i + 1], dims[i])), np.zeros(dims[i + 1]))
            for i in range(len(dims) - 1)
        ]
    else:
        sel = np.zeros((1, dim))
        sel[0, 0] = 1.0
        blank_stack = [Linear(sel, np.zeros(1))]
        token_sel = np.zeros((vocab, dim))
        for k in range(vocab):
            token_sel[k, 1 + k] = 1.0
        nonblank_stack = [Linear(token_sel, np.zeros(vocab))]
    model = ModelWeights(
        cfg,
        EncoderWeights([]),
        _zero_predictor(dim, vocab),
        JoinerWeights(blank_stack=blank_stack, nonblank_stack=nonblank_stack),
    )
    validate_model(model)
    return model


def carrier_blank_logit(logit: np.ndarray, joiner_size: str) -> np.ndarray:
    """Effective blank logit the carrier produces for a trace logit."""
    if joiner_size == "large":
        return PASSTHROUGH_SCALE * np.tanh(logit / PASSTHROUGH_SCALE)
    return np.asarray(logit, dtype=np.float64)


def gen_spiky_suite(
    out_dir,
    utterances: int = 100,
    frames: int = 120,
    target_high_frac: float = 0.5,
    joiner_size: str = "small",
    dim: int = 64,
    seed: int = 0,
    self_check: bool = True,
) -> dict:
    """Write a calibrated spiky suite (model + traces + manifest); returns the manifest."""
    if utterances < 1 or frames < 1:
        raise ContractViolation("need at least one utterance and one frame")
    if not 0.0 <= target_high_frac <= 1.0:
        raise ContractViolation("target_high_frac must be in [0, 1]")
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    total = utterances * frames
    n_high = int(round(target_high_frac * total))
    flags = np.zeros(total, dtype=bool)
    flags[:n_high] = True
    rng.shuffle(flags)
    mu, sd, lo, hi = HIGH_MODE
    logits = np.where(
        flags,
        np.clip(rng.normal(mu, sd, size=total), lo, hi),
        rng.uniform(*MODERATE_MODE, size=total),
    ).astype(np.float32)

    model = carrier_model(joiner_size, dim=dim, seed=seed)
    model_path = out / "model.bskm"
    write_model(model_path, model)

    trace_paths = []
    for i in range(utterances):
        body = np.zeros((frames, dim), dtype=np.float32)
        body[:, 0] = logits[i * frames : (i + 1) * frames]
        trace = TraceData(TRACE_FEATURES, body, model.config.frame_duration_ms, dim - 1)
        path = out / "traces" / f"utt_{i:04d}.bskt"
        write_trace(path, trace)
        trace_paths.append(path.name)

    eff = carrier_blank_logit(logits.astype(np.float64), joiner_size)
    p_blank = 1.0 / (1.0 + np.exp(-eff))
    realized_high = float(np.mean(p_blank > SPIKE_LINE))
    designed_nbp = {"disabled": 100.0}
    for t in SWEEP_THRESHES:
        designed_nbp[f"{t:g}"] = 100.0 * float(np.mean(eff <= t))

    manifest = {
        "kind": "spiky-suite",
        "version": 1,
        "joiner_size": joiner_size,
        "dim": dim,
        "vocab_size": dim - 1,
        "utterances": utterances,
        "frames_per_utterance": frames,
        "seed": seed,
        "model": model_path.name,
        "traces": trace_paths,
        "mixture": {
            "target_high_frac": target_high_frac,
            "high_mode_logit": {"normal_mean": mu, "normal_std": sd, "clip": [lo, hi]},
            "moderate_mode_logit": {"uniform": list(MODERATE_MODE)},
        },
        "spike_line": SPIKE_LINE,
        "realized_high_frac": realized_high,
        "designed_nbp": designed_nbp,
        "decode_config": {
            "beam_width": SUITE_BEAM.beam_width,
            "max_symbols_per_frame": SUITE_BEAM.max_symbols_per_frame,
            "note": "designed NBP values are exact at beam width 1, where joiner "
                    "calls map 1:1 to frames (no prefix merges, no extension pops)",
        },
    }
    if abs(realized_high - target_high_frac) > 0.02:
        raise ContractViolation(
            f"mixture calibration failed: realized {realized_high:.4f} vs target {target_high_frac}"
        )
    if self_check:
        manifest["self_check"] = _self_check(out, model, designed_nbp)
    with open(out / SUITE_MANIFEST, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _self_check(out: Path, model: ModelWeights, designed: dict) -> dict:
    """Decode the generated suite at the reference config and compare measured
    NBP with the designed value at thresh 8 (and 100% at disabled)."""
    from .formats import list_traces, read_trace

    traces = [(p.name, read_trace(p)) for p in list_traces(out / "traces")]
    checks = {}
    for label, thresh in (("8", 8.0), ("disabled", None)):
        cfg = BeamConfig(
            beam_width=SUITE_BEAM.beam_width,
            thresh=thresh,
            max_symbols_per_frame=SUITE_BEAM.max_symbols_per_frame,
        )
        agg = merged_stats(decode_traces(model, traces, cfg))
        measured = nbp(agg)
        checks[label] = {
            "measured_nbp": measured,
            "designed_nbp": designed[label],
            "blank_joiner_calls": agg.blank_joiner_calls,
        }
        if abs(measured - designed[label]) > 2.0:
            raise ContractViolation(
                f"suite self-check failed at thresh {label}: measured NBP {measured:.2f} "
                f"vs designed {designed[label]:.2f}"
            )
    return checks


def gen_posterior_table_fixture(out_dir, frames: int, vocab: int, max_emits: int, seed: int = 0):
    """Write a random posterior-table model plus its one-hot trace and the raw tables."""
    if frames < 1 or vocab < 1 or max_emits < 0:
        raise ContractViolation("bad table fixture dims")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    U = max_emits + 1
    p_b, p_nb = random_tables(rng, frames, U, vocab)
    model = make_posterior_model(p_b, p_nb)
    write_model(out / "model.bskm", model)
    feats = one_hot_frames(frames, model.config.feature_dim)
    write_trace(
        out / "trace.bskt",
        TraceData(TRACE_FEATURES, feats, model.config.frame_duration_ms, vocab),
    )
    with open(out / "tables.json", "w") as f:
        json.dump(
            {
                "kind": "posterior-table",
                "frames": frames,
                "vocab_size": vocab,
                "max_emits": max_emits,
                "seed": seed,
                "p_blank": p_b.tolist(),
                "p_nonblank": p_nb.tolist(),
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    return model


def random_table_instance(
    rng: np.random.Generator, T: int, vocab: int, max_emits: int
):
    """Random posterior-table instance tuned for oracle-equivalence checks.

    Blank mass in [0.78, 0.92] and softmax skew capped at 0.8 bound every
    emission factor by 0.22, which makes the length-normalized score of any
    sequence longer than max_emits provably worse than the empty hypothesis's.
    The beam winner therefore always stays inside the oracle's domain, and the
    comparison is exact for every seed.  The table covers every (t, u) the
    beam can reach at a per-frame symbol budget of max_emits.
    """
    from .model import encode

    U = T * max_emits + 1
    p_b = rng.uniform(0.78, 0.92, size=(T, U))
    skew = rng.dirichlet(np.ones(vocab), size=(T, U))
    s = 0.6 * skew + 0.4 / vocab  # rows sum to 1, max component <= 0.8 for vocab >= 2
    p_nb = s * (1.0 - p_b)[:, :, None]
    model = make_posterior_model(p_b, p_nb)
    frames = encode(model, one_hot_frames(T, model.config.feature_dim))
    return model, frames, (p_b, p_nb)


def random_small_model(
    rng: np.random.Generator, vocab: int, dim: int = 6, kind: str = FACTORIZED,
    blank_bias: float = 1.2,
) -> ModelWeights:
    """Tiny random model for oracle-equivalence checks."""
    from .metrics import NONFACTORIZED

    factorized = kind == FACTORIZED
    cfg = ModelConfig(
        vocab_size=vocab,
        enc_dim=dim,
        pred_dim=dim,
        join_dim=dim,
        joiner_kind=kind,
        joiner_hidden_layers=0,
        blank_hidden_layers=0,
        activation="tanh" if factorized else "relu",
        feature_dim=dim,
        embed_dim=3,
        pred_hidden=4,
        pred_layers=1,
    )
    def lin(out_dim, in_dim, scale=1.0):
        return Linear(rng.normal(0.0, scale / np.sqrt(in_dim), size=(out_dim, in_dim)),
                      rng.normal(0.0, 0.1, size=out_dim))

    predictor = PredictorWeights(
        embedding=rng.normal(0.0, 0.5, size=(vocab, cfg.embed_dim)),
        start_embedding=rng.normal(0.0, 0.5, size=cfg.embed_dim),
        lstm=[LstmLayerWeights(
            rng.normal(0.0, 0.5, size=(4 * cfg.pred_hidden, cfg.embed_dim)),
            rng.normal(0.0, 0.5, size=(4 * cfg.pred_hidden, cfg.pred_hidden)),
            np.zeros(4 * cfg.pred_hidden),
        )],
        proj=lin(cfg.pred_dim, cfg.pred_hidden),
    )
    if factorized:
        blank_stack = [lin(1, dim)]
        blank_stack[0].b[0] += blank_bias
        joiner = JoinerWeights(blank_stack=blank_stack, nonblank_stack=[lin(vocab, dim)])
    else:
        nf = [lin(vocab + 1, dim)]
        nf[0].b[0] += blank_bias
        joiner = JoinerWeights(nf_stack=nf)
    model = ModelWeights(cfg, EncoderWeights([]), predictor, joiner)
    validate_model(model)
    return model


def random_enc_frames(rng: np.random.Generator, T: int, dim: int):
    from .model import EncFrame

    return [EncFrame(t, rng.normal(0.0, 1.0, size=dim)) for t in range(T)]
