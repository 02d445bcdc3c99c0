"""Utterance-level decode drivers: trace -> frames -> beam search, with timing,
audio-duration accounting, and optional utterance parallelism."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .decoder import BeamConfig, DecodeResult, beam_search, beam_search_pipelined
from .errors import ContractViolation
from .formats import TRACE_ENC, TRACE_FEATURES, TraceData
from .metrics import RuntimeStats
from .model import EncFrame, ModelWeights, encode


def decode_trace(
    model: ModelWeights,
    trace: TraceData,
    cfg: BeamConfig,
    *,
    pipelined: bool = False,
    thresholding: bool = True,
) -> DecodeResult:
    """Decode one utterance trace.

    Audio duration comes from the trace header (input frames x per-frame
    duration), so strided encoders still report RTF against the original audio.
    """
    stats = RuntimeStats(joiner_kind=model.config.joiner_kind)
    if trace.kind == TRACE_FEATURES:
        if pipelined:
            result = beam_search_pipelined(model, trace.data, cfg, stats)
        else:
            t0 = time.perf_counter()
            frames = encode(model, trace.data)
            elapsed = time.perf_counter() - t0
            stats.encoder_time_s += elapsed
            stats.total_time_s += elapsed
            stats.encoder_calls += 1
            result = beam_search(
                model, frames, cfg, stats, thresholding=thresholding, set_audio=False
            )
    elif trace.kind == TRACE_ENC:
        if trace.dim != model.config.enc_dim:
            raise ContractViolation(
                f"enc trace dim {trace.dim} != model enc_dim {model.config.enc_dim}"
            )
        frames = [EncFrame(t, row.astype(np.float64)) for t, row in enumerate(trace.data)]
        result = beam_search(
            model, frames, cfg, stats, thresholding=thresholding, set_audio=False
        )
    else:
        raise ContractViolation(f"unknown trace kind {trace.kind!r}")
    stats.audio_s = trace.audio_s
    return result


def decode_traces(
    model: ModelWeights,
    traces: list[tuple[str, TraceData]],
    cfg: BeamConfig,
    *,
    jobs: int = 1,
    pipelined: bool = False,
    thresholding: bool = True,
) -> list[tuple[str, DecodeResult]]:
    """Decode many utterances, optionally in parallel; output order follows input."""
    def run(item):
        name, trace = item
        return name, decode_trace(
            model, trace, cfg, pipelined=pipelined, thresholding=thresholding
        )

    if jobs <= 1:
        return [run(item) for item in traces]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, traces))


def merged_stats(results: list[tuple[str, DecodeResult]]) -> RuntimeStats:
    agg = RuntimeStats()
    agg.utterances = 0
    for _, res in results:
        agg.merge(res.stats)
    return agg
