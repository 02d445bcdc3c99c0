"""Stats report assembly and schema validation.

One report covers a decode run (one or many utterances): per-utterance rows,
aggregates (means over utterances plus pooled ratios from summed counters), a
config echo so every number is self-describing, and an optional energy block.
Timing-derived values live under "timing" keys so determinism checks can strip
them in one place.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .decoder import BeamConfig, DecodeResult
from .errors import MetricUndefinedError
from .metrics import RuntimeStats, nbp, rtf

SCHEMA_VERSION = 1


def _timing_block(stats: RuntimeStats) -> dict:
    try:
        rtf_join, rtf_all = rtf(stats)
    except MetricUndefinedError:
        rtf_join = rtf_all = None
    return {
        "joiner_s": stats.joiner_time_s,
        "encoder_s": stats.encoder_time_s,
        "predictor_s": stats.predictor_time_s,
        "total_s": stats.total_time_s,
        "rtf_join": rtf_join,
        "rtf_all": rtf_all,
    }


def utterance_entry(name: str, result: DecodeResult) -> dict:
    stats = result.stats
    best = result.best
    return {
        "id": name,
        "audio_s": stats.audio_s,
        "tokens": list(best.tokens),
        "log_prob": best.log_prob,
        "score": best.score,
        "nbest": [
            {"tokens": list(e.tokens), "log_prob": e.log_prob, "score": e.score}
            for e in result.nbest
        ],
        "counts": stats.counts(),
        "nbp": nbp(stats),
        "timing": _timing_block(stats),
    }


def config_echo(cfg: BeamConfig, model_path=None, trace_path=None, **extra) -> dict:
    echo = {
        "thresh": cfg.thresh,
        "p_threshold": cfg.p_threshold,
        "beam_width": cfg.beam_width,
        "max_symbols_per_frame": cfg.max_symbols_per_frame,
        "length_normalize": cfg.length_normalize,
    }
    if model_path is not None:
        echo["model"] = str(model_path)
    if trace_path is not None:
        echo["trace"] = str(trace_path)
    echo.update(extra)
    return echo


def build_report(
    config: dict,
    results: list[tuple[str, DecodeResult]],
    aggregate: RuntimeStats,
    energy: dict | None = None,
) -> dict:
    entries = [utterance_entry(name, res) for name, res in results]
    n = len(entries)
    agg = {
        "utterances": n,
        "audio_s": aggregate.audio_s,
        "counts": aggregate.counts(),
        "nbp_mean": sum(e["nbp"] for e in entries) / n,
        "nbp_pooled": nbp(aggregate),
        "timing": _timing_block(aggregate),
    }
    timings = [e["timing"] for e in entries]
    if all(t["rtf_join"] is not None for t in timings):
        agg["timing"]["rtf_join_mean"] = sum(t["rtf_join"] for t in timings) / n
        agg["timing"]["rtf_all_mean"] = sum(t["rtf_all"] for t in timings) / n
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "utterances": entries,
        "aggregate": agg,
    }
    if energy is not None:
        report["energy"] = energy
    return report


def write_report(path, report: dict) -> None:
    validate_report(report)
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def validate_report(report: dict) -> None:
    """Validate against the shipped JSON schema; raises jsonschema.ValidationError."""
    import jsonschema

    schema = json.loads(
        resources.files("blankskip").joinpath("schemas/stats_report.schema.json").read_text()
    )
    jsonschema.validate(report, schema)


def strip_timing(report: dict) -> dict:
    """Copy of a report with all timing blocks removed (for determinism checks)."""
    out = json.loads(json.dumps(report))
    for utt in out.get("utterances", []):
        utt.pop("timing", None)
    if "aggregate" in out:
        out["aggregate"].pop("timing", None)
    return out
