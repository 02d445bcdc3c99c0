"""Runtime counters and the derived efficiency metrics (NBP, RTF)."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MetricUndefinedError

FACTORIZED = "factorized"
NONFACTORIZED = "nonfactorized"


@dataclass
class RuntimeStats:
    """Exact invocation counters and wall-clock timers for one decode.

    Counters are exact (no sampling): re-running the same decode reproduces
    identical counts.  Timers wrap the narrow forward passes only, so
    joiner_time_s excludes beam bookkeeping.
    """

    joiner_kind: str = FACTORIZED
    blank_joiner_calls: int = 0
    nonblank_joiner_calls: int = 0
    full_joiner_calls: int = 0
    predictor_calls: int = 0
    encoder_calls: int = 0
    joiner_time_s: float = 0.0
    encoder_time_s: float = 0.0
    predictor_time_s: float = 0.0
    total_time_s: float = 0.0
    audio_s: float = 0.0
    utterances: int = 0

    def merge(self, other: "RuntimeStats") -> None:
        """Accumulate another decode's stats into this one (post-decode aggregation)."""
        if other.joiner_kind != self.joiner_kind and self.utterances:
            raise ValueError("cannot merge stats across joiner kinds")
        self.joiner_kind = other.joiner_kind
        self.blank_joiner_calls += other.blank_joiner_calls
        self.nonblank_joiner_calls += other.nonblank_joiner_calls
        self.full_joiner_calls += other.full_joiner_calls
        self.predictor_calls += other.predictor_calls
        self.encoder_calls += other.encoder_calls
        self.joiner_time_s += other.joiner_time_s
        self.encoder_time_s += other.encoder_time_s
        self.predictor_time_s += other.predictor_time_s
        self.total_time_s += other.total_time_s
        self.audio_s += other.audio_s
        self.utterances += max(other.utterances, 1)

    def counts(self) -> dict:
        return {
            "blank_joiner_calls": self.blank_joiner_calls,
            "nonblank_joiner_calls": self.nonblank_joiner_calls,
            "full_joiner_calls": self.full_joiner_calls,
            "predictor_calls": self.predictor_calls,
            "encoder_calls": self.encoder_calls,
        }


def nbp(stats: RuntimeStats) -> float:
    """Non-blank percentage: 100 * non-blank / blank joiner calls.

    Non-factorized joiners compute everything in one pass, so the metric is
    pinned at 100%.
    """
    if stats.joiner_kind == NONFACTORIZED:
        return 100.0
    if stats.blank_joiner_calls == 0:
        raise MetricUndefinedError("NBP undefined: no blank joiner calls recorded")
    return 100.0 * stats.nonblank_joiner_calls / stats.blank_joiner_calls


def rtf(stats: RuntimeStats) -> tuple[float, float]:
    """(RTF_join, RTF_all): joiner / total wall time divided by audio duration."""
    if stats.audio_s <= 0:
        raise MetricUndefinedError("RTF undefined: zero audio duration")
    return stats.joiner_time_s / stats.audio_s, stats.total_time_s / stats.audio_s
