"""Beam search over transducer posteriors, with prefix merging and blank thresholding.

The search follows the classic breadth-first transducer beam search: per frame
t the surviving beam A is re-scored with prefix-merge mass, then hypotheses are
popped most-probable-first; each pop computes the blank probability and moves
the blanked hypothesis into B, and only when the blank probability does not
exceed p_threshold is the (much more expensive) non-blank distribution computed
and the extensions pushed back into A.  The loop ends when B holds beam_width
elements more probable than the best remaining candidate, or when A empties.

All probability arithmetic is in log domain.  Hypothesis predictor states are
materialized lazily and cached per token prefix, so the predictor advances once
per distinct surviving prefix rather than once per pushed extension.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as tm
from .errors import ContractViolation, EmptyInputError
from .kernels import log_sigmoid, log_softmax, sigmoid
from .metrics import FACTORIZED, NONFACTORIZED, RuntimeStats

# Sentinel for "thresholding off": the skip condition p_blank > 1.0 never fires.
DISABLED = None


def threshold_from_logit(thresh: float | None) -> float:
    """Map a logit-domain threshold to p_threshold = sigmoid(thresh).

    The DISABLED sentinel (None) maps to exactly 1.0, i.e. never skip.
    """
    if thresh is DISABLED:
        return 1.0
    if not math.isfinite(thresh):
        raise ContractViolation("thresh must be finite or DISABLED")
    return sigmoid(thresh)


@dataclass
class BeamConfig:
    beam_width: int = 10
    thresh: float | None = DISABLED
    max_symbols_per_frame: int = 10
    length_normalize: bool = True

    @property
    def p_threshold(self) -> float:
        return threshold_from_logit(self.thresh)

    def validate(self) -> None:
        if self.beam_width < 1:
            raise ContractViolation("beam_width must be >= 1")
        if self.max_symbols_per_frame < 1:
            raise ContractViolation("max_symbols_per_frame must be >= 1")
        self.p_threshold  # raises on non-finite thresh


@dataclass
class Hypothesis:
    """A decoding prefix: emitted tokens, accumulated log probability, and a
    lazily materialized predictor output."""

    tokens: tuple[int, ...]
    log_prob: float
    pred: tm.PredOut | None = None
    frame_emits: int = 0  # tokens emitted within the current frame


@dataclass
class NBestEntry:
    tokens: list[int]
    log_prob: float
    score: float  # length-normalized selection score


@dataclass
class DecodeResult:
    nbest: list[NBestEntry]
    stats: RuntimeStats

    @property
    def best(self) -> NBestEntry:
        return self.nbest[0]


class _PostEntry:
    """Cached per-(prefix, frame) posterior; the non-blank half is lazy."""

    __slots__ = ("x", "p_blank", "log_pb", "log1m_pb", "nb_logp")

    def __init__(self, x, p_blank, log_pb, log1m_pb, nb_logp=None):
        self.x = x
        self.p_blank = p_blank
        self.log_pb = log_pb
        self.log1m_pb = log1m_pb
        self.nb_logp = nb_logp


class _Runtime:
    """Per-decode evaluation context: caches, counters, and timers."""

    def __init__(self, model: tm.ModelWeights, stats: RuntimeStats):
        self.model = model
        self.stats = stats
        self.factorized = model.config.joiner_kind == FACTORIZED
        stats.joiner_kind = model.config.joiner_kind
        self.vocab = model.config.vocab_size
        self._pred_cache: dict[tuple[int, ...], tm.PredOut] = {}

    def pred_state(self, tokens: tuple[int, ...]) -> tm.PredOut:
        cached = self._pred_cache.get(tokens)
        if cached is not None:
            return cached
        # Walk back to the deepest cached ancestor, then advance forward.
        depth = len(tokens)
        while depth > 0 and tokens[:depth] not in self._pred_cache:
            depth -= 1
        if depth == 0 and () not in self._pred_cache:
            t0 = time.perf_counter()
            self._pred_cache[()] = tm.start_pred(self.model)
            self.stats.predictor_time_s += time.perf_counter() - t0
            self.stats.predictor_calls += 1
        pred = self._pred_cache[tokens[:depth]]
        for i in range(depth, len(tokens)):
            t0 = time.perf_counter()
            pred = tm.predict(self.model, pred, tokens[i])
            self.stats.predictor_time_s += time.perf_counter() - t0
            self.stats.predictor_calls += 1
            self._pred_cache[tokens[: i + 1]] = pred
        return pred

    def eval_posterior(self, tokens, enc_vec, cache) -> _PostEntry:
        """Blank-side posterior (factorized) or the full posterior (non-factorized).

        Cached per (prefix, frame); a cache hit is not a joiner call.
        """
        entry = cache.get(tokens)
        if entry is not None:
            return entry
        pred = self.pred_state(tokens)
        if self.factorized:
            t0 = time.perf_counter()
            x = tm.join_input(self.model, enc_vec, pred.vec)
            logit = tm.blank_logit(self.model, x)
            self.stats.joiner_time_s += time.perf_counter() - t0
            self.stats.blank_joiner_calls += 1
            p_b = tm.clamp_prob(sigmoid(logit))
            entry = _PostEntry(x, p_b, log_sigmoid(logit), log_sigmoid(-logit))
        else:
            t0 = time.perf_counter()
            x = tm.join_input(self.model, enc_vec, pred.vec)
            logp = log_softmax(tm.nf_logits(self.model, x))
            self.stats.joiner_time_s += time.perf_counter() - t0
            self.stats.full_joiner_calls += 1
            p_b = tm.clamp_prob(float(np.exp(logp[0])))
            entry = _PostEntry(x, p_b, float(logp[0]), 0.0, nb_logp=logp[1:])
        cache[tokens] = entry
        return entry

    def ensure_nonblank(self, entry: _PostEntry) -> None:
        """Compute the factorized non-blank log-probabilities if still missing."""
        if entry.nb_logp is not None:
            return
        t0 = time.perf_counter()
        logits = tm.nonblank_logits(self.model, entry.x)
        self.stats.joiner_time_s += time.perf_counter() - t0
        self.stats.nonblank_joiner_calls += 1
        entry.nb_logp = entry.log1m_pb + log_softmax(logits)

    def suffix_logprob(self, prefix, target, enc_vec, cache) -> float:
        """log Pr of emitting target's suffix tokens after `prefix` at this frame."""
        lp = 0.0
        cur = prefix
        for tok in target[len(prefix) :]:
            entry = self.eval_posterior(cur, enc_vec, cache)
            self.ensure_nonblank(entry)
            lp += float(entry.nb_logp[tok])
            cur = cur + (tok,)
        return lp


def _pop_order(item: tuple[tuple[int, ...], Hypothesis]):
    # Most probable first; ties broken by shorter sequence, then lexicographic.
    key, hyp = item
    return (-hyp.log_prob, len(key), key)


def _merge_prefixes(A: dict, rt: _Runtime, enc_vec, cache) -> None:
    """Prefix-merge re-scoring at frame start.

    Adds, for every hypothesis y in A, the mass of reaching y from each proper
    prefix in A by emitting the suffix during this frame.  Source masses are
    the frame-start snapshot: a multi-token suffix product already walks
    through any intermediate sequences, so using updated masses would count
    those paths twice.
    """
    snapshot = {k: h.log_prob for k, h in A.items()}
    for key, hyp in A.items():
        if not key:
            continue
        contribs = [hyp.log_prob]
        for plen in range(len(key)):
            pref = key[:plen]
            if pref in snapshot:
                contribs.append(snapshot[pref] + rt.suffix_logprob(pref, key, enc_vec, cache))
        if len(contribs) > 1:
            hyp.log_prob = float(np.logaddexp.reduce(contribs))


def beam_search(
    model: tm.ModelWeights,
    frames,
    cfg: BeamConfig,
    stats: RuntimeStats | None = None,
    *,
    thresholding: bool = True,
    set_audio: bool = True,
) -> DecodeResult:
    """Decode a sequence of EncFrames.

    `thresholding=False` removes the blank-thresholding branch entirely (the
    non-blank side is always computed and extended), which is the reference
    behaviour that a p_threshold of 1.0 must reproduce exactly.  For
    non-factorized models the branch is inert either way: the full posterior
    arrives in one call and extensions are always pushed.
    """
    cfg.validate()
    if stats is None:
        stats = RuntimeStats(joiner_kind=model.config.joiner_kind)
    stats.utterances = max(stats.utterances, 1)
    rt = _Runtime(model, stats)
    p_threshold = cfg.p_threshold
    t_start = time.perf_counter()

    B: dict[tuple[int, ...], Hypothesis] = {(): Hypothesis((), 0.0)}
    n_frames = 0
    for enc in frames:
        n_frames += 1
        enc_vec = enc.vec if isinstance(enc, tm.EncFrame) else np.asarray(enc)
        A, B = B, {}
        cache: dict[tuple[int, ...], _PostEntry] = {}
        for hyp in A.values():
            hyp.frame_emits = 0
        if len(A) > 1:
            _merge_prefixes(A, rt, enc_vec, cache)
        seen = set(A)
        while A:
            best_key, best_hyp = min(A.items(), key=_pop_order)
            n_better = sum(1 for h in B.values() if h.log_prob > best_hyp.log_prob)
            if n_better >= cfg.beam_width:
                break
            del A[best_key]
            entry = rt.eval_posterior(best_key, enc_vec, cache)
            B[best_key] = Hypothesis(
                best_key, best_hyp.log_prob + entry.log_pb, rt._pred_cache.get(best_key)
            )
            extend = (
                not rt.factorized
                or not thresholding
                or entry.p_blank <= p_threshold
            )
            if extend:
                rt.ensure_nonblank(entry)
                if best_hyp.frame_emits < cfg.max_symbols_per_frame:
                    for k in range(rt.vocab):
                        child = best_key + (k,)
                        if child in seen:
                            continue
                        seen.add(child)
                        A[child] = Hypothesis(
                            child,
                            best_hyp.log_prob + float(entry.nb_logp[k]),
                            None,
                            best_hyp.frame_emits + 1,
                        )
        survivors = sorted(B.items(), key=_pop_order)[: cfg.beam_width]
        B = dict(survivors)

    if n_frames == 0:
        raise EmptyInputError("cannot decode an empty frame sequence")

    def norm_score(h: Hypothesis) -> float:
        if not cfg.length_normalize:
            return h.log_prob
        return h.log_prob / max(len(h.tokens), 1)

    ranked = sorted(
        B.values(), key=lambda h: (-norm_score(h), len(h.tokens), h.tokens)
    )
    nbest = [NBestEntry(list(h.tokens), h.log_prob, norm_score(h)) for h in ranked]
    stats.total_time_s += time.perf_counter() - t_start
    if set_audio:
        stats.audio_s += n_frames * model.config.frame_duration_ms / 1000.0
    return DecodeResult(nbest, stats)


def prefix_extension_prob(
    shorter: Hypothesis,
    longer: Hypothesis,
    enc: tm.EncFrame,
    model: tm.ModelWeights,
    stats: RuntimeStats | None = None,
) -> float:
    """log Pr of emitting longer's suffix after `shorter` at frame enc.t.

    Equal token sequences return log(1) = 0 by convention; anything that is
    not a prefix is a contract violation.
    """
    s, l = tuple(shorter.tokens), tuple(longer.tokens)
    if s == l:
        return 0.0
    if l[: len(s)] != s:
        raise ContractViolation("shorter.tokens is not a prefix of longer.tokens")
    rt = _Runtime(model, stats if stats is not None else RuntimeStats())
    return rt.suffix_logprob(s, l, enc.vec, {})


def beam_search_pipelined(
    model: tm.ModelWeights,
    features: np.ndarray,
    cfg: BeamConfig,
    stats: RuntimeStats | None = None,
    queue_size: int = 8,
) -> DecodeResult:
    """Two-thread decode: the encoder produces frames into a bounded queue, the
    beam search consumes them in order.  No shared mutable state beyond the queue."""
    if stats is None:
        stats = RuntimeStats(joiner_kind=model.config.joiner_kind)
    q: queue.Queue = queue.Queue(maxsize=queue_size)
    errors: list[BaseException] = []

    def produce():
        try:
            t0 = time.perf_counter()
            for frame in tm.encode_stream(model, features):
                q.put(frame)
            stats.encoder_time_s += time.perf_counter() - t0
            stats.encoder_calls += 1
        except BaseException as exc:  # surface encoder errors to the consumer
            errors.append(exc)
        finally:
            q.put(None)

    producer = threading.Thread(target=produce, daemon=True)
    producer.start()
    try:
        result = beam_search(model, iter(q.get, None), cfg, stats)
    except BaseException:
        # Drain so a producer blocked on a full queue can finish and be joined.
        while producer.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                time.sleep(0.001)
        producer.join()
        if errors:
            raise errors[0] from None
        raise
    producer.join()
    if errors:
        raise errors[0]
    return result
