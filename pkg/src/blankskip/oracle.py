"""Exhaustive transducer decoding oracle for small instances.

Sums the probability of every monotone alignment lattice path (T frames, up to
max_len emissions, any number of emissions per frame) per label sequence by
dynamic programming — exactly the quantity beam search approximates.  Guarded:
refuses instances whose enumeration would be large.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import model as tm
from .errors import ContractViolation, EmptyInputError, InstanceTooLargeError

# Upper bound on (#sequences * T * max_len) before refusing the instance.
DEFAULT_WORK_LIMIT = 500_000


def exhaustive_decode(
    model: tm.ModelWeights,
    frames: list[tm.EncFrame],
    max_len: int,
    work_limit: int = DEFAULT_WORK_LIMIT,
) -> dict[tuple[int, ...], float]:
    """Exact total probability for every label sequence of length <= max_len."""
    if not frames:
        raise EmptyInputError("oracle needs at least one frame")
    if max_len < 0:
        raise ContractViolation("max_len must be >= 0")
    N = model.config.vocab_size
    T = len(frames)
    n_sequences = sum(N**l for l in range(max_len + 1))
    if n_sequences * max(T, 1) * max(max_len, 1) > work_limit:
        raise InstanceTooLargeError(
            f"instance too large for exhaustive decode: {n_sequences} sequences x {T} frames"
        )

    pred_cache: dict[tuple[int, ...], tm.PredOut] = {(): tm.start_pred(model)}

    def pred_state(tokens: tuple[int, ...]) -> tm.PredOut:
        if tokens not in pred_cache:
            pred_cache[tokens] = tm.predict(model, pred_state(tokens[:-1]), tokens[-1])
        return pred_cache[tokens]

    post_cache: dict[tuple[tuple[int, ...], int], tm.Posterior] = {}

    def posterior_at(tokens: tuple[int, ...], t: int) -> tm.Posterior:
        key = (tokens, t)
        if key not in post_cache:
            post_cache[key] = tm.posterior(model, frames[t], pred_state(tokens))
        return post_cache[key]

    results: dict[tuple[int, ...], float] = {}
    for length in range(max_len + 1):
        for seq in itertools.product(range(N), repeat=length):
            results[seq] = _sequence_prob(seq, T, posterior_at)
    return results


def _sequence_prob(seq, T, posterior_at) -> float:
    """Forward DP over the (frame, emitted) lattice for one label sequence.

    alpha[u] holds the probability mass at (current frame, u tokens emitted);
    within a frame, ascending u order accumulates multi-emission paths.
    """
    L = len(seq)
    alpha = np.zeros(L + 1, dtype=np.float64)
    alpha[0] = 1.0
    for t in range(T):
        for u in range(L):  # in-frame emissions first (ascending u)
            if alpha[u] > 0.0:
                p = posterior_at(seq[:u], t)
                alpha[u + 1] += alpha[u] * float(p.p_nonblank[seq[u]])
        nxt = np.zeros_like(alpha)
        for u in range(L + 1):
            if alpha[u] > 0.0:
                nxt[u] = alpha[u] * posterior_at(seq[:u], t).p_blank
        alpha = nxt
    return float(alpha[L])


def total_mass(results: dict[tuple[int, ...], float]) -> float:
    return float(sum(results.values()))


def oracle_best(
    results: dict[tuple[int, ...], float], length_normalize: bool = True
) -> tuple[tuple[int, ...], float]:
    """Winning sequence under the same selection rule as the beam: highest
    log Pr(y)/|y| (empty sequence counts as length 1), ties to the shorter
    then lexicographically smaller sequence."""

    def score(item):
        seq, p = item
        lp = np.log(p) if p > 0 else -np.inf
        if length_normalize:
            lp = lp / max(len(seq), 1)
        return (-lp, len(seq), seq)

    seq, p = min(results.items(), key=score)
    return seq, p
