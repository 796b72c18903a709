#!/usr/bin/env python3
"""
Decoding - greedy, ancestral sampling and beam search

All decoders drive any object with the decoder protocol:
    begin(example) -> (encoder, state)
    advance(encoder, state, input_id, example) -> (state, distribution)
so harness models (point-mass, lookup tables) decode through the same code
as the pointer-generator.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np

try:
    from .corpus import PAD, START, STOP, UNK, EncodedExample
    from .errors import ConfigurationError
    from .model import LOG_FLOOR
except ImportError:
    # When running as a script
    from corpus import PAD, START, STOP, UNK, EncodedExample
    from errors import ConfigurationError
    from model import LOG_FLOOR

DEFAULT_BEAM = 8
MASKED_IDS = (PAD, START)
RESERVED = STOP + 1  # ids below this are control symbols


class DecodeMode(Enum):
    """How a token is read off a step distribution"""
    SAMPLE = "sample"
    GREEDY = "greedy"


def _masked(dist) -> np.ndarray:
    dist = np.array(dist, dtype=np.float64).reshape(-1)
    dist[list(MASKED_IDS)] = 0.0
    return dist


def tie_rank(ids: np.ndarray, width: int) -> np.ndarray:
    """Position of each id in the tie order: word ids ascending, then UNK and STOP"""
    ids = np.asarray(ids)
    return np.where(ids >= RESERVED, ids - RESERVED, ids + width)


def pick_token(dist, mode: DecodeMode, rng: Optional[np.random.Generator] = None) -> int:
    """Masked argmax or one inverse-CDF sample, both walking ids in tie order

    Greedy ties go to the lowest word id; UNK and STOP win only with strictly
    more mass. Sampling lays the CDF out in the same order.
    """
    masked = _masked(dist)
    order = np.argsort(tie_rank(np.arange(masked.size), masked.size), kind="stable")
    if mode is DecodeMode.GREEDY:
        masked[list(MASKED_IDS)] = -1.0
        return int(order[np.argmax(masked[order])])
    if rng is None:
        raise ConfigurationError("sampling needs an rng")
    total = masked.sum()
    u = rng.random()
    if not total > 0.0:
        return UNK
    ordered = masked[order]
    cdf = np.cumsum(ordered) / total
    last = int(np.flatnonzero(ordered > 0.0)[-1])
    index = min(int(np.searchsorted(cdf, u, side="right")), last)
    return int(order[index])


def _run(model, example: EncodedExample, max_len: int, mode: DecodeMode,
         rng: Optional[np.random.Generator]) -> List[int]:
    enc, state = model.begin(example)
    tokens: List[int] = []
    previous = START
    for _ in range(max_len):
        state, dist = model.advance(enc, state, previous, example)
        token = pick_token(dist, mode, rng)
        if token == STOP:
            break
        tokens.append(token)
        previous = token
    return tokens


def greedy_decode(model, example: EncodedExample, max_len: int = 20) -> List[int]:
    return _run(model, example, max_len, DecodeMode.GREEDY, None)


def sample_decode(model, example: EncodedExample, max_len: int,
                  rng: np.random.Generator) -> List[int]:
    return _run(model, example, max_len, DecodeMode.SAMPLE, rng)


@dataclass
class Hypothesis:
    tokens: Tuple[int, ...]
    log_prob: float
    state: Any
    finished: bool = False

    def score(self, length_norm: bool) -> float:
        if length_norm and self.tokens:
            return self.log_prob / len(self.tokens)
        return self.log_prob

    def output(self) -> List[int]:
        """Emitted ids without the trailing STOP"""
        return list(self.tokens[:-1] if self.finished else self.tokens)


def _best(hyps: List[Hypothesis], length_norm: bool) -> Hypothesis:
    best = hyps[0]
    for hyp in hyps[1:]:
        if hyp.score(length_norm) > best.score(length_norm):
            best = hyp
    return best


def beam_search_hypothesis(model, example: EncodedExample, beam: int = DEFAULT_BEAM,
                           max_len: int = 20, length_norm: bool = False) -> Hypothesis:
    """Beam search over summed log-probabilities

    Every live hypothesis is expanded over the whole extended vocabulary and
    the top `beam` candidates survive, ties going by `tie_rank` and then to
    the lower parent index. Candidates ending in STOP are set aside as
    finished; the search ends once `beam` hypotheses have finished or after
    max_len steps.
    """
    if beam < 1:
        raise ConfigurationError(f"beam must be >= 1, got {beam}")

    enc, state = model.begin(example)
    live = [Hypothesis((), 0.0, state)]
    finished: List[Hypothesis] = []

    for _ in range(max_len):
        states, rows = [], []
        for hyp in live:
            previous = hyp.tokens[-1] if hyp.tokens else START
            new_state, dist = model.advance(enc, hyp.state, previous, example)
            logp = np.log(np.asarray(dist, dtype=np.float64).reshape(-1) + LOG_FLOOR)
            logp[list(MASKED_IDS)] = -np.inf
            states.append(new_state)
            rows.append(hyp.log_prob + logp)

        scores = np.stack(rows)
        n_hyps, width = scores.shape
        flat = scores.reshape(-1)
        tokens = np.tile(np.arange(width), n_hyps)
        parents = np.repeat(np.arange(n_hyps), width)
        order = np.lexsort((parents, tie_rank(tokens, width), -flat))

        survivors: List[Hypothesis] = []
        for index in order[:beam]:
            if not np.isfinite(flat[index]):
                break
            parent, token = int(parents[index]), int(tokens[index])
            hyp = Hypothesis(live[parent].tokens + (token,), float(flat[index]), states[parent],
                             finished=token == STOP)
            (finished if hyp.finished else survivors).append(hyp)

        live = survivors
        if len(finished) >= beam or not live:
            break

    if finished:
        return _best(finished, length_norm)
    return _best(live, length_norm)


def beam_search(model, example: EncodedExample, beam: int = DEFAULT_BEAM, max_len: int = 20,
                length_norm: bool = False) -> List[int]:
    return beam_search_hypothesis(model, example, beam, max_len, length_norm).output()


def decode(model, example: EncodedExample, beam: int, max_len: int = 20) -> List[int]:
    """Greedy when beam is 1, beam search otherwise"""
    if beam == 1:
        return greedy_decode(model, example, max_len)
    return beam_search(model, example, beam, max_len)
