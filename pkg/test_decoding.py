#!/usr/bin/env python3
"""
Test greedy, sampled and beam decoding against small harness models
"""
import itertools
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent / "src"))

from corpus import START, STOP, UNK, EncodedExample
from decoding import (DecodeMode, beam_search, beam_search_hypothesis, decode, greedy_decode,
                      pick_token, sample_decode)
from errors import ConfigurationError
from model import LOG_FLOOR, ModelConfig, PointerGenerator, init_params

EXAMPLE = EncodedExample((4,), (4,), (), (4, STOP), (4, STOP))


class PointMass:
    """Emits a fixed token sequence, then STOP"""

    def __init__(self, tokens, width=8):
        self.tokens = list(tokens)
        self.width = width

    def begin(self, example):
        return None, 0

    def advance(self, enc, state, input_id, example):
        dist = np.zeros(self.width)
        dist[self.tokens[state] if state < len(self.tokens) else STOP] = 1.0
        return state + 1, dist


class Lookup:
    """Distribution keyed by the emitted prefix; unknown prefixes stop"""

    def __init__(self, table, width=6):
        self.table = table
        self.width = width

    def begin(self, example):
        return None, ()

    def advance(self, enc, state, input_id, example):
        prefix = state if input_id == START else state + (input_id,)
        dist = np.zeros(self.width)
        for token, p in self.table.get(prefix, {STOP: 1.0}).items():
            dist[token] = p
        return prefix, dist


class RandomTree:
    """Seeded Dirichlet distribution for every prefix"""

    def __init__(self, seed, width=5):
        self.seed = seed
        self.width = width

    def dist(self, prefix):
        return np.random.default_rng([self.seed, *prefix]).dirichlet(np.ones(self.width))

    def begin(self, example):
        return None, ()

    def advance(self, enc, state, input_id, example):
        prefix = state if input_id == START else state + (input_id,)
        return prefix, self.dist(prefix)


class FixedDraws:
    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


GARDEN_PATH = Lookup({
    (): {4: 0.6, 5: 0.4},
    (4,): {UNK: 0.34, 5: 0.33, STOP: 0.33},
    (5,): {STOP: 0.9, UNK: 0.1},
})


def test_greedy_follows_point_mass():
    assert greedy_decode(PointMass([4, 5, 6]), EXAMPLE) == [4, 5, 6]


def test_greedy_respects_max_len():
    assert greedy_decode(PointMass([4] * 30), EXAMPLE, max_len=5) == [4] * 5


def test_greedy_takes_the_garden_path():
    assert greedy_decode(GARDEN_PATH, EXAMPLE) == [4, UNK]


def test_beam_finds_the_better_short_sequence():
    assert beam_search(GARDEN_PATH, EXAMPLE, beam=2) == [5]


def test_beam_score_is_summed_log_probability():
    hyp = beam_search_hypothesis(GARDEN_PATH, EXAMPLE, beam=2)
    assert hyp.finished
    assert hyp.tokens == (5, STOP)
    assert hyp.log_prob == pytest.approx(np.log(0.4 + LOG_FLOOR) + np.log(0.9 + LOG_FLOOR))
    assert hyp.score(length_norm=True) == pytest.approx(hyp.log_prob / 2)


def test_beam_rejects_zero_width():
    with pytest.raises(ConfigurationError):
        beam_search(GARDEN_PATH, EXAMPLE, beam=0)


def test_decode_dispatches_on_beam():
    assert decode(GARDEN_PATH, EXAMPLE, beam=1) == [4, UNK]
    assert decode(GARDEN_PATH, EXAMPLE, beam=2) == [5]


def best_finished_sequence(tree, max_len):
    """Exhaustive search over every sequence ending in STOP within max_len steps"""
    continuing = [t for t in range(tree.width) if t not in (0, START, STOP)]
    best, best_score = None, -np.inf
    for length in range(max_len):
        for body in itertools.product(continuing, repeat=length):
            score, prefix = 0.0, ()
            for token in body + (STOP,):
                score += np.log(tree.dist(prefix)[token] + LOG_FLOOR)
                prefix += (token,)
            if score > best_score:
                best, best_score = list(body), score
    return best, best_score


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("max_len", [1, 2, 3, 4])
def test_saturated_beam_is_exhaustive(seed, max_len):
    tree = RandomTree(seed)
    expected, expected_score = best_finished_sequence(tree, max_len)
    hyp = beam_search_hypothesis(tree, EXAMPLE, beam=625, max_len=max_len)
    assert hyp.output() == expected
    assert hyp.log_prob == pytest.approx(expected_score)


PRUNED_PATH = Lookup({
    (): {4: 0.4, 5: 0.35, 6: 0.25},
    (4,): {6: 0.4, 7: 0.3, 8: 0.3},
    (5,): {7: 0.5, 8: 0.5},
    (4, 6): {STOP: 1.0},
    (5, 7): {STOP: 0.1, 9: 0.9},
    (5, 8): {STOP: 0.1, 9: 0.9},
}, width=10)


def test_wider_beam_can_score_lower():
    narrow = beam_search_hypothesis(PRUNED_PATH, EXAMPLE, beam=1, max_len=3)
    wide = beam_search_hypothesis(PRUNED_PATH, EXAMPLE, beam=2, max_len=3)
    assert narrow.tokens == (4, 6, STOP)
    assert narrow.log_prob == pytest.approx(np.log(0.16), abs=1e-9)
    assert not wide.finished
    assert wide.tokens == (5, 7, 9)
    assert wide.log_prob == pytest.approx(np.log(0.1575), abs=1e-9)
    assert wide.log_prob < narrow.log_prob


def test_beam_of_one_matches_greedy_on_random_models():
    config = ModelConfig(hidden_dim=4, emb_dim=3, vocab_size=10, max_len=20)
    example = EncodedExample((4, UNK, 5), (4, 10, 5), ("zzz",), (5, STOP), (5, STOP))
    for seed in range(100):
        model = PointerGenerator(init_params(config, seed))
        assert beam_search(model, example, beam=1, max_len=8) == greedy_decode(model, example, 8), seed


def test_shared_model_decodes_concurrently():
    config = ModelConfig(hidden_dim=4, emb_dim=3, vocab_size=10, max_len=20)
    model = PointerGenerator(init_params(config, 2))
    examples = [EncodedExample((4, UNK, 5), (4, 10, 5), ("zzz",), (5, STOP), (5, STOP)),
                EncodedExample((6, 7, UNK, 8, UNK), (6, 7, 10, 8, 11), ("p", "q"), (6, STOP), (6, STOP))]
    expected = [(greedy_decode(model, ex, 8), beam_search(model, ex, 3, 8)) for ex in examples]

    def run(index):
        ex = examples[index % 2]
        return greedy_decode(model, ex, 8), beam_search(model, ex, 3, 8)

    with ThreadPoolExecutor(max_workers=4) as executor:
        results = list(executor.map(run, range(200)))
    assert results == [expected[i % 2] for i in range(200)]


def test_greedy_masks_pad_and_start():
    dist = np.zeros(6)
    dist[0], dist[START], dist[5] = 0.5, 0.4, 0.1
    assert pick_token(dist, DecodeMode.GREEDY) == 5


def test_uniform_distribution_picks_lowest_word_id():
    assert pick_token(np.full(6, 1 / 6), DecodeMode.GREEDY) == 4
    assert greedy_decode(Lookup({(): {t: 1 / 8 for t in range(8)}}, width=8), EXAMPLE, max_len=1) == [4]


def test_stop_and_unk_win_with_strictly_more_mass():
    dist = np.array([0.0, 0.0, 0.0, 0.4, 0.3, 0.3])
    assert pick_token(dist, DecodeMode.GREEDY) == STOP
    dist = np.array([0.0, 0.4, 0.0, 0.3, 0.3, 0.0])
    assert pick_token(dist, DecodeMode.GREEDY) == UNK
    dist = np.array([0.0, 0.3, 0.0, 0.3, 0.0, 0.3])
    assert pick_token(dist, DecodeMode.GREEDY) == 5


def test_zero_mass_sample_falls_back_to_unk():
    dist = np.zeros(6)
    dist[0] = 1.0
    assert pick_token(dist, DecodeMode.SAMPLE, FixedDraws(0.5)) == UNK


def test_sample_is_inverse_cdf_in_tie_order():
    dist = np.array([0.0, 0.0, 0.0, 0.5, 0.5])
    assert pick_token(dist, DecodeMode.SAMPLE, FixedDraws(0.3)) == 4
    assert pick_token(dist, DecodeMode.SAMPLE, FixedDraws(0.7)) == STOP
    dist = np.array([0.0, 0.2, 0.0, 0.2, 0.3, 0.3])
    assert [pick_token(dist, DecodeMode.SAMPLE, FixedDraws(u)) for u in (0.1, 0.4, 0.65, 0.9)] == [
        4, 5, UNK, STOP]


def test_even_word_or_stop_sample_starts_with_the_word():
    even = Lookup({(): {4: 0.5, STOP: 0.5}, (4,): {STOP: 1.0}})
    assert sample_decode(even, EXAMPLE, 20, FixedDraws(0.3, 0.9)) == [4]
    assert sample_decode(even, EXAMPLE, 20, FixedDraws(0.7)) == []


def test_sample_never_lands_on_zero_mass_tail():
    dist = np.array([0.0, 0.0, 0.0, 0.0, 0.5, 0.5])
    assert pick_token(dist, DecodeMode.SAMPLE, FixedDraws(1.0)) == 5


def test_sampling_needs_rng():
    with pytest.raises(ConfigurationError):
        pick_token(np.full(5, 0.2), DecodeMode.SAMPLE)


def test_sample_decode_point_mass():
    rng = np.random.default_rng(0)
    assert sample_decode(PointMass([4, 5]), EXAMPLE, 20, rng) == [4, 5]


def test_sample_decode_is_reproducible():
    tree = RandomTree(3)
    first = sample_decode(tree, EXAMPLE, 10, np.random.default_rng(9))
    second = sample_decode(tree, EXAMPLE, 10, np.random.default_rng(9))
    assert first == second


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
