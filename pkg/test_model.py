#!/usr/bin/env python3
"""
Test the pointer-generator: parameters, encoder shapes and the mixed distribution
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent / "src"))

from corpus import START, STOP, UNK, EncodedExample
from errors import ConfigurationError, ContractError
from gradcheck import TINY_CONFIG, TOLERANCE, model_gradcheck, tiny_example
from model import (LOG_FLOOR, ModelConfig, ParameterStore, PointerGenerator, init_params,
                   parameter_shapes, step_log_prob)

SMALL = ModelConfig(hidden_dim=8, emb_dim=4, vocab_size=20, max_len=20)


def test_init_is_deterministic():
    assert init_params(SMALL, 3).equals(init_params(SMALL, 3))


def test_init_differs_by_seed():
    assert not init_params(SMALL, 3).equals(init_params(SMALL, 4))


def test_init_ranges_and_zero_biases():
    store = init_params(SMALL, 0)
    for name, value in store.items():
        if name.endswith("_b"):
            assert not value.any(), name
        else:
            assert np.abs(value).max() <= 0.1, name


def test_embedding_shape_follows_vocab():
    config = ModelConfig(hidden_dim=2, emb_dim=4, vocab_size=5000)
    assert parameter_shapes(config)["embedding"] == (5000, 4)


def test_default_attention_size():
    assert SMALL.attention_size == 16
    assert parameter_shapes(SMALL)["attn_v"] == (16, 1)


def test_config_rejects_zero_dims():
    with pytest.raises(ConfigurationError):
        ModelConfig(hidden_dim=0).validate()


def test_store_rejects_wrong_shape():
    arrays = dict(init_params(SMALL, 0).items())
    arrays["out_b"] = np.zeros((1, 3))
    with pytest.raises(ContractError):
        ParameterStore(SMALL, arrays)


def test_store_rejects_missing_group():
    arrays = dict(init_params(SMALL, 0).items())
    del arrays["gen_b"]
    with pytest.raises(ContractError):
        ParameterStore(SMALL, arrays)


def test_copy_is_independent():
    store = init_params(SMALL, 0)
    twin = store.copy()
    twin["gen_b"] += 1.0
    assert not store.equals(twin)


def test_encode_source_shapes():
    model = PointerGenerator(init_params(SMALL, 0))
    enc = model.encode_source([4, 5, 6, 7, 8])
    assert enc.states.shape == (5, 16)
    assert enc.features.shape == (5, 16)
    assert enc.initial.h.shape == (1, 8)
    assert enc.initial.c.shape == (1, 8)
    assert enc.initial.context.shape == (1, 16)


def test_encode_source_rejects_extended_ids():
    model = PointerGenerator(init_params(SMALL, 0))
    with pytest.raises(ContractError):
        model.encode_source([4, SMALL.vocab_size])


def test_encode_source_rejects_empty():
    with pytest.raises(ContractError):
        PointerGenerator(init_params(SMALL, 0)).encode_source([])


def first_step(store, src_ids, src_ext_ids, input_id=START):
    model = PointerGenerator(store)
    enc = model.encode_source(src_ids)
    return model.decoder_step(enc.initial, input_id, enc, src_ext_ids)


@pytest.mark.parametrize("seed", range(5))
def test_distribution_is_normalized(seed):
    store = init_params(SMALL, seed)
    out = first_step(store, (4, UNK, 6), (4, 20, 6))
    dist = out.dist.value.reshape(-1)
    assert dist.size == 21
    assert np.all(dist >= 0)
    assert abs(dist.sum() - 1.0) <= 1e-9
    assert abs(out.attention.value.sum() - 1.0) <= 1e-9
    assert 0.0 <= float(out.p_gen.value) <= 1.0


def test_copy_mass_lands_on_source_tokens():
    store = init_params(SMALL, 1)
    src_ext = (4, 20, 4, 21)
    out = first_step(store, (4, UNK, 4, UNK), src_ext)
    dist = out.dist.value.reshape(-1)
    attention = out.attention.value.reshape(-1)
    p_gen = float(out.p_gen.value)
    expected_oov = (1 - p_gen) * attention[1]
    assert dist[20] == pytest.approx(expected_oov, abs=1e-12)
    assert dist[21] == pytest.approx((1 - p_gen) * attention[3], abs=1e-12)


def test_pure_generation_gives_oovs_no_mass():
    store = init_params(SMALL, 2)
    store["gen_b"] = np.full((1, 1), np.inf)
    out = first_step(store, (4, UNK, 6), (4, 20, 6))
    dist = out.dist.value.reshape(-1)
    assert dist[20] == 0.0
    assert dist[:20].sum() == pytest.approx(1.0, abs=1e-12)


def test_pure_copy_of_single_oov():
    store = init_params(SMALL, 2)
    store["gen_b"] = np.full((1, 1), -np.inf)
    out = first_step(store, (UNK,), (20,))
    dist = out.dist.value.reshape(-1)
    assert dist[20] == pytest.approx(1.0, abs=1e-12)


def test_extended_input_embeds_as_unk():
    store = init_params(SMALL, 0)
    as_unk = first_step(store, (4, UNK), (4, 20), input_id=UNK)
    as_ext = first_step(store, (4, UNK), (4, 20), input_id=20)
    np.testing.assert_array_equal(as_unk.dist.value, as_ext.dist.value)


def test_decoder_input_outside_extended_vocab():
    with pytest.raises(ContractError):
        first_step(init_params(SMALL, 0), (4, UNK), (4, 20), input_id=21)


def test_step_log_prob_values():
    assert step_log_prob([0.25, 0.75], 1) == pytest.approx(np.log(0.75 + LOG_FLOOR))
    assert step_log_prob([1.0, 0.0], 1) == pytest.approx(np.log(LOG_FLOOR))
    with pytest.raises(ContractError):
        step_log_prob([1.0, 0.0], 2)


def test_advance_returns_flat_distribution():
    store = init_params(SMALL, 0)
    example = EncodedExample((4, UNK), (4, 20), ("zzz",), (5, STOP), (5, STOP))
    model = PointerGenerator(store)
    enc, state = model.begin(example)
    state, dist = model.advance(enc, state, START, example)
    assert dist.shape == (21,)


def test_inference_tape_records_nothing():
    model = PointerGenerator(init_params(SMALL, 0))
    enc = model.encode_source([4, 5])
    model.decoder_step(enc.initial, START, enc, (4, 5))
    assert model.tape.nodes == []


def test_model_gradients_match_finite_differences():
    results = model_gradcheck(seed=0, max_entries=6)
    for loss_name, groups in results.items():
        for group, error in groups.items():
            assert error < TOLERANCE, f"{loss_name}/{group}: {error}"


def test_tiny_example_copies_its_oov():
    example = tiny_example()
    assert example.tgt_ext_ids[1] == TINY_CONFIG.vocab_size
    assert example.tgt_ext_ids[1] in example.src_ext_ids


def test_copy_maps_belong_to_each_encoding():
    store = init_params(SMALL, 5)
    shared = PointerGenerator(store)
    short = shared.encode_source((4, UNK, 6))
    long = shared.encode_source((7, 8, UNK, 9, UNK))
    steps = [(short, (4, 20, 6)), (long, (7, 8, 20, 9, 21)), (short, (4, 20, 6)), (long, (7, 8, 20, 9, 21))]
    for enc, src_ext in steps:
        out = shared.decoder_step(enc.initial, START, enc, src_ext)
        alone = first_step(store, [UNK if t >= SMALL.vocab_size else t for t in src_ext], src_ext)
        np.testing.assert_array_equal(out.dist.value, alone.dist.value)
    assert list(short.copy_maps) == [((4, 20, 6), 21)]
    assert list(long.copy_maps) == [((7, 8, 20, 9, 21), 22)]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
