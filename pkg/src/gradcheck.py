#!/usr/bin/env python3
"""
Finite-difference gradient checks for diffcore graphs and the model
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np

try:
    from .corpus import STOP, UNK, EncodedExample
    from .decoding import DecodeMode
    from .diffcore import Node, Tape, backward
    from .learner import replay_loss, rollout, teacher_forcing_loss
    from .model import ModelConfig, ParameterStore, init_params
except ImportError:
    # When running as a script
    from corpus import STOP, UNK, EncodedExample
    from decoding import DecodeMode
    from diffcore import Node, Tape, backward
    from learner import replay_loss, rollout, teacher_forcing_loss
    from model import ModelConfig, ParameterStore, init_params

DEFAULT_STEP = 1e-5
TOLERANCE = 1e-4
TINY_CONFIG = ModelConfig(hidden_dim=8, emb_dim=4, vocab_size=12, max_len=20)

LossFn = Callable[[ParameterStore], Tuple[Tape, Node]]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    return float(diff / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))


def check_parameter_gradients(store: ParameterStore, loss_fn: LossFn, step: float = DEFAULT_STEP,
                              max_entries: Optional[int] = None, seed: int = 0) -> Dict[str, float]:
    """Relative error between backward and central differences, per parameter group

    With max_entries set, each group is checked on a seeded random subset
    of that many entries.
    """
    tape, loss = loss_fn(store)
    analytic = backward(tape, loss)
    rng = np.random.default_rng(seed)

    errors = {}
    for name, array in store.items():
        flat_index = np.arange(array.size)
        if max_entries is not None and array.size > max_entries:
            flat_index = np.sort(rng.choice(array.size, size=max_entries, replace=False))
        numeric = np.empty(flat_index.size)
        for k, i in enumerate(flat_index):
            index = np.unravel_index(i, array.shape)
            original = array[index]
            array[index] = original + step
            plus = float(loss_fn(store)[1].value)
            array[index] = original - step
            minus = float(loss_fn(store)[1].value)
            array[index] = original
            numeric[k] = (plus - minus) / (2.0 * step)
        grad = analytic.get(name, np.zeros_like(array)).reshape(-1)[flat_index]
        errors[name] = relative_error(grad, numeric)
    return errors


def tiny_example() -> EncodedExample:
    """Five-token source with one OOV that the target copies"""
    oov = TINY_CONFIG.vocab_size
    return EncodedExample(
        src_ids=(4, 5, UNK, 6, 7),
        src_ext_ids=(4, 5, oov, 6, 7),
        src_oovs=("zzz",),
        tgt_ids=(5, UNK, 8, STOP),
        tgt_ext_ids=(5, oov, 8, STOP),
    )


def model_gradcheck(seed: int = 0, step: float = DEFAULT_STEP, max_entries: Optional[int] = None,
                    reward: float = 0.5) -> Dict[str, Dict[str, float]]:
    """Check the teacher-forcing loss and a reward-weighted sampled trajectory"""
    store = init_params(TINY_CONFIG, seed)
    example = tiny_example()

    trace = rollout(store, example, 0.0, 0.0, DecodeMode.SAMPLE, np.random.default_rng(seed), record=False)

    def replayed(s: ParameterStore) -> Tuple[Tape, Node]:
        tape, loss = replay_loss(s, example, trace.inputs_used, trace.loss_targets)
        return tape, tape.scale(loss, reward)

    return {
        "teacher_forcing": check_parameter_gradients(
            store, lambda s: teacher_forcing_loss(s, example), step, max_entries, seed),
        "replayed_sample": check_parameter_gradients(store, replayed, step, max_entries, seed),
    }


def worst(results: Dict[str, Dict[str, float]]) -> Tuple[str, float]:
    """(loss/group, error) with the largest relative error"""
    label, error = "", 0.0
    for loss_name, groups in results.items():
        for group, value in groups.items():
            if value >= error:
                label, error = f"{loss_name}/{group}", value
    return label, error
