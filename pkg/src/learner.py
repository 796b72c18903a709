#!/usr/bin/env python3
"""
Learner - the unified online-learning step

At every decoder step two uniform draws decide whether the decoder input is
the ground-truth token (p1 < alpha) or the model's own previous decode, and
whether the loss target is the ground-truth token (p2 < beta) or the decoded
token. The summed log-likelihood of the loss targets, weighted by a reward,
is the objective. MLE, REINFORCE and its variants, and DAGGER are all
settings of (alpha, beta, decode mode, reward).
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .corpus import START, STOP, EncodedExample
    from .decoding import DecodeMode, pick_token
    from .diffcore import DEFAULT_MAX_NORM, Array, Node, Tape, backward, clip_gradients, global_norm
    from .errors import ConfigurationError, ContractError
    from .metrics import reward_rouge2
    from .model import ParameterStore, PointerGenerator
    from .optimizers import OptimizerState, optimizer_step
    from .schedule import ScheduleSpec, constant, exp_decay, format_schedule, inv_sigmoid, rate
except ImportError:
    # When running as a script
    from corpus import START, STOP, EncodedExample
    from decoding import DecodeMode, pick_token
    from diffcore import DEFAULT_MAX_NORM, Array, Node, Tape, backward, clip_gradients, global_norm
    from errors import ConfigurationError, ContractError
    from metrics import reward_rouge2
    from model import ParameterStore, PointerGenerator
    from optimizers import OptimizerState, optimizer_step
    from schedule import ScheduleSpec, constant, exp_decay, format_schedule, inv_sigmoid, rate

BASELINE_SAMPLES = 4
DAGGER_DECAY = 0.9999
BETA_SIGMOID_K = 3000.0
DAGGER_STAR_ALPHA = {"quora": 0.5, "twitter": 0.2}


class RewardMode(Enum):
    UNIT = "unit"
    ROUGE2_BASELINE = "rouge2_baseline"


@dataclass(frozen=True)
class AlgorithmPreset:
    name: str
    alpha: ScheduleSpec
    beta: ScheduleSpec
    decode: DecodeMode
    reward_mode: RewardMode
    n_samples: int = 1

    def describe(self) -> str:
        return (f"{self.name}: alpha={format_schedule(self.alpha)} beta={format_schedule(self.beta)} "
                f"decode={self.decode.value} reward={self.reward_mode.value} n={self.n_samples}")


PRESET_NAMES = ("MLE", "REINFORCE", "REINFORCE-GTI", "REINFORCE-SO", "REINFORCE-SIO", "DAGGER", "DAGGER*")


def preset_by_name(name: str, dataset_profile: str = "quora",
                   alpha: Optional[ScheduleSpec] = None,
                   beta: Optional[ScheduleSpec] = None) -> AlgorithmPreset:
    """Preset table entry, optionally with alpha/beta schedules overridden"""
    if dataset_profile not in DAGGER_STAR_ALPHA:
        raise ConfigurationError(
            f"unknown dataset profile {dataset_profile!r}; use one of {sorted(DAGGER_STAR_ALPHA)}")

    sample, greedy = DecodeMode.SAMPLE, DecodeMode.GREEDY
    unit, baseline = RewardMode.UNIT, RewardMode.ROUGE2_BASELINE
    n = BASELINE_SAMPLES
    table = {
        "MLE": (constant(1.0), constant(1.0), sample, unit, 1),
        "REINFORCE": (constant(0.0), constant(0.0), sample, baseline, n),
        "REINFORCE-GTI": (constant(1.0), constant(0.0), sample, baseline, n),
        "REINFORCE-SO": (constant(1.0), inv_sigmoid(BETA_SIGMOID_K), sample, baseline, n),
        "REINFORCE-SIO": (exp_decay(DAGGER_DECAY), inv_sigmoid(BETA_SIGMOID_K), sample, baseline, n),
        "DAGGER": (exp_decay(DAGGER_DECAY), constant(1.0), greedy, unit, 1),
        "DAGGER*": (constant(DAGGER_STAR_ALPHA[dataset_profile]), constant(1.0), greedy, unit, 1),
    }
    if name not in table:
        raise ConfigurationError(f"unknown preset {name!r}; known presets: {', '.join(PRESET_NAMES)}")

    a, b, decode, reward_mode, n_samples = table[name]
    preset = AlgorithmPreset(name, a, b, decode, reward_mode, n_samples)
    if alpha is not None:
        preset = replace(preset, alpha=alpha.validate())
    if beta is not None:
        preset = replace(preset, beta=beta.validate())
    return preset


@dataclass
class StepTrace:
    """What one rollout did at each decoder step"""
    inputs_used: List[int]
    decoded: List[int]
    loss_targets: List[int]
    log_probs: List[float]
    tape: Tape
    total: Node  # sum of the loss-target log-probabilities, on the tape

    @property
    def length(self) -> int:
        return len(self.loss_targets)

    @property
    def log_likelihood(self) -> float:
        return float(self.total.value)


def _sum_nodes(tape: Tape, terms: Sequence[Node]) -> Node:
    total = terms[0]
    for term in terms[1:]:
        total = tape.add(total, term)
    return total


def rollout(store: ParameterStore, example: EncodedExample, alpha_t: float, beta_t: float,
            decode: DecodeMode, rng: np.random.Generator,
            sample_rng: Optional[np.random.Generator] = None, record: bool = True) -> StepTrace:
    """Unroll the decoder for the full target length

    p1 and p2 are drawn at every step, in that order, so the rng stream
    consumed does not depend on the rates. Sampled decodes draw from
    sample_rng when given, otherwise from rng after p1 and p2.
    """
    if not (0.0 <= alpha_t <= 1.0 and 0.0 <= beta_t <= 1.0):
        raise ContractError(f"rates must be in [0, 1], got alpha={alpha_t} beta={beta_t}")
    sample_rng = sample_rng if sample_rng is not None else rng

    tape = Tape(record=record)
    model = PointerGenerator(store, tape)
    enc = model.encode_source(example.src_ids)
    state = enc.initial
    truth = example.tgt_ext_ids

    inputs, decoded, targets, log_probs, terms = [], [], [], [], []
    for t in range(len(truth)):
        p1, p2 = rng.random(), rng.random()
        if t == 0:
            input_id = START
        else:
            input_id = truth[t - 1] if p1 < alpha_t else decoded[t - 1]
        out = model.decoder_step(state, input_id, enc, example.src_ext_ids)
        y_hat = pick_token(out.dist.value, decode, sample_rng)
        target = truth[t] if p2 < beta_t else y_hat
        term = model.log_prob_node(out.dist, target)

        inputs.append(input_id)
        decoded.append(y_hat)
        targets.append(target)
        log_probs.append(float(term.value))
        terms.append(term)
        state = out.state

    return StepTrace(inputs, decoded, targets, log_probs, tape, _sum_nodes(tape, terms))


def replay_loss(store: ParameterStore, example: EncodedExample, inputs: Sequence[int],
                targets: Sequence[int], record: bool = True) -> Tuple[Tape, Node]:
    """Negative summed log-likelihood of a fixed input/target trajectory"""
    if len(inputs) != len(targets) or not targets:
        raise ContractError(f"trajectory needs equal non-empty inputs and targets, "
                            f"got {len(inputs)} and {len(targets)}")
    tape = Tape(record=record)
    model = PointerGenerator(store, tape)
    enc = model.encode_source(example.src_ids)
    state = enc.initial
    terms = []
    for input_id, target in zip(inputs, targets):
        out = model.decoder_step(state, input_id, enc, example.src_ext_ids)
        terms.append(model.log_prob_node(out.dist, target))
        state = out.state
    return tape, tape.neg(_sum_nodes(tape, terms))


def teacher_forcing_loss(store: ParameterStore, example: EncodedExample,
                         record: bool = True) -> Tuple[Tape, Node]:
    truth = list(example.tgt_ext_ids)
    return replay_loss(store, example, [START] + truth[:-1], truth, record)


def reward_tokens(trace: StepTrace) -> List[int]:
    """Loss targets up to, not including, the first STOP"""
    tokens = trace.loss_targets
    return list(tokens[:tokens.index(STOP)] if STOP in tokens else tokens)


def reference_tokens(example: EncodedExample) -> List[int]:
    return [t for t in example.tgt_ext_ids if t != STOP]


def compute_reward(trace: StepTrace, example: EncodedExample, mode: RewardMode,
                   cohort: Sequence[StepTrace] = ()) -> float:
    if mode is RewardMode.UNIT:
        return 1.0
    if not cohort:
        raise ContractError("baseline reward needs a non-empty cohort")
    reference = reference_tokens(example)
    own = reward_rouge2(reward_tokens(trace), reference)
    mean = sum(reward_rouge2(reward_tokens(other), reference) for other in cohort) / len(cohort)
    return own - mean


def cohort_rewards(cohort: Sequence[StepTrace], example: EncodedExample) -> List[float]:
    """Centered ROUGE-2 rewards for a whole cohort"""
    reference = reference_tokens(example)
    scores = [reward_rouge2(reward_tokens(trace), reference) for trace in cohort]
    mean = sum(scores) / len(scores)
    return [score - mean for score in scores]


@dataclass
class TrainDiagnostics:
    iteration: int
    preset: str
    alpha: float
    beta: float
    loss: float
    rewards: List[float] = field(default_factory=list)
    grad_norm: float = 0.0
    update_skipped: bool = False

    @property
    def mean_reward(self) -> float:
        return sum(self.rewards) / len(self.rewards) if self.rewards else 0.0

    @staticmethod
    def csv_header() -> str:
        return "iter,preset,alpha,beta,loss,mean_reward"

    def csv_line(self) -> str:
        return (f"{self.iteration},{self.preset},{self.alpha:.6f},{self.beta:.6f},"
                f"{self.loss:.6f},{self.mean_reward:.6f}")


def _zero_grads(store: ParameterStore) -> Dict[str, Array]:
    return {name: np.zeros_like(value) for name, value in store.items()}


def accumulate_gradients(store: ParameterStore, example: EncodedExample, preset: AlgorithmPreset,
                         iteration: int, rng: np.random.Generator
                         ) -> Tuple[Dict[str, Array], TrainDiagnostics]:
    """Gradient of -L * r for one example, averaged over the preset's samples"""
    alpha_t, beta_t = rate(preset.alpha, iteration), rate(preset.beta, iteration)

    if preset.reward_mode is RewardMode.UNIT:
        traces = [rollout(store, example, alpha_t, beta_t, preset.decode, rng)]
        rewards = [compute_reward(traces[0], example, RewardMode.UNIT)]
    else:
        # one independent stream per sample, indexed by sample number
        streams = rng.spawn(preset.n_samples)
        traces = [rollout(store, example, alpha_t, beta_t, preset.decode, s) for s in streams]
        rewards = cohort_rewards(traces, example)

    grads = _zero_grads(store)
    for trace, reward in zip(traces, rewards):
        if reward == 0.0:
            continue
        tape = trace.tape
        root = tape.scale(tape.neg(trace.total), reward)
        for name, g in backward(tape, root).items():
            grads[name] += g
    if len(traces) > 1:
        grads = {name: g / len(traces) for name, g in grads.items()}

    loss = -sum(trace.log_likelihood for trace in traces) / len(traces)
    diagnostics = TrainDiagnostics(iteration, preset.name, alpha_t, beta_t, loss, rewards,
                                   update_skipped=all(r == 0.0 for r in rewards))
    return grads, diagnostics


def apply_gradients(store: ParameterStore, opt_state: OptimizerState, grads: Dict[str, Array],
                    diagnostics: TrainDiagnostics, max_grad_norm: float = DEFAULT_MAX_NORM):
    """Clip and apply unless the step was flagged as skipped"""
    diagnostics.grad_norm = global_norm(grads)
    if diagnostics.update_skipped:
        return store, opt_state
    clipped = clip_gradients(grads, max_grad_norm)
    return optimizer_step(opt_state.spec, opt_state, store, clipped)


def train_step(store: ParameterStore, opt_state: OptimizerState, example: EncodedExample,
               preset: AlgorithmPreset, iteration: int, rng: np.random.Generator,
               max_grad_norm: float = DEFAULT_MAX_NORM
               ) -> Tuple[ParameterStore, OptimizerState, TrainDiagnostics]:
    if iteration < 0:
        raise ContractError(f"iteration must be >= 0, got {iteration}")
    grads, diagnostics = accumulate_gradients(store, example, preset, iteration, rng)
    store, opt_state = apply_gradients(store, opt_state, grads, diagnostics, max_grad_norm)
    return store, opt_state, diagnostics
