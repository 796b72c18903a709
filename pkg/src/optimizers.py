#!/usr/bin/env python3
"""
Adagrad and Adam over a ParameterStore, updated in place
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

try:
    from .diffcore import Array
    from .errors import ConfigurationError, NumericError
except ImportError:
    # When running as a script
    from diffcore import Array
    from errors import ConfigurationError, NumericError

ADAGRAD = "adagrad"
ADAM = "adam"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = ADAGRAD
    learning_rate: float = 0.15
    adagrad_init_acc: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> "OptimizerSpec":
        if self.kind not in (ADAGRAD, ADAM):
            raise ConfigurationError(f"unknown optimizer {self.kind!r}; use {ADAGRAD} or {ADAM}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.kind == ADAGRAD and not self.adagrad_init_acc > 0:
            raise ConfigurationError(f"adagrad_init_acc must be positive, got {self.adagrad_init_acc}")
        if self.kind == ADAM:
            if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
                raise ConfigurationError("adam betas must be in [0, 1)")
            if not self.adam_eps > 0:
                raise ConfigurationError(f"adam_eps must be positive, got {self.adam_eps}")
        return self


def adagrad(learning_rate: float = 0.15, init_acc: float = 0.1) -> OptimizerSpec:
    return OptimizerSpec(ADAGRAD, learning_rate, adagrad_init_acc=init_acc).validate()


def adam(learning_rate: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999,
         eps: float = 1e-8) -> OptimizerSpec:
    return OptimizerSpec(ADAM, learning_rate, adam_beta1=beta1, adam_beta2=beta2, adam_eps=eps).validate()


@dataclass
class OptimizerState:
    spec: OptimizerSpec
    step: int = 0
    # adagrad: {"acc": ...}; adam: {"m": ..., "v": ...} per parameter name
    slots: Dict[str, Dict[str, Array]] = field(default_factory=dict)


def init_optimizer_state(spec: OptimizerSpec, params) -> OptimizerState:
    spec.validate()
    slots = {}
    for name, value in params.items():
        if spec.kind == ADAGRAD:
            slots[name] = {"acc": np.full_like(value, spec.adagrad_init_acc)}
        else:
            slots[name] = {"m": np.zeros_like(value), "v": np.zeros_like(value)}
    return OptimizerState(spec, 0, slots)


def optimizer_step(spec: OptimizerSpec, state: OptimizerState, params,
                   grads: Dict[str, Array]):
    """One update of every parameter that has a gradient

    Updates are computed for all parameters first and applied only if every
    one is finite, so a failing step leaves params and state untouched.
    """
    spec.validate()
    step = state.step + 1
    updates, new_slots = {}, {}
    for name, g in grads.items():
        slot = state.slots[name]
        if spec.kind == ADAGRAD:
            acc = slot["acc"] + g * g
            updates[name] = spec.learning_rate * g / np.sqrt(acc)
            new_slots[name] = {"acc": acc}
        else:
            m = spec.adam_beta1 * slot["m"] + (1.0 - spec.adam_beta1) * g
            v = spec.adam_beta2 * slot["v"] + (1.0 - spec.adam_beta2) * g * g
            m_hat = m / (1.0 - spec.adam_beta1 ** step)
            v_hat = v / (1.0 - spec.adam_beta2 ** step)
            updates[name] = spec.learning_rate * m_hat / (np.sqrt(v_hat) + spec.adam_eps)
            new_slots[name] = {"m": m, "v": v}
        if not np.all(np.isfinite(updates[name])):
            raise NumericError(f"non-finite {spec.kind} update for {name}; step aborted")

    for name, update in updates.items():
        params[name] -= update
        state.slots[name] = new_slots[name]
    state.step = step
    return params, state
