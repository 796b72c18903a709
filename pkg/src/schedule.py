#!/usr/bin/env python3
"""
Schedule rates for alpha (decoder input) and beta (loss target)
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List

try:
    from .errors import ConfigurationError, ContractError
except ImportError:
    # When running as a script
    from errors import ConfigurationError, ContractError

# exp(i/k) overflows near 709
_EXP_LIMIT = 700.0


class ScheduleKind(Enum):
    """Schedule-rate function families"""
    CONSTANT = "constant"
    EXP_DECAY = "exp_decay"
    INV_SIGMOID = "inv_sigmoid"


# config syntax prefixes
_PREFIXES = {
    "const": ScheduleKind.CONSTANT,
    "exp": ScheduleKind.EXP_DECAY,
    "sig": ScheduleKind.INV_SIGMOID,
}


@dataclass(frozen=True)
class ScheduleSpec:
    kind: ScheduleKind
    k: float
    floor: float = 0.0

    def validate(self) -> "ScheduleSpec":
        if not 0.0 <= self.floor <= 1.0:
            raise ConfigurationError(f"schedule floor must be in [0, 1], got {self.floor}")
        if self.kind is ScheduleKind.CONSTANT and not 0.0 <= self.k <= 1.0:
            raise ConfigurationError(f"constant rate must be in [0, 1], got {self.k}")
        if self.kind is ScheduleKind.EXP_DECAY and not 0.0 < self.k < 1.0:
            raise ConfigurationError(f"exp_decay needs 0 < k < 1, got {self.k}")
        if self.kind is ScheduleKind.INV_SIGMOID and not self.k > 1.0:
            raise ConfigurationError(f"inv_sigmoid needs k > 1, got {self.k}")
        return self


def constant(k: float) -> ScheduleSpec:
    return ScheduleSpec(ScheduleKind.CONSTANT, float(k)).validate()


def exp_decay(k: float, floor: float = 0.0) -> ScheduleSpec:
    return ScheduleSpec(ScheduleKind.EXP_DECAY, float(k), float(floor)).validate()


def inv_sigmoid(k: float, floor: float = 0.0) -> ScheduleSpec:
    return ScheduleSpec(ScheduleKind.INV_SIGMOID, float(k), float(floor)).validate()


def raw_rate(spec: ScheduleSpec, iteration: int) -> float:
    """Rate before the floor is applied"""
    if spec.kind is ScheduleKind.CONSTANT:
        return spec.k
    if spec.kind is ScheduleKind.EXP_DECAY:
        return math.pow(spec.k, iteration)
    x = iteration / spec.k
    if x < _EXP_LIMIT:
        return spec.k / (spec.k + math.exp(x))
    e = spec.k * math.exp(-x)
    return e / (1.0 + e)


def rate(spec: ScheduleSpec, iteration: int) -> float:
    """Schedule rate in [0, 1] at a training iteration"""
    spec.validate()
    if iteration < 0:
        raise ContractError(f"iteration must be >= 0, got {iteration}")
    value = raw_rate(spec, iteration)
    if spec.kind is not ScheduleKind.CONSTANT:
        value = max(value, spec.floor)
    return min(1.0, max(0.0, value))


def schedule_curve(spec: ScheduleSpec, iterations: Iterable[int]) -> List[float]:
    return [rate(spec, i) for i in iterations]


def parse_schedule(text: str) -> ScheduleSpec:
    """Parse `const:0.5`, `exp:0.9999[:floor]` or `sig:3000[:floor]`"""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3) or parts[0] not in _PREFIXES:
        raise ConfigurationError(f"bad schedule {text!r}; expected const:K, exp:K[:FLOOR] or sig:K[:FLOOR]")
    kind = _PREFIXES[parts[0]]
    if kind is ScheduleKind.CONSTANT and len(parts) == 3:
        raise ConfigurationError(f"constant schedule takes no floor: {text!r}")
    try:
        numbers = [float(p) for p in parts[1:]]
    except ValueError:
        raise ConfigurationError(f"bad number in schedule {text!r}")
    floor = numbers[1] if len(numbers) == 2 else 0.0
    return ScheduleSpec(kind, numbers[0], floor).validate()


def format_number(value: float) -> str:
    """Shortest text that parses back to the same float"""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def format_schedule(spec: ScheduleSpec) -> str:
    """Inverse of parse_schedule, exact for every float"""
    prefix = {v: k for k, v in _PREFIXES.items()}[spec.kind]
    text = f"{prefix}:{format_number(spec.k)}"
    if spec.kind is not ScheduleKind.CONSTANT and spec.floor:
        text += f":{format_number(spec.floor)}"
    return text
