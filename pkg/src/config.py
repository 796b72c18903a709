#!/usr/bin/env python3
"""
Trainer configuration

Precedence, lowest first: dataclass defaults, environment, key=value
config file, command-line flags.
"""
import os
import typing
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

try:
    from .errors import ConfigurationError
    from .learner import PRESET_NAMES, preset_by_name
    from .model import ModelConfig
    from .optimizers import OptimizerSpec, adagrad, adam
    from .schedule import parse_schedule
    from .synth import TASKS
except ImportError:
    # When running as a script
    from errors import ConfigurationError
    from learner import PRESET_NAMES, preset_by_name
    from model import ModelConfig
    from optimizers import OptimizerSpec, adagrad, adam
    from schedule import parse_schedule
    from synth import TASKS

PHASES = ("pretrain", "finetune")
PHASE_EVAL_EVERY = {"pretrain": 1000, "finetune": 10}
PHASE_ITERATIONS = {"pretrain": 3000, "finetune": 500}

ENV_VARS = {
    "SEQ2SEQ_LAB_DB": "run_db",
    "SEQ2SEQ_LAB_LOG": "log_path",
    "SEQ2SEQ_LAB_WORKERS": "workers",
}


@dataclass(frozen=True)
class TrainConfig:
    phase: str = "pretrain"
    preset: str = "MLE"
    dataset_profile: str = "quora"

    # data: explicit split files, one file to split, or a synthetic task
    train_path: Optional[str] = None
    val_path: Optional[str] = None
    test_path: Optional[str] = None
    data_path: Optional[str] = None
    synth_task: str = "substitution"
    synth_vocab: int = 50
    synth_max_len: int = 10
    train_n: int = 2000
    val_n: int = 200
    test_n: int = 200
    vocab_cap: int = 5000
    max_len: int = 20

    hidden_dim: int = 256
    emb_dim: int = 128
    attn_dim: int = 0

    pretrain_optimizer: str = "adagrad"
    pretrain_lr: float = 0.15
    adagrad_init_acc: float = 0.1
    finetune_optimizer: str = "adam"
    finetune_lr: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 2.0
    batch_size: int = 1

    eval_every: int = 0  # 0 selects the phase default
    max_iterations: Optional[int] = None  # None selects the phase default
    seed: int = 7
    alpha: Optional[str] = None
    beta: Optional[str] = None

    run_dir: str = "runs"
    checkpoint: Optional[str] = None
    pretrain_checkpoint: Optional[str] = None
    val_limit: int = 200
    val_beam: int = 1
    test_beam: int = 8
    length_norm: bool = False
    workers: int = 1

    run_db: Optional[str] = None
    log_path: Optional[str] = None

    def validate(self) -> "TrainConfig":
        if self.phase not in PHASES:
            raise ConfigurationError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if self.preset not in PRESET_NAMES:
            raise ConfigurationError(f"unknown preset {self.preset!r}; known presets: {', '.join(PRESET_NAMES)}")
        if self.synth_task not in TASKS:
            raise ConfigurationError(f"synth_task must be one of {TASKS}, got {self.synth_task!r}")
        for name in ("eval_every", "train_n", "val_n", "test_n", "val_limit"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("batch_size", "val_beam", "test_beam", "workers", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if not self.max_grad_norm > 0:
            raise ConfigurationError(f"max_grad_norm must be positive, got {self.max_grad_norm}")
        self.model_config().validate()
        self.optimizer_spec("pretrain")
        self.optimizer_spec("finetune")
        self.algorithm_preset()
        return self

    @property
    def resolved_eval_every(self) -> int:
        return self.eval_every or PHASE_EVAL_EVERY[self.phase]

    @property
    def resolved_iterations(self) -> int:
        return PHASE_ITERATIONS[self.phase] if self.max_iterations is None else self.max_iterations

    def model_config(self, vocab_size: int = 5000) -> ModelConfig:
        return ModelConfig(self.hidden_dim, self.emb_dim, vocab_size, self.max_len, self.attn_dim)

    def optimizer_spec(self, phase: Optional[str] = None) -> OptimizerSpec:
        phase = phase or self.phase
        kind = self.pretrain_optimizer if phase == "pretrain" else self.finetune_optimizer
        lr = self.pretrain_lr if phase == "pretrain" else self.finetune_lr
        if kind == "adagrad":
            return adagrad(lr, self.adagrad_init_acc)
        if kind == "adam":
            return adam(lr, self.adam_beta1, self.adam_beta2, self.adam_eps)
        raise ConfigurationError(f"unknown optimizer {kind!r} for {phase}")

    def algorithm_preset(self, preset: Optional[str] = None):
        alpha = parse_schedule(self.alpha) if self.alpha else None
        beta = parse_schedule(self.beta) if self.beta else None
        return preset_by_name(preset or self.preset, self.dataset_profile, alpha, beta)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


_HINTS = typing.get_type_hints(TrainConfig)
_FIELD_NAMES = {f.name for f in fields(TrainConfig)}


def coerce(name: str, raw: str) -> Any:
    """Convert a text value to the type of a TrainConfig field"""
    if name not in _FIELD_NAMES:
        raise ConfigurationError(f"unknown config key {name!r}")
    hint = _HINTS[name]
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    raw = raw.strip()
    if optional and raw.lower() in ("", "none"):
        return None
    try:
        if base is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {name} (expected {base.__name__})")


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse UTF-8 key=value lines; `#` starts a comment"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read config file {path}: {e}") from e

    values = {}
    for line_number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}: line {line_number}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = coerce(key, raw)
        except ConfigurationError as e:
            raise ConfigurationError(f"{path}: line {line_number}: {e}") from e
    return values


def env_values(environ: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    return {name: coerce(name, environ[var]) for var, name in ENV_VARS.items() if environ.get(var)}


def build_config(config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 environ: Optional[Dict[str, str]] = None) -> TrainConfig:
    values = env_values(environ)
    if config_file:
        values.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_NAMES:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = value
    return replace(TrainConfig(), **values).validate()
