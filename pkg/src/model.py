#!/usr/bin/env python3
"""
Pointer-generator encoder-decoder
Bidirectional LSTM encoder, LSTM decoder with additive attention, and a
scalar copy gate mixing the generation softmax with the attention
distribution over source positions (no coverage).
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .corpus import UNK, EncodedExample
    from .diffcore import Array, Node, Tape
    from .errors import ConfigurationError, ContractError
except ImportError:
    # When running as a script
    from corpus import UNK, EncodedExample
    from diffcore import Array, Node, Tape
    from errors import ConfigurationError, ContractError

LOG_FLOOR = 1e-12
INIT_SCALE = 0.1


@dataclass(frozen=True)
class ModelConfig:
    """Model dimensions"""
    hidden_dim: int = 256
    emb_dim: int = 128
    vocab_size: int = 5000
    max_len: int = 20
    attn_dim: int = 0  # 0 selects 2 * hidden_dim

    def validate(self) -> "ModelConfig":
        for name in ("hidden_dim", "emb_dim", "vocab_size", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.attn_dim < 0:
            raise ConfigurationError(f"attn_dim must be >= 0, got {self.attn_dim}")
        return self

    @property
    def attention_size(self) -> int:
        return self.attn_dim or 2 * self.hidden_dim

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.hidden_dim, self.emb_dim, self.vocab_size, self.max_len, self.attn_dim)


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every weight; insertion order is the checkpoint order"""
    H, E, V, A = config.hidden_dim, config.emb_dim, config.vocab_size, config.attention_size
    return {
        "embedding": (V, E),
        "enc_fw_W": (E + H, 4 * H),
        "enc_fw_b": (1, 4 * H),
        "enc_bw_W": (E + H, 4 * H),
        "enc_bw_b": (1, 4 * H),
        "reduce_c_W": (2 * H, H),
        "reduce_c_b": (1, H),
        "reduce_h_W": (2 * H, H),
        "reduce_h_b": (1, H),
        "dec_in_W": (E + 2 * H, E),
        "dec_in_b": (1, E),
        "dec_W": (E + H, 4 * H),
        "dec_b": (1, 4 * H),
        "attn_W_h": (2 * H, A),
        "attn_W_s": (2 * H, A),
        "attn_v": (A, 1),
        "attn_b": (1, A),
        "out_W": (3 * H, V),
        "out_b": (1, V),
        "gen_w_h": (2 * H, 1),
        "gen_w_s": (2 * H, 1),
        "gen_w_x": (E, 1),
        "gen_b": (1, 1),
    }


def is_bias(name: str) -> bool:
    return name.endswith("_b")


class ParameterStore:
    """Named float64 arrays for every model weight"""

    def __init__(self, config: ModelConfig, arrays: Dict[str, Array]):
        self.config = config.validate()
        expected = parameter_shapes(config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ContractError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
        self.arrays: Dict[str, Array] = {}
        for name, shape in expected.items():
            array = np.asarray(arrays[name], dtype=np.float64)
            if array.shape != shape:
                raise ContractError(f"{name}: expected shape {shape}, got {array.shape}")
            self.arrays[name] = array

    def __getitem__(self, name: str) -> Array:
        return self.arrays[name]

    def __setitem__(self, name: str, value: Array):
        if name not in self.arrays or np.shape(value) != self.arrays[name].shape:
            raise ContractError(f"cannot assign {np.shape(value)} to parameter {name!r}")
        self.arrays[name] = np.asarray(value, dtype=np.float64)

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def equals(self, other: "ParameterStore") -> bool:
        """Bit-exact comparison"""
        return self.config == other.config and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def init_params(config: ModelConfig, seed: int) -> ParameterStore:
    """Weights ~ U(-0.1, 0.1), biases zero"""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in parameter_shapes(config.validate()).items():
        if is_bias(name):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    return ParameterStore(config, arrays)


@dataclass
class DecoderState:
    h: Node
    c: Node
    context: Node


@dataclass
class EncoderStates:
    states: Node          # S x 2H, forward/backward concatenated
    features: Node        # S x A, W_h h_i precomputed for attention
    initial: DecoderState
    # one-hot copy matrices keyed by (source ext ids, extended size)
    copy_maps: Dict[Tuple[Tuple[int, ...], int], Node] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.states.value.shape[0]


@dataclass
class StepOutput:
    state: DecoderState
    dist: Node
    attention: Node
    p_gen: Node


def step_log_prob(dist, token_id: int) -> float:
    """log(dist[token_id] + 1e-12) for a plain probability vector"""
    dist = np.asarray(dist, dtype=np.float64).reshape(-1)
    if not 0 <= token_id < dist.size:
        raise ContractError(f"token id {token_id} outside distribution support {dist.size}")
    return float(np.log(dist[token_id] + LOG_FLOOR))


class PointerGenerator:
    """The model bound to one tape; parameters enter the tape lazily"""

    def __init__(self, store: ParameterStore, tape: Optional[Tape] = None):
        self.store = store
        self.config = store.config
        self.tape = tape if tape is not None else Tape(record=False)

    def p(self, name: str) -> Node:
        return self.tape.param(name, self.store[name])

    def _affine(self, x: Node, weight: str, bias: str) -> Node:
        return self.tape.add(self.tape.matmul(x, self.p(weight)), self.p(bias))

    def _lstm_cell(self, x: Node, h: Node, c: Node, weight: str, bias: str) -> Tuple[Node, Node]:
        t, H = self.tape, self.config.hidden_dim
        gates = self._affine(t.concat([x, h], axis=1), weight, bias)
        i = t.sigmoid(t.slice(gates, 0, H))
        f = t.sigmoid(t.slice(gates, H, 2 * H))
        o = t.sigmoid(t.slice(gates, 2 * H, 3 * H))
        g = t.tanh(t.slice(gates, 3 * H, 4 * H))
        c_new = t.add(t.mul(f, c), t.mul(i, g))
        h_new = t.mul(o, t.tanh(c_new))
        return h_new, c_new

    def _embed(self, token_id: int) -> Node:
        # extended ids embed as UNK
        if token_id >= self.config.vocab_size:
            token_id = UNK
        return self.tape.embed(self.p("embedding"), [token_id])

    def encode_source(self, src_ids: Sequence[int]) -> EncoderStates:
        t, H = self.tape, self.config.hidden_dim
        if len(src_ids) == 0:
            raise ContractError("source must be non-empty")
        for token_id in src_ids:
            if not 0 <= token_id < self.config.vocab_size:
                raise ContractError(
                    f"encoder id {token_id} outside vocabulary of size {self.config.vocab_size}")

        embedded = [t.embed(self.p("embedding"), [token_id]) for token_id in src_ids]
        zero = t.const(np.zeros((1, H)))

        h, c = zero, zero
        forward: List[Tuple[Node, Node]] = []
        for x in embedded:
            h, c = self._lstm_cell(x, h, c, "enc_fw_W", "enc_fw_b")
            forward.append((h, c))

        h, c = zero, zero
        backward: List[Tuple[Node, Node]] = [None] * len(embedded)
        for i in reversed(range(len(embedded))):
            h, c = self._lstm_cell(embedded[i], h, c, "enc_bw_W", "enc_bw_b")
            backward[i] = (h, c)

        rows = [t.concat([forward[i][0], backward[i][0]], axis=1) for i in range(len(embedded))]
        states = t.concat(rows, axis=0)
        features = t.matmul(states, self.p("attn_W_h"))

        final_c = t.concat([forward[-1][1], backward[0][1]], axis=1)
        final_h = t.concat([forward[-1][0], backward[0][0]], axis=1)
        init_c = t.tanh(self._affine(final_c, "reduce_c_W", "reduce_c_b"))
        init_h = t.tanh(self._affine(final_h, "reduce_h_W", "reduce_h_b"))
        initial = DecoderState(init_h, init_c, t.const(np.zeros((1, 2 * H))))
        return EncoderStates(states, features, initial)

    def _copy_map(self, enc: EncoderStates, src_ext_ids: Sequence[int], extended_size: int) -> Node:
        key = (tuple(src_ext_ids), extended_size)
        node = enc.copy_maps.get(key)
        if node is None:
            ids = key[0]
            onehot = np.zeros((len(ids), extended_size))
            onehot[np.arange(len(ids)), ids] = 1.0
            node = self.tape.const(onehot)
            enc.copy_maps[key] = node
        return node

    def extended_size(self, src_ext_ids: Sequence[int]) -> int:
        return max(self.config.vocab_size, max(src_ext_ids) + 1)

    def decoder_step(self, state: DecoderState, input_id: int, enc: EncoderStates,
                     src_ext_ids: Sequence[int]) -> StepOutput:
        t, V = self.tape, self.config.vocab_size
        if len(src_ext_ids) != enc.length:
            raise ContractError(f"{len(src_ext_ids)} source ids for {enc.length} encoder states")
        ext_size = self.extended_size(src_ext_ids)
        if not 0 <= input_id < ext_size:
            raise ContractError(f"decoder input {input_id} outside extended vocabulary {ext_size}")

        x = self._affine(t.concat([self._embed(input_id), state.context], axis=1), "dec_in_W", "dec_in_b")
        h, c = self._lstm_cell(x, state.h, state.c, "dec_W", "dec_b")
        s = t.concat([h, c], axis=1)

        # e_i = v . tanh(W_h h_i + W_s s_t + b_attn)
        decoder_features = self._affine(s, "attn_W_s", "attn_b")
        energies = t.matmul(t.tanh(t.add(enc.features, decoder_features)), self.p("attn_v"))
        attention = t.softmax(t.transpose(energies))
        context = t.matmul(attention, enc.states)

        gate = t.add(t.add(t.matmul(context, self.p("gen_w_h")), t.matmul(s, self.p("gen_w_s"))),
                     t.add(t.matmul(x, self.p("gen_w_x")), self.p("gen_b")))
        p_gen = t.sigmoid(gate)

        vocab_dist = t.softmax(self._affine(t.concat([h, context], axis=1), "out_W", "out_b"))
        generated = t.mul(p_gen, vocab_dist)
        if ext_size > V:
            generated = t.concat([generated, t.const(np.zeros((1, ext_size - V)))], axis=1)
        copied = t.matmul(attention, self._copy_map(enc, src_ext_ids, ext_size))
        one_minus = t.add(t.const(1.0), t.neg(p_gen))
        dist = t.add(generated, t.mul(one_minus, copied))

        return StepOutput(DecoderState(h, c, context), dist, attention, p_gen)

    def log_prob_node(self, dist: Node, token_id: int) -> Node:
        """Graph form of step_log_prob"""
        size = dist.value.shape[-1]
        if not 0 <= token_id < size:
            raise ContractError(f"token id {token_id} outside distribution support {size}")
        t = self.tape
        return t.log(t.add(t.pick(dist, (0, token_id)), t.const(LOG_FLOOR)))

    # decoder protocol used by decoding

    def begin(self, example: EncodedExample) -> Tuple[EncoderStates, DecoderState]:
        enc = self.encode_source(example.src_ids)
        return enc, enc.initial

    def advance(self, enc: EncoderStates, state: DecoderState, input_id: int,
                example: EncodedExample) -> Tuple[DecoderState, Array]:
        out = self.decoder_step(state, input_id, enc, example.src_ext_ids)
        return out.state, out.dist.value.reshape(-1)
