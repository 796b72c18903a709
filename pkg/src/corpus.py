#!/usr/bin/env python3
"""
Corpus - paraphrase pairs, vocabulary and extended-id encoding
The extended ids let the copy mechanism emit source words that are
missing from the fixed vocabulary.
"""
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

try:
    from .errors import ConfigurationError, DecodeError, FormatError, ParseError
except ImportError:
    # When running as a script
    from errors import ConfigurationError, DecodeError, FormatError, ParseError

PAD, UNK, START, STOP = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")
DEFAULT_VOCAB_CAP = 5000
DEFAULT_MAX_LEN = 20


@dataclass(frozen=True)
class SentencePair:
    """A source sentence and one paraphrase of it"""
    source: Tuple[str, ...]
    target: Tuple[str, ...]


@dataclass
class LoadStats:
    """Counts collected while reading a pair file"""
    kept: int = 0
    dropped: int = 0


@dataclass(frozen=True)
class EncodedExample:
    """Token ids of one pair, with per-example ids for source OOVs"""
    src_ids: Tuple[int, ...]
    src_ext_ids: Tuple[int, ...]
    src_oovs: Tuple[str, ...]
    tgt_ids: Tuple[int, ...]
    tgt_ext_ids: Tuple[int, ...]


def tokenize(text: str) -> Tuple[str, ...]:
    """Lowercase whitespace tokenization"""
    return tuple(text.lower().split())


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


class Vocabulary:
    """Bijective token <-> id map; ids 0..3 are PAD, UNK, START, STOP"""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise FormatError(f"vocabulary must start with {SPECIAL_TOKENS}")
        self.token_of: List[str] = list(tokens)
        self.id_of: Dict[str, int] = {}
        for i, token in enumerate(self.token_of):
            if token in self.id_of:
                raise FormatError(f"duplicate vocabulary token {token!r}")
            self.id_of[token] = i

    @property
    def size(self) -> int:
        return len(self.token_of)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, UNK)

    def dump(self, path: Union[str, Path]):
        """Write `token<TAB>id` lines, specials first"""
        lines = [f"{token}\t{i}\n" for i, token in enumerate(self.token_of)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        tokens = []
        text = Path(path).read_text(encoding="utf-8")
        for line_number, line in enumerate(text.splitlines(), 1):
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError("expected token<TAB>id", line_number)
            token, raw_id = fields
            if not raw_id.isdigit() or int(raw_id) != len(tokens):
                raise FormatError(f"line {line_number}: ids must be contiguous from 0, got {raw_id!r}")
            tokens.append(token)
        return cls(tokens)


def load_pairs(path: Union[str, Path], limit: Optional[int] = None,
               stats: Optional[LoadStats] = None) -> List[SentencePair]:
    """Read `source<TAB>target` lines; pairs with an empty side are dropped"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read pair file {path}: {e}") from e

    stats = stats if stats is not None else LoadStats()
    pairs = []
    for line_number, line in enumerate(text.splitlines(), 1):
        if limit is not None and len(pairs) >= limit:
            break
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"expected 2 tab-separated fields, got {len(fields)}", line_number)
        source, target = tokenize(fields[0]), tokenize(fields[1])
        if not source or not target:
            stats.dropped += 1
            continue
        pairs.append(SentencePair(source, target))
    stats.kept = len(pairs)
    return pairs


def build_vocab(pairs: Sequence[SentencePair], cap: int = DEFAULT_VOCAB_CAP) -> Vocabulary:
    """Specials plus the (cap - 4) most frequent tokens, ties by first occurrence"""
    if cap < len(SPECIAL_TOKENS) + 1:
        raise ConfigurationError(f"vocabulary cap must be at least {len(SPECIAL_TOKENS) + 1}, got {cap}")
    if not pairs:
        raise ConfigurationError("cannot build a vocabulary from zero pairs")

    counts: Counter = Counter()
    first_seen: Dict[str, int] = {}
    for pair in pairs:
        for token in pair.source + pair.target:
            counts[token] += 1
            first_seen.setdefault(token, len(first_seen))

    candidates = [t for t in counts if t not in SPECIAL_TOKENS]
    candidates.sort(key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(list(SPECIAL_TOKENS) + candidates[:cap - len(SPECIAL_TOKENS)])


def encode(pair: SentencePair, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> EncodedExample:
    """Truncate and map a pair to ids; source OOVs get size + first-occurrence index"""
    if max_len < 1:
        raise ConfigurationError(f"max_len must be >= 1, got {max_len}")

    source = pair.source[:max_len]
    src_ids, src_ext_ids, oovs = [], [], []
    for token in source:
        token_id = vocab.lookup(token)
        src_ids.append(token_id)
        if token_id == UNK and token not in vocab:
            if token not in oovs:
                oovs.append(token)
            src_ext_ids.append(vocab.size + oovs.index(token))
        else:
            src_ext_ids.append(token_id)

    # STOP takes the last slot when the target is at the length limit
    target = pair.target[:max_len - 1]
    tgt_ids, tgt_ext_ids = [], []
    for token in target:
        token_id = vocab.lookup(token)
        tgt_ids.append(token_id)
        if token_id == UNK and token in oovs:
            tgt_ext_ids.append(vocab.size + oovs.index(token))
        else:
            tgt_ext_ids.append(token_id)
    tgt_ids.append(STOP)
    tgt_ext_ids.append(STOP)

    return EncodedExample(
        src_ids=tuple(src_ids),
        src_ext_ids=tuple(src_ext_ids),
        src_oovs=tuple(oovs),
        tgt_ids=tuple(tgt_ids),
        tgt_ext_ids=tuple(tgt_ext_ids),
    )


def decode_tokens(ids: Sequence[int], vocab: Vocabulary, src_oovs: Sequence[str]) -> List[str]:
    """Map (extended) ids back to tokens, stopping at STOP"""
    tokens = []
    limit = vocab.size + len(src_oovs)
    for token_id in ids:
        token_id = int(token_id)
        if token_id < 0 or token_id >= limit:
            raise DecodeError(f"id {token_id} outside extended vocabulary of size {limit}")
        if token_id == STOP:
            break
        if token_id < vocab.size:
            tokens.append(vocab.token_of[token_id])
        else:
            tokens.append(src_oovs[token_id - vocab.size])
    return tokens


def split(pairs: Sequence[SentencePair], train_n: int, val_n: int, test_n: int,
          seed: int) -> Tuple[List[SentencePair], List[SentencePair], List[SentencePair]]:
    """Seeded shuffle, then contiguous train/val/test slices"""
    if min(train_n, val_n, test_n) < 0:
        raise ConfigurationError("split sizes must be non-negative")
    needed = train_n + val_n + test_n
    if needed > len(pairs):
        raise ConfigurationError(f"split needs {needed} pairs but only {len(pairs)} are available")

    order = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    train = shuffled[:train_n]
    val = shuffled[train_n:train_n + val_n]
    test = shuffled[train_n + val_n:needed]
    return train, val, test
