#!/usr/bin/env python3
"""
Synthetic paraphrase corpora for desk-scale runs
"""
from typing import Dict, List, Optional

import numpy as np

try:
    from .corpus import SentencePair
    from .errors import ConfigurationError
except ImportError:
    # When running as a script
    from corpus import SentencePair
    from errors import ConfigurationError

TASKS = ("substitution", "copy", "reverse")
MIN_VOCAB = 8
MAX_LEN = 20


def word(i: int) -> str:
    return f"w{i}"


def synonym_table(vocab_size: int, rng: np.random.Generator) -> Dict[str, str]:
    """Random bijection from the first vocabulary half onto the second"""
    half = vocab_size // 2
    image = rng.permutation(half) + half
    return {word(i): word(int(j)) for i, j in enumerate(image)}


def synth_corpus(task: str, vocab_size: int, n_pairs: int, max_len: int, seed: int,
                 table: Optional[Dict[str, str]] = None) -> List[SentencePair]:
    """Deterministic toy pairs: substituted, copied or reversed token sequences

    Sources draw from the first vocabulary half so every substitution target
    lies in the second half. Lengths are uniform in [1, max_len].
    """
    if task not in TASKS:
        raise ConfigurationError(f"unknown synthetic task {task!r}; use one of {', '.join(TASKS)}")
    if vocab_size < MIN_VOCAB:
        raise ConfigurationError(f"synthetic vocab_size must be >= {MIN_VOCAB}, got {vocab_size}")
    if not 1 <= max_len <= MAX_LEN:
        raise ConfigurationError(f"synthetic max_len must be in [1, {MAX_LEN}], got {max_len}")
    if n_pairs < 0:
        raise ConfigurationError(f"n_pairs must be >= 0, got {n_pairs}")

    rng = np.random.default_rng(seed)
    half = vocab_size // 2
    if task == "substitution" and table is None:
        table = synonym_table(vocab_size, rng)

    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(1, max_len + 1))
        source = tuple(word(int(i)) for i in rng.integers(0, half, size=length))
        if task == "copy":
            target = source
        elif task == "reverse":
            target = tuple(reversed(source))
        else:
            target = tuple(table.get(token, token) for token in source)
        pairs.append(SentencePair(source, target))
    return pairs
