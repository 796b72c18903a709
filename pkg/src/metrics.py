#!/usr/bin/env python3
"""
Metrics - ROUGE-1, ROUGE-2, corpus BLEU up to bigrams and their average
Counts are clipped n-gram overlaps; no stemming, same tokens as training.
"""
import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu

try:
    from .errors import ContractError
except ImportError:
    # When running as a script
    from errors import ContractError

Tokens = Sequence[str]

CSV_HEADER = "rouge1,rouge2,bleu2,avg"


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _overlap(candidate: Tokens, reference: Tokens, n: int) -> Tuple[int, int, int]:
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    match = sum(min(count, ref[gram]) for gram, count in cand.items())
    return match, sum(cand.values()), sum(ref.values())


def rouge_n(candidate: Tokens, reference: Tokens, n: int) -> Tuple[float, float, float]:
    """(precision, recall, f1); zero wherever a denominator is zero"""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    match, n_cand, n_ref = _overlap(candidate, reference, n)
    precision = match / n_cand if n_cand else 0.0
    recall = match / n_ref if n_ref else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)


def reward_rouge2(candidate: Tokens, reference: Tokens) -> float:
    return rouge_n(candidate, reference, 2)[2]


def bleu2(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Corpus BLEU with weights (1/2, 1/2) and the usual brevity penalty"""
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates for {len(references)} references")

    matches, totals = [0, 0], [0, 0]
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in (1, 2):
            match, n_cand, _ = _overlap(cand, ref, n)
            matches[n - 1] += match
            totals[n - 1] += n_cand

    if min(matches) == 0 or min(totals) == 0:
        return 0.0
    log_precision = sum(0.5 * math.log(m / t) for m, t in zip(matches, totals))
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


def sentence_bleu2_smoothed(candidate: Tokens, reference: Tokens) -> float:
    """Smoothed sentence-level BLEU-2; diagnostics only, never used for selection"""
    if not candidate:
        return 0.0
    return float(sentence_bleu([list(reference)], list(candidate), weights=(0.5, 0.5),
                               smoothing_function=SmoothingFunction().method1))


@dataclass(frozen=True)
class MetricReport:
    """Scores already scaled by 100"""
    rouge1: float
    rouge2: float
    bleu2: float

    @property
    def avg(self) -> float:
        return (self.rouge1 + self.rouge2 + self.bleu2) / 3.0

    @staticmethod
    def csv_header() -> str:
        return CSV_HEADER

    def csv_row(self) -> str:
        return f"{self.rouge1:.2f},{self.rouge2:.2f},{self.bleu2:.2f},{self.avg:.2f}"

    def as_dict(self) -> dict:
        return {"rouge1": self.rouge1, "rouge2": self.rouge2, "bleu2": self.bleu2, "avg": self.avg}


def evaluate_corpus(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> MetricReport:
    if not candidates or not references:
        raise ContractError("cannot evaluate an empty corpus")
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates for {len(references)} references")

    r1: List[float] = [rouge_n(c, r, 1)[2] for c, r in zip(candidates, references)]
    r2: List[float] = [rouge_n(c, r, 2)[2] for c, r in zip(candidates, references)]
    return MetricReport(
        rouge1=100.0 * sum(r1) / len(r1),
        rouge2=100.0 * sum(r2) / len(r2),
        bleu2=100.0 * bleu2(candidates, references),
    )
