"""
eval_metrics.py - n-gram metrics and the spatial-term perturbation study

Corpus BLEU-1..4, ROUGE-L and CIDEr written out directly, plus the
experiment that swaps every spatial phrase for "far from" / "close to"
and compares how much the n-gram scores move against how much grounding
accuracy collapses.
"""

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from more_itertools import sliding_window

from config import RelationThresholds
from errors import TooFewPairs
from grounding_oracle import evaluate_corpus
from instruction_gen import Instruction
from scene_model import SceneStore

MAX_ORDER = 4
CIDER_SCALE = 10.0

Tokens = List[str]


def tokenize(text: str) -> Tokens:
    text = re.sub(r'[.,;!?]', ' ', text.lower())
    return text.split()


@dataclass
class TokenizedCorpus:
    pairs: List[Tuple[Tokens, List[Tokens]]]

    def __post_init__(self):
        for i, (hyp, refs) in enumerate(self.pairs):
            if not refs:
                raise ValueError(f"pair {i} has no reference")
            if any(not tok for tok in hyp) or any(not tok for ref in refs for tok in ref):
                raise ValueError(f"pair {i} contains an empty token")

    @classmethod
    def from_texts(cls, hypotheses: Sequence[str], references: Sequence[Sequence[str]]) -> 'TokenizedCorpus':
        if len(hypotheses) != len(references):
            raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
        return cls([(tokenize(h), [tokenize(r) for r in refs]) for h, refs in zip(hypotheses, references)])

    @property
    def empty_hypotheses(self) -> int:
        return sum(1 for hyp, _ in self.pairs if not hyp)


@dataclass
class MetricReport:
    bleu: List[float]
    rouge_l: float
    cider: float
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        record = {'bleu': list(self.bleu), 'rouge_l': self.rouge_l, 'cider': self.cider}
        if self.flags:
            record['flags'] = list(self.flags)
        return record


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(sliding_window(tokens, n))


def bleu(corpus: TokenizedCorpus, max_n: int = MAX_ORDER) -> List[float]:
    """Corpus BLEU-1..max_n, no smoothing: a zero precision zeroes every order above it."""
    if not 1 <= max_n <= MAX_ORDER:
        raise ValueError("max_n must be in 1..4")
    matched = [0] * max_n
    possible = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in corpus.pairs:
        hyp_len += len(hyp)
        # closest reference length, shorter one on ties
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = ngrams(hyp, n)
            max_ref = Counter()
            for r in refs:
                max_ref |= ngrams(r, n)
            matched[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            possible[n - 1] += sum(counts.values())

    if hyp_len == 0:
        return [0.0] * max_n
    brevity = min(1.0, math.exp(1 - ref_len / hyp_len))
    scores = []
    log_sum = 0.0
    for n in range(max_n):
        if matched[n] == 0 or possible[n] == 0:
            scores.extend([0.0] * (max_n - n))
            break
        log_sum += math.log(matched[n] / possible[n])
        scores.append(brevity * math.exp(log_sum / (n + 1)))
    return scores


def lcs_length(a: Tokens, b: Tokens) -> int:
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l(corpus: TokenizedCorpus) -> float:
    scores = []
    for hyp, refs in corpus.pairs:
        best = 0.0
        for ref in refs:
            lcs = lcs_length(hyp, ref)
            if lcs == 0:
                continue
            p, r = lcs / len(hyp), lcs / len(ref)
            best = max(best, 2 * p * r / (p + r))
        scores.append(best)
    return float(np.mean(scores)) if scores else 0.0


def _tfidf(counts: Counter, df: Counter, num_pairs: int) -> Dict[tuple, float]:
    # df is clamped to 1 so n-grams missing from every reference still weigh in
    weights = {g: c * math.log(num_pairs / max(df[g], 1)) for g, c in counts.items()}
    return {g: w for g, w in weights.items() if w > 0.0}


def _cosine(u: Dict[tuple, float], v: Dict[tuple, float]) -> float:
    if not u or not v:
        return 0.0
    dot = sum(w * v[g] for g, w in u.items() if g in v)
    return dot / (math.sqrt(sum(w * w for w in u.values())) * math.sqrt(sum(w * w for w in v.values())))


def cider_per_pair(corpus: TokenizedCorpus) -> List[float]:
    """
    Plain CIDEr (no length penalty, no stemming) scaled by 10.

    Orders where neither the hypothesis nor any reference has a positive-idf
    n-gram are left out of the per-pair average; a pair with no such order
    scores 0.
    """
    num_pairs = len(corpus.pairs)
    if num_pairs < 2:
        raise TooFewPairs(f"CIDEr needs at least 2 pairs, got {num_pairs}")

    doc_freq = []
    for n in range(1, MAX_ORDER + 1):
        df = Counter()
        for _, refs in corpus.pairs:
            df.update(set().union(*(ngrams(r, n) for r in refs)))
        doc_freq.append(df)

    scores = []
    for hyp, refs in corpus.pairs:
        per_order = []
        for n in range(1, MAX_ORDER + 1):
            hyp_vec = _tfidf(ngrams(hyp, n), doc_freq[n - 1], num_pairs)
            ref_vecs = [_tfidf(ngrams(r, n), doc_freq[n - 1], num_pairs) for r in refs]
            if not hyp_vec and not any(ref_vecs):
                continue
            per_order.append(sum(_cosine(hyp_vec, rv) for rv in ref_vecs) / len(ref_vecs))
        scores.append(CIDER_SCALE * sum(per_order) / len(per_order) if per_order else 0.0)
    return scores


def cider(corpus: TokenizedCorpus) -> float:
    return float(np.mean(cider_per_pair(corpus)))


def evaluate_metrics(hypotheses: Sequence[str], references: Sequence[Sequence[str]]) -> MetricReport:
    corpus = TokenizedCorpus.from_texts(hypotheses, references)
    flags = []
    if corpus.empty_hypotheses:
        flags.append(f"EmptyHypothesis: {corpus.empty_hypotheses} empty hypotheses scored as 0")
    return MetricReport(bleu=bleu(corpus), rouge_l=rouge_l(corpus), cider=cider(corpus), flags=flags)


_BETWEEN = re.compile(r'\bbetween\s+(.+?)\s+and\s+the\s+.+$', re.IGNORECASE)
_SPATIAL = re.compile(r'\b(?:closest to|farthest from|close to|far from|next to|near|above|below|on)\b',
                      re.IGNORECASE)
PERTURBATIONS = {'far': 'far from', 'close': 'close to'}


def perturb_spatial_terms(text: str, mode: str) -> str:
    try:
        phrase = PERTURBATIONS[mode]
    except KeyError:
        raise ValueError(f"mode must be 'far' or 'close', got {mode!r}")
    # between-phrases keep only their first anchor
    text = _BETWEEN.sub(lambda m: f"{phrase} {m.group(1)}", text)
    return _SPATIAL.sub(phrase, text)


@dataclass
class PerturbationStudy:
    mode: str
    original: MetricReport
    perturbed: MetricReport
    grounding_acc_original: float
    grounding_acc_perturbed: float

    @staticmethod
    def _relative(before: float, after: float) -> Optional[float]:
        if before == 0:
            return 0.0 if after == 0 else None
        return (after - before) / before

    def deltas(self) -> Dict[str, Optional[float]]:
        o, p = self.original, self.perturbed
        deltas = {f'bleu_{k + 1}': self._relative(o.bleu[k], p.bleu[k]) for k in range(len(o.bleu))}
        deltas['rouge_l'] = self._relative(o.rouge_l, p.rouge_l)
        deltas['cider'] = self._relative(o.cider, p.cider)
        deltas['grounding_acc'] = self._relative(self.grounding_acc_original, self.grounding_acc_perturbed)
        return deltas

    def to_dict(self) -> dict:
        return {
            'mode': self.mode,
            'original': self.original.to_dict(),
            'perturbed': self.perturbed.to_dict(),
            'grounding_acc_original': self.grounding_acc_original,
            'grounding_acc_perturbed': self.grounding_acc_perturbed,
            'relative_deltas': self.deltas(),
        }


def perturb_instruction(inst: Instruction, mode: str) -> Instruction:
    return Instruction(inst.scene_id, inst.target_id, perturb_spatial_terms(inst.text, mode),
                       inst.relation, inst.status, inst.num_distractors)


def perturbation_study(instructions: Sequence[Instruction], scenes: SceneStore, mode: str,
                       references: Optional[Sequence[Sequence[str]]] = None,
                       config: Optional[RelationThresholds] = None, workers: int = 1) -> PerturbationStudy:
    """Score original and perturbed corpora against the same references (the originals by default)."""
    perturbed = [perturb_instruction(inst, mode) for inst in instructions]
    if references is None:
        references = [[inst.text] for inst in instructions]
    return PerturbationStudy(
        mode=mode,
        original=evaluate_metrics([i.text for i in instructions], references),
        perturbed=evaluate_metrics([i.text for i in perturbed], references),
        grounding_acc_original=evaluate_corpus(instructions, scenes, config, workers=workers).overall_acc,
        grounding_acc_perturbed=evaluate_corpus(perturbed, scenes, config, workers=workers).overall_acc,
    )
