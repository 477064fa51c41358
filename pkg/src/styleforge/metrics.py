"""Content-preservation metrics (BLEU, ROUGE), alignment distances
(MSE, Jensen-Shannon divergence), and evaluation report assembly.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus
from .errors import (
    AlignmentMismatchError,
    EmptyCorpusError,
    EmptyInputError,
    LengthMismatchError,
    NegativeComponentError,
)
from .lexstyle import LexicalProfile, StyleLexicon, lexical_profile
from .synstyle import (
    DEFAULT_CAPS,
    SurfaceProfile,
    SyntacticProfile,
    surface_profile,
    syntactic_profile,
)
from .version import __version__

ROUGE_VARIANTS = ("1", "2", "3", "L")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]
) -> float:
    """Corpus BLEU over aligned candidate/reference pairs, scaled to [0, 100].

    Geometric mean of clipped n-gram precisions for n = 1..4 times the
    brevity penalty exp(min(0, 1 - r/c)). No smoothing: any zero
    precision zeroes the score.
    """
    if len(candidates) != len(references):
        raise LengthMismatchError(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise EmptyInputError("bleu requires at least one candidate/reference pair")
    matches = [0] * 5
    totals = [0] * 5
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n] += sum(counts.values())
            matches[n] += sum(min(v, ref_counts[g]) for g, v in counts.items())
    if any(matches[n] == 0 or totals[n] == 0 for n in range(1, 5)):
        return 0.0
    log_precision = sum(math.log(matches[n] / totals[n]) for n in range(1, 5)) / 4.0
    brevity = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge(candidate: Sequence[str], reference: Sequence[str], variant: str) -> float:
    """ROUGE F1 for one pair: variant "1"/"2"/"3" by clipped n-gram
    overlap, "L" by longest common subsequence."""
    if variant not in ROUGE_VARIANTS:
        raise ValueError(f"unknown ROUGE variant {variant!r}")
    if not candidate or not reference:
        raise EmptyInputError("rouge requires non-empty token sequences")
    if variant == "L":
        overlap = _lcs_length(candidate, reference)
        cand_total = len(candidate)
        ref_total = len(reference)
    else:
        n = int(variant)
        counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        overlap = sum(min(v, ref_counts[g]) for g, v in counts.items())
        cand_total = sum(counts.values())
        ref_total = sum(ref_counts.values())
    if overlap == 0 or cand_total == 0 or ref_total == 0:
        return 0.0
    precision = overlap / cand_total
    recall = overlap / ref_total
    return 2.0 * precision * recall / (precision + recall)


def rouge_corpus(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    variant: str,
) -> float:
    """Mean per-pair ROUGE F1 over aligned pairs."""
    if len(candidates) != len(references):
        raise LengthMismatchError(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise EmptyInputError("rouge requires at least one pair")
    return sum(rouge(c, r, variant) for c, r in zip(candidates, references)) / len(
        candidates
    )


def mse(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise LengthMismatchError(f"vector lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInputError("mse requires at least one component")
    return sum((x - y) ** 2 for x, y in zip(a, b)) / len(a)


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence between probability vectors, in [0, 1]."""
    if len(p) != len(q):
        raise LengthMismatchError(f"vector lengths differ: {len(p)} vs {len(q)}")
    if any(x < 0 for x in p) or any(x < 0 for x in q):
        raise NegativeComponentError("probability components must be >= 0")
    sp, sq = sum(p), sum(q)
    if abs(sp - 1.0) > 1e-6 or abs(sq - 1.0) > 1e-6:
        raise ValueError("probability vectors must sum to 1 within 1e-6")
    p = [x / sp for x in p]
    q = [x / sq for x in q]

    def kl_to_mid(dist: list[float]) -> float:
        total = 0.0
        for x, y in zip(p, q):
            m = 0.5 * (x + y)
            d = x if dist is p else y
            if d > 0:
                total += d * math.log2(d / m)
        return total

    value = 0.5 * kl_to_mid(p) + 0.5 * kl_to_mid(q)
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class StyleProfile:
    """Full stylometric characterization of one corpus."""

    lexical: LexicalProfile
    syntactic: SyntacticProfile
    surface: SurfaceProfile

    def as_dict(self) -> dict:
        return {
            "lexical": list(self.lexical.values),
            "syntactic": list(self.syntactic.probabilities),
            "surface": list(self.surface.normalized),
            "surface_raw": list(self.surface.raw),
        }


def style_profile(
    corpus: Corpus,
    lexicon: StyleLexicon,
    caps: tuple[float, float, float, float, float] = DEFAULT_CAPS,
) -> StyleProfile:
    return StyleProfile(
        lexical_profile(corpus, lexicon),
        syntactic_profile(corpus),
        surface_profile(corpus, caps),
    )


@dataclass(frozen=True)
class EvaluationReport:
    bleu: float
    rouge1: float
    rouge2: float
    rouge3: float
    rougeL: float
    lexical_mse: float
    syntactic_jsd: float
    surface_mse: float
    generated_profile: StyleProfile
    target_profile: StyleProfile
    source_id: str
    target_id: str
    config_hash: str
    version: str = __version__

    def __post_init__(self) -> None:
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError("bleu out of range [0, 100]")
        for name in ("rouge1", "rouge2", "rouge3", "rougeL", "syntactic_jsd"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} out of range [0, 1]")
        if self.lexical_mse < 0 or self.surface_mse < 0:
            raise ValueError("mse scores must be >= 0")

    def as_dict(self) -> dict:
        return {
            "content": {
                "bleu": self.bleu,
                "rouge1": self.rouge1,
                "rouge2": self.rouge2,
                "rouge3": self.rouge3,
                "rougeL": self.rougeL,
            },
            "alignment": {
                "lexical_mse": self.lexical_mse,
                "syntactic_jsd": self.syntactic_jsd,
                "surface_mse": self.surface_mse,
            },
            "profiles": {
                "generated": self.generated_profile.as_dict(),
                "target": self.target_profile.as_dict(),
            },
            "meta": {
                "source_id": self.source_id,
                "target_id": self.target_id,
                "config_hash": self.config_hash,
                "version": self.version,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _corpus_id(corpus: Corpus) -> str:
    return "+".join(doc.source_id for doc in corpus.documents)


def style_report(
    generated: Corpus,
    target_author: Corpus,
    source: Corpus,
    lexicon: StyleLexicon,
    caps: tuple[float, float, float, float, float] = DEFAULT_CAPS,
    config_hash: str = "",
) -> EvaluationReport:
    """Score a rewriting run: content preservation of `generated` against
    the aligned `source`, stylistic alignment against `target_author`.

    Content metrics run over lowercased token texts so that lowercase
    generator output is not penalized against cased sources.
    """
    gen_sents = [[t.text.lower() for t in s.tokens] for s in generated.sentences()]
    src_sents = [[t.text.lower() for t in s.tokens] for s in source.sentences()]
    if not gen_sents or not src_sents:
        raise EmptyCorpusError("generated and source corpora must be non-empty")
    if not any(True for _ in target_author.sentences()):
        raise EmptyCorpusError("target author corpus must be non-empty")
    if len(gen_sents) != len(src_sents):
        raise AlignmentMismatchError(
            f"generated has {len(gen_sents)} sentences, source has {len(src_sents)}"
        )
    gen_profile = style_profile(generated, lexicon, caps)
    tgt_profile = style_profile(target_author, lexicon, caps)
    return EvaluationReport(
        bleu=bleu(gen_sents, src_sents),
        rouge1=rouge_corpus(gen_sents, src_sents, "1"),
        rouge2=rouge_corpus(gen_sents, src_sents, "2"),
        rouge3=rouge_corpus(gen_sents, src_sents, "3"),
        rougeL=rouge_corpus(gen_sents, src_sents, "L"),
        lexical_mse=mse(gen_profile.lexical.values, tgt_profile.lexical.values),
        syntactic_jsd=jsd(
            gen_profile.syntactic.probabilities, tgt_profile.syntactic.probabilities
        ),
        surface_mse=mse(gen_profile.surface.normalized, tgt_profile.surface.normalized),
        generated_profile=gen_profile,
        target_profile=tgt_profile,
        source_id=_corpus_id(source),
        target_id=_corpus_id(target_author),
        config_hash=config_hash,
    )
