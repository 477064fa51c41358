"""Syntactic sentence typing and surface statistics.

Sentence types come from a frozen, parser-free rule cascade over the
token sequence: independent clauses are counted via semicolons and
comma+coordinator patterns, dependent clauses via a fixed subordinator/
relativizer list. This is a deliberate approximation that trades
parser fidelity for bit-reproducibility.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .corpus import Corpus, NUMBER, Sentence, WORD
from .errors import EmptyCorpusError
from .resources import coordinators, subordinators

#: Normalization caps for (commas, semicolons, colons, sentences per
#: paragraph, words per sentence); they bound every surface feature to
#: [0, 1] so squared-error magnitudes stay commensurable.
DEFAULT_CAPS = (5.0, 1.0, 1.0, 20.0, 60.0)


class SentenceKind(enum.Enum):
    SIMPLE = 0
    COMPOUND = 1
    COMPLEX = 2
    COMPOUND_COMPLEX = 3
    OTHER = 4


@dataclass(frozen=True)
class SyntacticProfile:
    """Probability distribution over the five sentence kinds."""

    probabilities: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("syntactic profile must sum to 1")


@dataclass(frozen=True)
class SurfaceProfile:
    raw: tuple[float, float, float, float, float]
    normalized: tuple[float, float, float, float, float]


def classify_sentence(sentence: Sentence) -> SentenceKind:
    """Deterministic rule cascade from the token sequence."""
    tokens = sentence.tokens
    n_words = sum(1 for t in tokens if t.kind == WORD)
    if n_words < 3:
        return SentenceKind.OTHER

    n_independent = 1
    coord = coordinators()
    for i, tok in enumerate(tokens):
        if tok.text == ";":
            n_independent += 1
        elif (
            tok.text.lower() in coord
            and i > 0
            and tokens[i - 1].text == ","
        ):
            n_independent += 1
    has_dependent = any(t.text.lower() in subordinators() for t in tokens)

    if n_independent >= 2 and has_dependent:
        return SentenceKind.COMPOUND_COMPLEX
    if n_independent >= 2:
        return SentenceKind.COMPOUND
    if has_dependent:
        return SentenceKind.COMPLEX
    return SentenceKind.SIMPLE


def syntactic_profile(corpus: Corpus) -> SyntacticProfile:
    counts = [0] * len(SentenceKind)
    total = 0
    for sent in corpus.sentences():
        counts[classify_sentence(sent).value] += 1
        total += 1
    if total == 0:
        raise EmptyCorpusError("syntactic profile requires at least one sentence")
    return SyntacticProfile(tuple(c / total for c in counts))


def surface_profile(
    corpus: Corpus,
    caps: tuple[float, float, float, float, float] = DEFAULT_CAPS,
) -> SurfaceProfile:
    """Average punctuation/length statistics, capped into [0, 1]."""
    if any(c <= 0 for c in caps):
        raise ValueError("all normalization caps must be positive")
    n_sentences = 0
    n_paragraphs = 0
    commas = semicolons = colons = words = 0
    for para in corpus.paragraphs():
        n_paragraphs += 1
        for sent in para.sentences:
            n_sentences += 1
            for tok in sent.tokens:
                if tok.text == ",":
                    commas += 1
                elif tok.text == ";":
                    semicolons += 1
                elif tok.text == ":":
                    colons += 1
                elif tok.kind in (WORD, NUMBER):
                    words += 1
    if n_sentences == 0 or n_paragraphs == 0:
        raise EmptyCorpusError("surface profile requires sentences and paragraphs")
    raw = (
        commas / n_sentences,
        semicolons / n_sentences,
        colons / n_sentences,
        n_sentences / n_paragraphs,
        words / n_sentences,
    )
    normalized = tuple(min(r / cap, 1.0) for r, cap in zip(raw, caps))
    return SurfaceProfile(raw, normalized)
