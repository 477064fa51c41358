"""Lexical style scoring: seed lexicons, NPMI association, kNN label
propagation, and per-corpus lexical profiles.

Co-occurrence is paragraph-level and presence-based: a pair counts at
most once per paragraph. Word scores live in [0, 1] per spectrum, where
1 means pole A (subjective / concrete / literary / formal) and 0 means
pole B; the complementary tendency is one minus the score.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, WORD
from .errors import (
    CorpusTooSmallError,
    DataError,
    EmptyCorpusError,
    FileReadError,
    NoSeedCoverageError,
    UnknownWordError,
)
from .resources import read_data_text, stopwords

logger = logging.getLogger(__name__)

SPECTRUM_NAMES = (
    "subjective-objective",
    "concrete-abstract",
    "literary-colloquial",
    "formal-informal",
)

SEED_CLAMPED = "seed-clamped"
PROPAGATED = "propagated"
RAW_FALLBACK = "raw-fallback"


@dataclass(frozen=True)
class SpectrumSeeds:
    name: str
    pole_a: frozenset[str]
    pole_b: frozenset[str]

    def __post_init__(self) -> None:
        if len(self.pole_a) < 10 or len(self.pole_b) < 10:
            raise ValueError(f"spectrum {self.name}: each pole needs >= 10 words")
        overlap = self.pole_a & self.pole_b
        if overlap:
            raise ValueError(f"spectrum {self.name}: poles share words {sorted(overlap)}")


@dataclass(frozen=True)
class SeedLexicon:
    spectra: tuple[SpectrumSeeds, SpectrumSeeds, SpectrumSeeds, SpectrumSeeds]

    @classmethod
    def default(cls) -> "SeedLexicon":
        return parse_seed_lexicon(read_data_text("seed_lexicon.txt"))


def parse_seed_lexicon(text: str) -> SeedLexicon:
    """Parse ``#spectrum <name> pole <a|b>`` sections of lowercase words."""
    sections: dict[tuple[str, str], set[str]] = {}
    order: list[str] = []
    current: set[str] | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#spectrum "):
            parts = line.split()
            if len(parts) != 4 or parts[2] != "pole" or parts[3] not in ("a", "b"):
                raise DataError(f"malformed seed lexicon header: {line!r}")
            name, pole = parts[1], parts[3]
            if name not in order:
                order.append(name)
            current = sections.setdefault((name, pole), set())
        elif line.startswith("#"):
            continue
        else:
            if current is None:
                raise DataError("seed lexicon word outside any spectrum section")
            current.add(line.lower())
    if len(order) != 4:
        raise DataError(f"seed lexicon must define 4 spectra, found {len(order)}")
    spectra = tuple(
        SpectrumSeeds(
            name,
            frozenset(sections.get((name, "a"), set())),
            frozenset(sections.get((name, "b"), set())),
        )
        for name in order
    )
    return SeedLexicon(spectra)


class CoocTable:
    """Paragraph-level presence co-occurrence counts."""

    def __init__(
        self,
        vocab: tuple[str, ...],
        context_vocab: tuple[str, ...],
        word_doc_freq: Counter,
        pair_doc_freq: dict[tuple[str, str], int],
        n_paragraphs: int,
    ):
        self.vocab = vocab
        self.context_vocab = context_vocab
        self.word_doc_freq = word_doc_freq
        self.pair_doc_freq = pair_doc_freq
        self.n_paragraphs = n_paragraphs
        self._known = set(vocab) | set(context_vocab)

    def pair_count(self, w1: str, w2: str) -> int:
        if w1 == w2:
            return self.word_doc_freq[w1]
        key = (w1, w2) if w1 < w2 else (w2, w1)
        return self.pair_doc_freq.get(key, 0)


def build_cooc(corpus: Corpus, f_min: int = 5, context_size: int = 2000) -> CoocTable:
    """Count paragraph-level presence (co-)occurrences of word tokens.

    Words are lowercased; punctuation/number tokens are excluded;
    stopwords are excluded from the context vocabulary only.
    """
    word_doc_freq: Counter = Counter()
    paragraph_words: list[set[str]] = []
    for para in corpus.paragraphs():
        present = {
            tok.text.lower()
            for sent in para.sentences
            for tok in sent.tokens
            if tok.kind == WORD
        }
        paragraph_words.append(present)
        word_doc_freq.update(present)
    if not paragraph_words:
        raise EmptyCorpusError("co-occurrence table requires a non-empty corpus")

    vocab = tuple(sorted(w for w, c in word_doc_freq.items() if c >= f_min))
    stop = stopwords()
    by_freq = sorted(
        (w for w in word_doc_freq if w not in stop),
        key=lambda w: (-word_doc_freq[w], w),
    )
    context_vocab = tuple(by_freq[:context_size])

    known = set(vocab) | set(context_vocab)
    pair_doc_freq: dict[tuple[str, str], int] = {}
    for present in paragraph_words:
        qualifying = sorted(present & known)
        for i, a in enumerate(qualifying):
            for b in qualifying[i + 1 :]:
                key = (a, b)
                pair_doc_freq[key] = pair_doc_freq.get(key, 0) + 1
    return CoocTable(vocab, context_vocab, word_doc_freq, pair_doc_freq, len(paragraph_words))


def npmi(cooc: CoocTable, w1: str, w2: str) -> float:
    """Normalized pointwise mutual information in [-1, 1].

    Unseen pairs score 0; perfect association (joint equals both
    marginals) scores 1 by the limit rule.
    """
    for w in (w1, w2):
        if w not in cooc._known:
            raise UnknownWordError(f"word {w!r} is not in the co-occurrence vocabulary")
    n = cooc.n_paragraphs
    pair = cooc.pair_count(w1, w2)
    if pair == 0:
        return 0.0
    f1 = cooc.word_doc_freq[w1]
    f2 = cooc.word_doc_freq[w2]
    if pair == f1 == f2:
        return 1.0
    p1, p2, p12 = f1 / n, f2 / n, pair / n
    return math.log(p12 / (p1 * p2)) / (-math.log(p12))


def raw_style_scores(cooc: CoocTable, seeds: SeedLexicon) -> dict[str, tuple[float, ...]]:
    """Seed-anchored NPMI scores, min-max normalized per spectrum.

    raw_d(w) = mean NPMI against pole-A seeds minus mean against pole-B
    seeds; a degenerate spectrum (constant raw score) normalizes to 0.5.
    """
    known = cooc._known
    per_dim: list[dict[str, float]] = []
    for spectrum in seeds.spectra:
        pole_a = sorted(spectrum.pole_a & known)
        pole_b = sorted(spectrum.pole_b & known)
        if not pole_a or not pole_b:
            raise NoSeedCoverageError(
                f"spectrum {spectrum.name}: no in-vocabulary seeds for one pole"
            )
        raw = {}
        for w in cooc.vocab:
            mean_a = sum(npmi(cooc, w, s) for s in pole_a) / len(pole_a)
            mean_b = sum(npmi(cooc, w, s) for s in pole_b) / len(pole_b)
            raw[w] = mean_a - mean_b
        per_dim.append(raw)

    normalized: dict[str, list[float]] = {w: [] for w in cooc.vocab}
    for raw in per_dim:
        lo = min(raw.values())
        hi = max(raw.values())
        span = hi - lo
        for w in cooc.vocab:
            normalized[w].append(0.5 if span == 0 else (raw[w] - lo) / span)
    return {w: tuple(vals) for w, vals in normalized.items()}


@dataclass
class KnnGraph:
    """Symmetrized k-nearest-neighbour graph over the vocabulary."""

    nodes: tuple[str, ...]
    neighbors: list[np.ndarray]
    weights: list[np.ndarray]

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])


def _npmi_features(cooc: CoocTable) -> np.ndarray:
    """NPMI of every vocab word against the context vocabulary."""
    n = cooc.n_paragraphs
    rows = len(cooc.vocab)
    cols = len(cooc.context_vocab)
    col_index = {c: j for j, c in enumerate(cooc.context_vocab)}
    feats = np.zeros((rows, cols))
    for i, w in enumerate(cooc.vocab):
        f1 = cooc.word_doc_freq[w]
        if w in col_index:
            feats[i, col_index[w]] = 1.0
        for c, j in col_index.items():
            if c == w:
                continue
            pair = cooc.pair_count(w, c)
            if pair == 0:
                continue
            f2 = cooc.word_doc_freq[c]
            if pair == f1 == f2:
                feats[i, j] = 1.0
            else:
                p1, p2, p12 = f1 / n, f2 / n, pair / n
                feats[i, j] = math.log(p12 / (p1 * p2)) / (-math.log(p12))
    return feats


def build_knn_graph(cooc: CoocTable, k: int = 10) -> KnnGraph:
    """Link each word to its k most cosine-similar words.

    Edge weight is the cosine clipped at zero; non-positive edges are
    dropped; the graph is symmetrized by union.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    nodes = cooc.vocab
    if len(nodes) < k + 1:
        raise CorpusTooSmallError(
            f"vocabulary size {len(nodes)} must exceed k={k} for a kNN graph"
        )
    feats = _npmi_features(cooc)
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    unit = feats / safe
    sims = unit @ unit.T

    adjacency: list[dict[int, float]] = [dict() for _ in nodes]
    for i in range(len(nodes)):
        order = sorted(
            (j for j in range(len(nodes)) if j != i),
            key=lambda j: (-sims[i, j], nodes[j]),
        )
        for j in order[:k]:
            w = max(float(sims[i, j]), 0.0)
            if w <= 0.0:
                continue
            adjacency[i][j] = w
            adjacency[j][i] = w

    neighbors = []
    weights = []
    for i in range(len(nodes)):
        idx = np.array(sorted(adjacency[i]), dtype=np.int64)
        neighbors.append(idx)
        weights.append(np.array([adjacency[i][j] for j in idx]))
    return KnnGraph(nodes, neighbors, weights)


@dataclass
class StyleLexicon:
    """Word style scores in [0, 1] per spectrum, with provenance."""

    scores: dict[str, tuple[float, float, float, float]]
    provenance: dict[str, str]
    iterations: tuple[int, int, int, int] = (0, 0, 0, 0)
    residuals: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __contains__(self, word: str) -> bool:
        return word in self.scores


def propagate(
    graph: KnnGraph,
    seeds: SeedLexicon,
    raw: dict[str, tuple[float, ...]],
    tol: float = 1e-6,
    max_iter: int = 200,
) -> StyleLexicon:
    """Clamped harmonic label propagation per spectrum.

    Seeds are pinned to 1 (pole A) / 0 (pole B); other nodes start from
    their normalized raw score and repeatedly take the weighted mean of
    their neighbours. Nodes in components without any seed keep their
    raw score and are flagged as fallbacks.
    """
    nodes = graph.nodes
    index = {w: i for i, w in enumerate(nodes)}
    n = len(nodes)
    scores = np.zeros((n, 4))
    reached_any = np.zeros(n, dtype=bool)
    seed_any = np.zeros(n, dtype=bool)
    iterations = []
    residuals = []

    for d, spectrum in enumerate(seeds.spectra):
        f = np.array([raw[w][d] for w in nodes])
        clamped = np.zeros(n, dtype=bool)
        for w in spectrum.pole_a:
            if w in index:
                f[index[w]] = 1.0
                clamped[index[w]] = True
        for w in spectrum.pole_b:
            if w in index:
                f[index[w]] = 0.0
                clamped[index[w]] = True
        seed_any |= clamped

        # Breadth-first reach from clamped nodes.
        reached = clamped.copy()
        frontier = list(np.nonzero(clamped)[0])
        while frontier:
            nxt = []
            for i in frontier:
                for j in graph.neighbors[i]:
                    if not reached[j]:
                        reached[j] = True
                        nxt.append(int(j))
            frontier = nxt
        reached_any |= reached

        free = np.nonzero(reached & ~clamped)[0]
        it = 0
        residual = 0.0
        for it in range(1, max_iter + 1):
            new_f = f.copy()
            for i in free:
                w_sum = graph.weights[i].sum()
                if w_sum > 0:
                    new_f[i] = float(graph.weights[i] @ f[graph.neighbors[i]] / w_sum)
            residual = float(np.max(np.abs(new_f - f))) if len(free) else 0.0
            f = new_f
            if residual < tol:
                break
        iterations.append(it if len(free) else 0)
        residuals.append(residual)
        scores[:, d] = np.clip(f, 0.0, 1.0)

    provenance = {}
    for i, w in enumerate(nodes):
        if seed_any[i]:
            provenance[w] = SEED_CLAMPED
        elif reached_any[i]:
            provenance[w] = PROPAGATED
        else:
            provenance[w] = RAW_FALLBACK
    return StyleLexicon(
        {w: tuple(float(v) for v in scores[i]) for i, w in enumerate(nodes)},
        provenance,
        tuple(iterations),
        tuple(residuals),
    )


@dataclass(frozen=True)
class LexicalProfile:
    """Corpus-level averages ordered (subjective, concrete, literary, formal)."""

    values: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("lexical profile values must be in [0, 1]")


def lexical_profile(corpus: Corpus, lexicon: StyleLexicon) -> LexicalProfile:
    """Token-frequency-weighted mean of lexicon scores over word tokens.

    Words absent from the lexicon are skipped; zero coverage yields the
    neutral 0.5 vector with a logged warning.
    """
    totals = np.zeros(4)
    covered = 0
    for tok in corpus.tokens():
        if tok.kind != WORD:
            continue
        entry = lexicon.scores.get(tok.text.lower())
        if entry is None:
            continue
        totals += entry
        covered += 1
    if covered == 0:
        logger.warning("lexical profile: no corpus tokens covered by the lexicon")
        return LexicalProfile((0.5, 0.5, 0.5, 0.5))
    return LexicalProfile(tuple(float(v) for v in totals / covered))


def save_lexicon(lexicon: StyleLexicon, path: str) -> None:
    """Persist as ``word s1 s2 s3 s4 provenance`` rows sorted by word."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word in sorted(lexicon.scores):
            s = lexicon.scores[word]
            fh.write(
                f"{word} {s[0]!r} {s[1]!r} {s[2]!r} {s[3]!r} {lexicon.provenance[word]}\n"
            )


def load_lexicon(path: str) -> StyleLexicon:
    scores = {}
    provenance = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FileReadError(f"cannot read lexicon file {path}: {exc}") from exc
    for line in lines:
        parts = line.split()
        if len(parts) != 6:
            raise DataError(f"{path}: malformed lexicon row: {line!r}")
        word = parts[0]
        try:
            values = tuple(float(x) for x in parts[1:5])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric lexicon score for {word!r}") from exc
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise DataError(f"{path}: lexicon scores out of range for {word!r}")
        scores[word] = values
        provenance[word] = parts[5]
    return StyleLexicon(scores, provenance)
