"""Estimator facade over the functional core, following the fit /
transform / predict conventions so the pieces compose in pipelines.

Hyperparameters are plain constructor arguments; fitted state lives in
trailing-underscore attributes; fit returns self.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bpe import EOS_ID, bpe_decode, build_streams, encode_sentence, learn_bpe
from .corpus import Corpus, corpus_from_texts
from .lexstyle import (
    SeedLexicon,
    StyleLexicon,
    build_cooc,
    build_knn_graph,
    lexical_profile,
    propagate,
    raw_style_scores,
)
from .metrics import StyleProfile, style_profile
from .model import (
    ModelConfig,
    StopConfig,
    cascade,
    finetune,
    perplexity,
    pretrain,
    rewrite,
)
from .noise import NoiseConfig
from .synstyle import DEFAULT_CAPS, surface_profile, syntactic_profile


def as_corpus(X) -> Corpus:
    """Accept a Corpus, one raw text, or an iterable of raw texts."""
    if isinstance(X, Corpus):
        return X
    if isinstance(X, str):
        return corpus_from_texts([X])
    return corpus_from_texts(list(X))


class BpeTokenizer(BaseEstimator, TransformerMixin):
    """Learns a byte-pair merge table; transforms texts to id sequences."""

    def __init__(self, n_merges: int = 2000):
        self.n_merges = n_merges

    def fit(self, X, y=None):
        self.merge_table_ = learn_bpe(as_corpus(X), self.n_merges)
        self.vocab_size_ = self.merge_table_.vocab_size
        return self

    def transform(self, X) -> list[list[int]]:
        """One flat id list per text, EOS-terminated per sentence."""
        check_is_fitted(self, "merge_table_")
        out = []
        for doc in as_corpus(X).documents:
            ids: list[int] = []
            for para in doc.paragraphs:
                for sent in para.sentences:
                    ids.extend(
                        encode_sentence(self.merge_table_, [t.text for t in sent.tokens])
                    )
                    ids.append(EOS_ID)
            out.append(ids)
        return out

    def inverse_transform(self, X: list[list[int]]) -> list[str]:
        check_is_fitted(self, "merge_table_")
        texts = []
        for ids in X:
            sentences = []
            current: list[int] = []
            for i in ids:
                if i == EOS_ID:
                    if current:
                        sentences.append(bpe_decode(current, self.merge_table_))
                    current = []
                else:
                    current.append(i)
            if current:
                sentences.append(bpe_decode(current, self.merge_table_))
            texts.append(" ".join(sentences))
        return texts


class LexiconBuilder(BaseEstimator, TransformerMixin):
    """Induces a word style lexicon by seed-anchored label propagation."""

    def __init__(
        self,
        f_min: int = 5,
        context_size: int = 2000,
        k: int = 10,
        tol: float = 1e-6,
        max_iter: int = 200,
        seeds: SeedLexicon | None = None,
    ):
        self.f_min = f_min
        self.context_size = context_size
        self.k = k
        self.tol = tol
        self.max_iter = max_iter
        self.seeds = seeds

    def fit(self, X, y=None):
        corpus = as_corpus(X)
        seeds = self.seeds if self.seeds is not None else SeedLexicon.default()
        cooc = build_cooc(corpus, self.f_min, self.context_size)
        raw = raw_style_scores(cooc, seeds)
        graph = build_knn_graph(cooc, self.k)
        self.lexicon_ = propagate(graph, seeds, raw, self.tol, self.max_iter)
        return self

    def transform(self, X) -> np.ndarray:
        """Per-text lexical profile rows, shape (n_texts, 4)."""
        check_is_fitted(self, "lexicon_")
        rows = [
            lexical_profile(corpus_from_texts([text]), self.lexicon_).values
            for text in ([X] if isinstance(X, str) else X)
        ]
        return np.array(rows)


class StyleProfiler(BaseEstimator, TransformerMixin):
    """Extracts the full 14-component stylometric profile of texts."""

    def __init__(
        self,
        lexicon: StyleLexicon | None = None,
        caps: tuple[float, float, float, float, float] = DEFAULT_CAPS,
        f_min: int = 5,
        context_size: int = 2000,
        k: int = 10,
    ):
        self.lexicon = lexicon
        self.caps = caps
        self.f_min = f_min
        self.context_size = context_size
        self.k = k

    def fit(self, X, y=None):
        if self.lexicon is not None:
            self.lexicon_ = self.lexicon
        else:
            builder = LexiconBuilder(
                f_min=self.f_min, context_size=self.context_size, k=self.k
            )
            self.lexicon_ = builder.fit(as_corpus(X)).lexicon_
        return self

    def profile(self, X) -> StyleProfile:
        check_is_fitted(self, "lexicon_")
        return style_profile(as_corpus(X), self.lexicon_, self.caps)

    def transform(self, X) -> np.ndarray:
        """Rows of lexical(4) + syntactic(5) + surface(5) per text."""
        check_is_fitted(self, "lexicon_")
        rows = []
        for text in [X] if isinstance(X, str) else X:
            corpus = corpus_from_texts([text])
            rows.append(
                list(lexical_profile(corpus, self.lexicon_).values)
                + list(syntactic_profile(corpus).probabilities)
                + list(surface_profile(corpus, self.caps).normalized)
            )
        return np.array(rows)


class MaskedLanguageModel(BaseEstimator):
    """BPE + masked-LM pretraining wrapped as one estimator."""

    def __init__(
        self,
        n_merges: int = 2000,
        n_layers: int = 2,
        d_model: int = 64,
        n_heads: int = 4,
        dropout: float = 0.1,
        stream_len: int = 64,
        learning_rate: float = 1e-3,
        batch_size: int = 8,
        max_steps: int = 500,
        patience: int = 3,
        eval_every: int = 100,
        seed: int = 0,
    ):
        self.n_merges = n_merges
        self.n_layers = n_layers
        self.d_model = d_model
        self.n_heads = n_heads
        self.dropout = dropout
        self.stream_len = stream_len
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.patience = patience
        self.eval_every = eval_every
        self.seed = seed

    def _model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            n_layers=self.n_layers,
            d_model=self.d_model,
            n_heads=self.n_heads,
            dropout=self.dropout,
            stream_len=self.stream_len,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        corpus = as_corpus(X)
        self.merge_table_ = learn_bpe(corpus, self.n_merges)
        self.config_ = self._model_config(self.merge_table_.vocab_size)
        stop = StopConfig(self.max_steps, self.patience, self.eval_every)
        self.params_, self.log_ = pretrain(corpus, self.merge_table_, self.config_, stop)
        return self

    def perplexity(self, X) -> float:
        check_is_fitted(self, "params_")
        streams = build_streams(as_corpus(X), self.merge_table_, self.config_.stream_len)
        return perplexity(self.params_, streams, self.config_)

    def score(self, X, y=None) -> float:
        """Higher is better: negative log-perplexity."""
        return -float(np.log(self.perplexity(X)))


class StyleRewriter(BaseEstimator):
    """Author-style rewriter: cascades a pretrained masked LM into an
    encoder-decoder and fine-tunes it on the author's sentences."""

    def __init__(
        self,
        base: MaskedLanguageModel | None = None,
        p_drop: float = 0.1,
        p_blank: float = 0.1,
        finetune_steps: int = 500,
        patience: int = 3,
        eval_every: int = 100,
        seed: int = 0,
    ):
        self.base = base
        self.p_drop = p_drop
        self.p_blank = p_blank
        self.finetune_steps = finetune_steps
        self.patience = patience
        self.eval_every = eval_every
        self.seed = seed

    def fit(self, X, y=None):
        corpus = as_corpus(X)
        base = self.base
        if base is None:
            base = MaskedLanguageModel(seed=self.seed).fit(corpus)
        else:
            check_is_fitted(base, "params_")
        self.merge_table_ = base.merge_table_
        self.config_ = base.config_
        # Seed offset keeps the cross-attention init decoupled from the
        # pretraining draw sequence.
        encdec = cascade(base.params_, np.random.default_rng(self.config_.seed ^ 1))
        stop = StopConfig(self.finetune_steps, self.patience, self.eval_every)
        self.encdec_, self.log_ = finetune(
            encdec,
            corpus,
            self.merge_table_,
            self.config_,
            NoiseConfig(self.p_drop, self.p_blank),
            stop,
        )
        return self

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "encdec_")
        texts = [X] if isinstance(X, str) else list(X)
        return [rewrite(self.encdec_, text, self.merge_table_) for text in texts]
