"""styleforge: author-style rewriting and stylometric evaluation workbench."""

from .corpus import Corpus, Document, Paragraph, Sentence, Token, load_corpus
from .version import __version__
from .estimators import (
    BpeTokenizer,
    LexiconBuilder,
    MaskedLanguageModel,
    StyleProfiler,
    StyleRewriter,
)

__all__ = [
    "__version__",
    "Corpus",
    "Document",
    "Paragraph",
    "Sentence",
    "Token",
    "load_corpus",
    "BpeTokenizer",
    "LexiconBuilder",
    "MaskedLanguageModel",
    "StyleProfiler",
    "StyleRewriter",
]
