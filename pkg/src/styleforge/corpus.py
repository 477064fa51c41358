"""Corpus ingestion: documents, paragraphs, sentences, tokens.

All segmentation is rule-based and dependency-free so that every
downstream count (BPE tables, style profiles, report metrics) is
bit-reproducible across platforms. The rules are frozen:

* paragraphs are maximal runs of non-blank lines,
* sentences end at ``.``, ``!`` or ``?`` followed by whitespace or
  end-of-text, with a closed abbreviation list and name initials as
  exceptions,
* tokens split on whitespace and on a fixed punctuation set, keeping
  intra-word apostrophes/hyphens and digit-internal ``.``/``,``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import EncodingError, FileReadError

# Token kinds.
WORD = "word"
PUNCTUATION = "punctuation"
NUMBER = "number"
OTHER = "other"

# Characters split into standalone punctuation tokens.
PUNCT_CHARS = frozenset('.,;:!?"\'()[]—')

# Closed abbreviation list for sentence splitting. "No" (as in "No. 5")
# must keep its capital to avoid eating boundaries after the word "no".
_ABBREVIATIONS = frozenset(
    ["mr", "mrs", "ms", "dr", "st", "prof", "sr", "jr", "vs", "etc", "e.g", "i.e"]
)

_CLOSING_PUNCT = frozenset(".,;:!?)]")
_OPENING_PUNCT = frozenset("([")


@dataclass(frozen=True)
class Token:
    """A surface text unit: non-empty, whitespace-free."""

    text: str
    kind: str

    def __post_init__(self) -> None:
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError(f"invalid token text: {self.text!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    @property
    def text(self) -> str:
        return detokenize(t.text for t in self.tokens)


@dataclass(frozen=True)
class Paragraph:
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class Document:
    source_id: str
    paragraphs: tuple[Paragraph, ...]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def sentences(self) -> Iterator[Sentence]:
        for doc in self.documents:
            for para in doc.paragraphs:
                yield from para.sentences

    def paragraphs(self) -> Iterator[Paragraph]:
        for doc in self.documents:
            yield from doc.paragraphs

    def tokens(self) -> Iterator[Token]:
        for sent in self.sentences():
            yield from sent.tokens


def split_paragraphs(text: str) -> list[str]:
    """Split raw text into paragraph strings.

    Paragraphs are maximal runs of lines separated by one or more blank
    lines; internal newlines collapse to single spaces and surrounding
    whitespace is trimmed. Empty results are dropped.
    """
    paragraphs = []
    current: list[str] = []
    for line in text.split("\n"):
        if line.strip():
            current.append(line.strip())
        elif current:
            paragraphs.append(" ".join(current))
            current = []
    if current:
        paragraphs.append(" ".join(current))
    return paragraphs


def _is_abbreviation(word: str) -> bool:
    if word == "No":
        return True
    return word.lower() in _ABBREVIATIONS


def split_sentences(paragraph: str) -> list[str]:
    """Split a paragraph into sentence strings, terminators attached.

    A ``.`` does not end a sentence when it closes a listed abbreviation
    or a single-capital initial; an initial that itself opens the
    sentence (no word before it) still ends it.
    """
    text = paragraph
    sentences = []
    start = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch not in ".!?" or (i + 1 < n and not text[i + 1].isspace()):
            continue
        if ch == ".":
            j = i
            while j > start and not text[j - 1].isspace():
                j -= 1
            word = text[j:i].lstrip("\"'([—")
            if _is_abbreviation(word):
                continue
            if len(word) == 1 and word.isalpha() and word.isupper():
                if text[start:j].strip():
                    continue
        sent = text[start : i + 1].strip()
        if sent:
            sentences.append(sent)
        start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _token_kind(text: str) -> str:
    if len(text) == 1 and text in PUNCT_CHARS:
        return PUNCTUATION
    if text[0].isalpha() and text[-1].isalpha() and all(
        c.isalpha() or c in "'-" for c in text
    ):
        return WORD
    if text[0].isdigit() and text[-1].isdigit() and all(
        c.isdigit() or c in ".," for c in text
    ):
        return NUMBER
    return OTHER


def _split_chunk(chunk: str) -> Iterator[str]:
    buf: list[str] = []
    for k, c in enumerate(chunk):
        if c in PUNCT_CHARS:
            prev_c = chunk[k - 1] if k > 0 else ""
            next_c = chunk[k + 1] if k + 1 < len(chunk) else ""
            if c == "'" and prev_c.isalnum() and next_c.isalnum():
                buf.append(c)
                continue
            if c in ".," and prev_c.isdigit() and next_c.isdigit():
                buf.append(c)
                continue
            if buf:
                yield "".join(buf)
                buf = []
            yield c
        else:
            buf.append(c)
    if buf:
        yield "".join(buf)


def tokenize(sentence: str) -> list[Token]:
    """Tokenize one sentence; case is preserved."""
    tokens = []
    for chunk in sentence.split():
        for piece in _split_chunk(chunk):
            tokens.append(Token(piece, _token_kind(piece)))
    return tokens


def detokenize(texts: Iterable[str]) -> str:
    """Join token texts back into display text with normal spacing.

    Closing punctuation attaches left, opening punctuation attaches
    right, double quotes alternate open/close, and em dashes glue both
    sides. Idempotent: re-tokenizing the output and detokenizing again
    reproduces the same string.
    """
    pieces: list[str] = []
    glue_next = True
    quote_open = False
    for t in texts:
        if t == '"':
            if quote_open:
                pieces.append(t)
            else:
                pieces.append(t if glue_next else " " + t)
            glue_next = not quote_open
            quote_open = not quote_open
            continue
        if t in _CLOSING_PUNCT or t == "'":
            pieces.append(t)
            glue_next = False
            continue
        if t == "—":
            pieces.append(t)
            glue_next = True
            continue
        pieces.append(t if glue_next else " " + t)
        glue_next = t in _OPENING_PUNCT
    return "".join(pieces)


def segment_document(text: str, source_id: str) -> Document:
    paragraphs = []
    for para_text in split_paragraphs(text):
        sentences = tuple(
            Sentence(tuple(tokenize(s))) for s in split_sentences(para_text)
        )
        paragraphs.append(Paragraph(sentences))
    return Document(source_id, tuple(paragraphs))


def corpus_from_texts(texts: Sequence[str], source_ids: Sequence[str] | None = None) -> Corpus:
    if source_ids is None:
        source_ids = [f"text:{i}" for i in range(len(texts))]
    return Corpus(
        tuple(segment_document(t, sid) for t, sid in zip(texts, source_ids))
    )


def _expand_paths(paths: Iterable[str | os.PathLike]) -> list[str]:
    files = []
    for p in paths:
        p = os.fspath(p)
        if os.path.isdir(p):
            for root, _dirs, names in os.walk(p):
                files.extend(os.path.join(root, name) for name in names)
        else:
            files.append(p)
    return sorted(files)


def load_corpus(paths: Iterable[str | os.PathLike]) -> Corpus:
    """Load one document per file, in lexicographic path order.

    Directories are walked recursively. Files must decode as UTF-8.
    """
    documents = []
    for path in _expand_paths(paths):
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise FileReadError(f"cannot read corpus file {path}: {exc}") from exc
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"corpus file {path} is not valid UTF-8: {exc}") from exc
        documents.append(segment_document(text, path))
    return Corpus(tuple(documents))
