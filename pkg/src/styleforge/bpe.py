"""Byte Pair Encoding: merge learning, subword encoding, id streams.

Merges are learned greedily over a lowercased word-type frequency table
with an explicit end-of-word marker; ties break on lexicographic pair
order and learning stops early once no pair occurs at least twice. The
learned table round-trips through a plain-text merges file from which
the vocabulary is rebuilt deterministically.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import Corpus, detokenize
from .errors import DataError, EmptyCorpusError, FileReadError, UnknownIdError

END_OF_WORD = "</w>"

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
MASK_ID = 3
BLANK_ID = 4
UNK_ID = 5

SPECIALS = {
    "[PAD]": PAD_ID,
    "[BOS]": BOS_ID,
    "[EOS]": EOS_ID,
    "[MASK]": MASK_ID,
    "[BLANK]": BLANK_ID,
    "[UNK]": UNK_ID,
}
FIRST_LEARNED_ID = len(SPECIALS)

_FILE_HEADER = "#styleforge-bpe v1"


class MergeTable:
    """Ordered BPE merges plus the deterministic vocabulary they imply.

    Ids are assigned as: specials 0-5, then alphabet symbols in sorted
    order, then merge products in learning order.
    """

    def __init__(self, merges: list[tuple[str, str]], alphabet: list[str]):
        self.merges = tuple(merges)
        self.alphabet = tuple(sorted(set(alphabet)))
        self.vocab: dict[str, int] = dict(SPECIALS)
        for sym in self.alphabet:
            if sym not in self.vocab:
                self.vocab[sym] = len(self.vocab)
        for left, right in self.merges:
            product = left + right
            if product not in self.vocab:
                self.vocab[product] = len(self.vocab)
        self._ranks = {}
        for i, pair in enumerate(self.merges):
            self._ranks.setdefault(pair, i)
        self._symbols_by_id = {i: s for s, i in self.vocab.items()}
        self._encode_cache: dict[str, tuple[int, ...]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def symbol(self, token_id: int) -> str:
        try:
            return self._symbols_by_id[token_id]
        except KeyError:
            raise UnknownIdError(f"id {token_id} is not in the vocabulary") from None


def _word_frequencies(corpus: Corpus) -> Counter:
    freq: Counter = Counter()
    for token in corpus.tokens():
        freq[token.text.lower()] += 1
    return freq


def learn_bpe(corpus: Corpus, n_merges: int) -> MergeTable:
    """Learn up to ``n_merges`` merges by greedy pair frequency.

    Stops early when the best remaining pair occurs fewer than twice.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    freq = _word_frequencies(corpus)
    if not any(tok.kind == "word" for tok in corpus.tokens()):
        raise EmptyCorpusError("corpus contains no word tokens to learn BPE from")

    # Word types in sorted order so learning is independent of document order.
    words = [list(w) + [END_OF_WORD] for w in sorted(freq)]
    counts = [freq[w] for w in sorted(freq)]
    alphabet = sorted({sym for word in words for sym in word})

    pair_counts: Counter = Counter()
    pair_words: dict[tuple[str, str], set[int]] = {}
    for wi, word in enumerate(words):
        for pair in zip(word, word[1:]):
            pair_counts[pair] += counts[wi]
            pair_words.setdefault(pair, set()).add(wi)

    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        if not pair_counts:
            break
        best, best_count = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if best_count < 2:
            break
        merges.append(best)
        merged_sym = best[0] + best[1]
        for wi in sorted(pair_words.get(best, ())):
            word = words[wi]
            for pair in zip(word, word[1:]):
                pair_counts[pair] -= counts[wi]
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                pair_words[pair].discard(wi)
            new_word = []
            k = 0
            while k < len(word):
                if k + 1 < len(word) and (word[k], word[k + 1]) == best:
                    new_word.append(merged_sym)
                    k += 2
                else:
                    new_word.append(word[k])
                    k += 1
            words[wi] = new_word
            for pair in zip(new_word, new_word[1:]):
                pair_counts[pair] += counts[wi]
                pair_words.setdefault(pair, set()).add(wi)

    return MergeTable(merges, alphabet)


def bpe_encode(table: MergeTable, word: str) -> list[int]:
    """Encode one word (lowercased) into vocabulary ids.

    Residual symbols outside the vocabulary map to the unknown id.
    """
    word = word.lower()
    cached = table._encode_cache.get(word)
    if cached is not None:
        return list(cached)
    symbols = list(word) + [END_OF_WORD]
    ranks = table._ranks
    while len(symbols) > 1:
        pairs = list(zip(symbols, symbols[1:]))
        ranked = [(ranks[p], p) for p in pairs if p in ranks]
        if not ranked:
            break
        _, best = min(ranked)
        merged = []
        k = 0
        while k < len(symbols):
            if k + 1 < len(symbols) and (symbols[k], symbols[k + 1]) == best:
                merged.append(best[0] + best[1])
                k += 2
            else:
                merged.append(symbols[k])
                k += 1
        symbols = merged
    ids = tuple(table.vocab.get(sym, UNK_ID) for sym in symbols)
    table._encode_cache[word] = ids
    return list(ids)


def bpe_decode(ids: list[int], table: MergeTable) -> str:
    """Decode ids into text: words split at the end-of-word marker,
    specials dropped except the blank marker which renders as ``_``."""
    tokens: list[str] = []
    buf = ""
    for token_id in ids:
        sym = table.symbol(token_id)
        if token_id < FIRST_LEARNED_ID:
            if token_id == BLANK_ID:
                if buf:
                    tokens.append(buf)
                    buf = ""
                tokens.append("_")
            continue
        buf += sym
        if buf.endswith(END_OF_WORD):
            tokens.append(buf[: -len(END_OF_WORD)])
            buf = ""
    if buf:
        tokens.append(buf)
    return detokenize(t for t in tokens if t)


@dataclass(frozen=True)
class TokenIdStream:
    """Fixed-length id window; padding only as a suffix run."""

    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


def encode_sentence(table: MergeTable, tokens: list[str]) -> list[int]:
    ids: list[int] = []
    for text in tokens:
        ids.extend(bpe_encode(table, text))
    return ids


def build_streams(corpus: Corpus, table: MergeTable, stream_len: int) -> list[TokenIdStream]:
    """Chunk per-document id sequences into fixed-length streams.

    Sentences within a document are joined with a single EOS id; streams
    never span document boundaries; the final partial window is padded.
    """
    if stream_len < 8:
        raise ValueError("stream_len must be >= 8")
    streams = []
    for doc in corpus.documents:
        ids: list[int] = []
        for para in doc.paragraphs:
            for sent in para.sentences:
                if ids:
                    ids.append(EOS_ID)
                ids.extend(encode_sentence(table, [t.text for t in sent.tokens]))
        for k in range(0, len(ids), stream_len):
            window = ids[k : k + stream_len]
            window.extend([PAD_ID] * (stream_len - len(window)))
            streams.append(TokenIdStream(tuple(window)))
    return streams


def save_merges(table: MergeTable, path: str, provenance: dict[str, str] | None = None) -> None:
    lines = [_FILE_HEADER]
    for key in sorted(provenance or {}):
        lines.append(f"#provenance {key}={provenance[key]}")
    for sym in table.alphabet:
        lines.append(f"#alphabet {sym}")
    lines.append("#merges")
    for left, right in table.merges:
        lines.append(f"{left} {right}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_merges(path: str) -> MergeTable:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FileReadError(f"cannot read merges file {path}: {exc}") from exc
    if not lines or lines[0] != _FILE_HEADER:
        raise DataError(f"{path}: missing merges file header {_FILE_HEADER!r}")
    alphabet: list[str] = []
    merges: list[tuple[str, str]] = []
    in_merges = False
    for line in lines[1:]:
        if not in_merges:
            if line == "#merges":
                in_merges = True
            elif line.startswith("#alphabet "):
                alphabet.append(line[len("#alphabet ") :])
            elif line.startswith("#"):
                continue
            else:
                raise DataError(f"{path}: unexpected line before #merges: {line!r}")
        else:
            parts = line.split(" ")
            if len(parts) != 2:
                raise DataError(f"{path}: malformed merge line: {line!r}")
            merges.append((parts[0], parts[1]))
    if not in_merges:
        raise DataError(f"{path}: missing #merges section")
    return MergeTable(merges, alphabet)
