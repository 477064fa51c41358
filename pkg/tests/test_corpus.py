"""Segmentation rules: paragraphs, sentences, tokens, detokenization."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from styleforge.corpus import (
    NUMBER,
    OTHER,
    PUNCTUATION,
    Token,
    WORD,
    corpus_from_texts,
    detokenize,
    load_corpus,
    segment_document,
    split_paragraphs,
    split_sentences,
    tokenize,
)
from styleforge.errors import EncodingError, FileReadError


class TestSplitParagraphs:
    def test_definition_case(self):
        assert split_paragraphs("a\n\nb") == ["a", "b"]

    def test_internal_newlines_collapse(self):
        assert split_paragraphs("a\nb\n\n\nc") == ["a b", "c"]

    def test_blank_only(self):
        assert split_paragraphs("\n\n") == []

    def test_whitespace_trimmed(self):
        assert split_paragraphs("  a  \n\n  b c  ") == ["a", "b c"]

    @given(
        st.lists(
            st.text(
                alphabet="abcdef .",
                min_size=1,
                max_size=30,
            ).filter(lambda s: s == s.strip() and s and "  " not in s),
            min_size=1,
            max_size=6,
        )
    )
    def test_join_then_split_is_identity(self, paragraphs):
        assert split_paragraphs("\n\n".join(paragraphs)) == paragraphs


class TestSplitSentences:
    def test_definition_case(self):
        assert split_sentences("I came. I saw.") == ["I came.", "I saw."]

    def test_question_and_exclamation(self):
        assert split_sentences("Why? Because.") == ["Why?", "Because."]
        assert split_sentences("Go! Now.") == ["Go!", "Now."]

    def test_abbreviation_not_a_boundary(self):
        assert split_sentences("Mr. Smith left.") == ["Mr. Smith left."]

    @pytest.mark.parametrize(
        "abbr", ["Mr", "Mrs", "Ms", "Dr", "St", "Prof", "Sr", "Jr", "vs", "etc", "No"]
    )
    def test_closed_abbreviation_list(self, abbr):
        text = f"We saw {abbr}. Smith at noon."
        assert split_sentences(text) == [text]

    def test_dotted_abbreviations(self):
        assert split_sentences("See e.g. the appendix.") == ["See e.g. the appendix."]
        assert split_sentences("It works, i.e. it runs.") == ["It works, i.e. it runs."]

    def test_lowercase_no_is_a_boundary(self):
        assert split_sentences("She said no. He left.") == ["She said no.", "He left."]

    def test_initial_after_a_word_is_not_a_boundary(self):
        text = "Work by J. Smith continued."
        assert split_sentences(text) == [text]

    def test_leading_single_capital_still_ends(self):
        # A bare "A." opening a paragraph is a sentence of its own;
        # the initial exception only protects name initials mid-text.
        assert split_sentences("A. B.") == ["A.", "B."]

    def test_terminator_must_precede_whitespace_or_end(self):
        assert split_sentences("Version 1.5 shipped.") == ["Version 1.5 shipped."]

    def test_trailing_unterminated_text_kept(self):
        assert split_sentences("Done. And more") == ["Done.", "And more"]


class TestTokenize:
    def test_rule_trace(self):
        tokens = tokenize("I came, and I saw.")
        assert [t.text for t in tokens] == ["I", "came", ",", "and", "I", "saw", "."]

    def test_apostrophe_stays_internal(self):
        assert [t.text for t in tokenize("don't")] == ["don't"]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphenated_word_is_one_token(self):
        (tok,) = tokenize("well-known")
        assert tok.text == "well-known"
        assert tok.kind == WORD

    def test_quotes_and_brackets_split(self):
        tokens = tokenize('He said "yes" (loudly).')
        assert [t.text for t in tokens] == [
            "He", "said", '"', "yes", '"', "(", "loudly", ")", ".",
        ]

    @pytest.mark.parametrize(
        "text,kind",
        [
            ("cat", WORD),
            ("don't", WORD),
            ("well-known", WORD),
            ("12", NUMBER),
            ("12.5", NUMBER),
            ("3,000", NUMBER),
            (",", PUNCTUATION),
            ("(", PUNCTUATION),
            ("—", PUNCTUATION),
            ("x9", OTHER),
            ("$5", OTHER),
        ],
    )
    def test_token_kinds(self, text, kind):
        (tok,) = tokenize(text)
        assert tok.kind == kind

    def test_number_keeps_internal_separators(self):
        assert [t.text for t in tokenize("We got 3,000.")] == ["We", "got", "3,000", "."]

    def test_tokens_nonempty_and_whitespace_free(self):
        with pytest.raises(ValueError):
            Token("", WORD)
        with pytest.raises(ValueError):
            Token("a b", WORD)

    @given(
        st.lists(
            st.sampled_from(
                ["cat", "dog", "runs", "well-known", "don't", "A", "etc",
                 "12.5", "yes", "no"]
            ),
            min_size=1,
            max_size=12,
        ),
        st.lists(st.sampled_from([".", "!", "?", ","]), min_size=1, max_size=4),
    )
    def test_token_count_conservation(self, words, puncts):
        # Tokenizing every split sentence yields exactly the tokens of
        # tokenizing the whole paragraph, however boundaries fall.
        paragraph = " ".join(
            w + (puncts[i % len(puncts)] if i % 3 == 2 else "")
            for i, w in enumerate(words)
        )
        whole = [t.text for t in tokenize(paragraph)]
        parts = [
            t.text for s in split_sentences(paragraph) for t in tokenize(s)
        ]
        assert parts == whole


class TestDetokenize:
    def test_round_trip(self):
        text = "I came, and I saw."
        assert detokenize(t.text for t in tokenize(text)) == text

    def test_quotes_alternate(self):
        text = 'He said "yes" now.'
        assert detokenize(t.text for t in tokenize(text)) == text

    def test_brackets_attach_inward(self):
        text = "He left (quietly)."
        assert detokenize(t.text for t in tokenize(text)) == text

    def test_idempotent(self):
        tokens = ["I", "came", ",", "and", "left", "."]
        once = detokenize(tokens)
        again = detokenize(t.text for t in tokenize(once))
        assert once == again


class TestSegmentation:
    def test_document_structure(self):
        doc = segment_document("A. B.\n\nC.", source_id="x")
        assert doc.source_id == "x"
        assert len(doc.paragraphs) == 2
        first, second = doc.paragraphs
        assert [s.text for s in first.sentences] == ["A.", "B."]
        assert [s.text for s in second.sentences] == ["C."]

    def test_determinism(self):
        a = segment_document("Mr. Smith left. He ran.", "s")
        b = segment_document("Mr. Smith left. He ran.", "s")
        assert a == b

    def test_corpus_from_texts_default_ids(self):
        corpus = corpus_from_texts(["a.", "b."])
        assert [d.source_id for d in corpus.documents] == ["text:0", "text:1"]

    def test_corpus_iterators(self):
        corpus = corpus_from_texts(["A b c. D e.\n\nF g."])
        assert len(list(corpus.sentences())) == 3
        assert len(list(corpus.paragraphs())) == 2
        assert sum(1 for _ in corpus.tokens()) == 10


class TestLoadCorpus:
    def test_file_example(self, tmp_path):
        path = tmp_path / "doc.txt"
        path.write_text("A. B.\n\nC.", encoding="utf-8")
        corpus = load_corpus([path])
        (doc,) = corpus.documents
        assert len(doc.paragraphs) == 2
        assert [s.text for s in doc.paragraphs[0].sentences] == ["A.", "B."]
        assert [s.text for s in doc.paragraphs[1].sentences] == ["C."]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("", encoding="utf-8")
        (doc,) = load_corpus([path]).documents
        assert doc.paragraphs == ()

    def test_documents_ordered_by_path(self, tmp_path):
        (tmp_path / "b.txt").write_text("b.", encoding="utf-8")
        (tmp_path / "a.txt").write_text("a.", encoding="utf-8")
        corpus = load_corpus([tmp_path])
        names = [d.source_id for d in corpus.documents]
        assert names == sorted(names)
        assert names[0].endswith("a.txt")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileReadError):
            load_corpus([tmp_path / "absent.txt"])

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_bytes(b"\xff\xfe\xfa bad bytes")
        with pytest.raises(EncodingError) as excinfo:
            load_corpus([path])
        assert "bad.txt" in str(excinfo.value)
