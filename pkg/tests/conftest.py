"""Shared fixtures and the acceptance-criteria summary banner."""

from __future__ import annotations

import re

import pytest

from styleforge.corpus import Corpus, corpus_from_texts
from styleforge.lexstyle import (
    StyleLexicon,
    build_cooc,
    build_knn_graph,
    propagate,
    raw_style_scores,
    SeedLexicon,
)

# One line per acceptance criterion, printed after the run.
_CRITERIA = {
    1: "metric oracles: identities + randomized brute-force agreement",
    2: "noise statistics: Monte Carlo at default probabilities",
    3: "gradient check: reverse mode vs central finite differences",
    4: "cascade fidelity: bit-identical weights, bitwise causality",
    5: "overfit sanity: MLM loss drop + DAE reconstruction accuracy",
    6: "style direction: synthetic authors A/B rewrite experiment",
    7: "label propagation: path fixture, clamping, pure-pole profile",
    8: "BPE: first-merge oracle + 1000-word round-trip",
    9: "determinism: byte-identical merges, checkpoints, reports",
    10: "aggregate: mean/std layout and arithmetic regression",
}

_RANK = {"passed": 0, "skipped": 1, "failed": 2, "error": 2}
_VERDICT = ("PASS", "SKIP", "FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    worst: dict[int, int] = {}
    for status, rank in _RANK.items():
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", nodeid)
            if m is None:
                continue
            n = int(m.group(1))
            worst[n] = max(worst.get(n, 0), rank)
    if not worst:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(worst):
        verdict = _VERDICT[worst[n]]
        terminalreporter.write_line(
            f"criterion {n:2d} [{verdict}] {_CRITERIA.get(n, '')}"
        )


# A corpus whose vocabulary covers at least one in-vocabulary seed per
# pole of every spectrum in the bundled seed lexicon, so the full
# lexicon pipeline can run on it with small f_min / k settings.
_POLE_A = ("lovely", "stone", "thee", "obtain")
_POLE_B = ("measure", "freedom", "yeah", "get")
_FILLERS = ("garden", "window", "evening", "letter", "music", "harbor")


def make_style_texts(n_paragraphs: int = 24) -> list[str]:
    texts = []
    for i in range(n_paragraphs):
        a = _POLE_A[i % 4]
        b = _POLE_B[(i + 1) % 4]
        c = _POLE_A[(i + 2) % 4]
        d = _POLE_B[(i + 3) % 4]
        f1 = _FILLERS[i % 6]
        f2 = _FILLERS[(i + 2) % 6]
        texts.append(
            f"The {f1} is {a} and the {f2} stays near. "
            f"We {b} the {f1} while {c} words linger. "
            f"People {d} a {f2} there."
        )
    return texts


@pytest.fixture(scope="session")
def style_texts() -> list[str]:
    return make_style_texts()


@pytest.fixture(scope="session")
def style_corpus(style_texts) -> Corpus:
    return corpus_from_texts(style_texts)


@pytest.fixture(scope="session")
def style_lexicon(style_corpus) -> StyleLexicon:
    seeds = SeedLexicon.default()
    cooc = build_cooc(style_corpus, f_min=2, context_size=50)
    raw = raw_style_scores(cooc, seeds)
    graph = build_knn_graph(cooc, k=3)
    return propagate(graph, seeds, raw)
