"""Access to the word lists bundled under styleforge/data."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


def read_data_text(name: str) -> str:
    return (resources.files("styleforge") / "data" / name).read_text("utf-8")


@lru_cache(maxsize=None)
def data_words(name: str) -> frozenset[str]:
    """Non-comment, non-empty lines of a bundled word-list file."""
    words = []
    for line in read_data_text(name).splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line)
    return frozenset(words)


def stopwords() -> frozenset[str]:
    return data_words("stopwords.txt")


def coordinators() -> frozenset[str]:
    return data_words("coordinators.txt")


def subordinators() -> frozenset[str]:
    return data_words("subordinators.txt")
