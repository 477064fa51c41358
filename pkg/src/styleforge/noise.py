"""Self-supervision corruptions: MLM masking and drop/blank noising.

Both operations are pure given an explicit numpy Generator; callers that
parallelize across streams derive independent per-stream generators via
``derive_stream_rng`` (seed = global_seed XOR stream_index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bpe import BLANK_ID, FIRST_LEARNED_ID, MASK_ID, TokenIdStream
from .errors import AllPadError, DataError


@dataclass(frozen=True)
class MaskConfig:
    p_mask: float = 0.15
    p_to_mask_token: float = 0.8
    p_to_random: float = 0.1
    p_unchanged: float = 0.1

    def __post_init__(self) -> None:
        for name in ("p_mask", "p_to_mask_token", "p_to_random", "p_unchanged"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        total = self.p_to_mask_token + self.p_to_random + self.p_unchanged
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"substitution probabilities must sum to 1, got {total}")


@dataclass(frozen=True)
class NoiseConfig:
    p_drop: float = 0.1
    p_blank: float = 0.1

    def __post_init__(self) -> None:
        for name in ("p_drop", "p_blank"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class MaskedBatch:
    """Masked inputs plus the original ids at the target positions."""

    inputs: TokenIdStream
    target_positions: tuple[int, ...]
    target_ids: tuple[int, ...]


def derive_stream_rng(global_seed: int, stream_index: int) -> np.random.Generator:
    """Independent per-stream generator: seed = global_seed XOR index."""
    return np.random.default_rng(global_seed ^ stream_index)


def mask_mlm(
    stream: TokenIdStream,
    cfg: MaskConfig,
    rng: np.random.Generator,
    vocab_size: int,
) -> MaskedBatch:
    """Apply BERT-style masking to all eligible (non-special) positions.

    Each eligible position is selected independently with p_mask; a
    selected position becomes the mask token, a random non-special id,
    or stays unchanged per the substitution split. If nothing gets
    selected, the lowest-index eligible position is force-selected so a
    loss is always defined.
    """
    ids = list(stream.ids)
    eligible = [i for i, t in enumerate(ids) if t >= FIRST_LEARNED_ID]
    if not eligible:
        raise AllPadError("stream has no maskable positions")

    selected = [i for i in eligible if rng.random() < cfg.p_mask]
    if not selected:
        selected = [eligible[0]]

    positions = []
    originals = []
    for pos in selected:
        positions.append(pos)
        originals.append(ids[pos])
        u = rng.random()
        if u < cfg.p_to_mask_token:
            ids[pos] = MASK_ID
        elif u < cfg.p_to_mask_token + cfg.p_to_random:
            ids[pos] = int(rng.integers(FIRST_LEARNED_ID, vocab_size))
        # else unchanged
    return MaskedBatch(TokenIdStream(tuple(ids)), tuple(positions), tuple(originals))


def corrupt_words(
    word_ids: list[list[int]],
    cfg: NoiseConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Drop/blank corruption at whole-word granularity.

    One left-to-right pass: a word is dropped with p_drop, otherwise
    blanked (all its subword ids replaced by one blank id) with p_blank,
    otherwise kept. An empty result falls back to a single blank.
    """
    out: list[int] = []
    for group in word_ids:
        if rng.random() < cfg.p_drop:
            continue
        if rng.random() < cfg.p_blank:
            out.append(BLANK_ID)
        else:
            out.extend(group)
    if not out:
        out.append(BLANK_ID)
    return out


def corrupt_dae(
    tokens: list[int],
    cfg: NoiseConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Drop/blank corruption where every id is its own decision unit."""
    if not tokens:
        raise DataError("corrupt_dae requires a non-empty token sequence")
    if any(t < FIRST_LEARNED_ID for t in tokens):
        raise DataError("corrupt_dae input must not contain special ids")
    return corrupt_words([[t] for t in tokens], cfg, rng)
