"""Transformer language model with masked-LM pretraining, encoder-decoder
cascading, denoising fine-tuning, and greedy rewriting.

Parameters live in ordered name -> float64 array dicts so the optimizer
and the checkpoint format can treat every model uniformly. The output
projection is tied to the token embedding table.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .bpe import (
    BOS_ID,
    EOS_ID,
    MergeTable,
    PAD_ID,
    TokenIdStream,
    bpe_decode,
    bpe_encode,
    build_streams,
)
from .corpus import Corpus, segment_document
from .errors import (
    CorpusTooSmallError,
    DataError,
    EmptyInputError,
    EmptyTargetsError,
    FileReadError,
    NonFiniteGradientError,
    ShapeError,
)
from .noise import (
    MaskConfig,
    MaskedBatch,
    NoiseConfig,
    corrupt_words,
    derive_stream_rng,
    mask_mlm,
)

logger = logging.getLogger(__name__)

CHECKPOINT_HEADER = "#styleforge-ckpt v1"
NEG_INF = -1e30


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ffn: int = 0  # 0 resolves to 4 * d_model
    dropout: float = 0.1
    stream_len: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_ffn == 0:
            object.__setattr__(self, "d_ffn", 4 * self.d_model)
        for name in ("vocab_size", "n_layers", "d_model", "n_heads", "d_ffn",
                     "stream_len", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def config_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> ModelConfig:
    valid = {f for f in ModelConfig.__dataclass_fields__}
    unknown = set(d) - valid
    if unknown:
        raise DataError(f"unknown model config keys: {sorted(unknown)}")
    try:
        return ModelConfig(**d)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid model config: {exc}") from exc


def param_names(cfg: ModelConfig, cross: bool = False) -> list[str]:
    """Canonical parameter order used by init, Adam, and checkpoints."""
    names = ["tok_emb", "pos_emb"]
    for i in range(cfg.n_layers):
        p = f"layer{i}"
        names += [f"{p}.ln1.gain", f"{p}.ln1.bias"]
        names += [f"{p}.attn.{w}" for w in ("wq", "wk", "wv", "wo")]
        if cross:
            names += [f"{p}.ln_cross.gain", f"{p}.ln_cross.bias"]
            names += [f"{p}.cross.{w}" for w in ("wq", "wk", "wv", "wo")]
        names += [f"{p}.ln2.gain", f"{p}.ln2.bias"]
        names += [f"{p}.ffn.w1", f"{p}.ffn.b1", f"{p}.ffn.w2", f"{p}.ffn.b2"]
    names += ["final_ln.gain", "final_ln.bias"]
    return names


def _param_shape(name: str, cfg: ModelConfig) -> tuple[int, ...]:
    d, f = cfg.d_model, cfg.d_ffn
    base = name.split(".")[-2] if "." in name else name
    leaf = name.split(".")[-1]
    if name == "tok_emb":
        return (cfg.vocab_size, d)
    if name == "pos_emb":
        return (cfg.stream_len, d)
    if base in ("ln1", "ln2", "ln_cross", "final_ln"):
        return (d,)
    if base in ("attn", "cross"):
        return (d, d)
    if leaf == "w1":
        return (d, f)
    if leaf == "b1":
        return (f,)
    if leaf == "w2":
        return (f, d)
    if leaf == "b2":
        return (d,)
    raise ValueError(f"unknown parameter name {name!r}")


def _init_array(name: str, cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    shape = _param_shape(name, cfg)
    leaf = name.split(".")[-1]
    if leaf in ("b1", "b2", "bias"):
        return np.zeros(shape)
    if leaf == "gain":
        return np.ones(shape)
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, shape)


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def as_tensors(self, requires_grad: bool = False) -> dict[str, ad.Tensor]:
        return {k: ad.Tensor(v, requires_grad=requires_grad) for k, v in self.arrays.items()}


@dataclass
class EncDecParams:
    encoder: ModelParams
    decoder: ModelParams  # carries the extra cross-attention arrays

    def __post_init__(self) -> None:
        if self.encoder.config != self.decoder.config:
            raise ValueError("encoder and decoder configs must be identical")

    @property
    def config(self) -> ModelConfig:
        return self.encoder.config

    def copy(self) -> "EncDecParams":
        return EncDecParams(self.encoder.copy(), self.decoder.copy())

    def flat_arrays(self) -> dict[str, np.ndarray]:
        flat = {f"enc.{k}": v for k, v in self.encoder.arrays.items()}
        flat.update({f"dec.{k}": v for k, v in self.decoder.arrays.items()})
        return flat


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    arrays = {name: _init_array(name, cfg, rng) for name in param_names(cfg)}
    return ModelParams(cfg, arrays)


def cascade(pretrained: ModelParams, rng: np.random.Generator) -> EncDecParams:
    """Copy the pretrained LM into both halves; cross-attention is fresh."""
    cfg = pretrained.config
    encoder = pretrained.copy()
    decoder_arrays: dict[str, np.ndarray] = {}
    for name in param_names(cfg, cross=True):
        if name in pretrained.arrays:
            decoder_arrays[name] = pretrained.arrays[name].copy()
        else:
            decoder_arrays[name] = _init_array(name, cfg, rng)
    return EncDecParams(encoder, ModelParams(cfg, decoder_arrays))


def _validate_ids(ids: np.ndarray, cfg: ModelConfig) -> None:
    if ids.ndim != 2:
        raise ShapeError(f"expected a 2D id batch, got shape {ids.shape}")
    if ids.shape[1] > cfg.stream_len:
        raise ShapeError(
            f"sequence length {ids.shape[1]} exceeds stream_len {cfg.stream_len}"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ShapeError("token id out of vocabulary range")


def _as_id_matrix(inputs) -> np.ndarray:
    if isinstance(inputs, TokenIdStream):
        ids = np.array(inputs.ids, dtype=np.int64)[None, :]
    else:
        ids = np.asarray(inputs, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
    return ids


def _attention(
    t: dict[str, ad.Tensor],
    prefix: str,
    x: ad.Tensor,
    memory: ad.Tensor,
    mask: np.ndarray,
    cfg: ModelConfig,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    """Multi-head attention of x (queries) over memory (keys/values).

    mask is an additive array broadcastable to (B, H, Tq, Tk).
    """
    b, tq, d = x.shape
    tk = memory.shape[1]
    h = cfg.n_heads
    dh = d // h

    def split_heads(m: ad.Tensor, t_len: int) -> ad.Tensor:
        return ad.transpose(ad.reshape(m, (b, t_len, h, dh)), (0, 2, 1, 3))

    q = split_heads(x @ t[f"{prefix}.wq"], tq)
    k = split_heads(memory @ t[f"{prefix}.wk"], tk)
    v = split_heads(memory @ t[f"{prefix}.wv"], tk)
    scores = (q @ ad.swap_last(k)) * (1.0 / np.sqrt(dh)) + ad.Tensor(mask)
    weights = ad.softmax(scores)
    if train_mode and cfg.dropout > 0:
        weights = ad.dropout(weights, cfg.dropout, rng)
    ctx = ad.reshape(ad.transpose(weights @ v, (0, 2, 1, 3)), (b, tq, d))
    return ctx @ t[f"{prefix}.wo"]


def _key_mask(ids: np.ndarray) -> np.ndarray:
    """Additive mask shutting PAD keys out: (B, 1, 1, T)."""
    return np.where(ids == PAD_ID, NEG_INF, 0.0)[:, None, None, :]


def _causal_mask(t_len: int) -> np.ndarray:
    return np.triu(np.full((t_len, t_len), NEG_INF), k=1)[None, None, :, :]


def _stack(
    t: dict[str, ad.Tensor],
    ids: np.ndarray,
    cfg: ModelConfig,
    causal: bool,
    memory: ad.Tensor | None,
    memory_mask: np.ndarray | None,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> ad.Tensor:
    """Pre-norm transformer stack shared by encoder and decoder paths."""
    if train_mode and cfg.dropout > 0 and rng is None:
        raise ValueError("train_mode with dropout requires an rng")
    b, t_len = ids.shape
    x = ad.embedding(t["tok_emb"], ids) + ad.embedding(
        t["pos_emb"], np.arange(t_len)
    )
    if train_mode and cfg.dropout > 0:
        x = ad.dropout(x, cfg.dropout, rng)
    self_mask = _key_mask(ids)
    if causal:
        self_mask = self_mask + _causal_mask(t_len)

    def maybe_drop(m: ad.Tensor) -> ad.Tensor:
        if train_mode and cfg.dropout > 0:
            return ad.dropout(m, cfg.dropout, rng)
        return m

    for i in range(cfg.n_layers):
        p = f"layer{i}"
        normed = ad.layer_norm(x, t[f"{p}.ln1.gain"], t[f"{p}.ln1.bias"])
        x = x + maybe_drop(
            _attention(t, f"{p}.attn", normed, normed, self_mask, cfg, train_mode, rng)
        )
        if memory is not None:
            normed = ad.layer_norm(x, t[f"{p}.ln_cross.gain"], t[f"{p}.ln_cross.bias"])
            x = x + maybe_drop(
                _attention(
                    t, f"{p}.cross", normed, memory, memory_mask, cfg, train_mode, rng
                )
            )
        normed = ad.layer_norm(x, t[f"{p}.ln2.gain"], t[f"{p}.ln2.bias"])
        hidden = ad.gelu(normed @ t[f"{p}.ffn.w1"] + t[f"{p}.ffn.b1"])
        x = x + maybe_drop(hidden @ t[f"{p}.ffn.w2"] + t[f"{p}.ffn.b2"])
    return ad.layer_norm(x, t["final_ln.gain"], t["final_ln.bias"])


def _tied_logits(t: dict[str, ad.Tensor], hidden: ad.Tensor) -> ad.Tensor:
    return hidden @ ad.swap_last(t["tok_emb"])


def lm_forward(
    params: ModelParams,
    inputs,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    tensors: dict[str, ad.Tensor] | None = None,
) -> ad.Tensor:
    """Bidirectional transformer logits, shape (batch, positions, vocab)."""
    cfg = params.config
    ids = _as_id_matrix(inputs)
    _validate_ids(ids, cfg)
    t = tensors if tensors is not None else params.as_tensors()
    hidden = _stack(t, ids, cfg, causal=False, memory=None, memory_mask=None,
                    train_mode=train_mode, rng=rng)
    return _tied_logits(t, hidden)


def mlm_loss(logits: ad.Tensor, batch) -> ad.Tensor:
    """Mean cross-entropy over the masked target positions only."""
    batches = [batch] if isinstance(batch, MaskedBatch) else list(batch)
    b, t_len, vocab = logits.shape
    if len(batches) != b:
        raise ShapeError(f"{len(batches)} masked rows for a batch of {b}")
    positions = []
    targets = []
    for row, mb in enumerate(batches):
        positions.extend(row * t_len + p for p in mb.target_positions)
        targets.extend(mb.target_ids)
    if not positions:
        raise EmptyTargetsError("no target positions in batch")
    log_probs = ad.log_softmax(ad.reshape(logits, (b * t_len, vocab)))
    picked = ad.pick(
        ad.embedding(log_probs, np.array(positions)), np.array(targets)
    )
    return -ad.tmean(picked)


def _encode(
    params: EncDecParams,
    src_ids: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
    tensors: dict[str, ad.Tensor] | None = None,
) -> ad.Tensor:
    t = tensors if tensors is not None else params.encoder.as_tensors()
    return _stack(t, src_ids, params.config, causal=False, memory=None,
                  memory_mask=None, train_mode=train_mode, rng=rng)


def _decode(
    params: EncDecParams,
    tgt_ids: np.ndarray,
    memory: ad.Tensor,
    src_ids: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
    tensors: dict[str, ad.Tensor] | None = None,
) -> ad.Tensor:
    t = tensors if tensors is not None else params.decoder.as_tensors()
    hidden = _stack(t, tgt_ids, params.config, causal=True, memory=memory,
                    memory_mask=_key_mask(src_ids), train_mode=train_mode, rng=rng)
    return _tied_logits(t, hidden)


def encdec_forward(
    params: EncDecParams,
    src_ids,
    tgt_prefix_ids,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    enc_tensors: dict[str, ad.Tensor] | None = None,
    dec_tensors: dict[str, ad.Tensor] | None = None,
) -> ad.Tensor:
    """Teacher-forced logits: position t predicts target token t+1."""
    cfg = params.config
    src = _as_id_matrix(src_ids)
    tgt = _as_id_matrix(tgt_prefix_ids)
    _validate_ids(src, cfg)
    _validate_ids(tgt, cfg)
    if src.shape[0] != tgt.shape[0]:
        raise ShapeError("source and target batch sizes differ")
    memory = _encode(params, src, train_mode, rng, enc_tensors)
    return _decode(params, tgt, memory, src, train_mode, rng, dec_tensors)


def _pad_matrix(rows: Sequence[Sequence[int]]) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def dae_loss(
    params: EncDecParams,
    corrupted_src: Sequence[Sequence[int]],
    clean_target: Sequence[Sequence[int]],
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    enc_tensors: dict[str, ad.Tensor] | None = None,
    dec_tensors: dict[str, ad.Tensor] | None = None,
) -> ad.Tensor:
    """Reconstruction cross-entropy: predict the clean sentence (EOS
    terminated) from its corruption, teacher-forced from BOS."""
    if not clean_target or any(len(t) == 0 for t in clean_target):
        raise EmptyTargetsError("clean targets must be non-empty")
    if len(corrupted_src) != len(clean_target):
        raise ShapeError("corrupted/clean batch sizes differ")
    src = _pad_matrix([list(s) + [EOS_ID] for s in corrupted_src])
    dec_in = _pad_matrix([[BOS_ID] + list(t) for t in clean_target])
    dec_tgt = _pad_matrix([list(t) + [EOS_ID] for t in clean_target])
    logits = encdec_forward(
        params, src, dec_in, train_mode, rng, enc_tensors, dec_tensors
    )
    b, t_len, vocab = logits.shape
    flat_tgt = dec_tgt.reshape(-1)
    keep = flat_tgt != PAD_ID
    positions = np.nonzero(keep)[0]
    log_probs = ad.log_softmax(ad.reshape(logits, (b * t_len, vocab)))
    picked = ad.pick(ad.embedding(log_probs, positions), flat_tgt[positions])
    return -ad.tmean(picked)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, arrays: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            {k: np.zeros_like(a) for k, a in arrays.items()},
            {k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(
    state: OptimizerState,
    arrays: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    cfg: ModelConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Bias-corrected Adam update, in place."""
    state.step += 1
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, param in arrays.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return arrays, state


@dataclass(frozen=True)
class StopConfig:
    max_steps: int
    patience: int = 3
    eval_every: int = 100


def _grad_or_zero(t: ad.Tensor) -> np.ndarray:
    return t.grad if t.grad is not None else np.zeros_like(t.data)


def perplexity(
    params: ModelParams, streams: Sequence[TokenIdStream], cfg: ModelConfig
) -> float:
    """exp of the mean MLM loss under fixed per-stream validation masks."""
    if not streams:
        raise EmptyInputError("perplexity requires at least one stream")
    mask_cfg = MaskConfig()
    total = 0.0
    count = 0
    for start in range(0, len(streams), cfg.batch_size):
        chunk = streams[start : start + cfg.batch_size]
        masked = [
            mask_mlm(s, mask_cfg, derive_stream_rng(cfg.seed, start + i), cfg.vocab_size)
            for i, s in enumerate(chunk)
        ]
        ids = _pad_matrix([mb.inputs.ids for mb in masked])
        logits = lm_forward(params, ids)
        loss = mlm_loss(logits, masked)
        n = sum(len(mb.target_ids) for mb in masked)
        total += loss.item() * n
        count += n
    return float(np.exp(total / count))


def pretrain(
    corpus: Corpus,
    table: MergeTable,
    cfg: ModelConfig,
    stop: StopConfig,
    mask_cfg: MaskConfig = MaskConfig(),
) -> tuple[ModelParams, list[dict]]:
    """Masked-LM training with early stopping on validation perplexity."""
    streams = build_streams(corpus, table, cfg.stream_len)
    if len(streams) < 2:
        raise CorpusTooSmallError(
            f"pretraining needs >= 2 streams, corpus yields {len(streams)}"
        )
    n_val = max(1, len(streams) // 20)
    train = streams[: len(streams) - n_val]
    val = streams[len(streams) - n_val :]

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    log: list[dict] = []
    if stop.max_steps == 0:
        return params, log

    opt = OptimizerState.init(params.arrays)
    best = params.copy()
    best_ppl = float("inf")
    stale = 0
    window: list[float] = []
    for step in range(1, stop.max_steps + 1):
        idx = rng.integers(0, len(train), cfg.batch_size)
        masked = [
            mask_mlm(train[i], mask_cfg, rng, cfg.vocab_size) for i in idx
        ]
        ids = _pad_matrix([mb.inputs.ids for mb in masked])
        tensors = params.as_tensors(requires_grad=True)
        logits = lm_forward(params, ids, train_mode=True, rng=rng, tensors=tensors)
        loss = mlm_loss(logits, masked)
        if not np.isfinite(loss.item()):
            raise NonFiniteGradientError(f"non-finite training loss at step {step}")
        loss.backward()
        grads = {k: _grad_or_zero(t) for k, t in tensors.items()}
        adam_step(opt, params.arrays, grads, cfg)
        window.append(loss.item())

        if step % stop.eval_every == 0 or step == stop.max_steps:
            ppl = perplexity(params, val, cfg)
            entry = {
                "step": step,
                "train_loss": float(np.mean(window)),
                "val_loss": float(np.log(ppl)),
                "perplexity": ppl,
            }
            log.append(entry)
            window = []
            if ppl < best_ppl:
                best_ppl = ppl
                best = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= stop.patience:
                    break
    return best, log


def _sentence_groups(sentence, table: MergeTable) -> list[list[int]]:
    """BPE ids per source word, the unit of DAE corruption."""
    return [bpe_encode(table, tok.text) for tok in sentence.tokens]


def _truncate_groups(groups: list[list[int]], limit: int) -> tuple[list[list[int]], bool]:
    """Keep whole words while the flat id count stays within limit."""
    kept: list[list[int]] = []
    total = 0
    for g in groups:
        if total + len(g) > limit:
            if not kept:  # single word longer than the whole budget
                kept.append(g[:limit])
            return kept, True
        kept.append(g)
        total += len(g)
    return kept, False


def finetune(
    encdec: EncDecParams,
    author_corpus: Corpus,
    table: MergeTable,
    cfg: ModelConfig,
    noise: NoiseConfig,
    stop: StopConfig,
) -> tuple[EncDecParams, list[dict]]:
    """Denoising-autoencoder training over author sentences."""
    sentences = list(author_corpus.sentences())
    if len(sentences) < 10:
        raise CorpusTooSmallError(
            f"fine-tuning needs >= 10 sentences, corpus has {len(sentences)}"
        )
    limit = cfg.stream_len - 1  # room for the EOS / BOS affixes
    groups_per_sent = []
    truncated = 0
    for sent in sentences:
        groups, cut = _truncate_groups(_sentence_groups(sent, table), limit)
        truncated += cut
        groups_per_sent.append(groups)
    if truncated:
        logger.warning("fine-tuning truncated %d over-long sentences", truncated)

    n_val = max(1, len(groups_per_sent) // 20)
    train = groups_per_sent[: len(groups_per_sent) - n_val]
    val = groups_per_sent[len(groups_per_sent) - n_val :]

    params = encdec.copy()
    log: list[dict] = []
    if stop.max_steps == 0:
        return params, log

    rng = np.random.default_rng(cfg.seed)
    flat = params.flat_arrays()
    opt = OptimizerState.init(flat)
    best = params.copy()
    best_val = float("inf")
    stale = 0
    window: list[float] = []

    def val_loss() -> float:
        total = 0.0
        count = 0
        for start in range(0, len(val), cfg.batch_size):
            chunk = val[start : start + cfg.batch_size]
            corrupted = [
                corrupt_words(gs, noise, derive_stream_rng(cfg.seed, start + i))
                for i, gs in enumerate(chunk)
            ]
            clean = [[u for g in gs for u in g] for gs in chunk]
            loss = dae_loss(params, corrupted, clean)
            n = sum(len(c) + 1 for c in clean)
            total += loss.item() * n
            count += n
        return total / count

    for step in range(1, stop.max_steps + 1):
        idx = rng.integers(0, len(train), cfg.batch_size)
        chunk = [train[i] for i in idx]
        corrupted = [corrupt_words(gs, noise, rng) for gs in chunk]
        clean = [[u for g in gs for u in g] for gs in chunk]
        enc_t = params.encoder.as_tensors(requires_grad=True)
        dec_t = params.decoder.as_tensors(requires_grad=True)
        loss = dae_loss(
            params, corrupted, clean, train_mode=True, rng=rng,
            enc_tensors=enc_t, dec_tensors=dec_t,
        )
        if not np.isfinite(loss.item()):
            raise NonFiniteGradientError(f"non-finite training loss at step {step}")
        loss.backward()
        grads = {f"enc.{k}": _grad_or_zero(t) for k, t in enc_t.items()}
        grads.update({f"dec.{k}": _grad_or_zero(t) for k, t in dec_t.items()})
        adam_step(opt, params.flat_arrays(), grads, cfg)
        window.append(loss.item())

        if step % stop.eval_every == 0 or step == stop.max_steps:
            vl = val_loss()
            log.append({
                "step": step,
                "train_loss": float(np.mean(window)),
                "val_loss": vl,
                "perplexity": float(np.exp(vl)),
            })
            window = []
            if vl < best_val:
                best_val = vl
                best = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= stop.patience:
                    break
    return best, log


def _greedy_decode(
    params: EncDecParams, src_ids: list[int], max_new: int
) -> list[int]:
    src = np.array([src_ids], dtype=np.int64)
    memory = _encode(params, src, train_mode=False, rng=None)
    dec_tensors = params.decoder.as_tensors()
    prefix = [BOS_ID]
    out: list[int] = []
    while len(out) < max_new:
        tgt = np.array([prefix], dtype=np.int64)
        logits = _decode(
            params, tgt, memory, src, train_mode=False, rng=None, tensors=dec_tensors
        )
        next_id = int(np.argmax(logits.data[0, -1]))
        if next_id == EOS_ID:
            break
        out.append(next_id)
        prefix.append(next_id)
        if len(prefix) >= params.config.stream_len:
            break
    return out


def rewrite(
    encdec: EncDecParams,
    text: str,
    table: MergeTable,
    max_len_factor: int = 2,
    max_len_bias: int = 10,
) -> str:
    """Greedy sentence-by-sentence restyling; paragraph breaks preserved."""
    doc = segment_document(text, source_id="input")
    cfg = encdec.config
    out_paragraphs: list[str] = []
    truncated = 0
    any_tokens = False
    for para in doc.paragraphs:
        out_sentences: list[str] = []
        for sent in para.sentences:
            any_tokens = True
            src_ids = [u for tok in sent.tokens for u in bpe_encode(table, tok.text)]
            if len(src_ids) + 1 > cfg.stream_len:
                src_ids = src_ids[: cfg.stream_len - 1]
                truncated += 1
            max_new = min(
                max_len_factor * len(src_ids) + max_len_bias, cfg.stream_len - 1
            )
            out_ids = _greedy_decode(encdec, src_ids + [EOS_ID], max_new)
            sentence = bpe_decode(out_ids, table)
            if sentence:
                out_sentences.append(sentence)
        if out_sentences:
            out_paragraphs.append(" ".join(out_sentences))
    if not any_tokens:
        raise EmptyInputError("rewrite input has no tokens")
    if truncated:
        logger.warning("rewrite truncated %d over-long sentences", truncated)
    return "\n\n".join(out_paragraphs)


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(arr.astype("<f4").tobytes())


def save_checkpoint(
    path: str, params: ModelParams | EncDecParams, config_hash: str = ""
) -> None:
    """Binary checkpoint: header, JSON config line, named float32 arrays."""
    if isinstance(params, EncDecParams):
        kind = "encdec"
        arrays = params.flat_arrays()
        cfg = params.config
    else:
        kind = "lm"
        arrays = params.arrays
        cfg = params.config
    meta = json.dumps(
        {"kind": kind, "config": config_to_dict(cfg), "config_hash": config_hash},
        sort_keys=True,
    )
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_HEADER + "\n").encode("utf-8"))
        fh.write((meta + "\n").encode("utf-8"))
        for name, arr in arrays.items():
            _write_array(fh, name, arr)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError("truncated checkpoint file")
    return data


def load_checkpoint(path: str) -> ModelParams | EncDecParams:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise FileReadError(f"cannot read checkpoint {path}: {exc}") from exc
    with fh:
        header = fh.readline().decode("utf-8", errors="replace").rstrip("\n")
        if header != CHECKPOINT_HEADER:
            raise DataError(f"{path}: not a checkpoint file (header {header!r})")
        try:
            meta = json.loads(fh.readline().decode("utf-8"))
            kind = meta["kind"]
            cfg = config_from_dict(meta["config"])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed checkpoint metadata") from exc
        arrays: dict[str, np.ndarray] = {}
        while True:
            raw = fh.read(4)
            if not raw:
                break
            if len(raw) != 4:
                raise DataError("truncated checkpoint file")
            name = _read_exact(fh, struct.unpack("<I", raw)[0]).decode("utf-8")
            rank = struct.unpack("<I", _read_exact(fh, 4))[0]
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(rank)
            )
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
            arrays[name] = data.reshape(shape).astype(np.float64)

    if kind == "lm":
        expected = param_names(cfg)
        if list(arrays) != expected:
            raise DataError(f"{path}: checkpoint arrays do not match an LM layout")
        return ModelParams(cfg, arrays)
    if kind == "encdec":
        enc_names = [f"enc.{n}" for n in param_names(cfg)]
        dec_names = [f"dec.{n}" for n in param_names(cfg, cross=True)]
        if list(arrays) != enc_names + dec_names:
            raise DataError(f"{path}: checkpoint arrays do not match an encdec layout")
        enc = ModelParams(cfg, {n.removeprefix("enc."): arrays[n] for n in enc_names})
        dec = ModelParams(cfg, {n.removeprefix("dec."): arrays[n] for n in dec_names})
        return EncDecParams(enc, dec)
    raise DataError(f"{path}: unknown checkpoint kind {kind!r}")
