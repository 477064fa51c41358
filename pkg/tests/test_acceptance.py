"""Acceptance suite: one test per shipped guarantee, each with pinned
tolerances and a runtime budget where the guarantee carries one.

The terminal summary hook in conftest.py prints one PASS/FAIL line per
criterion from these test names.
"""

from __future__ import annotations

import json
import math
import statistics
import time

import numpy as np
import pytest

import oracles
from styleforge import cli
from styleforge.bpe import (
    BLANK_ID,
    BOS_ID,
    EOS_ID,
    MASK_ID,
    TokenIdStream,
    bpe_decode,
    bpe_encode,
    build_streams,
    learn_bpe,
)
from styleforge.corpus import corpus_from_texts
from styleforge.lexstyle import (
    SPECTRUM_NAMES,
    KnnGraph,
    SeedLexicon,
    SpectrumSeeds,
    lexical_profile,
    propagate,
)
from styleforge.metrics import ROUGE_VARIANTS, bleu, jsd, mse, rouge
from styleforge.model import (
    ModelConfig,
    StopConfig,
    _grad_or_zero,
    cascade,
    dae_loss,
    encdec_forward,
    finetune,
    init_params,
    lm_forward,
    mlm_loss,
    perplexity,
    pretrain,
    rewrite,
)
from styleforge.noise import MaskConfig, NoiseConfig, corrupt_words, mask_mlm
from styleforge.synstyle import surface_profile, syntactic_profile
from styleforge.version import __version__

SURFACE_CAPS = (5.0, 1.0, 1.0, 20.0, 60.0)


def random_pairs(seed: int, n_pairs: int = 20):
    rng = np.random.default_rng(seed)
    vocab = ["a", "b", "c", "d", "e", "f", "g", "h"]
    pairs = []
    for _ in range(n_pairs):
        cand = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(4, 16))]
        ref = [vocab[i] for i in rng.integers(0, len(vocab), rng.integers(4, 16))]
        pairs.append((cand, ref))
    return pairs


def test_criterion_01_metric_oracles():
    """Exact identities plus 1e-9 agreement with brute-force scorers."""
    started = time.monotonic()

    tokens = ["i", "came", "and", "saw", "it"]
    assert bleu([tokens], [tokens]) == 100.0
    for variant in ROUGE_VARIANTS:
        assert rouge(tokens, tokens, variant) == 1.0
    assert jsd((0.25, 0.75), (0.25, 0.75)) == 0.0
    assert jsd((1.0, 0.0), (0.0, 1.0)) == 1.0

    pairs = random_pairs(seed=42)
    cands = [c for c, _ in pairs]
    refs = [r for _, r in pairs]
    assert bleu(cands, refs) == pytest.approx(
        oracles.bleu_oracle(cands, refs), abs=1e-9
    )
    for cand, ref in pairs:
        assert bleu([cand], [ref]) == pytest.approx(
            oracles.bleu_oracle([cand], [ref]), abs=1e-9
        )
        for variant in ROUGE_VARIANTS:
            assert rouge(cand, ref, variant) == pytest.approx(
                oracles.rouge_oracle(cand, ref, variant), abs=1e-9
            )

    assert time.monotonic() - started < 10.0


def test_criterion_02_noise_statistics():
    """Monte Carlo rates at the default masking and corruption settings."""
    started = time.monotonic()
    n = 100_000

    ids = tuple(6 + (i % 40) for i in range(n))  # all positions eligible
    batch = mask_mlm(TokenIdStream(ids), MaskConfig(), np.random.default_rng(0), 50)
    selected = len(batch.target_positions)
    assert abs(selected / n - 0.15) <= 0.01

    n_mask = n_random = n_unchanged = 0
    for pos, orig in zip(batch.target_positions, batch.target_ids):
        now = batch.inputs.ids[pos]
        if now == MASK_ID:
            n_mask += 1
        elif now == orig:
            n_unchanged += 1
        else:
            n_random += 1
    assert abs(n_mask / selected - 0.80) <= 0.02
    assert abs(n_random / selected - 0.10) <= 0.02
    assert abs(n_unchanged / selected - 0.10) <= 0.02

    words = [[6 + (i % 40)] for i in range(n)]
    out = corrupt_words(words, NoiseConfig(0.1, 0.1), np.random.default_rng(1))
    survivors = len(out)
    blanks = out.count(BLANK_ID)
    assert abs((n - survivors) / n - 0.10) <= 0.01
    assert abs(blanks / survivors - 0.10) <= 0.01

    assert time.monotonic() - started < 10.0


def _fd_check(value_fn, arrays, grads, rng, n_coords=200, h=1e-4, tol=1e-3):
    names = sorted(arrays)
    worst = 0.0
    for _ in range(n_coords):
        name = names[int(rng.integers(len(names)))]
        arr = arrays[name]
        i = int(rng.integers(arr.size))
        orig = arr.flat[i]
        arr.flat[i] = orig + h
        up = value_fn()
        arr.flat[i] = orig - h
        down = value_fn()
        arr.flat[i] = orig
        fd = (up - down) / (2.0 * h)
        g = grads[name].flat[i]
        rel = abs(fd - g) / max(abs(fd), abs(g), 1e-6)
        worst = max(worst, rel)
        assert rel < tol, f"{name}[{i}]: fd {fd} vs grad {g} (rel {rel})"
    return worst


def test_criterion_03_gradient_check():
    """Reverse-mode MLM and DAE gradients match central differences."""
    started = time.monotonic()
    cfg = ModelConfig(
        vocab_size=26, n_layers=1, d_model=8, n_heads=2, d_ffn=16,
        dropout=0.0, stream_len=8, seed=0,
    )
    params = init_params(cfg, np.random.default_rng(0))
    assert sum(a.size for a in params.arrays.values()) <= 5000

    batch = mask_mlm(
        TokenIdStream(tuple(range(6, 14))), MaskConfig(),
        np.random.default_rng(1), cfg.vocab_size,
    )
    tensors = params.as_tensors(requires_grad=True)
    mlm_loss(lm_forward(params, batch.inputs, tensors=tensors), batch).backward()
    mlm_grads = {k: _grad_or_zero(t) for k, t in tensors.items()}
    assert max(np.abs(g).max() for g in mlm_grads.values()) > 0
    _fd_check(
        lambda: mlm_loss(lm_forward(params, batch.inputs), batch).item(),
        params.arrays, mlm_grads, np.random.default_rng(2),
    )

    encdec = cascade(params, np.random.default_rng(3))
    assert sum(a.size for a in encdec.flat_arrays().values()) <= 5000
    src = [[6, 7, 8, 9], [10, 11]]
    tgt = [[12, 13, 14], [15, 16]]
    enc_t = encdec.encoder.as_tensors(requires_grad=True)
    dec_t = encdec.decoder.as_tensors(requires_grad=True)
    dae_loss(encdec, src, tgt, enc_tensors=enc_t, dec_tensors=dec_t).backward()
    dae_grads = {f"enc.{k}": _grad_or_zero(t) for k, t in enc_t.items()}
    dae_grads.update({f"dec.{k}": _grad_or_zero(t) for k, t in dec_t.items()})
    _fd_check(
        lambda: dae_loss(encdec, src, tgt).item(),
        encdec.flat_arrays(), dae_grads, np.random.default_rng(4),
    )

    assert time.monotonic() - started < 120.0


def test_criterion_04_cascade_fidelity():
    """Inherited weights are bit-identical; decoder causality is bitwise."""
    cfg = ModelConfig(
        vocab_size=40, n_layers=2, d_model=16, n_heads=2, d_ffn=32,
        dropout=0.0, stream_len=12, seed=0,
    )
    pretrained = init_params(cfg, np.random.default_rng(0))
    frozen = {k: v.tobytes() for k, v in pretrained.arrays.items()}
    pair = cascade(pretrained, np.random.default_rng(1))

    for name, raw in frozen.items():
        assert pair.encoder.arrays[name].tobytes() == raw
        assert pair.decoder.arrays[name].tobytes() == raw
    extras = set(pair.decoder.arrays) - set(frozen)
    assert extras == {
        f"layer{i}.{leaf}"
        for i in range(2)
        for leaf in ("ln_cross.gain", "ln_cross.bias",
                     "cross.wq", "cross.wk", "cross.wv", "cross.wo")
    }

    src = [6, 7, 8, EOS_ID]
    base_tgt = [BOS_ID, 10, 11, 12, 13]
    base = encdec_forward(pair, src, base_tgt).data
    for j in range(1, len(base_tgt)):
        changed = list(base_tgt)
        changed[j] = 14
        moved = encdec_forward(pair, src, changed).data
        assert moved[0, :j].tobytes() == base[0, :j].tobytes()


def test_criterion_05_overfit_sanity():
    """50-sentence corpus: >=30% MLM loss drop in 200 steps, >=90% DAE
    reconstruction accuracy within 2000 steps, at a fixed seed."""
    started = time.monotonic()
    nouns = ["cat", "dog", "bird", "fox", "hare",
             "mouse", "wolf", "deer", "owl", "frog"]
    verbs = ["sleeps", "runs", "sings", "waits", "hides"]
    sentences = [
        f"the {n} {v} near the {nouns[(i + 3) % 10]}."
        for i, (n, v) in enumerate((n, v) for n in nouns for v in verbs)
    ]
    assert len(sentences) == 50
    corpus = corpus_from_texts(sentences)
    table = learn_bpe(corpus, n_merges=120)
    cfg = ModelConfig(
        vocab_size=table.vocab_size, n_layers=1, d_model=32, n_heads=2,
        d_ffn=64, dropout=0.0, stream_len=16, learning_rate=3e-3,
        batch_size=8, seed=0,
    )
    streams = build_streams(corpus, table, cfg.stream_len)

    untrained, _ = pretrain(corpus, table, cfg, StopConfig(max_steps=0))
    loss_before = math.log(perplexity(untrained, streams, cfg))
    trained, _ = pretrain(
        corpus, table, cfg, StopConfig(max_steps=200, patience=99, eval_every=20)
    )
    loss_after = math.log(perplexity(trained, streams, cfg))
    assert (loss_before - loss_after) / loss_before >= 0.30

    tuned, _ = finetune(
        cascade(trained, np.random.default_rng(1)), corpus, table, cfg,
        NoiseConfig(0.1, 0.1), StopConfig(max_steps=1500, patience=99, eval_every=100),
    )
    correct = total = 0
    for sentence in corpus.sentences():
        ids = [u for t in sentence.tokens for u in bpe_encode(table, t.text)]
        logits = encdec_forward(tuned, ids + [EOS_ID], [BOS_ID] + ids).data
        predicted = logits[0].argmax(axis=-1)
        target = np.array(ids + [EOS_ID])
        correct += int((predicted == target).sum())
        total += len(target)
    assert correct / total >= 0.90

    assert time.monotonic() - started < 900.0


def test_criterion_06_style_direction():
    """Synthetic authors: each fine-tuned model pulls rewrites strictly
    toward its own author's syntactic and surface profile; the jointly
    fine-tuned model aligns to author A worse than model-A does."""
    started = time.monotonic()
    nouns = ["cat", "dog", "bird", "fox", "hare", "wolf", "deer", "owl"]
    verbs = ["sleeps", "runs", "sings", "waits", "hides", "drifts", "turns", "rests"]

    author_a = [f"the {nouns[i % 8]} {verbs[(i * 3 + 1) % 8]}." for i in range(60)]
    author_b = [
        f"although the {nouns[i % 8]} {verbs[i % 8]}, "
        f"the {nouns[(i + 2) % 8]} {verbs[(i + 3) % 8]}; "
        f"the {nouns[(i + 4) % 8]} {verbs[(i + 5) % 8]}, "
        f"and the {nouns[(i + 6) % 8]} {verbs[(i + 7) % 8]}."
        for i in range(60)
    ]
    neutral = [
        f"the {nouns[i % 8]} {verbs[(i + 1) % 8]} "
        f"and the {nouns[(i + 3) % 8]} {verbs[(i + 4) % 8]}."
        for i in range(100)
    ]

    def profiles(texts):
        c = corpus_from_texts(texts)
        return (
            syntactic_profile(c).probabilities,
            surface_profile(c, SURFACE_CAPS).normalized,
        )

    syn_a, surf_a = profiles(author_a)
    syn_b, surf_b = profiles(author_b)
    # the two authors sit at opposite ends of the sentence-type simplex
    assert syn_a == (1.0, 0.0, 0.0, 0.0, 0.0)
    assert syn_b == (0.0, 0.0, 0.0, 1.0, 0.0)
    assert sum(t.count(";") for t in author_a) == 0
    assert sum(t.count(";") for t in author_b) == 60

    both = corpus_from_texts(author_a + author_b)
    table = learn_bpe(both, n_merges=150)
    cfg = ModelConfig(
        vocab_size=table.vocab_size, n_layers=1, d_model=32, n_heads=2,
        d_ffn=64, dropout=0.0, stream_len=48, learning_rate=3e-3,
        batch_size=8, seed=0,
    )
    base, _ = pretrain(
        both, table, cfg, StopConfig(max_steps=200, patience=99, eval_every=50)
    )

    noise = NoiseConfig(0.3, 0.2)
    stop = StopConfig(max_steps=800, patience=99, eval_every=100)

    def tune(texts):
        encdec = cascade(base, np.random.default_rng(1))
        tuned, _ = finetune(encdec, corpus_from_texts(texts), table, cfg, noise, stop)
        return tuned

    def alignments(model):
        outputs = [rewrite(model, text, table) for text in neutral]
        syn_g, surf_g = profiles(outputs)
        return (
            jsd(syn_g, syn_a), jsd(syn_g, syn_b),
            mse(surf_g, surf_a), mse(surf_g, surf_b),
        )

    a_to_a, a_to_b, a_surf_a, a_surf_b = alignments(tune(author_a))
    b_to_a, b_to_b, b_surf_a, b_surf_b = alignments(tune(author_b))
    j_to_a, _, j_surf_a, _ = alignments(tune(author_a + author_b))

    assert a_to_a < a_to_b
    assert a_surf_a < a_surf_b
    assert b_to_b < b_to_a
    assert b_surf_b < b_surf_a
    assert j_to_a > a_to_a
    assert j_surf_a > a_surf_a

    assert time.monotonic() - started < 2700.0


def test_criterion_07_label_propagation(style_lexicon):
    """Path-graph convergence, seed clamping, score range, and a pure
    pole-A corpus profiling to exactly 1.0."""
    fill_a = frozenset(f"zzfilla{i}" for i in range(9))
    fill_b = frozenset(f"zzfillb{i}" for i in range(9))
    seeds = SeedLexicon(tuple(
        SpectrumSeeds(name, frozenset(["left"]) | fill_a, frozenset(["right"]) | fill_b)
        for name in SPECTRUM_NAMES
    ))
    graph = KnnGraph(
        ("left", "mid", "right"),
        [np.array([1]), np.array([0, 2]), np.array([1])],
        [np.array([1.0]), np.array([1.0, 1.0]), np.array([1.0])],
    )
    raw = {w: (0.25,) * 4 for w in graph.nodes}
    lex = propagate(graph, seeds, raw, tol=1e-6, max_iter=200)

    assert lex.scores["left"] == (1.0,) * 4
    assert lex.scores["right"] == (0.0,) * 4
    for d in range(4):
        assert abs(lex.scores["mid"][d] - 0.5) <= 1e-6

    for lexicon in (lex, style_lexicon):
        for values in lexicon.scores.values():
            assert all(0.0 <= v <= 1.0 for v in values)

    assert style_lexicon.scores["lovely"][0] == 1.0
    profile = lexical_profile(
        corpus_from_texts(["lovely lovely lovely."]), style_lexicon
    )
    assert profile.values[0] == 1.0


def test_criterion_08_bpe_first_merge_and_round_trip():
    """Toy frequencies merge ("e","s") first; 1000 corpus words survive
    an encode/decode round trip."""
    freqs = {"low": 5, "lower": 2, "newest": 6, "widest": 3}
    words = [w for w, f in freqs.items() for _ in range(f)]
    corpus = corpus_from_texts([" ".join(words) + "."])
    table = learn_bpe(corpus, n_merges=8)

    assert table.merges[0] == ("e", "s")
    assert table.merges[0] == oracles.first_merge_oracle(freqs)

    rng = np.random.default_rng(0)
    vocab = sorted(freqs)
    for _ in range(1000):
        word = vocab[int(rng.integers(len(vocab)))]
        assert bpe_decode(bpe_encode(table, word), table) == word


C9_CFG = """\
bpe.n_merges = 40
model.n_layers = 1
model.d_model = 16
model.n_heads = 2
model.stream_len = 24
model.batch_size = 2
model.dropout = 0.0
stop.max_steps = 4
stop.patience = 99
stop.eval_every = 2
lexstyle.f_min = 2
lexstyle.context_size = 50
lexstyle.k = 3
"""

C9_DOC_1 = (
    "the lovely garden rests by the stone gate. "
    "we measure the path with freedom today. "
    "thee obtain a quiet lantern there.\n"
    "\n"
    "yeah we get the evening light now. "
    "the cat sat on the mat. "
    "a dog ran over the hill.\n"
)

C9_DOC_2 = (
    "birds sing in the old garden. "
    "the sun sets over calm water. "
    "rain falls on the tin roof.\n"
    "\n"
    "a child reads near the warm fire. "
    "wind moves through the tall trees. "
    "stars shine above the dark field.\n"
)

C9_EVAL = (
    "the garden stays lovely in the evening light. "
    "a letter waits on the stone table. "
    "thee obtain music over the quiet harbor tonight. "
    "people measure the old window with freedom. "
    "yeah the evening wind moves every open page. "
    "we get a lantern near the garden gate.\n"
)


def test_criterion_09_determinism(tmp_path):
    """The same seed produces byte-identical merges files, checkpoints,
    rewrites, and evaluation reports across two full pipeline runs."""
    artifacts = (
        "merges.txt", "lm.ckpt", "lm.ckpt.log.jsonl", "encdec.ckpt",
        "encdec.ckpt.log.jsonl", "rewritten.txt", "report.json",
    )

    def run_pipeline(root):
        docs = root / "docs"
        docs.mkdir()
        (docs / "a.txt").write_text(C9_DOC_1, encoding="utf-8")
        (docs / "b.txt").write_text(C9_DOC_2, encoding="utf-8")
        (root / "pipeline.cfg").write_text(C9_CFG, encoding="utf-8")
        (root / "eval.txt").write_text(C9_EVAL, encoding="utf-8")
        # relative paths keep the report's corpus identifiers equal
        # between the two run directories
        with pytest.MonkeyPatch.context() as mp:
            mp.chdir(root)
            common = ["--config", "pipeline.cfg"]
            assert cli.main(
                ["learn-bpe", "docs", *common, "--out", "merges.txt"]
            ) == 0
            assert cli.main(
                ["pretrain", "docs", *common,
                 "--merges", "merges.txt", "--out", "lm.ckpt"]
            ) == 0
            assert cli.main(
                ["finetune", "docs", *common, "--checkpoint", "lm.ckpt",
                 "--merges", "merges.txt", "--out", "encdec.ckpt"]
            ) == 0
            assert cli.main(
                ["rewrite", "eval.txt", *common, "--checkpoint", "encdec.ckpt",
                 "--merges", "merges.txt", "--out", "rewritten.txt"]
            ) == 0
            assert cli.main(
                ["evaluate", "eval.txt", "eval.txt", "eval.txt", *common,
                 "--out", "report.json"]
            ) == 0

    first = tmp_path / "first"
    second = tmp_path / "second"
    first.mkdir()
    second.mkdir()
    run_pipeline(first)
    run_pipeline(second)
    for name in artifacts:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


TABLE_ROW = {
    "content.bleu": (43.4, 1.7),
    "content.rouge1": (0.73, 0.13),
    "content.rouge2": (0.53, 0.06),
    "content.rouge3": (0.41, 0.08),
    "content.rougeL": (0.68, 0.07),
    "alignment.lexical_mse": (0.29, 0.04),
    "alignment.syntactic_jsd": (0.19, 0.01),
    "alignment.surface_mse": (0.31, 0.04),
}

# symmetric z-scores with sample mean 0 and sample std exactly 1, so the
# fixture set aggregates back to the published mean and std
Z_SCORES = (-1.5, -1.0, -1.0, -0.5, 0.0, 0.0, 0.5, 1.0, 1.0, 1.5)


def test_criterion_10_aggregate_regression(tmp_path):
    """Aggregating fixture reports spread around published row values
    reproduces the mean/std layout and arithmetic to 1e-9."""
    assert statistics.fmean(Z_SCORES) == 0.0
    assert statistics.stdev(Z_SCORES) == 1.0

    paths = []
    for i, z in enumerate(Z_SCORES):
        report = {"content": {}, "alignment": {}}
        for metric, (mu, sigma) in TABLE_ROW.items():
            section, key = metric.split(".")
            report[section][key] = mu + z * sigma
        path = tmp_path / f"report{i}.json"
        path.write_text(json.dumps(report), encoding="utf-8")
        paths.append(str(path))

    as_json = tmp_path / "agg.json"
    assert cli.main(["aggregate", *paths, "--json", "--out", str(as_json)]) == 0
    stats = json.loads(as_json.read_text())["metrics"]
    for metric, (mu, sigma) in TABLE_ROW.items():
        assert abs(stats[metric]["mean"] - mu) <= 1e-9
        assert abs(stats[metric]["std"] - sigma) <= 1e-9

    as_text = tmp_path / "agg.txt"
    assert cli.main(["aggregate", *paths, "--out", str(as_text)]) == 0
    resolved, _ = cli.resolve_config({}, None)
    expected = [f"{'metric':<26}{'mean':>10} ± std"]
    for metric in cli.AGGREGATE_METRICS:
        mu, sigma = TABLE_ROW[metric]
        expected.append(f"{metric:<26}{mu:>10.4f} ± {sigma:.4f}")
    expected.append(
        f"# n=10 config_hash={cli.config_hash(resolved)} version={__version__}"
    )
    assert as_text.read_text(encoding="utf-8") == "\n".join(expected) + "\n"
