"""End-to-end acceptance checks, one marker per criterion.

Run ``pytest tests/test_acceptance.py`` to get a pass/fail line per criterion
in the terminal summary.
"""
import math
import random
import time

import numpy as np
import pytest

from geodecode import amsim
from geodecode.decoder import EmptyBeamError, decode
from geodecode.evalkit import relative_reduction
from geodecode.geoam_toy import ALL_GROUPS, ToyBatch, ToyGeoAm, ToyTask, adapt_dialect, gradient_check
from geodecode.graph import assemble_first_pass, difference_grammar
from geodecode.ngram import NGramModel, train
from geodecode.pipeline import Benchmark, best_words, cer_report
from geodecode.rescore import InterpolationConfig, NGramRescorer, rescore_nbest, second_pass_probs
from geodecode.wfst import compose_lazy, linear_fst
from oracles import NaiveArpa, paths
from test_decoder import exhaustive, random_emissions
from test_wfst import random_acyclic
from toysetup import make_toy

INF = math.inf
LEVELS = ("none", "slight", "medium", "serious")


@pytest.fixture(scope="module")
def toy():
    return make_toy(seed=0)


@pytest.fixture(scope="module")
def bench():
    t = time.time()
    b = Benchmark()
    b.build_seconds = time.time() - t
    return b


@pytest.fixture(scope="module")
def bench_runs(bench):
    """First-pass decodes of 2,000 test utterances at lambda 0.5 and 1."""
    utts = bench.sample(2000)
    t = time.time()
    runs = {lam: bench.decode(utts, lam=lam) for lam in (0.5, 1.0)}
    return utts, runs, time.time() - t


# 1

@pytest.mark.criterion(1)
def test_difference_lm_matches_static_interpolation(toy, record_property):
    t = time.time()
    lazy_graph = assemble_first_pass(toy.L, toy.G_bi, toy.difference(0.5), static=toy.LG)
    static_graph = toy.static_full(0.5)
    worst, compared = 0.0, 0
    for i, seq in enumerate(toy.random_sentences(100, seed=21)):
        em = amsim.synthesize_emissions(toy.corpus.pronounce(seq), toy.confusion, 1 + i % 10, "medium", seed=i)
        a = decode(lazy_graph, em, beam=INF, unit_beam=INF, nbest=5)
        b = decode(static_graph, em, beam=INF, unit_beam=INF, nbest=5)
        assert [h.labels for h in a] == [h.labels for h in b]
        for x, y in zip(a, b):
            worst = max(worst, abs(x.total - y.total))
            compared += 1
    elapsed = time.time() - t
    record_property("detail", f"max |diff| {worst:.2e} over {compared} hyps, {elapsed:.1f}s")
    assert worst <= 1e-8
    assert elapsed < 60


# 2

@pytest.mark.criterion(2)
def test_lambda_one_is_baseline_only(toy, record_property):
    with_geo = assemble_first_pass(toy.L, toy.G_bi, toy.difference(1.0), static=toy.LG)
    without = assemble_first_pass(toy.L, toy.G_bi,
                                  difference_grammar(toy.base, None, toy.bigram, toy.words, 1.0), static=toy.LG)
    for i, seq in enumerate(toy.random_sentences(30, seed=22)):
        em = amsim.synthesize_emissions(toy.corpus.pronounce(seq), toy.confusion, 2, "serious", seed=i)
        a = decode(with_geo, em, beam=INF, unit_beam=INF, nbest=5)
        b = decode(without, em, beam=INF, unit_beam=INF, nbest=5)
        assert [(h.labels, h.total, h.word_lm_costs) for h in a] == \
            [(h.labels, h.total, h.word_lm_costs) for h in b]
    record_property("detail", "lambda=1 n-best identical to no Geo-LM on 30 utterances")


@pytest.mark.criterion(2)
def test_alpha_one_is_base_only(toy, record_property):
    chars_model = train(toy.corpus.char_sentences(), 5)
    geo = train(toy.corpus.char_sentences(["Jiangsu"]), 5)
    cfg = InterpolationConfig(alpha=1.0, beta=0.0)
    for seq in toy.random_sentences(30, seed=23):
        chars = list("".join(seq))
        got = second_pass_probs(chars, chars_model, geo, NGramRescorer(geo), cfg)
        want = [10 ** chars_model.logprob(c, ["<s>"] + chars[:i]) for i, c in enumerate(chars + ["</s>"])]
        assert got == want
    record_property("detail", "alpha=1, beta=0 gives P_b exactly")


@pytest.mark.criterion(2)
def test_gamma_one_keeps_ranking(toy, record_property):
    g = assemble_first_pass(toy.L, toy.G_bi, toy.difference(0.5), static=toy.LG)
    base = train(toy.corpus.char_sentences(), 5)
    geo = train(toy.corpus.char_sentences(["Jiangsu"]), 5)
    cfg = InterpolationConfig(gamma=1.0)
    for i, seq in enumerate(toy.random_sentences(30, seed=24)):
        em = amsim.synthesize_emissions(toy.corpus.pronounce(seq), toy.confusion, 3, "serious", seed=i)
        nb = decode(g, em, nbest=10, words=toy.words)
        out = rescore_nbest(nb, base, geo, NGramRescorer(base), cfg)
        assert [r.words for r in out] == [h.words for h in nb]
    record_property("detail", "gamma=1 ranking equals first pass on 30 n-best lists")


# 3

@pytest.mark.criterion(3)
def test_relative_reduction_values(record_property):
    a = relative_reduction(4.70, 3.82)
    b = relative_reduction(11.30, 10.16)
    record_property("detail", f"{a:.2f}% and {b:.2f}%")
    assert a == pytest.approx(18.7, abs=0.1)
    assert b == pytest.approx(10.1, abs=0.1)


# 4

def zipf_corpus(n, vocab, seed):
    rng = np.random.default_rng(seed)
    p = 1.0 / np.arange(1, vocab + 1)
    p /= p.sum()
    return [[f"w{k}" for k in rng.choice(vocab, size=int(rng.integers(1, 9)), p=p)] for _ in range(n)]


@pytest.mark.criterion(4)
def test_kn_lm_correctness(record_property):
    t = time.time()
    corpus = zipf_corpus(10_000, 300, seed=0)
    regimes = {"baseline": [0, 3, 5, 10, 15], "geo": [0, 2, 2, 2, 2]}
    rng = random.Random(0)
    vocab = [f"w{k}" for k in range(300)]
    worst_norm, worst_probe, probes = 0.0, 0.0, 0
    for order in (2, 3, 4, 5):
        for cut in regimes.values():
            m = train(corpus, order, cut[:order])
            worst_norm = max(worst_norm, m.max_normalization_error())
            text = m.to_arpa()
            again = NGramModel.from_arpa(text)
            assert again == m and again.to_arpa() == text
            naive = NaiveArpa(text)
            for _ in range(1250):
                src = rng.choice(corpus)
                k = rng.randrange(len(src) + 1)
                h = (["<s>"] + src)[max(0, k + 1 - rng.randint(0, order)):k + 1]
                w = src[k] if k < len(src) and rng.random() < 0.7 else rng.choice(vocab + ["</s>", "<unk>"])
                worst_probe = max(worst_probe, abs(m.logprob(w, h) - naive.logprob(w, h)))
                probes += 1
    elapsed = time.time() - t
    record_property("detail", f"norm err {worst_norm:.1e}, {probes} probes max diff {worst_probe:.1e}, "
                              f"{elapsed:.0f}s")
    assert probes == 10_000
    assert worst_norm <= 1e-6
    assert worst_probe <= 1e-9
    assert elapsed < 120


# 5

@pytest.mark.criterion(5)
def test_geo_lm_lowers_cer(bench, bench_runs, record_property):
    utts, runs, seconds = bench_runs
    reps = {lam: cer_report(utts, best_words(nbs)) for lam, nbs in runs.items()}
    acc = {lam: bench.homophone_accuracy(utts, best_words(nbs)) for lam, nbs in runs.items()}
    improved = sum(1 for p in acc[0.5] if acc[0.5][p][0] / acc[0.5][p][1] > acc[1.0][p][0] / acc[1.0][p][1])
    total = bench.build_seconds + seconds
    record_property("detail", f"CER {100 * reps[0.5].cer:.2f}% vs {100 * reps[1.0].cer:.2f}%, "
                              f"homophone accuracy up in {improved}/{len(acc[0.5])} provinces, {total:.0f}s")
    assert len(acc[0.5]) == 10
    assert reps[0.5].cer < reps[1.0].cer
    assert improved >= 8
    assert total < 300


# 6

@pytest.mark.criterion(6)
def test_second_pass_geo_lm_lowers_cer(bench, bench_runs, record_property):
    utts, runs, _ = bench_runs
    cfg = InterpolationConfig()
    l3 = cer_report(utts, bench.rescore(runs[0.5], cfg, use_geo=True)).cer
    l2 = cer_report(utts, bench.rescore(runs[0.5], cfg, use_geo=False)).cer
    record_property("detail", f"with Geo-LM {100 * l3:.2f}% vs without {100 * l2:.2f}%")
    assert l3 < l2


# 7

@pytest.mark.criterion(7)
def test_geo_am_invariants(record_property):
    t = time.time()
    small = ToyGeoAm(hidden=6, seed=1).initialize(5, 4)
    check = ToyTask(n_features=5, n_units=4, seed=1).sample(40, seed=0)
    errs = gradient_check(small, check)
    worst = max(errs.values())
    assert set(errs) == set(ALL_GROUPS) and worst < 1e-4

    task = ToyTask(seed=0, noise=1.0, max_shift=0.6)
    train_b = task.sample(3000, regions=range(2, 11), seed=1)
    few = task.sample(40, regions=[1], seed=2)
    X = np.vstack([train_b.features, few.features])
    y = np.concatenate([train_b.labels, few.labels])
    r = np.concatenate([train_b.regions, few.regions])
    model = ToyGeoAm(hidden=64, n_epochs=300, seed=0).fit(X, y, regions=r)
    adapted = adapt_dialect(model, 1, [task.sample(1500, regions=[1], seed=3)])
    test = task.sample(2000, seed=4)
    other = test.regions != 1
    same = np.array_equal(model.predict_proba(test.features[other], test.regions[other]),
                          adapted.predict_proba(test.features[other], test.regions[other]))
    own = ~other
    before = model.score(test.features[own], test.labels[own], test.regions[own])
    after = adapted.score(test.features[own], test.labels[own], test.regions[own])
    elapsed = time.time() - t
    record_property("detail", f"grad err {worst:.1e}, other dialects identical={same}, "
                              f"region 1 accuracy {before:.3f} -> {after:.3f}, {elapsed:.0f}s")
    assert same
    assert after > before
    assert elapsed < 120


# 8

@pytest.mark.criterion(8)
def test_infinite_beam_is_exhaustive(record_property):
    rng = random.Random(8)
    checked = 0
    while checked < 200:
        fst = random_acyclic(rng, rng.randint(3, 8), rng.randint(4, 16), 3, 4, eps_rate=0.25, negative=True)
        n_paths = len(paths(fst))
        if n_paths > 1000:
            continue
        em = random_emissions(rng, rng.randint(1, 5), 3)
        ref = exhaustive(fst, em)
        if not ref:
            with pytest.raises(EmptyBeamError):
                decode(fst, em, beam=INF, unit_beam=INF)
            continue
        best = decode(fst, em, beam=INF, unit_beam=INF, nbest=1).best
        assert best.total == pytest.approx(ref[0][0], abs=1e-12)
        checked += 1
    record_property("detail", f"{checked} random graphs agree with enumeration")


@pytest.mark.criterion(8)
def test_beam_monotonicity(bench, record_property):
    utts = bench.sample(100, seed=17)
    violations = 0
    for i, u in enumerate(utts):
        pid, _ = bench.table.resolve(u.lat, u.lon)
        g = bench.graph(pid, 0.5)
        em = bench.emissions(u, "serious", seed=1000 + i)
        prev = INF
        for beam in (2, 4, 8, 16):
            try:
                cost = decode(g, em, beam=beam, nbest=1).best.total
            except EmptyBeamError:
                cost = INF
            if cost > prev + 1e-9:
                violations += 1
            prev = cost
    record_property("detail", f"{violations} violations over 100 utterances x 4 beams")
    assert violations == 0


# 9

@pytest.mark.criterion(9)
def test_accent_gradient(bench, record_property):
    utts = bench.sample(500, seed=11)
    cers = [cer_report(utts, best_words(bench.decode(utts, level=lv))).cer for lv in LEVELS]
    record_property("detail", ", ".join(f"{lv} {100 * c:.2f}%" for lv, c in zip(LEVELS, cers)))
    assert all(a <= b for a, b in zip(cers, cers[1:]))
    assert cers[-1] > cers[0]
