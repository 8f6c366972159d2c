import math

import pytest

from geodecode.graph import (EPS_WORD, Lexicon, VirtualGrammar, assemble_first_pass, build_lexicon_fst,
                             interpolated_cost, interpolated_grammar_fst, model_normalization_error, ngram_to_fst)
from geodecode.ngram import NGramModel, train
from geodecode.wfst import EPS, SymbolMismatchError, SymbolTable, compose_lazy, compose_static, linear_fst, \
    shortest_paths
from toysetup import LN10, make_toy


@pytest.fixture(scope="module")
def toy():
    return make_toy()


def word_labels(toy, seq):
    return [toy.words.find(w) for w in seq]


def unit_labels(toy, seq):
    return [toy.units.find(u) for u in toy.corpus.pronounce(seq)]


def test_lexicon_io(tmp_path):
    lex = Lexicon()
    lex.add("ab", ["x", "y"])
    lex.add("ab", ["x", "z"])
    lex.add("c", ["x", "y"])
    lex.write(tmp_path / "lex.txt")
    again = Lexicon.read(tmp_path / "lex.txt")
    assert again.entries == lex.entries
    assert again.homophone_groups() == [["ab", "c"]]
    with pytest.raises(ValueError):
        lex.add("d", [])


def test_lexicon_fst_transduces_pronunciations(toy):
    for w in toy.word_list()[:10]:
        acc = compose_static(linear_fst(unit_labels(toy, [w]), isymbols=toy.units, osymbols=toy.units), toy.L)
        outs = {o for o, _ in shortest_paths(acc, n=10)}
        homs = [h for h in toy.word_list() if toy.corpus.lexicon.entries[h] == toy.corpus.lexicon.entries[w]]
        assert outs == {(toy.words.find(h),) for h in homs}


def test_grammar_path_cost_is_sentence_logprob(toy):
    G = ngram_to_fst(toy.base, toy.words)
    for seq in toy.random_sentences(40, seed=1, max_words=4):
        lab = word_labels(toy, seq)
        acc = compose_static(linear_fst(lab, isymbols=toy.words, osymbols=toy.words), G)
        (out, cost), = shortest_paths(acc, n=1)
        assert out == tuple(lab)
        assert cost == pytest.approx(-toy.base.sentence_logprob(seq) * LN10, abs=1e-9)


def test_backoff_path_never_beats_direct_path(toy):
    # every path through G, not only the best, costs at least -ln P(sentence)
    G = ngram_to_fst(toy.base, toy.words)
    for seq in toy.random_sentences(20, seed=2):
        lab = word_labels(toy, seq)
        acc = compose_static(linear_fst(lab, isymbols=toy.words, osymbols=toy.words), G)
        exact = -toy.base.sentence_logprob(seq) * LN10
        from oracles import paths
        assert min(c for _, _, c in paths(acc)) == pytest.approx(exact, abs=1e-9)
        assert all(c >= exact - 1e-9 for _, _, c in paths(acc))


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.5, 1.0])
def test_difference_lm_path_cost(toy, lam):
    first = assemble_first_pass(toy.L, toy.G_bi, toy.difference(lam), static=toy.LG)
    for seq in toy.random_sentences(25, seed=3):
        acc = compose_lazy(linear_fst(unit_labels(toy, seq), isymbols=toy.units, osymbols=toy.units), first)
        best = dict(shortest_paths(acc, n=20))
        assert best[tuple(word_labels(toy, seq))] == pytest.approx(toy.interp_cost(seq, lam), abs=1e-8)


def test_static_interpolated_grammar(toy):
    G = interpolated_grammar_fst(toy.base, toy.geo, toy.words, 0.5)
    for seq in toy.random_sentences(25, seed=4):
        acc = compose_static(linear_fst(word_labels(toy, seq), isymbols=toy.words, osymbols=toy.words), G)
        (_, cost), = shortest_paths(acc)
        assert cost == pytest.approx(toy.interp_cost(seq, 0.5), abs=1e-9)


def test_virtual_grammar_sentence_cost(toy):
    g = VirtualGrammar(toy.base, toy.geo, toy.words, 0.4)
    for seq in toy.random_sentences(10, seed=5):
        total, parts = g.sentence_cost(word_labels(toy, seq))
        assert len(parts) == len(seq) + 1
        assert total == pytest.approx(toy.interp_cost(seq, 0.4), abs=1e-9)


def test_virtual_grammar_blocks_special_words():
    words = SymbolTable(["a", "<unk>", EPS_WORD + "x"])
    m = train([["a"]], 2)
    g = VirtualGrammar(m, None, words)
    assert g.match(g.start, EPS) == ()
    assert g.match(g.start, words.find("<unk>")) == ()
    assert len(g.match(g.start, words.find("a"))) == 1


def test_interpolated_cost_boundaries():
    assert interpolated_cost(-0.5, -3.0, 1.0) == 0.5 * LN10
    assert interpolated_cost(-0.5, -3.0, 0.0) == 3.0 * LN10
    assert interpolated_cost(-1.0, -1.0, 0.3) == pytest.approx(LN10)
    with pytest.raises(ValueError):
        VirtualGrammar(train([["a"]], 2), None, SymbolTable(["a"]), lam=1.5)


def test_lambda_one_equals_no_geo(toy):
    with_geo = VirtualGrammar(toy.base, toy.geo, toy.words, 1.0)
    without = VirtualGrammar(toy.base, None, toy.words)
    for seq in toy.random_sentences(20, seed=6):
        lab = word_labels(toy, seq)
        assert with_geo.sentence_cost(lab)[1] == without.sentence_cost(lab)[1]


def test_unnormalized_model_rejected():
    m = train([["a", "b"]], 2)
    probs = [dict(t) for t in m.probs]
    key = next(iter(probs[1]))
    probs[1][key] += 0.3
    bad = NGramModel(2, m.vocab, probs, m.backoffs)
    assert model_normalization_error(bad) > 1e-3
    with pytest.raises(ValueError):
        ngram_to_fst(bad, SymbolTable(["a", "b"]))


def test_assemble_checks_symbols(toy):
    other = SymbolTable(["zz"])
    with pytest.raises(SymbolMismatchError):
        assemble_first_pass(toy.L, ngram_to_fst(train([["zz"]], 2), other), toy.difference(0.5))


def test_build_lexicon_requires_words():
    with pytest.raises(ValueError):
        build_lexicon_fst(Lexicon())
