"""Decoding-graph assembly: lexicon, grammar FSTs and the on-demand
difference grammar that swaps the static bigram score for the interpolated
full-order score during decoding."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .ngram import BOS, EOS, UNK, NGramModel
from .wfst import EPS, ZERO, Arc, LazyComposition, SymbolMismatchError, SymbolTable, Wfst, compose_static

LN10 = math.log(10.0)


@dataclass
class Lexicon:
    """word -> list of pronunciations (tuples of unit strings)."""

    entries: dict = field(default_factory=dict)

    def add(self, word: str, units) -> None:
        units = tuple(units)
        if not units:
            raise ValueError(f"word {word!r} has an empty pronunciation")
        prons = self.entries.setdefault(word, [])
        if units not in prons:
            prons.append(units)

    @property
    def words(self) -> list[str]:
        return list(self.entries)

    def units(self) -> list[str]:
        return sorted({u for prons in self.entries.values() for p in prons for u in p})

    def homophone_groups(self) -> list[list[str]]:
        by_pron: dict[tuple, list] = {}
        for w, prons in self.entries.items():
            for p in prons:
                by_pron.setdefault(p, []).append(w)
        return [ws for ws in by_pron.values() if len(ws) > 1]

    def __contains__(self, word) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def symbol_tables(self) -> tuple[SymbolTable, SymbolTable]:
        return SymbolTable(self.units()), SymbolTable(sorted(self.entries))

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for w, prons in self.entries.items():
                for p in prons:
                    f.write(f"{w}\t{' '.join(p)}\n")

    @classmethod
    def read(cls, path) -> "Lexicon":
        lex = cls()
        with open(path, encoding="utf-8") as f:
            for n, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    word, units = line.rstrip("\n").split("\t")
                except ValueError:
                    raise ValueError(f"{path}:{n}: expected 'word<TAB>units'") from None
                lex.add(word, units.split())
        return lex


def build_lexicon_fst(lex: Lexicon, units: SymbolTable | None = None,
                      words: SymbolTable | None = None) -> Wfst:
    """Unit-to-word transducer. The word label sits on the first unit of its
    pronunciation; every pronunciation returns to the (final) start state."""
    if not len(lex):
        raise ValueError("empty lexicon")
    if units is None or words is None:
        u, w = lex.symbol_tables()
        units = units or u
        words = words or w
    fst = Wfst(units, words)
    root = fst.add_state()
    fst.set_start(root)
    fst.set_final(root)
    for word, prons in lex.entries.items():
        wid = words.find(word)
        for pron in prons:
            if not pron:
                raise ValueError(f"word {word!r} has an empty pronunciation")
            src = root
            for i, unit in enumerate(pron):
                dst = root if i == len(pron) - 1 else fst.add_state()
                fst.add_arc(src, units.find(unit), wid if i == 0 else EPS, 0.0, dst)
                src = dst
    return fst


def _label_map(model: NGramModel, words: SymbolTable) -> list[int]:
    """word-table label -> model vocab id (unknown words map to <unk>)."""
    return [model.vocab.id(words.symbol(i)) for i in range(len(words))]


def ngram_to_fst(model: NGramModel, words: SymbolTable, check: bool = True) -> Wfst:
    """Backoff grammar acceptor: one state per stored context, word arcs with
    cost -ln P, epsilon backoff arcs with cost -ln(backoff), and sentence end
    folded into final weights. Words missing from ``words`` get no arcs."""
    if check:
        bad = model_normalization_error(model)
        if bad > 1e-6:
            raise ValueError(f"model is not normalized (max deviation {bad:.3g})")
    v = model.vocab
    eos = v.eos
    to_label = {v.ids[s]: words.get(s) for s in v.symbols
                if s not in (BOS, EOS, UNK) and words.get(s) is not None}
    fst = Wfst(words, words)
    ids: dict[tuple, int] = {}

    def state(ctx):
        s = ids.get(ctx)
        if s is None:
            s = ids[ctx] = fst.add_state()
        return s

    state(())
    contexts = [c for k in range(model.order - 1) for c in model.probs[k] if c[-1] != eos]
    for c in contexts:
        state(c)
    start = model.context_state((v.bos,))
    fst.set_start(ids[start])
    for ctx in [()] + contexts:
        src = ids[ctx]
        table = model.probs[len(ctx)] if len(ctx) < model.order else None
        if table is not None:
            for w in model._followers(ctx) if ctx else [g[0] for g in model.probs[0]]:
                lp = table[ctx + (w,)]
                if w == eos:
                    fst.set_final(src, -lp * LN10)
                    continue
                label = to_label.get(w)
                if label is None:
                    continue
                fst.add_arc(src, label, label, -lp * LN10, state(model.next_state(ctx, w)))
        if ctx:
            bo = model.backoffs[len(ctx) - 1].get(ctx, 0.0)
            fst.add_arc(src, EPS, EPS, -bo * LN10, ids[model.context_state(ctx[1:])])
    return fst


def model_normalization_error(model: NGramModel) -> float:
    """max |sum_w P(w|h) - 1| over stored contexts, from stored entries only."""
    bos = model.vocab.bos
    uni = {g[0]: 10.0 ** p for g, p in model.probs[0].items() if g[0] != bos}
    worst = abs(sum(uni.values()) - 1.0)
    for k in range(1, model.order):
        for ctx in model.probs[k - 1]:
            fol = [w for w in model._followers(ctx) if w != bos]
            if not fol:
                continue
            seen = sum(10.0 ** model.probs[k][ctx + (w,)] for w in fol)
            lower = sum(10.0 ** model.logprob_ids(w, ctx[1:]) for w in fol)
            bo = 10.0 ** model.backoffs[k - 1].get(ctx, 0.0)
            worst = max(worst, abs(seen + bo * (1.0 - lower) - 1.0))
    return worst


def interpolated_cost(lp_b: float, lp_l: float, lam: float) -> float:
    """-ln(lam * P_b + (1 - lam) * P_l) from log10 inputs; exact at lam in {0, 1}."""
    if lam == 1.0:
        return -lp_b * LN10
    if lam == 0.0:
        return -lp_l * LN10
    return -math.log(lam * 10.0 ** lp_b + (1.0 - lam) * 10.0 ** lp_l)


class VirtualGrammar:
    """On-demand deterministic word acceptor scoring the interpolation of a
    baseline and a geographic LM.

    States are tuples of per-model history contexts. With ``bigram`` given,
    each arc also carries +ln P_bi(w|h), cancelling the bigram score that the
    static graph already applied; this is the F factor of the first pass.
    """

    has_input_epsilons = False

    def __init__(self, baseline: NGramModel, geo: NGramModel | None, words: SymbolTable,
                 lam: float = 0.5, bigram: NGramModel | None = None):
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"interpolation weight must lie in [0, 1], got {lam}")
        if geo is None:
            geo, lam = baseline, 1.0
        self.baseline, self.geo, self.bigram = baseline, geo, bigram
        self.lam = lam
        self.isymbols = self.osymbols = words
        self._models = [m for m in (bigram, baseline, geo) if m is not None]
        self._maps = [_label_map(m, words) for m in self._models]
        self.start = tuple(m.context_state((m.vocab.bos,)) for m in self._models)
        self._cache: dict = {}
        self._final: dict = {}
        # labels the grammar never accepts
        self._blocked = {words.get(s) for s in (EPS_WORD, BOS, EOS, UNK)} - {None}

    def _parts(self, state, word_ids):
        lps = [m.logprob_ids(w, ctx) for m, w, ctx in zip(self._models, word_ids, state)]
        if self.bigram is not None:
            lp_bi, lp_b, lp_l = lps
            return lp_bi * LN10 + interpolated_cost(lp_b, lp_l, self.lam)
        lp_b, lp_l = lps
        return interpolated_cost(lp_b, lp_l, self.lam)

    def score(self, state, label: int) -> float:
        """-ln P1(w|h): the interpolated cost without any cancellation term."""
        ids = [mp[label] for mp in self._maps]
        n = len(self._models)
        return interpolated_cost(self._models[n - 2].logprob_ids(ids[n - 2], state[n - 2]),
                                 self._models[n - 1].logprob_ids(ids[n - 1], state[n - 1]),
                                 self.lam)

    def end_score(self, state) -> float:
        n = len(self._models)
        b, g = self._models[n - 2], self._models[n - 1]
        return interpolated_cost(b.logprob_ids(b.vocab.eos, state[n - 2]),
                                 g.logprob_ids(g.vocab.eos, state[n - 1]), self.lam)

    def next(self, state, label: int):
        return tuple(m.next_state(ctx, mp[label])
                     for m, mp, ctx in zip(self._models, self._maps, state))

    def match(self, state, label: int):
        if label == EPS or label in self._blocked:
            return ()
        key = (state, label)
        arcs = self._cache.get(key)
        if arcs is None:
            ids = [mp[label] for mp in self._maps]
            cost = self._parts(state, ids)
            arcs = self._cache[key] = (Arc(label, label, cost, self.next(state, label)),)
        return arcs

    def arcs(self, state):
        out = []
        for label in range(1, len(self.isymbols)):
            out.extend(self.match(state, label))
        return out

    def final(self, state) -> float:
        w = self._final.get(state)
        if w is None:
            ids = [m.vocab.eos for m in self._models]
            w = self._final[state] = self._parts(state, ids)
        return w

    def sentence_cost(self, labels) -> tuple[float, list[float]]:
        """Total and per-token -ln P1 for a label sequence, </s> included."""
        state = self.start
        costs = []
        for lab in labels:
            costs.append(self.score(state, lab))
            state = self.next(state, lab)
        costs.append(self.end_score(state))
        return math.fsum(costs), costs


EPS_WORD = "<eps>"


def difference_grammar(baseline: NGramModel, geo: NGramModel | None, bigram: NGramModel,
                       words: SymbolTable, lam: float = 0.5) -> VirtualGrammar:
    return VirtualGrammar(baseline, geo, words, lam, bigram=bigram)


def interpolated_grammar_fst(baseline: NGramModel, geo: NGramModel | None, words: SymbolTable,
                             lam: float = 0.5) -> Wfst:
    """Fully expanded interpolated grammar: every reachable history state gets an
    arc for every word in ``words``. Exact, but only practical for small
    vocabularies; used as the static reference for the difference grammar."""
    if geo is None:
        geo, lam = baseline, 1.0
    skip = {BOS, EOS, UNK, EPS_WORD}
    labels = [(i, words.symbol(i)) for i in range(1, len(words)) if words.symbol(i) not in skip]
    fst = Wfst(words, words)
    models = (baseline, geo)
    start = tuple(m.context_state((m.vocab.bos,)) for m in models)
    ids = {start: fst.add_state()}
    fst.set_start(ids[start])
    queue = deque([start])
    while queue:
        st = queue.popleft()
        src = ids[st]
        lp = [m.logprob_ids(m.vocab.eos, c) for m, c in zip(models, st)]
        fst.set_final(src, interpolated_cost(lp[0], lp[1], lam))
        for label, sym in labels:
            wid = [m.vocab.id(sym) for m in models]
            lp = [m.logprob_ids(w, c) for m, w, c in zip(models, wid, st)]
            nxt = tuple(m.next_state(c, w) for m, w, c in zip(models, wid, st))
            if nxt not in ids:
                ids[nxt] = fst.add_state()
                queue.append(nxt)
            fst.add_arc(src, label, label, interpolated_cost(lp[0], lp[1], lam), ids[nxt])
    return fst


def assemble_first_pass(lexicon_fst: Wfst, g_bi: Wfst, grammar: VirtualGrammar,
                        static: Wfst | None = None) -> LazyComposition:
    """(L o G_bi) o F with F applied lazily. ``static`` may carry a prebuilt
    L o G_bi shared between decodes."""
    if lexicon_fst.osymbols != g_bi.isymbols or g_bi.osymbols != grammar.isymbols:
        raise SymbolMismatchError("lexicon, bigram grammar and difference grammar disagree on words")
    if static is None:
        static = compose_static(lexicon_fst, g_bi)
    return LazyComposition(static, grammar)
