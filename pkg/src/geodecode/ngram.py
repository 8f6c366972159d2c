"""Kneser-Ney smoothed backoff n-gram language models.

Models are trained with interpolated modified Kneser-Ney smoothing and stored
in backoff form (log10 probability and log10 backoff weight per n-gram), which
is what the ARPA format and the grammar-to-FST conversion both expect.
"""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED = (BOS, EOS, UNK)

# log10 value written for <s>, which can never be predicted
NEVER = -99.0
UNK_FLOOR = 1e-7
ARPA_PRECISION = 10
FALLBACK_DISCOUNTS = (0.5, 1.0, 1.5)


class ArpaFormatError(ValueError):
    pass


def _fix(x: float) -> float:
    return float(f"{x:.{ARPA_PRECISION}f}")


class Vocabulary:
    """Dense token <-> id map. Reserved tokens occupy ids 0, 1, 2."""

    def __init__(self, symbols: Iterable[str] = ()):
        self.symbols: list[str] = []
        self.ids: dict[str, int] = {}
        for tok in RESERVED:
            self.add(tok)
        for tok in symbols:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.ids:
            self.ids[token] = len(self.symbols)
            self.symbols.append(token)
        return self.ids[token]

    @property
    def bos(self) -> int:
        return self.ids[BOS]

    @property
    def eos(self) -> int:
        return self.ids[EOS]

    @property
    def unk(self) -> int:
        return self.ids[UNK]

    def id(self, token: str) -> int:
        return self.ids.get(token, self.ids[UNK])

    def lookup(self, i: int) -> str:
        return self.symbols[i]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, token: str) -> bool:
        return token in self.ids

    def __iter__(self):
        return iter(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.symbols == other.symbols


class NGramModel:
    """Backoff n-gram model over a :class:`Vocabulary`.

    ``probs[k]`` maps (k+1)-tuples of token ids to log10 probabilities and
    ``backoffs[k]`` maps (k+1)-tuples to log10 backoff weights for k < order-1.
    The model is treated as immutable once built.
    """

    def __init__(self, order: int, vocab: Vocabulary, probs, backoffs, cutoffs=None):
        self.order = order
        self.vocab = vocab
        self.probs: list[dict[tuple, float]] = probs
        self.backoffs: list[dict[tuple, float]] = backoffs
        self.cutoffs = list(cutoffs) if cutoffs is not None else None

    # queries

    def logprob_ids(self, word: int, context: tuple) -> float:
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        bo = 0.0
        while True:
            p = self.probs[len(context)].get(context + (word,))
            if p is not None:
                return bo + p
            if context:
                bo += self.backoffs[len(context) - 1].get(context, 0.0)
                context = context[1:]
            else:
                # only reachable for ids outside the vocabulary
                return bo + self.probs[0][(self.vocab.unk,)]

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        """log10 P(word | history) by standard backoff evaluation."""
        v = self.vocab
        return self.logprob_ids(v.id(word), tuple(v.id(t) for t in history))

    def sentence_logprob(self, tokens: Sequence[str], eos: bool = True) -> float:
        ids = [self.vocab.bos] + [self.vocab.id(t) for t in tokens]
        if eos:
            ids.append(self.vocab.eos)
        return sum(self.logprob_ids(ids[i], tuple(ids[:i])) for i in range(1, len(ids)))

    # history states, used by grammar construction and on-demand scoring

    def is_context(self, ctx: tuple) -> bool:
        return not ctx or (len(ctx) < self.order and ctx in self.probs[len(ctx) - 1])

    def context_state(self, history: tuple) -> tuple:
        """Longest suffix of ``history`` that the model can condition on."""
        n = min(len(history), self.order - 1)
        for k in range(n, 0, -1):
            ctx = tuple(history[len(history) - k:])
            if ctx in self.probs[k - 1]:
                return ctx
        return ()

    def next_state(self, state: tuple, word: int) -> tuple:
        return self.context_state(state + (word,))

    def contexts(self):
        yield ()
        for k in range(self.order - 1):
            yield from self.probs[k]

    def num_ngrams(self, order: int | None = None) -> int:
        if order is not None:
            return len(self.probs[order - 1])
        return sum(len(p) for p in self.probs)

    def entries(self):
        """Yield (ngram tokens, log10 prob, log10 backoff or None) triples."""
        sym = self.vocab.symbols
        for k, table in enumerate(self.probs):
            bos = self.backoffs[k] if k < self.order - 1 else None
            for g, p in table.items():
                yield tuple(sym[i] for i in g), p, (bos.get(g, 0.0) if bos is not None else None)

    def distribution(self, context: tuple, lower: np.ndarray | None = None) -> np.ndarray:
        """Full next-token distribution (probability domain) over vocab ids.

        ``lower`` may carry the already computed distribution of ``context[1:]``.
        """
        if not context:
            out = np.zeros(len(self.vocab))
            for g, p in self.probs[0].items():
                out[g[0]] = 10.0 ** p
            out[self.vocab.bos] = 0.0
            return out
        if lower is None:
            lower = self.distribution(context[1:])
        out = lower * 10.0 ** self.backoffs[len(context) - 1].get(context, 0.0)
        table = self.probs[len(context)]
        for w in self._followers(context):
            out[w] = 10.0 ** table[context + (w,)]
        out[self.vocab.bos] = 0.0
        return out

    def _followers(self, context: tuple) -> list[int]:
        idx = getattr(self, "_follow_index", None)
        if idx is None:
            idx = defaultdict(list)
            for k in range(1, self.order):
                for g in self.probs[k]:
                    idx[g[:-1]].append(g[-1])
            self._follow_index = idx
        return idx.get(context, [])

    def max_normalization_error(self) -> float:
        """Exhaustive check of |sum_w P(w|h) - 1| over every stored context."""
        root = self.distribution(())
        worst = abs(root.sum() - 1.0)
        # depth-first over the suffix tree: sorting by reversed context puts
        # every context right after its longest stored suffix
        stack = [((), root)]
        for ctx in sorted((c for k in range(self.order - 1) for c in self.probs[k]),
                          key=lambda c: c[::-1]):
            rev = ctx[::-1]
            while len(stack[-1][0]) >= len(rev) or rev[:len(stack[-1][0])] != stack[-1][0]:
                stack.pop()
            d = self.distribution(ctx, stack[-1][1])
            worst = max(worst, abs(d.sum() - 1.0))
            stack.append((rev, d))
        return worst

    def __eq__(self, other) -> bool:
        return (isinstance(other, NGramModel) and self.order == other.order
                and self.vocab == other.vocab and self.probs == other.probs
                and self.backoffs == other.backoffs)

    # serialization

    def to_arpa(self) -> str:
        return to_arpa(self)

    @classmethod
    def from_arpa(cls, text: str) -> "NGramModel":
        return from_arpa(text)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(to_arpa(self))

    @classmethod
    def load(cls, path) -> "NGramModel":
        with open(path, encoding="utf-8") as f:
            return from_arpa(f.read())


def _discounts(adjusted: dict) -> tuple[float, float, float]:
    coc = Counter(c for c in adjusted.values() if 1 <= c <= 4)
    n1, n2, n3, n4 = (coc[i] for i in (1, 2, 3, 4))
    try:
        y = n1 / (n1 + 2 * n2)
        d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    except ZeroDivisionError:
        return FALLBACK_DISCOUNTS
    if not (0 < d[0] < 1 and 0 < d[1] < 2 and 0 < d[2] < 3):
        return FALLBACK_DISCOUNTS
    return d


def train(corpus: Iterable[Sequence[str]], order: int, cutoffs: Sequence[int] | None = None) -> NGramModel:
    """Train an interpolated modified Kneser-Ney model.

    An n-gram of order k whose raw count is <= ``cutoffs[k-1]`` is pruned
    before estimation; the unigram cutoff truncates the vocabulary to <unk>.
    N-grams whose prefix or suffix was pruned are pruned as well so that the
    stored model stays a valid backoff structure for any cutoff sequence.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    cutoffs = [0] * order if cutoffs is None else [int(c) for c in cutoffs]
    if len(cutoffs) != order:
        raise ValueError(f"expected {order} cutoffs, got {len(cutoffs)}")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise ValueError("cannot train on an empty corpus")

    word_counts = Counter(t for s in sentences for t in s)
    for tok in (BOS, EOS):
        word_counts.pop(tok, None)
    kept_words = sorted((w for w, c in word_counts.items() if c > cutoffs[0] and w != UNK),
                        key=lambda w: (-word_counts[w], w))
    vocab = Vocabulary(kept_words)
    bos, eos = vocab.bos, vocab.eos

    raw: list[Counter] = [Counter() for _ in range(order)]
    for s in sentences:
        ids = [bos] + [vocab.id(t) for t in s] + [eos]
        n = len(ids)
        for k in range(1, order + 1):
            cnt = raw[k - 1]
            for i in range(n - k + 1):
                cnt[tuple(ids[i:i + k])] += 1

    # adjusted counts: continuation counts below the top order
    adjusted: list[dict] = [None] * order
    adjusted[order - 1] = dict(raw[order - 1])
    for k in range(order - 1, 0, -1):
        cont = Counter(g[1:] for g in raw[k])
        adjusted[k - 1] = {g: (c if g[0] == bos else cont[g]) for g, c in raw[k - 1].items()}
    adjusted[0].pop((bos,), None)

    keep: list[set] = [set(adjusted[0])]
    for k in range(2, order + 1):
        lower = keep[-1] | {(bos,)} if k == 2 else keep[-1]
        keep.append({g for g, c in raw[k - 1].items()
                     if c > cutoffs[k - 1] and g[:-1] in lower and g[1:] in lower})

    probs: list[dict] = []
    backoffs: list[dict] = [dict() for _ in range(order - 1)]

    # unigrams, interpolated with the uniform distribution over the vocabulary
    d1, d2, d3 = _discounts(adjusted[0])
    disc = lambda c: 0.0 if c == 0 else (d1 if c == 1 else d2 if c == 2 else d3)  # noqa: E731
    ucounts = {w: adjusted[0].get((w,), 0) for w in range(len(vocab)) if w != bos}
    total = sum(ucounts.values())
    gamma = sum(disc(c) for c in ucounts.values()) / total
    uniform = 1.0 / len(ucounts)
    uni = {w: (c - disc(c)) / total + gamma * uniform for w, c in ucounts.items()}
    if uni[vocab.unk] < UNK_FLOOR:
        uni[vocab.unk] = UNK_FLOOR
        z = sum(uni.values())
        uni = {w: p / z for w, p in uni.items()}
    lower_p = {(w,): p for w, p in uni.items()}
    probs.append({(w,): math.log10(p) for w, p in uni.items()})
    probs[0][(bos,)] = NEVER
    probs[0] = dict(sorted(probs[0].items()))

    for k in range(2, order + 1):
        d1, d2, d3 = _discounts(adjusted[k - 1])
        disc = lambda c: d1 if c == 1 else d2 if c == 2 else d3  # noqa: E731
        by_ctx: dict[tuple, list] = defaultdict(list)
        for g in keep[k - 1]:
            by_ctx[g[:-1]].append(g)
        cur_p = {}
        for ctx, grams in by_ctx.items():
            tot = sum(adjusted[k - 1][g] for g in grams)
            gamma = sum(disc(adjusted[k - 1][g]) for g in grams) / tot
            for g in grams:
                c = adjusted[k - 1][g]
                cur_p[g] = (c - disc(c)) / tot + gamma * lower_p[g[1:]]
            backoffs[k - 2][ctx] = math.log10(gamma) if gamma > 0 else NEVER
        probs.append({g: math.log10(p) for g, p in sorted(cur_p.items())})
        lower_p = cur_p

    for k in range(order - 1):
        backoffs[k] = {g: backoffs[k].get(g, 0.0) for g in probs[k]}

    model = NGramModel(order, vocab,
                       [{g: _fix(p) for g, p in t.items()} for t in probs],
                       [{g: _fix(b) for g, b in t.items()} for t in backoffs],
                       cutoffs)
    logger.debug("trained %d-gram model: %s n-grams", order,
                 [len(t) for t in model.probs])
    return model


def make_bigram_subset(model: NGramModel) -> NGramModel:
    """Keep only unigrams and bigrams, recomputing unigram-context backoffs.

    Backoffs that already normalize their context (to 1e-9 in log10) are kept
    verbatim, so the operation is idempotent on valid order-2 models.
    """
    if model.order < 2:
        raise ValueError("bigram subset needs a model of order >= 2")
    probs = [dict(model.probs[0]), dict(model.probs[1])]
    followers = defaultdict(list)
    for g in probs[1]:
        followers[g[:1]].append(g)
    bos = model.vocab.bos
    backoffs = [{}]
    for ctx in probs[0]:
        old = model.backoffs[0].get(ctx, 0.0)
        grams = followers.get(ctx)
        if not grams:
            backoffs[0][ctx] = old
            continue
        num = 1.0 - sum(10.0 ** probs[1][g] for g in grams)
        den = 1.0 - sum(10.0 ** probs[0][g[1:]] for g in grams if g[1] != bos)
        new = math.log10(num / den) if num > 0 and den > 0 else NEVER
        backoffs[0][ctx] = old if abs(new - old) < 1e-9 else _fix(new)
    return NGramModel(2, model.vocab, probs, backoffs, (model.cutoffs or [0, 0])[:2])


class KneserNeyLM(BaseEstimator):
    """scikit-learn style wrapper: ``fit`` on tokenized sentences.

    Parameters
    ----------
    order : int
        Maximum n-gram order.
    cutoffs : sequence of int, optional
        Per-order count cutoffs; ``None`` keeps every observed n-gram.
    """

    def __init__(self, order=3, cutoffs=None):
        self.order = order
        self.cutoffs = cutoffs

    def fit(self, X, y=None):
        self.model_ = train(X, self.order, self.cutoffs)
        return self

    def logprob(self, word, history=()):
        check_is_fitted(self, "model_")
        return self.model_.logprob(word, history)

    def score(self, X, y=None):
        """Mean log10 probability per predicted token (including </s>)."""
        check_is_fitted(self, "model_")
        total, n = 0.0, 0
        for s in X:
            total += self.model_.sentence_logprob(s)
            n += len(s) + 1
        return total / max(n, 1)


# ARPA

def to_arpa(model: NGramModel) -> str:
    sym = model.vocab.symbols
    lines = []
    if model.cutoffs is not None:
        lines.append("# cutoffs " + " ".join(map(str, model.cutoffs)))
    lines += ["", "\\data\\"]
    for k in range(model.order):
        lines.append(f"ngram {k + 1}={len(model.probs[k])}")
    fmt = f"{{:.{ARPA_PRECISION}f}}"
    for k in range(model.order):
        lines += ["", f"\\{k + 1}-grams:"]
        bos = model.backoffs[k] if k < model.order - 1 else None
        for g, p in model.probs[k].items():
            words = " ".join(sym[i] for i in g)
            if bos is None:
                lines.append(f"{fmt.format(p)}\t{words}")
            else:
                lines.append(f"{fmt.format(p)}\t{words}\t{fmt.format(bos.get(g, 0.0))}")
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def from_arpa(text: str) -> NGramModel:
    lines = text.splitlines()
    cutoffs = None
    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].startswith("# cutoffs "):
            cutoffs = [int(x) for x in lines[i].split()[2:]]
        i += 1
    if i == len(lines):
        raise ArpaFormatError("missing \\data\\ header")
    i += 1
    declared: dict[int, int] = {}
    while i < len(lines) and lines[i].strip().startswith("ngram "):
        try:
            k, n = lines[i].strip()[6:].split("=")
            declared[int(k)] = int(n)
        except ValueError:
            raise ArpaFormatError(f"bad count line: {lines[i]!r}") from None
        i += 1
    if not declared or sorted(declared) != list(range(1, len(declared) + 1)):
        raise ArpaFormatError("ngram count header missing or not contiguous")
    order = len(declared)

    sections: dict[int, list[tuple]] = {}
    current = None
    for raw in lines[i:]:
        line = raw.strip()
        if not line:
            continue
        if line == "\\end\\":
            current = "end"
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-7])
            except ValueError:
                raise ArpaFormatError(f"bad section header {line!r}") from None
            if current not in declared:
                raise ArpaFormatError(f"undeclared section {current}-grams")
            sections[current] = []
            continue
        if current is None:
            raise ArpaFormatError(f"entry outside any section: {line!r}")
        parts = raw.split("\t")
        if len(parts) not in (2, 3):
            raise ArpaFormatError(f"expected 2 or 3 tab-separated fields: {line!r}")
        words = tuple(parts[1].split())
        if len(words) != current:
            raise ArpaFormatError(f"{current}-gram section holds {len(words)}-gram {line!r}")
        try:
            p = float(parts[0])
            bo = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise ArpaFormatError(f"non-numeric field in {line!r}") from None
        sections[current].append((words, p, bo))
    if current != "end":
        raise ArpaFormatError("missing \\end\\ marker")
    for k, n in declared.items():
        got = len(sections.get(k, []))
        if got != n:
            raise ArpaFormatError(f"header declares ngram {k}={n} but section has {got} entries")

    vocab = Vocabulary(w[0] for w, _, _ in sections[1])
    probs = [dict() for _ in range(order)]
    backoffs = [dict() for _ in range(order - 1)]
    for k in range(1, order + 1):
        for words, p, bo in sections[k]:
            g = tuple(vocab.ids[w] if w in vocab.ids else _missing(w) for w in words)
            probs[k - 1][g] = p
            if k < order:
                backoffs[k - 1][g] = bo if bo is not None else 0.0
    for tok in RESERVED:
        g = (vocab.ids[tok],)
        if g not in probs[0]:
            probs[0][g] = NEVER
            if order > 1:
                backoffs[0][g] = 0.0
    return NGramModel(order, vocab, probs, backoffs, cutoffs)


def _missing(word):
    raise ArpaFormatError(f"token {word!r} used in an n-gram but absent from unigrams")


def read_corpus(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f if line.strip()]
