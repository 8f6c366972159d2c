"""Independent reference implementations used by the tests."""
import itertools
import math
from collections import Counter, defaultdict

BOS, EOS, UNK = "<s>", "</s>", "<unk>"


def kn_discounts(counts):
    n = Counter(c for c in counts.values() if c <= 4)
    if not all(n[k] for k in (1, 2, 3)):
        return [0.0, 0.5, 1.0, 1.5]
    y = n[1] / (n[1] + 2 * n[2])
    d = [k - (k + 1) * y * n[k + 1] / n[k] for k in (1, 2, 3)]
    if not all(0 < d[k - 1] < k for k in (1, 2, 3)):
        return [0.0, 0.5, 1.0, 1.5]
    return [0.0] + d


class DirectKN:
    """Interpolated modified Kneser-Ney evaluated straight from the recursive
    definition, with no pruning and no backoff form."""

    def __init__(self, sentences, order):
        self.order = order
        raw = [Counter() for _ in range(order)]
        for s in sentences:
            toks = [BOS] + list(s) + [EOS]
            for k in range(1, order + 1):
                for i in range(len(toks) - k + 1):
                    raw[k - 1][tuple(toks[i:i + k])] += 1
        self.counts = [None] * order
        self.counts[order - 1] = dict(raw[order - 1])
        for k in range(order - 1, 0, -1):
            cont = Counter(g[1:] for g in raw[k])
            self.counts[k - 1] = {g: (c if g[0] == BOS else cont[g]) for g, c in raw[k - 1].items()}
        self.counts[0].pop((BOS,), None)
        self.vocab = sorted({w for s in sentences for w in s} | {EOS, UNK})
        self.disc = [kn_discounts(c) for c in self.counts]
        self.ctx = []
        for k in range(order):
            by = defaultdict(lambda: [0, 0, 0, 0])
            for g, c in self.counts[k].items():
                row = by[g[:-1]]
                row[0] += c
                row[min(c, 3)] += 1
            self.ctx.append(by)

    def _d(self, k, c):
        return 0.0 if c == 0 else self.disc[k][min(c, 3)]

    def prob(self, word, history):
        h = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        return self._p(word, h)

    def _p(self, w, h):
        k = len(h)
        if k == 0:
            tot, n1, n2, n3 = self.ctx[0][()]
            c = self.counts[0].get((w,), 0)
            gamma = (self.disc[0][1] * n1 + self.disc[0][2] * n2 + self.disc[0][3] * n3) / tot
            return max(c - self._d(0, c), 0.0) / tot + gamma / len(self.vocab)
        lower = self._p(w, h[1:])
        row = self.ctx[k].get(h)
        if row is None:
            return lower
        tot, n1, n2, n3 = row
        c = self.counts[k].get(h + (w,), 0)
        gamma = (self.disc[k][1] * n1 + self.disc[k][2] * n2 + self.disc[k][3] * n3) / tot
        return max(c - self._d(k, c), 0.0) / tot + gamma * lower


class NaiveArpa:
    """Reads ARPA text and answers queries by the textbook backoff rule."""

    def __init__(self, text):
        self.p, self.bo = {}, {}
        section = None
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("\\") and line.endswith("-grams:"):
                section = int(line[1:line.index("-")])
                continue
            if line in ("\\data\\", "\\end\\") or line.startswith("ngram "):
                continue
            fields = line.split()
            lp = float(fields[0])
            words = tuple(fields[1:1 + section])
            self.p[words] = lp
            if len(fields) > 1 + section:
                self.bo[words] = float(fields[1 + section])
        self.order = max(len(k) for k in self.p)

    def logprob(self, word, history):
        if (word,) not in self.p:
            word = UNK
        hist = tuple(h if (h,) in self.p else UNK for h in history)
        hist = hist[len(hist) - min(len(hist), self.order - 1):]
        return self._q(word, hist)

    def _q(self, w, h):
        if h + (w,) in self.p:
            return self.p[h + (w,)]
        if not h:
            raise KeyError(w)
        return self.bo.get(h, 0.0) + self._q(w, h[1:])


def paths(fst, max_len=50):
    """Every complete path of an acyclic Wfst as (ilabels, olabels, cost)."""
    out = []

    def walk(s, il, ol, cost, depth):
        if depth > max_len:
            raise RuntimeError("cyclic or too deep")
        fw = fst.final(s)
        if fw != math.inf:
            out.append((tuple(il), tuple(ol), cost + fw))
        for a in fst.arcs(s):
            walk(a.nextstate, il + ([a.ilabel] if a.ilabel else []),
                 ol + ([a.olabel] if a.olabel else []), cost + a.weight, depth + 1)

    if fst.start >= 0:
        walk(fst.start, [], [], 0.0, 0)
    return out


def levenshtein(a, b):
    """Edit distance by plain recursion with memoization."""
    import functools

    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j - 1) + (a[i - 1] != b[j - 1]), d(i - 1, j) + 1, d(i, j - 1) + 1)

    return d(len(a), len(b))


def all_label_sequences(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)
