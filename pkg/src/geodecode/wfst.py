"""Weighted finite-state transducers over the tropical (min, +) semiring.

Weights are plain floats holding costs (negative natural-log probabilities).
Label 0 is epsilon on both tapes.

Anything exposing ``start``, ``arcs(state)``, ``final(state)`` and
``match(state, ilabel)`` can be used as the right operand of a lazy
composition; :class:`Wfst` and :class:`LazyComposition` both qualify.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from typing import NamedTuple

EPS = 0
EPS_SYMBOL = "<eps>"
ZERO = math.inf
ONE = 0.0


def plus(a: float, b: float) -> float:
    return a if a <= b else b


def times(a: float, b: float) -> float:
    return a + b


class SymbolMismatchError(ValueError):
    pass


class NoPathError(ValueError):
    pass


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class SymbolTable:
    """Bidirectional symbol <-> integer id table with <eps> at id 0."""

    def __init__(self, symbols=()):
        self._symbols: list[str] = []
        self._ids: dict[str, int] = {}
        self.add(EPS_SYMBOL)
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        i = self._ids.get(symbol)
        if i is None:
            i = self._ids[symbol] = len(self._symbols)
            self._symbols.append(symbol)
        return i

    def find(self, symbol: str) -> int:
        return self._ids[symbol]

    def get(self, symbol: str, default=None):
        return self._ids.get(symbol, default)

    def symbol(self, i: int) -> str:
        return self._symbols[i]

    def __contains__(self, symbol) -> bool:
        return symbol in self._ids

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self):
        return iter(self._symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolTable) and self._symbols == other._symbols

    def __hash__(self):
        return hash(tuple(self._symbols))

    def write_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, s in enumerate(self._symbols):
                f.write(f"{s}\t{i}\n")

    @classmethod
    def read_text(cls, path) -> "SymbolTable":
        pairs = []
        with open(path, encoding="utf-8") as f:
            for n, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    sym, i = line.rstrip("\n").split("\t")
                    pairs.append((int(i), sym))
                except ValueError:
                    raise ValueError(f"{path}:{n}: expected 'symbol<TAB>id'") from None
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))) or pairs[0][1] != EPS_SYMBOL:
            raise ValueError(f"{path}: ids must be dense from 0 with {EPS_SYMBOL} at 0")
        table = cls()
        for _, sym in pairs[1:]:
            table.add(sym)
        return table


def _check_tables(a, b):
    ao, bi = getattr(a, "osymbols", None), getattr(b, "isymbols", None)
    if ao is not None and bi is not None and ao != bi:
        raise SymbolMismatchError("left output symbols differ from right input symbols")


class Wfst:
    """Mutable-while-building weighted transducer with dense integer states."""

    def __init__(self, isymbols: SymbolTable | None = None, osymbols: SymbolTable | None = None):
        self.isymbols = isymbols
        self.osymbols = osymbols if osymbols is not None else isymbols
        self._arcs: list[list[Arc]] = []
        self._finals: dict[int, float] = {}
        self.start = -1
        self._index = None
        self._groups = None

    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_arc(self, src: int, ilabel: int, olabel: int, weight: float, dst: int) -> None:
        if not (0 <= dst < len(self._arcs)):
            raise ValueError(f"arc destination {dst} is not a state")
        self._arcs[src].append(Arc(ilabel, olabel, float(weight), dst))
        self._index = self._groups = None

    def set_start(self, state: int) -> None:
        self.start = state

    def set_final(self, state: int, weight: float = ONE) -> None:
        if weight == ZERO:
            self._finals.pop(state, None)
        else:
            self._finals[state] = float(weight)

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    def states(self):
        return range(len(self._arcs))

    def arcs(self, state: int) -> list[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float:
        return self._finals.get(state, ZERO)

    @property
    def finals(self) -> dict[int, float]:
        return self._finals

    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def match(self, state: int, ilabel: int) -> list[Arc]:
        if self._index is None:
            self._index = [None] * len(self._arcs)
        idx = self._index[state]
        if idx is None:
            idx = {}
            for arc in self._arcs[state]:
                idx.setdefault(arc.ilabel, []).append(arc)
            self._index[state] = idx
        return idx.get(ilabel, ())

    def input_groups(self, state: int) -> dict:
        """ilabel -> (cheapest arc cost, arcs) for the arcs leaving ``state``."""
        if self._groups is None:
            self._groups = [None] * len(self._arcs)
        g = self._groups[state]
        if g is None:
            g = self._groups[state] = _group(self._arcs[state])
        return g

    def input_group(self, state: int, ilabel: int):
        """(cheapest cost, arcs) for arcs of ``state`` reading ``ilabel``, or None."""
        return self.input_groups(state).get(ilabel)

    def copy(self) -> "Wfst":
        out = Wfst(self.isymbols, self.osymbols)
        out._arcs = [list(a) for a in self._arcs]
        out._finals = dict(self._finals)
        out.start = self.start
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, Wfst) and self.start == other.start
                and self._arcs == other._arcs and self._finals == other._finals)

    # text format

    def write_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            order = [self.start] + [s for s in self.states() if s != self.start]
            for s in order:
                for a in self._arcs[s]:
                    f.write(f"{s}\t{a.nextstate}\t{a.ilabel}\t{a.olabel}\t{a.weight!r}\n")
                if s in self._finals:
                    f.write(f"{s}\t{self._finals[s]!r}\n")

    @classmethod
    def read_text(cls, path, isymbols=None, osymbols=None) -> "Wfst":
        fst = cls(isymbols, osymbols)
        rows = []
        with open(path, encoding="utf-8") as f:
            for n, line in enumerate(f, 1):
                parts = line.rstrip("\n").split("\t")
                if parts == [""]:
                    continue
                if len(parts) not in (2, 5):
                    raise ValueError(f"{path}:{n}: expected 2 or 5 tab-separated fields")
                try:
                    rows.append([int(p) for p in parts[:-1]] + [float(parts[-1])])
                except ValueError:
                    raise ValueError(f"{path}:{n}: non-numeric field") from None
        if not rows:
            return fst
        top = max(max(r[:2]) if len(r) == 5 else r[0] for r in rows)
        for _ in range(top + 1):
            fst.add_state()
        fst.set_start(rows[0][0])
        for r in rows:
            if len(r) == 5:
                fst.add_arc(r[0], r[2], r[3], r[4], r[1])
            else:
                fst.set_final(r[0], r[1])
        return fst


def _group(arcs) -> dict:
    groups: dict[int, list] = {}
    for arc in arcs:
        g = groups.get(arc.ilabel)
        if g is None:
            groups[arc.ilabel] = [arc.weight, [arc]]
        else:
            g[1].append(arc)
            if arc.weight < g[0]:
                g[0] = arc.weight
    return groups


def linear_fst(ilabels, olabels=None, weights=None, isymbols=None, osymbols=None) -> Wfst:
    """Chain transducer; ``olabels`` defaults to ``ilabels`` (an acceptor)."""
    olabels = ilabels if olabels is None else olabels
    weights = [0.0] * len(ilabels) if weights is None else weights
    fst = Wfst(isymbols, osymbols)
    s = fst.add_state()
    fst.set_start(s)
    for i, o, w in zip(ilabels, olabels, weights):
        t = fst.add_state()
        fst.add_arc(s, i, o, w, t)
        s = t
    fst.set_final(s)
    return fst


def negate_weights(fst: Wfst) -> Wfst:
    """Same topology and labels with every arc and final cost multiplied by -1."""
    out = Wfst(fst.isymbols, fst.osymbols)
    for s in fst.states():
        out.add_state()
    out.set_start(fst.start)
    for s in fst.states():
        for a in fst.arcs(s):
            if not math.isfinite(a.weight):
                raise ValueError(f"cannot negate infinite cost on arc from state {s}")
            out._arcs[s].append(Arc(a.ilabel, a.olabel, -a.weight, a.nextstate))
        w = fst.final(s)
        if w != ZERO:
            if not math.isfinite(w):
                raise ValueError(f"cannot negate infinite final cost at state {s}")
            out.set_final(s, -w)
    return out


# Composition. Both the static and the lazy version use the same two-state
# sequence filter: between two matched symbols, all epsilon moves of the left
# operand come before those of the right one. Filter 0 permits both kinds,
# filter 1 (entered by a right epsilon move) only right epsilon moves.

def compose_static(a: Wfst, b: Wfst) -> Wfst:
    """Eager composition of two concrete transducers."""
    _check_tables(a, b)
    out = Wfst(a.isymbols, b.osymbols)
    ids: dict[tuple, int] = {}
    labels: list[tuple] = []
    if a.start < 0 or b.start < 0:
        out.state_labels = labels
        return out

    def state(t):
        s = ids.get(t)
        if s is None:
            s = ids[t] = out.add_state()
            labels.append(t)
            queue.append(t)
        return s

    queue: deque = deque()
    out.set_start(state((a.start, b.start, 0)))
    b_index: dict[int, dict] = {}
    while queue:
        t = queue.popleft()
        s1, s2, f = t
        src = ids[t]
        idx = b_index.get(s2)
        if idx is None:
            idx = b_index[s2] = {}
            for arc in b.arcs(s2):
                idx.setdefault(arc.ilabel, []).append(arc)
        for x in a.arcs(s1):
            if x.olabel == EPS:
                if f == 0:
                    out.add_arc(src, x.ilabel, EPS, x.weight, state((x.nextstate, s2, 0)))
            else:
                for y in idx.get(x.olabel, ()):
                    out.add_arc(src, x.ilabel, y.olabel, x.weight + y.weight,
                                state((x.nextstate, y.nextstate, 0)))
        for y in idx.get(EPS, ()):
            out.add_arc(src, EPS, y.olabel, y.weight, state((s1, y.nextstate, 1)))
        w = a.final(s1) + b.final(s2)
        if w != ZERO:
            out.set_final(src, w)
    out.state_labels = labels
    return out


class LazyComposition:
    """On-demand composition: a pair state is expanded on first visit only.

    ``right`` may be a :class:`Wfst` or any on-demand provider with ``start``,
    ``final(state)`` and ``match(state, label)``; provider states must be
    hashable. The cache is owned by whoever drives the traversal.
    """

    def __init__(self, left, right):
        _check_tables(left, right)
        self.left = left
        self.right = right
        self.isymbols = getattr(left, "isymbols", None)
        self.osymbols = getattr(right, "osymbols", None)
        self._right_eps = getattr(right, "has_input_epsilons", True)
        self._ids: dict[tuple, int] = {}
        self.state_labels: list[tuple] = []
        self._arcs: list = []
        self._groups: dict[int, dict] = {}
        self._partial: dict[tuple, list | None] = {}
        self.start = self._state((left.start, right.start, 0))

    def _state(self, t) -> int:
        s = self._ids.get(t)
        if s is None:
            s = self._ids[t] = len(self.state_labels)
            self.state_labels.append(t)
            self._arcs.append(None)
        return s

    @property
    def num_discovered(self) -> int:
        return len(self.state_labels)

    @property
    def num_expanded(self) -> int:
        return sum(a is not None for a in self._arcs)

    def arcs(self, state: int) -> list[Arc]:
        arcs = self._arcs[state]
        if arcs is None:
            arcs = self._arcs[state] = self._expand(state)
        return arcs

    def _expand(self, state: int) -> list[Arc]:
        s1, s2, f = self.state_labels[state]
        out = []
        for x in self.left.arcs(s1):
            out.extend(self._compose_arc(x, s2, f))
        if self._right_eps:
            for y in self.right.match(s2, EPS):
                out.append(Arc(EPS, y.olabel, y.weight, self._state((s1, y.nextstate, 1))))
        return out

    def _compose_arc(self, x: Arc, s2, f: int) -> list[Arc]:
        if x.olabel == EPS:
            if f == 0:
                return [Arc(x.ilabel, EPS, x.weight, self._state((x.nextstate, s2, 0)))]
            return []
        return [Arc(x.ilabel, y.olabel, x.weight + y.weight, self._state((x.nextstate, y.nextstate, 0)))
                for y in self.right.match(s2, x.olabel)]

    def input_group(self, state: int, ilabel: int):
        """(cheapest cost, arcs) for arcs reading ``ilabel``; composes only
        the left arcs with that input label."""
        key = (state, ilabel)
        g = self._partial.get(key, False)
        if g is not False:
            return g
        full = self._groups.get(state)
        if full is not None:
            g = full.get(ilabel)
        else:
            s1, s2, f = self.state_labels[state]
            if hasattr(self.left, "input_group"):
                lg = self.left.input_group(s1, ilabel)
                left_arcs = lg[1] if lg is not None else ()
            else:
                left_arcs = [a for a in self.left.arcs(s1) if a.ilabel == ilabel]
            arcs = [a for x in left_arcs for a in self._compose_arc(x, s2, f)]
            if ilabel == EPS and self._right_eps:
                arcs += [Arc(EPS, y.olabel, y.weight, self._state((s1, y.nextstate, 1)))
                         for y in self.right.match(s2, EPS)]
            g = [min(a.weight for a in arcs), arcs] if arcs else None
        self._partial[key] = g
        return g

    def final(self, state: int) -> float:
        s1, s2, _ = self.state_labels[state]
        w = self.left.final(s1)
        if w == ZERO:
            return ZERO
        return w + self.right.final(s2)

    def match(self, state: int, ilabel: int):
        return [a for a in self.arcs(state) if a.ilabel == ilabel]

    def input_groups(self, state: int) -> dict:
        g = self._groups.get(state)
        if g is None:
            g = self._groups[state] = _group(self.arcs(state))
        return g

    def expand_all(self) -> Wfst:
        """Expand every reachable state and return the result as a :class:`Wfst`."""
        seen = {self.start}
        queue = deque([self.start])
        while queue:
            s = queue.popleft()
            for a in self.arcs(s):
                if a.nextstate not in seen:
                    seen.add(a.nextstate)
                    queue.append(a.nextstate)
        out = Wfst(self.isymbols, self.osymbols)
        for _ in range(self.num_discovered):
            out.add_state()
        out.set_start(self.start)
        for s in range(self.num_discovered):
            for a in self.arcs(s):
                out._arcs[s].append(a)
            w = self.final(s)
            if w != ZERO:
                out.set_final(s, w)
        out.state_labels = list(self.state_labels)
        return out


def compose_lazy(a, b) -> LazyComposition:
    return LazyComposition(a, b)


def _materialize(fst):
    return fst.expand_all() if isinstance(fst, LazyComposition) else fst


def distance_to_final(fst: Wfst) -> list[float]:
    """Shortest cost from every state to a final state (Bellman-Ford style).

    Handles negative arc costs; raises on a reachable negative cycle.
    """
    n = fst.num_states
    rev: list[list[tuple]] = [[] for _ in range(n)]
    for s in range(n):
        for a in fst.arcs(s):
            rev[a.nextstate].append((s, a.weight))
    dist = [fst.final(s) for s in range(n)]
    queue = deque(s for s in range(n) if dist[s] != ZERO)
    inq = [d != ZERO for d in dist]
    relax = [0] * n
    while queue:
        t = queue.popleft()
        inq[t] = False
        for s, w in rev[t]:
            d = dist[t] + w
            if d < dist[s] - 1e-12 * max(1.0, abs(d)):
                dist[s] = d
                relax[s] += 1
                if relax[s] > n + 1:
                    raise ValueError("negative-cost cycle")
                if not inq[s]:
                    inq[s] = True
                    queue.append(s)
    return dist


def shortest_paths(fst, n: int = 1, max_pops: int = 1_000_000) -> list[tuple[tuple, float]]:
    """Up to ``n`` distinct output sequences with their exact best path costs.

    A* search with the exact distance-to-final heuristic, so complete paths
    pop in nondecreasing cost order even with negative arc costs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fst = _materialize(fst)
    if fst.start < 0:
        raise NoPathError("transducer has no start state")
    h = distance_to_final(fst)
    if h[fst.start] == ZERO:
        raise NoPathError("no accepting path")
    tick = itertools.count()
    heap = [(h[fst.start], next(tick), fst.start, 0.0, (), False)]
    results, seen = [], set()
    pops = 0
    while heap and len(results) < n and pops < max_pops:
        f, _, s, g, out, done = heapq.heappop(heap)
        pops += 1
        if done:
            if out not in seen:
                seen.add(out)
                results.append((out, g))
            continue
        w = fst.final(s)
        if w != ZERO:
            heapq.heappush(heap, (g + w, next(tick), s, g + w, out, True))
        for a in fst.arcs(s):
            ht = h[a.nextstate]
            if ht == ZERO:
                continue
            o = out + (a.olabel,) if a.olabel != EPS else out
            gg = g + a.weight
            heapq.heappush(heap, (gg + ht, next(tick), a.nextstate, gg, o, False))
    return results
