"""Time-synchronous token-passing beam search producing n-best lists."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .wfst import EPS, ZERO, SymbolTable

DEFAULT_BEAM = 14.0
DEFAULT_NBEST = 20
DEFAULT_UNIT_BEAM = 5.0


class EmptyBeamError(RuntimeError):
    def __init__(self, frame: int):
        super().__init__(f"no token survived pruning at frame {frame}")
        self.frame = frame


@dataclass
class EmissionSequence:
    """Per-frame natural-log unit posteriors; column i is unit label i.

    Column 0 (epsilon) carries no mass.
    """

    logprobs: np.ndarray
    units: SymbolTable | None = None

    def __post_init__(self):
        self.logprobs = np.asarray(self.logprobs, dtype=float)
        if self.logprobs.ndim != 2:
            raise ValueError("emissions must be a (frames, units) matrix")
        if self.units is not None and self.logprobs.shape[1] != len(self.units):
            raise ValueError(f"{self.logprobs.shape[1]} emission columns for {len(self.units)} unit symbols")

    @property
    def num_frames(self) -> int:
        return self.logprobs.shape[0]

    @property
    def num_units(self) -> int:
        return self.logprobs.shape[1]

    def check_normalized(self, tol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(np.exp(self.logprobs).sum(axis=1) - 1.0) <= tol))


@dataclass
class Hypothesis:
    words: tuple
    total: float
    acoustic: float
    lm: float
    word_lm_costs: tuple = ()
    labels: tuple = ()

    @property
    def chars(self) -> str:
        return "".join(self.words)

    @property
    def text(self) -> str:
        return " ".join(self.words)


@dataclass
class NBestList:
    utt_id: str
    hypotheses: list = field(default_factory=list)
    province: int | None = None

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]


def score_breakdown(hyp: Hypothesis) -> tuple[float, float]:
    """(acoustic cost, first-pass LM cost) of a decoded hypothesis."""
    return hyp.acoustic, hyp.lm


# token: (total, acoustic, graph cost, labels, per-label costs, pending cost)

def _push(bucket: dict, tok) -> None:
    old = bucket.get(tok[3])
    if old is None or (tok[0], tok[1]) < (old[0], old[1]):
        bucket[tok[3]] = tok


def _advance(tok, arc, ac: float, scale: float):
    w = arc.weight
    if arc.olabel != EPS:
        return (tok[0] + ac + scale * w, tok[1] + ac, tok[2] + w,
                tok[3] + (arc.olabel,), tok[4] + (tok[5] + w,), 0.0)
    return (tok[0] + ac + scale * w, tok[1] + ac, tok[2] + w, tok[3], tok[4], tok[5] + w)


def _epsilon_closure(graph, active: dict, threshold: float, scale: float, limit: int) -> None:
    queue = list(active)
    inq = set(queue)
    relax = 0
    while queue:
        s = queue.pop()
        inq.discard(s)
        eps = _group_of(graph, s, EPS)
        if eps is None:
            continue
        toks = list(active[s].values())
        for arc in eps[1]:
            dst = active.setdefault(arc.nextstate, {})
            changed = False
            for tok in toks:
                nt = _advance(tok, arc, 0.0, scale)
                if nt[0] > threshold:
                    continue
                old = dst.get(nt[3])
                if old is None or nt[0] < old[0] - 1e-12 * max(1.0, abs(nt[0])):
                    dst[nt[3]] = nt
                    changed = True
            if not dst:
                del active[arc.nextstate]
            elif changed and arc.nextstate not in inq:
                relax += 1
                if relax > limit:
                    raise RuntimeError("epsilon closure does not converge (negative epsilon cycle?)")
                inq.add(arc.nextstate)
                queue.append(arc.nextstate)


def _group_of(graph, state, label):
    getter = getattr(graph, "input_group", None)
    if getter is not None:
        return getter(state, label)
    return graph.input_groups(state).get(label)


def _trim(active: dict, threshold: float, per_state: int) -> dict:
    out = {}
    for s, bucket in active.items():
        toks = [t for t in bucket.values() if t[0] <= threshold]
        if not toks:
            continue
        toks.sort(key=lambda t: (t[0], t[3]))
        out[s] = toks[:per_state]
    return out


def decode(graph, emissions: EmissionSequence, beam: float = DEFAULT_BEAM,
           nbest: int = DEFAULT_NBEST, lm_scale: float = 1.0, max_active: int | None = None,
           utt_id: str = "", words: SymbolTable | None = None,
           unit_beam: float = DEFAULT_UNIT_BEAM) -> NBestList:
    """Beam search over ``graph`` consuming one unit per frame.

    ``graph`` needs ``start``, ``final(s)`` and ``input_groups(s)`` (both
    :class:`~geodecode.wfst.Wfst` and :class:`~geodecode.wfst.LazyComposition`
    provide them). Up to ``nbest`` distinct word sequences are kept per state,
    which makes the n-best list exact when nothing is pruned.

    Units whose frame cost exceeds the frame's best unit cost by more than
    ``unit_beam`` are never expanded; pass ``math.inf`` for both beams to
    search exhaustively.
    """
    if emissions.num_frames == 0:
        raise ValueError("empty emission sequence")
    if not beam > 0:
        raise ValueError("beam must be positive")
    if nbest < 1:
        raise ValueError("nbest must be >= 1")
    if not unit_beam > 0:
        raise ValueError("unit_beam must be positive")
    if lm_scale < 0:
        raise ValueError("lm_scale must be >= 0")
    costs = -emissions.logprobs
    limit = 1_000_000

    active = {graph.start: {(): (0.0, 0.0, 0.0, (), (), 0.0)}}
    _epsilon_closure(graph, active, math.inf, lm_scale, limit)
    toks = _trim(active, math.inf, nbest)

    for t in range(emissions.num_frames):
        frame = costs[t]
        order = np.argsort(frame, kind="stable")
        sorted_units = [(float(frame[u]), int(u)) for u in order if u != EPS and np.isfinite(frame[u])]
        if sorted_units:
            cut = sorted_units[0][0] + unit_beam
            sorted_units = [x for x in sorted_units if x[0] <= cut]
        best = math.inf
        threshold = math.inf
        nxt: dict = {}
        for s in sorted(toks, key=lambda s: (toks[s][0][0], s)):
            bucket = toks[s]
            head = bucket[0][0]
            if head > threshold:
                continue
            for ac, unit in sorted_units:
                g = _group_of(graph, s, unit)
                if g is None or head + ac + lm_scale * g[0] > threshold:
                    continue
                for arc in g[1]:
                    base = ac + lm_scale * arc.weight
                    for tok in bucket:
                        c = tok[0] + base
                        if c > threshold:
                            break
                        dst = nxt.get(arc.nextstate)
                        if dst is None:
                            dst = nxt[arc.nextstate] = {}
                        _push(dst, _advance(tok, arc, ac, lm_scale))
                        if c < best:
                            best = c
                            threshold = best + beam
        if not nxt:
            raise EmptyBeamError(t)
        _epsilon_closure(graph, nxt, threshold, lm_scale, limit)
        toks = _trim(nxt, threshold, nbest)
        if max_active is not None:
            toks = _limit_active(toks, max_active)
        if not toks:
            raise EmptyBeamError(t)

    finished: dict = {}
    for s, bucket in toks.items():
        fw = graph.final(s)
        if fw == ZERO:
            continue
        for tok in bucket:
            end = (tok[0] + lm_scale * fw, tok[1], tok[2] + fw, tok[3], tok[4] + (tok[5] + fw,), 0.0)
            _push(finished, end)
    if not finished:
        raise EmptyBeamError(emissions.num_frames)

    hyps = []
    for tok in finished.values():
        lm = math.fsum(tok[4])
        total = tok[1] + lm_scale * lm
        labels = tok[3]
        wseq = tuple(words.symbol(l) for l in labels) if words is not None else labels
        hyps.append(Hypothesis(wseq, total, tok[1], lm, tok[4], labels))
    hyps.sort(key=lambda h: (h.total, h.labels))
    return NBestList(utt_id, hyps[:nbest])


def _limit_active(toks: dict, max_active: int) -> dict:
    n = sum(len(b) for b in toks.values())
    if n <= max_active:
        return toks
    costs = sorted(t[0] for b in toks.values() for t in b)
    cut = costs[max_active - 1]
    out = {}
    for s, b in toks.items():
        kept = [t for t in b if t[0] <= cut]
        if kept:
            out[s] = kept
    return out


# n-best text format: utt_id, rank, province, total, acoustic, lm, per-word
# costs (comma separated, </s> last), words (space separated)

NBEST_HEADER = "utt_id\trank\tprovince\ttotal\tacoustic\tlm\tword_costs\twords"


def write_nbest(path, lists) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(NBEST_HEADER + "\n")
        for nb in lists:
            for rank, h in enumerate(nb.hypotheses, 1):
                costs = ",".join(repr(c) for c in h.word_lm_costs)
                prov = "" if nb.province is None else str(nb.province)
                f.write(f"{nb.utt_id}\t{rank}\t{prov}\t{h.total!r}\t{h.acoustic!r}\t{h.lm!r}\t{costs}\t{h.text}\n")


def read_nbest(path) -> list[NBestList]:
    lists: dict[str, NBestList] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header.split("\t")[:8] != NBEST_HEADER.split("\t"):
            raise ValueError(f"{path}: not an n-best file")
        for n, line in enumerate(f, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 8:
                raise ValueError(f"{path}:{n}: expected at least 8 columns")
            utt, _, prov, total, ac, lm, costs, text = parts[:8]
            nb = lists.get(utt)
            if nb is None:
                nb = lists[utt] = NBestList(utt, [], int(prov) if prov else None)
            wc = tuple(float(c) for c in costs.split(",")) if costs else ()
            nb.hypotheses.append(Hypothesis(tuple(text.split()), float(total), float(ac), float(lm), wc))
    return list(lists.values())


def read_emissions(path) -> dict[str, EmissionSequence]:
    """Emission archive (``.npz``): one (frames, units) float matrix per utterance."""
    with np.load(path) as data:
        return {k: EmissionSequence(data[k]) for k in data.files}


def write_emissions(path, emissions: dict) -> None:
    np.savez_compressed(path, **{k: e.logprobs if isinstance(e, EmissionSequence) else e
                                 for k, e in emissions.items()})
