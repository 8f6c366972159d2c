"""Second-pass n-best rescoring at character level.

The second pass interpolates a nationwide character LM, a pluggable rescorer
and the province's character Geo-LM, then mixes the result with the
first-pass probability character by character. A word's first-pass
probability is carried by its first character; continuation characters have
first-pass probability 1, and the end-of-sentence token is scored by both
passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence, runtime_checkable

from .decoder import Hypothesis, NBestList
from .ngram import EOS, NGramModel

LN10 = math.log(10.0)


@dataclass(frozen=True)
class InterpolationConfig:
    """Interpolation weights for both passes.

    ``lam`` weighs the baseline against the Geo-LM in the first pass;
    ``alpha``/``beta`` weigh the baseline and the rescorer in the second pass
    (the Geo-LM gets the remainder); ``gamma`` weighs pass one against pass two.
    """

    lam: float = 0.5
    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("lam", "alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or math.isnan(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError(f"alpha + beta must not exceed 1, got {self.alpha} + {self.beta}")

    @property
    def geo_weight(self) -> float:
        return max(0.0, 1.0 - self.alpha - self.beta)

    def without_geo(self) -> "InterpolationConfig":
        """Same config with the second-pass Geo-LM weight moved proportionally
        onto the baseline and the rescorer."""
        s = self.alpha + self.beta
        if s == 0:
            return replace(self, alpha=1.0, beta=0.0)
        alpha = self.alpha / s
        return replace(self, alpha=alpha, beta=1.0 - alpha)


@runtime_checkable
class Rescorer(Protocol):
    """Character probability provider for the second pass.

    ``score_sequence`` returns one probability per character followed by the
    end-of-sentence probability, so implementations can batch internally.
    ``share_safe`` tells callers whether one instance may serve several
    workers at once.
    """

    share_safe: bool

    def prob(self, char: str, history: Sequence[str]) -> float: ...

    def score_sequence(self, chars: Sequence[str]) -> list[float]: ...


class NGramRescorer:
    """Rescorer backed by a character n-gram model."""

    share_safe = True

    def __init__(self, model: NGramModel):
        self.model = model

    def prob(self, char: str, history: Sequence[str]) -> float:
        return 10.0 ** self.model.logprob(char, history)

    def score_sequence(self, chars: Sequence[str]) -> list[float]:
        return [10.0 ** lp for lp in _sequence_logprobs(self.model, chars)]


class UniformRescorer:
    """P_r = 1/|V| for every character; a neutral plug for the rescorer slot."""

    share_safe = True

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValueError("vocabulary size must be positive")
        self.p = 1.0 / vocab_size

    def prob(self, char: str, history: Sequence[str]) -> float:
        return self.p

    def score_sequence(self, chars: Sequence[str]) -> list[float]:
        return [self.p] * (len(chars) + 1)


def default_rescorer(model: NGramModel) -> NGramRescorer:
    return NGramRescorer(model)


def _sequence_logprobs(model: NGramModel, chars: Sequence[str]) -> list[float]:
    """log10 P of each character and of </s>, walking context states."""
    v = model.vocab
    state = model.context_state((v.bos,))
    out = []
    for c in list(chars) + [EOS]:
        w = v.id(c)
        out.append(model.logprob_ids(w, state))
        state = model.next_state(state, w)
    return out


def second_pass_prob(char: str, history: Sequence[str], base: NGramModel, geo: NGramModel | None,
                     rescorer: Rescorer, cfg: InterpolationConfig) -> float:
    """alpha * P_b + beta * P_r + (1 - alpha - beta) * P_l for one character."""
    pb = 10.0 ** base.logprob(char, history)
    pr = rescorer.prob(char, history) if cfg.beta > 0 else 0.0
    pl = 10.0 ** geo.logprob(char, history) if geo is not None and cfg.geo_weight > 0 else 0.0
    return _mix3(pb, pr, pl, cfg)


def _mix3(pb: float, pr: float, pl: float, cfg: InterpolationConfig) -> float:
    if cfg.alpha == 1.0:
        return pb
    return cfg.alpha * pb + cfg.beta * pr + cfg.geo_weight * pl


def second_pass_probs(chars: Sequence[str], base: NGramModel, geo: NGramModel | None,
                      rescorer: Rescorer, cfg: InterpolationConfig) -> list[float]:
    """Per-character second-pass probabilities plus the </s> probability."""
    if geo is None and cfg.geo_weight > 0:
        raise ValueError("config gives the Geo-LM weight but no Geo-LM was supplied")
    pb = [10.0 ** lp for lp in _sequence_logprobs(base, chars)]
    n = len(pb)
    pr = rescorer.score_sequence(chars) if cfg.beta > 0 else [0.0] * n
    pl = [10.0 ** lp for lp in _sequence_logprobs(geo, chars)] if cfg.geo_weight > 0 else [0.0] * n
    if len(pr) != n:
        raise ValueError(f"rescorer returned {len(pr)} probabilities for {n} tokens")
    return [_mix3(b, r, l, cfg) for b, r, l in zip(pb, pr, pl)]


def first_pass_char_costs(words: Sequence[str], word_costs: Sequence[float]) -> list[float]:
    """Spread per-word first-pass costs (with the </s> cost last) over
    characters: each word's cost on its first character, 0 on the rest."""
    if len(word_costs) != len(words) + 1:
        raise ValueError(f"{len(word_costs)} first-pass costs for {len(words)} words (+ </s>)")
    out = []
    for w, c in zip(words, word_costs):
        out.append(c)
        out.extend([0.0] * (len(w) - 1))
    out.append(word_costs[-1])
    return out


def _mix_cost(c1: float, p2: float, gamma: float) -> float:
    """-ln(gamma * exp(-c1) + (1 - gamma) * p2), exact at the boundaries."""
    if gamma == 1.0:
        return c1
    if gamma == 0.0:
        return -math.log(p2)
    a = math.log(gamma) - c1
    if p2 <= 0.0:
        return -a
    return -_logaddexp(a, math.log1p(-gamma) + math.log(p2))


def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


@dataclass
class RescoredHypothesis:
    hypothesis: Hypothesis
    first_cost: float
    second_cost: float
    combined: float
    first_rank: int = 0

    @property
    def words(self) -> tuple:
        return self.hypothesis.words


def combine_passes(hyp: Hypothesis, p2: Sequence[float], cfg: InterpolationConfig,
                   lm_scale: float = 1.0, first_rank: int = 0) -> RescoredHypothesis:
    """Mix first- and second-pass probabilities per character.

    ``p2`` holds second-pass probabilities for every character and </s>. The
    combined score is the acoustic cost plus the scaled sum of mixed costs.
    """
    c1 = first_pass_char_costs(hyp.words, hyp.word_lm_costs)
    if len(p2) != len(c1):
        raise ValueError(f"second pass has {len(p2)} tokens, first pass {len(c1)}")
    mixed = [_mix_cost(a, b, cfg.gamma) for a, b in zip(c1, p2)]
    first = math.fsum(c1)
    second = math.fsum(-math.log(p) if p > 0 else math.inf for p in p2)
    combined = hyp.acoustic + lm_scale * math.fsum(mixed)
    return RescoredHypothesis(hyp, first, second, combined, first_rank)


def rescore_nbest(nbest: NBestList, base: NGramModel, geo: NGramModel | None, rescorer: Rescorer,
                  cfg: InterpolationConfig, lm_scale: float = 1.0) -> list[RescoredHypothesis]:
    """Rescore and re-rank one n-best list; ties keep first-pass order."""
    out = []
    for rank, h in enumerate(nbest.hypotheses, 1):
        chars = list("".join(h.words))
        p2 = second_pass_probs(chars, base, geo, rescorer, cfg) if cfg.gamma < 1.0 \
            else [1.0] * (len(chars) + 1)
        out.append(combine_passes(h, p2, cfg, lm_scale, rank))
    out.sort(key=lambda r: (r.combined, r.first_rank))
    return out


RESCORED_HEADER = "utt_id\trank\tprovince\tcombined\trank_delta\tacoustic\tfirst_lm\tsecond_lm\twords"


def write_rescored(path, results) -> None:
    """``results``: iterable of (NBestList, rescored list) pairs."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(RESCORED_HEADER + "\n")
        for nb, rescored in results:
            prov = "" if nb.province is None else str(nb.province)
            for rank, r in enumerate(rescored, 1):
                f.write(f"{nb.utt_id}\t{rank}\t{prov}\t{r.combined!r}\t{r.first_rank - rank}\t"
                        f"{r.hypothesis.acoustic!r}\t{r.first_cost!r}\t{r.second_cost!r}\t"
                        f"{r.hypothesis.text}\n")


def read_rescored_best(path) -> dict[str, tuple]:
    """utt_id -> word tuple of the top-ranked rescored hypothesis."""
    best = {}
    with open(path, encoding="utf-8") as f:
        if f.readline().rstrip("\n") != RESCORED_HEADER:
            raise ValueError(f"{path}: not a rescored n-best file")
        for n, line in enumerate(f, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 9:
                raise ValueError(f"{path}:{n}: expected 9 columns")
            if parts[1] == "1":
                best[parts[0]] = tuple(parts[8].split())
    return best
