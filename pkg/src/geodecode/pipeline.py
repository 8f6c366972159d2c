"""In-memory end-to-end benchmark: synthetic corpus, LMs, graphs, two-pass
decoding and scoring. The command-line driver and the experiment tests both
build on it."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import amsim
from .decoder import DEFAULT_BEAM, DEFAULT_NBEST, DEFAULT_UNIT_BEAM, EmptyBeamError, NBestList, decode
from .evalkit import CerReport
from .georegistry import GeoLmStore, ProvinceTable, default_table
from .graph import assemble_first_pass, build_lexicon_fst, difference_grammar, ngram_to_fst
from .ngram import NGramModel, make_bigram_subset, train
from .rescore import InterpolationConfig, default_rescorer, rescore_nbest
from .wfst import compose_static

logger = logging.getLogger(__name__)

BASELINE_CUTOFFS = (0, 3, 5, 10, 15)
GEO_CUTOFFS = (0, 2, 2, 2, 2)
# ten test provinces, one per dialect region
TEST_PROVINCES = ("Jiangsu", "Sichuan", "Shandong", "Liaoning", "Guangdong",
                  "Shaanxi", "Hubei", "Fujian", "Hebei", "Xinjiang")


@dataclass
class BenchmarkConfig:
    test_provinces: tuple = TEST_PROVINCES
    test_size: int = 600
    other_size: int = 60
    homophone_rate: float = 0.1
    tail_exponent: float = 1.0
    corpus_seed: int = 1
    order: int = 5
    baseline_cutoffs: tuple = BASELINE_CUTOFFS
    geo_cutoffs: tuple = GEO_CUTOFFS
    confusion_seed: int = 3
    rescorer_cutoffs: tuple = GEO_CUTOFFS
    extra: dict = field(default_factory=dict)


class Benchmark:
    """Everything needed to decode synthetic POI queries for every province.

    Geo-LMs (word and character level) are trained for every province; the
    fallback id 0 maps to the nationwide models.
    """

    def __init__(self, cfg: BenchmarkConfig | None = None, table: ProvinceTable | None = None):
        self.cfg = cfg = cfg or BenchmarkConfig()
        self.table = table or default_table()
        tests = list(cfg.test_provinces)
        others = [p.name for p in self.table.provinces if p.name not in tests]
        self.provinces = tests + others
        sizes = [cfg.test_size] * len(tests) + [cfg.other_size] * len(others)
        self.corpus = amsim.generate_corpus(self.provinces, sizes, cfg.homophone_rate,
                                            cfg.tail_exponent, seed=cfg.corpus_seed)
        sents = self.corpus.sentences()
        chars = self.corpus.char_sentences()
        self.baseline = train(sents, cfg.order, cfg.baseline_cutoffs)
        self.baseline_char = train(chars, cfg.order, cfg.baseline_cutoffs)
        self.rescorer = default_rescorer(train(chars, cfg.order, cfg.rescorer_cutoffs))
        self.store = GeoLmStore()
        self.store.register(self.table.fallback.id, self.baseline, self.baseline_char)
        for name in self.provinces:
            pid = self.table.by_name(name).id
            self.store.register(pid, train(self.corpus.sentences([name]), cfg.order, cfg.geo_cutoffs),
                                train(self.corpus.char_sentences([name]), cfg.order, cfg.geo_cutoffs))
        self.bigram = make_bigram_subset(self.baseline)
        self.units, self.words = self.corpus.lexicon.symbol_tables()
        self.lexicon_fst = build_lexicon_fst(self.corpus.lexicon, self.units, self.words)
        self.g_bi = ngram_to_fst(self.bigram, self.words)
        self.static = compose_static(self.lexicon_fst, self.g_bi)
        self.confusion = amsim.ConfusionModel(self.units, seed=cfg.confusion_seed)
        self._graphs: dict = {}

    def sample(self, n: int, seed: int = 5) -> list:
        return amsim.sample_utterances(self.corpus, n, self.cfg.test_provinces, seed=seed, table=self.table)

    def emissions(self, utt, level: str = "slight", seed: int = 0, temperature: float = 1.0):
        _, region = self.table.resolve(utt.lat, utt.lon)
        return amsim.synthesize_emissions(self.corpus.pronounce(utt.reference), self.confusion,
                                          region, level, temperature, seed=seed)

    def geo_models(self, pid: int) -> tuple[NGramModel | None, NGramModel | None]:
        if pid == self.table.fallback.id or pid not in self.store:
            return None, None
        return self.store.select(pid, "word"), self.store.select(pid, "char")

    def graph(self, pid: int, lam: float):
        key = (pid, lam)
        g = self._graphs.get(key)
        if g is None:
            geo = self.geo_models(pid)[0]
            g = self._graphs[key] = assemble_first_pass(
                self.lexicon_fst, self.g_bi,
                difference_grammar(self.baseline, geo, self.bigram, self.words, lam), static=self.static)
        return g

    def decode(self, utts, level: str = "slight", lam: float = 0.5, beam: float = DEFAULT_BEAM,
               nbest: int = DEFAULT_NBEST, unit_beam: float = DEFAULT_UNIT_BEAM, seed: int = 0) -> list:
        """First-pass n-best lists in input order; None where decoding failed."""
        out = []
        for i, u in enumerate(utts):
            pid, _ = self.table.resolve(u.lat, u.lon)
            em = self.emissions(u, level, seed=seed + i)
            try:
                nb = decode(self.graph(pid, lam), em, beam=beam, nbest=nbest, unit_beam=unit_beam,
                            utt_id=u.utt_id, words=self.words)
            except EmptyBeamError as e:
                logger.warning("%s: %s", u.utt_id, e)
                nb = None
            else:
                nb.province = pid
            out.append(nb)
        return out

    def rescore(self, nbests, cfg: InterpolationConfig, use_geo: bool = True) -> list:
        """Top hypothesis words after second-pass rescoring of each list."""
        if not use_geo:
            cfg = cfg.without_geo()
        out = []
        for nb in nbests:
            if nb is None or not nb.hypotheses:
                out.append(())
                continue
            geo = self.geo_models(nb.province)[1] if use_geo else None
            if geo is None and cfg.geo_weight > 0:
                geo = self.baseline_char
            ranked = rescore_nbest(nb, self.baseline_char, geo, self.rescorer, cfg)
            out.append(ranked[0].words)
        return out

    def homophone_accuracy(self, utts, hyps) -> dict[str, tuple[int, int]]:
        """province -> (correct, total) over utterances whose reference holds a
        homophone word; correct when every such word is recognized."""
        homs = self.corpus.homophone_words()
        out: dict = {}
        for u, h in zip(utts, hyps):
            targets = [w for w in u.reference if w in homs]
            if not targets:
                continue
            c, t = out.get(u.province, (0, 0))
            ok = all(w in h for w in targets)
            out[u.province] = (c + ok, t + 1)
        return out


def best_words(nbests) -> list[tuple]:
    return [nb.best.words if nb is not None and nb.hypotheses else () for nb in nbests]


def cer_report(utts, hyps, level: str | None = None, table: ProvinceTable | None = None) -> CerReport:
    table = table or default_table()
    rep = CerReport()
    for u, h in zip(utts, hyps):
        _, region = table.resolve(u.lat, u.lon)
        groups = {"province": u.province, "region": region}
        if level is not None:
            groups["accent"] = level
        rep.add("".join(u.reference), "".join(h), **groups)
    return rep
