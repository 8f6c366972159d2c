"""Synthetic acoustic front end and synthetic POI corpora.

Units are syllables; every written character has exactly one syllable and
several characters share each syllable, so two words are homophones when
their syllable strings coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import EmissionSequence
from .graph import Lexicon
from .wfst import SymbolTable

INITIALS = ["b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x",
            "zh", "ch", "sh", "r", "z", "c", "s", "y", "w"]
FINALS = ["a", "o", "e", "i", "u", "ai", "ei", "ao", "ou", "an", "en", "ang", "eng", "ong", "ian", "uan"]
ACCENT_LEVELS = {"none": 0.0, "slight": 0.08, "medium": 0.16, "serious": 0.3}
NUM_REGIONS = 10
CJK_BASE = 0x4E00


class ConfusionModel:
    """Per-dialect-region unit confusion.

    Each region confuses every unit with a small region-specific set of
    partner units. The accent level sets the off-diagonal mass, split evenly
    over the partners; level "none" is the identity.
    """

    def __init__(self, units: SymbolTable, partners: int = 2, seed: int = 0,
                 levels: dict | None = None):
        self.units = units
        self.levels = dict(ACCENT_LEVELS if levels is None else levels)
        n = len(units)
        rng = np.random.default_rng(seed)
        self.partners = {}
        for region in range(1, NUM_REGIONS + 1):
            table = np.zeros((n, partners), dtype=int)
            for u in range(1, n):
                others = rng.choice(np.arange(1, n - 1), size=partners, replace=False)
                table[u] = others + (others >= u)
            self.partners[region] = table

    def off_diagonal(self, level: str) -> float:
        try:
            return self.levels[level]
        except KeyError:
            raise ValueError(f"unknown accent level {level!r}") from None

    def row(self, region: int, level: str, unit: int) -> np.ndarray:
        m = self.off_diagonal(level)
        out = np.zeros(len(self.units))
        out[unit] = 1.0 - m
        for p in self.partners[region][unit]:
            out[p] += m / self.partners[region].shape[1]
        return out

    def matrix(self, region: int, level: str) -> np.ndarray:
        n = len(self.units)
        mat = np.zeros((n, n))
        mat[0, 0] = 1.0
        for u in range(1, n):
            mat[u] = self.row(region, level, u)
        return mat


def synthesize_emissions(units, confusion: ConfusionModel, region: int, level: str = "none",
                         temperature: float = 1.0, seed: int = 0, noise: float = 0.5,
                         floor: float = 1e-4) -> EmissionSequence:
    """One frame per unit of the transcript.

    The spoken unit is drawn from the confusion row of the true unit; the
    frame is the tempered mixture of that spoken unit and the confusion row,
    perturbed by Gaussian noise. Random draws do not depend on the accent
    level, so errors at a lower level are a subset of those at a higher one.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    table = confusion.units
    ids = []
    for u in units:
        if isinstance(u, str):
            if u not in table:
                raise ValueError(f"unknown unit {u!r}")
            ids.append(table.find(u))
        else:
            if not 0 < u < len(table):
                raise ValueError(f"unknown unit id {u}")
            ids.append(int(u))
    rng = np.random.default_rng(seed)
    n = len(table)
    m = confusion.off_diagonal(level)
    out = np.full((len(ids), n), -np.inf)
    for t, u in enumerate(ids):
        u1, u2 = rng.random(2)
        gauss = rng.standard_normal(n - 1)
        row = confusion.row(region, level, u)
        spoken = u
        if u1 >= 1.0 - m:
            partners = confusion.partners[region][u]
            spoken = int(partners[min(int(u2 * len(partners)), len(partners) - 1)])
        q = 0.4 * row
        q[spoken] += 0.6
        logits = np.log(np.maximum(q[1:], floor)) / temperature + noise * gauss
        logits -= logits.max()
        out[t, 1:] = logits - math.log(np.exp(logits).sum())
    return EmissionSequence(out, table)


@dataclass
class Utterance:
    utt_id: str
    province: str
    lat: float
    lon: float
    reference: tuple

    @property
    def text(self) -> str:
        return " ".join(self.reference)


@dataclass
class SyntheticCorpus:
    units: list
    char_unit: dict
    lexicon: Lexicon
    names: dict
    homophone_groups: list
    word_owner: dict
    tail_exponent: float
    seed: int
    category_words: list = field(default_factory=list)

    def unit_table(self) -> SymbolTable:
        return SymbolTable(self.units)

    def pronounce(self, words) -> list[str]:
        return [u for w in words for u in self.lexicon.entries[w][0]]

    def sentences(self, provinces=None) -> list[list[str]]:
        """Word-level training sentences, each name repeated by its frequency."""
        out = []
        for prov in (provinces if provinces is not None else self.names):
            for name, freq in self.names[prov]:
                out.extend([list(name)] * freq)
        return out

    def char_sentences(self, provinces=None) -> list[list[str]]:
        return [list("".join(s)) for s in self.sentences(provinces)]

    def homophone_words(self) -> set:
        return {w for g in self.homophone_groups for w in g}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for prov, names in self.names.items():
                for name, freq in names:
                    f.write(f"{prov}\t{' '.join(name)}\t{freq}\n")


def read_corpus_file(path) -> dict:
    names: dict = {}
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                prov, name, freq = line.rstrip("\n").split("\t")
                names.setdefault(prov, []).append((tuple(name.split()), int(freq)))
            except ValueError:
                raise ValueError(f"{path}:{n}: expected 'province<TAB>poi_name<TAB>frequency'") from None
    return names


def zipf_frequencies(n: int, exponent: float, max_freq: int) -> list[int]:
    return [max(1, int(round(max_freq * r ** -exponent))) for r in range(1, n + 1)]


def generate_corpus(provinces, sizes, homophone_rate: float = 0.1, tail_exponent: float = 1.0,
                    seed: int = 0, n_units: int = 120, chars_per_unit: int = 4,
                    n_categories: int = 24, words_per_name: float = 3.0,
                    max_freq: int = 200) -> SyntheticCorpus:
    """Per-province POI names with power-law frequencies and cross-province
    homophone pairs.

    A name is one or two province-local words followed by a shared category
    word. With probability ``homophone_rate`` a local word gets a twin: a word
    spelled differently but pronounced identically, owned by another province.
    """
    provinces = list(provinces)
    sizes = [int(s) for s in sizes]
    if len(provinces) != len(sizes):
        raise ValueError("one size per province expected")
    if any(s < 1 for s in sizes):
        raise ValueError("sizes must be >= 1")
    if not 0.0 <= homophone_rate <= 1.0:
        raise ValueError("homophone rate must lie in [0, 1]")
    if not tail_exponent > 0:
        raise ValueError("tail exponent must be positive")
    rng = np.random.default_rng(seed)

    syllables = [i + f for i in INITIALS for f in FINALS]
    rng.shuffle(syllables)
    units = sorted(syllables[:n_units])
    unit_chars = {u: [chr(CJK_BASE + k * chars_per_unit + j) for j in range(chars_per_unit)]
                  for k, u in enumerate(units)}
    char_unit = {c: u for u, cs in unit_chars.items() for c in cs}

    used_prons: set = set()
    used_spell: set = set()
    lexicon = Lexicon()

    def new_pron(length):
        while True:
            pron = tuple(units[i] for i in rng.integers(0, len(units), size=length))
            if pron not in used_prons:
                used_prons.add(pron)
                return pron

    def spell(pron, avoid=()):
        while True:
            word = "".join(unit_chars[u][rng.integers(chars_per_unit)] for u in pron)
            if word not in used_spell and word not in avoid:
                used_spell.add(word)
                return word

    categories = []
    for _ in range(n_categories):
        pron = new_pron(int(rng.integers(1, 3)))
        w = spell(pron)
        lexicon.add(w, pron)
        categories.append(w)

    local: dict = {}
    owner: dict = {}
    for prov, size in zip(provinces, sizes):
        n_local = max(2, int(math.ceil(size / words_per_name)))
        ws = []
        for _ in range(n_local):
            pron = new_pron(int(rng.integers(2, 4)))
            w = spell(pron)
            lexicon.add(w, pron)
            owner[w] = prov
            ws.append(w)
        local[prov] = ws

    groups = []
    if homophone_rate > 0 and len(provinces) > 1:
        for prov in provinces:
            for w in list(local[prov]):
                if rng.random() >= homophone_rate:
                    continue
                others = [p for p in provinces if p != prov]
                dest = others[int(rng.integers(len(others)))]
                pron = lexicon.entries[w][0]
                twin = spell(pron, avoid={w})
                lexicon.add(twin, pron)
                owner[twin] = dest
                local[dest].append(twin)
                groups.append([w, twin])

    names = {}
    for prov, size in zip(provinces, sizes):
        ws = local[prov]
        seen = set()
        lst = []
        attempts = 0
        while len(lst) < size and attempts < 50 * size:
            attempts += 1
            k = 1 if rng.random() < 0.5 else 2
            picked = tuple(ws[i] for i in rng.choice(len(ws), size=min(k, len(ws)), replace=False))
            name = picked + (categories[int(rng.integers(len(categories)))],)
            if name not in seen:
                seen.add(name)
                lst.append(name)
        freqs = zipf_frequencies(len(lst), tail_exponent, max_freq)
        names[prov] = list(zip(lst, freqs))
    return SyntheticCorpus(units, char_unit, lexicon, names, groups, owner,
                           tail_exponent, seed, categories)


def sample_utterances(corpus: SyntheticCorpus, n: int, provinces, seed: int = 0,
                      table=None, prefix: str = "utt", jitter: float = 0.3) -> list[Utterance]:
    """Test queries drawn by name frequency, spread evenly over ``provinces``,
    with coordinates inside the province polygon."""
    from .georegistry import default_table

    table = table or default_table()
    rng = np.random.default_rng(seed)
    provinces = list(provinces)
    out = []
    for i in range(n):
        prov = provinces[i % len(provinces)]
        names = corpus.names[prov]
        p = np.array([f for _, f in names], dtype=float)
        name = names[int(rng.choice(len(names), p=p / p.sum()))][0]
        pinfo = table.by_name(prov)
        lat0, lon0 = pinfo.capital
        lat, lon = lat0, lon0
        for _ in range(20):
            cand = (lat0 + rng.uniform(-jitter, jitter), lon0 + rng.uniform(-jitter, jitter))
            if table.resolve(*cand)[0] == pinfo.id:
                lat, lon = cand
                break
        out.append(Utterance(f"{prefix}{i:05d}", prov, round(lat, 5), round(lon, 5), name))
    return out


def write_manifest(path, utts) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in utts:
            f.write(f"{u.utt_id}\t{u.province}\t{u.lat!r}\t{u.lon!r}\t{u.text}\n")


def read_manifest(path) -> list[Utterance]:
    out = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{n}: expected 5 tab-separated fields")
            uid, prov, lat, lon, ref = parts
            out.append(Utterance(uid, prov, float(lat), float(lon), tuple(ref.split())))
    return out
