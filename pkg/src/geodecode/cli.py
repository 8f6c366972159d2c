"""Command-line driver for the geo-aware two-pass recognizer.

Every command reads one JSON config (``--config``) with ``--set key=value``
overrides using dotted keys, e.g. ``--set decode.beam=10``. Files live under
``work_dir`` unless a path is given explicitly.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, amsim
from .decoder import EmissionSequence, EmptyBeamError, decode, read_emissions, read_nbest, write_emissions, write_nbest
from .evalkit import CerReport
from .georegistry import GeoLmStore, ProvinceTable
from .graph import Lexicon, build_lexicon_fst, difference_grammar, ngram_to_fst
from .ngram import NGramModel, make_bigram_subset, train
from .rescore import InterpolationConfig, default_rescorer, rescore_nbest, read_rescored_best, write_rescored
from .wfst import LazyComposition, SymbolTable, Wfst, compose_static

logger = logging.getLogger("geodecode")

DEFAULT_CONFIG = {
    "work_dir": "work",
    "region_data": None,
    "corpus": {
        "provinces": None,
        "test_provinces": ["Jiangsu", "Sichuan", "Shandong", "Liaoning", "Guangdong",
                           "Shaanxi", "Hubei", "Fujian", "Hebei", "Xinjiang"],
        "test_size": 600,
        "other_size": 60,
        "homophone_rate": 0.1,
        "tail_exponent": 1.0,
        "seed": 1,
        "test_utterances": 2000,
        "test_seed": 5,
    },
    "acoustic": {"accent": "slight", "temperature": 1.0, "noise": 0.5, "confusion_seed": 3, "seed": 0},
    "lm": {"order": 5, "baseline_cutoffs": [0, 3, 5, 10, 15], "geo_cutoffs": [0, 2, 2, 2, 2],
           "rescorer_cutoffs": [0, 2, 2, 2, 2]},
    "interpolation": {"lam": 0.5, "alpha": 0.4, "beta": 0.3, "gamma": 0.5},
    "decode": {"beam": 14.0, "unit_beam": 5.0, "nbest": 20, "lm_scale": 1.0, "workers": 1},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, prefix: str = "") -> None:
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {prefix}{k}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, f"{prefix}{k}.")
        else:
            base[k] = v


def _override(cfg: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override {assignment!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key}")
    node[parts[-1]] = value


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the JSON file, then overrides; validated before return."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            _merge(cfg, json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    for o in overrides:
        _override(cfg, o)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        InterpolationConfig(**cfg["interpolation"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"interpolation: {e}") from None
    d = cfg["decode"]
    if not d["beam"] > 0 or not d["unit_beam"] > 0:
        raise ConfigError("decode.beam and decode.unit_beam must be positive")
    if int(d["nbest"]) < 1 or int(d["workers"]) < 1:
        raise ConfigError("decode.nbest and decode.workers must be >= 1")
    if d["lm_scale"] < 0:
        raise ConfigError("decode.lm_scale must be >= 0")
    lm = cfg["lm"]
    for key in ("baseline_cutoffs", "geo_cutoffs", "rescorer_cutoffs"):
        if len(lm[key]) != lm["order"] or any(c < 0 for c in lm[key]):
            raise ConfigError(f"lm.{key} needs {lm['order']} non-negative entries")
    a = cfg["acoustic"]
    if a["accent"] not in amsim.ACCENT_LEVELS:
        raise ConfigError(f"acoustic.accent must be one of {sorted(amsim.ACCENT_LEVELS)}")
    if not a["temperature"] > 0:
        raise ConfigError("acoustic.temperature must be positive")
    c = cfg["corpus"]
    if not 0 <= c["homophone_rate"] <= 1 or not c["tail_exponent"] > 0:
        raise ConfigError("corpus.homophone_rate must lie in [0, 1] and tail_exponent be positive")
    if cfg["region_data"] is not None and not Path(cfg["region_data"]).is_file():
        raise ConfigError(f"region_data {cfg['region_data']} does not exist")


class Paths:
    def __init__(self, cfg: dict):
        w = Path(cfg["work_dir"])
        self.work = w
        self.corpus = w / "corpus.tsv"
        self.lexicon = w / "lexicon.txt"
        self.manifest = w / "test.tsv"
        self.emissions = w / "emissions.npz"
        self.lm_dir = w / "lm"
        self.store = w / "lm" / "geo_lms.json"
        self.baseline_word = w / "lm" / "baseline.word.arpa"
        self.baseline_char = w / "lm" / "baseline.char.arpa"
        self.rescorer = w / "lm" / "rescorer.char.arpa"
        self.graph = w / "graph" / "LG.fst"
        self.units = w / "graph" / "units.txt"
        self.words = w / "graph" / "words.txt"


def _table(cfg) -> ProvinceTable:
    return ProvinceTable.load(cfg["region_data"])


def _need(*paths) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise FileNotFoundError("missing input(s): " + ", ".join(missing) + " (run the earlier pipeline steps)")


# commands

def cmd_gen_corpus(cfg: dict, args) -> int:
    paths = Paths(cfg)
    c, a = cfg["corpus"], cfg["acoustic"]
    table = _table(cfg)
    tests = list(c["test_provinces"])
    names = c["provinces"] or [p.name for p in table.provinces]
    for n in tests + names:
        table.by_name(n)
    provinces = tests + [n for n in names if n not in tests]
    sizes = [c["test_size"]] * len(tests) + [c["other_size"]] * (len(provinces) - len(tests))
    corpus = amsim.generate_corpus(provinces, sizes, c["homophone_rate"], c["tail_exponent"], seed=c["seed"])
    paths.work.mkdir(parents=True, exist_ok=True)
    corpus.write(paths.corpus)
    corpus.lexicon.write(paths.lexicon)
    utts = amsim.sample_utterances(corpus, c["test_utterances"], tests, seed=c["test_seed"], table=table)
    amsim.write_manifest(paths.manifest, utts)
    units, _ = corpus.lexicon.symbol_tables()
    conf = amsim.ConfusionModel(units, seed=a["confusion_seed"])
    ems = {}
    for i, u in enumerate(utts):
        _, region = table.resolve(u.lat, u.lon)
        ems[u.utt_id] = amsim.synthesize_emissions(corpus.pronounce(u.reference), conf, region, a["accent"],
                                                   a["temperature"], seed=a["seed"] + i, noise=a["noise"])
    write_emissions(paths.emissions, ems)
    print(f"{len(corpus.lexicon)} words, {sum(len(v) for v in corpus.names.values())} names, "
          f"{len(utts)} test utterances -> {paths.work}")
    return 0


def _sentences(names: dict, provinces, level: str) -> list:
    out = []
    for p in provinces:
        for name, freq in names[p]:
            toks = list(name) if level == "word" else list("".join(name))
            out.extend([toks] * freq)
    return out


def cmd_train_lm(cfg: dict, args) -> int:
    paths = Paths(cfg)
    table = _table(cfg)
    lm = cfg["lm"]
    scope = args.scope
    if scope not in ("baseline", "all"):
        try:
            pids = [int(scope)]
        except ValueError:
            raise ConfigError(f"scope must be 'baseline', 'all' or a province id, got {scope!r}") from None
        if pids[0] not in table or pids[0] == table.fallback.id:
            raise ConfigError(f"unknown province id {pids[0]}")
    _need(paths.corpus)
    names = amsim.read_corpus_file(paths.corpus)
    paths.lm_dir.mkdir(parents=True, exist_ok=True)
    store = GeoLmStore.from_manifest(paths.store) if paths.store.exists() else GeoLmStore()
    if scope in ("baseline", "all"):
        every = list(names)
        train(_sentences(names, every, "word"), lm["order"], lm["baseline_cutoffs"]).save(paths.baseline_word)
        chars = _sentences(names, every, "char")
        train(chars, lm["order"], lm["baseline_cutoffs"]).save(paths.baseline_char)
        train(chars, lm["order"], lm["rescorer_cutoffs"]).save(paths.rescorer)
        store.register(table.fallback.id, str(paths.baseline_word.resolve()), str(paths.baseline_char.resolve()))
        print(f"baseline LMs (cutoffs {'-'.join(map(str, lm['baseline_cutoffs']))}) -> {paths.lm_dir}")
    if scope != "baseline":
        pids = [table.by_name(n).id for n in names] if scope == "all" else pids
        for pid in pids:
            prov = table[pid].name
            if prov not in names:
                raise ConfigError(f"corpus has no names for province {pid} ({prov})")
            out = {}
            for level in ("word", "char"):
                path = paths.lm_dir / f"{pid}.{level}.arpa"
                train(_sentences(names, [prov], level), lm["order"], lm["geo_cutoffs"]).save(path)
                out[level] = str(path.resolve())
            store.register(pid, **out)
        print(f"{len(pids)} Geo-LM pair(s) (cutoffs {'-'.join(map(str, lm['geo_cutoffs']))}) -> {paths.lm_dir}")
    store.write_manifest(paths.store)
    return 0


def cmd_build_graph(cfg: dict, args) -> int:
    paths = Paths(cfg)
    _need(paths.lexicon, paths.baseline_word)
    lex = Lexicon.read(paths.lexicon)
    units, words = lex.symbol_tables()
    bigram = make_bigram_subset(NGramModel.load(paths.baseline_word))
    lg = compose_static(build_lexicon_fst(lex, units, words), ngram_to_fst(bigram, words))
    paths.graph.parent.mkdir(parents=True, exist_ok=True)
    lg.write_text(paths.graph)
    units.write_text(paths.units)
    words.write_text(paths.words)
    print(f"L o G_bi: {lg.num_states} states, {lg.num_arcs()} arcs -> {paths.graph}")
    return 0


class _DecodeContext:
    """Models and graphs for decoding, built once per process."""

    def __init__(self, cfg: dict):
        paths = Paths(cfg)
        _need(paths.graph, paths.units, paths.words, paths.baseline_word, paths.store)
        self.cfg = cfg
        self.table = _table(cfg)
        self.units = SymbolTable.read_text(paths.units)
        self.words = SymbolTable.read_text(paths.words)
        self.static = Wfst.read_text(paths.graph, self.units, self.words)
        self.baseline = NGramModel.load(paths.baseline_word)
        self.bigram = make_bigram_subset(self.baseline)
        self.store = GeoLmStore.from_manifest(paths.store)
        self.lam = cfg["interpolation"]["lam"]
        self.graphs: dict = {}

    def graph(self, pid: int):
        g = self.graphs.get(pid)
        if g is None:
            geo = None
            if pid != self.table.fallback.id and pid in self.store:
                geo = self.store.select(pid, "word")
            g = self.graphs[pid] = LazyComposition(
                self.static, difference_grammar(self.baseline, geo, self.bigram, self.words, self.lam))
        return g

    def run(self, utt, em):
        d = self.cfg["decode"]
        pid, _ = self.table.resolve(utt.lat, utt.lon)
        try:
            nb = decode(self.graph(pid), em, beam=d["beam"], nbest=int(d["nbest"]), lm_scale=d["lm_scale"],
                        unit_beam=d["unit_beam"], utt_id=utt.utt_id, words=self.words)
        except (EmptyBeamError, ValueError) as e:
            return None, f"{type(e).__name__}: {e}"
        nb.province = pid
        return nb, None


_worker_ctx = None


def _worker_init(cfg):
    global _worker_ctx
    _worker_ctx = _DecodeContext(cfg)


def _worker_run(job):
    utt, logprobs = job
    return _worker_ctx.run(utt, EmissionSequence(logprobs))


def cmd_decode(cfg: dict, args) -> int:
    paths = Paths(cfg)
    manifest = Path(args.manifest or paths.manifest)
    em_path = Path(args.emissions or paths.emissions)
    _need(manifest, em_path)
    utts = amsim.read_manifest(manifest)
    ems = read_emissions(em_path) if utts else {}
    missing = [u.utt_id for u in utts if u.utt_id not in ems]
    if missing:
        raise ConfigError(f"no emissions for utterance(s): {', '.join(missing[:10])}")
    jobs = [(u, ems[u.utt_id].logprobs) for u in utts]
    workers = int(cfg["decode"]["workers"])
    if not jobs:
        results = []
    elif workers == 1:
        _worker_init(cfg)
        results = [_worker_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(cfg,)) as pool:
            results = list(pool.map(_worker_run, jobs, chunksize=16))
    out = Path(args.out or paths.work / "nbest.tsv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_nbest(out, [nb for nb, _ in results if nb is not None])
    failures = [(u.utt_id, err) for u, (_, err) in zip(utts, results) if err is not None]
    for uid, err in failures:
        print(f"decode failed for {uid}: {err}", file=sys.stderr)
    if failures:
        with open(out.with_suffix(".failures.tsv"), "w", encoding="utf-8") as f:
            for uid, err in failures:
                f.write(f"{uid}\t{err}\n")
    print(f"{len(utts) - len(failures)}/{len(utts)} utterances decoded -> {out}")
    return 0


def cmd_rescore(cfg: dict, args) -> int:
    paths = Paths(cfg)
    nb_path = Path(args.nbest or paths.work / "nbest.tsv")
    _need(nb_path, paths.baseline_char, paths.rescorer, paths.store)
    icfg = InterpolationConfig(**cfg["interpolation"])
    if args.no_geo:
        icfg = icfg.without_geo()
    base = NGramModel.load(paths.baseline_char)
    rescorer = default_rescorer(NGramModel.load(paths.rescorer))
    store = GeoLmStore.from_manifest(paths.store)
    results = []
    for nb in read_nbest(nb_path):
        geo = None
        if icfg.geo_weight > 0:
            pid = nb.province if nb.province is not None and nb.province in store else 0
            geo = store.select(pid, "char") if pid in store else base
        results.append((nb, rescore_nbest(nb, base, geo, rescorer, icfg, cfg["decode"]["lm_scale"])))
    out = Path(args.out or paths.work / ("rescored.l2.tsv" if args.no_geo else "rescored.tsv"))
    write_rescored(out, results)
    print(f"{len(results)} n-best lists rescored -> {out}")
    return 0


def _read_hyps(path) -> dict:
    with open(path, encoding="utf-8") as f:
        header = f.readline()
    if header.startswith("utt_id\trank\tprovince\tcombined"):
        return read_rescored_best(path)
    return {nb.utt_id: nb.best.words for nb in read_nbest(path) if nb.hypotheses}


def _report(utts, hyps: dict, table, accent, missing: str) -> CerReport:
    rep = CerReport()
    for u in utts:
        if u.utt_id not in hyps and missing == "error":
            continue
        _, region = table.resolve(u.lat, u.lon)
        groups = {"province": u.province, "region": region}
        if accent:
            groups["accent"] = accent
        rep.add("".join(u.reference), "".join(hyps.get(u.utt_id, ())), **groups)
    return rep


def cmd_eval(cfg: dict, args) -> int:
    paths = Paths(cfg)
    ref = Path(args.ref or paths.manifest)
    _need(ref, args.hyp, *([args.baseline] if args.baseline else []))
    utts = amsim.read_manifest(ref)
    table = _table(cfg)
    ids = {u.utt_id for u in utts}
    systems = [("system", args.hyp)] + ([("baseline", args.baseline)] if args.baseline else [])
    reports = {}
    for name, path in systems:
        hyps = _read_hyps(path)
        extra = sorted(set(hyps) - ids)
        lacking = sorted(ids - set(hyps))
        if extra or (lacking and args.missing == "error"):
            raise ConfigError(f"{path}: utterance ids do not match the reference; "
                              f"unknown: {extra[:10]}, missing: {lacking[:10]}")
        reports[name] = _report(utts, hyps, table, args.accent, args.missing)
    base = reports.get("baseline")
    rep = reports["system"]
    text = rep.to_json(base) if args.format == "json" else rep.to_tsv(base)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(rep.summary(baseline=base), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodecode", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (dotted key, JSON value)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common], help="synthetic POI corpus, test manifest and emissions")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-lm", parents=[common], help="train baseline or province LMs (ARPA)")
    p.add_argument("--scope", default="all", help="'baseline', 'all', or a province id")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("build-graph", parents=[common], help="compose the lexicon with the bigram grammar")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("decode", parents=[common], help="first-pass decoding with province Geo-LMs")
    p.add_argument("--manifest")
    p.add_argument("--emissions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rescore", parents=[common], help="second-pass character-level rescoring")
    p.add_argument("--nbest")
    p.add_argument("--out")
    p.add_argument("--no-geo", action="store_true", help="leave the Geo-LM out of the second pass")
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("eval", parents=[common], help="CER report grouped by province and region")
    p.add_argument("--ref", help="test manifest (default: work_dir/test.tsv)")
    p.add_argument("--hyp", required=True, help="n-best or rescored file")
    p.add_argument("--baseline", help="second hypothesis file for CERR")
    p.add_argument("--accent", help="accent label to group under")
    p.add_argument("--missing", choices=("error", "empty"), default="error",
                   help="how to treat utterances without a hypothesis")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(cfg, args)
    except (ConfigError, FileNotFoundError, KeyError, ValueError, OSError) as e:
        print(f"geodecode {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
