import json
import shutil

import pytest

from geodecode import amsim
from geodecode.cli import ConfigError, load_config, main

TINY = {
    "corpus": {"provinces": ["Jiangsu", "Sichuan", "Hubei"], "test_provinces": ["Jiangsu", "Sichuan"],
               "test_size": 40, "other_size": 20, "homophone_rate": 0.3, "test_utterances": 16},
    "lm": {"order": 3, "baseline_cutoffs": [0, 1, 1], "geo_cutoffs": [0, 0, 0], "rescorer_cutoffs": [0, 0, 0]},
    "acoustic": {"accent": "medium"},
    "decode": {"nbest": 5},
}


def run(cfg_path, *argv):
    return main([argv[0], "--config", str(cfg_path), *argv[1:]])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = dict(TINY, work_dir=str(root / "w"))
    path = root / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    for cmd in (["gen-corpus"], ["train-lm"], ["build-graph"], ["decode"]):
        assert run(path, *cmd) == 0
    return root, path


def test_pipeline_outputs(work):
    root, cfg = work
    w = root / "w"
    for f in ("corpus.tsv", "lexicon.txt", "test.tsv", "emissions.npz", "lm/geo_lms.json", "graph/LG.fst",
              "nbest.tsv"):
        assert (w / f).exists(), f
    assert run(cfg, "rescore") == 0
    assert run(cfg, "rescore", "--no-geo") == 0
    assert (w / "rescored.tsv").exists() and (w / "rescored.l2.tsv").exists()
    out = root / "eval.json"
    assert run(cfg, "eval", "--hyp", str(w / "rescored.tsv"), "--baseline", str(w / "nbest.tsv"),
               "--format", "json", "--out", str(out)) == 0
    rows = json.loads(out.read_text(encoding="utf-8"))["rows"]
    assert rows[0]["group"] == "all" and "CERR" in rows[0]
    assert {r["name"] for r in rows if r["group"] == "province"} == {"Jiangsu", "Sichuan"}


def test_gamma_one_eval_equals_first_pass(work):
    root, cfg = work
    w = root / "w"
    assert run(cfg, "rescore", "--set", "interpolation.gamma=1", "--out", str(root / "g1.tsv")) == 0
    a, b = root / "a.tsv", root / "b.tsv"
    assert run(cfg, "eval", "--hyp", str(root / "g1.tsv"), "--out", str(a)) == 0
    assert run(cfg, "eval", "--hyp", str(w / "nbest.tsv"), "--out", str(b)) == 0
    assert a.read_text(encoding="utf-8") == b.read_text(encoding="utf-8")


def test_lambda_one_equals_baseline_only(work):
    root, cfg = work
    w = root / "w"
    assert run(cfg, "decode", "--set", "interpolation.lam=1", "--out", str(root / "lam1.tsv")) == 0
    # a work dir whose store only knows the baseline
    other = root / "w_base"
    shutil.copytree(w, other)
    (other / "lm" / "geo_lms.json").unlink()
    assert run(cfg, "train-lm", "--scope", "baseline", "--set", f"work_dir=\"{other}\"") == 0
    assert run(cfg, "decode", "--set", f"work_dir=\"{other}\"", "--out", str(root / "nogeo.tsv")) == 0
    assert (root / "lam1.tsv").read_text(encoding="utf-8") == (root / "nogeo.tsv").read_text(encoding="utf-8")


def test_decode_idempotent_and_workers(work):
    root, cfg = work
    assert run(cfg, "decode", "--out", str(root / "d1.tsv")) == 0
    assert run(cfg, "decode", "--set", "decode.workers=2", "--out", str(root / "d2.tsv")) == 0
    assert (root / "d1.tsv").read_bytes() == (root / "w" / "nbest.tsv").read_bytes()
    assert (root / "d2.tsv").read_bytes() == (root / "d1.tsv").read_bytes()


def test_empty_manifest(work, tmp_path):
    root, cfg = work
    (tmp_path / "empty.tsv").write_text("", encoding="utf-8")
    out = tmp_path / "nb.tsv"
    assert run(cfg, "decode", "--manifest", str(tmp_path / "empty.tsv"), "--out", str(out)) == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 1


def test_eval_mismatched_ids(work, tmp_path, capsys):
    root, cfg = work
    utts = amsim.read_manifest(root / "w" / "test.tsv")
    amsim.write_manifest(tmp_path / "ref.tsv", utts[:-1] + [amsim.Utterance("bogus", "Jiangsu", 32.0, 118.8, ("x",))])
    assert run(cfg, "eval", "--ref", str(tmp_path / "ref.tsv"), "--hyp", str(root / "w" / "nbest.tsv")) == 2
    err = capsys.readouterr().err
    assert "bogus" in err and utts[-1].utt_id in err


def test_eval_missing_as_empty(work, tmp_path):
    root, cfg = work
    utts = amsim.read_manifest(root / "w" / "test.tsv")
    lines = (root / "w" / "nbest.tsv").read_text(encoding="utf-8").splitlines()
    kept = [lines[0]] + [ln for ln in lines[1:] if not ln.startswith(utts[0].utt_id + "\t")]
    (tmp_path / "part.tsv").write_text("\n".join(kept) + "\n", encoding="utf-8")
    assert run(cfg, "eval", "--hyp", str(tmp_path / "part.tsv")) == 2
    assert run(cfg, "eval", "--hyp", str(tmp_path / "part.tsv"), "--missing", "empty") == 0


def test_unknown_province_id(work):
    root, cfg = work
    before = (root / "w" / "lm" / "geo_lms.json").read_bytes()
    assert run(cfg, "train-lm", "--scope", "99") == 2
    assert run(cfg, "train-lm", "--scope", "nowhere") == 2
    assert (root / "w" / "lm" / "geo_lms.json").read_bytes() == before


@pytest.mark.parametrize("override", ["interpolation.alpha=0.9", "interpolation.gamma=-1", "decode.beam=0",
                                      "lm.baseline_cutoffs=[0,1]", "acoustic.accent=\"loud\"", "nope.key=1",
                                      "decode.workers=0"])
def test_config_rejected(work, override):
    root, cfg = work
    with pytest.raises(ConfigError):
        load_config(cfg, [override])
    assert run(cfg, "decode", "--set", override) == 2


def test_config_unknown_file_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"decode": {"bem": 3}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(p)
    assert load_config(None, ["decode.beam=9"])["decode"]["beam"] == 9


def test_missing_inputs(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"work_dir": str(tmp_path / "none")}), encoding="utf-8")
    assert run(p, "build-graph") == 2


def test_gen_corpus_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = dict(TINY, work_dir=str(tmp_path / name))
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg), encoding="utf-8")
        assert run(p, "gen-corpus") == 0
        outs.append([(tmp_path / name / f).read_bytes() for f in ("corpus.tsv", "test.tsv", "lexicon.txt")])
    assert outs[0] == outs[1]
