import configparser
import json

import numpy as np
import pytest

from pfmalware.cli import main
from pfmalware.corpus import load_dataset
from pfmalware.prefetch import PrefetchArtifact, emit_fixture, listing_text

from conftest import random_artifact


def _sha(n):
    return f"{n:064x}"


@pytest.fixture
def pf_dir(tmp_path):
    d = tmp_path / "pf"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i, version in enumerate((17, 23, 26)):
        (d / f"{_sha(i)}.pf").write_bytes(emit_fixture(random_artifact(rng, 5), version))
    return d


def test_parse_directory(pf_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["parse", str(pf_dir), "--out", str(out)]) == 0
    assert len(list(out.glob("*.listing.txt"))) == 3
    assert len((out / "summary.tsv").read_text().splitlines()) == 4
    assert (out / "effective_config.ini").exists() and (out / "run.log").exists()


def test_parse_compressed_file_is_reported(pf_dir, tmp_path):
    (pf_dir / f"{_sha(9)}.pf").write_bytes(b"MAM\x04" + bytes(60))
    out = tmp_path / "out"
    assert main(["parse", str(pf_dir), "--out", str(out)]) == 0
    rows = (out / "summary.tsv").read_text().splitlines()[1:]
    bad = [r for r in rows if r.startswith(_sha(9))]
    assert len(bad) == 1 and "UnsupportedCompressed" in bad[0]
    assert len(list(out.glob("*.listing.txt"))) == 3


def test_parse_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["parse", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) != 0
    assert "no input files" in capsys.readouterr().err


def test_parse_all_failing(tmp_path):
    d = tmp_path / "bad"
    d.mkdir()
    (d / "x.pf").write_bytes(b"junk")
    assert main(["parse", str(d), "--out", str(tmp_path / "o")]) == 1


DETECTIONS = {"Cerber": "Ransom:Win32/Cerber.a", "Kovter": "Trojan:Win32/Kovter.B",
              "Vobfus": "Worm:Win32/Vobfus!rfn"}


@pytest.fixture
def real_inputs(tmp_path):
    """60 samples: Cerber 30, Kovter 20, Vobfus 10, as .pf files plus reports."""
    listings = tmp_path / "listings"
    listings.mkdir()
    reports = []
    n = 0
    for family, count in (("Cerber", 30), ("Kovter", 20), ("Vobfus", 10)):
        for j in range(count):
            files = tuple(f"\\VOLUME{{01}}\\{family}\\LIB{(j + k) % 7}.DLL" for k in range(6))
            art = PrefetchArtifact(f"{family}.EXE", n, 1, 0, 1, files)
            (listings / f"{_sha(n)}.pf").write_bytes(emit_fixture(art, 23))
            reports.append({"sha256": _sha(n), "first_seen_year": 2015,
                            "scans": {"Microsoft": {"detected": True, "result": DETECTIONS[family]}}})
            n += 1
    path = tmp_path / "reports.json"
    path.write_text(json.dumps(reports))
    return listings, path


def _families(d):
    return load_dataset(d).families


def test_build_dataset_thresholds(real_inputs, tmp_path):
    listings, reports = real_inputs
    counts = {}
    for threshold in (10, 20, 50):
        out = tmp_path / f"ds{threshold}"
        argv = ["build-dataset", "--listings", str(listings), "--reports", str(reports),
                "--scheme", "Microsoft", "--min-family-size", str(threshold), "--out", str(out)]
        if threshold == 50:
            assert main(argv) == 1                          # no family reaches 50
            continue
        assert main(argv) == 0
        counts[threshold] = len(_families(out))
        assert (out / "samples.jsonl").exists() and (out / "families.tsv").exists()
    assert counts == {10: 3, 20: 2}
    assert _families(tmp_path / "ds10") == ["Cerber", "Kovter", "Vobfus"]


def test_build_dataset_unknown_scheme(real_inputs, tmp_path):
    listings, reports = real_inputs
    assert main(["build-dataset", "--listings", str(listings), "--reports", str(reports),
                 "--scheme", "NoSuchVendor", "--out", str(tmp_path / "o")]) == 2


def test_build_dataset_synthetic(tmp_path):
    cfg = tmp_path / "synth.ini"
    cfg.write_text("[synthesize]\nn_families = 3\nsamples_per_family = 5\nvocab_size = 60\nsignature_tokens = 10\n")
    out = tmp_path / "ds"
    assert main(["build-dataset", "--synthetic", "--synth-config", str(cfg), "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert len(ds) == 15 and ds.n_classes == 3


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert main(["synthesize", "--n-families", "4", "--samples-per-family", "15", "--vocab-size", "120",
                 "--min-length", "12", "--max-length", "30", "--signature-tokens", "10",
                 "--seed", "3", "--out", str(out)]) == 0
    return out


def test_train_then_predict_crnn(synth_dir, tmp_path, capsys):
    out = tmp_path / "train"
    assert main(["train", "--dataset", str(synth_dir), "--model", "crnn", "--epochs", "40",
                 "--learning-rate", "0.1", "--max-len", "32", "--out", str(out)]) == 0
    assert (out / "model" / "model.pfc").exists()
    assert (out / "history.csv").read_text().splitlines()[0] == "epoch,loss,val_f1"
    assert "epoch 40" in (out / "run.log").read_text()

    sample = load_dataset(synth_dir).samples[0]
    probe = tmp_path / f"{sample.sample_id}.listing.txt"
    probe.write_text(listing_text(sample.tokens), encoding="utf-8")
    capsys.readouterr()
    assert main(["predict", str(probe), "--model-dir", str(out / "model"), "-k", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "file\trank\tfamily\tprobability" and len(lines) == 4
    _, rank, family, prob = lines[1].split("\t")
    assert rank == "1" and family == sample.family and float(prob) > 0.5


def test_predict_k_too_large(synth_dir, tmp_path):
    out = tmp_path / "train"
    assert main(["train", "--dataset", str(synth_dir), "--model", "lr2", "--out", str(out)]) == 0
    listing = tmp_path / "probe.listing.txt"
    listing.write_text("\\A.DLL\n")
    assert main(["predict", str(listing), "--model-dir", str(out / "model"), "-k", "9"]) == 2


def test_evaluate_lr2_reproducible(synth_dir, tmp_path, capsys):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["evaluate", "--dataset", str(synth_dir), "--model", "lr2", "--folds", "3",
                     "--out", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name not in ("run.log", "effective_config.ini")})
    assert outputs[0] == outputs[1]
    assert {"cv_report.json", "per_family.csv", "topk_curve.csv"} <= set(outputs[0])
    assert "lr2: weighted F1" in capsys.readouterr().out


def _effective(out, command):
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.read(out / "effective_config.ini")
    return cfg[command]


def test_config_precedence(synth_dir, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(f"[evaluate]\ndataset = {synth_dir}\nfolds = 3\nl2_strength = 0.5\nmodel = lr2\n")
    out = tmp_path / "o1"
    assert main(["evaluate", "--config", str(ini), "--out", str(out)]) == 0
    eff = _effective(out, "evaluate")
    assert eff["folds"] == "3" and eff["l2_strength"] == "0.5" and eff["seed"] == "0"
    out = tmp_path / "o2"
    assert main(["evaluate", "--config", str(ini), "--folds", "4", "--out", str(out)]) == 0
    eff = _effective(out, "evaluate")
    assert eff["folds"] == "4" and eff["l2_strength"] == "0.5"
    assert json.loads((out / "cv_report.json").read_text())["k"] == 4


def test_config_unknown_key(synth_dir, tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[evaluate]\nbogus = 1\n")
    with pytest.raises(SystemExit) as info:
        main(["evaluate", "--config", str(ini), "--dataset", str(synth_dir), "--out", str(tmp_path / "o")])
    assert info.value.code == 2


def test_grad_check_command(capsys):
    assert main(["grad-check", "--dtype", "float64"]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("PASS")
    assert main(["grad-check", "--tolerance", "0"]) == 1


def test_grid_search_command(synth_dir, tmp_path):
    out = tmp_path / "grid"
    assert main(["grid-search", "--dataset", str(synth_dir), "--model", "lr2", "--folds", "3",
                 "--grid", "clf__l2_strength=0.01,0.1", "--out", str(out)]) == 0
    assert len((out / "grid_search.csv").read_text().splitlines()) == 3
    assert json.loads((out / "best.json").read_text())["params"]["clf__l2_strength"] in (0.01, 0.1)


def test_grid_search_bad_grid(synth_dir, tmp_path):
    assert main(["grid-search", "--dataset", str(synth_dir), "--model", "lr2", "--grid", "oops",
                 "--out", str(tmp_path / "g")]) == 2


def test_incremental_command(tmp_path):
    synth = tmp_path / "drift"
    assert main(["synthesize", "--n-families", "5", "--novel-families", "2", "--samples-per-family", "12",
                 "--vocab-size", "120", "--min-length", "12", "--max-length", "30",
                 "--signature-tokens", "10", "--out", str(synth)]) == 0
    out = tmp_path / "inc"
    assert main(["incremental", "--dataset", str(synth), "--epochs", "2", "--base-epochs", "2",
                 "--max-len", "32", "--learning-rate", "0.1", "--out", str(out)]) == 0
    summary = json.loads((out / "incremental_summary.json").read_text())
    assert summary["epochs"] == 2 and len(summary["novel_families"]) == 2
    assert (out / "incremental_compare.csv").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "0.1.0" in capsys.readouterr().out
