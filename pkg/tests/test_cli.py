import json

import pytest

from rangeface.cli import main
from rangeface.cloud_io import POSE_TAGS, load_manifest
from rangeface.suld import load_descriptors


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--subjects", "3", "--scans", "2", "--out", str(root / "data"), "--seed", "4"]) == 0
    assert main(["preprocess", "--manifest", str(root / "data/manifest.tsv"), "--out", str(root / "img")]) == 0
    assert main(["describe", "--images", str(root / "img"), "--out", str(root / "desc")]) == 0
    return root


def test_synth_outputs(run):
    man = load_manifest(run / "data/manifest.tsv")
    assert len(man) == 6
    assert [(e.subject_id, e.scan_id) for e in man][:3] == [("s000", 1), ("s000", 2), ("s001", 1)]
    assert [e.pose_tag for e in man][:2] == [POSE_TAGS[1], POSE_TAGS[2]]
    assert (run / "data/s000_01.xyz").is_file()


def test_synth_is_seeded(tmp_path, run):
    main(["synth", "--subjects", "3", "--scans", "2", "--out", str(tmp_path), "--seed", "4"])
    assert (tmp_path / "s001_02.xyz").read_bytes() == (run / "data/s001_02.xyz").read_bytes()


def test_global_flags_before_subcommand(tmp_path, run):
    main(["--seed", "4", "synth", "--subjects", "3", "--scans", "2", "--out", str(tmp_path)])
    assert (tmp_path / "s001_02.xyz").read_bytes() == (run / "data/s001_02.xyz").read_bytes()


def test_preprocess_outputs(run, capsys):
    assert sorted(p.name for p in (run / "img").iterdir())[:2] == ["s000_01.grid.txt", "s000_01.pgm"]
    main(["preprocess", "--manifest", str(run / "data/manifest.tsv"), "--out", str(run / "img2")])
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 6
    assert "registration=skipped" in out[0] and "icp_iterations=" in out[1] and "nose_tip=" in out[1]


def test_preprocess_failure_names_file(tmp_path, capsys):
    (tmp_path / "bad.xyz").write_text("0 0 0\n1 1 1\n")
    (tmp_path / "m.tsv").write_text("x\t1\tfrontal\tbad.xyz\n")
    assert main(["preprocess", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path / "o")]) == 1
    assert "bad.xyz" in capsys.readouterr().err


def test_describe_outputs(run):
    f = load_descriptors(run / "desc/s002_02.suld")
    assert 10 <= f.detected <= 60
    assert all(len(d) == 100 for d in f.descriptors)


def test_describe_empty_dir(tmp_path, caplog):
    assert main(["describe", "--images", str(tmp_path), "--out", str(tmp_path / "o")]) == 0
    assert "no range images" in caplog.text


def test_match(run, capsys):
    d = run / "desc"
    main(["match", str(d / "s000_01.suld"), str(d / "s000_01.suld")])
    n_self = int(capsys.readouterr().out)
    assert n_self == len(load_descriptors(d / "s000_01.suld").descriptors)
    main(["match", str(d / "s000_01.suld"), str(d / "s001_01.suld")])
    assert int(capsys.readouterr().out) < n_self


def test_evaluate(run, capsys, tmp_path):
    args = ["evaluate", "--descriptors", str(run / "desc"), "--manifest", str(run / "data/manifest.tsv")]
    assert main(args + ["--protocol", "sanity", "--report", str(tmp_path / "r.txt"), "--json", str(tmp_path / "r.json")]) == 0
    text = capsys.readouterr().out
    assert text.startswith("SANITY\tsubjects=3\tprobes=6\tcorrect=6\taccuracy=100.00")
    assert (tmp_path / "r.txt").read_text().strip() == text.strip()
    assert json.loads((tmp_path / "r.json").read_text())[0]["probes"] == 6
    assert main(args + ["--protocol", "LOO", "--subjects", "2"]) == 0
    assert "subjects=2\tprobes=4" in capsys.readouterr().out


def test_evaluate_missing_descriptors(run, tmp_path, capsys):
    args = ["evaluate", "--descriptors", str(tmp_path), "--manifest", str(run / "data/manifest.tsv"), "--protocol", "LOO"]
    assert main(args) == 1
    assert "missing descriptors" in capsys.readouterr().err


def test_evaluate_protocol_needs_scans(run, capsys):
    args = ["evaluate", "--descriptors", str(run / "desc"), "--manifest", str(run / "data/manifest.tsv"), "--protocol", "T1"]
    assert main(args) == 1
    assert "lacks scan 3" in capsys.readouterr().err


def test_unknown_protocol_is_usage_error(run):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--descriptors", "x", "--manifest", "y", "--protocol", "T9"])
    assert exc.value.code == 2


def test_bad_override_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--subjects", "1", "--scans", "1", "--out", str(tmp_path), "--matcher-ratio-threshold", "2"])
    assert exc.value.code == 2


def test_jobs_match_sequential(run, tmp_path):
    main(["describe", "--images", str(run / "img"), "--out", str(tmp_path), "--jobs", "2"])
    for p in (run / "desc").iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()
