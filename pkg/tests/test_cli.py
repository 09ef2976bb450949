import os
import subprocess
import sys

import numpy as np
import pytest

from kbresize import __version__
from kbresize.cli import main
from kbresize.codebook import EuclideanCodebook, read_codebook
from kbresize.codec import FeatureGrid, IndexGrid, Payload, dequantize, pack, quantize, unpack
from kbresize.harness import read_records_csv
from kbresize.ranking import compute_ranking, read_ranking, resize, verify_ranking

SMALL_CONFIG = """\
[source]
dim = 4
[sweep]
parent_size = 32
child_sizes = 4, 8, 32
n_train = 600
n_test = 200
seeds = 0, 1
"""


@pytest.fixture
def files(tmp_path, rng):
    kb = EuclideanCodebook(rng.normal(scale=0.7, size=(50, 4)))
    (tmp_path / "kb.kbf").write_bytes(kb.to_bytes())
    x = FeatureGrid(6, 5, rng.normal(scale=0.7, size=(30, 4)))
    (tmp_path / "x.kbx").write_bytes(x.to_bytes())
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline(files, capsys):
    p = files
    assert run("rank", "--input", p / "kb.kbf", "--output", p / "r.kbr") == 0
    parent = read_codebook(p / "kb.kbf")
    assert verify_ranking(parent, read_ranking(p / "r.kbr"))
    assert run("resize", "--input", p / "kb.kbf", "--ranking", p / "r.kbr", "--size", 10,
               "--output", p / "child.kbf") == 0
    assert read_codebook(p / "child.kbf").size == 10
    assert run("quantize", "--input", p / "x.kbx", "--kb", p / "child.kbf", "--output", p / "i.kbi") == 0
    assert run("pack", "--input", p / "i.kbi", "--output", p / "i.kbp") == 0
    payload = Payload.from_bytes((p / "i.kbp").read_bytes())
    assert payload.bits_per_index == 4 and payload.bit_count == 30 * 4
    assert run("unpack", "--input", p / "i.kbp", "--output", p / "j.kbi") == 0
    assert (p / "i.kbi").read_bytes() == (p / "j.kbi").read_bytes()
    assert run("dequantize", "--input", p / "j.kbi", "--kb", p / "child.kbf", "--output", p / "y.kbx") == 0
    y = FeatureGrid.from_bytes((p / "y.kbx").read_bytes())
    idx = IndexGrid.from_bytes((p / "j.kbi").read_bytes()).indices
    child = read_codebook(p / "child.kbf")
    assert np.array_equal(y.values, child.canonical_vectors[idx])
    out = capsys.readouterr().out
    assert "bits_per_index=4" in out


def test_pipeline_matches_library(files):
    p = files
    for argv in (("rank", "--input", p / "kb.kbf", "--output", p / "r.kbr"),
                 ("resize", "--input", p / "kb.kbf", "--ranking", p / "r.kbr", "--size", 13, "--output", p / "c.kbf"),
                 ("quantize", "--input", p / "x.kbx", "--kb", p / "c.kbf", "--output", p / "i.kbi"),
                 ("pack", "--input", p / "i.kbi", "--output", p / "i.kbp"),
                 ("unpack", "--input", p / "i.kbp", "--output", p / "j.kbi"),
                 ("dequantize", "--input", p / "j.kbi", "--kb", p / "c.kbf", "--output", p / "y.kbx")):
        assert run(*argv) == 0
    parent = read_codebook(p / "kb.kbf")
    ranking = compute_ranking(parent)
    assert (p / "r.kbr").read_text() == ranking.to_text()
    child = resize(parent, ranking, 13)
    assert (p / "c.kbf").read_bytes() == child.to_bytes()
    child = EuclideanCodebook.from_bytes(child.to_bytes())
    grid = quantize(FeatureGrid.from_bytes((p / "x.kbx").read_bytes()), child)
    assert (p / "i.kbi").read_bytes() == grid.to_bytes()
    assert (p / "i.kbp").read_bytes() == pack(grid).to_bytes()
    assert (p / "j.kbi").read_bytes() == unpack(pack(grid)).to_bytes()
    assert (p / "y.kbx").read_bytes() == dequantize(grid, child).to_bytes()


def test_resize_csv_output(files):
    p = files
    run("rank", "--input", p / "kb.kbf", "--output", p / "r.kbr")
    assert run("resize", "--input", p / "kb.kbf", "--ranking", p / "r.kbr", "--size", 1,
               "--output", p / "child.csv") == 0
    assert len((p / "child.csv").read_text().splitlines()) == 1


def test_kb_info(files, capsys):
    assert run("kb-info", "--input", files / "kb.kbf") == 0
    out = capsys.readouterr().out.splitlines()
    kb = read_codebook(files / "kb.kbf")
    assert out[:4] == ["K=50", "dim=4", "bits_per_index=6", f"fingerprint={kb.fingerprint}"]


@pytest.mark.parametrize("fmt, marker", [("edges", None), ("dot", "digraph")])
def test_tree_export(files, fmt, marker):
    assert run("tree-export", "--input", files / "kb.kbf", "--output", files / "t.txt", "--format", fmt) == 0
    text = (files / "t.txt").read_text()
    if marker:
        assert text.startswith(marker) and text.count("->") == 49
    else:
        assert len(text.splitlines()) == 49


def test_default_config(capsys):
    assert run("default-config") == 0
    assert "[sweep]" in capsys.readouterr().out


def test_eval(tmp_path, capsys):
    (tmp_path / "c.ini").write_text(SMALL_CONFIG)
    assert run("eval", "--config", tmp_path / "c.ini", "--out-dir", tmp_path / "o") == 0
    recs = read_records_csv((tmp_path / "o" / "records.csv").read_text())
    assert len(recs) == 2 * 3 * 3
    summary = (tmp_path / "o" / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 3 * 3
    assert "zero-shot/dedicated" in capsys.readouterr().out


def _usage(capsys, *argv):
    code = run(*argv)
    err = capsys.readouterr().err.strip().splitlines()
    return code, err


@pytest.mark.parametrize("argv", [
    (),
    ("nonsense",),
    ("rank", "--input", "x"),
    ("resize", "--input", "a", "--ranking", "b", "--size", "ten", "--output", "c"),
    ("tree-export", "--input", "a", "--output", "b", "--format", "png"),
])
def test_usage_errors(capsys, argv):
    code, err = _usage(capsys, *argv)
    assert code == 1
    assert len(err) == 1 and err[0].startswith("kbresize: error:")


def test_size_out_of_range_is_usage_error(files, capsys):
    p = files
    run("rank", "--input", p / "kb.kbf", "--output", p / "r.kbr")
    for size in (0, 51):
        code, err = _usage(capsys, "resize", "--input", p / "kb.kbf", "--ranking", p / "r.kbr",
                           "--size", size, "--output", p / "c.kbf")
        assert code == 1 and len(err) == 1
    assert not (p / "c.kbf").exists()


def test_eval_bad_config_is_usage_error(tmp_path, capsys):
    (tmp_path / "c.ini").write_text("[sweep]\nwhat = 1\n")
    code, err = _usage(capsys, "eval", "--config", tmp_path / "c.ini", "--out-dir", tmp_path)
    assert code == 1 and "sweep.what" in err[0]
    code, _ = _usage(capsys, "eval", "--config", tmp_path / "missing.ini", "--out-dir", tmp_path)
    assert code == 1


def test_data_errors(files, capsys):
    p = files
    raw = (p / "kb.kbf").read_bytes()
    (p / "bad.kbf").write_bytes(b"ZZZZ" + raw[4:])
    code, err = _usage(capsys, "rank", "--input", p / "bad.kbf", "--output", p / "r.kbr")
    assert code == 2 and len(err) == 1 and "offset 0" in err[0]
    code, _ = _usage(capsys, "rank", "--input", p / "missing.kbf", "--output", p / "r.kbr")
    assert code == 2
    code, _ = _usage(capsys, "unpack", "--input", p / "kb.kbf", "--output", p / "o.kbi")
    assert code == 2
    assert not (p / "o.kbi").exists()


def test_stale_ranking_exit_code(files, capsys, rng):
    p = files
    run("rank", "--input", p / "kb.kbf", "--output", p / "r.kbr")
    (p / "other.kbf").write_bytes(EuclideanCodebook(rng.normal(size=(50, 4))).to_bytes())
    code, err = _usage(capsys, "resize", "--input", p / "other.kbf", "--ranking", p / "r.kbr",
                       "--size", 3, "--output", p / "c.kbf")
    assert code == 2 and "StaleRankingError" in err[0]


def test_failed_write_leaves_target_untouched(files, capsys):
    p = files
    (p / "r.kbr").write_text("previous")
    code, _ = _usage(capsys, "rank", "--input", p / "kb.kbf", "--output", p / "nodir" / "r.kbr")
    assert code == 2
    assert (p / "r.kbr").read_text() == "previous"
    assert sorted(os.listdir(p)) == ["kb.kbf", "r.kbr", "x.kbx"]


def test_deterministic_outputs(files):
    p = files
    outputs = []
    for rep in range(2):
        d = p / f"run{rep}"
        d.mkdir()
        run("rank", "--input", p / "kb.kbf", "--output", d / "r.kbr")
        run("resize", "--input", p / "kb.kbf", "--ranking", d / "r.kbr", "--size", 7, "--output", d / "c.kbf")
        run("quantize", "--input", p / "x.kbx", "--kb", d / "c.kbf", "--output", d / "i.kbi")
        run("pack", "--input", d / "i.kbi", "--output", d / "i.kbp")
        run("tree-export", "--input", p / "kb.kbf", "--output", d / "t.dot", "--format", "dot")
        outputs.append({f: (d / f).read_bytes() for f in sorted(os.listdir(d))})
    assert outputs[0] == outputs[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kbresize", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith(f"kbresize {__version__} (")
    proc = subprocess.run([sys.executable, "-m", "kbresize"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("kbresize: error:")
