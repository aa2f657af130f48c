import csv
import json
import re
import subprocess
import sys
from pathlib import Path


from qpathdim.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SCI = re.compile(r"^-?\d\.\d{8}e[+-]\d{2}$")


def _run(tmp_path, *argv):
    return main(["--outdir", str(tmp_path), *argv])


def _table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _tables(outdir):
    return {p.name: p.read_bytes() for p in sorted(Path(outdir).iterdir()) if not p.name.endswith(".json")}


def test_propagator_single_row(tmp_path, capsys):
    code = _run(tmp_path, "propagator", "--L", "2", "--T", "10", "--mu", "1", "--hbar", "1", "--h", "0", "--m-max", "20")
    assert code == 0
    rows = _table(tmp_path / "propagator.csv")
    assert rows[0] == ["h", "m_max", "re", "im", "re_exact", "im_exact"]
    h, m, re_, im, rx, ix = rows[1]
    assert m == "20"
    assert abs(complex(float(re_), float(im)) - complex(float(rx), float(ix))) < 1e-6
    assert all(SCI.match(v) for v in (h, re_, im, rx, ix))


def test_propagator_fig8_preset(tmp_path):
    assert _run(tmp_path, "propagator", "--preset", "fig8") == 0
    rows = _table(tmp_path / "propagator.csv")[1:]
    assert len(rows) == 41 * 11
    assert {r[4] for r in rows} == {"3.16192060e-03"}
    assert {r[5] for r in rows} == {"-1.55982440e-02"}


def test_missing_flag_is_usage_error_without_files(tmp_path, capsys):
    assert _run(tmp_path, "propagator", "--h", "0") == 2
    assert _run(tmp_path, "exp2") == 2
    assert _run(tmp_path, "exp1", "--jobs", "0") == 2
    assert _run(tmp_path, "nonsense") == 2
    assert list(tmp_path.iterdir()) == []


def test_csv_format_and_line_endings(tmp_path):
    assert _run(tmp_path, "exp1", "--h", "0", "10", "--h-points", "3", "--alpha", "0", "1", "--alpha-points", "3") == 0
    raw = (tmp_path / "exp1.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = _table(tmp_path / "exp1.csv")
    assert rows[0] == ["h", "alpha", "re_ab", "im_ab", "re_semi", "im_semi", "abs_re_diff", "abs_im_diff", "quantum_region"]
    assert len(rows) == 1 + 9
    for r in rows[1:]:
        assert all(SCI.match(v) for v in r[:-1]) and r[-1] in ("0", "1")


def test_exp1_zero_alpha(tmp_path):
    assert _run(tmp_path, "exp1", "--alpha", "0", "0") == 0
    rows = _table(tmp_path / "exp1.csv")[1:]
    assert len(rows) == 41
    scale = max(abs(complex(float(r[2]), float(r[3]))) for r in rows)
    assert all(float(r[6]) <= 1e-15 * scale and float(r[7]) <= 1e-15 * scale for r in rows)


def test_exp1_fig9_boundary_and_jobs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--outdir", str(a), "exp1", "--preset", "fig9"]) == 0
    assert main(["exp1", "--preset", "fig9", "--jobs", "4", "--outdir", str(b)]) == 0
    assert _tables(a) == _tables(b)
    rows = _table(a / "exp1.csv")[1:]
    assert len(rows) == 41 * 61
    for r in rows:
        assert r[8] == ("1" if float(r[0]) < 5.0 else "0")


def test_exp1_fig13_integer_alpha_nulls(tmp_path):
    assert _run(tmp_path, "exp1", "--preset", "fig13") == 0
    rows = _table(tmp_path / "exp1.csv")[1:]
    colmax = max(float(r[6]) for r in rows)
    for r in rows:
        a = float(r[1])
        if abs(a - round(a)) < 1e-9:
            assert float(r[6]) < 1e-8 * colmax


def test_exp2_demo(tmp_path, capsys):
    assert _run(tmp_path, "exp2", "--config", str(CONFIGS / "demo.cfg"), "--synthetic") == 0
    line = (tmp_path / "exp2_fit.txt").read_text()
    d_h = float(re.search(r"dH=([^±]+)±", line).group(1))
    assert abs(d_h - 2.0) < 1e-3
    assert _table(tmp_path / "exp2_scales.csv")[0] == ["dx", "re_L", "im_L", "abs_L", "n_classes", "residual"]
    assert capsys.readouterr().out.strip() == line.strip()


def test_exp2_single_solenoid_classes(tmp_path):
    assert _run(tmp_path, "exp2", "--config", str(CONFIGS / "single-solenoid.cfg")) == 0
    rows = _table(tmp_path / "exp2_classes.csv")[1:]
    assert len(rows) == 5 * 5
    assert max(float(r[-1]) for r in rows) < 1e-3


def test_exp2_underdetermined_exit(tmp_path, capsys):
    assert _run(tmp_path, "exp2", "--config", str(CONFIGS / "underdetermined.cfg")) == 3
    assert "2*N_H+1" in capsys.readouterr().err


def test_exp2_bad_config(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("frobnicate = 1\n")
    assert main(["--outdir", str(tmp_path / "o"), "exp2", "--config", str(bad)]) == 2
    assert main(["--outdir", str(tmp_path / "o"), "exp2", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_decode_examples(tmp_path, capsys):
    assert _run(tmp_path, "decode", "--fluxes", "97/99,101/111", "--total", "8463/10989", "--cutoff", "3") == 0
    assert capsys.readouterr().out == "-2,3\n"
    assert _run(tmp_path, "decode", "--fluxes", "97/99,101/111", "--total", "0/1", "--cutoff", "2") == 0
    assert capsys.readouterr().out == "0,0\n"
    assert _run(tmp_path, "decode", "--fluxes", "1/2,1/2", "--total", "1/2", "--cutoff", "1") == 3
    assert capsys.readouterr().out == "NOT_UNIQUE\n"


def test_decode_cutoff_two_has_no_solution(tmp_path, capsys):
    # n_2 = 3 lies outside |n_i| <= 2
    assert _run(tmp_path, "decode", "--fluxes", "97/99,101/111", "--total", "8463/10989", "--cutoff", "2") == 3
    assert capsys.readouterr().out == "NO_SOLUTION\n"


def test_decode_usage(tmp_path):
    assert _run(tmp_path, "decode", "--fluxes", "1/0", "--total", "1", "--cutoff", "1") == 2
    assert _run(tmp_path, "decode", "--fluxes", "1/2", "--total", "1", "--cutoff", "0") == 2


def test_pimc_repeat_is_byte_identical(tmp_path):
    argv = ["pimc", "--potential", "harmonic", "--preset", "quick", "--seed", "7", "--sweeps", "600"]
    assert main(["--outdir", str(tmp_path / "a"), *argv]) == 0
    assert main(["--outdir", str(tmp_path / "b"), *argv, "--jobs", "3"]) == 0
    a, b = _tables(tmp_path / "a"), _tables(tmp_path / "b")
    assert set(a) == {"pimc.csv", "pimc_fit.txt"}
    assert a == b
    header = _table(tmp_path / "a" / "pimc.csv")[0]
    assert header[:5] == ["delta", "mean_abs_dx", "mean_L", "stderr_L", "ratio_eq13"]
    assert "Euclidean" in (tmp_path / "a" / "pimc_fit.txt").read_text()


def test_fit_subcommand(tmp_path, capsys):
    table = tmp_path / "t.csv"
    table.write_text("dx,abs_L\n0.1,20\n0.2,10\n0.4,5\n0.8,2.5\n")
    assert _run(tmp_path / "o", "fit", "--input", str(table)) == 0
    assert "dH=2.00000000e+00" in capsys.readouterr().out
    assert _run(tmp_path / "o", "fit", "--input", str(table), "--y-col", "nope") == 2
    table.write_text("dx,abs_L\n0.1,20\n0.2,10\n")
    assert _run(tmp_path / "o", "fit", "--input", str(table)) == 3


def test_manifest_and_replay(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--outdir", str(out), "exp2", "--config", str(CONFIGS / "demo.cfg")]) == 0
    manifest = json.loads((out / "exp2.manifest.json").read_text())
    for key in ("command", "argv", "config", "seeds", "version", "backend", "started", "finished", "outputs"):
        assert key in manifest
    assert {o["file"] for o in manifest["outputs"]} == {"exp2_scales.csv", "exp2_fit.txt"}
    capsys.readouterr()
    code = main(["--outdir", str(tmp_path / "again"), "replay", "--manifest", str(out / "exp2.manifest.json")])
    assert code == 0
    assert capsys.readouterr().out.strip().endswith("REPLAY_OK 2 file(s)")
    assert _tables(out) == _tables(tmp_path / "again")


def test_replay_detects_tampering(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--outdir", str(out), "decode", "--fluxes", "1/3", "--total", "2/3", "--cutoff", "2"]) == 0
    mpath = out / "decode.manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["outputs"][0]["sha256"] = "0" * 64
    mpath.write_text(json.dumps(manifest))
    assert main(["--outdir", str(tmp_path / "b"), "replay", "--manifest", str(mpath)]) == 3
    assert "REPLAY_MISMATCH" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qpathdim", "--outdir", str(tmp_path), "decode", "--fluxes", "1/3", "--total", "0", "--cutoff", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and proc.stdout == "0\n"
