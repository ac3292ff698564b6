"""End-to-end CLI behaviour: exit codes, artifacts, and rerun stability."""

import csv
import io
import json
import os
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tcilab.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_PASS, main
from tcilab.fieldio import read_field_path


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def artifact_dir(stdout: str) -> str:
    m = re.search(r"artifacts: (.+)$", stdout, re.MULTILINE)
    assert m, stdout
    return m.group(1)


def read_artifact(directory: str, name: str) -> str:
    with open(os.path.join(directory, name), "r", encoding="utf-8") as fh:
        return fh.read()


TCI_FAST = (
    "--grid.L", "5", "--grid.nx", "81", "--grid.T", "0.25", "--grid.nt", "21",
    "--run.replicas", "8", "--tci.amplitudes", "0.5,1",
)


# ---------------------------------------------------------------------------
# argument and config failures
# ---------------------------------------------------------------------------


def test_no_command_prints_help_and_exits_config(capsys):
    rc, _, err = run_cli(capsys)
    assert rc == EXIT_CONFIG
    assert "command" in err


def test_unknown_command_is_rejected_by_the_parser(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_bad_value_exits_config_with_context(capsys, tmp_path):
    rc, _, err = run_cli(
        capsys, "tci", "--grid.nx", "400", "--run.output_root", str(tmp_path)
    )
    assert rc == EXIT_CONFIG
    assert "config error" in err and "odd" in err
    assert not os.listdir(tmp_path)  # nothing written on config failure


def test_missing_config_file_exits_config(capsys, tmp_path):
    rc, _, err = run_cli(capsys, "tci", "--config", str(tmp_path / "absent.ini"))
    assert rc == EXIT_CONFIG and "config error" in err


def test_dangling_override_exits_config(capsys):
    rc, _, err = run_cli(capsys, "tci", "--grid.nx")
    assert rc == EXIT_CONFIG and "missing a value" in err


def test_alpha_out_of_range_exits_config(capsys, tmp_path):
    rc, _, err = run_cli(
        capsys, "convolution-check", "--convolution.alpha", "0.2",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_CONFIG and "(0, 1/8)" in err


def test_inadmissible_time_step_exits_config(capsys, tmp_path):
    rc, _, err = run_cli(
        capsys, "tci", "--grid.L", "10", "--grid.nx", "81", "--grid.T", "0.25",
        "--grid.nt", "100", "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_CONFIG and "time step too small" in err


def test_config_file_feeds_the_run(capsys, tmp_path):
    cfgfile = tmp_path / "exp.ini"
    cfgfile.write_text(
        "[grid]\nL = 5.0\nnx = 81\nT = 0.25\nnt = 21\n\n"
        "[run]\nreplicas = 8\n\n[tci]\namplitudes = 1\n",
        encoding="utf-8",
    )
    rc, out, _ = run_cli(
        capsys, "tci", "--config", str(cfgfile), "--run.output_root", str(tmp_path)
    )
    assert rc == EXIT_PASS
    snapshot = read_artifact(artifact_dir(out), "config.ini")
    assert "nx = 81" in snapshot and "amplitudes = 1.0" in snapshot


# ---------------------------------------------------------------------------
# passing runs per command
# ---------------------------------------------------------------------------


def test_verify_kernels_small_grid(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "verify-kernels", "--grid.L", "6", "--grid.nx", "81",
        "--grid.T", "0.5", "--grid.nt", "10", "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS and "PASS" in out
    d = artifact_dir(out)
    assert sorted(os.listdir(d)) == [
        "MANIFEST", "bounds.csv", "config.ini", "ratios.svg", "report.json", "seed.txt",
    ]
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "bounds.csv"))))
    assert rows and all(r["passed"] == "True" for r in rows)
    assert all(float(r["max_ratio"]) <= 1.001 for r in rows)
    ET.fromstring(read_artifact(d, "ratios.svg"))


def test_ito_isometry_reduced_grid_passes(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "ito-isometry", "--grid.L", "5", "--grid.nx", "205",
        "--grid.T", "1", "--grid.nt", "400", "--run.replicas", "128",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS
    assert out.count("ito-isometry[") == 2 and "FAIL" not in out
    d = artifact_dir(out)
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "cases.csv"))))
    assert [r["name"] for r in rows] == ["constant", "indicator"]
    assert all(abs(float(r["z_continuum"])) <= 3.0 for r in rows)
    ET.fromstring(read_artifact(d, "isometry.svg"))


def test_ito_isometry_underpowered_exits_assertion(capsys, tmp_path):
    rc, _, err = run_cli(
        capsys, "ito-isometry", "--run.replicas", "8",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_ASSERTION
    assert "UnderpoweredError" in err and "raise replicas" in err


def test_convolution_check_contracts(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "convolution-check", "--run.replicas", "2",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS and "PASS" in out
    d = artifact_dir(out)
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "gaps.csv"))))
    assert len(rows) == 2
    assert rows[0]["contraction_from_prev"] == ""
    assert float(rows[1]["contraction_from_prev"]) < 0.75
    ET.fromstring(read_artifact(d, "gaps.svg"))


def test_moments_small_grid_passes(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "moments", "--grid.L", "4", "--grid.nx", "81", "--grid.T", "0.25",
        "--grid.nt", "30", "--moments.lam", "0.5", "--moments.p_l2", "2",
        "--moments.p_sup", "2", "--moments.time_factor", "3",
        "--moments.replicas", "256", "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS
    assert out.count("moments[") == 2 and "FAIL" not in out
    d = artifact_dir(out)
    stab = list(csv.DictReader(io.StringIO(read_artifact(d, "stability.csv"))))
    assert {r["family"] for r in stab} == {"weighted-l2", "weighted-sup"}
    assert all(0.5 <= float(r["stability"]) <= 1.5 for r in stab)
    levels = list(csv.DictReader(io.StringIO(read_artifact(d, "levels.csv"))))
    assert len(levels) == 4  # 2 families x 2 levels
    for name in ("ratios_l2.svg", "ratios_sup.svg"):
        ET.fromstring(read_artifact(d, name))


def test_moments_underpowered_exits_assertion(capsys, tmp_path):
    rc, _, err = run_cli(
        capsys, "moments", "--grid.L", "4", "--grid.nx", "27", "--grid.T", "0.25",
        "--grid.nt", "10", "--moments.lam", "0.5", "--moments.replicas", "64",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_ASSERTION and "UnderpoweredError" in err


def test_tci_run_writes_reports_and_passes(capsys, tmp_path):
    rc, out, _ = run_cli(capsys, "tci", *TCI_FAST, "--run.output_root", str(tmp_path))
    assert rc == EXIT_PASS and "PASS" in out
    d = artifact_dir(out)
    names = sorted(os.listdir(d))
    assert names == [
        "MANIFEST", "chat.csv", "chat_l2.svg", "chat_sup.svg", "config.ini",
        "fcurve.csv", "fcurve.svg", "report.json", "seed.txt",
    ]
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "chat.csv"))))
    assert {r["amplitude"] for r in rows} == {"0.5", "1.0"}
    fcurve = list(csv.DictReader(io.StringIO(read_artifact(d, "fcurve.csv"))))
    assert {"amplitude", "lam", "t", "value"} <= set(fcurve[0])
    assert all(float(r["value"]) == 0.0 for r in fcurve if float(r["t"]) == 0.0)


def test_tci_rerun_and_worker_count_are_byte_identical(capsys, tmp_path):
    args = ("tci", *TCI_FAST, "--run.output_root", str(tmp_path))
    rc1, out1, _ = run_cli(capsys, *args)
    d1 = artifact_dir(out1)
    manifest1 = read_artifact(d1, "MANIFEST")
    rc2, out2, _ = run_cli(capsys, *args)
    rc3, out3, _ = run_cli(capsys, *args, "--run.workers", "2")
    assert rc1 == rc2 == rc3 == EXIT_PASS
    assert artifact_dir(out2) == d1 and artifact_dir(out3) == d1
    assert read_artifact(d1, "MANIFEST") == manifest1


def test_tci_zero_shift_is_trivially_zero(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "tci", *TCI_FAST, "--shift.preset", "zero",
        "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS
    d = artifact_dir(out)
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "chat.csv"))))
    assert rows and all(r["c_hat"] == "" for r in rows)  # no constant without entropy
    report = json.loads(read_artifact(d, "report.json"))
    for amp in report["experiment"]["per_amplitude"]:
        assert amp["entropy"] == 0.0 and amp["max_abs_diff"] == 0.0
        assert all(v == 0.0 for v in amp["y_l2"].values())
        assert all(v == 0.0 for v in amp["y_sup"].values())


def test_lipschitz_run_passes(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "lipschitz", "--grid.L", "5", "--grid.nx", "81", "--grid.T", "0.25",
        "--grid.nt", "21", "--run.replicas", "16", "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS and "PASS" in out
    d = artifact_dir(out)
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "ratios.csv"))))
    assert len(rows) == 3  # one per default scale
    assert all(float(r["ratio_l2"]) >= 1.0 for r in rows)
    ET.fromstring(read_artifact(d, "ratios.svg"))


def test_simulate_writes_decodable_fields(capsys, tmp_path):
    rc, out, _ = run_cli(
        capsys, "simulate", "--grid.L", "5", "--grid.nx", "81", "--grid.T", "0.25",
        "--grid.nt", "21", "--run.seed", "9", "--run.output_root", str(tmp_path),
    )
    assert rc == EXIT_PASS
    d = artifact_dir(out)
    shifted, seed, replica = read_field_path(os.path.join(d, "shifted.field"))
    unshifted, _, _ = read_field_path(os.path.join(d, "unshifted.field"))
    assert (seed, replica) == (9, 0)
    assert shifted.values.shape == (22, 81)
    assert not np.array_equal(shifted.values, unshifted.values)
    rows = list(csv.DictReader(io.StringIO(read_artifact(d, "snapshots.csv"))))
    assert len(rows) == 5 * 81
    for name in ("fields.svg", "difference.svg"):
        ET.fromstring(read_artifact(d, name))


def test_simulate_rerun_is_byte_identical(capsys, tmp_path):
    args = (
        "simulate", "--grid.L", "5", "--grid.nx", "81", "--grid.T", "0.25",
        "--grid.nt", "21", "--run.output_root", str(tmp_path),
    )
    _, out1, _ = run_cli(capsys, *args)
    manifest1 = read_artifact(artifact_dir(out1), "MANIFEST")
    _, out2, _ = run_cli(capsys, *args)
    assert read_artifact(artifact_dir(out2), "MANIFEST") == manifest1
