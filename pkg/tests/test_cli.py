import csv
import math

import numpy as np
import pytest

from rlalm.cli import CT_METHODS, LASSO_METHODS, main
from rlalm.solvers import ConvergenceRecord

SMALL_LASSO = """
[experiment]
seed = 2
[scenario]
rows = 20
cols = 40
sparsity = 4
[reference]
iterations = 3000
[solver simple]
method = simple
alpha = 1.999
rho = 0.5
iterations = 100
[solver relaxed]
method = proposed
alpha = 1.999
rho = 0.5
iterations = 100
"""

SMALL_CT = """
[experiment]
seed = 1
[scenario]
nx = 20
ny = 20
num_views = 16
pixel_size = 15
[reference]
iterations = 200
[solver relaxed]
method = os-lalm
alpha = 1.999
subsets = 4
iterations = 3
[solver sqs]
method = os-sqs
subsets = 2
iterations = 3
"""


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_lasso_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run-lasso", "--config", _write(tmp_path, SMALL_LASSO), "--out", str(out)]) == 0
    for name in ("simple", "relaxed"):
        rec = ConvergenceRecord.from_csv(out / f"{name}.csv")
        assert len(rec) == 101
        gaps = rec.column("ergodic_gap")[1:]
        assert np.all(gaps >= -1e-9)
        bounds = _rows(out / f"{name}_bounds.csv")
        assert [int(r["K"]) for r in bounds] == [1, 2, 5, 10, 20, 50, 100]
        for r in bounds:
            assert float(r["gap"]) <= float(r["bound"])


def test_seed_override_changes_instance(tmp_path):
    cfg = _write(tmp_path, SMALL_LASSO)
    main(["run-lasso", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run-lasso", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    main(["run-lasso", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5"])
    a, b, c = ((tmp_path / d / "simple.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_unknown_method_reports_valid_names(tmp_path, capsys):
    bad = SMALL_LASSO.replace("method = simple", "method = quadratic")
    code = main(["run-lasso", "--config", _write(tmp_path, bad), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 2
    assert len(err.strip().splitlines()) == 1
    assert err.startswith("rlalm: error: ConfigurationError:")
    for name in LASSO_METHODS:
        assert name in err


def test_ct_unknown_method_lists_ct_names(tmp_path, capsys):
    bad = SMALL_CT.replace("method = os-sqs", "method = fista")
    assert main(["run-ct", "--config", _write(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert all(name in err for name in CT_METHODS)


def test_bad_invocations(tmp_path, capsys):
    assert main(["run-lasso", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2
    assert main([]) == 2
    assert main(["run-lasso", "--config", _write(tmp_path, "not ini at all"), "--out", str(tmp_path)]) == 2
    # LASSO runs need a numeric penalty
    fixed = SMALL_LASSO.replace("rho = 0.5", "rho = continuation", 1)
    assert main(["run-lasso", "--config", _write(tmp_path, fixed, "c.ini"), "--out", str(tmp_path)]) == 2
    lines = [l for l in capsys.readouterr().err.splitlines() if l]
    assert len(lines) == 5 and all(l.startswith("rlalm: error:") for l in lines)


def test_run_ct_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SMALL_CT)
    for d in ("a", "b"):
        assert main(["run-ct", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for name in ("sinogram.raw", "reference.pgm", "initial.raw", "truth.pgm", "relaxed.pgm", "sqs_diff.pgm"):
        assert (a / name).exists()
    for name in ("relaxed.csv", "sqs.csv", "reference.raw"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rec = ConvergenceRecord.from_csv(a / "relaxed.csv", subsets=4)
    assert len(rec) == 13
    assert np.all(np.isfinite(rec.column("rms_hu")))


def test_analyze_spectral(tmp_path):
    cfg = _write(
        tmp_path,
        "[spectral]\nratios = 0.5, 0.01, 0.001, 1e-4\nalphas = 1.0, 1.5, 1.999\nrhos = 0.1, 1.0\n",
    )
    out = tmp_path / "s"
    assert main(["analyze-spectral", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "spectral.csv")
    assert len(rows) == 12
    by_ratio = {}
    for r in rows:
        by_ratio.setdefault(r["ratio"], set()).add(r["critical_rho"])
    assert all(len(v) == 1 for v in by_ratio.values())
    assert float(rows[0]["critical_rho"]) == pytest.approx(1.0)
    for r in rows:
        if float(r["ratio"]) <= 0.01:
            omega, approx = float(r["damping_frequency"]), float(r["alpha_sqrt_ratio"])
            assert abs(omega - approx) <= 0.05 * approx
    modes = _rows(out / "modes.csv")
    assert len(modes) == 24
    assert all(float(m["abs_lambda1"]) >= float(m["abs_lambda2"]) for m in modes)


def test_spectral_default_runs(tmp_path):
    assert main(["analyze-spectral", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "spectral.csv")
    assert math.isclose(float(rows[0]["critical_rho"]), 1.0)


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("rlalm ")
