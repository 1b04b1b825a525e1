import math
import os
import subprocess

import pytest

import homoglab as hl

CHECKERBOARD_DECAY = """
[experiment]
kind = mu-decay
seed = 3
[ensemble]
tiles = linear(1, 0, 2, 0.5)
probs = 1
[sampling]
n = 3
ms = 0, 1
[mu]
per_unit = 3
[balance]
m = 0
n = 2
"""


def test_version_and_types():
    assert hl.__version__
    a = hl.SymMatrix([1.0, 0.5, 2.0])
    assert a.dim == 2
    assert a(0, 1) == 0.5
    assert a.det() == pytest.approx(1.75)
    op = hl.LocalOperator.linear(hl.SymMatrix.identity(2), 2.0)
    assert op(hl.SymMatrix.identity(2)) == pytest.approx(0.0)


def test_closed_form_mu():
    op = hl.LocalOperator.linear(hl.SymMatrix([1.0, 0.0, 4.0]), 2.0)
    assert hl.mu_constant_coeff(op) == pytest.approx(0.25)


def test_subdiff_measure_of_quadratic():
    n = 41
    h = 1.0 / (n - 1)
    values = [0.5 * ((-0.5 + i * h) ** 2 + (-0.5 + j * h) ** 2) for j in range(n) for i in range(n)]
    assert hl.subdiff_measure(values, n) == pytest.approx(1.0, rel=0.1)


def test_mu_estimate_and_star():
    ens = hl.TileEnsemble.checkerboard(1.0)
    v = hl.mu_estimate(ens, seed=1, per_unit=9)
    assert v > 0.0
    assert hl.mu_estimate(ens, seed=1, per_unit=9, star=True) == pytest.approx(0.0, abs=1e-12)


def test_deterministic_balance_and_cell():
    op = hl.LocalOperator.linear(hl.SymMatrix([1.5, 0.25, 2.0]), 0.5)
    ens = hl.TileEnsemble.single(op)
    a = hl.SymMatrix([0.3, -0.2, 0.1])
    b = hl.balance_constant(ens, a, m=0, n=2, tol=1e-4)
    assert b["s_hat"] == pytest.approx(op(a), abs=1e-3)
    c = hl.effective_from_cell(ens, a, [0.04, 0.02], tiles=3, n=2)
    assert c["value"] == pytest.approx(op(a), abs=1e-6)


def test_validation_errors_are_typed():
    with pytest.raises(hl.ValidationError, match="probs"):
        hl.run_id("[experiment]\nkind = mu\n[ensemble]\ntiles = linear(1,0,1,0)\nprobs = 1.1\n")
    with pytest.raises(hl.Error):
        hl.TileEnsemble([hl.LocalOperator.linear(hl.SymMatrix.identity(2), 0.0)], [0.5])


def test_run_writes_outputs(tmp_path):
    rec = hl.run(CHECKERBOARD_DECAY, tmp_path)
    assert rec["status"] == "ok"
    assert rec["id"] == hl.run_id(CHECKERBOARD_DECAY)
    first = (tmp_path / "curve.csv").read_bytes()
    with pytest.raises(hl.ValidationError):
        hl.run(CHECKERBOARD_DECAY, tmp_path)
    hl.run(CHECKERBOARD_DECAY, tmp_path, force=True)
    assert (tmp_path / "curve.csv").read_bytes() == first


def test_selftest():
    ok, text = hl.selftest()
    assert ok, text
    bad, text = hl.selftest("envelope-tolerance")
    assert not bad
    assert "FAIL envelope" in text


@pytest.mark.skipif("HOMOGLAB_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_selftest_exit_code():
    assert subprocess.run([os.environ["HOMOGLAB_CLI"], "selftest"], capture_output=True).returncode == 0
