import subprocess
from pathlib import Path
import sys

import numpy as np
import pytest

from regret_adjust import _ext
from regret_adjust._ext import fallback

from oracles import box_lp_max, vertex_max_brute

native = pytest.importorskip("regret_adjust._ext._vertex")


def random_quadratic(rng, d):
    L = rng.normal(size=(d, d))
    Q = L @ L.T
    lo = rng.uniform(-2, 0, d)
    hi = lo + rng.uniform(0.1, 2, d)
    return Q, rng.normal(size=d), float(rng.normal()), lo, hi


def test_backend_is_compiled():
    assert _ext.BACKEND == "cython"


@pytest.mark.parametrize("seed", range(20))
def test_vertex_max_native_matches_fallback_and_brute_force(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 11))
    Q, g, c0, lo, hi = random_quadratic(rng, d)
    v_nat, b_nat = native.vertex_max(Q, g, c0, lo, hi, 1e-12)
    v_py, b_py = fallback.vertex_max(Q, g, c0, lo, hi, 1e-12)
    ref, _ = vertex_max_brute(lambda u: 0.5 * u @ Q @ u + g @ u + c0, lo, hi)
    assert v_nat == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert v_py == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert b_nat == b_py


def test_vertex_max_ties_go_to_smallest_bits():
    d = 3
    Q = np.zeros((d, d))
    g = np.zeros(d)
    lo, hi = -np.ones(d), np.ones(d)
    assert native.vertex_max(Q, g, 0.0, lo, hi, 1e-12) == (0.0, 0)
    assert fallback.vertex_max(Q, g, 0.0, lo, hi, 1e-12) == (0.0, 0)


def test_vertex_max_skips_degenerate_coordinates():
    Q = np.diag([1.0, 1.0, 1.0])
    g = np.array([0.0, 0.0, 0.0])
    lo, hi = np.array([0.0, 5.0, -1.0]), np.array([1.0, 5.0, 3.0])
    v, bits = _ext.vertex_max(Q, g, 0.0, lo, hi)
    assert v == pytest.approx(0.5 * (1 + 25 + 9))
    assert bits == 0b11  # both free coordinates at their upper bounds


@pytest.mark.parametrize("seed", range(10))
def test_rows_box_max_native_matches_fallback(seed):
    rng = np.random.default_rng(seed)
    d, m = int(rng.integers(1, 8)), int(rng.integers(1, 10))
    C = rng.normal(size=(m, d))
    C[rng.random((m, d)) < 0.2] = 0.0
    const = rng.normal(size=m)
    lo = rng.uniform(-2, 0, d)
    hi = lo + rng.uniform(0, 2, d)
    v_nat, a_nat = native.rows_box_max(C, const, lo, hi)
    v_py, a_py = fallback.rows_box_max(C, const, lo, hi)
    assert np.allclose(v_nat, v_py, rtol=1e-14, atol=1e-14)
    assert np.array_equal(a_nat, a_py)
    for j in range(m):
        ref, _ = box_lp_max(C[j], lo, hi)
        assert v_nat[j] == pytest.approx(ref + const[j])


def test_pure_environment_switch():
    code = "import regret_adjust._ext as e; print(e.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"REGRET_ADJUST_PURE": "1", "PATH": ""}, capture_output=True, text=True
    )
    assert out.stdout.strip() == "python"


def test_kernel_benchmark_script_runs(tmp_path):
    script = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    out_csv = tmp_path / "k.csv"
    res = subprocess.run([sys.executable, str(script), "--repeats", "1", "--csv", str(out_csv)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "kernel,size,cython_s,numpy_s,speedup" and len(rows) == 8
