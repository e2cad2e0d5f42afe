"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The benchmark runs are shared through a session fixture; together they take
roughly three times one 2199-vertex run to t = 5 s.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ncfsi.cli import run_simulation
from ncfsi.config import default_config
from ncfsi.mesh import signed_areas
from ncfsi.output import read_tip_csv
from ncfsi.verification import (
    classical_regression,
    mms_cosserat_fixed_domain,
    mooney_rivlin_chain_check,
    oscillation_metrics,
)

TESTS = Path(__file__).parent
C1_VALUES = (1e6, 2e6, 4e6)


class _Run:
    def __init__(self, c1, out, mesh):
        self.min_area = np.inf
        self.steps = 0
        cfg = default_config({"c1": repr(c1), "mode": "classical", "t_max": "5.0", "dt": "0.005", "output": str(out)})
        run_simulation(cfg, mesh=mesh, on_step=self._watch)
        self.tip = read_tip_csv(out / "tip.csv")
        self.osc = oscillation_metrics(self.tip[:, 0], self.tip[:, 2])

    def _watch(self, state):
        self.steps += 1
        self.min_area = min(self.min_area, float(signed_areas(state.mesh.vertices, state.mesh.triangles).min()))


@pytest.fixture(scope="session")
def benchmark_runs(bench_2199, tmp_path_factory):
    cache = {}

    def get(c1):
        if c1 not in cache:
            cache[c1] = _Run(c1, tmp_path_factory.mktemp(f"bench_c1_{c1:.0e}"), bench_2199)
        return cache[c1]

    return get


def test_criterion_1_benchmark_oscillation(benchmark_runs, bench_2199, acceptance_report):
    assert abs(bench_2199.n_vertices - 2199) <= 0.2 * 2199
    run = benchmark_runs(1e6)
    o = run.osc
    f_ok = abs(o.frequency - 4.5) <= 0.2 * 4.5
    a_ok = abs(o.amplitude - 0.03) <= 0.3 * 0.03
    t_ok = abs(o.onset - 2.0) <= 0.5
    acceptance_report(
        "criterion 1 benchmark oscillation",
        f_ok and a_ok and t_ok,
        f"frequency {o.frequency:.3f} Hz (4.5 +/- 20%) {'ok' if f_ok else 'out'}, "
        f"amplitude {o.amplitude:.4g} m (0.03 +/- 30%) {'ok' if a_ok else 'out'}, "
        f"onset {o.onset:.3f} s (2 +/- 0.5) {'ok' if t_ok else 'out'}",
    )
    assert f_ok, o.frequency
    assert a_ok, o.amplitude
    assert t_ok, o.onset


def test_criterion_2_c1_monotonicity(benchmark_runs, acceptance_report):
    amps = [benchmark_runs(c1).osc.amplitude for c1 in C1_VALUES]
    ok = all(a > b for a, b in zip(amps, amps[1:]))
    detail = ", ".join(f"c1={c1:.0e}: {a:.4g}" for c1, a in zip(C1_VALUES, amps))
    acceptance_report("criterion 2 c1 monotonicity", ok, detail + " (strictly decreasing required)")
    assert ok, amps


def test_criterion_3_mms_convergence(acceptance_report):
    table = mms_cosserat_fixed_domain([1 / 8, 1 / 16, 1 / 32], n_steps=5)
    need = {"err_u_H1": 1.8, "err_w_H1": 1.8, "err_p_L2": 1.5}
    ok = all(table.monotone(k) and min(table.orders(k)) >= v for k, v in need.items())
    detail = ", ".join(f"{k} orders {[round(o, 3) for o in table.orders(k)]} (>= {v})" for k, v in need.items())
    acceptance_report("criterion 3 MMS convergence", ok, detail)
    print(table.to_csv())
    assert ok


def test_criterion_4_classical_regression(acceptance_report):
    reg = classical_regression(50)
    ok = reg.max_deviation <= 1e-12 and len(reg.deviations) == 50
    acceptance_report("criterion 4 classical-limit regression", ok, f"max per-step |u_on - u_off|_inf = {reg.max_deviation:.3e} over {len(reg.deviations)} steps (<= 1e-12)")
    assert ok


def test_criterion_5_mooney_rivlin_chain(acceptance_report):
    rep = mooney_rivlin_chain_check(100, tol=1e-10)
    acceptance_report("criterion 5 Mooney-Rivlin chain", rep.passed, f"max relative discrepancy {rep.max_relative:.3e} over 100 trials (<= 1e-10)")
    assert rep.passed


INVARIANT_TESTS = {
    "quadrature exactness": ["test_fem.py::test_quadrature_exact_to_degree_four", "test_fem.py::test_quadrature_examples"],
    "P1 mass pattern": ["test_fem.py::test_p1_mass_pattern_against_dense_oracle"],
    "partition of unity": ["test_fem.py::test_partition_of_unity"],
    "curl identities": [
        "test_physics.py::test_curl_scalar_examples",
        "test_physics.py::test_curl_vector_examples",
        "test_physics.py::test_curl_of_gradient_vanishes",
        "test_stepper.py::test_coupling_integration_by_parts_single_triangle",
    ],
    "divergence-penalty bound": ["test_stepper.py::test_divergence_controlled_by_penalty"],
    "Dirichlet exactness": ["test_stepper.py::test_dirichlet_values_exact", "test_linalg.py::test_dirichlet_linear_ramp"],
    "tip.csv byte determinism": ["test_cli.py::test_identical_runs_are_byte_identical"],
}


def test_criterion_6_invariant_suite(benchmark_runs, acceptance_report):
    results = {}
    for name, ids in INVARIANT_TESTS.items():
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(TESTS / i) for i in ids]],
            capture_output=True,
            text=True,
            cwd=TESTS.parent,
        )
        results[name] = proc.returncode == 0
    run = benchmark_runs(1e6)
    results["mesh positivity through benchmark"] = run.steps == 1000 and run.min_area > 0
    ok = all(results.values())
    failed = [k for k, v in results.items() if not v]
    acceptance_report(
        "criterion 6 invariant suite",
        ok,
        f"{sum(results.values())}/{len(results)} groups pass; min signed area over {run.steps} steps {run.min_area:.3e}"
        + (f"; failed: {failed}" if failed else ""),
    )
    assert ok, failed
