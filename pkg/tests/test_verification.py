import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncfsi.mesh import BenchmarkGeometry
from ncfsi.physics import MaterialParams
from ncfsi.verification import (
    MMS_COLUMNS,
    MMS_PARAMS,
    ConvergenceTable,
    classical_regression,
    collapsed_gauss,
    manufactured_solution,
    mms_cosserat_fixed_domain,
    mooney_rivlin_chain_check,
    mooney_rivlin_direct,
    mooney_rivlin_reduced,
    random_isochoric_gradient,
)


def test_collapsed_gauss_exactness():
    xi, w = collapsed_gauss(5)
    assert w.sum() == pytest.approx(0.5, abs=1e-15)
    from math import factorial

    for a in range(9):
        for b in range(9 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.dot(w, xi[:, 0] ** a * xi[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_manufactured_velocity_is_divergence_free():
    ms = manufactured_solution(MMS_PARAMS)
    x, y = np.random.default_rng(0).uniform(size=(2, 50))
    (dux, _), (_, duy) = ms.grad_u(x, y)
    np.testing.assert_allclose(dux + duy, 0, atol=1e-13)


def test_mms_h_halving_ratio():
    t = mms_cosserat_fixed_domain([1 / 4, 1 / 8], n_steps=2)
    ratio = t.rows[0]["err_u_H1"] / t.rows[1]["err_u_H1"]
    assert 3.2 <= ratio <= 4.8


def test_mms_decoupled_microrotation():
    # with mu_r = 0 the omega equation sees u only through convection, which is exact here only up to
    # discretization; compare omega errors with the velocity solve switched between two meshes
    p = MaterialParams(rho_f=1.0, rho_s=1.0, mu=1.0, mu_r=0.0, lambda1=1.0, micro_inertia=1e-12, c1=0.0, zeta=1e-8)
    a = mms_cosserat_fixed_domain([1 / 8], params=p, n_steps=1)
    b = mms_cosserat_fixed_domain([1 / 8], params=p.__class__(**{**{k: getattr(p, k) for k in ("rho_f", "rho_s", "lambda1", "micro_inertia", "c1", "zeta", "mu_r")}, "mu": 5.0}), n_steps=1)
    # changing the fluid viscosity changes u errors but leaves omega untouched
    assert a.rows[0]["err_u_H1"] != b.rows[0]["err_u_H1"]
    assert a.rows[0]["err_w_H1"] == pytest.approx(b.rows[0]["err_w_H1"], rel=1e-9)


def test_convergence_table_csv():
    t = ConvergenceTable(rows=[dict(h=0.5, err_u_L2=1, err_u_H1=4, err_w_L2=1, err_w_H1=4, err_p_L2=2), dict(h=0.25, err_u_L2=0.125, err_u_H1=1, err_w_L2=0.125, err_w_H1=1, err_p_L2=0.5)])
    lines = t.to_csv().splitlines()
    assert lines[0].split(",")[: len(MMS_COLUMNS)] == list(MMS_COLUMNS)
    assert lines[0].split(",")[len(MMS_COLUMNS)] == "order_u_L2"
    assert t.orders("err_u_H1") == [pytest.approx(2.0)]
    assert t.monotone("err_p_L2")


def test_chain_zero_gradient():
    G = np.zeros((2, 2))
    c1, c2 = 1e6, 3e5
    alpha = 2 * c1 * 2 - 2 * c1 - 4 * c2
    np.testing.assert_allclose(mooney_rivlin_direct(G, c1, c2), alpha * np.eye(2), rtol=1e-15)
    np.testing.assert_allclose(mooney_rivlin_reduced(G, c1, c2), alpha * np.eye(2), rtol=1e-15)


def test_chain_diagonal_gradient():
    # det(I - G) = 1 - eps^2 != 1, so the comparison uses the general (compressible) identity
    eps = 0.1
    G = np.diag([eps, -eps])
    a = mooney_rivlin_direct(G, 1e6, 3e5)
    b = mooney_rivlin_reduced(G, 1e6, 3e5, incompressible=False)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) <= 1e-12


def test_chain_random_trials():
    report = mooney_rivlin_chain_check(100)
    assert report.passed, str(report)
    assert report.max_relative <= 1e-10


def test_chain_detects_wrong_sign():
    # with the c2 sign flipped in alpha' the identity must fail: guards against a vacuous check
    rng = np.random.default_rng(3)
    G = random_isochoric_gradient(rng)
    c1, c2 = 1e6, 3e5
    a = mooney_rivlin_direct(G, c1, c2)
    b = mooney_rivlin_reduced(G, c1, c2) + 8 * c2 * np.eye(2)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) > 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_isochoric_gradient_properties(seed):
    G = random_isochoric_gradient(np.random.default_rng(seed))
    assert np.linalg.norm(G, 2) < 0.3
    assert np.linalg.det(np.eye(2) - G) == pytest.approx(1.0, abs=1e-14)


def test_classical_regression_short():
    rep = classical_regression(10, target_vertices=600)
    assert len(rep.deviations) == 10
    assert rep.max_deviation <= 1e-12


def test_coupling_is_live():
    p = MaterialParams(mu_r=0.5, lambda1=1e-3)
    rep = classical_regression(5, params=p, target_vertices=600)
    assert rep.max_deviation > 1e-6
