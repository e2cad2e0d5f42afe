import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncfsi.errors import ConfigError, PointOutsideDomain
from ncfsi.fem import P2, P2V, Field
from ncfsi.mesh import SOLID, rectangle_mesh
from ncfsi.physics import (
    MaterialParams,
    curl_scalar,
    curl_vector,
    density,
    extra_stress,
    inflow_profile,
    solid_extra_stress,
)


@pytest.fixture(scope="module")
def mesh():
    return rectangle_mesh(4, 4, solid=lambda c: c[0] > 0.5)


def test_defaults_and_c3():
    p = MaterialParams()
    assert (p.rho_f, p.rho_s, p.c1, p.Ubar, p.zeta) == (1e3, 1e3, 1e6, 2.0, 1e-8)
    assert p.nu_f == pytest.approx(1e-3)
    assert p.c3 == pytest.approx(p.rho_s / p.rho_f * p.c1)
    assert MaterialParams(rho_s=2e3).c3 == pytest.approx(2e6)


@pytest.mark.parametrize(
    "kw,key",
    [(dict(rho_f=0), "rho_f"), (dict(mu=-1), "mu"), (dict(mu_r=-0.1), "mu_r"), (dict(zeta=1e-3), "zeta"), (dict(zeta=0), "zeta"), (dict(c1=-1), "c1")],
)
def test_invalid_params(kw, key):
    with pytest.raises(ConfigError) as info:
        MaterialParams(**kw)
    assert info.value.key == key


def test_classical_zeroes_micro_coefficients():
    p = MaterialParams(lambda2=0.3).classical()
    assert (p.mu_r, p.lambda1, p.lambda2) == (0.0, 0.0, 0.0)
    assert p.mu == 1.0


def test_density_by_region(mesh):
    rho = density(mesh, MaterialParams(rho_s=2500.0))
    np.testing.assert_array_equal(rho, np.where(mesh.region == SOLID, 2500.0, 1000.0))


def test_inflow_examples():
    H = 0.41
    np.testing.assert_array_equal(inflow_profile(0.0, 2.0, H), [0.0, 0.0])
    np.testing.assert_allclose(inflow_profile(H, 2.0, H), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(inflow_profile(H / 2, 2.0, H), [3.0, 0.0], rtol=1e-15)


def test_inflow_flux():
    H, U = 0.41, 2.0
    y = np.linspace(0.0, H, 2001)
    ux = inflow_profile(y, U, H)[:, 0]
    flux = np.sum(0.5 * (ux[1:] + ux[:-1]) * np.diff(y))
    # trapezoid error for a parabola: -H^3 f''/(12 n^2)
    correction = U * 6 / H**2 * 2 * H / (12 * 2000**2) * H**2
    assert flux + correction == pytest.approx(U * H, abs=1e-12)
    assert flux == pytest.approx(0.82, rel=1e-6)


def test_inflow_rejects_outside():
    with pytest.raises(ValueError):
        inflow_profile(-0.01, 2.0, 0.41)
    with pytest.raises(ValueError):
        inflow_profile(np.array([0.1, 0.5]), 2.0, 0.41)


def test_curl_scalar_examples(mesh):
    x = (0.37, 0.61)
    np.testing.assert_allclose(curl_scalar(Field.from_function(P2, mesh, lambda X, Y: 4.0), x), [0, 0], atol=1e-13)
    np.testing.assert_allclose(curl_scalar(Field.from_function(P2, mesh, lambda X, Y: X), x), [0, -1], atol=1e-13)
    np.testing.assert_allclose(curl_scalar(Field.from_function(P2, mesh, lambda X, Y: Y**2), x), [2 * x[1], 0], atol=1e-12)


def test_curl_vector_examples(mesh):
    x = (0.21, 0.83)
    assert curl_vector(Field.from_function(P2V, mesh, lambda X, Y: (1.0, -2.0)), x) == pytest.approx(0, abs=1e-13)
    assert curl_vector(Field.from_function(P2V, mesh, lambda X, Y: (-Y, X)), x) == pytest.approx(2, abs=1e-13)
    assert curl_vector(Field.from_function(P2V, mesh, lambda X, Y: (Y, 0 * X)), x) == pytest.approx(-1, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_curl_of_gradient_vanishes(c, x, y):
    # phi quadratic -> grad phi is linear and exactly represented in P2
    m = rectangle_mesh(3, 3)

    def grad(X, Y):
        return (c[1] + 2 * c[3] * X + c[4] * Y, c[2] + c[4] * X + 2 * c[5] * Y)

    u = Field.from_function(P2V, m, grad)
    assert abs(curl_vector(u, (x, y))) < 1e-12


def test_curl_outside_raises(mesh):
    with pytest.raises(PointOutsideDomain):
        curl_scalar(Field.zeros(P2, mesh), (2.0, 2.0))


def test_solid_extra_stress_examples(mesh):
    k = int(np.flatnonzero(mesh.region == SOLID)[0])
    bary = np.array([0.2, 0.3, 0.5])
    assert np.all(solid_extra_stress(Field.zeros(P2V, mesh), k, bary) == 0)
    rigid = Field.from_function(P2V, mesh, lambda X, Y: (0.3, -0.1))
    np.testing.assert_allclose(solid_extra_stress(rigid, k, bary), 0, atol=1e-13)
    eps = 0.05
    stretch = Field.from_function(P2V, mesh, lambda X, Y: (eps * X, 0 * Y))
    np.testing.assert_allclose(solid_extra_stress(stretch, k, bary), [[2 * eps - eps**2, 0], [0, 0]], atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4))
def test_extra_stress_symmetric(g):
    G = np.array(g).reshape(2, 2)
    s = extra_stress(G)
    assert np.abs(s - s.T).max() <= 1e-15
    # Dd - G G^T equals I - (I - G)(I - G)^T, the Almansi form
    np.testing.assert_allclose(s, np.eye(2) - (np.eye(2) - G) @ (np.eye(2) - G).T, atol=1e-15)
