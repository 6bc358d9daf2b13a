import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclap import (
    DifferentialStructure,
    FractionalParams,
    build_product_extension,
    chain_space,
    cycle_space,
    el_form,
    example_structure,
    gradient,
    lattice_domain,
    monotonicity_gap,
    p_energy,
    p_energy_grad,
)
from fraclap.errors import MissingCoords, ValidationError
from fraclap.extension import graph_domain
from fraclap.space import space_from_coords

PS = [1.5, 2.0, 3.0, 4.0]


def path_domain(n, w=1.0):
    edges = [(i, i + 1, 1.0, w) for i in range(n - 1)]
    return graph_domain(np.r_[0.0, np.ones(n - 2), 0.0], edges, [0, n - 1])


def random_domain(n, seed):
    """Connected random graph: a spanning path plus random chords."""
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1, rng.uniform(0.5, 2), rng.uniform(0.5, 2)) for i in range(n - 1)]
    for _ in range(n):
        i, j = rng.choice(n, 2, replace=False)
        edges.append((int(i), int(j), rng.uniform(0.5, 2), rng.uniform(0.5, 2)))
    mu = rng.uniform(0.5, 2, n)
    mu[:3] = 0.0
    return graph_domain(mu, edges, [0, 1, 2])


def centered_grid(n):
    xs = np.arange(n) - (n - 1) / 2.0
    X = np.array([(x, y) for y in xs for x in xs])
    return space_from_coords(X, metric="l1")


def test_constant_has_zero_gradient():
    dom = build_product_extension(cycle_space(16), FractionalParams(2.0, 0.5), M=4)
    g = gradient(dom, None, np.full(dom.node_count, 3.0))
    assert np.all(g.edge_quotients == 0) and np.all(g.magnitude == 0)


@pytest.mark.parametrize("s", [-2.0, 0.5, 3.0])
@pytest.mark.parametrize("p", PS)
def test_affine_on_chain_has_constant_magnitude(s, p):
    Z = chain_space(12)
    dom = lattice_domain(Z, FractionalParams(p, 0.5 if p < 2 else 1.0 / p))
    u = s * Z.coords[:, 0]
    np.testing.assert_allclose(gradient(dom, None, u, p).magnitude, abs(s), rtol=1e-12)


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_vertical_affine_on_product_extension(s):
    dom = build_product_extension(cycle_space(8), FractionalParams(2.0, 0.5), M=6, Y_max=20.0)
    u = s * dom.y_of
    mag = gradient(dom, None, u, 2.0).magnitude
    np.testing.assert_allclose(mag, s, rtol=1e-12)


def test_example_structure_doubles_left_derivative():
    Z = centered_grid(8)
    dom = lattice_domain(Z, FractionalParams(2.0, 0.5))
    st_ = example_structure(Z.coords)
    x = Z.coords[:, 0]
    mag = gradient(dom, st_, x).magnitude
    np.testing.assert_allclose(mag[x < 0], 2.0, rtol=1e-12)
    np.testing.assert_allclose(mag[x > 0], 1.0, rtol=1e-12)


def test_identity_anisotropic_matches_grid_energy():
    Z = centered_grid(7)
    dom = lattice_domain(Z, FractionalParams(3.0, 0.25))
    A = np.tile(np.eye(2), (Z.n, 1, 1))
    aniso = DifferentialStructure.anisotropic(A, Z.coords)
    grid = DifferentialStructure.grid(Z.coords)
    u = np.random.default_rng(3).standard_normal(Z.n)
    a, b = p_energy(dom, aniso, u, 3.0), p_energy(dom, grid, u, 3.0)
    assert abs(a - b) <= 1e-12 * b


def test_anisotropic_needs_coords():
    dom = path_domain(5)
    A = np.tile(np.eye(1), (5, 1, 1))
    with pytest.raises(MissingCoords):
        p_energy(dom, DifferentialStructure.anisotropic(A), np.arange(5.0), 2.0)


@pytest.mark.parametrize("A", [np.array([[[1.0, 2.0], [0.0, 1.0]]]),
                               np.array([[[1.0, 0.0], [0.0, -1.0]]]),
                               np.ones((2, 2))])
def test_structure_rejects_non_spd(A):
    with pytest.raises(ValidationError):
        DifferentialStructure.anisotropic(A)


def test_structure_document_round_trip():
    A = np.tile(np.diag([2.0, 1.0]), (3, 1, 1))
    s = DifferentialStructure.anisotropic(A, np.zeros((3, 2)))
    back = DifferentialStructure.from_dict(s.to_dict())
    assert back.kind == "anisotropic"
    np.testing.assert_array_equal(back.A, A)


def test_single_edge_energy():
    dom = graph_domain([0.0, 0.0], [(0, 1, 1.0, 1.0)], [0, 1])
    assert p_energy(dom, None, [0.0, 1.0], 3.0) == pytest.approx(1.0)


def test_path_el_form_value():
    dom = path_domain(4)
    u, v = np.array([0.0, 1, 2, 3]), np.array([0.0, 0, 1, 1])
    assert el_form(dom, None, u, v, 2.0) == pytest.approx(1.0)
    assert el_form(dom, None, v, u, 2.0) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(PS), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3),
       st.integers(0, 2 ** 32 - 1))
def test_energy_homogeneity(p, c, seed):
    dom = random_domain(15, seed)
    u = np.random.default_rng(seed).standard_normal(15)
    assert p_energy(dom, None, c * u, p) == pytest.approx(abs(c) ** p * p_energy(dom, None, u, p),
                                                          rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1.5, 2.0, 3.0]), st.integers(0, 2 ** 32 - 1))
def test_el_form_identities(p, seed):
    dom = random_domain(20, seed)
    rng = np.random.default_rng(seed)
    u, v, w = rng.standard_normal((3, 20))
    E = p_energy(dom, None, u, p)
    assert el_form(dom, None, u, u, p) == pytest.approx(E, rel=1e-12)
    assert abs(el_form(dom, None, u, np.ones(20), p)) <= 1e-12 * E
    lin = el_form(dom, None, u, 2 * v - 3 * w, p)
    assert lin == pytest.approx(2 * el_form(dom, None, u, v, p) - 3 * el_form(dom, None, u, w, p),
                                rel=1e-9, abs=1e-12)
    if p == 2.0:
        assert el_form(dom, None, u, v, p) == pytest.approx(el_form(dom, None, v, u, p), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(PS), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1))
def test_energy_convexity(p, t, seed):
    dom = random_domain(20, seed)
    u, v = np.random.default_rng(seed).standard_normal((2, 20))
    lhs = p_energy(dom, None, t * u + (1 - t) * v, p)
    rhs = t * p_energy(dom, None, u, p) + (1 - t) * p_energy(dom, None, v, p)
    assert lhs <= rhs + 1e-10


@pytest.mark.parametrize("p", PS)
@pytest.mark.parametrize("seed", range(5))
def test_energy_gradient_matches_finite_differences(p, seed):
    dom = random_domain(20, seed)
    rng = np.random.default_rng(100 + seed)
    u = rng.standard_normal(20)
    g = p_energy_grad(dom, None, u, p)
    h = 1e-6
    fd = np.array([(p_energy(dom, None, u + h * e, p) - p_energy(dom, None, u - h * e, p)) / (2 * h)
                   for e in np.eye(20)])
    assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


@pytest.mark.parametrize("p", PS)
def test_anisotropic_gradient_matches_finite_differences(p):
    Z = centered_grid(5)
    dom = lattice_domain(Z, FractionalParams(p, 0.5 if p < 2 else 1.0 / p))
    st_ = example_structure(Z.coords)
    u = np.random.default_rng(1).standard_normal(Z.n)
    g = p_energy_grad(dom, st_, u, p)
    h = 1e-6
    fd = np.array([(p_energy(dom, st_, u + h * e, p) - p_energy(dom, st_, u - h * e, p)) / (2 * h)
                   for e in np.eye(Z.n)])
    assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


def test_gradient_magnitudes_reproduce_energy():
    dom = build_product_extension(cycle_space(16), FractionalParams(3.0, 0.25), M=5)
    u = np.random.default_rng(2).standard_normal(dom.node_count)
    mag = gradient(dom, None, u, 3.0).magnitude
    assert np.dot(dom.mu, mag ** 3) == pytest.approx(p_energy(dom, None, u, 3.0), rel=1e-12)


@pytest.mark.parametrize("p", PS)
def test_monotonicity_gap_zero_on_diagonal(p):
    z = np.array([0.3, -1.2])
    assert monotonicity_gap(z, z, p) == 0.0


def test_monotonicity_gap_p2_is_squared_distance():
    rng = np.random.default_rng(4)
    z, w = rng.standard_normal((2, 100, 3))
    np.testing.assert_allclose(monotonicity_gap(z, w, 2.0), ((z - w) ** 2).sum(axis=1), rtol=1e-12)


def test_monotonicity_gap_p3_lower_bound():
    rng = np.random.default_rng(5)
    z, w = rng.standard_normal((2, 1000, 2))
    gap = monotonicity_gap(z, w, 3.0)
    c = np.min(gap / np.linalg.norm(z - w, axis=1) ** 3)
    assert np.all(gap >= 0)
    assert c >= 0.5 - 1e-12  # 2**(2-p) for p >= 2


@settings(max_examples=50, deadline=None)
@given(st.floats(1.05, 6.0), st.integers(0, 2 ** 32 - 1))
def test_monotonicity_gap_nonnegative(p, seed):
    z, w = np.random.default_rng(seed).standard_normal((2, 200, 2))
    assert np.all(monotonicity_gap(z, w, p) >= 0.0)
