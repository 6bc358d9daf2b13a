import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclap import (
    FractionalParams,
    besov_form,
    build_product_extension,
    cycle_space,
    dual_bound_check,
    et_form,
    extend,
    frac_apply,
    frac_solve,
    p_energy,
    solve_dirichlet,
    trace,
    validate_space,
    weight_J,
)
from fraclap.errors import NonzeroMean, ValidationError
from fraclap.fractional import (
    FormValue,
    besov_energy,
    dtn_matrix,
    et_energy,
    harmonic_extension,
    read_point_csv,
    write_point_csv,
)
from fraclap.verify import spectral_oracle_p2


def chain_with_masses(nu):
    x = np.arange(len(nu), dtype=float)
    return validate_space(np.abs(x[:, None] - x[None, :]), nu)


@pytest.fixture(scope="module")
def small():
    Z = cycle_space(32)
    P = FractionalParams(2.0, 0.5)
    return Z, P, build_product_extension(Z, P, M=10, Y_max=32.0, connectivity="base")


@pytest.fixture(scope="module")
def small_p3():
    Z = cycle_space(32)
    P = FractionalParams(3.0, 1.0 / 3.0)
    return Z, P, build_product_extension(Z, P, M=10, Y_max=32.0, connectivity="base")


def zero_mean(Z, f):
    return f - np.dot(f, Z.nu) / Z.nu.sum()


# -- weight J ------------------------------------------------------------------------------

def test_weight_vanishes_at_base_point():
    Z = cycle_space(16)
    assert weight_J(Z, 3, FractionalParams(2.0, 0.5))[3] == 0.0


def test_weight_worked_value():
    # distance 2 from x0 = 0; the open ball B(0, 2) holds points 0 and 1 of mass 2 each
    Z = chain_with_masses([2.0, 2.0, 1.0, 1.0, 1.0])
    J = weight_J(Z, 0, FractionalParams(2.0, 0.5))
    assert J[2] == pytest.approx(8.0)


def test_weight_uses_conjugate_exponent():
    Z = chain_with_masses([2.0, 2.0, 1.0, 1.0, 1.0])
    P = FractionalParams(3.0, 0.25)
    J = weight_J(Z, 0, P)
    assert J[2] == pytest.approx(2.0 ** (1.5 * 0.25) * 4.0 ** 0.5)
    assert J[4] == pytest.approx(4.0 ** (1.5 * 0.25) * 6.0 ** 0.5)


def test_weight_rejects_bad_base_point():
    with pytest.raises(ValidationError):
        weight_J(cycle_space(8), 8, FractionalParams(2.0, 0.5))


# -- Besov form ----------------------------------------------------------------------------

def test_besov_two_point_value():
    Z = chain_with_masses([1.0, 1.0])
    u = np.array([0.0, 1.0])
    assert besov_form(Z, u, u, FractionalParams(2.0, 0.5)).value == pytest.approx(2.0)


@pytest.mark.parametrize("p,theta", [(2.0, 0.5), (3.0, 0.25), (1.5, 0.6)])
def test_besov_constant_is_zero(p, theta):
    Z = cycle_space(20)
    assert besov_energy(Z, np.full(20, 4.2), FractionalParams(p, theta)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1.5, 2.0, 3.0]), st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3),
       st.integers(0, 2 ** 32 - 1))
def test_besov_homogeneity(p, c, seed):
    Z = cycle_space(16)
    P = FractionalParams(p, 0.4)
    u = np.random.default_rng(seed).standard_normal(16)
    assert besov_energy(Z, c * u, P) == pytest.approx(abs(c) ** p * besov_energy(Z, u, P), rel=1e-10)


def test_besov_form_diagonal_is_energy():
    Z = cycle_space(16)
    P = FractionalParams(3.0, 0.3)
    u = np.random.default_rng(0).standard_normal(16)
    assert besov_form(Z, u, u, P).value == pytest.approx(besov_energy(Z, u, P), rel=1e-12)


# -- trace and extension -------------------------------------------------------------------

def test_trace_of_constant(small):
    _, _, dom = small
    np.testing.assert_array_equal(trace(dom, np.full(dom.node_count, 2.5)), 2.5)


def test_trace_inverts_extend(small):
    Z, _, dom = small
    v = np.random.default_rng(1).standard_normal(Z.n)
    np.testing.assert_array_equal(trace(dom, extend(dom, v)), v)


def test_trace_of_dirichlet_extension(small):
    Z, _, dom = small
    v = np.random.default_rng(2).standard_normal(Z.n)
    sol = solve_dirichlet(dom, None, 2.0, v)
    np.testing.assert_allclose(trace(dom, sol.u), v, rtol=0, atol=1e-12)


def test_extend_constant(small):
    Z, _, dom = small
    u = extend(dom, np.full(Z.n, -1.5))
    np.testing.assert_allclose(u, -1.5, rtol=1e-14)
    assert p_energy(dom, None, u, 2.0) == pytest.approx(0.0, abs=1e-20)


def test_extend_indicator_smooths_with_height():
    Z = cycle_space(64)
    dom = build_product_extension(Z, FractionalParams(2.0, 0.5), M=12, Y_max=128.0)
    v = (np.arange(64) < 32).astype(float)
    u = extend(dom, v)
    assert u.min() >= -1e-14 and u.max() <= 1 + 1e-14
    osc = [np.ptp(u[dom.layer_of == m]) for m in range(dom.layer_of.max() + 1)]
    assert np.all(np.diff(osc) <= 1e-12)
    assert dom.heights[-1] >= Z.diameter
    top = u[dom.layer_of == dom.layer_of.max()]
    np.testing.assert_allclose(top, np.dot(v, Z.nu) / Z.nu.sum(), rtol=1e-12)


def test_extend_rejects_wrong_length(small):
    _, _, dom = small
    with pytest.raises(ValidationError):
        extend(dom, np.zeros(5))


# -- extension form --------------------------------------------------------------------------

@pytest.mark.parametrize("fixture", ["small", "small_p3"])
def test_et_diagonal_is_extension_energy(fixture, request):
    Z, P, dom = request.getfixturevalue(fixture)
    u = np.random.default_rng(3).standard_normal(Z.n)
    sol = harmonic_extension(dom, None, u, P)
    val = et_form(Z, dom, None, u, u, P, solution=sol).value
    assert val == pytest.approx(sol.energy, rel=1e-7)
    assert et_energy(dom, None, u, P) == pytest.approx(sol.energy, rel=1e-10)


def test_et_constant_is_zero(small_p3):
    Z, P, dom = small_p3
    assert et_energy(dom, None, np.full(Z.n, 3.0), P) == pytest.approx(0.0, abs=1e-16)


def test_et_linear_in_test_slot(small_p3):
    Z, P, dom = small_p3
    rng = np.random.default_rng(4)
    u, v, w = rng.standard_normal((3, Z.n))
    sol = harmonic_extension(dom, None, u, P)
    a = et_form(Z, dom, None, u, v, P, solution=sol).value
    b = et_form(Z, dom, None, u, w, P, solution=sol).value
    c = et_form(Z, dom, None, u, 2 * v - w, P, solution=sol).value
    assert abs(c - (2 * a - b)) <= 1e-10 * (abs(a) + abs(b))


def test_et_independent_of_test_extension(small_p3):
    Z, P, dom = small_p3
    rng = np.random.default_rng(5)
    u, v = rng.standard_normal((2, Z.n))
    sol = harmonic_extension(dom, None, u, P)
    w = extend(dom, v)
    w2 = w.copy()
    interior = dom.layer_of > 0
    w2[interior] += rng.standard_normal(interior.sum())
    a = et_form(Z, dom, None, u, v, P, solution=sol).value
    b = et_form(Z, dom, None, u, v, P, w=w2, solution=sol).value
    assert a == pytest.approx(b, rel=1e-6, abs=1e-8 * sol.energy)


def test_et_rejects_test_function_with_wrong_trace(small):
    Z, P, dom = small
    u = np.zeros(Z.n)
    with pytest.raises(ValidationError):
        et_form(Z, dom, None, u, u, P, w=np.ones(dom.node_count))


def test_et_comparable_to_besov_on_cycle(small_p3):
    Z, P, dom = small_p3
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(10):
        u = rng.standard_normal(Z.n)
        ratios.append(besov_energy(Z, u, P) / et_energy(dom, None, u, P))
    assert max(ratios) / min(ratios) <= 10.0


# -- fractional p-Laplacian -------------------------------------------------------------------

@pytest.mark.parametrize("fixture", ["small", "small_p3"])
def test_frac_apply_constant_is_zero(fixture, request):
    Z, P, dom = request.getfixturevalue(fixture)
    np.testing.assert_allclose(frac_apply(Z, dom, None, np.full(Z.n, 7.0), P).f, 0.0, atol=1e-10)


@pytest.mark.parametrize("fixture", ["small", "small_p3"])
def test_frac_apply_has_zero_mean(fixture, request):
    Z, P, dom = request.getfixturevalue(fixture)
    u = np.random.default_rng(7).standard_normal(Z.n)
    f = frac_apply(Z, dom, None, u, P).f
    assert abs(np.dot(f, Z.nu)) <= 1e-8 * np.dot(np.abs(f), Z.nu)


@pytest.mark.parametrize("c", [-3.0, 10.0])
def test_frac_apply_gauge_invariance(small_p3, c):
    Z, P, dom = small_p3
    u = np.random.default_rng(8).standard_normal(Z.n)
    f0 = frac_apply(Z, dom, None, u, P).f
    f1 = frac_apply(Z, dom, None, u + c, P).f
    np.testing.assert_allclose(f1, f0, rtol=0, atol=1e-8 * np.abs(f0).max())


def test_frac_apply_pairing_is_et_form(small_p3):
    Z, P, dom = small_p3
    rng = np.random.default_rng(9)
    u, v = rng.standard_normal((2, Z.n))
    data = frac_apply(Z, dom, None, u, P)
    lhs = float(np.dot(data.f * v, Z.nu))
    rhs = et_form(Z, dom, None, u, v, P, solution=data.solution).value
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-10)


def test_collar_estimator_agrees(small_p3):
    Z, P, dom = small_p3
    u = np.random.default_rng(10).standard_normal(Z.n)
    a = frac_apply(Z, dom, None, u, P).f
    b = frac_apply(Z, dom, None, u, P, estimator="collar").f
    np.testing.assert_allclose(b, a, rtol=0, atol=1e-6 * np.abs(a).max())


def test_unknown_estimator(small):
    Z, P, dom = small
    with pytest.raises(ValidationError):
        frac_apply(Z, dom, None, np.zeros(Z.n), P, estimator="bogus")


def test_p2_apply_matches_dtn_matrix(small):
    Z, P, dom = small
    u = np.random.default_rng(11).standard_normal(Z.n)
    T = dtn_matrix(dom)
    np.testing.assert_allclose(frac_apply(Z, dom, None, u, P).f, T @ u, rtol=0,
                               atol=1e-9 * np.abs(T @ u).max())


@pytest.mark.parametrize("fixture", ["small", "small_p3"])
def test_frac_solve_zero_data(fixture, request):
    Z, P, dom = request.getfixturevalue(fixture)
    sol = frac_solve(Z, dom, None, np.zeros(Z.n), P)
    np.testing.assert_array_equal(sol.values, 0.0)
    assert sol.seminorm == 0.0


@pytest.mark.parametrize("fixture", ["small", "small_p3"])
def test_frac_solve_round_trip(fixture, request):
    Z, P, dom = request.getfixturevalue(fixture)
    f = zero_mean(Z, np.random.default_rng(12).standard_normal(Z.n))
    u = frac_solve(Z, dom, None, f, P).values
    back = frac_apply(Z, dom, None, u, P).f
    assert np.linalg.norm(back - f) / np.linalg.norm(f) <= 1e-5


def test_frac_solve_rejects_nonzero_mean(small):
    Z, P, dom = small
    with pytest.raises(NonzeroMean):
        frac_solve(Z, dom, None, np.ones(Z.n), P)


def test_p2_solve_inverts_dtn_matrix(small):
    Z, P, dom = small
    u = zero_mean(Z, np.random.default_rng(13).standard_normal(Z.n))
    T = dtn_matrix(dom)
    got = frac_solve(Z, dom, None, T @ u, P).values
    diff = zero_mean(Z, got) - u
    assert np.abs(diff).max() <= 1e-6 * np.abs(u).max()


def test_p2_solve_matches_spectral_inverse():
    Z = cycle_space(64)
    P = FractionalParams(2.0, 0.5)
    dom = build_product_extension(Z, P, M=24, y_min=0.02, Y_max=64.0, connectivity="base")
    f = zero_mean(Z, np.random.default_rng(14).standard_normal(Z.n))
    got = zero_mean(Z, frac_solve(Z, dom, None, f, P).values)
    ref = spectral_oracle_p2(Z, f, 0.5, inverse=True, normalization="extension")
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) <= 0.1


def test_frac_solve_normalized_on_reference_ball(small_p3):
    from fraclap.fractional import b0_points

    Z, P, dom = small_p3
    f = zero_mean(Z, np.random.default_rng(15).standard_normal(Z.n))
    u = frac_solve(Z, dom, None, f, P).values
    pts = b0_points(dom)
    assert abs(np.dot(Z.nu[pts], u[pts])) <= 1e-10 * np.abs(u).max() * Z.nu[pts].sum()


# -- dual pairing ----------------------------------------------------------------------------

def test_dual_bound_constant_test_function():
    Z = cycle_space(32)
    P = FractionalParams(2.0, 0.5)
    f = zero_mean(Z, np.random.default_rng(16).standard_normal(32))
    out = dual_bound_check(Z, f, np.full(32, 2.0), P)
    assert out["pairing"] <= 1e-12 and out["constant"] == 0.0


@pytest.mark.parametrize("p,theta", [(2.0, 0.5), (3.0, 0.25)])
def test_dual_bound_self_pairing(p, theta):
    Z = cycle_space(32)
    P = FractionalParams(p, theta)
    v = zero_mean(Z, np.random.default_rng(17).standard_normal(32))
    out = dual_bound_check(Z, v, v, P)
    assert 0 < out["constant"] < np.inf


def test_dual_bound_constant_stable_over_ensemble():
    Z = cycle_space(64)
    P = FractionalParams(2.0, 0.5)
    rng = np.random.default_rng(18)
    consts = []
    for _ in range(100):
        f, v = rng.standard_normal((2, 64))
        consts.append(dual_bound_check(Z, zero_mean(Z, f), v, P)["constant"])
    assert np.isfinite(max(consts))


# -- records ---------------------------------------------------------------------------------

def test_point_csv_round_trip(tmp_path):
    vals = np.random.default_rng(19).standard_normal(25)
    path = tmp_path / "f.csv"
    write_point_csv(path, vals)
    np.testing.assert_array_equal(read_point_csv(path), vals)


def test_point_csv_bad_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        read_point_csv(path)


def test_form_value_record(small):
    Z, P, _ = small
    u = np.arange(Z.n, dtype=float)
    fv = besov_form(Z, u, u, P)
    rec = json.loads(json.dumps(fv.to_record()))
    assert rec["kind"] == "besov" and rec["value"] == pytest.approx(float(fv))
    assert len(rec["fingerprints"]) == 2 and rec["fingerprints"][0] == rec["fingerprints"][1]
    assert isinstance(fv, FormValue)
