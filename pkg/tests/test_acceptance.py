"""Acceptance criteria 1-9.

Every test records one line through the ``acceptance`` fixture; the lines
are repeated in the terminal summary.  Settings (layer counts, heights,
seeds) are the ones recorded in the decisions ledger.
"""

import math
import time

import numpy as np
import pytest

from fraclap import (
    FractionalParams,
    boundary_data,
    build_product_extension,
    cycle_space,
    dampen,
    el_form,
    extend,
    frac_apply,
    frac_solve,
    monotonicity_gap,
    p_energy,
    p_energy_grad,
    solve_neumann,
    solve_neumann_exhaustion,
    trace,
)
from fraclap.cheeger import gradient
from fraclap.solve import a_priori_check
from fraclap.verify import (
    check_harnack,
    effective_q,
    equivalence_check,
    estimate_holder,
    default_Q_mu,
    holder_threshold,
    make_rng,
    makalainen_check,
    measure_stability_exponent,
    refine_domain,
    spectral_oracle_p2,
)

BUDGET = 60.0


def _theta_for(p):
    return 2.0 / 3.0 if p < 2 else 1.0 / p


def _zero_mean(Z, f):
    return f - np.dot(f, Z.nu) / Z.nu.sum()


# -- 1. spectral cross-check ----------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.25, 0.5, 0.75])
def test_c1_spectral_cross_check(theta, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(64)
    P = FractionalParams(2.0, theta)
    u = make_rng(1).standard_normal(64)
    ref = spectral_oracle_p2(Z, u, theta, normalization="extension")
    errs = []
    for M, Y in [(24, 64.0), (48, 128.0)]:
        dom = build_product_extension(Z, P, M=M, y_min=0.02, Y_max=Y, connectivity="base")
        f = frac_apply(Z, dom, None, u, P).f
        errs.append(float(np.linalg.norm(f - ref) / np.linalg.norm(ref)))
    elapsed = time.perf_counter() - t0
    ok = errs[0] <= 0.10 and errs[1] < errs[0] and elapsed <= BUDGET
    acceptance(1, ok, f"theta={theta}: rel L2 {errs[0]:.4f} -> {errs[1]:.4f}, {elapsed:.1f}s")
    assert errs[0] <= 0.10
    assert errs[1] < errs[0]


# -- 2. energy comparability ----------------------------------------------------------------

@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_c2_energy_comparability(p, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(64)
    P = FractionalParams(p, _theta_for(p))
    dom = build_product_extension(Z, P, M=8, y_min=0.1, Y_max=64.0, connectivity="base")
    rep = equivalence_check(Z, dom, None, P, ensemble_size=100, seed=1)
    s = rep.summary
    elapsed = time.perf_counter() - t0
    ok = (math.isfinite(s["C"]) and math.isfinite(s["C_refined"]) and s["C_change"] <= 2.0
          and elapsed <= BUDGET)
    acceptance(2, ok, f"p={p}: ratio in [{s['ratio_min']:.3f}, {s['ratio_max']:.3f}], "
                      f"C {s['C']:.3f} -> {s['C_refined']:.3f} (x{s['C_change']:.3f}), {elapsed:.1f}s")
    assert rep.verdict == "PASS"


# -- 3. stability exponents -----------------------------------------------------------------

@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 1.5])
def test_c3_stability_exponents(p, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(64)
    P = FractionalParams(p, _theta_for(p))
    dom = build_product_extension(Z, P, M=12, connectivity="base")
    f = _zero_mean(Z, make_rng(7).standard_normal(64))
    ts = 2.0 ** -np.arange(1, 13)
    rep = measure_stability_exponent(Z, dom, None, P, f, ts=ts, seed=3)
    s = rep.summary
    need = 0.9 if p < 2 else 1.0 / (p - 1.0) - 0.1
    elapsed = time.perf_counter() - t0
    ok = s["slope"] >= need and s["r_squared"] >= 0.95 and elapsed <= BUDGET
    acceptance(3, ok, f"p={p}: slope {s['slope']:.3f} (need {need:.2f}), "
                      f"r2 {s['r_squared']:.4f}, {elapsed:.1f}s")
    assert s["slope"] >= need
    assert s["r_squared"] >= 0.95


# -- 4. uniqueness modulo constants ---------------------------------------------------------

@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_c4_uniqueness(p, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(64)
    P = FractionalParams(p, _theta_for(p))
    dom = build_product_extension(Z, P, M=12, connectivity="base")
    rng = make_rng(11)
    fd = boundary_data(Z, _zero_mean(Z, rng.standard_normal(64)), P)
    s1 = solve_neumann(dom, None, p, fd, init=10 * rng.standard_normal(dom.node_count))
    s2 = solve_neumann(dom, None, p, fd, init=10 * rng.standard_normal(dom.node_count))
    du = float(np.abs(s1.u - s2.u).max())
    dg = float(np.abs(gradient(dom, None, s1.u).edge_quotients
                      - gradient(dom, None, s2.u).edge_quotients).max())
    elapsed = time.perf_counter() - t0
    ok = du <= 1e-6 and dg <= 1e-8 and elapsed <= BUDGET
    acceptance(4, ok, f"p={p}: |u1-u2| {du:.1e}, |grad diff| {dg:.1e}, {elapsed:.1f}s")
    assert du <= 1e-6
    assert dg <= 1e-8


# -- 5. exhaustion ----------------------------------------------------------------------------

def _decaying_data(Z, dom):
    x0 = dom.col_of[dom.base_point]
    s = Z.dist[x0]
    idx = np.arange(Z.n)
    side = np.sign(((idx - x0 + Z.n // 2) % Z.n) - Z.n // 2)
    f = np.exp(-s / 6.0) * (1.0 + 0.5 * side)
    b0 = s <= dom.b0_radius
    return f - (f @ Z.nu) / Z.nu[b0].sum() * b0


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
def test_c5_exhaustion(p, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(256)
    P = FractionalParams(p, _theta_for(p))
    dom = build_product_extension(Z, P, M=14, connectivity="base")
    _, rep = solve_neumann_exhaustion(dom, None, p, _decaying_data(Z, dom), k_max=5)
    tails = rep.tails[:4]
    incs = rep.increments
    tails_dec = all(b < a for a, b in zip(tails, tails[1:]))
    incs_dec = all(b < a for a, b in zip(incs, incs[1:]))
    final = incs[-1] / incs[0]
    elapsed = time.perf_counter() - t0
    ok = tails_dec and incs_dec and final <= 1e-3 and elapsed <= BUDGET
    acceptance(5, ok, f"p={p}: tails {['%.2e' % t for t in tails]}, "
                      f"increments {['%.2e' % v for v in incs]}, {elapsed:.1f}s")
    assert tails_dec and incs_dec
    assert final <= 1e-3


# -- 6. Harnack --------------------------------------------------------------------------------

def _refined_cycle(n, length=64.0):
    h = length / n
    Z = cycle_space(n, length=length, nu=np.full(n, h))
    return Z, h, np.arange(n) * h


def _cycle_domain(Z, P, h, Y=64.0):
    M = int(np.ceil(np.log(Y / h) / np.log(1.5))) + 1
    return build_product_extension(Z, P, M=M, y_min=h, Y_max=Y, connectivity="base")


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_c6_harnack(p, acceptance):
    t0 = time.perf_counter()
    P = FractionalParams(p, 1.0 / p)
    maxima = []
    for n in (64, 128, 256):
        Z, h, x = _refined_cycle(n)
        dom = _cycle_domain(Z, P, h)
        f = np.where((x >= 40) & (x < 48), 1.0, 0.0) - np.where((x >= 52) & (x < 60), 1.0, 0.0)
        W = (x >= 4) & (x <= 28)
        maxima.append(check_harnack(Z, dom, None, P, f, W, radii=[1.0, 2.0, 4.0]).max_ratio)
    spread = max(maxima) / min(maxima)
    elapsed = time.perf_counter() - t0
    ok = all(math.isfinite(m) for m in maxima) and spread <= 2.0 and elapsed <= BUDGET
    acceptance(6, ok, f"p={p}: max ratios {['%.3f' % m for m in maxima]} "
                      f"(spread x{spread:.3f}), {elapsed:.1f}s")
    assert spread <= 2.0


# -- 7. Hölder threshold behaviour --------------------------------------------------------------

def test_c7_holder_threshold(acceptance):
    t0 = time.perf_counter()
    Z, h, x = _refined_cycle(256)
    P = FractionalParams(2.0, 0.5)
    dom = _cycle_domain(Z, P, h)
    region = (x >= 8) & (x < 24)
    bounded = np.where(region, 1.0, 0.0) - np.where((x >= 40) & (x < 56), 1.0, 0.0)
    atom = np.zeros(Z.n)
    atom[int(16 / h)] = 1.0 / h
    atom[int(48 / h)] = -1.0 / h
    center = int(16 / h)

    hold = estimate_holder(Z, dom, None, P, bounded, center=center, R0=8.0)
    mk_bounded = makalainen_check(Z, dom, bounded, 2.0, 0.5, region=region)
    mk_atom = makalainen_check(Z, dom, atom, 2.0, 0.5, region=region)
    q0 = holder_threshold(P, default_Q_mu(Z, P))
    q_atom = effective_q(Z, np.where(region, atom, 0.0))
    elapsed = time.perf_counter() - t0
    ok = (hold.verdict == "PASS" and mk_bounded.verdict == "PASS" and mk_atom.verdict == "FAIL"
          and q_atom <= q0 and elapsed <= BUDGET)
    acceptance(7, ok, f"Holder slope {hold.summary['slope']:.3f} vs predicted "
                      f"{hold.summary['predicted']:.2f}; growth check bounded "
                      f"{mk_bounded.verdict}, atom {mk_atom.verdict}; atom q {q_atom:.2f} "
                      f"<= q0 {q0:.2f}; {elapsed:.1f}s")
    assert hold.summary["slope"] >= hold.summary["predicted"] - 0.1
    assert mk_bounded.verdict == "PASS"
    assert mk_atom.verdict == "FAIL"
    assert q_atom <= q0


# -- 8. calculus invariants ------------------------------------------------------------------

def test_c8_calculus_invariants(acceptance):
    t0 = time.perf_counter()
    rng = make_rng(5)
    Z = cycle_space(64)
    lines = []
    ok = True

    P = FractionalParams(2.0, 0.5)
    dom = build_product_extension(Z, P, M=10, connectivity="base")
    for p in (1.5, 2.0, 3.0, 4.0):
        u = rng.standard_normal(dom.node_count)
        E = p_energy(dom, None, u, p)
        el1 = abs(el_form(dom, None, u, np.ones(dom.node_count), p)) / E
        g = p_energy_grad(dom, None, u, p)
        worst = 0.0
        for _ in range(3):
            v = rng.standard_normal(dom.node_count)
            hstep = 1e-5
            fd = (p_energy(dom, None, u + hstep * v, p) - p_energy(dom, None, u - hstep * v, p)) / (2 * hstep)
            worst = max(worst, abs(fd - g @ v) / abs(g @ v))
        ok &= el1 <= 1e-12 and worst <= 1e-6
        lines.append(f"p={p}: el(u,1) {el1:.1e}, FD {worst:.1e}")

    gaps = []
    for p in (1.5, 2.0, 3.0, 4.0):
        z = rng.standard_normal((10_000, 2))
        w = rng.standard_normal((10_000, 2))
        gaps.append(float(monotonicity_gap(z, w, p).min()))
    ok &= min(gaps) >= 0.0
    lines.append(f"min monotonicity gap {min(gaps):.1e}")

    damp = dampen(dom, beta=2.0, Q_mu=3.0)
    u = rng.standard_normal(dom.node_count)
    rel = abs(p_energy(damp, None, u, 2.0) - p_energy(dom, None, u, 2.0)) / p_energy(dom, None, u, 2.0)
    ok &= rel <= 1e-12
    lines.append(f"dampening {rel:.1e}")

    v = rng.standard_normal(Z.n)
    exact = bool(np.array_equal(trace(dom, extend(dom, v)), v))
    ok &= exact
    lines.append(f"trace(extend) exact {exact}")

    for p in (1.5, 2.0, 3.0):
        Pp = FractionalParams(p, _theta_for(p))
        domp = build_product_extension(Z, Pp, M=10, connectivity="base")
        u = rng.standard_normal(Z.n)
        res = frac_apply(Z, domp, None, u, Pp)
        mean_rel = abs(res.mean) / float(np.dot(np.abs(res.f), Z.nu))
        f = _zero_mean(Z, rng.standard_normal(Z.n))
        sol = frac_solve(Z, domp, None, f, Pp)
        back = frac_apply(Z, domp, None, sol.values, Pp).f
        rt = float(np.abs(back - f).max() / np.abs(f).max())
        ok &= mean_rel <= 1e-8 and rt <= 1e-5
        lines.append(f"p={p}: frac_apply mean {mean_rel:.1e}, round trip {rt:.1e}")

    elapsed = time.perf_counter() - t0
    ok &= elapsed <= BUDGET
    acceptance(8, ok, "; ".join(lines) + f"; {elapsed:.1f}s")
    assert ok


# -- 9. a-priori bound -----------------------------------------------------------------------

@pytest.mark.parametrize("p", [2.0, 3.0])
def test_c9_a_priori_bound(p, acceptance):
    t0 = time.perf_counter()
    Z = cycle_space(64)
    P = FractionalParams(p, _theta_for(p))
    coarse = build_product_extension(Z, P, M=8, connectivity="base")
    fine = refine_domain(coarse)
    rng = make_rng(9)
    data = [boundary_data(Z, _zero_mean(Z, rng.standard_normal(Z.n)), P,
                          x0=coarse.col_of[coarse.base_point]) for _ in range(50)]
    worst = []
    for dom in (coarse, fine):
        ratios = [a_priori_check(solve_neumann(dom, None, p, fd), fd)["ratio"] for fd in data]
        worst.append(max(ratios))
    change = max(worst) / min(worst)
    elapsed = time.perf_counter() - t0
    ok = all(math.isfinite(w) for w in worst) and change <= 2.0 and elapsed <= BUDGET
    acceptance(9, ok, f"p={p}: max ratio {worst[0]:.4f} -> {worst[1]:.4f} (x{change:.3f}), "
                      f"{elapsed:.1f}s")
    assert change <= 2.0
