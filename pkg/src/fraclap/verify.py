"""Numerical checks of the qualitative statements: comparability, stability, regularity.

Every check returns a report with a ``verdict`` of ``"PASS"``, ``"FAIL"`` or
``"INFO"`` (informational: the hypotheses of the statement are not met, so
nothing is claimed).  Randomness comes from a Philox generator seeded
with the ``seed`` recorded in the report.
"""

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.special import gamma

from .cheeger import gradient, p_energy
from .errors import (
    InsufficientScales,
    NegativeData,
    NoAdmissibleBalls,
    RequiresP2,
    ValidationError,
    ZeroInfimum,
)
from .extension import build_product_extension
from .fractional import (
    besov_energy,
    dtn_matrix,
    et_energy,
    frac_apply,
    nu_J_norm,
    trace,
)
from .solve import BoundaryData, boundary_data, solve_neumann
from .space import estimate_mass_exponents, neighbor_pairs

PASS, FAIL, INFO = "PASS", "FAIL", "INFO"
_SPECTRA = weakref.WeakKeyDictionary()


def make_rng(seed):
    """Counter-based generator (Philox) for reproducible, splittable streams."""
    return np.random.Generator(np.random.Philox(int(seed) % (2 ** 64)))


@dataclass
class CheckReport:
    """Outcome of one check, serializable as ``{check, params, seed, verdict, data}``."""

    check: str
    params: dict
    seed: int
    verdict: str
    data: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self):
        return {"check": self.check, "params": self.params, "seed": self.seed,
                "verdict": self.verdict, "summary": self.summary, "data": self.data}


# -- regression ------------------------------------------------------------------------------

@dataclass
class ExponentFit:
    """Least-squares line through ``(log x, log y)`` samples."""

    samples: list
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self):
        return {"samples": [list(s) for s in self.samples], "slope": self.slope,
                "intercept": self.intercept, "r_squared": self.r_squared}


def fit_exponent(x, y):
    """Fit ``log y = slope * log x + intercept``.

    Raises
    ------
    InsufficientScales
        With fewer than 4 usable (positive, finite) samples.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 4:
        raise InsufficientScales(f"exponent fit needs at least 4 samples, got {int(ok.sum())}")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    res = stats.linregress(lx, ly)
    r2 = float(res.rvalue ** 2) if np.isfinite(res.rvalue) else 1.0
    return ExponentFit(list(zip(lx.tolist(), ly.tolist())), float(res.slope),
                       float(res.intercept), min(max(r2, 0.0), 1.0))


# -- p = 2 spectral oracle -----------------------------------------------------------------

def spectral_laplacian(Z):
    """Weighted graph Laplacian ``L`` on the neighbour graph of ``Z``.

    Edge weights are ``hm(nu_i, nu_j) / d_ij**2``; the matching mass matrix
    is ``diag(nu)``, so on a unit cycle the spectrum is ``2 - 2 cos(2 pi k / n)``.
    """
    i, j = neighbor_pairs(Z)
    nu = Z.nu
    w = 2 * nu[i] * nu[j] / (nu[i] + nu[j]) / Z.dist[i, j] ** 2
    L = np.zeros((Z.n, Z.n))
    np.add.at(L, (i, j), -w)
    np.add.at(L, (j, i), -w)
    L[np.diag_indices(Z.n)] = -L.sum(axis=1)
    return L


def spectral_decomposition(Z):
    """Eigenpairs of ``L phi = lambda diag(nu) phi`` with ``nu``-orthonormal ``phi``."""
    if Z not in _SPECTRA:
        lam, phi = linalg.eigh(spectral_laplacian(Z), np.diag(Z.nu))
        lam[np.abs(lam) < 1e-12 * max(1.0, abs(lam).max())] = 0.0
        _SPECTRA[Z] = (np.maximum(lam, 0.0), phi)
    return _SPECTRA[Z]


def extension_constant(theta):
    """``d_theta = 2**(1 - 2 theta) Gamma(1 - theta) / Gamma(theta)``.

    The Neumann flux of the ``|y|**(1 - 2 theta)`` extension equals
    ``d_theta`` times the spectral power.
    """
    return 2.0 ** (1 - 2 * theta) * gamma(1 - theta) / gamma(theta)


def spectral_oracle_p2(Z, values, theta, p=2.0, inverse=False, normalization="spectral"):
    """Spectral fractional power of the graph Laplacian of ``Z``.

    Parameters
    ----------
    values : array_like
        ``u`` (forward) or ``f`` (inverse) on the points of ``Z``.
    theta : float
        Power, ``0 <= theta <= 1``.
    inverse : bool
        Apply ``lambda**-theta`` on the complement of the constants.
    normalization : {"spectral", "extension"}
        ``"extension"`` scales by :func:`extension_constant` to match the
        Neumann flux of the weighted product extension.

    Raises
    ------
    RequiresP2
        When ``p != 2``.
    """
    if p != 2.0:
        raise RequiresP2(f"the spectral oracle is linear and needs p = 2, got p = {p}")
    if not 0.0 <= theta <= 1.0:
        raise ValidationError("theta must lie in [0, 1] for the spectral oracle")
    lam, phi = spectral_decomposition(Z)
    v = np.asarray(values, dtype=float)
    coef = phi.T @ (Z.nu * v)
    nonnull = lam > 0
    mult = np.zeros_like(lam)
    mult[nonnull] = lam[nonnull] ** (-theta if inverse else theta)
    out = phi @ (mult * coef)
    if normalization == "extension":
        c = extension_constant(theta) if 0 < theta < 1 else 1.0
        out = out / c if inverse else out * c
    elif normalization != "spectral":
        raise ValidationError(f"unknown normalization {normalization!r}")
    return out


def check_spectral_oracle(Z, domain, structure, params, seed=0, tol=0.1, samples=1):
    """Relative L2 gap between :func:`frac_apply` and the scaled spectral oracle."""
    if params.p != 2.0:
        raise RequiresP2("oracle-p2 needs p = 2")
    rng = make_rng(seed)
    rows = []
    for s in range(samples):
        u = rng.standard_normal(Z.n)
        f = frac_apply(Z, domain, structure, u, params).f
        ref = spectral_oracle_p2(Z, u, params.theta, normalization="extension")
        err = float(np.sqrt(np.dot(Z.nu, (f - ref) ** 2) / np.dot(Z.nu, ref ** 2)))
        rows.append({"sample": s, "rel_l2": err})
    worst = max(r["rel_l2"] for r in rows)
    return CheckReport("oracle-p2", {"p": params.p, "theta": params.theta, "tol": tol}, seed,
                       PASS if worst <= tol else FAIL, rows, {"max_rel_l2": worst})


# -- comparability ----------------------------------------------------------------------------

@dataclass
class EquivalenceReport:
    """Ratios ``E_{p,theta}(u,u) / E_T(u,u)`` over a random ensemble."""

    ratio_min: float
    ratio_max: float
    C: float
    ratios: list
    skipped: int

    def to_dict(self):
        return dict(self.__dict__)


def check_energy_equivalence(Z, domain, structure, params, ensemble_size=100, seed=0,
                             options=None):
    """Compare Besov and extension energies on random nonconstant functions.

    Constant draws are skipped (both energies vanish).  ``C`` is the
    smallest constant with ``1/C <= ratio <= C``.
    """
    rng = make_rng(seed)
    T = dtn_matrix(domain, structure) if params.p == 2.0 else None
    ratios, skipped = [], 0
    for _ in range(int(ensemble_size)):
        u = rng.standard_normal(Z.n)
        if np.ptp(u) == 0.0:
            skipped += 1
            continue
        eb = besov_energy(Z, u, params)
        if T is not None:
            et = float(u @ (Z.nu * (T @ u)))
        else:
            et = et_energy(domain, structure, u, params, options)
        ratios.append(eb / et)
    if not ratios:
        raise ValidationError("ensemble has no nonconstant draws")
    lo, hi = float(min(ratios)), float(max(ratios))
    return EquivalenceReport(lo, hi, max(hi, 1.0 / lo), ratios, skipped)


def refine_domain(domain, factor=2):
    """Rebuild a product extension with ``factor`` times as many layers (``Y_max`` kept)."""
    if not domain.is_product:
        raise ValidationError("refinement is only defined for product extensions")
    meta = domain.meta
    return build_product_extension(
        domain.space, domain.params, M=int(meta["M"]) * factor, y_min=meta["y_min"],
        Y_max=meta["Y_max"], connectivity=meta["connectivity"], base_point=domain.base_point,
        b0_radius=domain.b0_radius)


def equivalence_check(Z, domain, structure, params, ensemble_size=100, seed=0, options=None,
                      refine=True, factor=2):
    """:func:`check_energy_equivalence` as a :class:`CheckReport`.

    With ``refine`` the ensemble (same seed) is rerun on
    :func:`refine_domain` and the verdict requires the implied constant to
    change by at most a factor 2; otherwise a finite constant passes.
    """
    rep = check_energy_equivalence(Z, domain, structure, params, ensemble_size, seed, options)
    rows = [{"level": 0, "draw": i, "ratio": r} for i, r in enumerate(rep.ratios)]
    summary = {"ratio_min": rep.ratio_min, "ratio_max": rep.ratio_max, "C": rep.C,
               "skipped": rep.skipped}
    ok = math.isfinite(rep.C)
    if refine and domain.is_product:
        fine = check_energy_equivalence(Z, refine_domain(domain, factor), structure, params,
                                        ensemble_size, seed, options)
        rows += [{"level": 1, "draw": i, "ratio": r} for i, r in enumerate(fine.ratios)]
        change = max(fine.C / rep.C, rep.C / fine.C)
        summary.update({"C_refined": fine.C, "C_change": change})
        ok = ok and math.isfinite(fine.C) and change <= 2.0
    return CheckReport("equivalence", {"p": params.p, "theta": params.theta,
                                       "ensemble_size": int(ensemble_size)},
                       seed, PASS if ok else FAIL, rows, summary)


# -- stability ---------------------------------------------------------------------------------

def stability_exponents(p):
    """``(kappa, tau)``: ``(0, 1/(p-1))`` for ``p >= 2`` and ``((2-p)/(p-1), 1)`` below."""
    if p >= 2:
        return 0.0, 1.0 / (p - 1.0)
    return (2.0 - p) / (p - 1.0), 1.0


def _as_data(Z, f, params, x0):
    if isinstance(f, BoundaryData):
        return f
    return boundary_data(Z, f, params, x0=x0)


def measure_stability_exponent(Z, domain, structure, params, f, h=None, ts=None, seed=0,
                               discard=2, options=None):
    """Fit the exponent of ``t -> ||grad u_f - grad u_{f + t h}||`` against ``||t h||``.

    Parameters
    ----------
    f : BoundaryData or array_like
        Zero-mean data.
    h : array_like, optional
        Zero-mean perturbation direction.  Defaults to a random direction
        scaled to the ``nu_J`` norm of ``f``.
    ts : sequence of float, optional
        Decreasing schedule of ``t``; default ``2**-1 ... 2**-8``.
    discard : int
        Number of largest ``t`` left out of the fit.

    Returns
    -------
    CheckReport
        ``summary`` carries the :class:`ExponentFit`, ``tau``, ``kappa`` and
        the verdict rule ``slope >= tau - 0.1`` and ``r2 >= 0.95``.  For
        ``p < 2`` distances are divided by ``max(|f|, |g|)**kappa`` first.
    """
    p = params.p
    x0 = domain.col_of[domain.base_point]
    fd = _as_data(Z, f, params, x0)
    rng = make_rng(seed)
    if h is None:
        h = rng.standard_normal(Z.n)
        h = h - np.dot(h, Z.nu) / Z.nu.sum()
        nh = nu_J_norm(Z, h, x0, params)
        h = h * (fd.norm_J / nh if fd.norm_J > 0 else 1.0 / nh)
    h = np.asarray(h, dtype=float)
    h = h - np.dot(h, Z.nu) / Z.nu.sum()
    ts = np.asarray(ts if ts is not None else 2.0 ** -np.arange(1, 9), dtype=float)
    ts = np.sort(ts)[::-1]
    kappa, tau = stability_exponents(p)
    base = solve_neumann(domain, structure, p, fd, options=options)
    rows = []
    for t in ts:
        g = boundary_data(Z, fd.f + t * h, params, x0=x0)
        sol = solve_neumann(domain, structure, p, g, options=options, init=base.u)
        dist = p_energy(domain, structure, sol.u - base.u, p) ** (1.0 / p)
        size = nu_J_norm(Z, fd.f - g.f, x0, params)
        scale = max(fd.norm_J, g.norm_J) ** kappa
        rows.append({"t": float(t), "data_distance": size, "gradient_distance": dist,
                     "normalized": dist / scale if scale > 0 else dist,
                     "trace_distance": besov_energy(Z, trace(domain, sol.u - base.u), params)
                     ** (1.0 / p)})
    kept = rows[discard:]
    fit = fit_exponent([r["data_distance"] for r in kept], [r["normalized"] for r in kept])
    ok = fit.slope >= tau - 0.1 and fit.r_squared >= 0.95
    return CheckReport("stability", {"p": p, "theta": params.theta}, seed, PASS if ok else FAIL,
                       rows, {"fit": fit.to_dict(), "slope": fit.slope, "r_squared": fit.r_squared,
                              "tau": tau, "kappa": kappa, "threshold": tau - 0.1})


# -- Harnack -----------------------------------------------------------------------------------

@dataclass
class HarnackReport:
    """Ratios ``sup/inf`` of a positive solution on admissible balls."""

    window: list
    balls: list
    ratios: list
    max_ratio: float
    shift: float

    def to_dict(self):
        return dict(self.__dict__)


def _window_mask(Z, W):
    W = np.asarray(W)
    if W.dtype == bool:
        if W.shape[0] != Z.n:
            raise ValidationError("window mask must have one entry per point")
        return W.copy()
    mask = np.zeros(Z.n, dtype=bool)
    mask[W.astype(np.intp)] = True
    return mask


def _node_distances(domain, col):
    """Distances from the boundary node above point ``col`` to every node."""
    nodes = domain.boundary_nodes
    return domain.distances_from(int(nodes[col]))


def check_harnack(Z, domain, structure, params, f, W, radii=None, solution=None,
                  admissibility=2.0, shift="auto", options=None):
    """Harnack ratios of the Neumann solution on balls around the window ``W``.

    A ball ``B(x, r)`` with ``x`` in ``W`` is tested when every boundary
    point within ``admissibility * r`` of ``x`` lies in ``W``.  Its ratio is
    ``sup u / inf u`` over all nodes of the closed domain inside the ball.

    Parameters
    ----------
    f : BoundaryData or array_like
        Data, which must vanish on ``W``.
    W : array_like of int or bool
    radii : sequence of float, optional
        Default: dyadic radii from the smallest distance up to ``diam / 4``.
    shift : {"auto", "none"}
        ``"auto"`` adds ``-min u + 1e-9 * range(u)`` when ``u`` is not
        positive; the shift is reported.

    Raises
    ------
    NoAdmissibleBalls, ZeroInfimum
    """
    mask = _window_mask(Z, W)
    fvals = f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float)
    if np.any(fvals[mask] != 0.0):
        raise ValidationError("data must vanish on the window")
    if solution is None:
        solution = solve_neumann(domain, structure, params.p,
                                 _as_data(Z, fvals, params, domain.col_of[domain.base_point]),
                                 options=options)
    u = np.asarray(solution.u if hasattr(solution, "u") else solution, dtype=float)
    amount = 0.0
    if shift == "auto" and u.min() <= 0.0:
        rng_u = float(np.ptp(u))
        amount = -float(u.min()) + 1e-9 * (rng_u if rng_u > 0 else 1.0)
        u = u + amount
    if radii is None:
        radii = []
        r = Z.min_positive_distance
        while r <= Z.diameter / 4:
            radii.append(r)
            r *= 2
    balls, ratios = [], []
    for x in np.flatnonzero(mask):
        dz = Z.dist[x]
        dn = None
        for r in radii:
            if not np.all(mask[dz < admissibility * r]):
                continue
            if dn is None:
                dn = _node_distances(domain, x)
            inside = dn < r
            vals = u[inside]
            lo, hi = float(vals.min()), float(vals.max())
            if lo <= 0.0:
                raise ZeroInfimum(f"solution vanishes in the ball around point {x} of radius {r}")
            balls.append((int(x), float(r)))
            ratios.append(hi / lo)
    if not ratios:
        raise NoAdmissibleBalls("no ball around the window is admissible")
    return HarnackReport(np.flatnonzero(mask).tolist(), balls, ratios, float(max(ratios)), amount)


def harnack_check(Z, domain, structure, params, f, W, radii=None, seed=0, options=None,
                  refine=True, factor=2):
    """:func:`check_harnack` as a :class:`CheckReport`.

    Passes when the largest ratio is finite and, with ``refine``, changes by
    at most a factor 2 on :func:`refine_domain`.
    """
    levels = [domain]
    if refine and domain.is_product:
        levels.append(refine_domain(domain, factor))
    rows, maxima, shifts = [], [], []
    for lev, dom in enumerate(levels):
        rep = check_harnack(Z, dom, structure, params, f, W, radii=radii, options=options)
        rows += [{"level": lev, "center": c, "r": r, "ratio": q}
                 for (c, r), q in zip(rep.balls, rep.ratios)]
        maxima.append(rep.max_ratio)
        shifts.append(rep.shift)
    ok = all(math.isfinite(m) for m in maxima)
    summary = {"max_ratio": maxima[0], "shift": shifts[0]}
    if len(maxima) > 1:
        change = max(maxima[1] / maxima[0], maxima[0] / maxima[1])
        summary.update({"max_ratio_refined": maxima[1], "shift_refined": shifts[1],
                        "change": change})
        ok = ok and change <= 2.0
    return CheckReport("harnack", {"p": params.p, "theta": params.theta,
                                   "window": _window_mask(Z, W).nonzero()[0].tolist()},
                       seed, PASS if ok else FAIL, rows, summary)


# -- Hölder regularity --------------------------------------------------------------------------

def holder_threshold(params, Q_mu):
    """``q0 = (Q_mu - Theta) / (p - Theta)``."""
    Th = params.Theta
    return (Q_mu - Th) / (params.p - Th)


def predicted_holder_exponent(params, Q_mu, q):
    """Explicit branch ``(1 - Theta/p) (1 - q0/q)`` (``q = inf`` allowed)."""
    q0 = holder_threshold(params, Q_mu)
    return (1.0 - params.Theta / params.p) * (1.0 - (0.0 if math.isinf(q) else q0 / q))


def default_Q_mu(Z, params):
    """Mass exponent of ``mu``: that of ``nu`` plus the codimension ``Theta``."""
    try:
        Q_nu = estimate_mass_exponents(Z).Q_mu
    except InsufficientScales:
        Q_nu = 1.0
    return Q_nu + params.Theta


def oscillation_profile(Z, values, center, R0, deltas=None):
    """``osc(delta) = max |u(x) - u(y)|`` over ``x, y`` in ``B(center, R0)`` with ``d(x, y) <= delta``."""
    u = np.asarray(values, dtype=float)
    pts = np.flatnonzero(Z.dist[center] <= R0 * (1 + 1e-12))
    D = Z.dist[np.ix_(pts, pts)]
    diff = np.abs(u[pts][:, None] - u[pts][None, :])
    if deltas is None:
        deltas = []
        d = Z.min_positive_distance
        while d <= R0 * (1 + 1e-12):
            deltas.append(d)
            d *= 2
    osc = [float(np.max(np.where(D <= d * (1 + 1e-12), diff, 0.0))) for d in deltas]
    return np.asarray(deltas, dtype=float), np.asarray(osc)


def oscillation_exponent(Z, values, center, R0, deltas=None):
    """:class:`ExponentFit` of the oscillation profile."""
    deltas, osc = oscillation_profile(Z, values, center, R0, deltas)
    return fit_exponent(deltas, osc)


def estimate_holder(Z, domain, structure, params, f, q=math.inf, center=None, R0=None,
                    Q_mu=None, solution=None, seed=0, options=None):
    """Boundary Hölder exponent of the Neumann solution near ``center``.

    The fitted exponent is compared with ``(1 - Theta/p)(1 - q0/q)``.  When
    ``q <= q0`` the verdict is ``"INFO"`` (below threshold).  A fitted
    exponent under the prediction is flagged as possibly limited by the
    interior exponent ``beta0``, which is not computable here.
    """
    Qm = Q_mu if Q_mu is not None else default_Q_mu(Z, params)
    q0 = holder_threshold(params, Qm)
    center = domain.col_of[domain.base_point] if center is None else int(center)
    R0 = Z.diameter / 4 if R0 is None else float(R0)
    params_doc = {"p": params.p, "theta": params.theta, "q": q, "q0": q0, "Q_mu": Qm,
                  "center": center, "R0": R0}
    if not q > q0:
        return CheckReport("holder", params_doc, seed, INFO, [],
                           {"status": "below-threshold", "q": q, "q0": q0})
    if solution is None:
        fd = _as_data(Z, f, params, domain.col_of[domain.base_point])
        solution = solve_neumann(domain, structure, params.p, fd, options=options)
    u = trace(domain, solution.u)
    deltas, osc = oscillation_profile(Z, u, center, R0)
    fit = fit_exponent(deltas, osc)
    pred = predicted_holder_exponent(params, Qm, q)
    ok = fit.slope >= pred - 0.1
    rows = [{"delta": float(d), "oscillation": float(o)} for d, o in zip(deltas, osc)]
    return CheckReport("holder", params_doc, seed, PASS if ok else FAIL, rows,
                       {"slope": fit.slope, "r_squared": fit.r_squared, "predicted": pred,
                        "beta0_may_bind": not ok, "fit": fit.to_dict()})


def effective_q(Z, f, center=None, radii=None):
    """Integrability exponent suggested by the growth of ``|f| nu`` on small balls.

    Fits ``log nu_|f|(B) ~ s log nu(B)`` at the centre maximizing the mass
    of ``|f|``; ``q = 1 / (1 - s)`` (infinite when ``s >= 1``).
    """
    fv = np.abs(f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float))
    if center is None:
        center = int(np.argmax(fv * Z.nu))
    if radii is None:
        radii = []
        r = Z.min_positive_distance * 1.5
        while r <= Z.diameter / 4:
            radii.append(r)
            r *= 2
    d = Z.dist[center]
    mf = [float(np.dot(fv[d < r], Z.nu[d < r])) for r in radii]
    mn = [float(Z.nu[d < r].sum()) for r in radii]
    fit = fit_exponent(mn, mf)
    s = fit.slope
    return math.inf if s >= 1 - 1e-9 else 1.0 / (1.0 - s)


# -- growth condition ---------------------------------------------------------------------------

def makalainen_check(Z, domain, f, p, alpha, region=None, radii=None, enlargement=4.0, seed=0):
    """Growth test ``nu_f(B(x,r)) / mu(B(x,r)) <= M r**(-p + alpha (p-1))``.

    For every radius the worst ratio ``M(r)`` over centres ``x`` in
    ``region`` with ``B(x, enlargement * r)`` inside ``region`` is
    recorded.  The check passes when ``log M`` does not grow as ``r``
    decreases (fitted slope against ``log r`` at least ``-0.1``).

    Raises
    ------
    NegativeData
        If ``f < 0`` somewhere on the region.
    NoAdmissibleBalls
    """
    fv = f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float)
    mask = np.ones(Z.n, dtype=bool) if region is None else _window_mask(Z, region)
    if np.any(fv[mask] < 0):
        raise NegativeData("data must be nonnegative on the tested region")
    params_doc = {"p": p, "alpha": alpha, "enlargement": enlargement}
    if np.all(fv[mask] == 0):
        return CheckReport("makalainen", params_doc, seed, PASS, [], {"M": 0.0, "slope": 0.0})
    if radii is None:
        radii = []
        r = 2.0 * float(domain.heights[1]) if domain.heights is not None else Z.min_positive_distance
        while r * enlargement <= Z.diameter:
            radii.append(r)
            r *= math.sqrt(2)
    expo = p - alpha * (p - 1)
    rows = []
    for r in radii:
        worst = -1.0
        for x in np.flatnonzero(mask):
            if not np.all(mask[Z.dist[x] < enlargement * r]):
                continue
            inb = Z.dist[x] < r
            nf = float(np.dot(fv[inb], Z.nu[inb]))
            dn = _node_distances(domain, x)
            mu_b = float(domain.mu[dn < r].sum())
            if mu_b <= 0:
                continue
            worst = max(worst, nf * r ** expo / mu_b)
        if worst >= 0:
            rows.append({"r": float(r), "M": worst})
    if len(rows) < 4:
        raise NoAdmissibleBalls("fewer than 4 radii have admissible balls")
    Ms = np.array([row["M"] for row in rows])
    if np.all(Ms == 0):
        return CheckReport("makalainen", params_doc, seed, PASS, rows, {"M": 0.0, "slope": 0.0})
    fit = fit_exponent([row["r"] for row in rows], Ms)
    ok = fit.slope >= -0.1
    return CheckReport("makalainen", params_doc, seed, PASS if ok else FAIL, rows,
                       {"M": float(Ms.max()), "slope": fit.slope, "r_squared": fit.r_squared})


def gradient_magnitude(domain, structure, u, p):
    """Per-node ``|grad u|`` (thin wrapper used for reports)."""
    return gradient(domain, structure, u, p).magnitude
