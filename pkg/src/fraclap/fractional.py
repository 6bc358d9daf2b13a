"""Nonlocal side: Besov forms, the weight ``J``, trace/extension and the fractional p-Laplacian.

The fractional operator is realized through the extension domain: for
boundary values ``u`` let ``u_hat`` be the p-harmonic (Dirichlet) extension.
Then ``(-Delta_p)^theta u = f`` means ``el_form(u_hat, phi) = sum_i phi_i f_i nu_i``
for every test function, so ``f_i`` is the Neumann residual of ``u_hat`` at
boundary node ``i`` divided by ``nu_i``.
"""

import csv
import hashlib
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .cheeger import energy_operator, el_form, el_residual_vector, flux, p_energy
from .errors import NonzeroMean, ValidationError
from .solve import BoundaryData, boundary_data, solve_dirichlet, solve_neumann

_KERNELS = weakref.WeakKeyDictionary()


def _fingerprint(values):
    a = np.ascontiguousarray(np.asarray(values, dtype=float))
    return hashlib.sha1(a.tobytes()).hexdigest()[:16]


# -- weight J ------------------------------------------------------------------------------

def weight_J(Z, x0, params):
    """``J(x) = d(x, x0)**(p' theta) * nu(B(x0, d(x0, x)))**(p'/p)`` with open balls.

    ``J(x0) = 0``.
    """
    x0 = int(x0)
    if not 0 <= x0 < Z.n:
        raise ValidationError(f"base point {x0} outside 0..{Z.n - 1}")
    p, q = params.p, params.p_conj
    d = np.asarray(Z.dist[x0], dtype=float)
    order = np.argsort(d, kind="stable")
    ds = d[order]
    cum = np.concatenate([[0.0], np.cumsum(Z.nu[order])])
    # open ball: points strictly closer than d(x0, x)
    ball = cum[np.searchsorted(ds, d, side="left")]
    return d ** (q * params.theta) * ball ** (q / p)


def nu_J_norm(Z, f, x0, params):
    """``||f||`` in ``L^{p'}(nu_J)``."""
    q = params.p_conj
    J = weight_J(Z, x0, params)
    return float(np.dot(np.abs(np.asarray(f, dtype=float)) ** q, J * Z.nu) ** (1.0 / q))


# -- Besov form ----------------------------------------------------------------------------

def open_ball_matrix(Z):
    """``V[y, x] = nu(B(y, d(x, y)))`` for open balls."""
    D = np.asarray(Z.dist)
    order = np.argsort(D, axis=1, kind="stable")
    ds = np.take_along_axis(D, order, axis=1)
    cum = np.concatenate([np.zeros((Z.n, 1)), np.cumsum(Z.nu[order], axis=1)], axis=1)
    V = np.empty_like(D)
    for y in range(Z.n):
        V[y] = cum[y, np.searchsorted(ds[y], D[y], side="left")]
    return V


def besov_kernel(Z, params):
    """Kernel ``K[x, y] = nu_x nu_y / (d(x, y)**(p theta) nu(B(y, d(x, y))))``, zero diagonal.

    Cached per space and ``(p, theta)``.
    """
    key = (float(params.p), float(params.theta))
    per_space = _KERNELS.setdefault(Z, {})
    if key not in per_space:
        D = np.asarray(Z.dist)
        V = open_ball_matrix(Z)
        off = ~np.eye(Z.n, dtype=bool)
        K = np.zeros_like(D)
        K[off] = (np.outer(Z.nu, Z.nu)[off]
                  / (D[off] ** (params.p * params.theta) * V.T[off]))
        K.setflags(write=False)
        per_space[key] = K
    return per_space[key]


@dataclass
class FormValue:
    """Value of a bilinear-type form with provenance.

    Attributes
    ----------
    value : float
    kind : {"besov", "et"}
    fingerprints : tuple of str
        Hashes of the inputs ``(u, v)``.
    """

    value: float
    kind: str
    p: float = 2.0
    theta: float = 0.5
    fingerprints: tuple = ()
    extra: dict = field(default_factory=dict, repr=False)

    def __float__(self):
        return float(self.value)

    def to_record(self):
        return {"kind": self.kind, "p": self.p, "theta": self.theta, "value": self.value,
                "fingerprints": list(self.fingerprints)}


def besov_form(Z, u, v, params):
    """Nonlocal form ``sum_{x != y} K[x, y] |u_y - u_x|**(p-2) (u_y - u_x) (v_y - v_x)``.

    With ``v = u`` this is the Besov energy ``||u||_{theta,p}**p``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    K = besov_kernel(Z, params)
    du = u[None, :] - u[:, None]
    dv = v[None, :] - v[:, None]
    value = float(np.sum(K * flux(du, params.p) * dv))
    return FormValue(value, "besov", params.p, params.theta, (_fingerprint(u), _fingerprint(v)))


def besov_energy(Z, u, params):
    u = np.asarray(u, dtype=float)
    K = besov_kernel(Z, params)
    return float(np.sum(K * np.abs(u[None, :] - u[:, None]) ** params.p))


@dataclass
class BesovFunction:
    """Function on the points of ``Z`` with its Besov seminorm ``||u||_{theta,p}``."""

    values: np.ndarray
    p: float
    theta: float
    seminorm: float
    solution: object = field(default=None, repr=False)


def besov_function(Z, values, params, solution=None):
    values = np.asarray(values, dtype=float)
    return BesovFunction(values, params.p, params.theta,
                         besov_energy(Z, values, params) ** (1.0 / params.p), solution)


# -- trace and extension --------------------------------------------------------------------

def trace(domain, u):
    """Restriction of node values to the boundary layer, ordered by point of ``Z``."""
    return np.asarray(u, dtype=float)[domain.boundary_nodes].copy()


def extension_matrices(domain):
    """Per-layer averaging matrices ``A_m`` with ``(A_m v)_x = nu-mean of v on B(x, y_m)``.

    Balls are closed, so the top layer returns the global mean once
    ``y_M >= diam(Z)``.  Cached on the domain.
    """
    key = ("extension_matrices",)
    if key not in domain._cache:
        Z = domain.space
        mats = []
        for y in domain.heights[1:]:
            W = (Z.dist <= y * (1 + 1e-12)) * Z.nu[None, :]
            mats.append(W / W.sum(axis=1, keepdims=True))
        domain._cache[key] = mats
    return domain._cache[key]


def extend(domain, v):
    """Linear extension of boundary values into the domain.

    Product domains average ``v`` over balls of radius ``y_m`` on layer
    ``m`` and copy ``v`` onto the boundary layer.  Other domains use the
    harmonic (``p = 2``) extension.  In both cases ``trace(extend(v)) == v``.
    """
    v = np.asarray(v, dtype=float)
    Z = domain.space
    if v.shape[0] != Z.n:
        raise ValidationError(f"extension needs {Z.n} boundary values, got {v.shape[0]}")
    if domain.is_product:
        n = Z.n
        u = np.empty(domain.node_count)
        u[:n] = v
        for m, A in enumerate(extension_matrices(domain), start=1):
            u[m * n:(m + 1) * n] = A @ v
        return u
    from dataclasses import replace
    full = replace(domain, boundary_ids=domain.boundary_nodes, free_ids=np.array([], dtype=np.intp),
                   _cache={})
    u = solve_dirichlet(full, None, 2.0, v).u
    u[domain.boundary_nodes] = v[domain.col_of[domain.boundary_nodes]]
    return u


def _full_boundary(domain):
    """The domain with every boundary-layer node active."""
    if domain.free_ids.size == 0:
        return domain
    from dataclasses import replace
    return replace(domain, boundary_ids=domain.boundary_nodes,
                   free_ids=np.array([], dtype=np.intp), _cache={})


def harmonic_extension(domain, structure, u, params=None, options=None, **overrides):
    """p-harmonic extension ``u_hat`` of boundary values ``u`` (a :class:`Solution`)."""
    p = (params or domain.params).p
    return solve_dirichlet(_full_boundary(domain), structure, p, u, options=options, **overrides)


def et_form(Z, domain, structure, u, v, params, w=None, solution=None, options=None):
    """``E_T(u, v) = el_form(u_hat, w)`` with ``w = extend(v)`` unless given.

    Parameters
    ----------
    w : array_like, optional
        Any node function whose trace is ``v``.  The value does not depend on
        this choice up to solver tolerance.
    solution : Solution, optional
        Reuse an already computed extension of ``u``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    sol = solution or harmonic_extension(domain, structure, u, params, options)
    if w is None:
        w = extend(domain, v)
    else:
        w = np.asarray(w, dtype=float)
        tw = trace(domain, w)
        if not np.allclose(tw, v, rtol=0, atol=1e-12 * max(1.0, float(np.abs(v).max(initial=0)))):
            raise ValidationError("test extension w must have trace v")
    value = el_form(domain, structure, sol.u, w, params.p)
    return FormValue(value, "et", params.p, params.theta, (_fingerprint(u), _fingerprint(v)),
                     {"energy": sol.energy, "el_residual": sol.el_residual})


def et_energy(domain, structure, u, params, options=None):
    """``E_T(u, u)``, the p-energy of the p-harmonic extension."""
    return harmonic_extension(domain, structure, u, params, options).energy


# -- fractional p-Laplacian -----------------------------------------------------------------

def boundary_flux(domain, structure, u_hat, p, collar=None):
    """Per-point flux ``el_form(u_hat, phi_i) / nu_i``.

    With ``collar=None`` the test function is the indicator of boundary node
    ``i``.  Otherwise it is ``phi_i = (1 - eta)`` on the column above point
    ``i``, with ``eta = min(1, y / collar)``; this only differs from the
    indicator by interior residuals of ``u_hat``.
    """
    r = el_residual_vector(domain, structure, u_hat, p)
    Z = domain.space
    if collar is None:
        nodes = domain.boundary_nodes
        return r[nodes] / Z.nu[domain.col_of[nodes]]
    if not collar > 0:
        raise ValidationError("collar width must be positive")
    psi = 1.0 - np.minimum(1.0, domain.y_of / collar)
    cols = domain.col_of
    ok = cols >= 0
    acc = np.bincount(cols[ok], weights=(psi * r)[ok], minlength=Z.n)
    return acc / Z.nu


def frac_apply(Z, domain, structure, u, params, estimator="residual", collar=None,
               options=None, **overrides):
    """Apply ``(-Delta_p)^theta`` to boundary values ``u``.

    Parameters
    ----------
    estimator : {"residual", "collar"}
        ``"residual"`` divides the Neumann residual of the p-harmonic
        extension by ``nu``.  ``"collar"`` tests against the cut-off
        ``1 - min(1, y / collar)``, with ``collar`` defaulting to the first
        layer height.

    Returns
    -------
    BoundaryData
        Not recentred; ``mean`` reports ``sum f nu``, which vanishes up to
        solver tolerance.  The extension is attached as ``.solution``.
    """
    u = np.asarray(u, dtype=float)
    sol = harmonic_extension(domain, structure, u, params, options, **overrides)
    dom = _full_boundary(domain)
    if estimator == "residual":
        f = boundary_flux(dom, structure, sol.u, params.p)
    elif estimator == "collar":
        width = collar if collar is not None else (
            float(domain.heights[1]) if domain.heights is not None else 1.0)
        f = boundary_flux(dom, structure, sol.u, params.p, collar=width)
    else:
        raise ValidationError(f"unknown estimator {estimator!r}")
    data = boundary_data(Z, f, params, x0=domain.col_of[domain.base_point],
                         recenter=False, check_mean=False)
    data.solution = sol
    return data


def b0_points(domain):
    """Points of ``Z`` in the closed reference ball ``B_0``."""
    Z = domain.space
    d0 = Z.dist[domain.col_of[domain.base_point]]
    return np.flatnonzero(d0 <= domain.b0_radius * (1 + 1e-12))


def frac_solve(Z, domain, structure, f, params, options=None, init=None, **overrides):
    """Solve ``(-Delta_p)^theta u = f`` through the Neumann problem.

    Returns the trace of the Neumann solution, shifted to zero ``nu``-mean on
    the points of ``B_0``, as a :class:`BesovFunction`.
    """
    if not isinstance(f, BoundaryData):
        f = boundary_data(Z, f, params, x0=domain.col_of[domain.base_point])
    elif abs(f.mean) > 1e-10 * float(np.dot(np.abs(f.f), Z.nu)):
        raise NonzeroMean(f"data must have zero nu-mean, got {f.mean:.6g}")
    sol = solve_neumann(domain, structure, params.p, f, options=options, init=init, **overrides)
    u = trace(domain, sol.u)
    pts = b0_points(domain)
    u = u - float(np.dot(Z.nu[pts], u[pts]) / Z.nu[pts].sum())
    return besov_function(Z, u, params, solution=sol)


def dtn_matrix(domain, structure=None):
    """Matrix ``T`` with ``frac_apply(u) = T u`` for ``p = 2``.

    ``T = diag(1/nu) S`` with ``S`` the Schur complement of the energy
    matrix on the boundary layer.
    """
    dom = _full_boundary(domain)
    op = energy_operator(dom, structure)
    L = (op.B.T @ sparse.diags(np.repeat(op.c, op.d)) @ op.B).tocsc()
    bnd = dom.boundary_nodes
    inner = dom.interior_ids
    Lbb = L[bnd][:, bnd].toarray()
    Lbi = L[bnd][:, inner]
    Lii = L[inner][:, inner].tocsc()
    X = splu(Lii).solve(Lbi.T.toarray())
    S = Lbb - Lbi @ X
    return S / domain.space.nu[domain.col_of[bnd]][:, None]


def dual_bound_check(Z, f, v, params):
    """Pairing bound ``|sum f v nu| <= C ||f||_{nu_J} ||v||_{theta,p}``.

    Returns
    -------
    dict
        ``pairing``, ``norm_J``, ``seminorm`` and the implied ``constant``
        (0 when the pairing vanishes).
    """
    if not isinstance(f, BoundaryData):
        f = boundary_data(Z, f, params)
    elif abs(f.mean) > 1e-10 * float(np.dot(np.abs(f.f), Z.nu)):
        raise NonzeroMean(f"data must have zero nu-mean, got {f.mean:.6g}")
    v = np.asarray(v, dtype=float)
    pairing = abs(float(np.dot(f.f * v, Z.nu)))
    semi = besov_energy(Z, v, params) ** (1.0 / params.p)
    denom = f.norm_J * semi
    if pairing <= 1e-14 * max(1.0, float(np.dot(np.abs(f.f * v), Z.nu))):
        const = 0.0
    elif denom == 0.0:
        const = float("inf")
    else:
        const = pairing / denom
    return {"pairing": pairing, "norm_J": f.norm_J, "seminorm": semi, "constant": const}


# -- CSV round trip ---------------------------------------------------------------------------

def write_point_csv(path, values, labels=None):
    """Write ``point_id,value`` rows."""
    values = np.asarray(values, dtype=float)
    ids = labels if labels is not None else range(values.size)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "value"])
        for pid, val in zip(ids, values):
            w.writerow([pid, repr(float(val))])


def read_point_csv(path):
    """Read values written by :func:`write_point_csv`, ordered by ``point_id``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        pairs = sorted((int(r["point_id"]), float(r["value"])) for r in rows)
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad point CSV {path}: {exc}") from None
    return np.array([v for _, v in pairs])


def energy_of_extension(domain, structure, v, p):
    """p-energy of :func:`extend` applied to ``v`` (used for boundedness checks)."""
    return p_energy(domain, structure, extend(domain, v), p)
