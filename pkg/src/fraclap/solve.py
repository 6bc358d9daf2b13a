"""Variational solvers for p-harmonic Dirichlet and Neumann problems.

Both problems minimize a convex functional over node values:

* Dirichlet: ``E(u)`` subject to ``u = g`` on the active boundary;
* Neumann: ``I(u) = E(u) - p * sum_i u_i f_i nu_i`` over all ``u``, with one
  node pinned during the solve and ``u`` shifted afterwards to have zero
  ``mu``-mean on the reference ball ``B_0``.

For ``p = 2`` the first-order conditions are a sparse symmetric linear
system that is solved directly.  Otherwise damped Newton is run on the
regularized energy ``sum_s c_s (eps**2 s_s**2 + |t_s|**2)**(p/2)`` while
``eps`` is driven from a tenth of the gradient scale down to ``1e-12`` of it.
An accelerated gradient method is the fallback if a Newton system cannot be
solved.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import MatrixRankWarning, splu, spsolve

from .cheeger import energy_operator, flux, p_energy
from .errors import (
    DisconnectedComponentWithoutBoundary,
    NonConvergence,
    NonzeroMean,
    ValidationError,
)
from .extension import truncate

DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12)
METHODS = ("auto", "newton", "descent")


@dataclass
class SolverOptions:
    """Solver settings.

    Attributes
    ----------
    tol : float
        Euler-Lagrange residual tolerance, relative to
        ``max(1 + |f|_inf, flux scale)``.
    max_iter : int
        Iteration cap per continuation stage.
    epsilon_schedule : sequence of float, optional
        Regularization levels relative to the gradient scale of the initial
        iterate.  The last entry is the final level.
    method : {"auto", "newton", "descent"}
    rel_energy_tol : float
        Relative energy decrease below which a converged iterate is accepted.
    step_tol : float
        Largest accepted final Newton step relative to ``max(1, |u|_inf)``.
        For ``p > 2`` the residual is insensitive to errors where the
        gradient is small, so the residual test alone can stop early.
    """

    tol: float = 1e-8
    max_iter: int = 200
    epsilon_schedule: tuple = None
    method: str = "auto"
    rel_energy_tol: float = 1e-14
    step_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValidationError("tol must be positive and max_iter at least 1")
        if self.epsilon_schedule is not None:
            sched = tuple(float(e) for e in self.epsilon_schedule)
            if not sched or any(e < 0 for e in sched):
                raise ValidationError("epsilon_schedule must be a nonempty list of nonnegative levels")
            self.epsilon_schedule = sched

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        doc.pop("p", None)
        known = {k: doc[k] for k in ("tol", "max_iter", "epsilon_schedule", "method",
                                     "rel_energy_tol", "step_tol") if k in doc}
        if "max_iter" in known:
            known["max_iter"] = int(known["max_iter"])
        return cls(**known)

    def to_dict(self):
        return {"tol": self.tol, "max_iter": self.max_iter,
                "epsilon_schedule": None if self.epsilon_schedule is None else list(self.epsilon_schedule),
                "method": self.method, "rel_energy_tol": self.rel_energy_tol,
                "step_tol": self.step_tol}


def _options(options, overrides):
    opts = options if isinstance(options, SolverOptions) else SolverOptions.from_dict(options)
    if overrides:
        opts = replace(opts, **overrides)
    return opts


# -- boundary data -------------------------------------------------------------------------

@dataclass
class BoundaryData:
    """Zero-mean density ``f`` on the boundary points.

    Attributes
    ----------
    f : ndarray
        Values per point of ``Z`` (density against ``nu``).
    x0 : int
        Base point (index into ``Z``) of the weight ``J``.
    norm_p_conj : float
        ``||f||`` in ``L^{p'}(nu)``.
    norm_J : float
        ``||f||`` in ``L^{p'}(nu_J)``.
    mean : float
        ``sum_i f_i nu_i`` after recentring.
    shift : float
        Constant subtracted during recentring.
    """

    f: np.ndarray
    x0: int
    norm_p_conj: float
    norm_J: float
    mean: float
    nu: np.ndarray = field(repr=False, default=None)
    J: np.ndarray = field(repr=False, default=None)
    p: float = 2.0
    shift: float = 0.0

    @property
    def sup(self):
        return float(np.abs(self.f).max()) if self.f.size else 0.0


def boundary_data(Z, f, params, x0=None, recenter=True, check_mean=True):
    """Wrap boundary values into :class:`BoundaryData`.

    The data are recentred by their ``nu``-mean when
    ``|sum f nu| <= 1e-10 * sum |f| nu`` and rejected otherwise.

    Parameters
    ----------
    Z : MetricMeasureSpace
    f : array_like
        One value per point of ``Z``.
    params : FractionalParams
    x0 : int, optional
        Base point; defaults to the ball maximizer of ``Z``.
    recenter : bool
        Subtract the mean when it is within tolerance.
    check_mean : bool
        Raise :class:`NonzeroMean` for data with a significant mean.
    """
    from .fractional import weight_J
    from .space import default_base_point

    f = np.array(f, dtype=float).ravel()
    if f.shape[0] != Z.n:
        raise ValidationError(f"boundary data has {f.shape[0]} values for {Z.n} points")
    if not np.all(np.isfinite(f)):
        raise ValidationError("boundary data must be finite")
    x0 = default_base_point(Z) if x0 is None else int(x0)
    nu = np.asarray(Z.nu)
    mean = float(np.dot(f, nu))
    scale = float(np.dot(np.abs(f), nu))
    shift = 0.0
    if check_mean and abs(mean) > 1e-10 * scale:
        raise NonzeroMean(f"boundary data must have zero nu-mean, got sum f nu = {mean:.6g}")
    if recenter and mean != 0.0:
        shift = mean / nu.sum()
        f = f - shift
        mean = float(np.dot(f, nu))
    J = weight_J(Z, x0, params)
    q = params.p_conj
    return BoundaryData(
        f=f, x0=x0, norm_p_conj=float(np.dot(np.abs(f) ** q, nu) ** (1 / q)),
        norm_J=float(np.dot(np.abs(f) ** q, J * nu) ** (1 / q)), mean=mean,
        nu=nu, J=J, p=params.p, shift=shift,
    )


# -- solution ------------------------------------------------------------------------------

@dataclass
class Solution:
    """Result of a solve.

    Attributes
    ----------
    u : ndarray
        Node values.
    energy : float
        ``p_energy(u)``.
    el_residual : float
        Max-norm of the Euler-Lagrange residual over the unknown nodes
        (all nodes for Neumann problems), for the functional regularized at
        the final level ``eps_final``.  For ``p < 2`` the unregularized flux
        ``|t|**(p-2) t`` is not Lipschitz at 0, so its residual
        (``raw_residual``) can stay at ``eps_final**(p-1)`` size on edges
        where the solution is flat.
    iterations : int
        Newton (or descent) iterations over all stages.
    normalization : float
        ``mu``-mean of ``u`` over ``B_0`` (zero for Neumann solutions).
    """

    u: np.ndarray
    energy: float
    el_residual: float
    iterations: int
    normalization: float
    shift: float = 0.0
    converged: bool = True
    method: str = ""
    tolerance: float = 0.0
    problem: str = ""
    eps_final: float = 0.0
    raw_residual: float = 0.0
    wall_time: float = 0.0
    history: list = field(default_factory=list, repr=False)

    def diagnostics(self):
        return {"energy": self.energy, "el_residual": self.el_residual,
                "iterations": self.iterations, "normalization": self.normalization,
                "shift": self.shift, "converged": self.converged, "method": self.method,
                "tolerance": self.tolerance, "problem": self.problem,
                "eps_final": self.eps_final, "raw_residual": self.raw_residual}


def _b0_mean(domain, u):
    nodes = domain.ball_b0()
    if nodes.size == 0:
        nodes = domain.boundary_ids
        w = domain.space.nu[domain.col_of[nodes]]
    else:
        w = domain.mu[nodes]
    return float(np.dot(w, u[nodes]) / w.sum())


# -- core minimizer ------------------------------------------------------------------------

class _Problem:
    """``F(x) = sum_s c_s phi_eps(t_s) - p * b.x`` with ``t = B_F x + t0``."""

    def __init__(self, op, free, fixed, fixed_vals, b, p):
        self.op = op
        self.p = p
        B = op.B.tocsc()
        self.BF = B[:, free].tocsr()
        self.BFT = self.BF.T.tocsr()
        self.t0 = B[:, fixed] @ fixed_vals if fixed.size else np.zeros(B.shape[0])
        self.b = b[free]
        self.d = op.d
        self.c = op.c
        self.s2 = op.scale ** 2
        self.absBT = abs(self.BF).T.tocsr()

    def samples(self, x):
        t = self.BF @ x + self.t0
        return t if self.d == 1 else t.reshape(-1, self.d)

    def _r2(self, t, eps):
        tt = t * t if self.d == 1 else (t * t).sum(axis=1)
        return tt + (eps * eps) * self.s2, tt

    def value(self, x, eps):
        t = self.samples(x)
        r2, tt = self._r2(t, eps)
        return float(np.dot(self.c, r2 ** (0.5 * self.p))) - self.p * float(np.dot(self.b, x))

    def grad(self, x, eps, t=None):
        t = self.samples(x) if t is None else t
        p = self.p
        if eps == 0.0:
            g = self.c[:, None] * flux(t, p, self.d) if self.d > 1 else self.c * flux(t, p)
        else:
            r2, _ = self._r2(t, eps)
            fac = p * self.c * r2 ** (0.5 * p - 1.0)
            g = fac[:, None] * t if self.d > 1 else fac * t
            g = g / p
        return p * (self.BFT @ g.ravel()) - p * self.b

    def _assembly(self):
        """Map from flattened site blocks to the CSC data of ``B_F^T W B_F``.

        Built once per problem so each Hessian costs one sparse product.
        """
        if getattr(self, "_asm", None) is not None:
            return self._asm
        d = self.d
        nF = self.BF.shape[1]
        coo = self.BF.tocoo()
        site = coo.row // d
        comp = coo.row % d
        order = np.argsort(site, kind="stable")
        site, comp, col, val = site[order], comp[order], coo.col[order], coo.data[order]
        m = self.c.shape[0]
        counts = np.bincount(site, minlength=m)
        cmax = int(counts.max(initial=0))
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(site.size) - start[site]
        pad = np.full((m, max(cmax, 1)), -1)
        pad[site, slot] = np.arange(site.size)
        e1 = np.repeat(pad[:, :, None], pad.shape[1], axis=2)
        e2 = np.repeat(pad[:, None, :], pad.shape[1], axis=1)
        ok = (e1 >= 0) & (e2 >= 0)
        e1, e2 = e1[ok], e2[ok]
        widx = site[e1] * d * d + comp[e1] * d + comp[e2]
        coef = val[e1] * val[e2]
        key = col[e2].astype(np.int64) * nF + col[e1]
        uniq, pos = np.unique(key, return_inverse=True)
        cols_of = uniq // nF
        indptr = np.concatenate([[0], np.cumsum(np.bincount(cols_of, minlength=nF))])
        A = sparse.csr_matrix((coef, (pos, widx)), shape=(uniq.size, m * d * d))
        self._asm = (A, (uniq % nF).astype(np.int32), indptr.astype(np.int32), nF)
        return self._asm

    def hessian(self, x, eps, t=None):
        t = self.samples(x) if t is None else t
        p = self.p
        d = self.d
        A, indices, indptr, nF = self._assembly()
        if p == 2.0:
            blocks = 2.0 * self.c[:, None, None] * np.eye(d)[None] if d > 1 else 2.0 * self.c
        else:
            r2, tt = self._r2(t, eps)
            with np.errstate(divide="ignore", invalid="ignore"):
                base = p * self.c * np.where(r2 > 0, r2 ** (0.5 * p - 2.0), 0.0)
            if d == 1:
                blocks = base * ((p - 1.0) * tt + (eps * eps) * self.s2)
            else:
                outer = t[:, :, None] * t[:, None, :]
                blocks = base[:, None, None] * (r2[:, None, None] * np.eye(d)[None] + (p - 2.0) * outer)
        data = A @ np.ravel(blocks)
        return sparse.csc_matrix((data, indices, indptr), shape=(nF, nF))

    def residual(self, x, eps=0.0):
        """Euler-Lagrange residual in pairing units (regularized when ``eps > 0``)."""
        return self.grad(x, eps) / self.p

    def flux_scale(self, x):
        """Largest node sum of absolute fluxes, the natural size of the residual."""
        t = self.samples(x)
        a = self.c * np.abs(flux(t, self.p)) if self.d == 1 else \
            (self.c[:, None] * np.abs(flux(t, self.p, self.d))).ravel()
        return float((self.absBT @ a).max(initial=0.0))

    def grad_scale(self, x):
        t = self.samples(x)
        q = np.abs(t) if self.d == 1 else np.sqrt((t * t).sum(axis=1))
        q = q / np.sqrt(self.s2)
        return float(q.max(initial=0.0))


def _newton_direction(H, g):
    n = H.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            dx = spsolve(H, -g, permc_spec="MMD_AT_PLUS_A")
        except (MatrixRankWarning, RuntimeError):
            dx = None
    if dx is None or not np.all(np.isfinite(dx)) or np.dot(g, dx) >= 0:
        diag = H.diagonal()
        shift = 1e-10 * float(np.abs(diag).max(initial=1.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dx = spsolve(H + shift * sparse.identity(n, format="csc"), -g,
                             permc_spec="MMD_AT_PLUS_A")
            except (MatrixRankWarning, RuntimeError):
                return None
        if not np.all(np.isfinite(dx)) or np.dot(g, dx) >= 0:
            return None
    return dx


def _line_search(prob, x, dx, F0, slope, eps):
    alpha = 1.0
    for _ in range(60):
        xn = x + alpha * dx
        Fn = prob.value(xn, eps)
        if Fn <= F0 + 1e-4 * alpha * slope or abs(Fn - F0) <= 1e-15 * max(abs(F0), 1e-300):
            return xn, Fn, alpha
        alpha *= 0.5
    return x, F0, 0.0


def _descent_stage(prob, x, eps, max_iter, stop):
    """Accelerated gradient with backtracking and adaptive restart."""
    y = x.copy()
    x_prev = x.copy()
    L = 1.0
    tk = 1.0
    F = prob.value(x, eps)
    it = 0
    for it in range(1, max_iter + 1):
        gy = prob.grad(y, eps)
        Fy = prob.value(y, eps)
        while True:
            xn = y - gy / L
            Fn = prob.value(xn, eps)
            if Fn <= Fy - 0.5 / L * np.dot(gy, gy) + 1e-15 * abs(Fy):
                break
            L *= 2.0
        if Fn > F:
            tk = 1.0
            y = x.copy()
            continue
        tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        y = xn + ((tk - 1) / tn) * (xn - x_prev)
        x_prev, x, tk = x, xn, tn
        F = Fn
        L *= 0.9
        if stop(x, F):
            break
    return x, it


def _minimize(prob, x, opts, f_sup, history):
    p = prob.p
    iters = 0
    method = opts.method
    if method == "auto":
        method = "newton"
    if p == 2.0 and method == "newton":
        return _linear_solve(prob, x, opts, f_sup, history)
    scale = prob.grad_scale(x)
    if not scale > 0:
        scale = 1.0
    schedule = opts.epsilon_schedule or DEFAULT_SCHEDULE
    used_method = method
    converged = False
    eps = 0.0

    def tolerance(xx, last):
        base = opts.tol * max(1.0 + f_sup, prob.flux_scale(xx))
        return base if last else 100.0 * base

    for stage, rel in enumerate(schedule):
        eps = rel * scale
        last = stage == len(schedule) - 1
        F = prob.value(x, eps)
        stage_method = method
        for _ in range(opts.max_iter):
            g = prob.grad(x, eps)
            res = float(np.abs(g).max(initial=0.0)) / p
            tol_abs = tolerance(x, last)
            if stage_method != "newton":
                break
            H = prob.hessian(x, eps)
            dx = _newton_direction(H, g)
            if dx is None:
                stage_method = "descent"
                used_method = "newton+descent"
                break
            dec = -float(np.dot(g, dx))
            ref = max(abs(F), 1e-300)
            step = float(np.abs(dx).max(initial=0.0))
            small_step = step <= opts.step_tol * max(1.0, float(np.abs(x).max(initial=0.0)))
            if res <= tol_abs and (not last or (0.5 * dec <= opts.rel_energy_tol * ref
                                                and small_step)):
                converged = last
                break
            xn, Fn, alpha = _line_search(prob, x, dx, F, -dec, eps)
            iters += 1
            history.append({"eps": eps, "F": Fn, "alpha": alpha, "decrement": dec, "residual": res})
            if alpha == 0.0:
                converged = last and res <= tol_abs
                break
            x, F = xn, Fn
        if stage_method == "descent":
            def stop(xx, FF, last=last, eps=eps):
                return float(np.abs(prob.residual(xx, eps)).max(initial=0.0)) <= tolerance(xx, last)
            x, it = _descent_stage(prob, x, eps, 50 * opts.max_iter, stop)
            iters += it
            if method == "descent":
                used_method = "descent"
            if last:
                converged = stop(x, None)
    return x, iters, converged, used_method, eps


def _linear_solve(prob, x, opts, f_sup, history):
    H = prob.hessian(x, 0.0)
    g = prob.grad(x, 0.0)
    try:
        lu = splu(H, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError:
        dx = _newton_direction(H, g)
        if dx is None:
            raise NonConvergence("singular linear system in the p=2 solve")
        x = x + dx
    else:
        x = x + lu.solve(-g)
        g = prob.grad(x, 0.0)
        x = x + lu.solve(-g)  # one step of iterative refinement
    history.append({"eps": 0.0, "F": prob.value(x, 0.0)})
    tol_abs = opts.tol * max(1.0 + f_sup, prob.flux_scale(x))
    res = float(np.abs(prob.residual(x)).max(initial=0.0))
    return x, 1, res <= tol_abs, "direct", 0.0


def _check_components(domain, anchored):
    G = domain.graph(lengths=False)
    ncomp, labels = connected_components(G, directed=False)
    if ncomp > 1:
        has = np.zeros(ncomp, dtype=bool)
        has[labels[anchored]] = True
        if not has.all():
            raise DisconnectedComponentWithoutBoundary(
                f"{int((~has).sum())} connected component(s) contain no boundary node")
    return ncomp


def _finish(domain, structure, p, x_full, free, prob, x, iters, converged, method, eps,
            opts, f_sup, problem, history, t_start, neumann):
    u = x_full.copy()
    u[free] = x
    res = float(np.abs(prob.residual(x, eps)).max(initial=0.0))
    raw = float(np.abs(prob.residual(x)).max(initial=0.0))
    tol_abs = opts.tol * max(1.0 + f_sup, prob.flux_scale(x))
    shift = 0.0
    if neumann:
        shift = _b0_mean(domain, u)
        u = u - shift
    sol = Solution(
        u=u, energy=p_energy(domain, structure, u, p), el_residual=res, iterations=iters,
        normalization=_b0_mean(domain, u), shift=shift, converged=bool(converged and res <= tol_abs),
        method=method, tolerance=tol_abs, problem=problem, eps_final=eps, raw_residual=raw,
        wall_time=time.perf_counter() - t_start, history=history,
    )
    if not sol.converged:
        raise NonConvergence(
            f"{problem} solve stopped with residual {res:.3e} above tolerance {tol_abs:.3e}",
            diagnostics=dict(sol.diagnostics(), solution=sol))
    return sol


def solve_dirichlet(domain, structure, p, boundary_values, options=None, init=None, **overrides):
    """p-harmonic extension of boundary values.

    Parameters
    ----------
    domain : ExtensionDomain
    structure : DifferentialStructure or None
    p : float
    boundary_values : array_like
        One value per point of ``Z`` (values on free nodes are ignored), or
        one value per active boundary node.
    options : SolverOptions or dict, optional
    init : array_like, optional
        Starting values for all nodes.  Defaults to the ``p = 2`` solution.
    **overrides
        Fields of :class:`SolverOptions`.

    Returns
    -------
    Solution

    Raises
    ------
    DisconnectedComponentWithoutBoundary, NonConvergence
    """
    t_start = time.perf_counter()
    opts = _options(options, overrides)
    N = domain.node_count
    fixed = np.asarray(domain.boundary_ids, dtype=np.intp)
    if fixed.size == 0:
        raise ValidationError("Dirichlet problem needs at least one active boundary node")
    g = np.asarray(boundary_values, dtype=float).ravel()
    if g.shape[0] == domain.space.n:
        g = g[domain.col_of[fixed]]
    elif g.shape[0] != fixed.size:
        raise ValidationError("boundary_values must have one entry per point or per active boundary node")
    _check_components(domain, fixed)
    free_mask = np.ones(N, dtype=bool)
    free_mask[fixed] = False
    free = np.flatnonzero(free_mask)
    op = energy_operator(domain, structure)
    prob = _Problem(op, free, fixed, g, np.zeros(N), p)
    x_full = np.zeros(N)
    x_full[fixed] = g
    history = []
    if init is not None:
        x = np.asarray(init, dtype=float)[free].copy()
    elif p != 2.0 and free.size:
        prob2 = _Problem(op, free, fixed, g, np.zeros(N), 2.0)
        x, *_ = _linear_solve(prob2, np.zeros(free.size), opts, 0.0, [])
    else:
        x = np.full(free.size, float(np.mean(g)))
    if free.size == 0:
        return _finish(domain, structure, p, x_full, free, prob, x, 0, True, "none", 0.0,
                       opts, 0.0, "dirichlet", history, t_start, False)
    x, iters, conv, method, eps = _minimize(prob, x, opts, 0.0, history)
    return _finish(domain, structure, p, x_full, free, prob, x, iters, conv, method, eps,
                   opts, 0.0, "dirichlet", history, t_start, False)


def neumann_load(domain, f):
    """Per-node load ``f_i nu_i`` on the active boundary (zero elsewhere)."""
    vals = f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float)
    b = np.zeros(domain.node_count)
    nodes = domain.boundary_ids
    cols = domain.col_of[nodes]
    b[nodes] = vals[cols] * domain.space.nu[cols]
    return b


def solve_neumann(domain, structure, p, f, options=None, init=None, **overrides):
    """Minimize ``I(u) = E(u) - p * sum_i u_i f_i nu_i``.

    Only active boundary nodes carry load; data on free nodes must vanish
    up to the zero-mean tolerance.

    Parameters
    ----------
    domain : ExtensionDomain
    structure : DifferentialStructure or None
    p : float
    f : BoundaryData or array_like
        Zero-mean data per point of ``Z``.
    options, init, **overrides
        As in :func:`solve_dirichlet`.

    Returns
    -------
    Solution
        Normalized to zero ``mu``-mean over ``B_0``.

    Raises
    ------
    NonzeroMean, NonConvergence
    """
    t_start = time.perf_counter()
    opts = _options(options, overrides)
    N = domain.node_count
    b = neumann_load(domain, f)
    fvals = f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float)
    total = float(b.sum())
    scale = float(np.abs(b).sum())
    if abs(total) > 1e-10 * scale:
        raise NonzeroMean(f"Neumann data must have zero mean on the active boundary, got {total:.6g}")
    if total != 0.0:
        nodes = domain.boundary_ids
        w = domain.space.nu[domain.col_of[nodes]]
        b[nodes] -= w * (total / w.sum())
    ncomp = _check_components(domain, np.arange(N))
    if ncomp > 1:
        raise ValidationError("Neumann problems need a connected domain")
    pin = int(domain.base_point)
    fixed = np.array([pin], dtype=np.intp)
    free = np.flatnonzero(np.arange(N) != pin)
    op = energy_operator(domain, structure)
    prob = _Problem(op, free, fixed, np.zeros(1), b, p)
    f_sup = float(np.abs(fvals).max(initial=0.0))
    history = []
    if init is not None:
        u0 = np.asarray(init, dtype=float)
        x = (u0 - u0[pin])[free]
    elif p != 2.0:
        prob2 = _Problem(op, free, fixed, np.zeros(1), b, 2.0)
        x, *_ = _linear_solve(prob2, np.zeros(free.size), opts, f_sup, [])
        # match the homogeneity of the p-problem: u scales like |f|^(1/(p-1))
        amp = float(np.abs(x).max(initial=0.0))
        if amp > 0:
            x = x * amp ** (1.0 / (p - 1.0) - 1.0)
    else:
        x = np.zeros(free.size)
    if scale == 0.0 and init is None:
        x = np.zeros(free.size)
    x, iters, conv, method, eps = _minimize(prob, x, opts, f_sup, history)
    return _finish(domain, structure, p, np.zeros(N), free, prob, x, iters, conv, method, eps,
                   opts, f_sup, "neumann", history, t_start, True)


def gradient_distance(domain, structure, u, v, p):
    """``||grad u - grad v||`` in ``L^p(mu)``, i.e. ``E(u - v)**(1/p)``."""
    return p_energy(domain, structure, np.asarray(u) - np.asarray(v), p) ** (1.0 / p)


@dataclass
class ExhaustionReport:
    """Per-level record of the exhaustion scheme.

    ``tails[k-1] = ||f - f_k||`` in ``L^{p'}(nu_J)``, ``increments[k-1]`` is
    ``||grad u_{k+1} - grad u_k||`` in ``L^p(mu)``.
    """

    levels: list
    radii: list
    tails: list
    increments: list
    energies: list
    verdict: str

    def to_dict(self):
        return dict(self.__dict__)


def exhaustion_data(domain, f, k):
    """``f_k = f chi_{B_k} - (1/nu(B_0)) (sum_{B_k} f nu) chi_{B_0}`` on ``Z``."""
    Z = domain.space
    fv = f.f if isinstance(f, BoundaryData) else np.asarray(f, dtype=float)
    d0 = Z.dist[domain.col_of[domain.base_point]]
    r0 = domain.b0_radius
    in_b0 = d0 <= r0 * (1 + 1e-12)
    in_bk = d0 <= (2.0 ** k) * r0 * (1 + 1e-12)
    corr = float(np.dot(fv[in_bk], Z.nu[in_bk])) / float(Z.nu[in_b0].sum())
    return np.where(in_bk, fv, 0.0) - corr * in_b0


def solve_neumann_exhaustion(domain, structure, p, f, k_max, options=None, **overrides):
    """Solve with truncated data ``f_k`` on ``truncate(domain, k)``, ``k = 1..k_max``.

    Returns
    -------
    (Solution, ExhaustionReport)
        The solution for ``k = k_max`` and the per-level report.  The
        verdict is ``"cauchy"`` when the gradient increments decrease
        strictly and ``"non-cauchy"`` when they stagnate or grow.
    """
    from .fractional import nu_J_norm

    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    if not isinstance(f, BoundaryData):
        f = boundary_data(domain.space, f, domain.params, x0=domain.col_of[domain.base_point])
    Z = domain.space
    sols, tails, energies, radii = [], [], [], []
    prev = None
    for k in range(1, k_max + 1):
        fk = exhaustion_data(domain, f, k)
        dom_k = truncate(domain, k)
        init = None if prev is None or p == 2.0 else prev.u
        sol = solve_neumann(dom_k, structure, p, fk, options=options, init=init, **overrides)
        sols.append(sol)
        prev = sol
        tails.append(nu_J_norm(Z, f.f - fk, f.x0, domain.params))
        energies.append(sol.energy)
        radii.append((2.0 ** k) * domain.b0_radius)
    incs = [gradient_distance(domain, structure, sols[k + 1].u, sols[k].u, p)
            for k in range(len(sols) - 1)]
    strictly = all(b < a for a, b in zip(incs, incs[1:]))
    verdict = "cauchy" if strictly else "non-cauchy"
    report = ExhaustionReport(levels=list(range(1, k_max + 1)), radii=radii, tails=tails,
                              increments=incs, energies=energies, verdict=verdict)
    return sols[-1], report


def a_priori_check(solution, f, bound=None):
    """Ratio ``energy / ||f||_{nu_J}**p'`` with an optional bound.

    ``f = 0`` gives the ratio 0 and is reported as trivially satisfied.
    """
    q = f.p / (f.p - 1.0)
    denom = f.norm_J ** q
    if denom == 0.0:
        ratio = 0.0
        trivial = True
    else:
        ratio = solution.energy / denom
        trivial = False
    violated = bound is not None and ratio > bound
    return {"ratio": float(ratio), "energy": float(solution.energy), "norm_J": float(f.norm_J),
            "p_conj": q, "trivial": trivial, "bound": bound, "violated": bool(violated)}
