"""Discrete differential structures, p-energies and the Euler-Lagrange pairing.

Each structure is reduced to a linear gradient operator plus site masses.
The operator ``B`` maps node values to gradient samples at ``m`` sites with
``d`` components each, and the masses ``c`` weight those sites:

* isotropic: one site per edge, ``(B u)_e = u_j - u_i`` and ``c_e = w_e``,
  so ``E(u) = sum_e w_e |u_j - u_i|**p``;
* anisotropic: one site per node with positive mass, ``B u = A(x) grad u``
  from axis difference quotients, ``c = mu``;
* grid: the anisotropic assembly with ``A = I``.

Every energy in the package is ``sum_s c_s |(B u)_s|**p``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import MissingCoords, ValidationError

KINDS = ("isotropic", "anisotropic", "grid")


@dataclass(frozen=True, eq=False)
class DifferentialStructure:
    """Choice of gradient on a domain.

    Use :meth:`isotropic`, :meth:`anisotropic` or :meth:`grid` to build one.

    Attributes
    ----------
    kind : {"isotropic", "anisotropic", "grid"}
    A : ndarray, shape (N, d, d), optional
        Symmetric positive definite matrix per node (anisotropic only).
    coords : ndarray, shape (N, d), optional
        Node coordinates; defaults to ``domain.coords``.
    """

    kind: str = "isotropic"
    A: np.ndarray = None
    coords: np.ndarray = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown structure kind {self.kind!r}")
        if self.kind == "anisotropic":
            A = np.asarray(self.A, dtype=float)
            if A.ndim != 3 or A.shape[1] != A.shape[2]:
                raise ValidationError("A must have shape (N, d, d)")
            if not np.allclose(A, np.swapaxes(A, 1, 2), rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
                raise ValidationError("every A(x) must be symmetric")
            ev = np.linalg.eigvalsh(A)
            if not np.all(ev > 0) or not np.all(np.isfinite(ev)):
                raise ValidationError("every A(x) must be positive definite")

    @classmethod
    def isotropic(cls):
        return cls("isotropic")

    @classmethod
    def anisotropic(cls, A, coords=None):
        return cls("anisotropic", np.asarray(A, dtype=float),
                   None if coords is None else np.asarray(coords, dtype=float))

    @classmethod
    def grid(cls, coords=None):
        return cls("grid", None, None if coords is None else np.asarray(coords, dtype=float))

    @property
    def eigen_bounds(self):
        """``(lambda_min, lambda_max)`` over all nodes (1, 1 when not anisotropic)."""
        if self.kind != "anisotropic":
            return 1.0, 1.0
        ev = np.linalg.eigvalsh(self.A)
        return float(ev.min()), float(ev.max())

    def to_dict(self):
        doc = {"kind": self.kind}
        if self.A is not None:
            doc["A"] = self.A.tolist()
        if self.coords is not None:
            doc["coords"] = self.coords.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        kind = doc.get("kind", "isotropic")
        return cls(kind, None if doc.get("A") is None else np.asarray(doc["A"], dtype=float),
                   None if doc.get("coords") is None else np.asarray(doc["coords"], dtype=float))


ISOTROPIC = DifferentialStructure.isotropic()


def example_structure(coords):
    """Structure that doubles the ``x``-derivative on the half-plane ``x < 0``.

    ``A(x) = diag(2, 1)`` where the first coordinate is negative and the
    identity elsewhere, so ``grad_A u = (2 u_x, u_y)`` on the left half.
    """
    X = np.asarray(coords, dtype=float)
    d = X.shape[1]
    A = np.tile(np.eye(d), (X.shape[0], 1, 1))
    A[X[:, 0] < 0, 0, 0] = 2.0
    return DifferentialStructure.anisotropic(A, X)


@dataclass(frozen=True, eq=False)
class EnergyOperator:
    """Gradient samples ``t = B u`` with site masses ``c``.

    ``B`` has ``m * d`` rows ordered site-major; ``scale`` is a per-site
    length used to express regularization in gradient units.
    """

    B: sparse.csr_matrix
    c: np.ndarray
    d: int
    scale: np.ndarray

    @property
    def sites(self):
        return self.c.shape[0]

    def samples(self, u):
        t = self.B @ u
        return t if self.d == 1 else t.reshape(-1, self.d)


def _incidence(domain):
    m, N = domain.edge_count, domain.node_count
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([domain.edge_j, domain.edge_i]).ravel()
    vals = np.tile([1.0, -1.0], m)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, N))


def _node_coords(domain, structure):
    X = structure.coords if structure.coords is not None else domain.coords
    if X is None:
        raise MissingCoords(f"{structure.kind} structure needs node coordinates")
    X = np.asarray(X, dtype=float)
    if X.shape[0] != domain.node_count:
        raise MissingCoords("coordinates must be given for every node")
    return X


def axis_gradient(domain, coords):
    """Sparse operator returning per-node axis difference quotients.

    Row ``i * d + k`` holds the derivative along axis ``k`` at node ``i``:
    a central quotient between the nearest neighbours on both sides of the
    axis line through ``i``, and one-sided where only one exists.
    """
    X = np.asarray(coords, dtype=float)
    N, d = X.shape
    i = np.concatenate([domain.edge_i, domain.edge_j])
    j = np.concatenate([domain.edge_j, domain.edge_i])
    diff = X[j] - X[i]
    tol = 1e-9 * max(1.0, np.abs(X).max())
    rows, cols, vals = [], [], []
    for k in range(d):
        others = np.delete(np.arange(d), k)
        aligned = np.all(np.abs(diff[:, others]) <= tol, axis=1) & (np.abs(diff[:, k]) > tol)
        fwd = np.full(N, -1)
        bwd = np.full(N, -1)
        fd = np.full(N, np.inf)
        bd = np.full(N, np.inf)
        for a, b, s in zip(i[aligned], j[aligned], diff[aligned, k]):
            if s > 0 and s < fd[a]:
                fwd[a], fd[a] = b, s
            elif s < 0 and -s < bd[a]:
                bwd[a], bd[a] = b, -s
        for node in range(N):
            r = node * d + k
            f, b = fwd[node], bwd[node]
            if f >= 0 and b >= 0:
                h = fd[node] + bd[node]
                rows += [r, r]
                cols += [f, b]
                vals += [1.0 / h, -1.0 / h]
            elif f >= 0:
                rows += [r, r]
                cols += [f, node]
                vals += [1.0 / fd[node], -1.0 / fd[node]]
            elif b >= 0:
                rows += [r, r]
                cols += [node, b]
                vals += [1.0 / bd[node], -1.0 / bd[node]]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(N * d, N))


def energy_operator(domain, structure=None):
    """Return the (cached) :class:`EnergyOperator` of ``structure`` on ``domain``."""
    structure = structure or ISOTROPIC
    key = ("energy_operator", id(structure), structure.kind)
    cache = domain._cache
    hit = cache.get(key)
    if hit is not None and hit[0] is structure:
        return hit[1]
    if structure.kind == "isotropic":
        op = EnergyOperator(_incidence(domain), np.asarray(domain.edge_w, dtype=float), 1,
                            np.asarray(domain.edge_len, dtype=float))
    else:
        X = _node_coords(domain, structure)
        d = X.shape[1]
        G = axis_gradient(domain, X)
        sites = np.flatnonzero(domain.mu > 0)
        if structure.kind == "anisotropic":
            A = structure.A
            if A.shape[0] != domain.node_count or A.shape[1] != d:
                raise ValidationError("A must hold one d x d matrix per node")
            blocks = sparse.block_diag([A[s] for s in sites], format="csr")
        else:
            blocks = sparse.identity(sites.size * d, format="csr")
        rows = (sites[:, None] * d + np.arange(d)[None, :]).ravel()
        B = (blocks @ G[rows]).tocsr()
        op = EnergyOperator(B, np.asarray(domain.mu[sites], dtype=float), d, np.ones(sites.size))
    cache[key] = (structure, op)
    return op


def _norms(t, d):
    return np.abs(t) if d == 1 else np.sqrt((t * t).sum(axis=1))


def flux(t, p, d=1):
    """``|t|**(p-2) t`` with the value 0 at ``t = 0`` (also for ``p < 2``)."""
    if d == 1:
        return np.sign(t) * np.abs(t) ** (p - 1.0)
    r = _norms(t, d)
    fac = np.zeros_like(r)
    nz = r > 0
    fac[nz] = r[nz] ** (p - 2.0)
    return t * fac[:, None]


def p_energy(domain, structure, u, p):
    """``sum_s c_s |(B u)_s|**p``; for the isotropic structure ``sum_e w_e |u_i - u_j|**p``."""
    op = energy_operator(domain, structure)
    t = op.samples(np.asarray(u, dtype=float))
    return float(np.dot(op.c, _norms(t, op.d) ** p))


def p_energy_grad(domain, structure, u, p):
    """Gradient of :func:`p_energy` with respect to the node values."""
    op = energy_operator(domain, structure)
    t = op.samples(np.asarray(u, dtype=float))
    g = op.c[:, None] * flux(t, p, op.d) if op.d > 1 else op.c * flux(t, p)
    return p * (op.B.T @ g.ravel())


def el_form(domain, structure, u, v, p):
    """Euler-Lagrange pairing ``sum_s c_s <|B u|**(p-2) B u, B v>``.

    Linear in ``v``; ``el_form(u, u) == p_energy(u)`` and
    ``el_form(u, const) == 0``.
    """
    op = energy_operator(domain, structure)
    t = op.samples(np.asarray(u, dtype=float))
    s = op.samples(np.asarray(v, dtype=float))
    if op.d == 1:
        return float(np.dot(op.c, flux(t, p) * s))
    return float(np.dot(op.c, (flux(t, p, op.d) * s).sum(axis=1)))


def el_residual_vector(domain, structure, u, p):
    """``el_form(u, e_i)`` for every node ``i``, as one vector."""
    return p_energy_grad(domain, structure, u, p) / p


@dataclass
class GradientField:
    """Gradient data of a node function.

    Attributes
    ----------
    edge_quotients : ndarray or None
        ``(u_j - u_i) / len`` per edge (isotropic).
    node_vectors : ndarray or None
        ``A(x) grad u`` per node, shape ``(N, d)`` (coordinate structures).
    magnitude : ndarray
        ``|grad u|`` per node.
    """

    edge_quotients: np.ndarray
    node_vectors: np.ndarray
    magnitude: np.ndarray


def gradient(domain, structure, u, p=None):
    """Gradient field of ``u``.

    For the isotropic structure the node magnitude satisfies
    ``|grad u(i)|**p = (1 / mu_i) * sum_j s_ij w_ij |u_i - u_j|**p``.  The
    share ``s_ij`` is 1/2 when both endpoints carry mass and 1 when only
    ``i`` does, so ``sum_i mu_i |grad u(i)|**p`` equals the edge energy.
    Nodes without mass (the boundary) report the mass-weighted mean of
    their incident ``|quotient|**p``.

    Parameters
    ----------
    p : float, optional
        Exponent of the aggregation; defaults to ``domain.params.p``.
    """
    structure = structure or ISOTROPIC
    u = np.asarray(u, dtype=float)
    p = domain.params.p if p is None else p
    if structure.kind == "isotropic":
        i, j = domain.edge_i, domain.edge_j
        q = (u[j] - u[i]) / domain.edge_len
        e = domain.edge_w * np.abs(u[j] - u[i]) ** p
        mu = domain.mu
        N = domain.node_count
        pos_i, pos_j = mu[i] > 0, mu[j] > 0
        share_i = np.where(pos_i & pos_j, 0.5, np.where(pos_i, 1.0, 0.0))
        share_j = np.where(pos_i & pos_j, 0.5, np.where(pos_j, 1.0, 0.0))
        acc = np.bincount(i, share_i * e, N) + np.bincount(j, share_j * e, N)
        mag_p = np.zeros(N)
        pos = mu > 0
        mag_p[pos] = acc[pos] / mu[pos]
        # massless nodes: mass-weighted mean of incident |q|^p
        m = domain.edge_mass
        num = np.bincount(i, m * np.abs(q) ** p, N) + np.bincount(j, m * np.abs(q) ** p, N)
        den = np.bincount(i, m, N) + np.bincount(j, m, N)
        zero = ~pos & (den > 0)
        mag_p[zero] = num[zero] / den[zero]
        return GradientField(q, None, mag_p ** (1.0 / p))
    X = _node_coords(domain, structure)
    d = X.shape[1]
    G = axis_gradient(domain, X)
    vec = (G @ u).reshape(-1, d)
    if structure.kind == "anisotropic":
        vec = np.einsum("nij,nj->ni", structure.A, vec)
    return GradientField(None, vec, np.sqrt((vec * vec).sum(axis=1)))


def monotonicity_gap(z, w, p):
    """``(|z|**(p-2) z - |w|**(p-2) w) . (z - w)`` along the last axis.

    Scalars and 1-d vectors give a float; stacked vectors of shape
    ``(..., d)`` give an array of shape ``(...)``.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.ndim == 0:
        return float((flux(z[None], p) - flux(w[None], p))[0] * (z - w))
    zs = z.reshape(-1, z.shape[-1])
    ws = w.reshape(-1, w.shape[-1])
    d = zs.shape[1]
    fz = flux(zs, p, d) if d > 1 else flux(zs[:, 0], p)[:, None]
    fw = flux(ws, p, d) if d > 1 else flux(ws[:, 0], p)[:, None]
    gap = ((fz - fw) * (zs - ws)).sum(axis=1)
    if z.ndim == 1:
        return float(gap[0])
    return gap.reshape(z.shape[:-1])
