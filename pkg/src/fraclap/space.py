"""Finite metric measure spaces and their geometry diagnostics.

A :class:`MetricMeasureSpace` is the discrete stand-in for the boundary ``Z``:
a dense distance matrix together with positive point masses ``nu``.  Balls are
open throughout, ``B(x, r) = {y : d(x, y) < r}``.

The module also provides

* constructors for cycles, chains, grids and coordinate clouds,
* estimators of the doubling constant and the lower mass exponent,
* the codimension comparison between ``nu`` and an extension measure ``mu``,
* metrics induced by a symmetric jump kernel.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree, shortest_path

from .errors import (
    AsymmetricKernel,
    EmptyInterior,
    InsufficientScales,
    InvalidTheta,
    NonpositiveKernel,
    NonpositiveMeasure,
    NonSymmetric,
    TriangleViolation,
    ValidationError,
)

TRIANGLE_RTOL = 1e-9
_TIE_RTOL = 1e-9

METRICS = ("euclidean", "l1", "graph-geodesic")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """Finite metric space with a positive measure.

    Instances should be created through :func:`validate_space` or one of the
    constructors, which check the metric axioms.

    Attributes
    ----------
    dist : ndarray, shape (n, n)
        Symmetric distance matrix with zero diagonal.
    nu : ndarray, shape (n,)
        Positive point masses.
    coords : ndarray, shape (n, d), optional
        Coordinates, when the space came from a grid or point cloud.
    labels : tuple, optional
        Per-point identifiers used in serialized output.
    meta : dict
        Free-form provenance, e.g. the comparability constant of a kernel
        metric.
    """

    dist: np.ndarray
    nu: np.ndarray
    coords: np.ndarray = None
    labels: tuple = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.nu.shape[0]

    @property
    def diameter(self):
        return float(self.dist.max()) if self.n > 1 else 0.0

    @property
    def min_positive_distance(self):
        if self.n < 2:
            return 0.0
        off = self.dist[~np.eye(self.n, dtype=bool)]
        return float(off.min())

    @property
    def total_measure(self):
        return float(self.nu.sum())

    def ball_measure(self, center, r, closed=False):
        """Return ``nu(B(center, r))`` (open unless ``closed``)."""
        d = self.dist[center]
        mask = d <= r if closed else d < r
        return float(self.nu[mask].sum())

    def ball_measures(self, radii):
        """Open-ball measures for every centre and radius.

        Returns an array of shape ``(n, len(radii))``.
        """
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        out = np.empty((self.n, radii.size))
        for s, r in enumerate(radii):
            out[:, s] = (self.dist < r) @ self.nu
        return out


def validate_space(dist, nu, coords=None, labels=None, check_triangle=True, meta=None):
    """Validate metric measure data and freeze it into a space.

    Parameters
    ----------
    dist : array_like, shape (n, n)
        Candidate distance matrix.
    nu : array_like, shape (n,)
        Candidate point masses.
    coords : array_like, optional
        Coordinates of the points, one row per point.
    labels : sequence, optional
        Identifiers of the points.
    check_triangle : bool
        Run the O(n^3) triangle inequality check (relative tolerance
        ``1e-9 * diameter``).  Constructors that produce metrics by design
        skip it.

    Returns
    -------
    MetricMeasureSpace

    Raises
    ------
    NonSymmetric, NonpositiveMeasure, TriangleViolation, ValidationError
    """
    D = np.asarray(dist, dtype=float)
    w = np.asarray(nu, dtype=float).ravel()
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError(f"distance matrix must be square, got shape {D.shape}")
    n = D.shape[0]
    if w.shape[0] != n:
        raise ValidationError(f"nu has length {w.shape[0]} but there are {n} points")
    if not np.all(np.isfinite(D)):
        raise ValidationError("distance matrix contains non-finite entries")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        bad = int(np.flatnonzero(~(w > 0))[0]) if np.any(~(w > 0)) else -1
        raise NonpositiveMeasure(f"nu must be positive everywhere (point {bad})")
    if np.any(np.diag(D) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    scale = max(float(np.abs(D).max()), 1.0) if n else 1.0
    asym = np.abs(D - D.T)
    if asym.max(initial=0.0) > 1e-12 * scale:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise NonSymmetric(f"d({i},{j}) = {D[i, j]!r} differs from d({j},{i}) = {D[j, i]!r}")
    offdiag = ~np.eye(n, dtype=bool)
    if np.any(D[offdiag] <= 0):
        i, j = np.argwhere((D <= 0) & offdiag)[0]
        raise ValidationError(f"distinct points {i} and {j} are at distance {D[i, j]}")
    D = 0.5 * (D + D.T)
    if check_triangle and n >= 3:
        _check_triangle(D, TRIANGLE_RTOL * float(D.max()))
    if coords is not None:
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.shape[0] != n:
            raise ValidationError("coords must have one row per point")
        coords = _frozen(coords)
    if labels is not None:
        labels = tuple(labels)
        if len(labels) != n:
            raise ValidationError("labels must have one entry per point")
    return MetricMeasureSpace(_frozen(D), _frozen(w), coords, labels, dict(meta or {}))


def _check_triangle(D, tol):
    """Raise on the worst violation of d(i,k) <= d(i,j) + d(j,k) + tol."""
    n = D.shape[0]
    best = np.full_like(D, np.inf)
    arg = np.zeros(D.shape, dtype=np.intp)
    for j in range(n):
        via = D[:, j][:, None] + D[j][None, :]
        better = via < best
        best[better] = via[better]
        arg[better] = j
    excess = D - best
    if excess.max() > tol:
        i, k = np.unravel_index(np.argmax(excess), excess.shape)
        raise TriangleViolation((i, arg[i, k], k), excess[i, k])


# -- constructors -------------------------------------------------------------

def cycle_space(n, length=None, nu=None):
    """Cycle graph with geodesic (arc-length) distances.

    Parameters
    ----------
    n : int
        Number of points, equally spaced.
    length : float, optional
        Circumference; defaults to ``n`` (unit spacing).
    nu : float or array_like, optional
        Point masses.  Defaults to the spacing, so the total measure equals
        the circumference.
    """
    length = float(n if length is None else length)
    h = length / n
    idx = np.arange(n)
    steps = np.abs(idx[:, None] - idx[None, :])
    D = h * np.minimum(steps, n - steps)
    w = np.full(n, h) if nu is None else np.broadcast_to(np.asarray(nu, float), (n,))
    coords = (h * idx)[:, None]
    return validate_space(D, w, coords=coords, check_triangle=False,
                          meta={"kind": "cycle", "length": length})


def chain_space(n, spacing=1.0, nu=None):
    """Path graph ``0, h, 2h, ...`` with the Euclidean metric."""
    x = spacing * np.arange(n, dtype=float)
    w = np.full(n, float(spacing)) if nu is None else np.broadcast_to(np.asarray(nu, float), (n,))
    return validate_space(np.abs(x[:, None] - x[None, :]), w, coords=x[:, None],
                          check_triangle=False, meta={"kind": "chain"})


def grid_space(nx, ny=None, spacing=1.0, metric="l1", nu=None):
    """Rectangular lattice with the l1 (graph) or Euclidean metric."""
    ny = nx if ny is None else ny
    gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    coords = spacing * np.column_stack([gx.ravel(), gy.ravel()]).astype(float)
    if metric in ("l1", "graph-geodesic"):
        D = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=-1)
    elif metric == "euclidean":
        D = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=-1))
    else:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    n = coords.shape[0]
    w = np.full(n, spacing ** 2) if nu is None else np.broadcast_to(np.asarray(nu, float), (n,))
    return validate_space(D, w, coords=coords, check_triangle=False,
                          meta={"kind": "grid", "metric": metric})


def space_from_coords(coords, nu=None, metric="euclidean", check_triangle=True):
    """Build a space from point coordinates and a named metric.

    ``"graph-geodesic"`` joins every point to its nearest neighbours (ties
    included, plus a spanning tree for connectivity) and uses shortest-path
    distances along Euclidean edge lengths.
    """
    X = np.asarray(coords, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    diff = X[:, None, :] - X[None, :, :]
    if metric == "euclidean":
        D = np.sqrt((diff ** 2).sum(axis=-1))
    elif metric == "l1":
        D = np.abs(diff).sum(axis=-1)
    elif metric == "graph-geodesic":
        E = np.sqrt((diff ** 2).sum(axis=-1))
        i, j = _neighbor_pairs(E)
        G = csr_matrix((E[i, j], (i, j)), shape=E.shape)
        D = shortest_path(G, method="D", directed=False)
        D = 0.5 * (D + D.T)
        check_triangle = False
    else:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    n = X.shape[0]
    w = np.ones(n) if nu is None else nu
    return validate_space(D, w, coords=X, check_triangle=check_triangle,
                          meta={"metric": metric})


def _neighbor_pairs(D):
    """Symmetric nearest-neighbour graph (with ties) united with an MST."""
    n = D.shape[0]
    off = D + np.diag(np.full(n, np.inf))
    nn = off.min(axis=1)
    thresh = (1.0 + _TIE_RTOL) * np.maximum(nn[:, None], nn[None, :])
    A = (off <= thresh)
    T = minimum_spanning_tree(csr_matrix(np.where(np.isfinite(off), off, 0.0))).toarray()
    A |= (T > 0) | (T.T > 0)
    A = np.triu(A | A.T, k=1)
    i, j = np.nonzero(A)
    return i, j


def default_base_point(space):
    """Point whose open unit ball has the largest measure (first on ties)."""
    return int(np.argmax(space.ball_measures([1.0])[:, 0]))


def neighbor_pairs(space):
    """Intrinsic neighbour graph of ``space`` as index arrays ``(i, j)``, ``i < j``.

    Each point is joined to its nearest neighbours (exact ties included);
    a minimum spanning tree is added so the graph is always connected.  On
    lattices and cycles this recovers the lattice edges.
    """
    return _neighbor_pairs(np.asarray(space.dist))


def space_from_dict(doc):
    """Parse the JSON space document ``{points, dist, coords, nu, metric}``."""
    if not isinstance(doc, dict):
        raise ValidationError("space document must be a JSON object")
    if "generator" in doc:
        return _generate_space(doc)
    nu = doc.get("nu")
    dist = doc.get("dist")
    coords = doc.get("coords")
    labels = doc.get("points")
    if dist is not None:
        if nu is None:
            nu = np.ones(len(dist))
        return validate_space(dist, nu, coords=coords, labels=labels)
    if coords is None:
        raise ValidationError("space document needs either 'dist' or 'coords'")
    metric = doc.get("metric", "euclidean")
    sp = space_from_coords(coords, nu=nu, metric=metric)
    if labels is not None:
        sp = validate_space(sp.dist, sp.nu, coords=sp.coords, labels=labels,
                            check_triangle=False, meta=sp.meta)
    return sp


def _generate_space(doc):
    kind = doc["generator"]
    if kind == "cycle":
        return cycle_space(int(doc["n"]), length=doc.get("length"), nu=doc.get("nu"))
    if kind == "chain":
        return chain_space(int(doc["n"]), spacing=float(doc.get("spacing", 1.0)), nu=doc.get("nu"))
    if kind == "grid":
        return grid_space(int(doc["nx"]), doc.get("ny"), spacing=float(doc.get("spacing", 1.0)),
                          metric=doc.get("metric", "l1"), nu=doc.get("nu"))
    raise ValidationError(f"unknown space generator {kind!r}")


def space_to_dict(space):
    """Inverse of :func:`space_from_dict` (always writes the distance matrix)."""
    labels = list(space.labels) if space.labels is not None else list(range(space.n))
    return {
        "points": labels,
        "dist": space.dist.tolist(),
        "coords": None if space.coords is None else space.coords.tolist(),
        "nu": space.nu.tolist(),
    }


def load_space(path):
    """Read a space JSON document from ``path``."""
    with open(Path(path)) as fh:
        return space_from_dict(json.load(fh))


# -- diagnostics ----------------------------------------------------------------

@dataclass
class DoublingProfile:
    """Doubling constant and lower mass exponent of a measure.

    Attributes
    ----------
    C_d : float
        Largest observed ratio ``nu(B(x, 2r)) / nu(B(x, r))``.
    Q_mu : float
        Least-squares exponent of the worst nested-ball ratios.
    scales : list of float
        Dyadic radii used.
    fit_residual : float
        Root-mean-square residual of the log-log fit.
    """

    C_d: float
    Q_mu: float
    scales: list
    fit_residual: float

    def to_dict(self):
        return {"C_d": self.C_d, "Q_mu": self.Q_mu, "scales": list(self.scales),
                "fit_residual": self.fit_residual}


def dyadic_radii(space, scale_count=None):
    """Radii ``diam * 2**-m`` strictly above the smallest positive distance."""
    diam = space.diameter
    rmin = space.min_positive_distance
    radii = []
    r = diam
    while diam > 0 and r > rmin * (1 + _TIE_RTOL):
        radii.append(r)
        r *= 0.5
        if scale_count is not None and len(radii) >= scale_count:
            break
    return radii


def estimate_mass_exponents(space, scale_count=None):
    """Estimate the doubling constant and the lower mass exponent.

    For every pair of dyadic radii ``r < R`` the worst case of
    ``nu(B(y, r)) / nu(B(x, R))`` over ``x`` and ``y in B(x, R)`` is
    recorded; ``Q_mu`` is the slope of the least-squares line through
    ``log(worst)`` against ``log(r / R)``.  The radius ``diam`` itself is
    left out of the fit: every ball of that radius is the whole space, so
    it only flattens the slope.

    Parameters
    ----------
    space : MetricMeasureSpace
    scale_count : int, optional
        Use at most this many (largest) dyadic radii.

    Returns
    -------
    DoublingProfile

    Raises
    ------
    InsufficientScales
        When fewer than three usable radii exist.
    """
    radii = [r for r in dyadic_radii(space, scale_count) if r < space.diameter]
    if len(radii) < 3:
        raise InsufficientScales(
            f"need at least 3 dyadic scales between the smallest distance and the "
            f"diameter, found {len(radii)}"
        )
    radii = np.array(radii[::-1])  # increasing
    mb = space.ball_measures(radii)
    mb2 = space.ball_measures(2 * radii)
    C_d = float(max(1.0, np.max(mb2 / mb)))
    D = space.dist
    xs, ys = [], []
    for t, R in enumerate(radii):
        inside = D < R
        for s in range(t):
            worst_y = np.where(inside, mb[None, :, s], np.inf).min(axis=1)
            worst = float(np.min(worst_y / mb[:, t]))
            xs.append(np.log(radii[s] / R))
            ys.append(np.log(worst))
    xs, ys = np.array(xs), np.array(ys)
    A = np.column_stack([xs, np.ones_like(xs)])
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    return DoublingProfile(C_d=C_d, Q_mu=float(coef[0]), scales=radii.tolist(),
                           fit_residual=float(np.sqrt(np.mean(resid ** 2))))


@dataclass
class CodimReport:
    """Extremes of ``nu(B(xi, r)) * r**Theta / mu(B(xi, r) ∩ Omega)``."""

    Theta: float
    ratio_min: float
    ratio_max: float
    C: float
    radii: list
    samples: int

    def to_dict(self):
        return dict(self.__dict__)


def check_codimension(Z, domain, Theta, p, radii=None, centers=None):
    """Compare boundary and interior ball measures at codimension ``Theta``.

    Parameters
    ----------
    Z : MetricMeasureSpace
        The boundary; its points are the domain's layer-0 columns.
    domain : ExtensionDomain
    Theta : float
        Target codimension, must lie in ``(0, p)``.
    p : float
    radii : sequence of float, optional
        Radii to test.  Defaults to dyadic multiples of the smallest
        distance up to ``min(2 * diam, top layer height)``.
    centers : sequence of int, optional
        Boundary points used as centres (default: all).

    Returns
    -------
    CodimReport
    """
    if not (0.0 < Theta < p):
        raise InvalidTheta(f"codimension Theta={Theta} must lie in (0, p={p})")
    interior = np.flatnonzero(domain.mu > 0)
    if interior.size == 0:
        raise EmptyInterior("domain has no interior nodes")
    if radii is None:
        top = float(domain.y_of.max())
        rmax = min(2 * Z.diameter, top)
        radii = []
        r = Z.min_positive_distance
        while r <= rmax * (1 + _TIE_RTOL):
            radii.append(r)
            r *= 2
    radii = np.asarray(radii, dtype=float)
    centers = np.arange(Z.n) if centers is None else np.asarray(centers)
    col = domain.col_of[interior]
    y = domain.y_of[interior]
    mu = domain.mu[interior]
    dz = Z.dist[np.ix_(centers, col)]
    dprod = np.sqrt(dz ** 2 + y[None, :] ** 2)
    ratios = []
    for r in radii:
        mu_ball = np.where(dprod < r, mu[None, :], 0.0).sum(axis=1)
        nu_ball = np.where(Z.dist[centers] < r, Z.nu[None, :], 0.0).sum(axis=1)
        ok = mu_ball > 0
        ratios.append(nu_ball[ok] * r ** Theta / mu_ball[ok])
    ratios = np.concatenate(ratios)
    if ratios.size == 0:
        raise EmptyInterior("no tested ball meets the interior")
    lo, hi = float(ratios.min()), float(ratios.max())
    return CodimReport(Theta=float(Theta), ratio_min=lo, ratio_max=hi, C=max(hi, 1.0 / lo),
                       radii=radii.tolist(), samples=int(ratios.size))


# -- kernel metrics ----------------------------------------------------------------

def kernel_metric(coords, K, n_dim, p, theta, nu=None, knn=None):
    """Length metric induced by a symmetric jump kernel.

    Each pair is joined by an edge of length ``K(x, y) ** (-1 / (n + p*theta))``
    and distances are shortest paths in that graph.  The realized
    comparability constant ``lambda`` with
    ``K / lambda <= d**-(n + p*theta) <= lambda * K`` is stored in
    ``space.meta["lambda"]``.

    Parameters
    ----------
    coords : array_like, shape (n,) or (n, d)
    K : array_like, shape (n, n)
        Kernel values; the diagonal is ignored.
    n_dim : int
        Dimension ``n`` in the exponent.
    p, theta : float
    nu : array_like, optional
        Point masses (default ones).
    knn : int, optional
        Keep only the ``knn`` shortest edges per point (symmetrized) before
        computing shortest paths.

    Returns
    -------
    MetricMeasureSpace
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    off = ~np.eye(n, dtype=bool)
    scale = np.abs(K[off]).max(initial=1.0)
    if np.any(np.abs(K - K.T)[off] > 1e-12 * scale):
        i, j = np.argwhere((np.abs(K - K.T) > 1e-12 * scale) & off)[0]
        raise AsymmetricKernel(f"K({i},{j}) = {K[i, j]!r} but K({j},{i}) = {K[j, i]!r}")
    if np.any(~(K[off] > 0)):
        raise NonpositiveKernel("kernel must be positive off the diagonal")
    s = n_dim + p * theta
    E = np.zeros_like(K)
    E[off] = K[off] ** (-1.0 / s)
    if knn is not None:
        order = np.argsort(np.where(off, E, np.inf), axis=1, kind="stable")[:, :knn]
        keep = np.zeros_like(off)
        np.put_along_axis(keep, order, True, axis=1)
        keep |= keep.T
        E = np.where(keep, E, 0.0)
    D = shortest_path(csr_matrix(E), method="D", directed=False)
    if not np.all(np.isfinite(D)):
        raise ValidationError("kernel graph is disconnected after sparsification")
    D = 0.5 * (D + D.T)
    ratio = D[off] ** (-s) / K[off]
    lam = float(max(ratio.max(), 1.0 / ratio.min()))
    w = np.ones(n) if nu is None else nu
    return validate_space(D, w, coords=coords, check_triangle=False,
                          meta={"kind": "kernel", "lambda": lam, "exponent": s})


def is_connected(n, i, j):
    """True when the undirected graph with edges ``(i, j)`` is connected."""
    if n == 0:
        return True
    G = csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    return connected_components(G, directed=False)[0] == 1
