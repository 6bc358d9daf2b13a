"""Discrete extension domains over a boundary space.

The main builder is :func:`build_product_extension`.  It realizes
``Z x [0, Y_max]`` with the weight ``|y|**a`` as a layered graph.  Layer 0 is
a copy of ``Z`` and forms the boundary, and layers ``1..M`` sit at
geometrically graded heights.  :func:`dampen` applies the conformal change
``phi(t) = min(1, t**-beta)`` and :func:`truncate` frees boundary nodes
outside a dyadic ball.

Energies use the edge convention ``E(u) = sum_e w_e |u_i - u_j|**p`` with
conductance ``w_e = m_e / len_e**p``, where ``m_e`` is the edge's share of
the weighted measure.  Horizontal edges take ``m_e`` as the harmonic mean of
the endpoint node weights.  Vertical edges take it as the weighted measure
of the strip the edge spans, because the endpoint harmonic mean vanishes on
the boundary layer.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import (
    BetaTooSmall,
    DegenerateGrading,
    InvalidParams,
    InvalidTheta,
    ValidationError,
    WeightOutOfRange,
)
from .space import (
    MetricMeasureSpace,
    default_base_point,
    neighbor_pairs,
    space_from_dict,
    space_to_dict,
)

_TIE = 1e-9
WEIGHT_RULES = ("paper", "codim")


@dataclass(frozen=True)
class FractionalParams:
    """Exponent bookkeeping.

    Parameters
    ----------
    p : float
        Integrability exponent, ``p > 1``.
    theta : float
        Smoothness, ``0 < theta < 1``.
    beta : float, optional
        Dampening exponent.
    weight_rule : {"paper", "codim"}
        How the product weight exponent is derived.  ``"paper"`` uses
        ``a = 1 - p*theta``.  ``"codim"`` uses ``a = p*(1 - theta) - 1``,
        which makes the weighted product have codimension exactly
        ``Theta``.  The two agree at ``p = 2``.
    """

    p: float
    theta: float
    beta: float = None
    weight_rule: str = "paper"

    def __post_init__(self):
        p, theta = self.p, self.theta
        if not (isinstance(p, (int, float)) and math.isfinite(p) and p > 1):
            raise InvalidParams(f"p must be a finite real > 1, got {p!r}")
        if not (isinstance(theta, (int, float)) and 0 < theta < 1):
            raise InvalidTheta(f"theta must lie in (0, 1), got {theta!r}")
        if self.beta is not None and not self.beta > 0:
            raise InvalidParams(f"beta must be positive, got {self.beta!r}")
        if self.weight_rule not in WEIGHT_RULES:
            raise InvalidParams(f"weight_rule must be one of {WEIGHT_RULES}")

    @property
    def Theta(self):
        return self.p * (1.0 - self.theta)

    @property
    def a(self):
        if self.weight_rule == "codim":
            return self.p * (1.0 - self.theta) - 1.0
        return 1.0 - self.p * self.theta

    @property
    def p_conj(self):
        return self.p / (self.p - 1.0)

    def to_dict(self):
        return {"p": self.p, "theta": self.theta, "beta": self.beta,
                "weight_rule": self.weight_rule}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(float(doc["p"]), float(doc["theta"]),
                       None if doc.get("beta") is None else float(doc["beta"]),
                       doc.get("weight_rule", "paper"))
        except KeyError as exc:
            raise InvalidParams(f"params need key {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class ExtensionDomain:
    """Weighted graph standing in for the domain ``Omega``.

    Node ids are layer-major for product extensions, so the boundary copy
    of ``Z`` occupies ids ``0..n-1``.

    Attributes
    ----------
    mu : ndarray
        Node measure; zero on boundary nodes.
    layer_of, y_of : ndarray
        Layer index and height of each node.
    col_of : ndarray
        Index of the boundary point below each node (``-1`` when undefined).
    edge_i, edge_j, edge_len, edge_w, edge_mass : ndarray
        Edge list with lengths, conductances ``w`` and measure shares
        ``mass = w * len**p``.
    boundary_ids : ndarray
        Active boundary nodes (Dirichlet constraints / Neumann pairings).
    free_ids : ndarray
        Former boundary nodes released by :func:`truncate`.
    base_point : int
        Boundary node ``x0``.
    b0_radius : float
        Radius of the reference ball ``B_0`` around ``x0``.
    space : MetricMeasureSpace
        The boundary space ``Z``.
    params : FractionalParams
    heights : ndarray or None
        ``0, y_1, ..., y_M`` for product extensions.
    y_top : float
        Upper end of the top height cell.
    coords : ndarray or None
        Node coordinates (needed by anisotropic structures).
    """

    mu: np.ndarray
    layer_of: np.ndarray
    y_of: np.ndarray
    col_of: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_len: np.ndarray
    edge_w: np.ndarray
    edge_mass: np.ndarray
    boundary_ids: np.ndarray
    free_ids: np.ndarray
    base_point: int
    b0_radius: float
    space: MetricMeasureSpace
    params: FractionalParams
    heights: np.ndarray = None
    y_top: float = 0.0
    coords: np.ndarray = None
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def node_count(self):
        return self.mu.shape[0]

    @property
    def edge_count(self):
        return self.edge_i.shape[0]

    @property
    def edges(self):
        return list(zip(self.edge_i.tolist(), self.edge_j.tolist(),
                        self.edge_len.tolist(), self.edge_w.tolist()))

    @property
    def is_product(self):
        return bool(self.meta.get("product", False))

    @property
    def boundary_nodes(self):
        """All boundary-layer nodes (active and free), ordered by point of ``Z``."""
        nodes = np.concatenate([self.boundary_ids, self.free_ids]).astype(np.intp)
        return nodes[np.argsort(self.col_of[nodes], kind="stable")]

    @property
    def interior_ids(self):
        bnd = np.zeros(self.node_count, dtype=bool)
        bnd[self.boundary_ids] = True
        bnd[self.free_ids] = True
        return np.flatnonzero(~bnd)

    def graph(self, lengths=True):
        vals = self.edge_len if lengths else np.ones(self.edge_count)
        n = self.node_count
        return csr_matrix((np.concatenate([vals, vals]),
                           (np.concatenate([self.edge_i, self.edge_j]),
                            np.concatenate([self.edge_j, self.edge_i]))), shape=(n, n))

    def distances_from(self, node):
        """Distances from ``node`` to every node.

        Product extensions use the product metric
        ``sqrt(d_Z**2 + (y - y')**2)``; other domains use shortest paths
        along edge lengths.
        """
        if self.is_product:
            dz = self.space.dist[self.col_of[node], self.col_of]
            return np.sqrt(dz ** 2 + (self.y_of - self.y_of[node]) ** 2)
        key = ("dist_from", int(node))
        if key not in self._cache:
            self._cache[key] = dijkstra(self.graph(), indices=int(node))
        return self._cache[key]

    def boundary_distance_from_base(self):
        """Distance in ``Z`` from ``x0`` to every boundary-layer node."""
        nodes = self.boundary_nodes
        d = self.space.dist[self.col_of[self.base_point], self.col_of[nodes]]
        return nodes, d

    def ball_b0(self):
        """Nodes of the closed reference ball ``B_0`` carrying positive mass."""
        d = self.distances_from(self.base_point)
        inside = (d <= self.b0_radius * (1 + _TIE)) & (self.mu > 0)
        return np.flatnonzero(inside)


# -- construction --------------------------------------------------------------------------

def _antiderivative(y, a):
    return np.power(y, a + 1.0) / (a + 1.0)


def layer_heights(M, y_min, rho, Y_max):
    """Heights ``y_1 < ... < y_M`` and the effective grading ratio.

    The ladder starts at ``y_min`` and grows geometrically.  When ``rho``
    would overshoot ``Y_max`` the ratio is reduced so that ``y_M = Y_max``.
    """
    fit = (Y_max / y_min) ** (1.0 / (M - 1)) if Y_max > y_min else 1.0
    ratio = fit if rho is None else min(rho, fit)
    if not ratio > 1.0:
        raise DegenerateGrading(
            f"grading ratio {ratio!r} must exceed 1 (y_min={y_min}, Y_max={Y_max}, M={M})")
    return y_min * ratio ** np.arange(M), ratio


def build_product_extension(Z, params, M=16, y_min=None, rho=None, Y_max=None,
                            connectivity="threshold", knn=4, base_point=None, b0_radius=None):
    """Layered product extension ``Z x {0, y_1, ..., y_M}`` with weight ``|y|**a``.

    Parameters
    ----------
    Z : MetricMeasureSpace
        Boundary space.
    params : FractionalParams
        Supplies ``p`` and the weight exponent ``a``.
    M : int
        Number of interior layers (``M >= 2``).
    y_min : float, optional
        Height of the first layer.  Defaults to the smallest positive
        distance of ``Z``.
    rho : float, optional
        Grading ratio (``> 1``).  Defaults to 1.5 unless ``Y_max`` is given,
        in which case the ladder is fitted to end at ``Y_max``.
    Y_max : float, optional
        Top of the truncated half-space.  The top cell extends to ``Y_max``
        and carries a natural (zero-flux) condition.  Defaults to
        ``y_min * rho**(M - 1)``.
    connectivity : {"threshold", "base", "knn"}
        Horizontal edges on layer ``m``.  ``"base"`` reuses the intrinsic
        neighbour graph of ``Z`` on every layer.  ``"threshold"`` joins points
        closer than ``max(y_m, r_base)``, where ``r_base`` is the longest
        neighbour edge.  ``"knn"`` joins the ``knn`` nearest points.
        Denser layers rescale edge masses by ``deg_base / deg`` so that
        affine data keep the same horizontal energy.
    base_point : int, optional
        ``x0``; defaults to the point whose unit ball has the largest measure.
    b0_radius : float, optional
        Radius of ``B_0``.  Defaults to the smallest radius ``>= 1`` whose
        closed ball holds ``max(4, n/16)`` boundary points.

    Returns
    -------
    ExtensionDomain

    Raises
    ------
    WeightOutOfRange
        If ``a`` is outside ``(-1, 1)``.
    DegenerateGrading
        If the grading ratio is not larger than 1.
    """
    a = params.a
    if not (-1.0 < a < 1.0):
        raise WeightOutOfRange(f"weight exponent a={a:g} must lie in (-1, 1)")
    if rho is not None and not rho > 1.0:
        raise DegenerateGrading(f"grading ratio rho={rho!r} must exceed 1")
    M = int(M)
    if M < 2:
        raise ValidationError(f"need at least 2 layers, got M={M}")
    if connectivity not in ("threshold", "base", "knn"):
        raise ValidationError(f"unknown connectivity {connectivity!r}")
    p = params.p
    n = Z.n
    if y_min is None:
        y_min = Z.min_positive_distance if n > 1 else 1.0
    y_min = float(y_min)
    if not y_min > 0:
        raise ValidationError("y_min must be positive")
    if Y_max is None:
        Y_max = y_min * (1.5 if rho is None else rho) ** (M - 1)
    Y_max = float(Y_max)
    if Y_max < y_min:
        raise ValidationError(f"Y_max={Y_max} is below y_min={y_min}")
    ys, ratio = layer_heights(M, y_min, rho, Y_max)
    heights = np.concatenate([[0.0], ys])

    # height cells: layer m covers [c_{m-1}, c_m]; the first starts at 0
    cuts = np.concatenate([[0.0], 0.5 * (ys[:-1] + ys[1:]), [Y_max]])
    cell = _antiderivative(cuts[1:], a) - _antiderivative(cuts[:-1], a)
    strip = _antiderivative(heights[1:], a) - _antiderivative(heights[:-1], a)

    nu = Z.nu
    N = n * (M + 1)
    layer_of = np.repeat(np.arange(M + 1), n)
    col_of = np.tile(np.arange(n), M + 1)
    y_of = heights[layer_of]
    mu = np.zeros(N)
    mu[n:] = (cell[:, None] * nu[None, :]).ravel()

    ei, ej, el, em = [], [], [], []
    cols = np.arange(n)
    for m in range(M):
        ei.append(m * n + cols)
        ej.append((m + 1) * n + cols)
        el.append(np.full(n, heights[m + 1] - heights[m]))
        em.append(nu * strip[m])

    bi, bj = neighbor_pairs(Z)
    deg_base = np.bincount(np.concatenate([bi, bj]), minlength=n).astype(float)
    r_base = float(Z.dist[bi, bj].max()) if bi.size else 0.0
    D = Z.dist
    for m in range(1, M + 1):
        if connectivity == "base":
            hi, hj = bi, bj
        elif connectivity == "threshold":
            radius = max(ys[m - 1], r_base)
            A = np.triu(D <= radius * (1 + _TIE), k=1)
            A[bi, bj] = True
            hi, hj = np.nonzero(A)
        else:
            order = np.argsort(D + np.diag(np.full(n, np.inf)), axis=1, kind="stable")
            A = np.zeros((n, n), dtype=bool)
            np.put_along_axis(A, order[:, :knn], True, axis=1)
            A |= A.T
            A[bi, bj] = True
            A = np.triu(A, k=1)
            hi, hj = np.nonzero(A)
        deg = np.bincount(np.concatenate([hi, hj]), minlength=n).astype(float)
        scale = deg_base / np.maximum(deg, 1.0)
        wi = mu[m * n + hi] * scale[hi]
        wj = mu[m * n + hj] * scale[hj]
        ei.append(m * n + hi)
        ej.append(m * n + hj)
        el.append(D[hi, hj])
        em.append(2.0 * wi * wj / (wi + wj))

    edge_i = np.concatenate(ei).astype(np.intp)
    edge_j = np.concatenate(ej).astype(np.intp)
    edge_len = np.concatenate(el)
    edge_mass = np.concatenate(em)
    edge_w = edge_mass / edge_len ** p

    if base_point is None:
        base_point = default_base_point(Z)
    base_point = int(base_point)
    if b0_radius is None:
        b0_radius = default_b0_radius(Z, base_point)

    domain = ExtensionDomain(
        mu=mu, layer_of=layer_of, y_of=y_of, col_of=col_of,
        edge_i=edge_i, edge_j=edge_j, edge_len=edge_len, edge_w=edge_w, edge_mass=edge_mass,
        boundary_ids=np.arange(n), free_ids=np.array([], dtype=np.intp),
        base_point=base_point, b0_radius=float(b0_radius), space=Z, params=params,
        heights=heights, y_top=Y_max, coords=None,
        meta={"product": True, "M": M, "y_min": y_min, "rho": float(ratio), "Y_max": Y_max,
              "connectivity": connectivity, "a": a},
    )
    _check_domain(domain)
    return domain


def default_b0_radius(Z, base_point):
    """Smallest radius ``>= 1`` whose closed ball holds ``max(4, n/16)`` points."""
    need = min(Z.n, max(4, int(math.ceil(Z.n / 16))))
    d = np.sort(Z.dist[base_point])
    return float(max(1.0, d[need - 1]))


def graph_domain(mu, edges, boundary, params=None, space=None, col_of=None, coords=None,
                 base_point=None, b0_radius=None, check_connected=True):
    """Domain from an explicit weighted graph.

    Parameters
    ----------
    mu : array_like
        Node measure.
    edges : sequence of (i, j, len, w)
    boundary : sequence of int
        Boundary node ids, listed in the order of the points of ``space``.
    params : FractionalParams, optional
        Defaults to ``p = 2, theta = 1/2``.
    space : MetricMeasureSpace, optional
        Boundary space.  Defaults to the chain metric induced by
        graph distances between boundary nodes, with unit masses.
    coords : array_like, optional
        Node coordinates for anisotropic structures.
    check_connected : bool
        Reject disconnected graphs.
    """
    params = params or FractionalParams(2.0, 0.5)
    mu = np.asarray(mu, dtype=float)
    N = mu.shape[0]
    E = np.asarray(edges, dtype=float).reshape(-1, 4)
    ei, ej = E[:, 0].astype(np.intp), E[:, 1].astype(np.intp)
    el, ew = E[:, 2], E[:, 3]
    boundary = np.asarray(boundary, dtype=np.intp)
    if np.any(mu < 0):
        raise ValidationError("node measure must be nonnegative")
    if np.any(~(el > 0)) or np.any(~(ew > 0)):
        raise ValidationError("edge lengths and conductances must be positive")
    if np.any((ei < 0) | (ei >= N) | (ej < 0) | (ej >= N)) or np.any(ei == ej):
        raise ValidationError("edge endpoints must be distinct valid node ids")
    G = csr_matrix((np.ones(ei.size), (ei, ej)), shape=(N, N))
    if check_connected and connected_components(G, directed=False)[0] != 1:
        raise ValidationError("domain graph must be connected")
    if col_of is None:
        col_of = np.full(N, -1, dtype=np.intp)
        col_of[boundary] = np.arange(boundary.size)
    col_of = np.asarray(col_of, dtype=np.intp)
    if space is None and boundary.size:
        from .space import validate_space
        Gl = csr_matrix((np.concatenate([el, el]), (np.concatenate([ei, ej]), np.concatenate([ej, ei]))),
                        shape=(N, N))
        Db = dijkstra(Gl, indices=boundary)[:, boundary]
        if not np.all(np.isfinite(Db)):
            Db = np.where(np.isfinite(Db), Db, np.nanmax(Db[np.isfinite(Db)]) + 1.0)
        space = validate_space(0.5 * (Db + Db.T), np.ones(boundary.size), check_triangle=False)
    if base_point is None:
        base_point = int(boundary[0]) if boundary.size else 0
    if b0_radius is None:
        b0_radius = default_b0_radius(space, int(col_of[base_point])) if boundary.size else 1.0
    return ExtensionDomain(
        mu=mu, layer_of=np.where(np.isin(np.arange(N), boundary), 0, 1), y_of=np.zeros(N),
        col_of=col_of, edge_i=ei, edge_j=ej, edge_len=el, edge_w=ew, edge_mass=ew * el ** params.p,
        boundary_ids=boundary, free_ids=np.array([], dtype=np.intp), base_point=int(base_point),
        b0_radius=float(b0_radius), space=space, params=params,
        coords=None if coords is None else np.asarray(coords, dtype=float),
        meta={"product": False},
    )


def lattice_domain(Z, params, boundary=None):
    """Domain whose nodes are the points of a gridded space.

    Every point carries its ``nu`` mass as ``mu`` and neighbours are joined
    by edges with conductance ``mass / len**p``.  Boundary points carry no
    mass, and their edges keep half the harmonic-mean mass, so an affine
    function has the same gradient magnitude at every node.  The main use is with the
    coordinate-based (anisotropic) structures.

    Parameters
    ----------
    Z : MetricMeasureSpace
        Must have ``coords``.
    params : FractionalParams
    boundary : sequence of int, optional
        Defaults to the points on the bounding box of the coordinates.
    """
    if Z.coords is None:
        raise ValidationError("lattice_domain needs a space with coordinates")
    X = Z.coords
    if boundary is None:
        on_edge = np.zeros(Z.n, dtype=bool)
        for k in range(X.shape[1]):
            on_edge |= np.isclose(X[:, k], X[:, k].min()) | np.isclose(X[:, k], X[:, k].max())
        boundary = np.flatnonzero(on_edge)
    boundary = np.asarray(boundary, dtype=np.intp)
    i, j = neighbor_pairs(Z)
    mass = 2 * Z.nu[i] * Z.nu[j] / (Z.nu[i] + Z.nu[j])
    # only the interior half of a cell next to the boundary lies inside the domain
    on_bnd = np.zeros(Z.n, dtype=bool)
    on_bnd[boundary] = True
    mass = np.where(on_bnd[i] | on_bnd[j], 0.5 * mass, mass)
    ln = Z.dist[i, j]
    edges = np.column_stack([i, j, ln, mass / ln ** params.p])
    sub = Z.dist[np.ix_(boundary, boundary)]
    from .space import validate_space
    bspace = validate_space(sub, Z.nu[boundary], coords=X[boundary], check_triangle=False)
    mu = np.array(Z.nu, dtype=float)
    mu[boundary] = 0.0
    dom = graph_domain(mu, edges, boundary, params=params, space=bspace, coords=X)
    return replace(dom, meta={"product": False, "lattice": True})


def _check_domain(domain):
    if np.any(~(domain.edge_len > 0)) or np.any(~(domain.edge_w > 0)):
        raise ValidationError("edge lengths and conductances must be positive")
    G = domain.graph(lengths=False)
    if connected_components(G, directed=False)[0] != 1:
        raise ValidationError("extension graph is disconnected")


# -- transforms ------------------------------------------------------------------------------

def boundary_distance(domain):
    """Graph distance from every node to the nearest active boundary node."""
    if domain.boundary_ids.size == 0:
        raise ValidationError("domain has no active boundary nodes")
    return dijkstra(domain.graph(), indices=domain.boundary_ids, min_only=True)


def dampening_factor(t, beta):
    """``phi(t) = min(1, t**-beta)`` (equal to 1 for ``t <= 1``)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t <= 1.0, 1.0, np.power(np.maximum(t, 1.0), -beta))


def dampen(domain, beta, Q_mu):
    """Conformally dampen lengths and measure away from the boundary.

    Lengths become ``phi(d_mid) * len`` and node weights ``phi(d)**p * mu``,
    where ``d`` is the graph distance to the active boundary and ``d_mid``
    the mean of the endpoint distances.  Edge measure shares scale by
    ``phi(d_mid)**p``, so conductances ``mass / len**p`` and therefore all
    p-energies are unchanged.

    Raises
    ------
    BetaTooSmall
        Unless ``beta * p > Q_mu``.
    """
    p = domain.params.p
    if not beta * p > Q_mu:
        raise BetaTooSmall(f"need beta*p > Q_mu, got beta={beta}, p={p}, Q_mu={Q_mu}")
    d = boundary_distance(domain)
    phi_node = dampening_factor(d, beta)
    phi_edge = dampening_factor(0.5 * (d[domain.edge_i] + d[domain.edge_j]), beta)
    params = replace(domain.params, beta=float(beta))
    meta = dict(domain.meta, dampened=True, Q_mu=float(Q_mu))
    return replace(domain, mu=domain.mu * phi_node ** p, edge_len=domain.edge_len * phi_edge,
                   edge_mass=domain.edge_mass * phi_edge ** p, edge_w=domain.edge_w.copy(),
                   params=params, meta=meta, _cache={})


def truncate(domain, k):
    """Free boundary nodes outside the closed ball of radius ``2**k * r_0`` around ``x0``.

    The graph is untouched; only the split between ``boundary_ids`` and
    ``free_ids`` changes, and it is always computed from the full boundary
    layer.  The operation is idempotent and monotone in ``k``.
    """
    if k < 0:
        raise ValidationError("truncation level must be nonnegative")
    nodes, d = domain.boundary_distance_from_base()
    radius = (2.0 ** k) * domain.b0_radius
    keep = d <= radius * (1 + 1e-12)
    return replace(domain, boundary_ids=np.sort(nodes[keep]), free_ids=np.sort(nodes[~keep]),
                   meta=dict(domain.meta, truncation=int(k)), _cache={})


# -- serialization ---------------------------------------------------------------------------

def domain_to_dict(domain):
    """JSON-ready document with nodes, edges, params and the boundary space."""
    active = np.zeros(domain.node_count, dtype=bool)
    active[domain.boundary_ids] = True
    free = np.zeros(domain.node_count, dtype=bool)
    free[domain.free_ids] = True
    nodes = [
        {"id": i, "layer": int(domain.layer_of[i]), "y": float(domain.y_of[i]),
         "mu": float(domain.mu[i]), "boundary": bool(active[i]), "free": bool(free[i]),
         "col": int(domain.col_of[i])}
        for i in range(domain.node_count)
    ]
    edges = [
        {"i": int(i), "j": int(j), "len": float(ln), "w": float(w), "mass": float(m)}
        for i, j, ln, w, m in zip(domain.edge_i, domain.edge_j, domain.edge_len,
                                  domain.edge_w, domain.edge_mass)
    ]
    meta = {k: v for k, v in domain.meta.items() if isinstance(v, (int, float, str, bool))}
    return {
        "nodes": nodes,
        "edges": edges,
        "params": domain.params.to_dict(),
        "base_point": int(domain.base_point),
        "b0_radius": float(domain.b0_radius),
        "heights": None if domain.heights is None else domain.heights.tolist(),
        "y_top": float(domain.y_top),
        "coords": None if domain.coords is None else domain.coords.tolist(),
        "space": space_to_dict(domain.space),
        "meta": meta,
    }


def domain_from_dict(doc):
    """Inverse of :func:`domain_to_dict`."""
    try:
        nodes = doc["nodes"]
        edges = doc["edges"]
        params = FractionalParams.from_dict(doc["params"])
    except KeyError as exc:
        raise ValidationError(f"domain document lacks {exc.args[0]!r}") from None
    nodes = sorted(nodes, key=lambda r: r["id"])
    mu = np.array([r["mu"] for r in nodes], dtype=float)
    layer_of = np.array([r.get("layer", 0) for r in nodes], dtype=np.intp)
    y_of = np.array([r.get("y", 0.0) for r in nodes], dtype=float)
    col_of = np.array([r.get("col", -1) for r in nodes], dtype=np.intp)
    active = np.array([i for i, r in enumerate(nodes) if r.get("boundary")], dtype=np.intp)
    free = np.array([i for i, r in enumerate(nodes) if r.get("free")], dtype=np.intp)
    ei = np.array([e["i"] for e in edges], dtype=np.intp)
    ej = np.array([e["j"] for e in edges], dtype=np.intp)
    el = np.array([e["len"] for e in edges], dtype=float)
    ew = np.array([e["w"] for e in edges], dtype=float)
    em = np.array([e.get("mass", e["w"] * e["len"] ** params.p) for e in edges], dtype=float)
    space = space_from_dict(doc["space"]) if doc.get("space") else None
    heights = doc.get("heights")
    coords = doc.get("coords")
    domain = ExtensionDomain(
        mu=mu, layer_of=layer_of, y_of=y_of, col_of=col_of, edge_i=ei, edge_j=ej,
        edge_len=el, edge_w=ew, edge_mass=em, boundary_ids=active, free_ids=free,
        base_point=int(doc.get("base_point", active[0] if active.size else 0)),
        b0_radius=float(doc.get("b0_radius", 1.0)), space=space, params=params,
        heights=None if heights is None else np.asarray(heights, dtype=float),
        y_top=float(doc.get("y_top", 0.0)),
        coords=None if coords is None else np.asarray(coords, dtype=float),
        meta=dict(doc.get("meta", {})),
    )
    _check_domain(domain)
    return domain


def save_domain(domain, path):
    with open(Path(path), "w") as fh:
        json.dump(domain_to_dict(domain), fh, sort_keys=True)


def load_domain(path):
    with open(Path(path)) as fh:
        return domain_from_dict(json.load(fh))
