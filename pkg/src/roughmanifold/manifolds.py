"""Built-in manifolds: R^n (custom connections allowed), S^1, S^2 with
the stereographic two-chart atlas, the flat torus, and the foliated
spherical-coordinate connection on R^3 minus the origin.

All coefficient fields are analytic (no finite differences), since the
tangent-bundle lifts consume dGamma directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .geometry import (Chart, ChartedManifold, ConnectionField, EmbeddedManifold,
                       MetricField)

__all__ = ["Manifold", "euclidean", "circle", "sphere2", "torus2",
           "r3_torsion_connection", "r3_foliated", "get_manifold",
           "connection_from_table"]


@dataclass
class Manifold:
    """A charted manifold bundled with its standard metric, Levi-Civita
    connection field, and (when available) an ambient embedding."""

    charted: ChartedManifold
    metric: Optional[MetricField]
    connection: Optional[ConnectionField]
    embedding: Optional[EmbeddedManifold] = None

    @property
    def name(self):
        return self.charted.name

    @property
    def dim(self):
        return self.charted.dim

    def to_ambient(self, chart_id: str, x) -> np.ndarray:
        return np.asarray(self.charted.charts[chart_id].iota(x), dtype=float)

    def from_ambient(self, y):
        cid = self.charted.chart_for_ambient(y)
        return cid, np.asarray(self.charted.charts[cid].phi(y), dtype=float)


# ------------------------------------------------------------------
# R^n


def euclidean(d: int, gamma: Optional[Callable] = None,
              dgamma: Optional[Callable] = None, name: str = "euclidean") -> Manifold:
    ident = Chart(id="main", phi=lambda y: np.asarray(y, dtype=float),
                  iota=lambda x: np.asarray(x, dtype=float),
                  diota=lambda x: np.eye(d),
                  d2iota=lambda x: np.zeros((d, d, d)),
                  dphi_ambient=lambda y: np.eye(d))
    charted = ChartedManifold(name, d, {"main": ident})
    metric = MetricField.single(lambda x: np.eye(d),
                                lambda x: np.zeros((d, d, d)),
                                lambda x: np.zeros((d, d, d, d)))
    if gamma is None:
        gamma = lambda x: np.zeros((d, d, d))
        dgamma = lambda x: np.zeros((d, d, d, d))
    elif dgamma is None:
        raise ValueError("custom gamma needs its analytic derivative")
    conn = ConnectionField.single(gamma, dgamma)
    return Manifold(charted, metric, conn)


def connection_from_table(table: dict) -> ConnectionField:
    """ConnectionField from a JSON-style table of polynomial Christoffel
    symbols: {"dim": m, "entries": [{"g": g, "a": a, "b": b,
    "terms": [{"coef": c, "powers": [p_1 .. p_m]}]}]}, meaning
    Gamma^g_{ab}(x) = sum_terms c * prod_i x_i^{p_i}.  Derivatives are
    computed analytically from the monomials."""
    m = int(table["dim"])
    entries = []
    for e in table.get("entries", []):
        g, a, b = int(e["g"]), int(e["a"]), int(e["b"])
        terms = [(float(t["coef"]), [int(p) for p in t["powers"]])
                 for t in e["terms"]]
        for _, pw in terms:
            if len(pw) != m:
                raise ValueError("each monomial needs one exponent per coordinate")
        entries.append((g, a, b, terms))

    def gamma(x):
        x = np.asarray(x, dtype=float)
        G = np.zeros((m, m, m))
        for g, a, b, terms in entries:
            G[g, a, b] = sum(c * np.prod(x ** np.array(pw)) for c, pw in terms)
        return G

    def dgamma(x):
        x = np.asarray(x, dtype=float)
        dG = np.zeros((m, m, m, m))
        for g, a, b, terms in entries:
            for c, pw in terms:
                for l in range(m):
                    if pw[l] == 0:
                        continue
                    dpw = list(pw)
                    dpw[l] -= 1
                    dG[l, g, a, b] += c * pw[l] * np.prod(x ** np.array(dpw))
        return dG

    return ConnectionField.single(gamma, dgamma)


def r3_torsion_connection() -> Manifold:
    """R^3 with the constant antisymmetric connection
    Gamma^1_{23} = 1 = -Gamma^1_{32} (cyclically); straight-line
    geodesics, torsion T^1_{23} = 2 cyclically."""
    G = np.zeros((3, 3, 3))
    for (k, i, j) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        G[k, i, j] = 1.0
        G[k, j, i] = -1.0
    return euclidean(3, gamma=lambda x: G, dgamma=lambda x: np.zeros((3, 3, 3, 3)),
                     name="r3-torsion")


# ------------------------------------------------------------------
# spheres


def _sphere_embedding(d: int, name: str) -> EmbeddedManifold:
    def constraint(y):
        return np.array([np.dot(y, y) - 1.0])

    def Dconstraint(y):
        return 2.0 * np.asarray(y, dtype=float)[None, :]

    def Pi(y):
        y = np.asarray(y, dtype=float)
        return y / np.linalg.norm(y)

    def dPi(y):
        y = np.asarray(y, dtype=float)
        rho = np.linalg.norm(y)
        return np.eye(d) / rho - np.outer(y, y) / rho ** 3

    def d2Pi(y):
        y = np.asarray(y, dtype=float)
        rho = np.linalg.norm(y)
        I = np.eye(d)
        out = (-np.einsum("ca,b->cab", I, y)
               - np.einsum("cb,a->cab", I, y)
               - np.einsum("ab,c->cab", I, y)) / rho ** 3 \
            + 3.0 * np.einsum("c,a,b->cab", y, y, y) / rho ** 5
        return out

    return EmbeddedManifold(name, d, d - 1, constraint, Dconstraint, Pi, dPi, d2Pi)


def circle() -> Manifold:
    emb = _sphere_embedding(2, "S1")

    def phi(y):
        return np.array([np.arctan2(y[1], y[0])])

    def iota(th):
        th = float(np.atleast_1d(th)[0])
        return np.array([np.cos(th), np.sin(th)])

    def diota(th):
        th = float(np.atleast_1d(th)[0])
        return np.array([[-np.sin(th)], [np.cos(th)]])

    def d2iota(th):
        th = float(np.atleast_1d(th)[0])
        return np.array([[[-np.cos(th)]], [[-np.sin(th)]]])

    def dphi_amb(y):
        r2 = y[0] ** 2 + y[1] ** 2
        return np.array([[-y[1] / r2, y[0] / r2]])

    ch = Chart(id="angle", phi=phi, iota=iota, radius=np.pi,
               diota=diota, d2iota=d2iota, dphi_ambient=dphi_amb)
    charted = ChartedManifold("S1", 1, {"angle": ch})
    metric = MetricField.single(lambda x: np.eye(1), lambda x: np.zeros((1, 1, 1)),
                                lambda x: np.zeros((1, 1, 1, 1)), "angle")
    conn = ConnectionField.single(lambda x: np.zeros((1, 1, 1)),
                                  lambda x: np.zeros((1, 1, 1, 1)), "angle")
    return Manifold(charted, metric, conn, emb)


def _stereo_gamma(u):
    """Levi-Civita Christoffels of the round metric 4/(1+r^2)^2 delta
    in a stereographic chart: Gamma^k_{ij} = d_j c_i terms with
    c_i = -2 u_i / (1 + r^2)."""
    u = np.asarray(u, dtype=float)
    m = u.size
    s = 1.0 + u @ u
    c = -2.0 * u / s
    I = np.eye(m)
    return (np.einsum("kj,i->kij", I, c) + np.einsum("ki,j->kij", I, c)
            - np.einsum("ij,k->kij", I, c))


def _stereo_dgamma(u):
    u = np.asarray(u, dtype=float)
    m = u.size
    s = 1.0 + u @ u
    I = np.eye(m)
    dc = -2.0 * I / s + 4.0 * np.outer(u, u) / s ** 2   # dc[l, i] = d_l c_i
    return (np.einsum("kj,li->lkij", I, dc) + np.einsum("ki,lj->lkij", I, dc)
            - np.einsum("ij,lk->lkij", I, dc))


def _stereo_metric(u):
    u = np.asarray(u, dtype=float)
    s = 1.0 + u @ u
    return (4.0 / s ** 2) * np.eye(u.size)


def _stereo_dmetric(u):
    u = np.asarray(u, dtype=float)
    s = 1.0 + u @ u
    dlam = -16.0 * u / s ** 3
    return np.einsum("k,ij->kij", dlam, np.eye(u.size))


def _stereo_d2metric(u):
    u = np.asarray(u, dtype=float)
    s = 1.0 + u @ u
    m = u.size
    d2lam = -16.0 * np.eye(m) / s ** 3 + 96.0 * np.outer(u, u) / s ** 4
    return np.einsum("lk,ij->lkij", d2lam, np.eye(m))


def _inversion(u):
    u = np.asarray(u, dtype=float)
    return u / (u @ u)


def _inversion_jac(u):
    u = np.asarray(u, dtype=float)
    r2 = u @ u
    return np.eye(u.size) / r2 - 2.0 * np.outer(u, u) / r2 ** 2


def _inversion_hess(u):
    u = np.asarray(u, dtype=float)
    r2 = u @ u
    I = np.eye(u.size)
    return (-2.0 * (np.einsum("ij,k->ijk", I, u) + np.einsum("ik,j->ijk", I, u)
                    + np.einsum("jk,i->ijk", I, u)) / r2 ** 2
            + 8.0 * np.einsum("i,j,k->ijk", u, u, u) / r2 ** 3)


def sphere2() -> Manifold:
    """Unit S^2 in R^3 with the stereographic north/south atlas."""
    emb = _sphere_embedding(3, "S2")

    def phi_n(y):
        return np.array([y[0], y[1]]) / (1.0 - y[2])

    def iota_n(u):
        s = 1.0 + u @ u
        return np.array([2 * u[0], 2 * u[1], (u @ u) - 1.0]) / s

    def diota_n(u):
        u = np.asarray(u, dtype=float)
        s = 1.0 + u @ u
        out = np.zeros((3, 2))
        for i in range(2):
            for j in range(2):
                out[i, j] = 2.0 * (1.0 if i == j else 0.0) / s - 4.0 * u[i] * u[j] / s ** 2
        out[2, :] = 4.0 * u / s ** 2
        return out

    def d2iota_n(u):
        u = np.asarray(u, dtype=float)
        s = 1.0 + u @ u
        I = np.eye(2)
        out = np.zeros((3, 2, 2))
        for i in range(2):
            out[i] = (-4.0 * I * u[i] / s ** 2
                      - 4.0 * (np.einsum("k,j->jk", u, I[i]) + np.einsum("j,k->jk", u, I[i])) / s ** 2
                      + 16.0 * u[i] * np.outer(u, u) / s ** 3)
        out[2] = 4.0 * I / s ** 2 - 16.0 * np.outer(u, u) / s ** 3
        return out

    def dphi_n_amb(y):
        w = 1.0 - y[2]
        return np.array([[1.0 / w, 0.0, y[0] / w ** 2],
                         [0.0, 1.0 / w, y[1] / w ** 2]])

    def phi_s(y):
        return np.array([y[0], y[1]]) / (1.0 + y[2])

    def iota_s(v):
        s = 1.0 + v @ v
        return np.array([2 * v[0], 2 * v[1], 1.0 - (v @ v)]) / s

    def diota_s(v):
        out = diota_n(v).copy()
        out[2, :] *= -1.0
        return out

    def d2iota_s(v):
        out = d2iota_n(v).copy()
        out[2] *= -1.0
        return out

    def dphi_s_amb(y):
        w = 1.0 + y[2]
        return np.array([[1.0 / w, 0.0, -y[0] / w ** 2],
                         [0.0, 1.0 / w, -y[1] / w ** 2]])

    trans = ( _inversion, _inversion_jac, _inversion_hess)
    north = Chart(id="north", phi=phi_n, iota=iota_n, radius=2.0,
                  transitions={"south": trans}, diota=diota_n, d2iota=d2iota_n,
                  dphi_ambient=dphi_n_amb)
    south = Chart(id="south", phi=phi_s, iota=iota_s, radius=2.0,
                  transitions={"north": trans}, diota=diota_s, d2iota=d2iota_s,
                  dphi_ambient=dphi_s_amb)
    charted = ChartedManifold("S2", 2, {"north": north, "south": south})
    metric = MetricField({"north": _stereo_metric, "south": _stereo_metric},
                         {"north": _stereo_dmetric, "south": _stereo_dmetric},
                         {"north": _stereo_d2metric, "south": _stereo_d2metric})
    conn = ConnectionField({"north": _stereo_gamma, "south": _stereo_gamma},
                           {"north": _stereo_dgamma, "south": _stereo_dgamma})
    return Manifold(charted, metric, conn, emb)


# ------------------------------------------------------------------
# flat torus


def torus2() -> Manifold:
    """R^2 / Z^2 with a single fundamental-domain chart; flat metric."""
    ch = Chart(id="main", phi=lambda y: np.mod(np.asarray(y, dtype=float) + 0.5, 1.0) - 0.5,
               iota=lambda x: np.asarray(x, dtype=float),
               diota=lambda x: np.eye(2), d2iota=lambda x: np.zeros((2, 2, 2)),
               dphi_ambient=lambda y: np.eye(2))
    charted = ChartedManifold("T2", 2, {"main": ch})
    metric = MetricField.single(lambda x: np.eye(2), lambda x: np.zeros((2, 2, 2)),
                                lambda x: np.zeros((2, 2, 2, 2)))
    conn = ConnectionField.single(lambda x: np.zeros((2, 2, 2)),
                                  lambda x: np.zeros((2, 2, 2, 2)))
    return Manifold(charted, metric, conn)


# ------------------------------------------------------------------
# R^3 minus origin, foliated connection (spherical coordinates with
# the radial Christoffels zeroed)


def r3_foliated() -> Manifold:
    """Chart coordinates (r, theta, phi); Euclidean Levi-Civita symbols
    in spherical coordinates with every Gamma^r set to zero, so
    geodesics are circles about the origin and radial rays, and
    concentric spheres are affine submanifolds."""

    def gamma(x):
        r, th, _ = x
        G = np.zeros((3, 3, 3))
        G[1, 0, 1] = G[1, 1, 0] = 1.0 / r
        G[1, 2, 2] = -np.sin(th) * np.cos(th)
        G[2, 0, 2] = G[2, 2, 0] = 1.0 / r
        G[2, 1, 2] = G[2, 2, 1] = np.cos(th) / np.sin(th)
        return G

    def dgamma(x):
        r, th, _ = x
        dG = np.zeros((3, 3, 3, 3))
        dG[0, 1, 0, 1] = dG[0, 1, 1, 0] = -1.0 / r ** 2
        dG[0, 2, 0, 2] = dG[0, 2, 2, 0] = -1.0 / r ** 2
        dG[1, 1, 2, 2] = -np.cos(2 * th)
        dG[1, 2, 1, 2] = dG[1, 2, 2, 1] = -1.0 / np.sin(th) ** 2
        return dG

    def iota(x):
        r, th, ph = x
        return np.array([r * np.sin(th) * np.cos(ph),
                         r * np.sin(th) * np.sin(ph),
                         r * np.cos(th)])

    def phi(y):
        r = np.linalg.norm(y)
        return np.array([r, np.arccos(np.clip(y[2] / r, -1, 1)),
                         np.arctan2(y[1], y[0])])

    ch = Chart(id="spherical", phi=phi, iota=iota,
               domain=lambda x: 0.05 < x[1] < np.pi - 0.05)
    charted = ChartedManifold("r3-foliated", 3, {"spherical": ch})
    conn = ConnectionField.single(gamma, dgamma, "spherical")

    def g(x):
        r, th, _ = x
        return np.diag([1.0, r ** 2, (r * np.sin(th)) ** 2])

    def dg(x):
        r, th, _ = x
        out = np.zeros((3, 3, 3))
        out[0, 1, 1] = 2 * r
        out[0, 2, 2] = 2 * r * np.sin(th) ** 2
        out[1, 2, 2] = 2 * r ** 2 * np.sin(th) * np.cos(th)
        return out

    metric = MetricField.single(g, dg, None, "spherical")
    return Manifold(charted, metric, conn)


_REGISTRY = {
    "S1": circle,
    "S2": sphere2,
    "T2": torus2,
    "r3-torsion": r3_torsion_connection,
    "r3-foliated": r3_foliated,
}


def get_manifold(name: str, **kwargs) -> Manifold:
    if name.startswith("euclidean"):
        d = int(name.split("-")[1]) if "-" in name else kwargs.pop("d", 3)
        return euclidean(d, **kwargs)
    key = name if name in _REGISTRY else name.upper()
    if key not in _REGISTRY:
        raise KeyError(f"unknown manifold {name!r}; have {sorted(_REGISTRY)}")
    return _REGISTRY[key]()
