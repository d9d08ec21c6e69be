"""Charts, connections, curvature machinery, and embedded projections.

Index layouts (all arrays, x a chart point of dimension m):
    Gamma(x)[g, a, b]        Christoffel Gamma^g_{ab}
    dGamma(x)[l, g, a, b]    partial_l Gamma^g_{ab}
    g(x)[i, j], dg(x)[k, i, j] = g_{ij,k}, d2g(x)[l, k, i, j] = g_{ij,kl}
    curvature(x)[i, j, k, h] R_{ijk}^h
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

__all__ = [
    "Chart", "ConnectionField", "MetricField", "EmbeddedManifold",
    "ChartedManifold", "levi_civita", "curvature", "ricci", "torsion",
    "contorsion", "hessian", "affinity_residual", "embedded_christoffel",
    "horizontal_lift_coords", "fundamental_horizontal", "christoffel_change",
]


@dataclass
class Chart:
    """A coordinate chart.  phi maps ambient (or abstract) points to
    chart coordinates, iota is its inverse into the ambient space.

    transitions[other_id] = (map, jac, hess) with
    hess[c, a, b] = d_{ab} (map)^c.
    """

    id: str
    phi: Callable
    iota: Callable
    radius: float = np.inf
    domain: Optional[Callable] = None
    transitions: Dict[str, tuple] = field(default_factory=dict)
    diota: Optional[Callable] = None     # (d_amb, m)
    d2iota: Optional[Callable] = None    # (d_amb, m, m)
    dphi_ambient: Optional[Callable] = None  # (m, d_amb), extension off-manifold

    def contains(self, coords) -> bool:
        ok = np.linalg.norm(coords) <= 0.8 * self.radius
        if ok and self.domain is not None:
            ok = bool(self.domain(coords))
        return ok


@dataclass
class ConnectionField:
    """Per-chart Christoffel coefficients and their x-derivatives."""

    gamma: Dict[str, Callable]
    dgamma: Dict[str, Callable]

    def Gamma(self, chart_id: str, x) -> np.ndarray:
        return np.asarray(self.gamma[chart_id](np.asarray(x, dtype=float)), dtype=float)

    def dGamma(self, chart_id: str, x) -> np.ndarray:
        return np.asarray(self.dgamma[chart_id](np.asarray(x, dtype=float)), dtype=float)

    @staticmethod
    def single(gamma: Callable, dgamma: Callable, chart_id: str = "main") -> "ConnectionField":
        return ConnectionField({chart_id: gamma}, {chart_id: dgamma})


@dataclass
class MetricField:
    g: Dict[str, Callable]
    dg: Dict[str, Callable]
    d2g: Optional[Dict[str, Callable]] = None

    def at(self, chart_id: str, x) -> np.ndarray:
        return np.asarray(self.g[chart_id](np.asarray(x, dtype=float)), dtype=float)

    def inv(self, chart_id: str, x) -> np.ndarray:
        return np.linalg.inv(self.at(chart_id, x))

    @staticmethod
    def single(g: Callable, dg: Callable, d2g: Optional[Callable] = None,
               chart_id: str = "main") -> "MetricField":
        return MetricField({chart_id: g}, {chart_id: dg},
                           None if d2g is None else {chart_id: d2g})


@dataclass
class ChartedManifold:
    """Atlas plus optional ambient embedding data for plotting and for
    the intrinsic/extrinsic bridges."""

    name: str
    dim: int
    charts: Dict[str, Chart]

    def chart_for(self, coords_by_chart: Dict[str, np.ndarray]) -> str:
        for cid, xc in coords_by_chart.items():
            if self.charts[cid].contains(xc):
                return cid
        return min(coords_by_chart, key=lambda c: np.linalg.norm(coords_by_chart[c]))

    def chart_for_ambient(self, y) -> str:
        best, best_norm = None, np.inf
        for cid, ch in self.charts.items():
            xc = np.asarray(ch.phi(y), dtype=float)
            nrm = np.linalg.norm(xc)
            if nrm < best_norm:
                best, best_norm = cid, nrm
        return best


# connection operations --------------------------------------------


def levi_civita(metric: MetricField, chart_id: str = "main") -> ConnectionField:
    """Gamma^k_{ij} = (1/2) g^{kh} (g_{hj,i} + g_{ih,j} - g_{ij,h});
    dGamma is assembled from d2g when available."""

    def _bracket(x):
        """bracket[h, i, j] = g_{hj,i} + g_{ih,j} - g_{ij,h}."""
        dg = np.asarray(metric.dg[chart_id](x), dtype=float)
        b = dg.transpose(1, 2, 0)  # b[i, j, k] = g_{ij,k}
        m = b.shape[0]
        br = np.zeros((m, m, m))
        for h in range(m):
            for i in range(m):
                for j in range(m):
                    br[h, i, j] = b[h, j, i] + b[i, h, j] - b[i, j, h]
        return br

    def gamma(x):
        gi = np.linalg.inv(metric.at(chart_id, x))
        return 0.5 * np.einsum("kh,hij->kij", gi, _bracket(x))

    def dgamma(x, h_fd=1e-6):
        if metric.d2g is not None:
            g = metric.at(chart_id, x)
            gi = np.linalg.inv(g)
            dg = np.asarray(metric.dg[chart_id](x), dtype=float)
            d2g = np.asarray(metric.d2g[chart_id](x), dtype=float)
            c = d2g.transpose(2, 3, 1, 0)        # c[i, j, k, l] = g_{ij,kl}
            m = g.shape[0]
            dgi = -np.einsum("ka,lab,bh->lkh", gi, dg, gi)
            br = _bracket(x)
            dbr = np.zeros((m, m, m, m))
            for h_ in range(m):
                for i in range(m):
                    for j in range(m):
                        for l in range(m):
                            dbr[l, h_, i, j] = c[h_, j, i, l] + c[i, h_, j, l] - c[i, j, h_, l]
            return 0.5 * (np.einsum("lkh,hij->lkij", dgi, br)
                          + np.einsum("kh,lhij->lkij", gi, dbr))
        # finite-difference fallback on gamma
        x = np.asarray(x, dtype=float)
        m = x.size
        out = np.zeros((m, m, m, m))
        for l in range(m):
            e = np.zeros(m)
            e[l] = h_fd
            out[l] = (gamma(x + e) - gamma(x - e)) / (2 * h_fd)
        return out

    return ConnectionField.single(gamma, dgamma, chart_id)


def curvature(conn: ConnectionField, chart_id: str = "main") -> Callable:
    """R_{ijk}^h = Gamma^h_{jk,i} - Gamma^h_{ik,j}
    + Gamma^h_{il} Gamma^l_{jk} - Gamma^h_{jl} Gamma^l_{ik}."""

    def R(x):
        G = conn.Gamma(chart_id, x)
        dG = conn.dGamma(chart_id, x)
        # dG[l, g, a, b] = d_l Gamma^g_{ab}
        t1 = np.einsum("ihjk->ijkh", dG)
        t2 = np.einsum("jhik->ijkh", dG)
        t3 = np.einsum("hil,ljk->ijkh", G, G)
        t4 = np.einsum("hjl,lik->ijkh", G, G)
        return t1 - t2 + t3 - t4

    return R


def ricci(conn: ConnectionField, metric: MetricField, chart_id: str = "main") -> Callable:
    """Ric_{ij} = -R_{hikj} g^{hk} with R_{hikj} = R_{hik}^l g_{lj}."""
    R = curvature(conn, chart_id)

    def ric(x):
        g = metric.at(chart_id, x)
        gi = np.linalg.inv(g)
        Rl = np.einsum("hikl,lj->hikj", R(x), g)
        return -np.einsum("hikj,hk->ij", Rl, gi)

    return ric


def torsion(conn: ConnectionField, chart_id: str = "main") -> Callable:
    def T(x):
        G = conn.Gamma(chart_id, x)
        return G - np.transpose(G, (0, 2, 1))
    return T


def contorsion(conn: ConnectionField, metric: MetricField,
               chart_id: str = "main") -> Callable:
    """K^k_{ij} = (1/2)(T^k_{ij} + T_i^k_j + T_j^k_i); for a metric
    connection Gamma = LeviCivita(g) + K."""
    T = torsion(conn, chart_id)

    def K(x):
        g = metric.at(chart_id, x)
        gi = np.linalg.inv(g)
        t = T(x)                              # t[k, i, j] = T^k_{ij}
        tl = np.einsum("kl,lij->kij", g, t)   # T_{kij}
        t2 = np.einsum("kh,ihj->kij", gi, tl)  # T_i^k_j
        t3 = np.einsum("kh,jhi->kij", gi, tl)  # T_j^k_i
        return 0.5 * (t + t2 + t3)

    return K


def hessian(conn: ConnectionField, Df: Callable, D2f: Callable,
            chart_id: str = "main") -> Callable:
    """(nabla^2 f)_{ij} = f_{,ij} - Gamma^k_{ij} f_{,k}."""
    def H(x):
        return (np.asarray(D2f(x), dtype=float)
                - np.einsum("kij,k->ij", conn.Gamma(chart_id, x),
                            np.asarray(Df(x), dtype=float)))
    return H


def affinity_residual(f: Callable, Df: Callable, D2f: Callable,
                      connM: ConnectionField, connN: ConnectionField,
                      chartM: str = "main", chartN: str = "main",
                      symmetric: bool = False) -> Callable:
    """Residual of the affinity condition
    d_{ab} f^k + NGamma^k_{ij} d_a f^i d_b f^j - MGamma^g_{ab} d_g f^k,
    optionally symmetrised in (a, b)."""
    def res(x):
        y = np.asarray(f(x), dtype=float)
        J = np.asarray(Df(x), dtype=float)        # (n, m)
        H = np.asarray(D2f(x), dtype=float)       # (n, m, m)
        GN = connN.Gamma(chartN, y)
        GM = connM.Gamma(chartM, x)
        r = (H + np.einsum("kij,ia,jb->kab", GN, J, J)
             - np.einsum("gab,kg->kab", GM, J))
        if symmetric:
            r = 0.5 * (r + np.transpose(r, (0, 2, 1)))
        return r
    return res


def christoffel_change(Gamma_old: np.ndarray, jac: np.ndarray,
                       jac_inv: np.ndarray, hess_fwd: np.ndarray) -> np.ndarray:
    """Transform Christoffels to new coordinates.

    jac[gbar, g] = d xbar^gbar / d x^g at the point, jac_inv its inverse,
    hess_fwd[gbar, a, b] = d_{ab} xbar^gbar (old-coordinate derivatives).

    Gammabar^K_{IJ} = jac^K_k jacinv^i_I jacinv^j_J Gamma^k_{ij}
                      - hess_fwd[K, a, b] jacinv^a_I jacinv^b_J,
    the second term being the inverse-map hessian contracted back.
    """
    term1 = np.einsum("Kk,iI,jJ,kij->KIJ", jac, jac_inv, jac_inv, Gamma_old)
    term2 = np.einsum("Kab,aI,bJ->KIJ", hess_fwd, jac_inv, jac_inv)
    return term1 - term2


def horizontal_lift_coords(conn: ConnectionField, chart_id: str = "main") -> Callable:
    """h(x, y)(u) in induced coordinates: base part u, vertical part
    -Gamma^g_{ab}(x) u^a y^b."""
    def h(x, y, u):
        G = conn.Gamma(chart_id, x)
        return np.asarray(u, dtype=float), -np.einsum("gab,a,b->g", G, u, y)
    return h


def fundamental_horizontal(conn: ConnectionField, chart_id: str = "main") -> Callable:
    """Fundamental horizontal fields at a frame point (x, e):
    H_c = (e_c, -Gamma^g_{ab} e^a_c e^b_. ) as an (m + m*m)-vector each."""
    h = horizontal_lift_coords(conn, chart_id)

    def H(x, frame):
        frame = np.asarray(frame, dtype=float)
        m = frame.shape[0]
        out = []
        for c in range(m):
            base = frame[:, c]
            vert = np.zeros((m, m))
            G = conn.Gamma(chart_id, x)
            for cc in range(m):
                vert[:, cc] = -np.einsum("gab,a,b->g", G, base, frame[:, cc])
            out.append((base, vert))
        return out

    return H


# embedded manifolds ------------------------------------------------


@dataclass
class EmbeddedManifold:
    """Submanifold of R^d given by a constraint F = 0 (codimension
    d - m) with nearest-point projection Pi.

    P(y) = I - DF^T (DF DF^T)^{-1} DF projects onto the tangent space;
    on the manifold P = DPi.
    """

    name: str
    ambient_dim: int
    dim: int
    constraint: Callable                  # (d - m,)
    Dconstraint: Callable                 # (d - m, d)
    Pi: Optional[Callable] = None
    dPi: Optional[Callable] = None        # (d, d)
    d2Pi: Optional[Callable] = None       # (d, d, d): d2Pi[c, a, b] = d_{ab} Pi^c
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.Pi is not None:
            return np.asarray(self.Pi(y), dtype=float)
        z = y.copy()
        for _ in range(self.newton_max_iter):
            F = np.atleast_1d(self.constraint(z))
            if np.linalg.norm(F) < self.newton_tol:
                break
            J = np.atleast_2d(self.Dconstraint(z))
            z = z - J.T @ np.linalg.solve(J @ J.T, F)
        return z

    def P(self, y) -> np.ndarray:
        J = np.atleast_2d(self.Dconstraint(np.asarray(y, dtype=float)))
        return np.eye(self.ambient_dim) - J.T @ np.linalg.solve(J @ J.T, J)

    def Q(self, y) -> np.ndarray:
        return np.eye(self.ambient_dim) - self.P(y)

    def dproj(self, y) -> np.ndarray:
        if self.dPi is not None:
            return np.asarray(self.dPi(y), dtype=float)
        return _fd_jac(self.project, np.asarray(y, dtype=float))

    def d2proj(self, y) -> np.ndarray:
        if self.d2Pi is not None:
            return np.asarray(self.d2Pi(y), dtype=float)
        return _fd_jac(self.dproj, np.asarray(y, dtype=float))

    def on_manifold(self, y, tol: float = 1e-8) -> bool:
        return float(np.linalg.norm(np.atleast_1d(self.constraint(y)))) < tol

    def delP_residual(self, y) -> float:
        """Residual of the projected second-derivative identity
        d_{ce} Pi P^c_a P^e_b + P_c d_{ab} Pi^c = d_{ab} Pi at Pi(y)."""
        z = self.project(y)
        P = self.P(z)
        H = self.d2proj(z)
        lhs = (np.einsum("kce,ca,eb->kab", H, P, P)
               + np.einsum("kc,cab->kab", P, H))
        return float(np.abs(lhs - H).max())


def _fd_jac(f, x, h=1e-5):
    f0 = np.asarray(f(x), dtype=float)
    out = np.zeros(f0.shape + (x.size,))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[..., i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return out


def embedded_christoffel(emb: EmbeddedManifold, chart: Chart) -> Callable:
    """Gamma^g_{ab}(x) = d_c pi^g(iota(x)) d_{ab} iota^c(x), with
    pi = phi o Pi the chart-coordinate projection."""
    if chart.d2iota is None or chart.dphi_ambient is None:
        raise ValueError("chart needs analytic d2iota and dphi_ambient")

    def gamma(x):
        y = np.asarray(chart.iota(x), dtype=float)
        dphi = np.asarray(chart.dphi_ambient(y), dtype=float)   # (m, d)
        dpi = dphi @ emb.dproj(y)                                # (m, d)
        H = np.asarray(chart.d2iota(x), dtype=float)             # (d, m, m)
        return np.einsum("gc,cab->gab", dpi, H)

    return gamma
