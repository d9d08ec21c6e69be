"""Ambient-coordinate (embedded) formulation: constrained rough paths,
the constrained integral and RDE, and the bridges to the chart-based
module.

P denotes the tangent projector extended off-manifold through the
user's constraint function, Pi the nearest-point projection.  All
extension-independence claims hold because constrained second-order
data is tangent in both slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .controlled import ControlledPath, pullback, rough_integral, young_integral
from .geometry import EmbeddedManifold, _fd_jac
from .rough_core import RoughPath, bracket

__all__ = ["is_constrained", "constrained_integral", "correction_ambient",
           "AmbientFieldFamily", "constrained_rde", "projection_construction",
           "intrinsic_extrinsic_equiv"]


def _dyadic_slope(rp: RoughPath, local) -> tuple:
    """max-over-grid residuals of `local(k, step)` across dyadic spans;
    returns (finest max, log-log slope)."""
    n = rp.n_intervals
    hs, rs = [], []
    finest = 0.0
    step = 1
    while step <= max(n // 4, 1):
        worst, span = 0.0, 0.0
        for k in range(0, n - step + 1, step):
            worst = max(worst, float(local(k, step)))
            span = max(span, rp.times[k + step] - rp.times[k])
        if step == 1:
            finest = worst
        if worst > 1e-15:
            hs.append(span)
            rs.append(worst)
        step *= 2
    slope = np.inf if len(hs) < 3 else float(np.polyfit(np.log(hs), np.log(rs), 1)[0])
    return finest, slope


def is_constrained(rp: RoughPath, emb: EmbeddedManifold, tol: float = 1e-8) -> dict:
    """Constraint report: trace on the manifold, normal part of the
    increments of order o(omega^{1/p}) (first-order Taylor), and normal
    part of the second-order data of order o(omega); the latter two are
    slope-tested (slope > 1/p resp. > 1 certifies the order)."""
    trace_max = max(float(np.linalg.norm(np.atleast_1d(emb.constraint(x))))
                    for x in rp.trace)
    Qs = np.array([emb.Q(x) for x in rp.trace[:-1]])

    def taylor(k, step):
        dx = rp.increment(k, k + step)
        # first-order characterisation: F(X_t) - F(X_s) - DF(X_s) X_st = o(omega^{2/p})
        r = (np.atleast_1d(emb.constraint(rp.trace[k + step]))
             - np.atleast_1d(emb.constraint(rp.trace[k]))
             - np.atleast_2d(emb.Dconstraint(rp.trace[k])) @ dx)
        return np.linalg.norm(r)

    def normal_level2(k, step):
        x2 = rp.level2_between(k, k + step)
        return np.abs(np.einsum("ki,ij->kj", Qs[k], x2)).max()

    taylor_max, taylor_slope = _dyadic_slope(rp, taylor)
    q2_max, q2_slope = _dyadic_slope(rp, normal_level2)
    ok = (trace_max < tol
          and (taylor_max < tol or taylor_slope > 1.0)
          and (q2_max < tol or q2_slope > 1.0))
    return {"constrained": bool(ok), "trace_max": trace_max,
            "taylor_max": taylor_max, "taylor_slope": taylor_slope,
            "normal_level2_max": q2_max, "normal_level2_slope": q2_slope}


def _dP(emb: EmbeddedManifold, y: np.ndarray) -> np.ndarray:
    """dP[c, a, b] = d_b P^c_a of the constraint-extended projector."""
    return _fd_jac(emb.P, np.asarray(y, dtype=float))


def constrained_integral(H: ControlledPath, rp: RoughPath, emb: EmbeddedManifold,
                         agree_tol: float = 1e-9) -> dict:
    """Constrained rough integral, computed in both equivalent forms:
    through the nearest-point projection (int Pi^* H dX) and through
    the projector field (int (H . P(X)) dX).  The two agree exactly on
    constrained input; disagreement beyond agree_tol raises."""
    pulled = pullback(emb.project, emb.dproj, emb.d2proj, H, rp)
    vA, pathA, as_rough = rough_integral(pulled, rp)

    n = rp.times.size
    e = H.value_shape[0]
    d = rp.dim
    tr = np.zeros((n, e, d))
    gub = np.zeros((n, e, d, d))
    for k, x in enumerate(rp.trace):
        P = emb.P(x)
        dP = _dP(emb, x)
        tr[k] = np.einsum("ec,ca->ea", H.trace[k], P)
        gub[k] = (np.einsum("ecb,ca->eab", H.gubinelli[k], P)
                  + np.einsum("ec,cab->eab", H.trace[k], dP))
    vB, pathB, _ = rough_integral(ControlledPath(rp, tr, gub), rp)
    gap = float(np.abs(vA - vB).max())
    if gap > agree_tol:
        raise ValueError(f"the two constrained-integral forms disagree by {gap:.3e}")
    return {"value": vA, "path": pathA, "as_rough": as_rough,
            "pullback_value": vA, "projector_value": vB, "form_gap": gap}


def correction_ambient(H: ControlledPath, rp: RoughPath, emb: EmbeddedManifold,
                       agree_tol: float = 1e-9):
    """Both sides of the trace correction
    int H dX - int H d_M X = (1/2) int H_c d_{ab} Pi^c d[X]^{ab}."""
    plain, _, _ = rough_integral(H, rp)
    constrained = constrained_integral(H, rp, emb, agree_tol)["value"]
    hess = np.array([np.einsum("ec,cab->eab", H.trace[k], emb.d2proj(x))
                     for k, x in enumerate(rp.trace)])
    rhs = 0.5 * young_integral(hess, bracket(rp))[-1]
    return plain - constrained, rhs


@dataclass
class AmbientFieldFamily:
    """F(y, x) in ambient coordinates, (e, d)-valued, restricting to a
    map of tangent spaces on the manifolds; analytic partials
    dF_x[k, b, a] = dF^k_b/dx^a and dF_y[k, b, h] = dF^k_b/dy^h."""

    F: Callable
    dF_x: Callable
    dF_y: Callable


def constrained_rde(F: AmbientFieldFamily, rp: RoughPath, embM: EmbeddedManifold,
                    embN: EmbeddedManifold, y0, guard: float = 1e8):
    """Constrained RDE
    dY^k = F^k_d(Y,X) P^d_c(X) dX^c + (1/2) d_{ij}Pi_N^k(Y) F^i_a F^j_b d[X]^{ab}
    by the Davie scheme on the driver grid.  Returns (RoughPath with
    level-2 (FP) (x) (FP) XX, status, t_star)."""
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    br = bracket(rp)
    times = [rp.times[0]]
    trace = [y.copy()]
    lvl2 = []
    status, t_star = "global", None
    for k in range(rp.n_intervals):
        x = rp.trace[k]
        dx = rp.increment(k, k + 1)
        P = embM.P(x)
        dP = _dP(embM, x)                      # dP[c, b, a] = d_a P^c_b
        Fv = np.asarray(F.F(y, x), dtype=float)
        dFx = np.asarray(F.dF_x(y, x), dtype=float)   # [k, c, a] = d_a F^k_c
        dFy = np.asarray(F.dF_y(y, x), dtype=float)   # [k, c, h] = d_{y^h} F^k_c
        FP = Fv @ P
        # G[k, a, b] = d_a(FP)^k_b + (FP)^h_a d_h(FP)^k_b
        G = (np.einsum("kca,cb->kab", dFx, P)
             + np.einsum("kc,cba->kab", Fv, dP)
             + np.einsum("ha,kch,cb->kab", FP, dFy, P))
        corr = 0.5 * np.einsum("kij,ia,jb,ab->k", embN.d2proj(y), Fv, Fv, br[k])
        y = y + FP @ dx + np.einsum("kab,ab->k", G, rp.level2[k]) + corr
        times.append(rp.times[k + 1])
        trace.append(y.copy())
        lvl2.append(np.einsum("ia,jb,ab->ij", FP, FP, rp.level2[k]))
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > guard:
            status, t_star = "exploded", rp.times[k + 1]
            break
    sol = RoughPath(np.array(times), np.array(trace), np.array(lvl2), rp.p)
    return sol, status, t_star


def projection_construction(rp: RoughPath, emb: EmbeddedManifold,
                            x0=None) -> RoughPath:
    """Solution of dX = P(X) dZ + (1/2) d_{ij}Pi(X) P^i_a P^j_b d[Z]^{ab}
    for an arbitrary ambient driver Z; constrained output, and a fixed
    point when Z is already constrained with the same start."""
    y = emb.project(np.asarray(x0 if x0 is not None else rp.trace[0], dtype=float))
    br = bracket(rp)
    trace = [y.copy()]
    lvl2 = []
    for k in range(rp.n_intervals):
        dx = rp.increment(k, k + 1)
        P = emb.P(y)
        dPv = _dP(emb, y)                      # [k, b, h] = d_h P^k_b
        G = np.einsum("ha,kbh->kab", P, dPv)
        corr = 0.5 * np.einsum("kij,ia,jb,ab->k", emb.d2proj(y), P, P, br[k])
        y = y + P @ dx + np.einsum("kab,ab->k", G, rp.level2[k]) + corr
        trace.append(y.copy())
        lvl2.append(np.einsum("ia,jb,ab->ij", P, P, rp.level2[k]))
    return RoughPath(rp.times, np.array(trace), np.array(lvl2), rp.p)


def intrinsic_extrinsic_equiv(H: ControlledPath, rp: RoughPath, manifold,
                              conn=None, agree_tol: float = 1e-9) -> float:
    """Residual of int H d_M X = int iota^* H d_nabla (phi_* X): the
    ambient constrained integral against the chart-based one under the
    embedding-induced (Levi-Civita) connection."""
    from .manifold_rough import (ControlledIntegrand, ManifoldRoughPath,
                                 Segment, rough_integral_nabla)
    from .controlled import pushforward_rough

    emb = manifold.embedding
    conn = conn or manifold.connection
    charts = manifold.charted.charts
    ext = constrained_integral(H, rp, emb, agree_tol)["value"]

    # greedy schedule on the coarse grid itself
    cid = manifold.charted.chart_for_ambient(rp.trace[0])
    bounds, cids = [0], [cid]
    n = rp.n_intervals
    for j in range(1, n):
        xc = np.asarray(charts[cid].phi(rp.trace[j]), dtype=float)
        if not charts[cid].contains(xc):
            new_cid = manifold.charted.chart_for_ambient(rp.trace[j])
            if new_cid != cid:
                bounds.append(j)
                cid = new_cid
                cids.append(cid)
    bounds.append(n)
    segments, integrands = [], []
    for (a, b), scid in zip(zip(bounds[:-1], bounds[1:]), cids):
        ch = charts[scid]
        sub = RoughPath(rp.times[a:b + 1], rp.trace[a:b + 1], rp.level2[a:b], rp.p)
        chart_rp = pushforward_rough(ch.phi, ch.dphi_ambient, sub)
        Hs = ControlledPath(sub, H.trace[a:b + 1], H.gubinelli[a:b + 1])
        integrands.append(pullback(ch.iota, ch.diota, ch.d2iota, Hs, chart_rp))
        segments.append(Segment(scid, chart_rp))
    mrp = ManifoldRoughPath(manifold, segments, rp.p)
    intr, _, _ = rough_integral_nabla(ControlledIntegrand(mrp, integrands), mrp, conn)
    return float(np.abs(ext - intr).max())
