"""Controlled paths, the compensated rough integral, and the algebra
of operations connecting controlled and rough paths.

A controlled path stores its trace and Gubinelli derivative on the
driver's grid.  Traces may carry any value shape *v; the Gubinelli
derivative then has shape *v + (d,), d the driver dimension.
Integrands are the special case of value shape (e, d).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rough_core import RoughPath, bracket

__all__ = [
    "ControlledPath", "one_form", "rough_integral", "young_integral",
    "change_driver", "pushforward_rough", "pushforward_controlled",
    "pullback", "star", "leibniz", "kw_bracket_of_integral",
    "associativity_check", "pushpull_defect", "fd_jacobian",
]


def fd_jacobian(f: Callable, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian; opt-in fallback for missing
    analytic derivatives."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    out = np.zeros(f0.shape + (x.size,))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[..., i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return out


class ControlledPath:
    """Path H with Gubinelli derivative H' sampled on the driver grid."""

    def __init__(self, reference: RoughPath, trace, gubinelli):
        self.reference = reference
        self.trace = np.asarray(trace, dtype=float)
        self.gubinelli = np.asarray(gubinelli, dtype=float)
        n = reference.times.size
        d = reference.dim
        if self.trace.shape[0] != n or self.gubinelli.shape[0] != n:
            raise ValueError("controlled data must live on the driver grid")
        if self.gubinelli.shape != self.trace.shape + (d,):
            raise ValueError(
                f"gubinelli shape {self.gubinelli.shape} does not extend "
                f"trace shape {self.trace.shape} by driver dim {d}")

    @property
    def value_shape(self):
        return self.trace.shape[1:]

    def remainder_witness(self) -> dict:
        """sup |R_st| / omega^{2/p} over grid intervals, with
        R_st = H_st - H'_s X_st."""
        rp = self.reference
        worst = 0.0
        for k in range(rp.n_intervals):
            dx = rp.trace[k + 1] - rp.trace[k]
            r = self.trace[k + 1] - self.trace[k] - self.gubinelli[k] @ dx
            om = rp.control(rp.times[k], rp.times[k + 1])
            worst = max(worst, np.linalg.norm(np.atleast_1d(r)) / om ** (2 / rp.p))
        return {"sup_ratio": worst}

    def remainder_slope(self) -> float:
        """Measured remainder exponent from a dyadic-scale log-log fit."""
        rp = self.reference
        n = rp.n_intervals
        hs, rs = [], []
        step = 1
        while step <= n // 2:
            worst = 0.0
            span = 0.0
            for k in range(0, n - step + 1, step):
                dx = rp.trace[k + step] - rp.trace[k]
                r = self.trace[k + step] - self.trace[k] - self.gubinelli[k] @ dx
                worst = max(worst, np.linalg.norm(np.atleast_1d(r)))
                span = max(span, rp.times[k + step] - rp.times[k])
            if worst > 1e-15:
                hs.append(span)
                rs.append(worst)
            step *= 2
        if len(hs) < 3:
            return np.inf
        return np.polyfit(np.log(hs), np.log(rs), 1)[0]


def one_form(f: Callable, Df: Optional[Callable], D2f: Optional[Callable],
             rp: RoughPath, allow_fd: bool = False) -> ControlledPath:
    """Canonical controlled path H = f(X), H' = Df(X).

    D2f is accepted for interface symmetry with the correction formulas
    (it bounds the remainder) but is not stored.
    """
    if Df is None:
        if not allow_fd:
            raise ValueError("Df missing; pass allow_fd=True for the FD fallback")
        Df = lambda x: fd_jacobian(f, x)
    trace = np.array([np.asarray(f(x), dtype=float) for x in rp.trace])
    gub = np.array([np.asarray(Df(x), dtype=float) for x in rp.trace])
    if gub.shape != trace.shape + (rp.dim,):
        raise ValueError("derivative callable returned wrong shape")
    return ControlledPath(rp, trace, gub)


def _integrand_shapes(H: ControlledPath, rp: RoughPath):
    if H.reference is not rp and not np.array_equal(H.reference.trace, rp.trace):
        raise ValueError("integrand is not controlled by this driver's trace")
    v = H.value_shape
    if len(v) != 2 or v[1] != rp.dim:
        raise ValueError(f"integrand must have value shape (e, {rp.dim})")
    return v[0]


def rough_integral(H: ControlledPath, rp: RoughPath, i: int = 0,
                   j: Optional[int] = None):
    """Compensated rough integral of an (e, d)-integrand against rp.

    Returns (value over [t_i, t_j], as_controlled, as_rough); the
    rough lift's second-order part is H (x) H applied to XX.
    """
    e = _integrand_shapes(H, rp)
    n = rp.n_intervals
    if j is None:
        j = n
    dx = np.diff(rp.trace, axis=0)
    incs = (np.einsum("ked,kd->ke", H.trace[:-1], dx)
            + np.einsum("kedc,kdc->ke", H.gubinelli[:-1], rp.level2))
    cum = np.concatenate([np.zeros((1, e)), np.cumsum(incs, axis=0)])
    value = cum[j] - cum[i]
    as_controlled = ControlledPath(rp, cum, H.trace)
    level2 = np.einsum("kia,kjb,kab->kij", H.trace[:-1], H.trace[:-1], rp.level2)
    as_rough = RoughPath(rp.times, cum, level2, rp.p, rp.control)
    return value, as_controlled, as_rough


def young_integral(H_vals: np.ndarray, dY: np.ndarray) -> np.ndarray:
    """Left Riemann sum of H against per-interval increments dY.

    H_vals has shape (N+1, *v, *w) and dY shape (N, *w); the trailing
    axes of H are contracted against dY.  Valid when the regularities
    satisfy 1/p + 1/q > 1 (Young), which holds for all uses here
    (integrands of regularity 1/p against brackets of regularity 2/p).
    """
    H_vals = np.asarray(H_vals, dtype=float)
    dY = np.asarray(dY, dtype=float)
    w = dY.ndim - 1
    axes_h = tuple(range(H_vals.ndim - w, H_vals.ndim))
    axes_y = tuple(range(1, w + 1))
    incs = np.stack([np.tensordot(H_vals[k], dY[k], axes=(tuple(a - 1 for a in axes_h), tuple(a - 1 for a in axes_y)))
                     for k in range(dY.shape[0])])
    zero = np.zeros((1,) + incs.shape[1:])
    return np.concatenate([zero, np.cumsum(incs, axis=0)])


def change_driver(H: ControlledPath, rp1: RoughPath, rp2: RoughPath) -> np.ndarray:
    """Correction int H d(rp2) - int H d(rp1) = int H' dD, with
    D = XX_2 - XX_1 Young-integrated.  rp1 and rp2 must share a trace."""
    if not np.array_equal(rp1.trace, rp2.trace):
        raise ValueError("drivers must share their trace")
    D = rp2.level2 - rp1.level2
    return young_integral(H.gubinelli, D)[-1]


def pushforward_rough(f: Callable, Df: Callable, rp: RoughPath,
                      out_dim: Optional[int] = None) -> RoughPath:
    """Pushforward f_* rp: trace f(X), level-2 Df (x) Df applied to XX."""
    trace = np.array([np.asarray(f(x), dtype=float) for x in rp.trace])
    if trace.ndim == 1:
        trace = trace[:, None]
    J = np.array([np.asarray(Df(x), dtype=float).reshape(trace.shape[1], rp.dim)
                  for x in rp.trace])
    level2 = np.einsum("kia,kjb,kab->kij", J[:-1], J[:-1], rp.level2)
    return RoughPath(rp.times, trace, level2, rp.p, rp.control)


def pushforward_controlled(f: Callable, Df: Callable, H: ControlledPath) -> ControlledPath:
    """f_* H = (f(H), Df(H) H'); value shape must be a vector."""
    if len(H.value_shape) != 1:
        raise ValueError("pushforward_controlled expects vector-valued H")
    trace = np.array([np.asarray(f(h), dtype=float) for h in H.trace])
    J = np.array([np.asarray(Df(h), dtype=float) for h in H.trace])
    gub = np.einsum("kie,ked->kid", J, H.gubinelli)
    return ControlledPath(H.reference, trace, gub)


def pullback(g: Callable, Dg: Callable, D2g: Callable, H: ControlledPath,
             rp: RoughPath) -> ControlledPath:
    """Pullback of an integrand through g along the driver rp.

    (g^* H)_a = H_c dg^c_a evaluated at X; the Gubinelli derivative
    picks up the second-derivative term H_c d2g^c_{ab}.  H must be
    controlled by g_*(rp).
    """
    e = H.value_shape[0]
    d = rp.dim
    trace = np.zeros((rp.times.size, e, d))
    gub = np.zeros((rp.times.size, e, d, d))
    for k, x in enumerate(rp.trace):
        J = np.asarray(Dg(x), dtype=float)          # (m, d): dg^c_a
        H2 = np.asarray(D2g(x), dtype=float)        # (m, d, d)
        trace[k] = np.einsum("ec,ca->ea", H.trace[k], J)
        gub[k] = (np.einsum("ecm,ca,mb->eab", H.gubinelli[k], J, J)
                  + np.einsum("ec,cab->eab", H.trace[k], H2))
    return ControlledPath(rp, trace, gub)


def star(K: ControlledPath, I_prime: np.ndarray, rp: RoughPath) -> ControlledPath:
    """Change of controlling path: K controlled by Y becomes controlled
    by rp via the Gubinelli derivative I' of Y w.r.t. rp (shape
    (N+1, dim_Y, d))."""
    gub = np.einsum("k...m,kmd->k...d", K.gubinelli, I_prime)
    return ControlledPath(rp, K.trace, gub)


def leibniz(K: ControlledPath, H: ControlledPath) -> ControlledPath:
    """Product of a scalar controlled path K with H (same driver):
    trace K H, Gubinelli derivative K' H + K H'."""
    if K.value_shape != ():
        raise ValueError("leibniz expects scalar K")
    kt = K.trace.reshape((-1,) + (1,) * len(H.value_shape))
    trace = kt * H.trace
    gub = (kt[..., None] * H.gubinelli
           + H.trace[..., None] * K.gubinelli.reshape((-1,) + (1,) * len(H.value_shape) + (K.reference.dim,)))
    return ControlledPath(H.reference, trace, gub)


def kw_bracket_of_integral(H: ControlledPath, rp: RoughPath):
    """Kunita-Watanabe identity: the bracket of the lifted integral
    equals int H^i_a H^j_b d[X]^{ab}.  Returns (lhs, rhs) cumulative
    bracket paths for comparison."""
    _, _, as_rough = rough_integral(H, rp)
    lhs = np.concatenate([np.zeros((1,) + as_rough.level2.shape[1:]),
                          np.cumsum(bracket(as_rough), axis=0)])
    br = bracket(rp)
    integ = np.einsum("kia,kjb,kab->kij", H.trace[:-1], H.trace[:-1], br)
    rhs = np.concatenate([np.zeros((1,) + integ.shape[1:]), np.cumsum(integ, axis=0)])
    return lhs, rhs


def associativity_check(K: ControlledPath, H: ControlledPath, rp: RoughPath) -> float:
    """Residual of int K dY = int (K * I') . H dX with Y the rough lift
    of I = int H dX and I' = H.

    K must be an (e, e')-integrand controlled by Y's trace.
    """
    _, _, Y = rough_integral(H, rp)
    Ky = ControlledPath(Y, K.trace, K.gubinelli)
    lhs, _, _ = rough_integral(Ky, Y)
    # (K * I') . H : trace K H, Gubinelli K'(H, H) + K H'
    trace = np.einsum("kic,kca->kia", K.trace, H.trace)
    gub = (np.einsum("kicm,kmb,kca->kiab", K.gubinelli, H.trace, H.trace)
           + np.einsum("kic,kcab->kiab", K.trace, H.gubinelli))
    M = ControlledPath(rp, trace, gub)
    rhs, _, _ = rough_integral(M, rp)
    return float(np.abs(lhs - rhs).max())


def pushpull_defect(g: Callable, Dg: Callable, D2g: Callable,
                    H: ControlledPath, rp: RoughPath) -> float:
    """Residual of the adjointness-defect identity
    int H d(g_* X) - int g^* H dX - (1/2) int H_c d2g^c d[X] = 0.
    H is an integrand controlled by g_* rp."""
    grp = pushforward_rough(g, Dg, rp)
    Hg = ControlledPath(grp, H.trace, H.gubinelli)
    v1, _, _ = rough_integral(Hg, grp)
    v2, _, _ = rough_integral(pullback(g, Dg, D2g, H, rp), rp)
    hess = np.array([np.einsum("ec,cab->eab", H.trace[k],
                               np.asarray(D2g(x), dtype=float))
                     for k, x in enumerate(rp.trace)])
    v3 = 0.5 * young_integral(hess, bracket(rp))[-1]
    return float(np.abs(v1 - v2 - v3).max())
