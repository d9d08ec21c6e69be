"""RDE solver dY = F(Y, X) dX for rough drivers with p < 3.

The step map is the explicit second-order Davie scheme
Y_{t+1} = Y_t + F X_{st} + (d_x F + F d_y F) XX_{st};
convergence is obtained by Richardson comparison across dyadic
coarsenings of the driver grid (level-2 data is Chen-folded when
coarsening, so every level is consistent).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rough_core import RoughPath, bracket

__all__ = ["VectorFieldFamily", "RdeSolution", "solve", "solve_linear",
           "transform_driver", "joint_bracket"]

BLOWUP_GUARD = 1e8


@dataclass
class VectorFieldFamily:
    """F(y, x) -> (e, d) with partials dF_x[k, b, a] = dF^k_b / dx^a and
    dF_y[k, b, h] = dF^k_b / dy^h.  A linear form (A, b) with
    F^k_g = A^k_{gh}(x) y^h + b^k_g(x) may be attached."""

    F: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dF_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dF_y: Callable[[np.ndarray, np.ndarray], np.ndarray]
    A: Optional[Callable] = None
    b: Optional[Callable] = None

    def davie_coeff(self, y, x):
        """Second-order Davie coefficient G[k, a, b] contracted against
        XX^{ab}: G = d_a F^k_b + F^h_a d_h F^k_b."""
        F = np.asarray(self.F(y, x), dtype=float)
        dx = np.asarray(self.dF_x(y, x), dtype=float)
        dy = np.asarray(self.dF_y(y, x), dtype=float)
        return np.transpose(dx, (0, 2, 1)) + np.einsum("kbh,ha->kab", dy, F)

    def check_linear_form(self, probes: int = 8, seed: int = 0, tol: float = 1e-12):
        if self.A is None:
            return
        rng = np.random.default_rng(seed)
        for _ in range(probes):
            x = rng.normal(size=3)
            y = rng.normal(size=np.asarray(self.b(x)).shape[0])
            lin = np.einsum("kgh,h->kg", np.asarray(self.A(x)), y) + np.asarray(self.b(x))
            direct = np.asarray(self.F(y, x))
            if np.abs(lin - direct).max() > tol:
                raise ValueError("declared linear form disagrees with F")


@dataclass
class RdeSolution:
    times: np.ndarray
    trace: np.ndarray
    gubinelli: np.ndarray      # Y' = F(Y, X), shape (N+1, e, d)
    status: str                # "global" | "exploded"
    t_star: Optional[float]
    driver: RoughPath

    def as_rough(self) -> RoughPath:
        """Davie lift of the solution: level-2 F (x) F applied to XX."""
        level2 = np.einsum("kia,kjb,kab->kij",
                           self.gubinelli[:-1], self.gubinelli[:-1],
                           self.driver.level2)
        return RoughPath(self.times, self.trace, level2, self.driver.p,
                         self.driver.control)

    def davie_residual_slope(self, F: VectorFieldFamily) -> float:
        """Log-log slope of the Davie remainder across dyadic spans."""
        rp = self.driver
        n = rp.n_intervals
        hs, rs = [], []
        step = 1
        while step <= n // 4:
            worst, span = 0.0, 0.0
            for k in range(0, n - step + 1, step):
                x2 = rp.level2_between(k, k + step)
                dx = rp.increment(k, k + step)
                pred = (F.F(self.trace[k], rp.trace[k]) @ dx
                        + np.einsum("iab,ab->i",
                                    F.davie_coeff(self.trace[k], rp.trace[k]), x2))
                r = np.linalg.norm(self.trace[k + step] - self.trace[k] - pred)
                worst = max(worst, r)
                span = max(span, rp.times[k + step] - rp.times[k])
            if worst > 1e-15:
                hs.append(span)
                rs.append(worst)
            step *= 2
        if len(hs) < 3:
            return np.inf
        return np.polyfit(np.log(hs), np.log(rs), 1)[0]


def _davie_sweep(F: VectorFieldFamily, rp: RoughPath, y0: np.ndarray, stride: int,
                 extra_level2: Optional[np.ndarray] = None):
    """One pass of the Davie scheme on the grid subsampled by stride.

    extra_level2 (per fine interval) is Young-added to the driver's
    second-order data (used by transform_driver).
    """
    n = rp.n_intervals
    idx = list(range(0, n + 1, stride))
    if idx[-1] != n:
        idx.append(n)
    y = np.array(y0, dtype=float)
    out = {0: y.copy()}
    exploded_at = None
    for a, bidx in zip(idx[:-1], idx[1:]):
        x = rp.trace[a]
        dx = rp.increment(a, bidx)
        x2 = rp.level2_between(a, bidx)
        if extra_level2 is not None:
            x2 = x2 + extra_level2[a:bidx].sum(axis=0)
        y = (y + np.asarray(F.F(y, x), dtype=float) @ dx
             + np.einsum("iab,ab->i", F.davie_coeff(y, x), x2))
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > BLOWUP_GUARD:
            exploded_at = rp.times[bidx]
            out[bidx] = y.copy()
            break
        out[bidx] = y.copy()
    return out, exploded_at


def solve(F: VectorFieldFamily, rp: RoughPath, y0, tol: float = 1e-10,
          extra_level2: Optional[np.ndarray] = None) -> RdeSolution:
    """Davie solve with Richardson stopping over dyadic coarsenings.

    The finest admissible resolution is the driver grid itself; if the
    Richardson gap at full resolution still exceeds tol the full-grid
    solution is returned (the grid is the model's ground truth).
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    n = rp.n_intervals
    strides = []
    s = 1
    while s < n:
        strides.append(s)
        s *= 2
    strides.append(min(s, n))
    strides = sorted(set(strides), reverse=True)
    prev = None
    for stride in strides:
        sol, t_star = _davie_sweep(F, rp, y0, stride, extra_level2)
        if t_star is not None:
            break
        if prev is not None and stride >= 1:
            common = sorted(set(sol) & set(prev))
            gap = max(np.linalg.norm(sol[k] - prev[k]) for k in common)
            if gap < tol and stride == 1:
                break
        prev = sol
        if stride == 1:
            break
    if t_star is not None and 0 not in sol:
        sol[0] = y0
    full_t, full_y = [], []
    for k in range(n + 1):
        if k in sol:
            full_t.append(rp.times[k])
            full_y.append(sol[k])
        elif t_star is not None and rp.times[k] >= t_star:
            break
    times = np.array(full_t)
    trace = np.array(full_y)
    gub = np.array([np.asarray(F.F(y, rp.trace[k]), dtype=float)
                    for k, y in zip(range(times.size), trace)])
    status = "global" if t_star is None else "exploded"
    return RdeSolution(times, trace, gub, status, t_star, rp)


def solve_linear(A: Callable, b: Callable, rp: RoughPath, y0,
                 dA: Optional[Callable] = None, db: Optional[Callable] = None) -> RdeSolution:
    """Linear RDE dY^k = (A^k_{gh}(x) Y^h + b^k_g(x)) dX^g; always
    global (no blow-up guard triggers in exact arithmetic).

    dA[k, g, h, a] and db[k, g, a] are the x-partials; they default to
    zero (constant coefficients).
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    e = y0.size
    d = rp.dim

    def Ffun(y, x):
        return np.einsum("kgh,h->kg", np.asarray(A(x), dtype=float), y) \
            + np.asarray(b(x), dtype=float)

    def dFx(y, x):
        if dA is None and db is None:
            return np.zeros((e, d, d))
        out = np.zeros((e, d, d))
        if dA is not None:
            out += np.einsum("kgha,h->kga", np.asarray(dA(x), dtype=float), y)
        if db is not None:
            out += np.asarray(db(x), dtype=float)
        return out

    fam = VectorFieldFamily(Ffun, dFx, lambda y, x: np.asarray(A(x), dtype=float),
                            A=A, b=b)
    sol = solve(fam, rp, y0)
    sol.status = "global"
    sol.t_star = None
    return sol


def transform_driver(F: VectorFieldFamily, rp1: RoughPath, D: np.ndarray,
                     y0, tol: float = 1e-10) -> RdeSolution:
    """Solve dY = F d(rp2) written through rp1: the Davie step keeps
    rp1's data and Young-adds (d_x F + F d_y F) against D = XX_2 - XX_1
    (per-interval increments, shape (N, d, d))."""
    return solve(F, rp1, y0, tol=tol, extra_level2=np.asarray(D, dtype=float))


def joint_bracket(sol: RdeSolution) -> tuple:
    """Bracket transport d[Y]^{ij} = F^i_a F^j_b d[X]^{ab}.

    Returns (integrated path, bracket of the Davie lift) for
    cross-checking; the two agree to o(omega).
    """
    br = bracket(sol.driver)[:sol.trace.shape[0] - 1]
    incs = np.einsum("kia,kjb,kab->kij", sol.gubinelli[:-1], sol.gubinelli[:-1], br)
    lhs = np.concatenate([np.zeros((1,) + incs.shape[1:]), np.cumsum(incs, axis=0)])
    rhs_inc = bracket(sol.as_rough())
    rhs = np.concatenate([np.zeros((1,) + rhs_inc.shape[1:]), np.cumsum(rhs_inc, axis=0)])
    return lhs, rhs
