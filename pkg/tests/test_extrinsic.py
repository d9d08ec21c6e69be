"""Ambient-coordinate constrained integrals, RDEs, and the bridge to
the chart-based formulation."""

import numpy as np
import pytest

from roughmanifold.manifolds import sphere2
from roughmanifold.geometry import EmbeddedManifold
from roughmanifold.extrinsic import (
    is_constrained, constrained_integral, correction_ambient,
    AmbientFieldFamily, constrained_rde, projection_construction,
    intrinsic_extrinsic_equiv,
)
from roughmanifold.controlled import ControlledPath
from roughmanifold.rough_core import smooth_lift
from roughmanifold.stochastic import sample_bm, ito_lift


def _sphere_smooth(n=513):
    def path(t):
        v = np.array([np.cos(2 * t), np.sin(2 * t) * np.cos(t),
                      0.4 + 0.3 * np.sin(3 * t)])
        return v / np.linalg.norm(v)

    ts = np.linspace(0.0, 1.0, n)
    return smooth_lift(ts, path, 3, sub=64)


def _sphere_bm_ratio1(seed=3, n=2 ** 13):
    # ratio-1 Ito lift of a normalised Brownian wobble: level2 = 0,
    # bracket = dx dx^T, trace exactly on the sphere
    t, w = sample_bm(3, 1.0, n, seed)
    base = np.stack([np.cos(t), np.sin(t), 0.3 + 0 * t], axis=1)
    amb = base + 0.4 * w
    amb = amb / np.linalg.norm(amb, axis=1)[:, None]
    return ito_lift(t, amb, n)


def _smooth_integrand(rp):
    tr = np.array([[[x[1], -x[0], x[2] ** 2]] for x in rp.trace])
    gub = np.array([[[[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0],
                      [0.0, 0.0, 2.0 * x[2]]]] for x in rp.trace])
    return ControlledPath(rp, tr, gub)


# constraint certification


def test_is_constrained_smooth_sphere_path():
    rep = is_constrained(_sphere_smooth(), sphere2().embedding)
    assert rep["constrained"]
    assert rep["trace_max"] < 1e-12
    assert rep["taylor_slope"] > 1.5
    assert rep["normal_level2_slope"] > 1.5


def test_is_constrained_sphere_bm_at_grid_tolerance():
    rp = _sphere_bm_ratio1()
    emb = sphere2().embedding
    strict = is_constrained(rp, emb)
    assert strict["trace_max"] < 1e-12
    # the worst-window Taylor residual of a Brownian trace carries the
    # usual modulus correction; certify at a grid-scale tolerance
    assert strict["taylor_max"] < 1e-3
    loose = is_constrained(rp, emb, tol=1e-3)
    assert loose["constrained"]


def test_is_constrained_rejects_free_path():
    t, w = sample_bm(3, 1.0, 2 ** 12, 5)
    rp = ito_lift(t, w + np.array([1.2, 0.0, 0.0]), 256)
    rep = is_constrained(rp, sphere2().embedding)
    assert not rep["constrained"]
    assert rep["trace_max"] > 0.05


# constrained integral


def test_constrained_integral_forms_agree_and_converge():
    emb = sphere2().embedding
    gaps = []
    for n in (129, 513):
        rp = _sphere_smooth(n)
        out = constrained_integral(_smooth_integrand(rp), rp, emb,
                                   agree_tol=1e-2)
        gaps.append(out["form_gap"])
        assert np.array_equal(out["value"], out["pullback_value"])
    assert gaps[1] < gaps[0] / 4
    assert gaps[1] < 1e-4


def test_constrained_integral_raises_on_disagreement():
    # far off the manifold the projection and projector forms diverge
    t, w = sample_bm(3, 1.0, 2 ** 12, 7)
    rp = ito_lift(t, w + np.array([1.5, 0.0, 0.0]), 128)
    with pytest.raises(ValueError):
        constrained_integral(_smooth_integrand(rp), rp,
                             sphere2().embedding, agree_tol=1e-9)


def test_correction_ambient_identity():
    # plain minus constrained equals the projection-hessian bracket term
    emb = sphere2().embedding
    rp = _sphere_bm_ratio1()
    lhs, rhs = correction_ambient(_smooth_integrand(rp), rp, emb,
                                  agree_tol=1e-3)
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    assert np.abs(lhs).max() > 1e-3        # the correction is nonzero
    assert np.abs(lhs - rhs).max() < 1e-4


def test_normal_integrand_contributes_nothing():
    # purely normal integrand H_c = x_c: the projector form kills it
    emb = sphere2().embedding
    rp = _sphere_smooth()
    tr = np.array([[x] for x in rp.trace])
    gub = np.array([[np.eye(3)] for _ in rp.trace])
    out = constrained_integral(ControlledPath(rp, tr, gub), rp, emb,
                               agree_tol=1e-3)
    assert np.abs(out["projector_value"]).max() < 1e-4


# constrained RDE and the projection construction


def test_constrained_rde_identity_coupling_tracks_driver():
    emb = sphere2().embedding
    rp = _sphere_smooth()
    F = AmbientFieldFamily(F=lambda y, x: np.eye(3),
                           dF_x=lambda y, x: np.zeros((3, 3, 3)),
                           dF_y=lambda y, x: np.zeros((3, 3, 3)))
    sol, status, t_star = constrained_rde(F, rp, emb, emb, rp.trace[0])
    assert status == "global" and t_star is None
    assert np.abs(np.linalg.norm(sol.trace, axis=1) - 1.0).max() < 1e-4
    assert np.abs(sol.trace - rp.trace).max() < 1e-4


def test_projection_construction_fixed_point():
    emb = sphere2().embedding
    rp = _sphere_smooth()
    pc = projection_construction(rp, emb)
    assert np.abs(pc.trace - rp.trace).max() < 1e-4
    assert np.abs(np.linalg.norm(pc.trace, axis=1) - 1.0).max() < 1e-6


def test_projection_construction_constrains_free_driver():
    emb = sphere2().embedding
    drifts = []
    for n in (512, 2048):
        t, w = sample_bm(3, 1.0, n, 4)
        rp = ito_lift(t, w + np.array([1.2, 0.0, 0.0]), n)
        pc = projection_construction(rp, emb)
        drifts.append(np.abs(np.linalg.norm(pc.trace, axis=1) - 1.0).max())
    assert drifts[1] < drifts[0]
    assert drifts[1] < 5e-3


def test_two_constraint_extensions_same_projector():
    # |y|^2 - 1 and exp(|y|^2 - 1) - 1 cut out the same sphere; P and
    # the constrained integral agree on the manifold
    def c1(y):
        return np.array([y @ y - 1.0])

    def dc1(y):
        return 2.0 * np.asarray(y, dtype=float)[None, :]

    def c2(y):
        return np.array([np.exp(y @ y - 1.0) - 1.0])

    def dc2(y):
        return 2.0 * np.exp(y @ y - 1.0) * np.asarray(y, dtype=float)[None, :]

    ref = sphere2().embedding
    e1 = EmbeddedManifold("a", 3, 2, c1, dc1, Pi=ref.Pi, dPi=ref.dPi,
                          d2Pi=ref.d2Pi)
    e2 = EmbeddedManifold("b", 3, 2, c2, dc2, Pi=ref.Pi, dPi=ref.dPi,
                          d2Pi=ref.d2Pi)
    rp = _sphere_smooth(129)
    y = rp.trace[5]
    assert np.abs(e1.P(y) - e2.P(y)).max() < 1e-12
    H = _smooth_integrand(rp)
    v1 = constrained_integral(H, rp, e1, agree_tol=1e-2)["value"]
    v2 = constrained_integral(H, rp, e2, agree_tol=1e-2)["value"]
    assert np.abs(v1 - v2).max() < 1e-9


def test_intrinsic_extrinsic_agreement():
    mfd = sphere2()
    rp = _sphere_smooth()
    res = intrinsic_extrinsic_equiv(_smooth_integrand(rp), rp, mfd,
                                    agree_tol=1e-4)
    assert res < 1e-4
