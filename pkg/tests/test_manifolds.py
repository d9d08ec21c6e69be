"""Built-in manifold registry: atlases, embeddings, and coefficient tables."""

import numpy as np
import pytest

from roughmanifold.manifolds import (
    get_manifold, euclidean, circle, sphere2, torus2, r3_torsion_connection,
    r3_foliated, connection_from_table,
)
from roughmanifold.geometry import levi_civita


def test_registry_names():
    for name in ("S1", "S2", "T2", "r3-torsion", "r3-foliated"):
        assert get_manifold(name).name == name
    assert get_manifold("s2").name == "S2"
    assert get_manifold("euclidean-4").dim == 4
    with pytest.raises(KeyError):
        get_manifold("mobius")


def test_chart_roundtrips():
    cases = [
        (circle(), "angle", [np.array([0.3]), np.array([-2.0])]),
        (sphere2(), "north", [np.array([0.0, 0.0]), np.array([0.7, -0.4])]),
        (sphere2(), "south", [np.array([0.2, 0.9])]),
        (r3_foliated(), "spherical", [np.array([1.5, 1.0, 0.4])]),
    ]
    for mfd, cid, pts in cases:
        ch = mfd.charted.charts[cid]
        for x in pts:
            y = np.asarray(ch.iota(x), dtype=float)
            back = np.asarray(ch.phi(y), dtype=float)
            assert np.abs(back - x).max() < 1e-10


def test_diota_matches_finite_differences():
    h = 1e-6
    for mfd, cid, x in [
        (circle(), "angle", np.array([0.9])),
        (sphere2(), "north", np.array([0.4, -0.7])),
        (sphere2(), "south", np.array([-0.3, 0.2])),
    ]:
        ch = mfd.charted.charts[cid]
        J = np.asarray(ch.diota(x), dtype=float)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd = (np.asarray(ch.iota(x + e)) - np.asarray(ch.iota(x - e))) / (2 * h)
            assert np.abs(J[:, j] - fd).max() < 1e-8
        H = np.asarray(ch.d2iota(x), dtype=float)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd = (np.asarray(ch.diota(x + e)) - np.asarray(ch.diota(x - e))) / (2 * h)
            assert np.abs(H[:, :, j] - fd).max() < 1e-7


def test_sphere_transition_consistency():
    mfd = sphere2()
    north, south = mfd.charted.charts["north"], mfd.charted.charts["south"]
    tmap, tjac, thess = north.transitions["south"]
    u = np.array([0.9, -0.5])
    v = np.asarray(tmap(u))
    # transition equals phi_south o iota_north
    assert np.abs(v - np.asarray(south.phi(north.iota(u)))).max() < 1e-12
    h = 1e-6
    J = np.asarray(tjac(u))
    Hs = np.asarray(thess(u))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (np.asarray(tmap(u + e)) - np.asarray(tmap(u - e))) / (2 * h)
        assert np.abs(J[:, j] - fd).max() < 1e-7
        fdj = (np.asarray(tjac(u + e)) - np.asarray(tjac(u - e))) / (2 * h)
        assert np.abs(Hs[:, :, j] - fdj).max() < 1e-6


def test_chart_contains_radius_rule():
    ch = sphere2().charted.charts["north"]
    assert ch.contains(np.array([1.0, 1.0]))       # norm < 0.8 * 2
    assert not ch.contains(np.array([1.7, 0.0]))


def test_chart_for_prefers_small_coordinates():
    mfd = sphere2()
    # projection from the north pole sends points near the north pole
    # far out, so the south-pole-centred "south" chart is preferred there
    y = np.array([0.1, 0.0, np.sqrt(1 - 0.01)])
    assert mfd.charted.chart_for_ambient(y) == "south"
    assert mfd.charted.chart_for_ambient(-y) == "north"


def test_torus_wraps_fundamental_domain():
    mfd = torus2()
    ch = mfd.charted.charts["main"]
    x = np.asarray(ch.phi(np.array([1.3, -0.4])))
    assert np.abs(x - np.array([0.3, -0.4])).max() < 1e-12
    assert np.all(np.abs(x) <= 0.5)


def test_sphere_metric_is_pullback_of_ambient():
    mfd = sphere2()
    ch = mfd.charted.charts["north"]
    for u in (np.array([0.0, 0.0]), np.array([0.6, -0.3])):
        J = np.asarray(ch.diota(u))
        assert np.abs(J.T @ J - mfd.metric.at("north", u)).max() < 1e-12


def test_sphere_connection_is_levi_civita_of_metric():
    mfd = sphere2()
    lc = levi_civita(mfd.metric, "north")
    u = np.array([0.5, 0.2])
    assert np.abs(lc.Gamma("north", u) - mfd.connection.Gamma("north", u)).max() < 1e-10
    assert np.abs(lc.dGamma("north", u) - mfd.connection.dGamma("north", u)).max() < 1e-8


def test_connection_from_table_polynomial():
    table = {"dim": 2, "entries": [
        {"g": 0, "a": 1, "b": 1,
         "terms": [{"coef": -1.0, "powers": [1, 0]}]},
        {"g": 1, "a": 0, "b": 1,
         "terms": [{"coef": 2.0, "powers": [0, 2]}]},
    ]}
    conn = connection_from_table(table)
    x = np.array([1.5, 0.5])
    G = conn.Gamma("main", x)
    assert G[0, 1, 1] == -1.5
    assert G[1, 0, 1] == 2.0 * 0.25
    dG = conn.dGamma("main", x)
    assert dG[0, 0, 1, 1] == -1.0
    assert dG[1, 1, 0, 1] == 4.0 * 0.5
    assert np.abs(dG).sum() == 1.0 + 2.0


def test_connection_from_table_validates_powers():
    with pytest.raises(ValueError):
        connection_from_table({"dim": 2, "entries": [
            {"g": 0, "a": 0, "b": 0, "terms": [{"coef": 1.0, "powers": [1]}]}]})


def test_euclidean_custom_gamma_requires_derivative():
    with pytest.raises(ValueError):
        euclidean(2, gamma=lambda x: np.zeros((2, 2, 2)))


def test_from_ambient_picks_valid_chart():
    mfd = sphere2()
    y = np.array([0.0, 0.0, -1.0])   # south pole: the south chart is singular
    cid, x = mfd.from_ambient(y)
    assert cid == "north"
    assert np.abs(x).max() < 1e-12
    back = mfd.to_ambient(cid, x)
    assert np.abs(back - y).max() < 1e-12


def test_torsion_manifold_geodesics_are_straight():
    # the antisymmetric part never enters the geodesic equation
    mfd = r3_torsion_connection()
    G = mfd.connection.Gamma("main", np.array([0.1, 0.2, 0.3]))
    v = np.array([0.5, -1.0, 2.0])
    assert np.abs(np.einsum("kab,a,b->k", G, v, v)).max() < 1e-14
