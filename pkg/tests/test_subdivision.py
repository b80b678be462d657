import math

import numpy as np
import pytest

from roughforms import geometry as G
from roughforms import subdivision as S
from roughforms.errors import BudgetExceededError, UnsupportedDimensionError


def equilateral_triangle():
    return G.Simplex([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def unit_right_triangle():
    return G.Simplex([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def vertex_multiset(simplices, decimals=12):
    out = {}
    for s in simplices:
        key = np.round(np.asarray(s.vertices), decimals).tobytes()
        out[key] = out.get(key, 0) + 1
    return out


# ---------------------------------------------------------------------------
# edgewise children


def test_edgewise_segment_halves():
    seg = G.Simplex([[0.0], [1.0]])
    kids = S.edgewise_children(seg)
    assert len(kids) == 2
    assert vertex_multiset(kids) == vertex_multiset(
        [G.Simplex([[0.0], [0.5]]), G.Simplex([[0.5], [1.0]])]
    )
    for kid in kids:
        assert G.coordinate_projection(kid, (1,)) == pytest.approx(0.5)


def test_edgewise_triangle_is_midpoint_refinement():
    tri = unit_right_triangle()
    kids = S.edgewise_children(tri)
    assert len(kids) == 4
    # vertex set = original vertices plus edge midpoints
    all_pts = {tuple(v) for kid in kids for v in kid.vertices}
    assert all_pts == {
        (0.0, 0.0),
        (1.0, 0.0),
        (0.0, 1.0),
        (0.5, 0.0),
        (0.0, 0.5),
        (0.5, 0.5),
    }
    parent_ecc = G.eccentricity(tri)
    for kid in kids:
        assert G.diameter(kid) == pytest.approx(G.diameter(tri) / 2, rel=1e-12)
        assert G.eccentricity(kid) == pytest.approx(parent_ecc, rel=1e-12)
        # orientation preserved: positive signed area, same as parent
        assert G.coordinate_projection(kid, (1, 2)) > 0
    total = sum(G.volume(kid) for kid in kids)
    assert total == pytest.approx(G.volume(tri), rel=1e-12)


def test_edgewise_children_count_and_volume_k3():
    rng = np.random.default_rng(1)
    s = G.Simplex(rng.normal(size=(4, 3)))
    kids = S.edgewise_children(s)
    assert len(kids) == 8
    assert sum(G.volume(kid) for kid in kids) == pytest.approx(
        G.volume(s), rel=1e-10
    )
    # every child volume is exactly a 2^-k share (chart cells are unimodular)
    for kid in kids:
        assert G.volume(kid) == pytest.approx(G.volume(s) / 8, rel=1e-10)
    for kid in kids:
        assert G.diameter(kid) <= G.diameter(s) * 0.75


def test_edgewise_rejects_k4():
    rng = np.random.default_rng(2)
    with pytest.raises(UnsupportedDimensionError):
        S.edgewise_children(G.Simplex(rng.normal(size=(5, 5))))


def test_edgewise_orientation_preserved_in_3d():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(4, 3))
    s = G.Simplex(v)
    sign_parent = np.sign(np.linalg.det(v[1:] - v[0]))
    for kid in S.edgewise_children(s):
        kv = kid.vertices
        assert np.sign(np.linalg.det(kv[1:] - kv[0])) == sign_parent


# ---------------------------------------------------------------------------
# barycentric children


def test_barycentric_counts():
    seg = G.Simplex([[0.0], [1.0]])
    assert len(S.barycentric_children(seg)) == 2
    kids = S.barycentric_children(unit_right_triangle())
    assert len(kids) == 6
    assert sum(G.volume(kid) for kid in kids) == pytest.approx(0.5, rel=1e-12)
    for kid in kids:
        assert G.coordinate_projection(kid, (1, 2)) > 0


# ---------------------------------------------------------------------------
# iterate


def test_iterate_zero_levels_is_identity():
    tri = unit_right_triangle()
    out = S.iterate(S.EDGEWISE, tri, 0)
    assert len(out) == 1
    assert out[0] == tri


def test_iterate_cardinality_power_law():
    out = S.iterate(S.EDGEWISE, unit_right_triangle(), 3)
    assert len(out) == 64
    vols = sum(G.volume(s) for s in out)
    assert vols == pytest.approx(0.5, rel=1e-10)


def test_iterate_budget_cap():
    with pytest.raises(BudgetExceededError):
        S.iterate(S.EDGEWISE, unit_right_triangle(), 3, max_children=63)


def test_semigroup_law():
    tri = equilateral_triangle()
    whole = S.iterate(S.EDGEWISE, tri, 3)
    two_then_one = [
        kid for w in S.iterate(S.EDGEWISE, tri, 2) for kid in S.edgewise_children(w)
    ]
    assert vertex_multiset(whole) == vertex_multiset(two_then_one)
    whole_b = S.iterate(S.BARYCENTRIC, tri, 2)
    one_then_one = [
        kid
        for w in S.barycentric_children(tri)
        for kid in S.barycentric_children(w)
    ]
    assert vertex_multiset(whole_b) == vertex_multiset(one_then_one)


def test_partition_property():
    # 1e4 uniform points in the triangle, each inside exactly one child
    tri = unit_right_triangle()
    rng = np.random.default_rng(5)
    e = rng.exponential(size=(10_000, 3))
    bary = e / e.sum(axis=1, keepdims=True)
    pts = bary @ tri.vertices
    kids = S.edgewise_children(tri)
    counts = np.zeros(len(pts), dtype=int)
    for kid in kids:
        v = kid.vertices
        m = (v[1:] - v[0]).T
        sol = np.linalg.solve(
            m, (pts - v[0]).T
        ).T
        lam = np.concatenate([1 - sol.sum(axis=1, keepdims=True), sol], axis=1)
        counts += np.all(lam >= -1e-9, axis=1)
    assert np.all(counts == 1)


# ---------------------------------------------------------------------------
# stats


def test_stats_edgewise_equilateral_self_similar():
    st = S.stats(S.EDGEWISE, equilateral_triangle(), 4)
    assert st.cardinality == 4
    assert st.norm_m == pytest.approx(1.0, abs=1e-9)
    assert st.c_m == pytest.approx(0.5, abs=1e-12)
    assert st.strongly_regular_observed
    assert all(r == pytest.approx(1.0, rel=1e-9) for r in st.vol_ratio_growth)


def test_stats_edgewise_segment():
    st = S.stats(S.EDGEWISE, G.Simplex([[0.2], [0.9]]), 5)
    assert st.cardinality == 2
    assert st.c_m == pytest.approx(0.5, abs=1e-12)
    assert st.norm_m == pytest.approx(1.0, abs=1e-12)


def test_stats_edgewise_k3_eccentricity_pinned():
    # regression pin: on the unit right 3-simplex the max eccentricity ratio
    # locks onto a fixed shape family; measured sup over 6 levels is 1.8371
    s = G.Simplex(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    st = S.stats(S.EDGEWISE, s, 6)
    assert st.cardinality == 8
    assert st.c_m < 1.0
    assert st.norm_m == pytest.approx(1.8371173, rel=1e-6)
    assert st.norm_m <= 10.0
    # the ratio reaches its sup immediately and stays there: shape closure
    assert st.ecc_ratio_by_level[-1] == pytest.approx(st.norm_m, rel=1e-9)
    assert st.strongly_regular_observed


def test_stats_barycentric_norm_strictly_increasing():
    st = S.stats(S.BARYCENTRIC, equilateral_triangle(), 6)
    ecc = st.ecc_ratio_by_level
    assert all(b > a for a, b in zip(ecc, ecc[1:]))
    assert not st.strongly_regular_observed
    assert st.records[0]["card"] == 6


def test_stats_json_record_fields():
    st = S.stats(S.EDGEWISE, unit_right_triangle(), 2)
    rec = st.records[1]
    assert set(rec) == {"scheme", "k", "level", "card", "c", "ecc_ratio", "vol_ratio"}
    assert rec["level"] == 2
    assert rec["card"] == 16
    blob = st.to_json()
    assert blob["scheme"] == "edgewise"
    assert blob["cardinality"] == 4


# ---------------------------------------------------------------------------
# invariant: regular sequences sum diameters geometrically


def test_regular_sequence_diameter_sums():
    # sum of diam^gamma over level n children obeys the geometric bound
    # norm * c^(n(gamma-k)) * diam^gamma for gamma = k + 0.5
    for k, builder in (
        (1, G.Simplex([[0.1], [0.9]])),
        (2, unit_right_triangle()),
        (3, G.Simplex(np.random.default_rng(7).normal(size=(4, 3)))),
    ):
        st = S.stats(S.EDGEWISE, builder, 4)
        gamma = k + 0.5
        pts = builder.vertices[None]
        d0 = G.diameter(builder)
        for n in range(1, 7):
            pts = S.EDGEWISE.children_array(pts)
            total = float(np.sum(G.diameter_array(pts) ** gamma))
            bound = st.norm_m * st.c_m ** (n * (gamma - k)) * d0**gamma
            assert total <= bound * (1 + 1e-9)


def test_mass_subadditive_under_scheme_children():
    rng = np.random.default_rng(9)
    for k in (1, 2, 3):
        v = rng.normal(size=(k + 1, 3 if k < 3 else 3))
        s = G.Simplex(v)
        s = G.Simplex(v / (G.diameter(s) * 1.25))
        for scheme in (S.EDGEWISE, S.BARYCENTRIC):
            if scheme is S.EDGEWISE and k > 3:
                continue
            kids = scheme.children(s)
            for alpha in (0.3, 0.7, 1.0):
                whole = G.mass_value(s, alpha)
                parts = sum(G.mass_value(kid, alpha) for kid in kids)
                assert whole <= parts + 1e-9


# ---------------------------------------------------------------------------
# Whitney cubes


def test_whitney_covers_unit_right_triangle():
    dec = S.whitney_cubes(unit_right_triangle(), 10)
    assert dec.covered_volume >= 0.99 * dec.simplex_volume
    assert dec.covered_volume <= dec.simplex_volume


def sampled_center_distance(flat_vertices, center, m=4000):
    """Distance of a point to the simplex boundary, via dense edge sampling."""
    k = flat_vertices.shape[1]
    best = math.inf
    for i in range(k + 1):
        face = np.delete(flat_vertices, i, axis=0)
        if k == 1:
            pts = face
        else:
            t = np.linspace(0.0, 1.0, m)[:, None]
            pts = face[0] * (1 - t) + face[1] * t
        d = np.linalg.norm(pts - center, axis=1)
        best = min(best, float(d.min()))
    return best


def test_whitney_distance_sandwich():
    tri = unit_right_triangle()
    dec = S.whitney_cubes(tri, 6)
    assert len(dec.cubes) > 0
    rt_k = math.sqrt(2)
    for (n, _), (n2, corner), dist in zip(
        dec.cubes, dec.flat_corners, dec.distances
    ):
        assert n == n2
        side = 2.0**-n
        assert side * rt_k <= dist <= 4 * side * rt_k
        center = corner + side / 2
        est = sampled_center_distance(dec.flat_vertices, center)
        assert est == pytest.approx(dist, abs=2e-3)
        # the cube itself stays strictly inside the simplex
        assert est - side * math.sqrt(2) / 2 > 0


def test_whitney_cubes_disjoint_and_inside():
    tri = unit_right_triangle()
    dec = S.whitney_cubes(tri, 7)
    rng = np.random.default_rng(11)
    e = rng.exponential(size=(4000, 3))
    bary = e / e.sum(axis=1, keepdims=True)
    pts = bary @ dec.flat_vertices
    hits = np.zeros(len(pts), dtype=int)
    for (n, _), (_, corner) in zip(dec.cubes, dec.flat_corners):
        side = 2.0**-n
        inside = np.all((pts > corner) & (pts < corner + side), axis=1)
        hits += inside
    assert hits.max() <= 1
    # covered fraction of random points roughly matches covered volume
    frac = hits.mean()
    assert frac == pytest.approx(dec.covered_volume / dec.simplex_volume, abs=0.03)


def test_whitney_segment_is_dyadic():
    # 1d Whitney of an interval: a central block, then a bounded number of
    # intervals per level shrinking geometrically toward the endpoints
    seg = G.Simplex([[0.0, 0.0], [1.0, 0.0]])
    dec = S.whitney_cubes(seg, 8)
    levels = sorted(dec.level_counts)
    for n in levels[1:]:
        assert dec.level_counts[n] <= 4
    assert dec.covered_volume < 1.0
    assert dec.covered_volume > 0.98
    for (n, cube), dist in zip(dec.cubes, dec.distances):
        assert 2.0**-n <= dist <= 4 * 2.0**-n
    # intervals tile without overlap
    ends = sorted((c[0], c[0] + 2.0**-n) for n, c in dec.flat_corners)
    for (a0, a1), (b0, b1) in zip(ends, ends[1:]):
        assert b0 >= a1 - 1e-12


def test_whitney_ambient_cubes_sit_in_the_simplex_plane():
    # a tilted segment in R^2: cube bases must lie on it
    seg = G.Simplex([[0.0, 0.0], [1.0, 1.0]])
    dec = S.whitney_cubes(seg, 6)
    for (n, cube) in dec.cubes:
        assert cube.base[0] == pytest.approx(cube.base[1], abs=1e-12)
        assert cube.frame.shape == (1, 2)


# ---------------------------------------------------------------------------
# partition of unity


def test_partition_of_unity_sums_to_one():
    tri = unit_right_triangle()
    parts = S.whitney_partition(tri, 6)
    dec = S.whitney_cubes(tri, 6)
    rng = np.random.default_rng(13)
    # draw points inside covered cubes only
    pts = []
    for (n, _), (_, corner) in zip(dec.cubes, dec.flat_corners):
        side = 2.0**-n
        pts.append(corner + rng.random(2) * side)
        if len(pts) >= 100:
            break
    pts = np.array(pts)
    total = np.zeros(len(pts))
    for _, weight in parts:
        total += weight(pts)
    assert np.allclose(total, 1.0, atol=1e-8)


def test_partition_vanishes_outside_dilated_cube():
    tri = unit_right_triangle()
    parts = S.whitney_partition(tri, 5)
    dec = S.whitney_cubes(tri, 5)
    rng = np.random.default_rng(17)
    probe = rng.random((500, 2))
    for ((n, cube), (_, corner)), (_, weight) in zip(
        zip(dec.cubes, dec.flat_corners), parts
    ):
        side = 2.0**-n
        center = corner + side / 2
        vals = weight(probe)
        outside = np.any(np.abs(probe - center) >= (2.0 / 3.0) * side, axis=1)
        assert np.all(vals[outside] == 0.0)


def test_partition_gradient_scales_like_level():
    # finite-difference sup of |grad phi| over the covered region obeys
    # C * 2^n with one constant C across levels; the quotient is smooth
    # there because the raw bumps sum to >= 1 on every covered point
    tri = unit_right_triangle()
    parts = S.whitney_partition(tri, 7)
    dec = S.whitney_cubes(tri, 7)
    corners = np.array([c for _, c in dec.flat_corners])
    sides = np.array([2.0**-n for n, _ in dec.flat_corners])

    def covered(pts):
        inside = np.zeros(len(pts), dtype=bool)
        for c, s in zip(corners, sides):
            inside |= np.all((pts >= c) & (pts <= c + s), axis=1)
        return inside

    rng = np.random.default_rng(19)
    by_level = {}
    h = 1e-6
    for ((n, _), (_, corner)), (_, weight) in zip(
        zip(dec.cubes, dec.flat_corners), parts
    ):
        side = 2.0**-n
        base = corner - side / 6 + rng.random((60, 2)) * side * (4 / 3)
        base = base[covered(base)]
        if len(base) == 0:
            continue
        g = np.zeros(len(base))
        for j in range(2):
            step = np.zeros(2)
            step[j] = h
            g += ((weight(base + step) - weight(base - step)) / (2 * h)) ** 2
        by_level.setdefault(n, 0.0)
        by_level[n] = max(by_level[n], float(np.sqrt(g).max()))
    levels = [n for n in sorted(by_level) if by_level[n] > 0]
    assert len(levels) >= 3
    cs = [by_level[n] / 2.0**n for n in levels]
    assert max(cs) <= 10 * min(cs)


def test_partition_rejects_unflat_cases():
    with pytest.raises(UnsupportedDimensionError):
        S.whitney_partition(G.Simplex([[0.0, 0.0], [1.0, 1.0]]), 5)
