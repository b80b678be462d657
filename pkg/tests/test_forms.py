"""Tests for cochains: smooth forms, products, wedges, pullbacks, norms.

Expected integrals come from an independent quadrature oracle written
against a different simplex parametrization than the library uses, or
from closed-form values derived by hand in the comments.
"""

import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from roughforms import forms, sewing
from roughforms.errors import (
    BudgetExceededError,
    DegenerateFitError,
    ExponentViolationError,
)
from roughforms.geometry import (
    Chain,
    Cube,
    Simplex,
    boundary,
    diameter,
    snap_to_grid,
)
from roughforms.sampling import Box, SamplerSpec
from roughforms.subdivision import EDGEWISE


# ---------------------------------------------------------------------------
# independent quadrature oracle: iterated map t1=u1, t2=u2(1-t1), ... onto
# the unit simplex, then affine transport; deliberately a different
# construction from the package's collapsed rule


def _oracle_nodes(k, order):
    x, w = leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if k == 1:
        return x[:, None], w
    if k == 2:
        u, v = np.meshgrid(x, x, indexing="ij")
        wu, wv = np.meshgrid(w, w, indexing="ij")
        t = np.stack([u.ravel(), (v * (1 - u)).ravel()], axis=1)
        return t, (wu * wv * (1 - u)).ravel()
    if k == 3:
        u, v, s = np.meshgrid(x, x, x, indexing="ij")
        wu, wv, ws = np.meshgrid(w, w, w, indexing="ij")
        t = np.stack(
            [
                u.ravel(),
                (v * (1 - u)).ravel(),
                (s * (1 - u) * (1 - v)).ravel(),
            ],
            axis=1,
        )
        return t, (wu * wv * ws * (1 - u) ** 2 * (1 - v)).ravel()
    raise ValueError(k)


def oracle_integral(components, simplex, order=32):
    """High-order quadrature for the integral of sum_I f_I dx^I."""
    v = simplex.vertices
    k = simplex.k
    nodes, weights = _oracle_nodes(k, order)
    edges = v[1:] - v[0]
    pts = v[0] + nodes @ edges
    total = 0.0
    for idx, fn in components.items():
        cols = [i - 1 for i in idx]
        det = float(np.linalg.det(edges[:, cols]))
        vals = np.asarray(fn(pts), dtype=float)
        total += det * float(np.sum(weights * vals))
    return total


def rand_simplex(rng, k, d, scale=1.0):
    return Simplex(rng.random((k + 1, d)) * scale)


# named coefficient sets mirroring the catalog, for oracle comparison
CATALOG_COMPONENTS = {
    "dx": ({(1,): lambda p: np.ones(p.shape[:-1])}, 2),
    "dy": ({(2,): lambda p: np.ones(p.shape[:-1])}, 2),
    "x_dy": ({(2,): lambda p: p[..., 0]}, 2),
    "y_dx": ({(1,): lambda p: p[..., 1]}, 2),
    "sin_y_dx": ({(1,): lambda p: np.sin(p[..., 1])}, 2),
    "half_rot": (
        {(1,): lambda p: -0.5 * p[..., 1], (2,): lambda p: 0.5 * p[..., 0]},
        2,
    ),
    "area": ({(1, 2): lambda p: np.ones(p.shape[:-1])}, 2),
    "x_area": ({(1, 2): lambda p: p[..., 0]}, 2),
    "dz3": ({(3,): lambda p: np.ones(p.shape[:-1])}, 3),
    "xz_dy": ({(2,): lambda p: p[..., 0] * p[..., 2]}, 3),
    "twist_area": (
        {
            (1, 2): lambda p: p[..., 2],
            (1, 3): lambda p: np.cos(p[..., 1]),
            (2, 3): lambda p: p[..., 0],
        },
        3,
    ),
}


# ---------------------------------------------------------------------------
# smooth forms


def test_constant_dx_on_unit_segment_is_one():
    a = forms.smooth_form({(1,): 1.0}, 1)
    assert a.eval(Simplex([[0.0], [1.0]]), 1e-10) == pytest.approx(1.0)


def test_x_dy_over_triangle_boundary_is_half():
    # edge-by-edge line integral: 0 on the base, 1/2 on the hypotenuse
    # (x dy with x = 1 - t, y = t), 0 on the vertical leg at x = 0
    a = forms.catalog_form("x_dy")
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    v, tail = a.eval_with_tail(boundary(tri), 1e-8)
    assert v == pytest.approx(0.5, abs=1e-8 + tail)


def test_x_area_on_unit_triangle():
    # int_0^1 int_0^{1-x} x dy dx = int_0^1 x(1-x) dx = 1/6
    a = forms.catalog_form("x_area")
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    v, tail = a.eval_with_tail(tri, 1e-9)
    assert abs(v - 1 / 6) <= 1e-9 + tail


def test_smooth_form_matches_oracle_on_random_simplices():
    rng = np.random.default_rng(7)
    comps = {(1,): lambda p: np.sin(p[..., 1]), (2,): lambda p: p[..., 0]}
    a = forms.smooth_form(dict(comps), 2)
    for _ in range(5):
        s = rand_simplex(rng, 1, 2)
        want = oracle_integral(comps, s)
        got, tail = a.eval_with_tail(s, 1e-8)
        assert abs(got - want) <= 1e-8 + tail


def test_volume_form_on_3_simplex():
    a = forms.smooth_form({(1, 2, 3): 1.0}, 3)
    rng = np.random.default_rng(3)
    s = rand_simplex(rng, 3, 3)
    det = np.linalg.det(s.vertices[1:] - s.vertices[0])
    assert a.eval(s, 1e-10) == pytest.approx(det / 6.0)


def test_smooth_form_rejects_bad_indices():
    with pytest.raises(ValueError):
        forms.smooth_form({(2, 1): 1.0}, 2)
    with pytest.raises(ValueError):
        forms.smooth_form({(1,): 1.0, (1, 2): 1.0}, 2)
    with pytest.raises(ValueError):
        forms.smooth_form({(3,): 1.0}, 2)


def test_cochain_is_odd_under_orientation_flip():
    a = forms.catalog_form("x_area")
    rng = np.random.default_rng(11)
    s = rand_simplex(rng, 2, 2)
    assert a.eval(s, 1e-9) == pytest.approx(-a.eval(s.flipped(), 1e-9))


def test_chain_and_cube_evaluation():
    a = forms.catalog_form("dx")
    s = Simplex([[0.0, 0.0], [0.5, 0.25]])
    chain = Chain([(2.0, s), (-1.0, s)])
    assert a.eval(chain, 1e-9) == pytest.approx(a.eval(s, 1e-9))
    cube = Cube([0.2, 0.3], [[1.0, 0.0]], 0.5)
    assert a.eval(cube, 1e-9) == pytest.approx(0.5)


def test_eval_rejects_wrong_dimensions():
    a = forms.catalog_form("dx")
    with pytest.raises(ValueError):
        a.eval(Simplex([[0.0], [1.0]]))


def test_repeated_evaluation_is_bitwise_deterministic():
    a = forms.catalog_form("sin_y_dx")
    s = Simplex([[0.1, 0.4], [0.9, 0.8]])
    v1 = a.eval(s, 1e-8)
    v2 = a.eval(s, 1e-8)
    fresh = forms.catalog_form("sin_y_dx").eval(s, 1e-8)
    assert v1 == v2 == fresh


# ---------------------------------------------------------------------------
# 0-forms and increment forms


def test_zero_form_and_its_coboundary():
    g = forms.HolderFunction(
        lambda p: np.sin(p[..., 0]) + p[..., 1] ** 2, 1.0, 3.0, d=2
    )
    a0 = forms.ZeroFormCochain(g)
    assert a0.eval(Simplex([[0.5, 2.0]]), 1e-12) == pytest.approx(
        math.sin(0.5) + 4.0
    )
    da = forms.coboundary(a0)
    seg = Simplex([[0.0, 0.0], [1.0, 2.0]])
    assert da.eval(seg, 1e-12) == pytest.approx(math.sin(1.0) + 4.0)


def test_increment_form_is_exact_and_closed():
    g = forms.HolderFunction(lambda p: np.cos(p[..., 0] * p[..., 1]), 1.0, 2.0, d=2)
    dg = forms.increment_form(g)
    seg = Simplex([[0.2, 0.1], [1.3, 0.7]])
    want = math.cos(1.3 * 0.7) - math.cos(0.2 * 0.1)
    v, tail = dg.eval_with_tail(seg, 1e-15)
    assert v == pytest.approx(want) and tail == 0.0
    # increments over a closed boundary telescope to zero
    tri = Simplex([[0, 0], [1, 0], [0.3, 0.8]])
    assert abs(forms.coboundary(dg).eval(tri, 1e-12)) < 1e-12


def test_coboundary_exact_batch_matches_chain_evaluation():
    g = forms.HolderFunction(lambda p: p[..., 0] ** 2 - p[..., 1], 1.0, 3.0, d=2)
    dg = forms.increment_form(g)
    ddg = forms.coboundary(dg)
    rng = np.random.default_rng(5)
    s = rand_simplex(rng, 2, 2)
    via_batch = float(ddg.eval_batch_exact(s.vertices[None])[0])
    via_chain = dg.eval(boundary(s), 1e-12)
    assert via_batch == pytest.approx(via_chain, abs=1e-12)


# ---------------------------------------------------------------------------
# products


def test_product_of_y_with_dx_along_horizontal_segment():
    # integral of y dx along y = 1 from x=0 to x=1 is 1
    f = forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    a = forms.catalog_form("dx")
    p = forms.product(f, a)
    v, tail = p.eval_with_tail(Simplex([[0.0, 1.0], [1.0, 1.0]]), 1e-8)
    assert abs(v - 1.0) <= 1e-8 + tail


def test_product_matches_young_integral_oracle():
    # x against d(sin x + y^2) along the segment (t, 2t):
    # integrand t (cos t + 8 t) dt on [0, 1]
    g = forms.HolderFunction(
        lambda p: np.sin(p[..., 0]) + p[..., 1] ** 2, 1.0, 5.0, d=2
    )
    f = forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    p = forms.product(f, forms.increment_form(g))
    xs, ws = leggauss(40)
    xs = 0.5 * (xs + 1)
    ws = 0.5 * ws
    want = float(np.sum(ws * xs * (np.cos(xs) + 8 * xs)))
    v, tail = p.eval_with_tail(Simplex([[0.0, 0.0], [1.0, 2.0]]), 1e-7)
    assert abs(v - want) <= 1e-7 + tail


def test_product_with_constant_function_is_scalar_multiple():
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 0] * p[..., 1], 1.0, 2.0, d=2)
    )
    p = forms.product(forms.constant_function(2.5, d=2), a)
    rng = np.random.default_rng(19)
    for _ in range(10):
        s = rand_simplex(rng, 1, 2)
        assert p.eval(s, 1e-9) == pytest.approx(2.5 * a.eval(s, 1e-9), abs=1e-9)


def test_product_with_declared_constant_still_converges():
    # same constant f but declared with a nonzero Hoelder constant, so the
    # sewn path is exercised instead of the closed form
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    )
    f = forms.HolderFunction(lambda p: np.full(p.shape[:-1], 2.5), 1.0, 0.1, d=2)
    p = forms.product(f, a)
    s = Simplex([[0.1, 0.2], [0.7, 0.9]])
    v, tail = p.eval_with_tail(s, 1e-10)
    assert abs(v - 2.5 * 0.7) <= 1e-9 + tail


def test_product_rules_agree_on_rough_data():
    f = forms.WeierstrassFunction(0.6, 2, seed=11)
    a = forms.increment_form(forms.WeierstrassFunction(0.7, 2, seed=12))
    p_va = forms.product(f, a, rule="vertex_average")
    p_bc = forms.product(f, a, rule="barycenter")
    rng = np.random.default_rng(23)
    for _ in range(5):
        s = rand_simplex(rng, 1, 2)
        v1, t1 = p_va.eval_with_tail(s, 1e-4, best_effort=True)
        v2, t2 = p_bc.eval_with_tail(s, 1e-4, best_effort=True)
        assert abs(v1 - v2) <= t1 + t2 + 1e-12


def test_product_requires_young_exponents():
    f = forms.HolderFunction(lambda p: p[..., 0], 0.3, 1.0, d=2)
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 1], 0.5, 1.0, d=2)
    )
    with pytest.raises(ExponentViolationError, match="0.5 \\+ 0.3"):
        forms.product(f, a)


def test_product_rejects_unknown_rule():
    f = forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    with pytest.raises(ValueError):
        forms.product(f, forms.catalog_form("dx"), rule="midpoint")


def test_product_with_zero_form_is_pointwise():
    f = forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    a0 = forms.ZeroFormCochain(
        forms.HolderFunction(lambda p: p[..., 1] + 1.0, 1.0, 1.0, d=2)
    )
    p = forms.product(f, a0)
    assert p.k == 0
    assert p.eval(Simplex([[2.0, 3.0]]), 1e-12) == pytest.approx(8.0)


def test_young_threshold_sewing_behavior():
    # above the threshold (gamma + alpha > 1) level sums are Cauchy with a
    # negative fitted rate; below it the probe shows no decay. The pair
    # must be resonant (cosine against sine at the same frequencies) so
    # the piece defects share a sign; independent functions cancel.
    def young_germ(f, g):
        def batch(pts):
            mu = 0.5 * (f(pts[:, 0, :]) + f(pts[:, 1, :]))
            return mu * (g(pts[:, 1, :]) - g(pts[:, 0, :]))

        return sewing.FunctionGerm(
            lambda s: batch(s.vertices[None])[0], batch_fn=batch
        )

    xi = np.array([0.8, 0.6])

    def resonant_pair(gamma, alpha):
        def f(p):
            t = p @ xi
            return sum(
                2.0 ** (-j * gamma) * np.cos(2 * np.pi * 2**j * t)
                for j in range(13)
            )

        def g(p):
            t = p @ xi
            return sum(
                2.0 ** (-j * alpha) * np.sin(2 * np.pi * 2**j * t)
                for j in range(13)
            )

        return f, g

    seg = Simplex([[0.05, 0.15], [0.85, 0.75]])
    probe = sewing.convergence_probe(
        young_germ(*resonant_pair(0.6, 0.7)), seg, EDGEWISE, 12
    )
    assert probe.rate < -0.1
    probe_bad = sewing.convergence_probe(
        young_germ(*resonant_pair(0.3, 0.6)), seg, EDGEWISE, 12
    )
    assert probe_bad.rate > -0.05


def test_rough_product_budget_is_honest():
    f = forms.WeierstrassFunction(0.6, 2, seed=11)
    a = forms.increment_form(forms.WeierstrassFunction(0.7, 2, seed=12))
    p = forms.product(f, a)
    s = Simplex([[0.1, 0.2], [0.8, 0.9]])
    with pytest.raises(BudgetExceededError):
        p.eval(s, 1e-9)
    v, tail = p.eval_with_tail(s, 1e-9, best_effort=True)
    assert np.isfinite(v) and tail > 1e-9


# ---------------------------------------------------------------------------
# coboundary and wedges


def test_coboundary_of_x_dy_is_the_area_form():
    da = forms.coboundary(forms.catalog_form("x_dy"))
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    v, tail = da.eval_with_tail(tri, 1e-8)
    assert abs(v - 0.5) <= 1e-8 + tail
    assert da.k == 2 and da.provenance == "coboundary"
    assert math.isinf(da.beta)


def test_coboundary_requires_room_for_degree():
    with pytest.raises(ValueError):
        forms.coboundary(forms.catalog_form("area"))


def test_double_coboundary_vanishes():
    a = forms.catalog_form("xz_dy")
    dda = forms.coboundary(forms.coboundary(a))
    rng = np.random.default_rng(31)
    for _ in range(3):
        s = rand_simplex(rng, 3, 3)
        assert abs(dda.eval(s, 1e-7, best_effort=True)) < 1e-7


def test_coboundary_of_constant_form_vanishes():
    da = forms.coboundary(forms.catalog_form("dx"))
    rng = np.random.default_rng(37)
    for _ in range(10):
        s = rand_simplex(rng, 2, 2)
        assert abs(da.eval(s, 1e-10)) < 1e-10


def test_wedge_of_dx_with_dy_is_the_area_form():
    f = forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    )
    w = forms.wedge_d(f, a)
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    v, tail = w.eval_with_tail(tri, 1e-6, best_effort=True)
    assert abs(v - 0.5) <= 1e-6 + tail
    assert w.provenance == "wedge"
    assert v == pytest.approx(-w.eval(tri.flipped(), 1e-6, best_effort=True))


def test_wedge_with_constant_function_vanishes():
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    )
    w = forms.wedge_d(forms.constant_function(3.0, d=2), a)
    tri = Simplex([[0.1, 0.1], [0.9, 0.2], [0.4, 0.8]])
    assert abs(w.eval(tri, 1e-8, best_effort=True)) < 1e-8


def test_wedge_exponent_guards():
    rough = forms.increment_form(forms.WeierstrassFunction(0.4, 2, seed=3))
    f = forms.HolderFunction(lambda p: p[..., 0], 0.5, 1.0, d=2)
    with pytest.raises(ExponentViolationError, match="alpha"):
        forms.wedge_d(f, rough)
    # alpha passes but the beta exponent of a product base fails
    base = forms.product(
        forms.WeierstrassFunction(0.65, 2, seed=4),
        forms.increment_form(forms.WeierstrassFunction(0.7, 2, seed=5)),
    )
    assert base.beta == pytest.approx(0.35)
    f2 = forms.HolderFunction(lambda p: p[..., 0], 0.6, 1.0, d=2)
    with pytest.raises(ExponentViolationError, match="beta"):
        forms.wedge_d(f2, base)


# ---------------------------------------------------------------------------
# Zust forms


def test_zust_recovers_the_area_integral():
    one = forms.constant_function(1.0, d=2)
    gx = forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    gy = forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    a0 = forms.ZeroFormCochain(forms.constant_function(1.0, d=2))
    z = forms.zust_form(one, [gx, gy], a0)
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    v, tail = z.eval_with_tail(tri, 1e-3, best_effort=True)
    assert abs(v - 0.5) <= 1e-3 + tail


def test_zust_with_no_wedge_factors_is_a_product():
    g0 = forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 0], 1.0, 1.0, d=2)
    )
    z = forms.zust_form(g0, [], a)
    p = forms.product(g0, a)
    s = Simplex([[0.0, 1.0], [1.0, 1.0]])
    assert z.eval(s, 1e-8) == pytest.approx(p.eval(s, 1e-8))


def test_zust_names_the_failing_inequality():
    one = forms.constant_function(1.0, d=2)
    rough = [
        forms.WeierstrassFunction(0.4, 2, seed=6),
        forms.WeierstrassFunction(0.4, 2, seed=7),
    ]
    a0 = forms.ZeroFormCochain(forms.WeierstrassFunction(0.1, 2, seed=8))
    with pytest.raises(ExponentViolationError, match="sum gamma_i > n"):
        forms.zust_form(one, rough, a0)


# ---------------------------------------------------------------------------
# pullbacks


def test_pullback_by_identity_matches_the_form():
    a = forms.catalog_form("x_dy")
    pb = forms.pullback(forms.identity_map(2), a)
    rng = np.random.default_rng(41)
    for _ in range(5):
        s = rand_simplex(rng, 1, 2)
        v1, t1 = pb.eval_with_tail(s, 1e-7, best_effort=True)
        v2, t2 = a.eval_with_tail(s, 1e-7)
        assert abs(v1 - v2) <= t1 + t2 + 1e-9


def test_circle_pullback_of_x_dy_gives_pi():
    # int_0^1 cos(2 pi t) d(sin 2 pi t) = int_0^1 2 pi cos^2(2 pi t) dt = pi
    circle = forms.SmoothMap(
        lambda t: np.stack(
            [np.cos(2 * np.pi * t[..., 0]), np.sin(2 * np.pi * t[..., 0])],
            axis=-1,
        ),
        1,
        2,
        eta=1.0,
    )
    pb = forms.pullback(circle, forms.catalog_form("x_dy"))
    v, tail = pb.eval_with_tail(Simplex([[0.0], [1.0]]), 1e-4, best_effort=True)
    assert abs(v - math.pi) <= 1e-4 + tail


def test_affine_pullback_of_constant_form_is_exact():
    mat = np.array([[1.0, 0.5], [-0.25, 2.0]])
    f = forms.SmoothMap(lambda p: p @ mat.T, 2, 2, eta=1.0)
    pb = forms.pullback(f, forms.catalog_form("dx"))
    s = Simplex([[0.2, 0.7], [1.1, 0.4]])
    image_increment = (mat @ np.array([0.9, -0.3]))[0]
    assert pb.eval(s, 1e-12) == pytest.approx(image_increment, abs=1e-14)


def test_pullback_requires_enough_regularity():
    rough = forms.increment_form(forms.WeierstrassFunction(0.45, 2, seed=9))
    f = forms.SmoothMap(lambda p: p, 2, 2, eta=1.0)
    with pytest.raises(ExponentViolationError, match="1/\\(1\\+eta\\)"):
        forms.pullback(f, rough)


def test_pullback_composition_law():
    shift = forms.SmoothMap(lambda s: 0.5 * s + 0.1, 1, 1, eta=1.0)
    circle = forms.SmoothMap(
        lambda t: np.stack(
            [np.cos(2 * np.pi * t[..., 0]), np.sin(2 * np.pi * t[..., 0])],
            axis=-1,
        ),
        1,
        2,
        eta=1.0,
    )
    composed = forms.SmoothMap(
        lambda s: np.stack(
            [
                np.cos(2 * np.pi * (0.5 * s[..., 0] + 0.1)),
                np.sin(2 * np.pi * (0.5 * s[..., 0] + 0.1)),
            ],
            axis=-1,
        ),
        1,
        2,
        eta=1.0,
    )
    a = forms.catalog_form("x_dy")
    lhs = forms.pullback(shift, forms.pullback(circle, a))
    rhs = forms.pullback(composed, a)
    seg = Simplex([[0.1], [0.8]])
    v1, t1 = lhs.eval_with_tail(seg, 1e-4, best_effort=True)
    v2, t2 = rhs.eval_with_tail(seg, 1e-4, best_effort=True)
    assert abs(v1 - v2) <= t1 + t2 + 2e-4


def test_pullback_commutes_with_products():
    f_map = forms.SmoothMap(
        lambda p: np.stack(
            [p[..., 0], np.sin(p[..., 0]) + 0.5 * p[..., 0] ** 2], axis=-1
        ),
        1,
        2,
        eta=1.0,
    )
    phi = forms.HolderFunction(
        lambda p: np.cos(p[..., 0] + p[..., 1]), 1.0, 2.0, d=2
    )
    a = forms.increment_form(
        forms.HolderFunction(lambda p: p[..., 1], 1.0, 1.0, d=2)
    )
    lhs = forms.pullback(f_map, forms.product(phi, a))
    phi_pulled = forms.HolderFunction(
        lambda t: np.cos(
            t[..., 0] + np.sin(t[..., 0]) + 0.5 * t[..., 0] ** 2
        ),
        1.0,
        5.0,
        d=1,
    )
    rhs = forms.product(phi_pulled, forms.pullback(f_map, a))
    seg = Simplex([[0.2], [1.1]])
    v1, t1 = lhs.eval_with_tail(seg, 1e-5, best_effort=True)
    v2, t2 = rhs.eval_with_tail(seg, 1e-5, best_effort=True)
    assert abs(v1 - v2) <= t1 + t2 + 2e-5


# ---------------------------------------------------------------------------
# Stokes


def test_stokes_residual_small_for_smooth_form():
    a = forms.catalog_form("x_dy")
    rng = np.random.default_rng(43)
    for _ in range(5):
        s = rand_simplex(rng, 2, 2)
        assert forms.stokes_residual(a, s, tol=1e-7) < 1e-6


def test_stokes_residual_zero_for_closed_form():
    dg = forms.increment_form(
        forms.HolderFunction(lambda p: np.sin(3 * p[..., 0]) * p[..., 1], 1.0, 4.0, d=2)
    )
    tri = Simplex([[0, 0], [0.8, 0.1], [0.3, 0.9]])
    assert forms.stokes_residual(dg, tri, tol=1e-9) < 1e-9


def test_stokes_residual_for_rough_product():
    f = forms.WeierstrassFunction(0.6, 2, seed=13)
    a = forms.increment_form(forms.WeierstrassFunction(0.7, 2, seed=14))
    p = forms.product(f, a)
    tri = Simplex([[0.0, 0.0], [0.6, 0.1], [0.2, 0.5]])
    assert forms.stokes_residual(p, tri, tol=1e-4) < 1e-3


def test_curved_patch_stokes_matches_surface_oracle():
    # F(u, v) = (u, v, u^2 + v^2); the coboundary of the pulled-back
    # primitive x dz is the pullback of dx^dz, classically
    # du ^ (2u du + 2v dv) = 2v du dv, whose integral over the unit
    # triangle is 1/3
    f_map = forms.SmoothMap(
        lambda p: np.stack(
            [p[..., 0], p[..., 1], p[..., 0] ** 2 + p[..., 1] ** 2], axis=-1
        ),
        2,
        3,
        eta=1.0,
    )
    pb = forms.pullback(f_map, forms.smooth_form({(3,): lambda p: p[..., 0]}, 3))
    tri = Simplex([[0, 0], [1, 0], [0, 1]])
    assert forms.stokes_residual(pb, tri, tol=1e-4) < 1e-4
    v = forms.coboundary(pb).eval(tri, 1e-4, best_effort=True)
    assert abs(v - 1 / 3) < 1e-4


# ---------------------------------------------------------------------------
# norms and flat distances


def test_norm_estimate_of_dx_is_bounded_by_one():
    # |dx(sigma)| is the first-coordinate increment, at most diam = mass_1
    a = forms.catalog_form("dx")
    spec = SamplerSpec(samples_per_band=15, n_bands=3, seed=2)
    rep = forms.norm_estimate(a, 1.0, 1.0, Box.unit(2), spec)
    assert 0.5 <= rep.alpha_norm <= 1.0 + 1e-9
    assert rep.beta_norm < 1e-7
    assert rep.ratio <= 10.0
    assert rep.n_samples == 90


def test_norm_estimate_sups_grow_with_more_samples():
    a = forms.catalog_form("x_dy")
    small = forms.norm_estimate(
        a, 1.0, 1.0, Box.unit(2), SamplerSpec(samples_per_band=8, n_bands=3, seed=6)
    )
    big = forms.norm_estimate(
        a, 1.0, 1.0, Box.unit(2), SamplerSpec(samples_per_band=16, n_bands=3, seed=6)
    )
    for rec_s, rec_b in zip(small.per_band, big.per_band):
        assert rec_b["sup_mass"] >= rec_s["sup_mass"] - 1e-15
        assert rec_b["sup_diam"] >= rec_s["sup_diam"] - 1e-15
        assert rec_b["sup_boundary"] >= rec_s["sup_boundary"] - 1e-15


def test_norm_report_serialization_and_csv():
    a = forms.catalog_form("dy")
    rep = forms.norm_estimate(
        a, 1.0, 1.0, Box.unit(2), SamplerSpec(samples_per_band=4, n_bands=2, seed=1)
    )
    blob = rep.to_json()
    assert set(blob) >= {
        "alpha",
        "beta",
        "alpha_norm",
        "alpha_norm_diam",
        "beta_norm",
        "ratio",
        "per_band",
    }
    rows = rep.csv_rows()
    assert rows[0] == ["band", "count", "sup_mass", "sup_diam", "sup_boundary"]
    assert len(rows) == 3


def test_flat_norm_upper_examples():
    s = Simplex([[-1.0, 0.0], [1.0, 0.0]])
    assert forms.flat_norm_upper(s, s, 0.7, 1.0) == 0.0
    # one endpoint moved along the unit circle keeps the enclosing radius
    # at exactly 1, so the lemma bound is mu^alpha + mu^beta
    theta = 0.4
    moved = Simplex([[-1.0, 0.0], [math.cos(theta), math.sin(theta)]])
    mu = float(np.linalg.norm(s.vertices[1] - moved.vertices[1]))
    got = forms.flat_norm_upper(s, moved, 0.6, 1.0)
    assert got == pytest.approx(mu**0.6 + mu, rel=1e-9)


def test_flat_norm_requires_matching_shape():
    with pytest.raises(ValueError):
        forms.flat_norm_upper(
            Simplex([[0.0, 0.0], [1.0, 0.0]]),
            Simplex([[0, 0], [1, 0], [0, 1]]),
            0.5,
            1.0,
        )


def test_snap_distance_regression_slope():
    alpha = 0.5
    s = Simplex([[0.137, 0.291], [0.823, 0.617]])
    levels = np.arange(3, 10)
    bounds = [
        forms.flat_norm_upper(s, snap_to_grid(s, int(n)), alpha, 1.0)
        for n in levels
    ]
    slope, _ = sewing.fitting.line_fit(levels, np.log(bounds))
    assert slope == pytest.approx(-alpha * math.log(2), abs=0.1)


# ---------------------------------------------------------------------------
# pullback regularity probe


def test_regularity_probe_on_quadratic_graph_map():
    f_map = forms.SmoothMap(
        lambda p: np.stack(
            [p[..., 0], p[..., 1], p[..., 0] ** 2 + p[..., 1] ** 2], axis=-1
        ),
        2,
        3,
        eta=1.0,
    )
    spec = SamplerSpec(samples_per_band=6, n_bands=3, diam_max=0.5, seed=3)
    probe = forms.pullback_regularity_probe(f_map, 2, 1.0, 1.0, Box.unit(2), spec)
    assert probe.gamma_bar == pytest.approx(3.0)
    assert abs(probe.exponent - probe.gamma_bar) <= 0.3
    double = forms.pullback_regularity_probe(
        f_map,
        2,
        1.0,
        1.0,
        Box.unit(2),
        SamplerSpec(samples_per_band=12, n_bands=3, diam_max=0.5, seed=3),
    )
    assert abs(double.exponent - probe.exponent) <= 0.1


def test_regularity_probe_degenerates_on_affine_maps():
    f_map = forms.SmoothMap(
        lambda p: p @ np.array([[1.0, 0.5], [0.2, 1.0]]).T, 2, 2, eta=1.0
    )
    spec = SamplerSpec(samples_per_band=5, n_bands=2, seed=4)
    with pytest.raises(DegenerateFitError):
        forms.pullback_regularity_probe(f_map, 2, 1.0, 1.0, Box.unit(2), spec)


# ---------------------------------------------------------------------------
# scalar ingredients


def test_weierstrass_is_reproducible_and_holder():
    w1 = forms.WeierstrassFunction(0.6, 2, seed=5)
    w2 = forms.WeierstrassFunction(0.6, 2, seed=5)
    rng = np.random.default_rng(8)
    pts = rng.random((40, 2))
    assert np.array_equal(w1(pts), w2(pts))
    x, y = rng.random((2, 200, 2))
    lhs = np.abs(w1(x) - w1(y))
    rhs = w1.constant * np.linalg.norm(x - y, axis=1) ** 0.6
    assert np.all(lhs <= rhs)


def test_weierstrass_seeds_differ():
    w1 = forms.WeierstrassFunction(0.6, 2, seed=5)
    w2 = forms.WeierstrassFunction(0.6, 2, seed=6)
    pts = np.random.default_rng(0).random((10, 2))
    assert not np.array_equal(w1(pts), w2(pts))


def test_holder_function_validates_gamma():
    with pytest.raises(ValueError):
        forms.HolderFunction(lambda p: p[..., 0], 1.5, 1.0)
    with pytest.raises(ValueError):
        forms.HolderFunction(lambda p: p[..., 0], 0.0, 1.0)


def test_smooth_map_jacobians_agree():
    def fn(p):
        return np.stack(
            [p[..., 0] * p[..., 1], p[..., 0] ** 2 + np.sin(p[..., 1])],
            axis=-1,
        )

    def jac(p):
        x, y = p[..., 0], p[..., 1]
        row1 = np.stack([y, x], axis=-1)
        row2 = np.stack([2 * x, np.cos(y)], axis=-1)
        return np.stack([row1, row2], axis=-2)

    analytic = forms.SmoothMap(fn, 2, 2, jacobian=jac)
    numeric = forms.SmoothMap(fn, 2, 2)
    rng = np.random.default_rng(12)
    pts = rng.random((20, 2))
    ja = analytic.jacobian(pts)
    jn = numeric.jacobian(pts)
    assert np.max(np.abs(ja - jn)) <= 1e-5 * max(1.0, np.max(np.abs(ja)))


def test_smooth_map_validates_output_shape():
    bad = forms.SmoothMap(lambda p: p[..., 0], 2, 2)
    with pytest.raises(ValueError):
        bad(np.zeros(2))


# ---------------------------------------------------------------------------
# catalog and arithmetic


def test_catalog_forms_match_the_oracle():
    rng = np.random.default_rng(17)
    for name in forms.catalog_names():
        comps, d = CATALOG_COMPONENTS[name]
        a = forms.catalog_form(name)
        s = rand_simplex(rng, a.k, d)
        want = oracle_integral(comps, s)
        got, tail = a.eval_with_tail(s, 1e-8)
        assert abs(got - want) <= 1e-6 * max(1.0, abs(want)) + tail, name


def test_catalog_rejects_unknown_names():
    with pytest.raises(KeyError):
        forms.catalog_form("no_such_form")


def test_catalog_returns_fresh_instances():
    a = forms.catalog_form("dx")
    b = forms.catalog_form("dx")
    assert a is not b and a._memo is not b._memo


def test_cochain_linear_arithmetic():
    a = forms.catalog_form("x_dy")
    b = forms.catalog_form("y_dx")
    s = Simplex([[0.1, 0.2], [0.9, 0.7]])
    va = a.eval(s, 1e-9)
    vb = b.eval(s, 1e-9)
    combo = 2 * a - b
    v, tail = combo.eval_with_tail(s, 1e-8, best_effort=True)
    assert abs(v - (2 * va - vb)) <= 1e-8 + tail


def test_cochain_to_json_reports_declaration():
    p = forms.product(
        forms.WeierstrassFunction(0.6, 2, seed=1),
        forms.increment_form(forms.WeierstrassFunction(0.7, 2, seed=2)),
    )
    blob = p.to_json()
    assert blob["provenance"] == "product"
    assert blob["alpha"] == pytest.approx(0.7)
    assert blob["beta"] == pytest.approx(0.3)
