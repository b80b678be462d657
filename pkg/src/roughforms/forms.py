"""Cochains (rough differential k-forms) and the calculus on them.

A cochain assigns a real number to every oriented k-simplex, additively
over subdivisions and oddly under orientation flips. Rough cochains carry
declared Hoelder-type exponents (alpha, beta): alpha controls |A(sigma)|
against the alpha-mass, beta does the same for A on boundaries. Products
with Hoelder functions, coboundaries, wedges, and pullbacks are built as
sewn germs with the exponent bookkeeping of Young-type multiplication.

Evaluations return a value together with an a posteriori tail bound; by
default an unachievable tolerance raises, while best-effort mode returns
the partial value with its honest tail. Inner evaluations are memoized per
cochain, keyed by quantized vertices and tolerance bucket (plain dict
inserts are atomic and idempotent, so concurrent readers are safe).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .errors import (
    BudgetExceededError,
    DegenerateFitError,
    ExponentViolationError,
    NoConvergenceError,
)
from .geometry import (
    Chain,
    Cube,
    Simplex,
    boundary,
    coordinate_projection_array,
    cube_to_chain,
    diameter,
    mass_value,
    minimal_enclosing_ball,
)
from .sewing import FunctionGerm, sew
from .subdivision import EDGEWISE, iterate_array

MEMO_QUANTUM = 1e-12


def _duffy_rule(k, order):
    """Nodes (Q, k) in the unit simplex and weights summing to 1/k!.

    Tensor Gauss-Legendre points collapsed onto the simplex; exactness
    degree grows with `order` in every variable.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if k == 1:
        return x[:, None], w
    if k == 2:
        u, v = np.meshgrid(x, x, indexing="ij")
        wu, wv = np.meshgrid(w, w, indexing="ij")
        t1 = (u * (1 - v)).ravel()
        t2 = (u * v).ravel()
        wt = (wu * wv * u).ravel()
        return np.stack([t1, t2], axis=1), wt
    if k == 3:
        u, v, s = np.meshgrid(x, x, x, indexing="ij")
        wu, wv, ws = np.meshgrid(w, w, w, indexing="ij")
        t1 = (u * (1 - v)).ravel()
        t2 = (u * v * (1 - s)).ravel()
        t3 = (u * v * s).ravel()
        wt = (wu * wv * ws * u**2 * v).ravel()
        return np.stack([t1, t2, t3], axis=1), wt
    raise ValueError("quadrature rules cover k <= 3")


# ---------------------------------------------------------------------------
# scalar ingredients


class HolderFunction:
    """A scalar function with declared Hoelder exponent and constant.

    The callable must vectorize over leading axes of an (..., d) array.
    """

    def __init__(self, fn, gamma, constant, d=None):
        if not (0 < gamma <= 1):
            raise ValueError("gamma must lie in (0, 1]")
        self._fn = fn
        self.gamma = float(gamma)
        self.constant = float(constant)
        self.d = d

    def __call__(self, x):
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)


def constant_function(c, d=None):
    return HolderFunction(
        lambda x: np.full(x.shape[:-1], float(c)), 1.0, 0.0, d=d
    )


class WeierstrassFunction(HolderFunction):
    """W(x) = sum_{j=0}^{12} 2^(-j g) cos(2 pi 2^j <xi_j, x>).

    The truncation at j = 12 is part of the definition, so the function is
    exactly reproducible from (gamma, seed). The xi_j are fixed unit
    directions drawn from the seeded generator. Since each term moves by
    at most min(2 pi 2^j |x - y|, 2), the Hoelder constant
    13 * 2^(1-g) * (2 pi)^g is a valid declared bound for every scale.
    """

    LEVELS = 13

    def __init__(self, gamma, d, seed=0):
        rng = np.random.default_rng(seed)
        xi = rng.normal(size=(self.LEVELS, d))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        self.xi = xi
        self.seed = int(seed)
        weights = 2.0 ** (-gamma * np.arange(self.LEVELS))
        freqs = 2.0 ** np.arange(self.LEVELS)

        def fn(x):
            phases = 2.0 * math.pi * np.tensordot(x, xi, axes=([-1], [1]))
            return np.sum(weights * np.cos(freqs * phases), axis=-1)

        constant = self.LEVELS * 2.0 ** (1 - gamma) * (2 * math.pi) ** gamma
        super().__init__(fn, gamma, constant, d=d)


class SmoothMap:
    """F: R^m -> R^d with first derivatives, analytic or finite-difference.

    `eta` declares the Hoelder exponent of DF (C^{1,eta} data).
    """

    def __init__(self, fn, m, d, jacobian=None, eta=1.0, fd_step=1e-6):
        self._fn = fn
        self.m = int(m)
        self.d = int(d)
        self._jac = jacobian
        self.eta = float(eta)
        self._h = float(fd_step)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self._fn(x), dtype=float)
        if out.shape != x.shape[:-1] + (self.d,):
            raise ValueError("map output has wrong shape")
        return out

    def jacobian(self, x):
        """(..., d, m) derivative matrix at x."""
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        cols = []
        for j in range(self.m):
            e = np.zeros(self.m)
            e[j] = self._h
            cols.append((self(x + e) - self(x - e)) / (2 * self._h))
        return np.stack(cols, axis=-1)


def identity_map(d):
    return SmoothMap(
        lambda x: x,
        d,
        d,
        jacobian=lambda x: np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy(),
        eta=1.0,
    )


# ---------------------------------------------------------------------------
# cochain base


def _memo_key(simplex, tol):
    q = np.round(simplex.vertices / MEMO_QUANTUM) * MEMO_QUANTUM
    bucket = int(round(math.log10(tol))) if tol > 0 else 0
    return (q.tobytes(), q.shape, bucket)


def _perm_sign(order):
    sign = 1
    order = list(order)
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if order[i] > order[j]:
                sign = -sign
    return sign


def _canonical_orientation(simplex):
    """Vertex-sorted representative and the sign relating it back.

    Cochains are odd under vertex transpositions, so caching on the
    sorted representative lets a face and its reversal share one entry.
    """
    v = simplex.vertices
    order = np.lexsort(v.T[::-1])
    if np.array_equal(order, np.arange(order.size)):
        return simplex, 1
    return Simplex(v[order]), _perm_sign(order)


class Cochain:
    """Additive, orientation-odd evaluation on k-simplices in R^d.

    eval() accepts a Simplex, Chain, or Cube; chains split the tolerance
    across terms, cubes triangulate first. eval_with_tail() also returns
    an a posteriori error bound; with best_effort=True an exhausted
    evaluation budget yields the partial value instead of raising.
    """

    provenance = "smooth"

    def __init__(self, k, d, alpha, beta):
        self.k = int(k)
        self.d = int(d)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._memo = {}
        # optional rigorous bound on sup |A| / mass_alpha, set when known
        self.alpha_norm_bound = None

    # subclasses: return (value, tail_bound, budget_exhausted)
    def _eval_simplex(self, simplex, tol):
        raise NotImplementedError

    # optional closed form on an (n, k+1, d) batch; None when unavailable
    eval_batch_exact = None

    def eval(self, target, tol=1e-6, best_effort=False):
        return self.eval_with_tail(target, tol, best_effort=best_effort)[0]

    def eval_with_tail(self, target, tol=1e-6, best_effort=False):
        if isinstance(target, Cube):
            target = cube_to_chain(target)
        if isinstance(target, Chain):
            terms = list(target)
            if not terms:
                return 0.0, 0.0
            weight = sum(abs(c) for c, _ in terms)
            value = 0.0
            tail = 0.0
            for c, s in terms:
                v, t = self.eval_with_tail(
                    s, tol * abs(c) / weight, best_effort=best_effort
                )
                value += c * v
                tail += abs(c) * t
            return value, tail
        simplex = target
        if simplex.k != self.k or simplex.d != self.d:
            raise ValueError(
                f"expected a {self.k}-simplex in R^{self.d}, "
                f"got k={simplex.k}, d={simplex.d}"
            )
        canon, sign = _canonical_orientation(simplex)
        key = _memo_key(canon, tol)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._eval_simplex(canon, tol)
            self._memo[key] = hit
        value, tail, exhausted = hit
        if exhausted and not best_effort:
            raise BudgetExceededError(
                f"evaluation tail {tail:.3g} exceeds tol {tol:.3g}",
                partial=(sign * value, tail),
            )
        return sign * value, tail

    def __neg__(self):
        return combination([(-1.0, self)])

    def __add__(self, other):
        return combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return combination([(1.0, self), (-1.0, other)])

    def __rmul__(self, scalar):
        return combination([(float(scalar), self)])

    def to_json(self):
        return {
            "k": self.k,
            "d": self.d,
            "alpha": self.alpha,
            "beta": self.beta,
            "provenance": self.provenance,
        }


class SewnCochain(Cochain):
    """A cochain whose value is the sewing of a simplex germ.

    When germ evaluations are themselves approximate, the germ tracks the
    summed tails of its most recent batch; since the returned value is the
    last level sum, that figure bounds the extra error and is added to the
    sewing tail.
    """

    scheme = EDGEWISE

    def _germ(self, simplex, tol):
        raise NotImplementedError

    def _eval_simplex(self, simplex, tol):
        germ = self._germ(simplex, tol)
        try:
            res = sew(germ, simplex, self.scheme, tol)
            exhausted = False
        except BudgetExceededError as exc:
            res = exc.partial
            exhausted = True
        tail = res.tail_bound + getattr(germ, "inner_spent", 0.0)
        return res.value, tail, exhausted or tail > tol


class ZeroFormCochain(Cochain):
    """A 0-form: evaluation at points. Identified with a Hoelder function."""

    def __init__(self, f):
        if not isinstance(f, HolderFunction):
            raise TypeError("0-forms are built from HolderFunction")
        d = f.d
        if d is None:
            raise ValueError("the function needs a declared ambient d")
        super().__init__(0, d, 0.0, f.gamma)
        self.f = f

    def _eval_simplex(self, simplex, tol):
        return float(self.f(simplex.vertices[0])), 0.0, False

    def eval_batch_exact(self, pts):
        return self.f(pts[:, 0, :])


class SmoothFormCochain(SewnCochain):
    """sum_I f_I dx^I from pointwise coefficient functions.

    The germ evaluates each f_I at the barycenter against dx^I(sigma);
    sewing repairs it into the exact integral. Smooth coefficients give a
    defect exponent of k+1.
    """

    provenance = "smooth"

    def __init__(self, components, d):
        comps = {}
        k = None
        for index_set, fn in components.items():
            idx = tuple(int(i) for i in index_set)
            if sorted(set(idx)) != list(idx):
                raise ValueError(
                    f"component index {idx} must be a strictly increasing tuple"
                )
            if idx and not (1 <= idx[0] and idx[-1] <= d):
                raise ValueError(f"component index {idx} out of range 1..{d}")
            if k is None:
                k = len(idx)
            elif len(idx) != k:
                raise ValueError("all component indices must have equal length")
            comps[idx] = fn
        if k is None:
            raise ValueError("at least one component is required")
        super().__init__(k, d, 1.0, 1.0)
        self.components = comps

    def _batch(self, pts):
        centers = pts.mean(axis=1)
        out = np.zeros(pts.shape[0])
        for idx, fn in self.components.items():
            out += np.asarray(fn(centers), dtype=float) * (
                coordinate_projection_array(pts, idx)
            )
        return out

    def _germ(self, simplex, tol):
        return FunctionGerm(
            lambda s: self._batch(s.vertices[None])[0],
            batch_fn=self._batch,
            eta=self.k,
            gamma=self.k + 1.0,
        )

    def _quadrature(self, pts, order):
        nodes, weights = _duffy_rule(self.k, order)
        base = pts[:, 0, :]
        edges = pts[:, 1:, :] - pts[:, :1, :]
        samples = base[:, None, :] + np.einsum("qk,nkd->nqd", nodes, edges)
        fact = math.factorial(self.k)
        out = np.zeros(pts.shape[0])
        for idx, fn in self.components.items():
            vals = np.asarray(fn(samples), dtype=float)
            out += (vals @ weights) * fact * (
                coordinate_projection_array(pts, idx)
            )
        return out

    def eval_batch_with_tail(self, pts):
        """Vectorized integrals with a quadrature-refinement tail estimate.

        Two Gauss-Duffy orders are compared; the difference bounds the
        quadrature error for coefficients resolved at the coarse order.
        """
        pts = np.asarray(pts, dtype=float)
        lo = self._quadrature(pts, 8)
        hi = self._quadrature(pts, 16)
        return hi, np.abs(hi - lo)


def smooth_form(components, d):
    """Cochain of the smooth form sum_I f_I dx^I.

    `components` maps strictly increasing 1-based index tuples (matching
    x1..xd) to coefficient callables on (..., d) point arrays. Constants
    may be given as plain numbers.
    """
    comps = {}
    for idx, fn in components.items():
        if np.isscalar(fn):
            c = float(fn)
            comps[tuple(idx)] = (lambda cc: lambda x: np.full(x.shape[:-1], cc))(c)
        else:
            comps[tuple(idx)] = fn
    return SmoothFormCochain(comps, d)


class IncrementCochain(Cochain):
    """The exact 1-form dg of a Hoelder function: A([a, b]) = g(b) - g(a).

    Exactly additive and closed, so (alpha, beta) = (gamma, infinity); the
    declared Hoelder constant bounds the alpha-norm.
    """

    provenance = "coboundary"

    def __init__(self, g):
        if g.d is None:
            raise ValueError("the function needs a declared ambient d")
        super().__init__(1, g.d, g.gamma, math.inf)
        self.g = g
        self.alpha_norm_bound = g.constant

    def _eval_simplex(self, simplex, tol):
        v = simplex.vertices
        return float(self.g(v[1]) - self.g(v[0])), 0.0, False

    def eval_batch_exact(self, pts):
        return self.g(pts[:, 1, :]) - self.g(pts[:, 0, :])


def increment_form(g):
    return IncrementCochain(g)


class CombinationCochain(Cochain):
    """A fixed linear combination of cochains of common (k, d)."""

    def __init__(self, terms, alpha, beta, provenance):
        terms = [(float(c), a) for c, a in terms]
        if not terms:
            raise ValueError("empty combination")
        k, d = terms[0][1].k, terms[0][1].d
        for _, a in terms:
            if (a.k, a.d) != (k, d):
                raise ValueError("combination terms must share (k, d)")
        super().__init__(k, d, alpha, beta)
        self.terms = terms
        self.provenance = provenance
        if all(a.eval_batch_exact is not None for _, a in terms):
            def batch(pts):
                out = np.zeros(pts.shape[0])
                for c, a in terms:
                    out += c * a.eval_batch_exact(pts)
                return out

            self.eval_batch_exact = batch
        else:
            fasts = [_fast_batch(a) for _, a in terms]
            if all(f is not None for f in fasts):
                def batch_wt(pts):
                    vals = np.zeros(pts.shape[0])
                    tails = np.zeros(pts.shape[0])
                    for (c, _), f in zip(terms, fasts):
                        v, t = f(pts)
                        vals += c * v
                        tails += abs(c) * t
                    return vals, tails

                self.eval_batch_with_tail = batch_wt
        bounds = [a.alpha_norm_bound for _, a in terms]
        if all(b is not None for b in bounds):
            self.alpha_norm_bound = sum(
                abs(c) * b for (c, _), b in zip(terms, bounds)
            )

    def _eval_simplex(self, simplex, tol):
        weight = sum(abs(c) for c, _ in self.terms)
        if weight == 0.0:
            return 0.0, 0.0, False
        value = 0.0
        tail = 0.0
        for c, a in self.terms:
            if c == 0.0:
                continue
            v, t = a.eval_with_tail(
                simplex, tol * abs(c) / weight, best_effort=True
            )
            value += c * v
            tail += abs(c) * t
        return value, tail, tail > tol


class ZeroCochain(Cochain):
    """The identically zero k-cochain (exact, closed, norm zero)."""

    def __init__(self, k, d, alpha=1.0, beta=math.inf, provenance="smooth"):
        super().__init__(k, d, alpha, beta)
        self.provenance = provenance
        self.alpha_norm_bound = 0.0

    def _eval_simplex(self, simplex, tol):
        return 0.0, 0.0, False

    def eval_batch_exact(self, pts):
        return np.zeros(pts.shape[0])


def combination(terms, alpha=None, beta=None, provenance=None):
    alpha = alpha if alpha is not None else min(a.alpha for _, a in terms)
    beta = beta if beta is not None else min(a.beta for _, a in terms)
    provenance = provenance or terms[0][1].provenance
    return CombinationCochain(terms, alpha, beta, provenance)


# ---------------------------------------------------------------------------
# products, coboundary, wedges


class _TrackedGerm(FunctionGerm):
    """FunctionGerm that reports the summed tails of its last batch."""

    def __init__(self, *args, holder=None, **kwargs):
        super().__init__(*args, **kwargs)
        self._holder = holder if holder is not None else {"spent": 0.0}

    @property
    def inner_spent(self):
        return self._holder["spent"]


def _fast_batch(a):
    """Batch evaluator pts -> (values, tails) for a cochain, or None."""
    exact = a.eval_batch_exact
    if exact is not None:
        return lambda pts: (
            np.asarray(exact(pts), dtype=float),
            np.zeros(pts.shape[0]),
        )
    return getattr(a, "eval_batch_with_tail", None)


class ProductCochain(SewnCochain):
    """Young product f * A sewn from the germ mu_sigma(f) A(sigma).

    mu is the vertex average or the barycenter evaluation; the sewn limit
    is rule independent. Requires alpha + gamma > 1; the result carries
    (alpha, (alpha + gamma - 1) ^ beta) and the germ's defect exponent is
    gamma + k - 1 + alpha. Inner evaluations of A use a geometrically
    shrinking share of the tolerance; their total is folded into the
    reported tail.
    """

    provenance = "product"
    RULES = ("vertex_average", "barycenter")

    def __init__(self, f, a, rule="vertex_average"):
        if rule not in self.RULES:
            raise ValueError(f"rule must be one of {self.RULES}")
        if f.gamma + a.alpha <= 1:
            raise ExponentViolationError(
                f"product needs alpha + gamma > 1, "
                f"got {a.alpha} + {f.gamma} = {a.alpha + f.gamma}"
            )
        super().__init__(
            a.k, a.d, a.alpha, min(a.alpha + f.gamma - 1, a.beta)
        )
        self.f = f
        self.base = a
        self.rule = rule
        if f.constant and a.alpha_norm_bound is not None:
            self.delta_norm = f.constant * a.alpha_norm_bound
        else:
            self.delta_norm = None

    def _mu(self, pts):
        if self.rule == "vertex_average":
            return self.f(pts).mean(axis=1)
        return self.f(pts.mean(axis=1))

    def _germ(self, simplex, tol):
        root_diam = diameter(simplex)
        base = self.base
        fast = _fast_batch(base)
        holder = {"spent": 0.0}

        if fast is not None:
            def batch(pts):
                mu = self._mu(pts)
                vals, tails = fast(pts)
                holder["spent"] = float(np.sum(np.abs(mu) * tails))
                return mu * vals
        else:
            from .geometry import diameter_array

            def batch(pts):
                mu = self._mu(pts)
                diams = diameter_array(pts)
                inner = tol * 0.25 * np.minimum(1.0, (diams / root_diam) ** 2)
                vals = np.empty(pts.shape[0])
                spent = 0.0
                for i, (row, it) in enumerate(zip(pts, inner)):
                    v, t = base.eval_with_tail(
                        Simplex(row), it, best_effort=True
                    )
                    vals[i] = v
                    spent += abs(mu[i]) * t
                holder["spent"] = spent
                return mu * vals

        return _TrackedGerm(
            lambda s: batch(s.vertices[None])[0],
            batch_fn=batch,
            eta=self.k - 1 + self.alpha,
            gamma=self.f.gamma + self.k - 1 + self.base.alpha,
            delta_norm=self.delta_norm,
            holder=holder,
        )


def product(f, a, rule="vertex_average"):
    """The Young product cochain f * A (Hoelder f, rough A).

    Products with 0-forms are pointwise; a declared Hoelder constant of
    zero certifies that f is constant (or that A vanishes), which enables
    exact closed forms.
    """
    if a.k == 0:
        # the composite constant is a declared hint, not a derived bound
        g = HolderFunction(
            lambda x, f=f, a=a: f(x) * a.f(x),
            min(f.gamma, a.f.gamma),
            f.constant + a.f.constant,
            d=a.d,
        )
        return ZeroFormCochain(g)
    if rule not in ProductCochain.RULES:
        raise ValueError(f"rule must be one of {ProductCochain.RULES}")
    if f.gamma + a.alpha <= 1:
        raise ExponentViolationError(
            f"product needs alpha + gamma > 1, "
            f"got {a.alpha} + {f.gamma} = {a.alpha + f.gamma}"
        )
    beta_out = min(a.alpha + f.gamma - 1, a.beta)
    if a.alpha_norm_bound == 0.0:
        return ZeroCochain(a.k, a.d, a.alpha, beta_out, provenance="product")
    if f.constant == 0.0:
        c = float(f(np.zeros(a.d)))
        if c == 0.0:
            return ZeroCochain(
                a.k, a.d, a.alpha, beta_out, provenance="product"
            )
        return combination(
            [(c, a)], alpha=a.alpha, beta=beta_out, provenance="product"
        )
    return ProductCochain(f, a, rule)


class CoboundaryCochain(Cochain):
    """dA(omega) := A evaluated on the boundary chain of omega."""

    provenance = "coboundary"

    def __init__(self, a):
        if a.k >= a.d:
            raise ValueError("coboundary needs k < d")
        super().__init__(a.k + 1, a.d, a.beta, math.inf)
        self.base = a
        if isinstance(a, ZeroFormCochain):
            # |f(b) - f(a)| <= constant * |b - a|^gamma certifies the norm
            self.alpha_norm_bound = a.f.constant
        elif a.alpha_norm_bound == 0.0:
            self.alpha_norm_bound = 0.0
        base_exact = a.eval_batch_exact
        if base_exact is not None:
            def batch(pts):
                out = np.zeros(pts.shape[0])
                for i in range(pts.shape[1]):
                    faces = np.delete(pts, i, axis=1)
                    out += (-1.0) ** i * base_exact(faces)
                return out

            self.eval_batch_exact = batch
        else:
            fast = _fast_batch(a)
            if fast is not None:
                def batch_wt(pts):
                    vals = np.zeros(pts.shape[0])
                    tails = np.zeros(pts.shape[0])
                    for i in range(pts.shape[1]):
                        v, t = fast(np.delete(pts, i, axis=1))
                        vals += (-1.0) ** i * v
                        tails += t
                    return vals, tails

                self.eval_batch_with_tail = batch_wt

    def _eval_simplex(self, simplex, tol):
        if self.eval_batch_exact is not None:
            value = float(self.eval_batch_exact(simplex.vertices[None])[0])
            return value, 0.0, False
        value, tail = self.base.eval_with_tail(
            boundary(simplex), tol, best_effort=True
        )
        return value, tail, tail > tol


def coboundary(a):
    return CoboundaryCochain(a)


def wedge_d(f, a):
    """The rough wedge df ^ A := d(f * A) - f * dA.

    Needs alpha + gamma > 1 and beta + gamma > 1; the result carries
    ((alpha + gamma - 1) ^ beta, beta + gamma - 1). For a 0-form the
    function's Hoelder exponent stands in for alpha, since the mass
    condition on points is vacuous.
    """
    eff_alpha = a.beta if a.k == 0 else a.alpha
    alpha_t = eff_alpha + f.gamma - 1
    beta_t = a.beta + f.gamma - 1
    if alpha_t <= 0:
        raise ExponentViolationError(
            f"wedge needs alpha + gamma > 1, got {eff_alpha} + {f.gamma}"
        )
    if beta_t <= 0:
        raise ExponentViolationError(
            f"wedge needs beta + gamma > 1, got {a.beta} + {f.gamma}"
        )
    left = coboundary(product(f, a))
    right = product(f, coboundary(a))
    return combination(
        [(1.0, left), (-1.0, right)],
        alpha=min(alpha_t, a.beta),
        beta=beta_t,
        provenance="wedge",
    )


def zust_form(g0, gs, a):
    """g0 * dg1 ^ ... ^ dgn ^ A by iterated wedges and a final product.

    Requires alpha + sum gamma_i > n and beta + sum gamma_i > n - 1, with
    the first failing inequality named in the error.
    """
    gs = list(gs)
    n = len(gs)
    total = g0.gamma + sum(g.gamma for g in gs)
    eff_alpha = a.beta if a.k == 0 else a.alpha
    if eff_alpha + total <= n:
        raise ExponentViolationError(
            f"need alpha + sum gamma_i > n: {eff_alpha} + {total} <= {n}"
        )
    if a.beta + total <= n - 1:
        raise ExponentViolationError(
            f"need beta + sum gamma_i > n - 1: {a.beta} + {total} <= {n - 1}"
        )
    cur = a
    for g in reversed(gs):
        cur = wedge_d(g, cur)
    return product(g0, cur)


# ---------------------------------------------------------------------------
# pullback


class PullbackCochain(SewnCochain):
    """F^*A sewn from the germ sigma -> A([F(v_0), ..., F(v_k)])."""

    provenance = "pullback"

    def __init__(self, f_map, a, scheme=EDGEWISE):
        if a.alpha * (1 + f_map.eta) <= 1:
            raise ExponentViolationError(
                f"pullback needs alpha > 1/(1+eta): alpha={a.alpha}, "
                f"eta={f_map.eta}"
            )
        if f_map.d != a.d:
            raise ValueError("map target dimension must match the cochain")
        beta_t = min(a.alpha * (1 + f_map.eta) - 1, a.beta)
        super().__init__(a.k, f_map.m, a.alpha, beta_t)
        self.f_map = f_map
        self.base = a
        self.scheme = scheme
        self.gamma_bar = min(
            a.k - 1 + a.alpha * (1 + f_map.eta),
            a.k + a.beta * (1 + f_map.eta),
        )

    def _germ(self, simplex, tol):
        root_diam = diameter(simplex)
        base = self.base
        f_map = self.f_map
        fast = _fast_batch(base)
        holder = {"spent": 0.0}

        if fast is not None:
            def batch(pts):
                vals, tails = fast(f_map(pts))
                holder["spent"] = float(np.sum(tails))
                return vals
        else:
            from .geometry import diameter_array

            def batch(pts):
                images = f_map(pts)
                diams = diameter_array(pts)
                inner = tol * 0.25 * np.minimum(1.0, (diams / root_diam) ** 2)
                vals = np.empty(pts.shape[0])
                spent = 0.0
                for i, (row, it) in enumerate(zip(images, inner)):
                    v, t = base.eval_with_tail(
                        Simplex(row), it, best_effort=True
                    )
                    vals[i] = v
                    spent += t
                holder["spent"] = spent
                return vals

        return _TrackedGerm(
            lambda s: batch(s.vertices[None])[0],
            batch_fn=batch,
            eta=self.k - 1 + self.alpha,
            gamma=self.gamma_bar,
            holder=holder,
        )


def pullback(f_map, a, scheme=EDGEWISE):
    return PullbackCochain(f_map, a, scheme)


# ---------------------------------------------------------------------------
# Stokes


def stokes_residual(a, omega, tol=1e-6):
    """|sewn-coboundary value - direct boundary evaluation| on omega.

    The left path sews the germ tau -> A(boundary tau) over subdivisions
    of omega (exercising cancellation across internal faces); the right
    path evaluates A once on each boundary face. For an additive A both
    converge to A(boundary omega), so the residual is error-sized.
    """
    inner = tol / 500.0

    def germ_fn(s):
        return a.eval(boundary(s), inner, best_effort=True)

    germ = FunctionGerm(germ_fn, gamma=a.k + 2.0)
    try:
        # the germ is additive up to evaluation noise, so shallow depth
        # suffices and keeps accumulated inner error small
        res = sew(germ, omega, EDGEWISE, tol, depth_max=5)
        left = res.value
    except (BudgetExceededError, NoConvergenceError) as exc:
        left = exc.partial.value
    right = a.eval(boundary(omega), tol, best_effort=True)
    return abs(left - right)


# ---------------------------------------------------------------------------
# norms


@dataclass
class NormReport:
    """Banded sup estimates of the (alpha, beta) norms of a cochain."""

    alpha: float
    beta: float
    alpha_norm: float
    alpha_norm_diam: float
    beta_norm: float
    ratio: float
    n_samples: int
    ecc_cap: float
    per_band: list = field(default_factory=list)

    def to_json(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "alpha_norm": self.alpha_norm,
            "alpha_norm_diam": self.alpha_norm_diam,
            "beta_norm": self.beta_norm,
            "ratio": self.ratio,
            "n_samples": self.n_samples,
            "ecc_cap": self.ecc_cap,
            "per_band": list(self.per_band),
        }

    def csv_rows(self):
        header = ["band", "count", "sup_mass", "sup_diam", "sup_boundary"]
        rows = [header]
        for rec in self.per_band:
            rows.append(
                [
                    f"{rec['band'][0]:.6g}..{rec['band'][1]:.6g}",
                    rec["count"],
                    rec["sup_mass"],
                    rec["sup_diam"],
                    rec["sup_boundary"],
                ]
            )
        return rows


def norm_estimate(a, alpha, beta, region, spec, tol=1e-7):
    """Empirical per-band sup of |A|/mass_alpha, |A|/diam^(k-1+alpha),
    and |A(boundary omega)|/mass_beta over sampled simplices.

    Suprema only grow with more samples (prefix-stable streams). The
    boundary part needs k+1 <= d and is zero otherwise.
    """
    k = a.k
    per_band = []
    sup_mass = 0.0
    sup_diam = 0.0
    sup_bdry = 0.0
    n = 0
    banded = sampling.sample_band_simplices(region, k, spec)
    bdry_spec = sampling.SamplerSpec(
        samples_per_band=spec.samples_per_band,
        n_bands=spec.n_bands,
        diam_max=spec.diam_max,
        ecc_cap=spec.ecc_cap,
        n_splits=spec.n_splits,
        seed=spec.seed + 1,
        max_attempts=spec.max_attempts,
    )
    banded_up = (
        sampling.sample_band_simplices(region, k + 1, bdry_spec)
        if k + 1 <= a.d
        else [(band, []) for band in spec.bands()]
    )
    for (band, samples), (_, upper) in zip(banded, banded_up):
        b_mass = b_diam = b_bdry = 0.0
        for s in samples:
            n += 1
            v = a.eval(s, tol, best_effort=True)
            b_mass = max(b_mass, abs(v) / mass_value(s, alpha))
            b_diam = max(b_diam, abs(v) / diameter(s) ** (k - 1 + alpha))
        for w in upper:
            n += 1
            v = a.eval(boundary(w), tol, best_effort=True)
            b_bdry = max(b_bdry, abs(v) / mass_value(w, beta))
        sup_mass = max(sup_mass, b_mass)
        sup_diam = max(sup_diam, b_diam)
        sup_bdry = max(sup_bdry, b_bdry)
        per_band.append(
            {
                "band": list(band),
                "count": len(samples) + len(upper),
                "sup_mass": b_mass,
                "sup_diam": b_diam,
                "sup_boundary": b_bdry,
            }
        )
    return NormReport(
        alpha=alpha,
        beta=beta,
        alpha_norm=sup_mass,
        alpha_norm_diam=sup_diam,
        beta_norm=sup_bdry,
        ratio=sup_mass / sup_diam if sup_diam > 0 else float("nan"),
        n_samples=n,
        ecc_cap=spec.ecc_cap,
        per_band=per_band,
    )


def flat_norm_upper(s1, s2, alpha, beta):
    """Constructive upper bound on the (alpha, beta)-flat distance.

    Interpolates one vertex at a time; each swap of v_i to v'_i costs
    k r^(k-1) mu_i^alpha + r^k mu_i^beta with r the radius of the minimal
    ball enclosing all vertices of both simplices.
    """
    if (s1.k, s1.d) != (s2.k, s2.d):
        raise ValueError("simplices must share (k, d)")
    k = s1.k
    pts = np.vstack([s1.vertices, s2.vertices])
    _, r = minimal_enclosing_ball(pts)
    mu = np.linalg.norm(s1.vertices - s2.vertices, axis=1)
    total = 0.0
    for m in mu:
        if m > 0:
            total += k * r ** (k - 1) * m**alpha + r**k * m**beta
    return total


# ---------------------------------------------------------------------------
# pullback regularity probe


@dataclass
class RegularityProbe:
    """Fitted scale exponent of the affine-interpolant pullback error."""

    exponent: float
    gamma_bar: float
    diameters: list
    deviations: list

    def to_json(self):
        return {
            "exponent": self.exponent,
            "gamma_bar": self.gamma_bar,
            "diameters": list(self.diameters),
            "deviations": list(self.deviations),
        }


def pullback_regularity_probe(f_map, k, alpha, beta, region, samples):
    """Exponent of max_children |F^sigma_* child - F_* child|_(alpha,beta).

    F^sigma is the affine interpolant of F on sigma. For each sampled
    sigma the children are one edgewise step; the flat-norm upper bound
    of the difference is regressed against diam(sigma) in log-log form
    and compared to gamma_bar = (k-1+alpha(1+eta)) ^ (k+beta(1+eta)).
    `samples` is a total sample count or a full SamplerSpec.
    """
    from . import fitting

    if isinstance(samples, int):
        spec = sampling.SamplerSpec(
            samples_per_band=max(1, samples // 4), n_bands=4
        )
    else:
        spec = samples
    gamma_bar = min(
        k - 1 + alpha * (1 + f_map.eta), k + beta * (1 + f_map.eta)
    )
    diams = []
    devs = []
    for _, samples in sampling.sample_band_simplices(region, k, spec):
        for s in samples:
            verts = s.vertices
            children = iterate_array(EDGEWISE, verts[None], 1)
            # barycentric coordinates of child vertices within sigma
            flat = children.reshape(-1, s.d)
            aug = np.vstack([verts.T, np.ones(k + 1)])
            rhs = np.vstack([flat.T, np.ones(flat.shape[0])])
            lam, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
            f_verts = f_map(verts)
            interp = (lam.T @ f_verts).reshape(
                children.shape[:-1] + (f_map.d,)
            )
            worst = 0.0
            for child, child_i in zip(children, interp):
                worst = max(
                    worst,
                    flat_norm_upper(
                        Simplex(f_map(child)),
                        Simplex(child_i),
                        alpha,
                        beta,
                    ),
                )
            diams.append(diameter(s))
            devs.append(worst)
    diams = np.asarray(diams)
    devs = np.asarray(devs)
    floor = 1e-13 * max(1.0, devs.max() if devs.size else 0.0)
    usable = devs > floor
    if usable.sum() < 3:
        raise DegenerateFitError(
            "affine interpolant matches the map at all sampled scales",
            floor_level=int(usable.sum()),
        )
    slope = fitting.loglog_slope(diams[usable], devs[usable])
    return RegularityProbe(
        exponent=float(slope),
        gamma_bar=gamma_bar,
        diameters=diams.tolist(),
        deviations=devs.tolist(),
    )


# ---------------------------------------------------------------------------
# catalog of named analytic test forms


def _build_catalog():
    def poly(fn):
        return fn

    return {
        "dx": lambda: smooth_form({(1,): 1.0}, 2),
        "dy": lambda: smooth_form({(2,): 1.0}, 2),
        "x_dy": lambda: smooth_form({(2,): poly(lambda p: p[..., 0])}, 2),
        "y_dx": lambda: smooth_form({(1,): poly(lambda p: p[..., 1])}, 2),
        "sin_y_dx": lambda: smooth_form(
            {(1,): poly(lambda p: np.sin(p[..., 1]))}, 2
        ),
        "half_rot": lambda: smooth_form(
            {
                (1,): poly(lambda p: -0.5 * p[..., 1]),
                (2,): poly(lambda p: 0.5 * p[..., 0]),
            },
            2,
        ),
        "area": lambda: smooth_form({(1, 2): 1.0}, 2),
        "x_area": lambda: smooth_form(
            {(1, 2): poly(lambda p: p[..., 0])}, 2
        ),
        "dz3": lambda: smooth_form({(3,): 1.0}, 3),
        "xz_dy": lambda: smooth_form(
            {(2,): poly(lambda p: p[..., 0] * p[..., 2])}, 3
        ),
        "twist_area": lambda: smooth_form(
            {
                (1, 2): poly(lambda p: p[..., 2]),
                (1, 3): poly(lambda p: np.cos(p[..., 1])),
                (2, 3): poly(lambda p: p[..., 0]),
            },
            3,
        ),
    }


_CATALOG = _build_catalog()


def catalog_names():
    return sorted(_CATALOG)


def catalog_form(name):
    """A fresh cochain for a named analytic test form."""
    try:
        return _CATALOG[name]()
    except KeyError:
        raise KeyError(
            f"unknown catalog form {name!r}; available: {catalog_names()}"
        ) from None
