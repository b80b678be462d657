"""Component extraction of cochains against test functions, and its inverse.

pi_J pairs a k-cochain with a compactly supported bump: up to sign, the
integral over the bump's support of A evaluated on the axis box spanning
[0, u_j] in each J direction (at transverse position u) times the mixed
derivative D^J psi(u). For smooth densities a k-fold integration by parts
turns this into the plain integral of the density against psi, which is
what the quadrature reproduces.

iota goes the other way in codimension zero: a function F is turned into
a cochain by summing its integrals against a smooth partition of unity
subordinate to the Whitney cubes of each simplex.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureBudgetError
from .fitting import line_fit
from .forms import Cochain, _fast_batch
from .geometry import Chain, Simplex
from .subdivision import partition_quadrature

EVAL_CAP = 1 << 22


class TestFunction:
    """A polynomial bump psi(x) = sum c z^p (1 - |z|^2)^q, z = (x-c)/R.

    Supported on the ball of the declared radius around the center; all
    mixed first partial derivatives are available in the same closed form,
    so D^J psi is exact for index sets J. The bump order m controls
    smoothness at the support boundary (q >= m - |J| after |J|
    derivatives).
    """

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, d, center=None, radius=0.5, m=6, _terms=None):
        self.d = int(d)
        self.center = (
            np.zeros(self.d)
            if center is None
            else np.asarray(center, dtype=float)
        )
        if self.center.shape != (self.d,):
            raise ValueError("center must be a d-vector")
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.m = int(m)
        if self.m < 1:
            raise ValueError("bump order m must be at least 1")
        # terms: (coeff, powers tuple length d, envelope exponent q)
        self._terms = (
            [(1.0, (0,) * self.d, self.m)] if _terms is None else _terms
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.center) / self.radius
        u = 1.0 - np.sum(z * z, axis=-1)
        inside = u > 0.0
        u = np.where(inside, u, 0.0)
        out = np.zeros(x.shape[:-1])
        for c, powers, q in self._terms:
            term = np.full(x.shape[:-1], c)
            for axis, p in enumerate(powers):
                if p:
                    term = term * z[..., axis] ** p
            out += term * u**q
        return np.where(inside, out, 0.0)

    def _partial(self, terms, axis):
        new = {}
        for c, powers, q in terms:
            p = powers[axis]
            if p:
                key = (
                    powers[:axis] + (p - 1,) + powers[axis + 1 :],
                    q,
                )
                new[key] = new.get(key, 0.0) + c * p / self.radius
            if q:
                key = (
                    powers[:axis] + (p + 1,) + powers[axis + 1 :],
                    q - 1,
                )
                new[key] = new.get(key, 0.0) - 2.0 * c * q / self.radius
        return [(c, powers, q) for (powers, q), c in new.items() if c]

    def derivative(self, J):
        """D^J psi for a set of distinct 1-based axes, as a TestFunction."""
        J = tuple(J)
        if len(set(J)) != len(J):
            raise ValueError("derivative axes must be distinct")
        if any(not 1 <= j <= self.d for j in J):
            raise ValueError("derivative axes must lie in 1..d")
        if len(J) > self.m:
            raise ValueError("bump order too low for this derivative")
        terms = self._terms
        for j in J:
            terms = self._partial(terms, j - 1)
        return TestFunction(
            self.d, self.center, self.radius, self.m, _terms=terms
        )

    def rescaled(self, lam, x):
        """psi_lambda_x(y) = lam^-d psi((y - x) / lam), in closed form."""
        lam = float(lam)
        if lam <= 0:
            raise ValueError("lambda must be positive")
        x = np.asarray(x, dtype=float)
        scale = lam**-self.d
        terms = [(c * scale, powers, q) for c, powers, q in self._terms]
        return TestFunction(
            self.d,
            x + lam * self.center,
            lam * self.radius,
            self.m,
            _terms=terms,
        )

    def support_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_json(self):
        return {
            "d": self.d,
            "center": self.center.tolist(),
            "radius": self.radius,
            "m": self.m,
        }


def _tensor_grid(lo, hi, nodes):
    """Gauss-Legendre tensor nodes and weights over an axis box."""
    x, w = leggauss(nodes)
    axes_x = []
    axes_w = []
    for a, b in zip(lo, hi):
        axes_x.append(0.5 * (b - a) * x + 0.5 * (a + b))
        axes_w.append(0.5 * (b - a) * w)
    grids = np.meshgrid(*axes_x, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    weights = np.ones(pts.shape[0])
    for g in wgrids:
        weights = weights * g.ravel()
    return pts, weights


def _kuhn_blocks(base, extents, axes):
    """Simplices triangulating axis boxes, per permutation of the axes.

    base is (n, d), extents (n, k) nonnegative; returns a list of
    (parity, vertices (n, k+1, d)) covering each box with k! simplices of
    consistent orientation.
    """
    n, d = base.shape
    k = len(axes)
    blocks = []
    for perm in itertools.permutations(range(k)):
        parity = _parity(perm)
        verts = np.empty((n, k + 1, d))
        verts[:, 0, :] = base
        cur = base.copy()
        for step, idx in enumerate(perm):
            cur = cur.copy()
            cur[:, axes[idx]] += extents[:, idx]
            verts[:, step + 1, :] = cur
        blocks.append((parity, verts))
    return blocks


def _parity(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _box_values(a, pts, J, tol):
    """A on the axis boxes [0, u_j] (j in J) at transverse position u.

    Degenerate boxes (some u_j ~ 0) evaluate to zero; orientation is the
    product of the signs of the spanned coordinates.
    """
    axes = [j - 1 for j in J]
    span = pts[:, axes]
    box_sign = np.prod(np.sign(span), axis=1)
    live = np.abs(span).min(axis=1) > 1e-14
    base = pts.copy()
    base[:, axes] = np.minimum(span, 0.0)
    extents = np.abs(span)

    values = np.zeros(pts.shape[0])
    idx = np.nonzero(live)[0]
    if idx.size == 0:
        return values
    blocks = _kuhn_blocks(base[idx], extents[idx], axes)
    fast = _fast_batch(a)
    if fast is not None:
        acc = np.zeros(idx.size)
        for parity, verts in blocks:
            vals, _ = fast(verts)
            acc += parity * vals
        values[idx] = box_sign[idx] * acc
    else:
        per_box = tol / max(1, idx.size)
        for row, i in enumerate(idx):
            chain = Chain(
                [
                    (parity, Simplex(verts[row]))
                    for parity, verts in blocks
                ]
            )
            values[i] = box_sign[i] * a.eval(
                chain, per_box, best_effort=True
            )
    return values


def pi_J(a, psi, J, nodes=24, tol=1e-8):
    """The pairing of the J component of a cochain with a test function.

    Tensor Gauss-Legendre quadrature over the support of psi of
    (-1)^k A(box(u)) D^J psi(u), where box(u) spans [0, u_j] for j in J at
    transverse position u. Exact up to quadrature for smooth densities.
    """
    J = tuple(sorted(int(j) for j in J))
    if len(J) != a.k or len(set(J)) != len(J):
        raise ValueError(f"J must be {a.k} distinct axes")
    if any(not 1 <= j <= a.d for j in J):
        raise ValueError("J axes must lie in 1..d")
    if psi.d != a.d:
        raise ValueError("test function dimension must match the cochain")
    if psi.m < a.k + 2:
        raise ValueError("bump order m must be at least k + 2")
    cost = nodes**a.d * math.factorial(a.k) * (a.k + 1)
    if cost > EVAL_CAP:
        raise QuadratureBudgetError(
            f"quadrature would need {cost} vertex evaluations"
        )
    lo, hi = psi.support_box()
    pts, weights = _tensor_grid(lo, hi, nodes)
    dvals = psi.derivative(J)(pts)
    live = dvals != 0.0
    values = np.zeros(pts.shape[0])
    if np.any(live):
        box_eval = getattr(a, "eval_axis_box", None)
        if box_eval is not None:
            values[live] = box_eval(pts[live], J)
        else:
            values[live] = _box_values(a, pts[live], J, tol)
    return float((-1.0) ** a.k * np.sum(weights * dvals * values))


@dataclass
class ScalingRecord:
    J: tuple
    lam: float
    value: float

    def to_json(self):
        return {"J": list(self.J), "lambda": self.lam, "value": self.value}


@dataclass
class ScalingProbe:
    """Fitted growth exponent of |<pi_J A, psi_lambda_x>| in lambda."""

    slope: float
    records: list = field(default_factory=list)

    def to_json(self):
        return {
            "slope": self.slope,
            "records": [r.to_json() for r in self.records],
        }


def scaling_probe(a, psi, J, x, lambdas=None, nodes=24):
    """Pairings against rescaled bumps and the log-log slope over lambda.

    A cochain of declared exponent alpha should produce a slope no smaller
    than alpha - 1 (values may grow as lambda shrinks, at a limited rate).
    """
    if lambdas is None:
        lambdas = [2.0**-i for i in range(1, 6)]
    records = []
    for lam in lambdas:
        val = pi_J(a, psi.rescaled(lam, x), J, nodes=nodes)
        records.append(ScalingRecord(J=tuple(J), lam=float(lam), value=val))
    mags = np.array([abs(r.value) for r in records])
    floor = 1e-300
    slope, _ = line_fit(
        np.log([r.lam for r in records]), np.log(np.maximum(mags, floor))
    )
    return ScalingProbe(slope=float(slope), records=records)


@dataclass
class IotaResult:
    """A Whitney-partition evaluation of a function on a simplex.

    The truncation tail is the uncovered volume times the largest sampled
    |F|; covered_volume is the exact total volume of the selected cubes.
    """

    value: float
    tail_bound: float
    covered_volume: float
    n_cubes: int

    def __float__(self):
        return self.value

    def to_json(self):
        return {
            "value": self.value,
            "tail_bound": self.tail_bound,
            "covered_volume": self.covered_volume,
            "n_cubes": self.n_cubes,
        }


def iota(F, simplex, n_max=8, nodes=12):
    """sign(sigma) sum of integrals of F against the Whitney partition.

    Codimension zero only (k = d <= 2). F is any callable on batches of
    ambient points; the partition pairing equals the integral of F over
    the union of the dilated Whitney cubes, which is integrated on a
    disjoint box decomposition. The tail bound charges sup|F| on the
    sliver of the simplex that union misses.
    """
    pts, weights, dec = partition_quadrature(simplex, n_max, nodes)
    edges = simplex.vertices[1:] - simplex.vertices[0]
    orientation = 1.0 if np.linalg.det(edges) >= 0 else -1.0
    sup_f = float(np.max(np.abs(F(simplex.vertices))))
    if len(weights):
        fvals = np.asarray(F(pts), dtype=float)
        value = float(np.sum(weights * fvals))
        sup_f = max(sup_f, float(np.max(np.abs(fvals))))
    else:
        value = 0.0
    union_volume = float(np.sum(weights))
    tail = (dec.simplex_volume - union_volume) * sup_f
    return IotaResult(
        value=orientation * value,
        tail_bound=tail,
        covered_volume=dec.covered_volume,
        n_cubes=len(dec.cubes),
    )


class WhitneyCochain(Cochain):
    """The cochain built from a function by Whitney-partition sums.

    In codimension zero this realizes the inverse of component extraction:
    pairing it back against a test function recovers the function.
    """

    provenance = "smooth"

    def __init__(self, F, d, n_max=8, nodes=12, alpha=1.0):
        if d > 2:
            raise ValueError("Whitney cochains need k = d <= 2")
        super().__init__(d, d, alpha, alpha)
        self.F = F
        self.n_max = n_max
        self.nodes = nodes

    def _eval_simplex(self, simplex, tol):
        res = iota(self.F, simplex, self.n_max, self.nodes)
        return res.value, res.tail_bound, res.tail_bound > tol


def iota_cochain(F, d, n_max=8, nodes=12, alpha=1.0):
    return WhitneyCochain(F, d, n_max=n_max, nodes=nodes, alpha=alpha)
