"""Oriented simplices, integer chains, cubes, and alpha-mass geometry.

Vertex lists are ordered; swapping two vertices flips orientation. All
coordinates are float64 and all norms Euclidean.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSimplexError, UnsupportedDimensionError

# Relative threshold on the Gram determinant below which a simplex counts as
# degenerate. The Gram determinant scales like diam^(2k), so the comparison
# is scale invariant.
DEGENERACY_RTOL = 1e-12


class Simplex:
    """An oriented k-simplex in R^d, stored as k+1 ordered vertices."""

    __slots__ = ("_verts",)

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2:
            raise ValueError("vertices must be a (k+1, d) array-like")
        if v.shape[0] > v.shape[1] + 1:
            raise ValueError(
                f"a {v.shape[0] - 1}-simplex does not fit in R^{v.shape[1]}"
            )
        v = v.copy()
        v.setflags(write=False)
        self._verts = v

    @property
    def vertices(self):
        return self._verts

    @property
    def k(self):
        return self._verts.shape[0] - 1

    @property
    def d(self):
        return self._verts.shape[1]

    def flipped(self):
        """The same simplex with reversed orientation (first two swapped)."""
        if self.k == 0:
            raise ValueError("a 0-simplex has no orientation to flip")
        v = self._verts.copy()
        v[[0, 1]] = v[[1, 0]]
        return Simplex(v)

    def __neg__(self):
        return self.flipped()

    def __eq__(self, other):
        if not isinstance(other, Simplex):
            return NotImplemented
        return self._verts.shape == other._verts.shape and np.array_equal(
            self._verts, other._verts
        )

    def __hash__(self):
        return hash((self._verts.shape, self._verts.tobytes()))

    def __repr__(self):
        pts = ", ".join(
            "(" + ", ".join(f"{x:.6g}" for x in row) + ")" for row in self._verts
        )
        return f"Simplex[{pts}]"

    def to_json(self):
        return {"d": self.d, "k": self.k, "vertices": self._verts.tolist()}

    @classmethod
    def from_json(cls, obj):
        s = cls(obj["vertices"])
        if s.d != obj["d"] or s.k != obj["k"]:
            raise ValueError("simplex JSON is inconsistent with its vertices")
        return s


class Chain:
    """A formal integer combination of k-simplices of a common (k, d)."""

    __slots__ = ("_terms",)

    def __init__(self, terms=()):
        cleaned = []
        shape = None
        for coeff, simplex in terms:
            c = int(coeff)
            if c == 0:
                continue
            if shape is None:
                shape = (simplex.k, simplex.d)
            elif (simplex.k, simplex.d) != shape:
                raise ValueError("all chain terms must share (k, d)")
            cleaned.append((c, simplex))
        self._terms = tuple(cleaned)

    @property
    def terms(self):
        return self._terms

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def __add__(self, other):
        return Chain(self._terms + other._terms)

    def __neg__(self):
        return Chain([(-c, s) for c, s in self._terms])

    def __sub__(self, other):
        return self + (-other)

    def __rmul__(self, scalar):
        return Chain([(scalar * c, s) for c, s in self._terms])

    def to_json(self):
        return {
            "terms": [
                {"coeff": c, "simplex": s.to_json()} for c, s in self._terms
            ]
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            (t["coeff"], Simplex.from_json(t["simplex"])) for t in obj["terms"]
        )


@dataclass(frozen=True)
class Cube:
    """An oriented k-cube in R^d: base corner, orthonormal frame, side, sign.

    The rows of ``frame`` span the cube; ``sign`` flips the orientation the
    frame order defines.
    """

    base: np.ndarray
    frame: np.ndarray
    side: float
    sign: int = 1

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)
        if frame.shape[1] != base.shape[0]:
            raise ValueError("frame row length must match the ambient dimension")
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(frame.shape[0]), atol=1e-12):
            raise ValueError("frame rows must be orthonormal")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.side <= 0:
            raise ValueError("side must be positive")

    @property
    def k(self):
        return self.frame.shape[0]

    @property
    def d(self):
        return self.base.shape[0]

    def to_json(self):
        return {
            "d": self.d,
            "k": self.k,
            "base": self.base.tolist(),
            "frame": self.frame.tolist(),
            "side": self.side,
            "sign": self.sign,
        }


@dataclass(frozen=True)
class MassReport:
    """Summary geometry of one simplex at a fixed Hoelder weight alpha."""

    alpha: float
    volume: float
    diameter: float
    height: float
    mass: float
    eccentricity: float
    face_volumes: tuple = field(default_factory=tuple)

    def to_json(self):
        return {
            "alpha": self.alpha,
            "volume": self.volume,
            "diameter": self.diameter,
            "height": self.height,
            "mass": self.mass,
            "eccentricity": self.eccentricity,
            "face_volumes": list(self.face_volumes),
        }


# ---------------------------------------------------------------------------
# scalar operations


def edge_matrix(simplex):
    """Columns v_i - v_0, shape (d, k)."""
    v = simplex.vertices
    return (v[1:] - v[0]).T


def gram_determinant(simplex):
    e = edge_matrix(simplex)
    if e.shape[1] == 0:
        return 1.0
    return float(np.linalg.det(e.T @ e))


def diameter(simplex):
    """Largest pairwise vertex distance (equals the set diameter)."""
    v = simplex.vertices
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


def is_degenerate(simplex):
    """True when the Gram determinant falls below the relative threshold."""
    if simplex.k == 0:
        return False
    diam = diameter(simplex)
    if diam == 0.0:
        return True
    g = gram_determinant(simplex)
    return g <= DEGENERACY_RTOL * diam ** (2 * simplex.k)


def volume(simplex):
    """k-dimensional volume sqrt(det(E^T E)) / k!; zero when degenerate."""
    if simplex.k == 0:
        return 1.0
    if is_degenerate(simplex):
        return 0.0
    g = gram_determinant(simplex)
    return math.sqrt(max(g, 0.0)) / math.factorial(simplex.k)


def faces(simplex):
    """Boundary faces: entry i omits vertex i, keeping the induced order."""
    v = simplex.vertices
    return [
        Simplex(np.delete(v, i, axis=0)) for i in range(simplex.k + 1)
    ]


def _height(apex, face_vertices):
    """Distance from apex to the affine hull of the face vertices."""
    base = face_vertices[0]
    r = apex - base
    span = (face_vertices[1:] - base).T
    if span.shape[1] == 0:
        return float(np.linalg.norm(r))
    coef, *_ = np.linalg.lstsq(span, r, rcond=None)
    return float(np.linalg.norm(r - span @ coef))


def heights(simplex):
    """Height of each vertex over the opposite face's affine hull.

    Within the simplex the distance to that hull is an absolute affine
    function, so its max is attained at the opposite vertex; these values are
    therefore the face-wise sup distances entering the alpha-mass.
    """
    v = simplex.vertices
    out = []
    for i in range(simplex.k + 1):
        face = np.delete(v, i, axis=0)
        out.append(_height(v[i], face))
    return out


def mass_value(simplex, alpha):
    """Scalar alpha-mass: (max boundary-face volume) * h^alpha.

    h is the smallest vertex height. Conventions: alpha = 0 gives 1,
    alpha = inf gives 0.
    """
    if simplex.k < 1:
        raise ValueError("mass requires k >= 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if is_degenerate(simplex):
        raise DegenerateSimplexError(f"degenerate simplex: {simplex!r}")
    if alpha == 0:
        return 1.0
    if math.isinf(alpha):
        return 0.0
    h = min(heights(simplex))
    fmax = max(volume(f) for f in faces(simplex))
    return fmax * h**alpha


def mass_alpha(simplex, alpha):
    """Full MassReport of one simplex at weight alpha."""
    if simplex.k < 1:
        raise ValueError("mass_alpha requires k >= 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if is_degenerate(simplex):
        raise DegenerateSimplexError(f"degenerate simplex: {simplex!r}")
    fvols = tuple(volume(f) for f in faces(simplex))
    h = min(heights(simplex))
    if alpha == 0:
        mass = 1.0
    elif math.isinf(alpha):
        mass = 0.0
    else:
        mass = max(fvols) * h**alpha
    return MassReport(
        alpha=alpha,
        volume=volume(simplex),
        diameter=diameter(simplex),
        height=h,
        mass=mass,
        eccentricity=eccentricity(simplex),
        face_volumes=fvols,
    )


def eccentricity(simplex):
    """diam^k / Vol^k; raises for degenerate simplices."""
    if simplex.k == 0:
        return 1.0
    vol = volume(simplex)
    if vol == 0.0:
        raise DegenerateSimplexError(f"degenerate simplex: {simplex!r}")
    return diameter(simplex) ** simplex.k / vol


def boundary(simplex):
    """The boundary (k-1)-chain.

    The sign (-1)^i of face i is realized by swapping the face's first two
    vertices whenever possible (k >= 2), so coefficients stay +1; for k = 1
    the point faces carry coefficients +-1.
    """
    if simplex.k == 0:
        return Chain()
    terms = []
    v = simplex.vertices
    for i in range(simplex.k + 1):
        fv = np.delete(v, i, axis=0)
        if i % 2 == 0:
            terms.append((1, Simplex(fv)))
        elif fv.shape[0] >= 2:
            fv = fv.copy()
            fv[[0, 1]] = fv[[1, 0]]
            terms.append((1, Simplex(fv)))
        else:
            terms.append((-1, Simplex(fv)))
    return Chain(terms)


def boundary_chain(chain):
    """Boundary of a chain, term by term."""
    terms = []
    for c, s in chain:
        for c2, f in boundary(s):
            terms.append((c * c2, f))
    return Chain(terms)


def coordinate_projection(simplex, index_set):
    """Signed volume of the projection onto coordinates ``index_set``.

    dx^I(sigma) = det(M) / k! where M[r, c] = (v_{c+1} - v_0)[I_r]. Indices
    are 1-based labels matching the variable names x1..xd; they may repeat
    or permute, following the determinant's sign.
    """
    idx = tuple(int(i) - 1 for i in index_set)
    if len(idx) != simplex.k:
        raise ValueError("index set size must equal the simplex dimension k")
    if any(i < 0 or i >= simplex.d for i in idx):
        raise ValueError("coordinate label out of range 1..d")
    if simplex.k == 0:
        return 1.0
    e = edge_matrix(simplex)
    m = e[list(idx), :]
    return float(np.linalg.det(m)) / math.factorial(simplex.k)


def vertex_order_sign(simplex):
    """Sign of the permutation sorting the vertices lexicographically.

    An orientation-odd functional of the vertex list: any transposition of
    two vertices flips it. Used to build deliberately antisymmetric germs.
    """
    v = simplex.vertices
    order = sorted(range(len(v)), key=lambda i: tuple(v[i]))
    return _permutation_sign(tuple(order))


def snap_to_grid(simplex, n):
    """Round each coordinate to the dyadic grid 2^-n, ties toward -inf."""
    scale = 2.0**n
    v = simplex.vertices * scale
    snapped = np.ceil(v - 0.5) / scale
    return Simplex(snapped)


def _permutation_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        cycle = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            cycle += 1
        if cycle % 2 == 0:
            sign = -sign
    return sign


def _signed_simplex(vertices, sign):
    """Simplex on ``vertices`` carrying orientation ``sign`` as a +1 term."""
    if sign >= 0:
        return 1, Simplex(vertices)
    if len(vertices) >= 2:
        v = np.array(vertices, dtype=float)
        v[[0, 1]] = v[[1, 0]]
        return 1, Simplex(v)
    return -1, Simplex(vertices)


def cube_to_chain(cube):
    """Triangulate a k-cube into k! simplices, all oriented as the cube.

    Uses the staircase triangulation: one simplex per permutation of the
    frame directions, walking from the base corner one direction at a time.
    """
    k = cube.k
    steps = cube.side * cube.frame
    terms = []
    for perm in itertools.permutations(range(k)):
        pts = [np.array(cube.base, dtype=float)]
        for j in perm:
            pts.append(pts[-1] + steps[j])
        sign = _permutation_sign(perm) * cube.sign
        terms.append(_signed_simplex(np.array(pts), sign))
    return Chain(terms)


def axis_box_chain(base, axes, extents):
    """Triangulate an axis-parallel k-box into k! simplices.

    ``axes`` lists the k coordinate directions the box spans (1-based labels
    matching x1..xd), ``extents`` the signed side lengths along them; the
    remaining coordinates stay pinned at ``base``. Signs of the extents flow
    through the staircase determinants, so integrating dx^axes over the
    result gives the signed product of the extents.
    """
    base = np.asarray(base, dtype=float)
    axes = tuple(int(a) - 1 for a in axes)
    if any(a < 0 or a >= base.shape[0] for a in axes):
        raise ValueError("coordinate label out of range 1..d")
    extents = np.asarray(extents, dtype=float)
    if len(axes) != extents.shape[0]:
        raise ValueError("axes and extents must have equal length")
    if any(e == 0.0 for e in extents):
        raise DegenerateSimplexError("axis box has a zero extent")
    k = len(axes)
    steps = np.zeros((k, base.shape[0]))
    for j, (a, e) in enumerate(zip(axes, extents)):
        steps[j, a] = e
    terms = []
    for perm in itertools.permutations(range(k)):
        pts = [base.copy()]
        for j in perm:
            pts.append(pts[-1] + steps[j])
        terms.append(_signed_simplex(np.array(pts), _permutation_sign(perm)))
    return Chain(terms)


# ---------------------------------------------------------------------------
# batched helpers on (n, k+1, d) vertex arrays


def volume_array(pts):
    """Volumes of a batch of simplices given as an (n, k+1, d) array."""
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[1] - 1
    if k == 0:
        return np.ones(pts.shape[0])
    e = pts[:, 1:, :] - pts[:, :1, :]
    gram = np.einsum("nid,njd->nij", e, e)
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None)) / math.factorial(k)


def diameter_array(pts):
    pts = np.asarray(pts, dtype=float)
    n, m, _ = pts.shape
    best = np.zeros(n)
    for i in range(m):
        for j in range(i + 1, m):
            d = np.linalg.norm(pts[:, i, :] - pts[:, j, :], axis=1)
            np.maximum(best, d, out=best)
    return best


def eccentricity_array(pts):
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[1] - 1
    vol = volume_array(pts)
    diam = diameter_array(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        ecc = np.where(vol > 0, diam**k / np.where(vol > 0, vol, 1.0), np.inf)
    return ecc


def barycenter_array(pts):
    return np.asarray(pts, dtype=float).mean(axis=1)


def coordinate_projection_array(pts, index_set):
    """Batched dx^I over an (n, k+1, d) vertex array; 1-based labels."""
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[1] - 1
    idx = [int(i) - 1 for i in index_set]
    if len(idx) != k:
        raise ValueError("index set size must equal k")
    if k == 0:
        return np.ones(pts.shape[0])
    e = pts[:, 1:, :] - pts[:, :1, :]
    m = e[:, :, idx]
    return np.linalg.det(np.swapaxes(m, 1, 2)) / math.factorial(k)


def orthonormal_tangent(simplex):
    """Orthonormal rows spanning the simplex plane, oriented with it.

    Returns a (k, d) matrix B with B B^T = I whose row order gives the
    simplex's orientation positive sign in flattened coordinates.
    """
    k = simplex.k
    if k == 0:
        return np.zeros((0, simplex.d))
    if is_degenerate(simplex):
        raise DegenerateSimplexError(f"degenerate simplex: {simplex!r}")
    e = edge_matrix(simplex)
    q, r = np.linalg.qr(e)
    b = q.T
    if float(np.linalg.det(r)) < 0:
        b[-1] = -b[-1]
    return b


def flatten_simplex(simplex):
    """Isometric coordinates of the simplex in R^k plus the chart back-map.

    Returns (flat_vertices, to_ambient) with flat_vertices of shape
    (k+1, k), positively oriented, and to_ambient(x) mapping chart points
    back to R^d.
    """
    b = orthonormal_tangent(simplex)
    v0 = simplex.vertices[0]
    flat = (simplex.vertices - v0) @ b.T

    def to_ambient(x):
        return v0 + np.asarray(x, dtype=float) @ b

    return flat, to_ambient


def minimal_enclosing_ball(points):
    """Center and radius of the smallest ball containing ``points`` (Welzl)."""
    pts = [np.asarray(p, dtype=float) for p in points]
    if not pts:
        raise ValueError("need at least one point")

    def ball_of(support):
        if not support:
            return pts[0] * 0.0, -1.0
        base = support[0]
        span = np.array([p - base for p in support[1:]])
        if len(span) == 0:
            return base.copy(), 0.0
        # circumsphere center within the affine hull of the support set
        a = 2.0 * span @ span.T
        rhs = np.array([s @ s for s in span])
        try:
            coef = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            coef, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        center = base + coef @ span
        radius = float(np.linalg.norm(center - base))
        return center, radius

    def welzl(idx, support):
        if not idx or len(support) == len(pts[0]) + 1:
            return ball_of(support)
        p = idx[-1]
        center, radius = welzl(idx[:-1], support)
        if radius >= 0 and np.linalg.norm(pts[p] - center) <= radius * (1 + 1e-12) + 1e-15:
            return center, radius
        return welzl(idx[:-1], support + [pts[p]])

    center, radius = welzl(list(range(len(pts))), [])
    # tighten: numerical guard so every point is inside
    radius = max(float(np.linalg.norm(p - center)) for p in pts)
    return center, radius
