"""Reference-element tables for the broken ultraweak discretization.

Spaces on the reference hex [0,1]^3:

- trial fields: each Cartesian component of E and H is a tensor-product
  Legendre polynomial of degree p-1 (pure L2, no mapping of components).
- traces: tangential traces of the order-p hex Nedelec space, one trace
  field per equation (electric and magnetic).  Degrees of freedom sit on
  the 12 edges (p each) and 6 faces (2p(p-1) each).
- test space: pair (F, G) of broken Nedelec fields of order r = p + dp.

Tangential continuity of the trace space is enforced through shared
global edge and face unknowns.  Because both traces and tests pull back
covariantly, the skeleton duality pairing of a face equals its
reference-element value exactly, so the face duality matrices computed
here are reused by every element, with only orientation signs and
carrier factors applied.

1D ingredients: Legendre polynomials for the L2 directions and the
integrated-Legendre hierarchy (with linear hat functions h_0 = 1 - x,
h_1 = x) for the H1 directions.  Under x -> 1-x, e_j picks up (-1)^j
and h_m picks up (-1)^m, which gives the orientation sign rules below.
"""

from dataclasses import dataclass

import numpy as np

from .polybasis import (gauss_rule, h1_deriv_table, h1_table,
                        legendre_table)

__all__ = ["DiscreteSpaces", "TestNormConfig"]

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0

# face order: x=0, x=1, y=0, y=1, z=0, z=1
_FACES = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]


def _other_axes(d):
    return tuple(a for a in range(3) if a != d)


def _edge_index(direction, fixed):
    """Local edge id for an edge along `direction` with the other two
    axes (ascending) fixed at the values in the dict `fixed`."""
    o1, o2 = _other_axes(direction)
    return 4 * direction + 2 * fixed[o2] + fixed[o1]


def _nedelec_family(r, d, pts, deriv_axis=None):
    """Scalar factor table of the d-directed Nedelec family.

    pts is a 3-tuple of 1D point arrays.  Returns values (or the partial
    derivative along deriv_axis) with shape (r, r+1, r+1, nx, ny, nz);
    dof order is (legendre index, h index on lower other axis, h index
    on upper other axis).
    """
    o1, o2 = _other_axes(d)
    tabs = {}
    tabs[d] = legendre_table(r - 1, pts[d])
    for ax in (o1, o2):
        if ax == deriv_axis:
            tabs[ax] = h1_deriv_table(r, pts[ax])
        else:
            tabs[ax] = h1_table(r, pts[ax])
    dof_letter = {d: "j", o1: "m", o2: "n"}
    pt_letter = {0: "a", 1: "b", 2: "c"}
    terms = ",".join(dof_letter[ax] + pt_letter[ax] for ax in range(3))
    spec = terms + "->jmn" + "".join(pt_letter[ax] for ax in range(3))
    return np.einsum(spec, tabs[0], tabs[1], tabs[2])


def _test_tables(r, pts):
    """Values and curls of the order-r hex Nedelec basis at a tensor
    grid.  Shapes (ndof, nx, ny, nz, 3) with family-major dof order."""
    shapes = [len(q) for q in pts]
    per_family = r * (r + 1) ** 2
    n = 3 * per_family
    vals = np.zeros((n, *shapes, 3))
    curls = np.zeros((n, *shapes, 3))
    for d in range(3):
        o1, o2 = _other_axes(d)
        sigma = _LEVI[o1, o2, d]
        sl = slice(d * per_family, (d + 1) * per_family)
        f = _nedelec_family(r, d, pts)
        f_o1 = _nedelec_family(r, d, pts, deriv_axis=o1)
        f_o2 = _nedelec_family(r, d, pts, deriv_axis=o2)
        vals[sl, ..., d] = f.reshape(per_family, *shapes)
        curls[sl, ..., o1] = sigma * f_o2.reshape(per_family, *shapes)
        curls[sl, ..., o2] = -sigma * f_o1.reshape(per_family, *shapes)
    return vals, curls


def _trial_tables(p, pts):
    """Tensor Legendre scalars of degree p-1; (p^3, nx, ny, nz)."""
    ex = legendre_table(p - 1, pts[0])
    ey = legendre_table(p - 1, pts[1])
    ez = legendre_table(p - 1, pts[2])
    return np.einsum("ia,jb,kc->ijkabc", ex, ey, ez).reshape(
        p ** 3, len(pts[0]), len(pts[1]), len(pts[2]))


@dataclass(frozen=True)
class TestNormConfig:
    """Scaling of the adjoint-graph test norm.

    The norm is |A* v|^2 + alpha^2 |v|^2.  If alpha is None it defaults
    to 1/length of the waveguide, which keeps the discrete stability
    constant roughly proportional to the ideal one as the domain grows.
    """

    __test__ = False  # not a pytest case despite the name

    alpha: float = None

    def resolve(self, length):
        if self.alpha is not None:
            if self.alpha <= 0.0:
                raise ValueError("alpha must be positive")
            return float(self.alpha)
        return 1.0 / float(length)


@dataclass(frozen=True)
class DiscreteSpaces:
    """Polynomial orders of the discretization.

    p is the trace order (trial fields have degree p-1); dp is the test
    enrichment, so tests have order p + dp.
    """

    p: int = 3
    dp: int = 1

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.dp < 1:
            raise ValueError("test enrichment dp must be at least 1")

    @property
    def r(self):
        return self.p + self.dp

    @property
    def n_quad_1d(self):
        return self.p + self.dp + 2

    @property
    def n_scalar(self):
        return self.p ** 3

    @property
    def n_field_cols(self):
        """Trial columns per element: 3 components x 2 fields."""
        return 6 * self.p ** 3

    @property
    def n_trace_field(self):
        """Trace dofs per element per field: 12 edges x p plus
        6 faces x 2p(p-1)."""
        return 12 * self.p ** 2

    @property
    def n_test_single(self):
        r = self.r
        return 3 * r * (r + 1) ** 2

    @property
    def n_edge_fn(self):
        return self.p

    @property
    def n_face_fn(self):
        return 2 * self.p * (self.p - 1)

    def reference(self):
        return _reference_tables(self.p, self.dp)


class ReferenceTables:
    """Precomputed quadrature-point tables shared by all elements."""

    def __init__(self, p, dp):
        self.p = p
        self.dp = dp
        r = p + dp
        self.r = r
        nq = p + dp + 2
        self.nq = nq
        x1, w1 = gauss_rule(nq)
        self.x1, self.w1 = x1, w1

        pts = (x1, x1, x1)
        vals, curls = _test_tables(r, pts)
        nt = vals.shape[0]
        self.n_test = nt
        # volume layout: (dof, 2d point, z point, component) with the
        # 2d index running x-major to match CrossSectionMesh sampling
        self.test_vals = np.ascontiguousarray(
            vals.reshape(nt, nq * nq, nq, 3))
        self.test_curls = np.ascontiguousarray(
            curls.reshape(nt, nq * nq, nq, 3))
        self.trial_scal = np.ascontiguousarray(
            _trial_tables(p, pts).reshape(p ** 3, nq * nq, nq))
        self.w2 = np.outer(w1, w1).ravel()
        self.w_vol = self.w2[:, None] * w1[None, :]
        # 2d quadrature grid in cross-section parameters, x-major
        XI, ETA = np.meshgrid(x1, x1, indexing="ij")
        self.quad2d = (XI.ravel(), ETA.ravel())

        self.faces = [self._face_tables(f) for f in range(6)]

    # ------------------------------------------------------------ faces
    def _face_tables(self, f):
        p, r, nq, x1 = self.p, self.r, self.nq, self.x1
        n_axis, side = _FACES[f]
        t1, t2 = _other_axes(n_axis)
        pts = [None, None, None]
        pts[n_axis] = np.array([float(side)])
        pts[t1] = x1
        pts[t2] = x1
        vals, _ = _test_tables(r, tuple(pts))
        # squeeze the fixed axis; remaining grid is (t1, t2) C-order
        test_face = vals.reshape(self.n_test, nq * nq, 3)

        n_hat = np.zeros(3)
        n_hat[n_axis] = 1.0 if side == 1 else -1.0

        e_t1 = legendre_table(p - 1, x1)
        e_t2 = e_t1
        h_t1 = h1_table(p, x1)
        h_t2 = h_t1

        records = []
        trace_vals = []

        def _add(arr2d, axis, col, owner_edge, flip_sign):
            v = np.zeros((nq * nq, 3))
            v[:, axis] = arr2d.ravel()
            trace_vals.append(v)
            records.append((col, owner_edge, flip_sign))

        # edge dofs: t1-directed edges at t2 = 0, 1 then t2-directed
        for s in (0, 1):
            eid = _edge_index(t1, {n_axis: side, t2: s})
            for j in range(p):
                _add(np.outer(e_t1[j], h_t2[s]), t1,
                     eid * p + j, eid, (-1.0) ** (j + 1))
        for s in (0, 1):
            eid = _edge_index(t2, {n_axis: side, t1: s})
            for j in range(p):
                _add(np.outer(h_t1[s], e_t2[j]), t2,
                     eid * p + j, eid, (-1.0) ** (j + 1))

        # face dofs: family along t1 first, then along t2
        pp1 = p * (p - 1)
        base = 12 * p + f * 2 * pp1
        for a in range(2, p + 1):
            for j in range(p):
                _add(np.outer(e_t1[j], h_t2[a]), t1,
                     base + (a - 2) * p + j, -1, (-1.0) ** (j + 1))
        for a in range(2, p + 1):
            for j in range(p):
                _add(np.outer(h_t1[a], e_t2[j]), t2,
                     base + pp1 + (a - 2) * p + j, -1, (-1.0) ** a)

        trace_vals = np.asarray(trace_vals)
        cols = np.array([rec[0] for rec in records], dtype=int)
        owner_edge = np.array([rec[1] for rec in records], dtype=int)
        flip_sign = np.array([rec[2] for rec in records])

        n_cross_tr = np.cross(np.broadcast_to(n_hat, trace_vals.shape),
                              trace_vals)
        duality = np.einsum("iqc,mqc,q->im", test_face, n_cross_tr,
                            self.w2)
        return {
            "axis": n_axis, "side": side, "t1": t1, "t2": t2,
            "n_hat": n_hat, "test_vals": test_face,
            "trace_vals": trace_vals, "cols": cols,
            "owner_edge": owner_edge, "flip_sign": flip_sign,
            "duality": duality,
        }


_REF_CACHE = {}


def _reference_tables(p, dp):
    key = (p, dp)
    if key not in _REF_CACHE:
        _REF_CACHE[key] = ReferenceTables(p, dp)
    return _REF_CACHE[key]
