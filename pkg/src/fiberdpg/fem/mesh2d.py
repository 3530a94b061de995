"""Curvilinear quadrilateral cross-section meshes.

The fiber cross-section (a disk of radius r_clad) is covered by a fixed
template: a center square, four transfinite-blend patches completing the
core disk of radius r_core, and four annular patches with geometric
radial grading out to r_clad.  Patch maps are analytic, so the curved
core/cladding interface lies exactly on element boundaries at every
refinement level.  Refinement subdivides each patch's parameter square;
geometry is exact at all levels, never interpolated.

A rectangular single-patch mesh is provided for convergence studies and
small verification problems.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = ["CrossSectionMesh", "box_cross_section", "disk_cross_section"]


class BilinearPatch:
    """Straight-edged quad from 4 corners ordered (00, 10, 01, 11)."""

    def __init__(self, corners):
        self.corners = np.asarray(corners, dtype=float)
        if self.corners.shape != (4, 2):
            raise ValueError("need 4 corner points")

    def map(self, xi, eta):
        c = self.corners
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        out = ((1 - xi) * (1 - eta))[..., None] * c[0] \
            + (xi * (1 - eta))[..., None] * c[1] \
            + ((1 - xi) * eta)[..., None] * c[2] \
            + (xi * eta)[..., None] * c[3]
        return out

    def jac(self, xi, eta):
        c = self.corners
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        d_xi = ((1 - eta))[..., None] * (c[1] - c[0]) \
            + eta[..., None] * (c[3] - c[2])
        d_eta = ((1 - xi))[..., None] * (c[2] - c[0]) \
            + xi[..., None] * (c[3] - c[1])
        return np.stack([d_xi, d_eta], axis=-1)


class BlendedCorePatch:
    """Ruled patch between one edge of the center square and a 90-degree
    arc of the core circle.  ``angle`` rotates the east instance."""

    def __init__(self, half_width, radius, angle):
        self.s = float(half_width)
        self.r = float(radius)
        ca, sa = np.cos(angle), np.sin(angle)
        self.rot = np.array([[ca, -sa], [sa, ca]])
        self.angle = float(angle)

    def _inner(self, eta):
        # east edge of the square traversed counterclockwise, rotated
        p = np.stack([np.full_like(np.asarray(eta, dtype=float), self.s),
                      self.s * (2.0 * np.asarray(eta, dtype=float) - 1.0)],
                     axis=-1)
        return p @ self.rot.T

    def _inner_d(self, eta):
        eta = np.asarray(eta, dtype=float)
        p = np.stack([np.zeros_like(eta), np.full_like(eta, 2.0 * self.s)],
                     axis=-1)
        return p @ self.rot.T

    def _theta(self, eta):
        return self.angle - 0.25 * np.pi + 0.5 * np.pi * np.asarray(eta, dtype=float)

    def _outer(self, eta):
        th = self._theta(eta)
        return self.r * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def _outer_d(self, eta):
        th = self._theta(eta)
        return self.r * 0.5 * np.pi * np.stack([-np.sin(th), np.cos(th)],
                                               axis=-1)

    def map(self, xi, eta):
        xi = np.asarray(xi, dtype=float)[..., None]
        return (1.0 - xi) * self._inner(eta) + xi * self._outer(eta)

    def jac(self, xi, eta):
        xi = np.asarray(xi, dtype=float)[..., None]
        d_xi = self._outer(eta) - self._inner(eta)
        d_eta = (1.0 - xi) * self._inner_d(eta) + xi * self._outer_d(eta)
        return np.stack([d_xi, d_eta], axis=-1)


class AnnularPatch:
    """90-degree annular sector, radius geometric in xi, angle affine
    in eta.  Geometric grading keeps the radial aspect ratio bounded
    over the r_core -> r_clad decade."""

    def __init__(self, r0, r1, angle):
        self.r0 = float(r0)
        self.ratio = float(r1) / float(r0)
        self.angle = float(angle)

    def _rho(self, xi):
        return self.r0 * self.ratio ** np.asarray(xi, dtype=float)

    def _theta(self, eta):
        return self.angle - 0.25 * np.pi + 0.5 * np.pi * np.asarray(eta, dtype=float)

    def map(self, xi, eta):
        rho = self._rho(xi)
        th = self._theta(eta)
        return np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)

    def jac(self, xi, eta):
        rho = self._rho(xi)
        th = self._theta(eta)
        drho = rho * np.log(self.ratio)
        c, s = np.cos(th), np.sin(th)
        d_xi = np.stack([drho * c, drho * s], axis=-1)
        d_eta = rho[..., None] * 0.5 * np.pi * np.stack([-s, c], axis=-1)
        return np.stack([d_xi, d_eta], axis=-1)


@dataclass
class Cell2D:
    patch_index: int
    sub_i: int
    sub_j: int
    nsub_x: int
    nsub_y: int
    tag: str
    vertices: tuple = None   # global ids (v00, v10, v01, v11)
    edges: tuple = None      # global ids (left, right, bottom, top)
    edge_forward: tuple = None


# local edge order: left (xi=0, +eta), right (xi=1, +eta),
# bottom (eta=0, +xi), top (eta=1, +xi)
_EDGE_CORNERS = ((0, 2), (1, 3), (0, 1), (2, 3))


@dataclass
class CrossSectionMesh:
    patches: list
    cells: list
    vertices: np.ndarray
    edges: np.ndarray            # (n_edges, 2) ascending vertex ids
    edge_cells: list             # per edge: list of cell ids
    boundary_edges: np.ndarray   # edge ids on the outer boundary
    r_core: float = None
    meta: dict = field(default_factory=dict)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    def cell_param(self, cell_id, xi, eta):
        """Patch parameters for cell-local coordinates."""
        c = self.cells[cell_id]
        u = (c.sub_i + np.asarray(xi, dtype=float)) / c.nsub_x
        v = (c.sub_j + np.asarray(eta, dtype=float)) / c.nsub_y
        return u, v

    def cell_map(self, cell_id, xi, eta):
        c = self.cells[cell_id]
        u, v = self.cell_param(cell_id, xi, eta)
        return self.patches[c.patch_index].map(u, v)

    def cell_jacobian(self, cell_id, xi, eta):
        """d(x,y)/d(xi,eta) for cell-local coordinates; (..., 2, 2)."""
        c = self.cells[cell_id]
        u, v = self.cell_param(cell_id, xi, eta)
        J = self.patches[c.patch_index].jac(u, v)
        return J / np.array([c.nsub_x, c.nsub_y])

    def audit(self, n_sample=4):
        """Connectivity and geometry checks; raises ValueError."""
        for eid, owners in enumerate(self.edge_cells):
            if len(owners) == 2:
                continue
            if len(owners) == 1 and eid in set(self.boundary_edges):
                continue
            raise ValueError("edge %d shared by %d cells" % (eid, len(owners)))
        s = np.linspace(0.05, 0.95, n_sample)
        XI, ETA = np.meshgrid(s, s, indexing="ij")
        for cid in range(self.n_cells):
            J = self.cell_jacobian(cid, XI, ETA)
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            if not np.all(det > 0.0):
                raise ValueError("non-positive Jacobian in cell %d" % cid)


def _connect(patches, tags, subdivisions, merge_tol, boundary_test):
    """Build cells, merged vertices, edges from patch subdivisions."""
    cells = []
    corner_pts = []
    for pidx, patch in enumerate(patches):
        nx, ny = subdivisions[pidx]
        for j in range(ny):
            for i in range(nx):
                cell = Cell2D(pidx, i, j, nx, ny, tags[pidx])
                cells.append(cell)
                for (ci, cj) in ((0, 0), (1, 0), (0, 1), (1, 1)):
                    u = (i + ci) / nx
                    v = (j + cj) / ny
                    corner_pts.append(patch.map(np.array(u), np.array(v)))
    pts = np.asarray(corner_pts)

    tree = cKDTree(pts)
    pairs = tree.query_pairs(merge_tol, output_type="ndarray")
    parent = np.arange(len(pts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(len(pts))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    vertices = pts[uniq]

    for cid, cell in enumerate(cells):
        ids = tuple(int(inverse[4 * cid + m]) for m in range(4))
        cell.vertices = ids

    edge_ids = {}
    edge_cells = []
    edge_list = []
    for cid, cell in enumerate(cells):
        eids, fwd = [], []
        for (a, b) in _EDGE_CORNERS:
            va, vb = cell.vertices[a], cell.vertices[b]
            if va == vb:
                raise ValueError("degenerate edge in cell %d" % cid)
            key = (min(va, vb), max(va, vb))
            if key not in edge_ids:
                edge_ids[key] = len(edge_list)
                edge_list.append(key)
                edge_cells.append([])
            eid = edge_ids[key]
            edge_cells[eid].append(cid)
            eids.append(eid)
            fwd.append(va < vb)
        cell.edges = tuple(eids)
        cell.edge_forward = tuple(fwd)

    edges = np.asarray(edge_list, dtype=int)
    boundary = [eid for eid, owners in enumerate(edge_cells)
                if len(owners) == 1]
    for eid in boundary:
        p0, p1 = vertices[edges[eid][0]], vertices[edges[eid][1]]
        if not (boundary_test(p0) and boundary_test(p1)):
            raise ValueError("unpaired interior edge %d" % eid)
    return cells, vertices, edges, edge_cells, np.asarray(boundary, dtype=int)


def disk_cross_section(r_core, r_clad, refinement=0):
    """Curved quad mesh of the disk of radius r_clad.

    The core disk (radius r_core) is a center square plus 4 blended
    patches; the cladding annulus is 4 geometrically graded patches.
    refinement r subdivides every patch into 4**r cells, so refinement
    0 gives 9 cells.
    """
    if not 0.0 < r_core < r_clad:
        raise ValueError("need 0 < r_core < r_clad")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    s = 0.5 * r_core
    square = BilinearPatch([(-s, -s), (s, -s), (-s, s), (s, s)])
    angles = [0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi]
    blends = [BlendedCorePatch(s, r_core, a) for a in angles]
    rings = [AnnularPatch(r_core, r_clad, a) for a in angles]
    patches = [square] + blends + rings
    tags = ["core"] * 5 + ["clad"] * 4
    n = 2 ** refinement
    subdivisions = [(n, n)] * len(patches)

    # matching points across patch seams coincide to rounding error;
    # distinct vertices are separated by at least an element width
    merge_tol = 1e-8 * r_clad

    def on_rim(pt):
        return abs(np.hypot(*pt) - r_clad) < 1e-6 * r_clad

    cells, vertices, edges, edge_cells, boundary = _connect(
        patches, tags, subdivisions, merge_tol, on_rim)
    mesh = CrossSectionMesh(patches, cells, vertices, edges, edge_cells,
                            boundary, r_core=r_core,
                            meta={"kind": "disk", "r_clad": r_clad,
                                  "refinement": refinement})
    mesh.audit()
    return mesh


def box_cross_section(lx, ly, nx=1, ny=1, x0=0.0, y0=0.0):
    """Rectangle [x0, x0+lx] x [y0, y0+ly] split into nx*ny cells."""
    if lx <= 0 or ly <= 0:
        raise ValueError("box dimensions must be positive")
    patch = BilinearPatch([(x0, y0), (x0 + lx, y0),
                           (x0, y0 + ly), (x0 + lx, y0 + ly)])
    merge_tol = 1e-10 * max(lx, ly)

    def on_rim(pt):
        eps = 1e-9 * max(lx, ly)
        return (abs(pt[0] - x0) < eps or abs(pt[0] - x0 - lx) < eps
                or abs(pt[1] - y0) < eps or abs(pt[1] - y0 - ly) < eps)

    cells, vertices, edges, edge_cells, boundary = _connect(
        [patch], ["core"], [(nx, ny)], merge_tol, on_rim)
    mesh = CrossSectionMesh([patch], cells, vertices, edges, edge_cells,
                            boundary, r_core=None,
                            meta={"kind": "box", "lx": lx, "ly": ly,
                                  "x0": x0, "y0": y0})
    mesh.audit()
    return mesh
