"""Extrusion of a cross-section mesh along z.

Elements are prisms over quad cells: hexahedra whose lateral faces are
curved according to the 2D patch maps and whose top and bottom faces are
parallel cross-section planes.  The z grid may be non-uniform (absorbing
end regions usually use a different layer thickness than the main run).

Global entity numbering for the trace spaces lives here.  Entities come
in four kinds, each indexed by a 2D object and a z index:

- horizontal edge:  (2D edge,   level)   l = 0 .. n_layers
- vertical edge:    (2D vertex, layer)   l = 0 .. n_layers-1
- horizontal face:  (2D cell,   level)
- vertical face:    (2D edge,   layer)

A 3D vertex id is v2d + level * n_vertices_2d, which makes ascending-id
edge orientation agree with +z on every vertical edge and with the 2D
convention on every horizontal edge.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ExtrudedMesh", "extrude"]


@dataclass
class ExtrudedMesh:
    cross_section: object
    z_levels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.z_levels, dtype=float)
        if z.ndim != 1 or len(z) < 2:
            raise ValueError("need at least two z levels")
        dz = np.diff(z)
        if np.any(dz <= 0.0):
            raise ValueError("z levels must be strictly increasing")
        self.z_levels = z

    # ------------------------------------------------------------ sizes
    @property
    def n_layers(self):
        return len(self.z_levels) - 1

    @property
    def n_levels(self):
        return len(self.z_levels)

    @property
    def length(self):
        return float(self.z_levels[-1] - self.z_levels[0])

    @property
    def n_elements(self):
        return self.cross_section.n_cells * self.n_layers

    # --------------------------------------------------- element access
    def element(self, eid):
        """(cell_id, layer) of element eid."""
        nc = self.cross_section.n_cells
        return eid % nc, eid // nc

    def element_id(self, cell_id, layer):
        return layer * self.cross_section.n_cells + cell_id

    def element_z(self, eid):
        _, layer = self.element(eid)
        return float(self.z_levels[layer]), float(self.z_levels[layer + 1])

    # -------------------------------------------------- entity counters
    @property
    def n_h_edges(self):
        return self.cross_section.n_edges * self.n_levels

    @property
    def n_v_edges(self):
        return self.cross_section.n_vertices * self.n_layers

    @property
    def n_h_faces(self):
        return self.cross_section.n_cells * self.n_levels

    @property
    def n_v_faces(self):
        return self.cross_section.n_edges * self.n_layers

    def h_edge(self, edge2d, level):
        return level * self.cross_section.n_edges + edge2d

    def v_edge(self, vertex2d, layer):
        return layer * self.cross_section.n_vertices + vertex2d

    def h_face(self, cell2d, level):
        return level * self.cross_section.n_cells + cell2d

    def v_face(self, edge2d, layer):
        return layer * self.cross_section.n_edges + edge2d

    # ------------------------------------------------- element topology
    def element_edges(self, eid):
        """12 reference-hex edges as (kind, entity_id, forward).

        Order: edges 0-3 along x at (y,z) in (00,10,01,11); 4-7 along y
        at (x,z); 8-11 along z at (x,y).  kind is 'h' or 'v'.
        """
        cell_id, layer = self.element(eid)
        cell = self.cross_section.cells[cell_id]
        # 2D local edge order: left, right, bottom, top
        e_left, e_right, e_bot, e_top = cell.edges
        f_left, f_right, f_bot, f_top = cell.edge_forward
        v00, v10, v01, v11 = cell.vertices
        lev0, lev1 = layer, layer + 1
        out = [
            ("h", self.h_edge(e_bot, lev0), f_bot),
            ("h", self.h_edge(e_top, lev0), f_top),
            ("h", self.h_edge(e_bot, lev1), f_bot),
            ("h", self.h_edge(e_top, lev1), f_top),
            ("h", self.h_edge(e_left, lev0), f_left),
            ("h", self.h_edge(e_right, lev0), f_right),
            ("h", self.h_edge(e_left, lev1), f_left),
            ("h", self.h_edge(e_right, lev1), f_right),
            ("v", self.v_edge(v00, layer), True),
            ("v", self.v_edge(v10, layer), True),
            ("v", self.v_edge(v01, layer), True),
            ("v", self.v_edge(v11, layer), True),
        ]
        return out

    def element_faces(self, eid):
        """6 reference-hex faces as (kind, entity_id, t1_forward).

        Order: x=0, x=1, y=0, y=1, z=0, z=1.  kind is 'v' or 'h'.  For
        vertical faces t1 is the in-plane horizontal direction; it runs
        along the underlying 2D edge, and t1_forward records whether the
        local parameterization agrees with the global (ascending vertex
        id) direction of that edge.  Horizontal faces are shared between
        layers of the same cell with identical parameterization, so
        t1_forward is always True.
        """
        cell_id, layer = self.element(eid)
        cell = self.cross_section.cells[cell_id]
        e_left, e_right, e_bot, e_top = cell.edges
        f_left, f_right, f_bot, f_top = cell.edge_forward
        out = [
            ("v", self.v_face(e_left, layer), f_left),
            ("v", self.v_face(e_right, layer), f_right),
            ("v", self.v_face(e_bot, layer), f_bot),
            ("v", self.v_face(e_top, layer), f_top),
            ("h", self.h_face(cell_id, layer), True),
            ("h", self.h_face(cell_id, layer + 1), True),
        ]
        return out

    # --------------------------------------------------- boundary sets
    def inlet_faces(self):
        """(element, local_face) pairs on z = z_levels[0]."""
        nc = self.cross_section.n_cells
        return [(self.element_id(c, 0), 4) for c in range(nc)]

    def outlet_faces(self):
        nc = self.cross_section.n_cells
        last = self.n_layers - 1
        return [(self.element_id(c, last), 5) for c in range(nc)]

    def lateral_faces(self):
        """(element, local_face) pairs on the mantle boundary."""
        cs = self.cross_section
        out = []
        local_of_edge = {}
        for cid, cell in enumerate(cs.cells):
            for loc, eid in enumerate(cell.edges):
                local_of_edge.setdefault(eid, []).append((cid, loc))
        for eid in cs.boundary_edges:
            (cid, loc), = local_of_edge[eid]
            for layer in range(self.n_layers):
                out.append((self.element_id(cid, layer), loc))
        return out

    def level_of_z(self, z, tol=None):
        """Index of the level at z; raises if z is not a mesh plane."""
        if tol is None:
            tol = 1e-9 * max(1.0, self.length)
        idx = int(np.argmin(np.abs(self.z_levels - z)))
        if abs(self.z_levels[idx] - z) > tol:
            raise ValueError("z = %g is not a mesh plane" % z)
        return idx


def extrude(cross_section, length=None, n_layers=None, z_levels=None,
            z0=0.0):
    """Extrude a cross-section mesh into a 3D waveguide mesh.

    Either pass explicit z_levels, or length and n_layers for a uniform
    grid starting at z0.
    """
    if z_levels is not None:
        return ExtrudedMesh(cross_section, np.asarray(z_levels, dtype=float))
    if length is None or n_layers is None:
        raise ValueError("pass z_levels, or length and n_layers")
    if length <= 0.0:
        raise ValueError("length must be positive")
    if int(n_layers) < 1:
        raise ValueError("need at least one layer")
    z = z0 + np.linspace(0.0, float(length), int(n_layers) + 1)
    return ExtrudedMesh(cross_section, z)
