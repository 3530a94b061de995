"""Transient heat conduction on the fiber cross-section.

Each longitudinal station carries an independent 2D conduction problem
(axial gradients are three orders of magnitude weaker than radial
ones).  Nodal bilinear elements on the cross-section mesh, row-sum
lumped mass so the implicit step preserves positivity, and a convective
(Robin) boundary on the outer rim.

Units are micrometre-native: conductivity W/(um K), volumetric heat
capacity J/(um^3 K), boundary coefficient W/(um^2 K), heat source
W/um^3.  Temperatures are rises above ambient.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import dataclass, field, replace

from .fem.polybasis import gauss_rule

__all__ = ["CrossSectionHeat", "ThermalState", "heat_step",
           "steady_state"]


def _q1_tables(xi, eta):
    """Bilinear basis and reference gradients at the quadrature grid.

    Vertex order matches Cell2D.vertices: (v00, v10, v01, v11).
    Returns (phi (4, q), dphi (4, q, 2))."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    phi = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta),
                    (1 - xi) * eta, xi * eta])
    dxi = np.stack([-(1 - eta), (1 - eta), -eta, eta])
    deta = np.stack([-(1 - xi), -xi, (1 - xi), xi])
    return phi, np.stack([dxi, deta], axis=-1)


class CrossSectionHeat:
    """Conduction operator for one cross-section mesh.

    Assembles the stiffness, lumped mass and Robin boundary matrices
    once; step() then advances one implicit (backward) step per call
    and steady() solves the stationary balance directly.  Heat sources
    are supplied per cell on this object's quadrature grid (cell-local
    tensor Gauss points, x-major), matching quad_points().
    """

    def __init__(self, mesh, conductivity, heat_capacity,
                 boundary_coeff, nq=4):
        if conductivity <= 0:
            raise ValueError("conductivity must be positive")
        if heat_capacity <= 0:
            raise ValueError("heat capacity must be positive")
        if boundary_coeff < 0:
            raise ValueError("boundary coefficient must be nonnegative")
        self.mesh = mesh
        self.conductivity = conductivity
        self.heat_capacity = heat_capacity
        self.boundary_coeff = boundary_coeff
        x1, w1 = gauss_rule(nq)
        XI, ETA = np.meshgrid(x1, x1, indexing="ij")
        self._xi = XI.ravel()
        self._eta = ETA.ravel()
        self._wq = np.outer(w1, w1).ravel()
        self._phi, dphi = _q1_tables(self._xi, self._eta)
        self.n_nodes = mesh.n_vertices

        rows, cols, kv = [], [], []
        mlump = np.zeros(self.n_nodes)
        self._detjw = []
        for cid in range(mesh.n_cells):
            verts = np.array(mesh.cells[cid].vertices)
            J = mesh.cell_jacobian(cid, self._xi, self._eta)
            detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            Jinv = np.linalg.inv(J)
            # physical gradients: dphi_ref @ J^{-1}
            gp = np.einsum("aqr,qrs->aqs", dphi, Jinv)
            w = self._wq * detJ
            self._detjw.append(w)
            ke = conductivity * np.einsum("aqs,bqs,q->ab", gp, gp, w)
            me = np.einsum("aq,bq,q->ab", self._phi, self._phi, w)
            mlump[verts] += me.sum(axis=1)
            rows.append(np.repeat(verts, 4))
            cols.append(np.tile(verts, 4))
            kv.append(ke.ravel())

        # Robin term on the outer rim, integrated along the true curve
        xg, wg = gauss_rule(nq)
        hat = np.stack([1.0 - xg, xg])
        for eid in mesh.boundary_edges:
            cid = mesh.edge_cells[eid][0]
            lf = self._local_edge(mesh, cid, eid)
            xi_e, eta_e, tang = self._edge_param(lf, xg)
            J = mesh.cell_jacobian(cid, xi_e, eta_e)
            dxy = np.einsum("qrs,sq->qr", J, tang)
            ds = np.sqrt(np.sum(dxy ** 2, axis=-1)) * wg
            # hat[0] belongs to the corner at s=0, hat[1] at s=1
            corners = _EDGE_CORNERS[lf]
            idx = np.array([mesh.cells[cid].vertices[c] for c in corners])
            re = boundary_coeff * np.einsum("aq,bq,q->ab", hat, hat, ds)
            rows.append(np.repeat(idx, 2))
            cols.append(np.tile(idx, 2))
            kv.append(re.ravel())

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        kv = np.concatenate(kv)
        self.K = sp.csr_matrix((kv, (rows, cols)),
                               shape=(self.n_nodes, self.n_nodes))
        self.mlump = mlump
        self._factor_dt = None
        self._factor = None

    @staticmethod
    def _local_edge(mesh, cid, eid):
        return mesh.cells[cid].edges.index(eid)

    @staticmethod
    def _edge_param(lf, s):
        # local edges: left/right run along eta, bottom/top along xi
        zero = np.zeros_like(s)
        one = np.ones_like(s)
        if lf == 0:
            return zero, s, np.stack([zero, one])
        if lf == 1:
            return one, s, np.stack([zero, one])
        if lf == 2:
            return s, zero, np.stack([one, zero])
        return s, one, np.stack([one, zero])

    # ---------------------------------------------------------- queries
    def quad_points(self, cell_id):
        """Physical quadrature points of one cell, shape (q, 2)."""
        return self.mesh.cell_map(cell_id, self._xi, self._eta)

    def interpolate(self, T, cell_id, xi, eta):
        """Nodal field evaluated inside a cell at local coordinates."""
        phi, _ = _q1_tables(np.asarray(xi), np.asarray(eta))
        verts = np.array(self.mesh.cells[cell_id].vertices)
        return np.tensordot(T[verts], phi, axes=(0, 0))

    def load(self, q_cells):
        """Nodal load from per-cell source samples on the quadrature
        grid; q_cells has shape (n_cells, q)."""
        F = np.zeros(self.n_nodes)
        for cid in range(self.mesh.n_cells):
            verts = np.array(self.mesh.cells[cid].vertices)
            F[verts] += self._phi @ (q_cells[cid] * self._detjw[cid])
        return F

    def region_mean(self, T, tag):
        """Area-weighted mean of the nodal field over cells with the
        given material tag."""
        tot = area = 0.0
        for cid in range(self.mesh.n_cells):
            if self.mesh.cells[cid].tag != tag:
                continue
            verts = np.array(self.mesh.cells[cid].vertices)
            vals = T[verts] @ self._phi
            tot += np.sum(vals * self._detjw[cid])
            area += np.sum(self._detjw[cid])
        if area == 0.0:
            raise ValueError("no cells tagged %r" % tag)
        return tot / area

    # ------------------------------------------------------------ solve
    def step(self, T, q_cells, dt):
        """One backward step of rho*cp dT/dt = div(k grad T) + Q."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self._factor_dt != dt:
            A = self.K + sp.diags(self.heat_capacity * self.mlump / dt)
            self._factor = spla.factorized(A.tocsc())
            self._factor_dt = dt
        rhs = self.heat_capacity * self.mlump / dt * T + self.load(q_cells)
        return self._factor(rhs)

    def steady(self, q_cells):
        """Stationary temperature for a fixed source."""
        if self.boundary_coeff == 0:
            raise ValueError("steady state needs a boundary coefficient")
        return spla.spsolve(self.K.tocsc(), self.load(q_cells))


# local edge order of Cell2D: left, right, bottom, top
_EDGE_CORNERS = ((0, 2), (1, 3), (0, 1), (2, 3))


@dataclass
class ThermalState:
    """Temperature rise per longitudinal station.

    temperatures has shape (n_stations, n_vertices); stations sit at
    the layer midpoints of the extruded mesh.  dn_dT converts the rise
    into a refractive-index perturbation.
    """
    solver: CrossSectionHeat
    z_stations: np.ndarray
    temperatures: np.ndarray
    dn_dT: float = 1.2e-5
    time: float = 0.0

    @classmethod
    def ambient(cls, solver, z_stations, dn_dT=1.2e-5):
        z = np.asarray(z_stations, dtype=float)
        return cls(solver=solver, z_stations=z,
                   temperatures=np.zeros((len(z), solver.n_nodes)),
                   dn_dT=dn_dT)

    @property
    def max_rise(self):
        return float(self.temperatures.max(initial=0.0))

    def index_shift(self, station, cell_id, xi, eta):
        """dn at local points of one cell for one station."""
        return self.dn_dT * self.solver.interpolate(
            self.temperatures[station], cell_id, xi, eta)


def heat_step(state, q_stations, dt):
    """Advance every station by one implicit step.

    q_stations has shape (n_stations, n_cells, q) on the solver's
    quadrature grid.  Returns a new ThermalState.
    """
    q_stations = np.asarray(q_stations, dtype=float)
    if q_stations.shape[0] != len(state.z_stations):
        raise ValueError("expected %d source stations, got %d"
                         % (len(state.z_stations), q_stations.shape[0]))
    T = np.empty_like(state.temperatures)
    for i in range(len(state.z_stations)):
        T[i] = state.solver.step(state.temperatures[i], q_stations[i], dt)
    return replace(state, temperatures=T, time=state.time + dt)


def steady_state(state, q_stations):
    """Stationary temperatures for a fixed source, every station."""
    q_stations = np.asarray(q_stations, dtype=float)
    T = np.empty_like(state.temperatures)
    for i in range(len(state.z_stations)):
        T[i] = state.solver.steady(q_stations[i])
    return replace(state, temperatures=T)
