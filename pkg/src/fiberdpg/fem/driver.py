"""Global assembly and solve for the extruded waveguide DPG system.

Trial unknowns: per-element L2 field coefficients (eliminated element
by element) and globally shared tangential trace unknowns on the mesh
skeleton.  Trace unknowns are numbered by entity: horizontal edges,
vertical edges, horizontal faces, vertical faces; the electric trace
block is followed by the (scaled) magnetic trace block.

Element matrices are computed in reference orientation and shared
between congruent elements; orientation signs and carrier phase factors
enter only through a per-element diagonal when scattering into the
global Schur system.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import (dataclass, field as dataclass_field,
                         replace as dataclasses_replace)
from scipy.linalg import cho_factor, cho_solve, eigh

from ..constants import EPS0, MU0, Z0
from .assemble import (ElementCoefficients, condense_element,
                       element_geometry, element_residual_sq,
                       element_system, physical_test_tables)
from .polybasis import legendre_table
from .spaces import TestNormConfig

__all__ = [
    "BoundarySpec", "WaveguideProblem", "DPGSolution", "SolverError",
    "ConvergenceError", "assemble_solve", "discrete_infsup_probe",
    "tag_epsilon",
]


class SolverError(RuntimeError):
    """Linear algebra backend failed."""


class ConvergenceError(SolverError):
    """Iterative solve did not reach the requested tolerance."""


def tag_epsilon(core, clad=None):
    """Relative permittivity by material tag (step-index profile)."""
    values = {"core": complex(core)}
    if clad is not None:
        values["clad"] = complex(clad)

    def eps(tag, pts):
        if tag not in values:
            raise ValueError("no permittivity for material tag %r" % tag)
        return np.full(pts.shape[:-1], values[tag], dtype=complex)

    return eps


@dataclass
class BoundarySpec:
    """Boundary data for one solve.

    kind "waveguide": tangential E driven on the inlet plane (inlet is
    a callable pts -> (..., 3) complex field, or None for a dark
    launch), perfect conductor on the mantle, and either an impedance
    condition (physical impedance Z) or a perfect conductor at the
    outlet plane.

    kind "exact": tangential E driven on every boundary face from the
    callable `exact`; the magnetic trace is free everywhere.  Used by
    manufactured-solution studies.
    """
    kind: str = "waveguide"
    inlet: object = None
    outlet: str = "impedance"
    impedance: complex = None
    exact: object = None

    def __post_init__(self):
        if self.kind not in ("waveguide", "exact"):
            raise ValueError("unknown boundary kind %r" % self.kind)
        if self.kind == "exact":
            if self.exact is None:
                raise ValueError("exact boundary needs a field callable")
            return
        if self.outlet not in ("impedance", "pec"):
            raise ValueError("unknown outlet condition %r" % self.outlet)
        if self.outlet == "impedance":
            if self.impedance is None:
                raise ValueError("impedance outlet needs an impedance")
            if self.impedance == 0:
                raise ValueError("impedance must be nonzero")


@dataclass
class WaveguideProblem:
    """Discrete problem definition.

    epsilon is the relative permittivity: either a callable
    (tag, pts) -> complex array over points with trailing axis 3, or a
    plain dict {tag: value}.  A callable carrying a true
    ``wants_element`` attribute is called as (tag, pts, cell_id, layer)
    instead, so stored per-element fields (gain, temperature) can be
    looked up without point searches.  ansatz is an EnvelopeAnsatz or
    None for an unmapped (zero carrier) run.  stretch adds a complex coordinate
    stretch along z (absorbing end region); scale_h balances the two
    fields and defaults to the free-space impedance.  volume_load, used
    by manufactured-solution runs, maps points to the pair of source
    fields (Faraday row, Ampere row) in physical variables.
    """
    mesh: object
    spaces: object
    omega: float
    epsilon: object
    ansatz: object = None
    stretch: object = None
    scale_h: float = None
    norm: TestNormConfig = dataclass_field(default_factory=TestNormConfig)
    volume_load: object = None
    mu0: float = MU0
    eps0: float = EPS0

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if isinstance(self.epsilon, dict):
            self.epsilon = tag_epsilon(**self.epsilon)
        if self.scale_h is None:
            self.scale_h = Z0

    def element_k(self, z_mid):
        if self.ansatz is None:
            return 0.0
        return float(self.ansatz.k_at(z_mid))

    def carrier_factors(self):
        """Whether interface phase factors are in play (region-wise
        carrier)."""
        return self.ansatz is not None and not self.ansatz.uniform


# --------------------------------------------------------------- numbering

class TraceNumbering:
    """Global ids for trace dofs, per field: horizontal edges, vertical
    edges, horizontal faces, vertical faces."""

    def __init__(self, mesh, spaces):
        self.mesh = mesh
        self.p = p = spaces.p
        self.fpp = fpp = spaces.n_face_fn
        self.off_he = 0
        self.off_ve = self.off_he + mesh.n_h_edges * p
        self.off_hf = self.off_ve + mesh.n_v_edges * p
        self.off_vf = self.off_hf + mesh.n_h_faces * fpp
        self.n_single = self.off_vf + mesh.n_v_faces * fpp
        self.n_total = 2 * self.n_single
        # sign pattern of a face block under t1 reversal
        sa = np.array([(-1.0) ** (j + 1)
                       for a in range(2, p + 1) for j in range(p)])
        sb = np.array([(-1.0) ** a
                       for a in range(2, p + 1) for j in range(p)])
        self.face_flip = np.concatenate([sa, sb])
        self.edge_flip = np.array([(-1.0) ** (j + 1) for j in range(p)])

    def edge_dofs(self, kind, ent):
        base = (self.off_he if kind == "h" else self.off_ve) + ent * self.p
        return np.arange(base, base + self.p)

    def face_dofs(self, kind, ent):
        base = (self.off_hf if kind == "h" else self.off_vf) + ent * self.fpp
        return np.arange(base, base + self.fpp)

    def element_map(self, eid, level_factor):
        """Global dofs and diagonal (sign * factor) for one element's
        trace columns, single field, in local layout order."""
        mesh, p, fpp = self.mesh, self.p, self.fpp
        n_loc = 12 * p + 6 * fpp
        gd = np.empty(n_loc, dtype=np.int64)
        dd = np.ones(n_loc, dtype=complex)
        cs = mesh.cross_section
        for le, (kind, ent, fwd) in enumerate(mesh.element_edges(eid)):
            slc = slice(le * p, (le + 1) * p)
            gd[slc] = self.edge_dofs(kind, ent)
            if not fwd:
                dd[slc] = self.edge_flip
            if kind == "h":
                dd[slc] = dd[slc] * level_factor(ent // cs.n_edges)
        for lf, (kind, ent, fwd) in enumerate(mesh.element_faces(eid)):
            slc = slice(12 * p + lf * fpp, 12 * p + (lf + 1) * fpp)
            gd[slc] = self.face_dofs(kind, ent)
            if not fwd:
                dd[slc] = self.face_flip
            if kind == "h":
                dd[slc] = dd[slc] * level_factor(ent // cs.n_cells)
        return gd, dd

    def element_map_pair(self, eid, level_factor):
        gd, dd = self.element_map(eid, level_factor)
        gd2 = np.concatenate([gd, gd + self.n_single])
        dd2 = np.concatenate([dd, dd])
        return gd2, dd2

    def entity_of(self, gid):
        """(field, kind) block resolution, for preconditioner blocks."""
        g = gid % self.n_single
        if g < self.off_ve:
            return ("he", (g - self.off_he) // self.p)
        if g < self.off_hf:
            return ("ve", (g - self.off_ve) // self.p)
        if g < self.off_vf:
            return ("hf", (g - self.off_hf) // self.fpp)
        return ("vf", (g - self.off_vf) // self.fpp)


# ---------------------------------------------------------- face geometry

def _face_quadrature(problem, ref, eid, lf):
    """Physical quadrature data of one element face.

    Returns points (q, 3), weights (q,), the tangential-projected
    physical trace basis (n_f, q, 3), and the tangential projector
    (applied to targets): a unit normal (q, 3) or None when the face
    basis is exactly tangential.
    """
    mesh = problem.mesh
    cs = mesh.cross_section
    cell_id, layer = mesh.element(eid)
    z0, z1 = mesh.element_z(eid)
    dz = z1 - z0
    nq = ref.nq
    tab = ref.faces[lf]
    tr = tab["trace_vals"]
    n_f = tr.shape[0]

    if lf >= 4:
        xi, eta = ref.quad2d
        A = cs.cell_jacobian(cell_id, xi, eta)
        detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        invAT = np.empty_like(A)
        invAT[:, 0, 0] = A[:, 1, 1]
        invAT[:, 0, 1] = -A[:, 1, 0]
        invAT[:, 1, 0] = -A[:, 0, 1]
        invAT[:, 1, 1] = A[:, 0, 0]
        invAT /= detA[:, None, None]
        xy = cs.cell_map(cell_id, xi, eta)
        z = z0 if lf == 4 else z1
        pts = np.concatenate([xy, np.full((len(xy), 1), z)], axis=1)
        w = ref.w2 * detA
        vals = np.zeros((n_f, len(xy), 3))
        vals[..., :2] = np.einsum("qab,mqb->mqa", invAT, tr[..., :2])
        return pts, w, vals, None

    # vertical face: t1 runs along the 2D edge, t2 along z
    t1 = ref.x1
    if lf == 0:
        xi_f, eta_f, col = np.zeros(nq), t1, 1
    elif lf == 1:
        xi_f, eta_f, col = np.ones(nq), t1, 1
    elif lf == 2:
        xi_f, eta_f, col = t1, np.zeros(nq), 0
    else:
        xi_f, eta_f, col = t1, np.ones(nq), 0
    A = cs.cell_jacobian(cell_id, xi_f, eta_f)
    detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    invAT = np.empty_like(A)
    invAT[:, 0, 0] = A[:, 1, 1]
    invAT[:, 0, 1] = -A[:, 1, 0]
    invAT[:, 1, 0] = -A[:, 0, 1]
    invAT[:, 1, 1] = A[:, 0, 0]
    invAT /= detA[:, None, None]
    xy = cs.cell_map(cell_id, xi_f, eta_f)
    zq = z0 + dz * ref.x1

    q = nq * nq
    pts = np.empty((q, 3))
    pts[:, :2] = np.repeat(xy, nq, axis=0)
    pts[:, 2] = np.tile(zq, nq)
    T = A[:, :, col]
    tlen = np.hypot(T[:, 0], T[:, 1])
    w = (np.outer(ref.w1 * tlen, ref.w1) * dz).ravel()

    # in-plane reference components vary over both face directions,
    # the metric only over t1
    vals = np.zeros((n_f, q, 3))
    tr_xy = tr[..., :2].reshape(n_f, nq, nq, 2)
    vals[..., :2] = np.einsum("iab,mijb->mija", invAT,
                              tr_xy).reshape(n_f, q, 2)
    vals[..., 2] = tr[..., 2] / dz

    that = T / tlen[:, None]
    n_xy = np.stack([that[:, 1], -that[:, 0]], axis=-1)
    normal = np.zeros((q, 3))
    normal[:, :2] = np.repeat(n_xy, nq, axis=0)
    # project the basis tangentially onto the face
    vn = np.einsum("mqa,qa->mq", vals, normal)
    vals = vals - vn[..., None] * normal[None]
    return pts, w, vals, normal


def _project_trace_values(problem, boundary_faces, numbering, drivable,
                          target):
    """L2 projection of the tangential target onto the driven trace
    dofs over the given faces.  Returns {global dof: value}."""
    ref = problem.spaces.reference()
    factors = _level_factor_fn(problem)
    driven = sorted(drivable)
    if not driven:
        return {}
    index = {g: i for i, g in enumerate(driven)}
    n = len(driven)
    M = np.zeros((n, n), dtype=complex)
    b = np.zeros(n, dtype=complex)
    for eid, lf in boundary_faces:
        pts, w, vals, normal = _face_quadrature(problem, ref, eid, lf)
        gd, dd = numbering.element_map(eid, factors(eid))
        cols = ref.faces[lf]["cols"]
        sel = [m for m, c in enumerate(cols) if int(gd[c]) in index]
        if not sel:
            continue
        rows = np.array([index[int(gd[cols[m]])] for m in sel])
        dloc = np.array([dd[cols[m]] for m in sel])
        v = vals[sel]
        tgt = target(pts)
        if normal is not None:
            tn = np.einsum("qa,qa->q", tgt, normal)
            tgt = tgt - tn[:, None] * normal
        else:
            tgt = tgt.copy()
            tgt[:, 2] = 0.0
        mloc = np.einsum("mqa,nqa,q->mn", v, v, w)
        bloc = np.einsum("mqa,qa,q->m", v, tgt, w)
        scale = np.conj(dloc)
        M[np.ix_(rows, rows)] += (scale[:, None] * dloc[None, :]) * mloc
        b[rows] += scale * bloc
    try:
        vals_out = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError("boundary projection matrix is singular") from exc
    return {g: vals_out[i] for g, i in index.items()}


def _level_factor_fn(problem):
    """Per-element level -> carrier factor closure."""
    mesh = problem.mesh
    if not problem.carrier_factors():
        def fn(eid):
            return lambda level: 1.0
        return fn

    z_levels = mesh.z_levels

    def fn(eid):
        z0, z1 = mesh.element_z(eid)
        k_e = problem.element_k(0.5 * (z0 + z1))

        def factor(level):
            return np.exp(1j * k_e * z_levels[level])
        return factor
    return fn


# ----------------------------------------------------- boundary conditions

def _classify_bcs(problem, boundary, numbering):
    """Fixed trace dofs and their values.

    Returns (fixed_mask, values).  Order of application: magnetic trace
    removal at an impedance outlet, then driven electric traces from
    projection, then perfect-conductor zeros, which win at overlaps.
    """
    mesh = problem.mesh
    cs = mesh.cross_section
    nsingle = numbering.n_single
    fixed = np.zeros(numbering.n_total, dtype=bool)
    values = np.zeros(numbering.n_total, dtype=complex)

    def fix(dofs, val=0.0):
        fixed[dofs] = True
        values[dofs] = val

    last = mesh.n_layers
    if boundary.kind == "waveguide":
        # mantle PEC entity sets
        pec = []
        bvert = set()
        for e2d in cs.boundary_edges:
            v0, v1 = cs.edges[e2d]
            bvert.update((int(v0), int(v1)))
            for lev in range(last + 1):
                pec.append(numbering.edge_dofs("h", mesh.h_edge(e2d, lev)))
            for lay in range(last):
                pec.append(numbering.face_dofs("v", mesh.v_face(e2d, lay)))
        for v2d in bvert:
            for lay in range(last):
                pec.append(numbering.edge_dofs("v", mesh.v_edge(v2d, lay)))
        pec_dofs = np.concatenate(pec) if pec else np.empty(0, dtype=int)

        if boundary.outlet == "impedance":
            for c in range(cs.n_cells):
                fix(nsingle + numbering.face_dofs(
                    "h", mesh.h_face(c, last)))
        else:
            for e2d in range(cs.n_edges):
                fix(numbering.edge_dofs("h", mesh.h_edge(e2d, last)))
            for c in range(cs.n_cells):
                fix(numbering.face_dofs("h", mesh.h_face(c, last)))

        drivable = set()
        for e2d in range(cs.n_edges):
            drivable.update(numbering.edge_dofs("h", mesh.h_edge(e2d, 0)))
        for c in range(cs.n_cells):
            drivable.update(numbering.face_dofs("h", mesh.h_face(c, 0)))
        drivable -= set(int(g) for g in pec_dofs)

        if boundary.inlet is not None:
            proj = _project_trace_values(problem, mesh.inlet_faces(),
                                         numbering, drivable,
                                         boundary.inlet)
            for g, v in proj.items():
                fix([g], v)
        else:
            fix(sorted(drivable))

        fix(pec_dofs)
        return fixed, values

    # exact boundary: drive every boundary electric trace
    faces = (mesh.inlet_faces() + mesh.outlet_faces()
             + mesh.lateral_faces())
    drivable = set()
    ref = problem.spaces.reference()
    factors = _level_factor_fn(problem)
    for eid, lf in faces:
        gd, _ = numbering.element_map(eid, factors(eid))
        drivable.update(int(gd[c]) for c in ref.faces[lf]["cols"])
    proj = _project_trace_values(problem, faces, numbering, drivable,
                                 boundary.exact)
    for g, v in proj.items():
        fix([g], v)
    return fixed, values


# ----------------------------------------------------------------- solve

def _element_coefficients(problem, geom, impedance):
    mesh = problem.mesh
    tag = mesh.cross_section.cells[geom.cell_id].tag
    nz = len(geom.zq)
    q2 = len(geom.detA)
    pts = np.empty((q2, nz, 3))
    pts[..., :2] = geom.pts2[:, None, :]
    pts[..., 2] = geom.zq[None, :]
    if getattr(problem.epsilon, "wants_element", False):
        eps_r = np.asarray(problem.epsilon(tag, pts, geom.cell_id,
                                           geom.layer), dtype=complex)
    else:
        eps_r = np.asarray(problem.epsilon(tag, pts), dtype=complex)
    if eps_r.shape != (q2, nz):
        eps_r = np.broadcast_to(eps_r, (q2, nz)).copy()

    if problem.stretch is not None:
        jz = np.asarray(problem.stretch.jz(geom.zq), dtype=complex)
    else:
        jz = np.ones(nz, dtype=complex)
    jzvec = np.stack([jz, jz, 1.0 / jz], axis=-1)

    S = problem.scale_h
    w = problem.omega
    avec = (1j * w * problem.eps0 * S) * eps_r[:, :, None] \
        * jzvec[None, :, :]
    cvec = ((1j * w * problem.mu0 / S) * jzvec)[None, :, :]
    k_e = problem.element_k(geom.z0 + 0.5 * geom.dz)
    b = 1j * k_e * jz

    load = None
    if problem.volume_load is not None:
        f_far, f_amp = problem.volume_load(pts)
        load = (np.asarray(f_far, dtype=complex),
                S * np.asarray(f_amp, dtype=complex))
    return ElementCoefficients(avec, cvec, b, load=load,
                               impedance=impedance)


def _impedance_factor(problem, boundary, layer):
    if (boundary.kind == "waveguide" and boundary.outlet == "impedance"
            and layer == problem.mesh.n_layers - 1):
        return problem.scale_h / boundary.impedance
    return None


class _ClassCache:
    """Condensed element systems shared between congruent elements."""

    def __init__(self, ref, alpha, n_fields):
        self.ref = ref
        self.alpha = alpha
        self.n_fields = n_fields
        self.store = {}

    def get(self, geom, coef, want_full=False):
        ckey = coef.key()
        key = None if ckey is None else (geom.key(), ckey)
        if key is not None and not want_full and key in self.store:
            return self.store[key], None
        G, B, l = element_system(self.ref, geom, coef, self.alpha)
        cond, N = condense_element(G, B, l, self.n_fields)
        if key is not None:
            self.store[key] = cond
        if want_full:
            return cond, (G, B, l, N)
        return cond, None


def assemble_solve(problem, boundary, solver="direct",
                   compute_residuals=False, keep_system=False,
                   cg_tol=1e-10, cg_maxiter=5000):
    """Assemble the condensed global trace system and solve it.

    Returns a DPGSolution with recovered volume fields.  solver is
    "direct" (sparse LU, falling back to preconditioned CG on memory
    pressure) or "cg".
    """
    mesh = problem.mesh
    spaces = problem.spaces
    ref = spaces.reference()
    numbering = TraceNumbering(mesh, spaces)
    alpha = problem.norm.resolve(mesh.length)
    _validate_regions(problem)

    fixed, fix_vals = _classify_bcs(problem, boundary, numbering)
    factors = _level_factor_fn(problem)
    cache = _ClassCache(ref, alpha, spaces.n_field_cols)

    n_glob = numbering.n_total
    chunks = []
    rows_c, cols_c, vals_c = [], [], []
    rhs = np.zeros(n_glob, dtype=complex)
    elem_info = []
    budget = 0

    for eid in range(mesh.n_elements):
        geom = element_geometry(mesh, eid, ref)
        imp = _impedance_factor(problem, boundary, geom.layer)
        coef = _element_coefficients(problem, geom, imp)
        cond, _ = cache.get(geom, coef)
        gd, dd = numbering.element_map_pair(eid, factors(eid))
        elem_info.append((eid, geom, coef, cond, gd, dd))

        scaled = (np.conj(dd)[:, None] * dd[None, :]) * cond.S
        rows_c.append(np.repeat(gd, len(gd)))
        cols_c.append(np.tile(gd, len(gd)))
        vals_c.append(scaled.ravel())
        rhs[gd] += np.conj(dd) * cond.r_t
        budget += scaled.size
        if budget > 4_000_000:
            chunks.append(sp.coo_matrix(
                (np.concatenate(vals_c),
                 (np.concatenate(rows_c), np.concatenate(cols_c))),
                shape=(n_glob, n_glob)).tocsc())
            rows_c, cols_c, vals_c = [], [], []
            budget = 0
    if vals_c:
        chunks.append(sp.coo_matrix(
            (np.concatenate(vals_c),
             (np.concatenate(rows_c), np.concatenate(cols_c))),
            shape=(n_glob, n_glob)).tocsc())
    S_glob = chunks[0]
    for extra in chunks[1:]:
        S_glob = S_glob + extra

    free = np.where(~fixed)[0]
    fixed_idx = np.where(fixed)[0]
    S_free = S_glob[free][:, free].tocsc()
    rhs_free = rhs[free]
    if len(fixed_idx):
        rhs_free = rhs_free - S_glob[free][:, fixed_idx] @ fix_vals[fixed_idx]

    u = np.array(fix_vals, dtype=complex)
    stats = {"n_trace": n_glob, "n_free": len(free),
             "nnz": S_free.nnz, "alpha": alpha}
    u[free], stats["solver"] = _solve_linear(
        S_free, rhs_free, solver, numbering, free, cg_tol, cg_maxiter)

    fields = {}
    for eid, geom, coef, cond, gd, dd in elem_info:
        u_t = dd * u[gd]
        fields[eid] = cond.recover_fields(u_t)

    sol = DPGSolution(problem, boundary, numbering, u, fields,
                      fixed, stats)
    if keep_system:
        sol.system = (S_free, rhs_free, free)
    if compute_residuals:
        sol.element_residuals()
    return sol


def _validate_regions(problem):
    if problem.ansatz is None or problem.ansatz.uniform:
        return
    starts = [float(r[0]) for r in problem.ansatz.regions]
    for z in starts[1:]:
        problem.mesh.level_of_z(z)


def _solve_linear(S_free, rhs_free, solver, numbering, free, cg_tol,
                  cg_maxiter):
    if solver not in ("direct", "cg"):
        raise ValueError("unknown solver %r" % solver)
    if solver == "direct":
        try:
            lu = spla.splu(S_free)
            return lu.solve(rhs_free), "direct"
        except MemoryError:
            pass
        except RuntimeError as exc:
            raise SolverError("sparse factorization failed: %s" % exc)
    M = _block_jacobi(S_free, numbering, free)
    x, info = spla.cg(S_free, rhs_free, rtol=cg_tol, maxiter=cg_maxiter,
                      M=M)
    if info != 0:
        raise ConvergenceError(
            "iterative trace solve stalled (info=%d)" % info)
    return x, "cg"


def _block_jacobi(S_free, numbering, free):
    """Inverse of the entity-diagonal of the free system."""
    owners = [numbering.entity_of(int(g)) + (int(g) >= numbering.n_single,)
              for g in free]
    blocks = {}
    for i, key in enumerate(owners):
        blocks.setdefault(key, []).append(i)
    S_csr = S_free.tocsr()
    inv_blocks = []
    for key, idx in blocks.items():
        idx = np.asarray(idx)
        block = S_csr[idx][:, idx].toarray()
        inv_blocks.append((idx, np.linalg.inv(block)))

    def apply(x):
        y = np.zeros_like(x)
        for idx, inv in inv_blocks:
            y[idx] = inv @ x[idx]
        return y

    n = S_free.shape[0]
    return spla.LinearOperator((n, n), matvec=apply, dtype=complex)


# -------------------------------------------------------------- solution

class DPGSolution:
    """Solved trace system plus recovered per-element volume fields."""

    def __init__(self, problem, boundary, numbering, u_trace, fields,
                 fixed, stats):
        self.problem = problem
        self.boundary = boundary
        self.numbering = numbering
        self.u_trace = u_trace
        self.fields = fields
        self.fixed = fixed
        self.stats = stats
        self.system = None
        self._residuals = None

    # ------------------------------------------------------- evaluation
    def element_coeffs(self, eid, physical=True):
        """Field coefficients as (2, 3, p, p, p); the magnetic block is
        unscaled to physical units when physical is True."""
        p = self.problem.spaces.p
        c = self.fields[eid].reshape(2, 3, p, p, p).copy()
        if physical:
            c[1] /= self.problem.scale_h
        return c

    def evaluate_in_element(self, eid, xi, eta, zeta, physical=True):
        """Fields at tensor reference points; returns (E, H) arrays of
        shape (len(xi)*len(eta)*len(zeta)... broadcast grid, 3)."""
        p = self.problem.spaces.p
        c = self.element_coeffs(eid, physical=physical)
        tx = legendre_table(p - 1, np.atleast_1d(xi))
        ty = legendre_table(p - 1, np.atleast_1d(eta))
        tz = legendre_table(p - 1, np.atleast_1d(zeta))
        out = np.einsum("fdabc,ax,by,cz->fdxyz", c, tx, ty, tz)
        return out[0], out[1]

    def layer_of_z(self, z):
        levels = self.problem.mesh.z_levels
        lay = int(np.searchsorted(levels, z, side="right")) - 1
        return min(max(lay, 0), self.problem.mesh.n_layers - 1)

    def sample_plane(self, z, physical_fields=True, apply_carrier=False):
        """Fields on the cross-section plane at z, at the per-cell 2D
        quadrature grid.  Returns a dict with points (n, 2), weights
        (n,), E and H (n, 3).  With apply_carrier the envelope fields
        are converted to physical (carrier-multiplied) values."""
        mesh = self.problem.mesh
        cs = mesh.cross_section
        ref = self.problem.spaces.reference()
        p = self.problem.spaces.p
        lay = self.layer_of_z(z)
        z0 = mesh.z_levels[lay]
        dz = mesh.z_levels[lay + 1] - z0
        zeta = (z - z0) / dz
        xi, eta = ref.quad2d
        tx = legendre_table(p - 1, xi)
        ty = legendre_table(p - 1, eta)
        tz = legendre_table(p - 1, np.array([zeta]))[:, 0]

        pts, wts, Es, Hs = [], [], [], []
        for cid in range(cs.n_cells):
            eid = mesh.element_id(cid, lay)
            c = self.element_coeffs(eid, physical=True)
            vals = np.einsum("fdabc,aq,bq,c->fdq", c, tx, ty, tz)
            A = cs.cell_jacobian(cid, xi, eta)
            detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
            pts.append(cs.cell_map(cid, xi, eta))
            wts.append(ref.w2 * detA)
            Es.append(vals[0].T)
            Hs.append(vals[1].T)
        E = np.concatenate(Es)
        H = np.concatenate(Hs)
        if apply_carrier and self.problem.ansatz is not None:
            fac = self.problem.ansatz.carrier(z)
            E = E * fac
            H = H * fac
        return {"z": z, "points": np.concatenate(pts),
                "weights": np.concatenate(wts), "E": E, "H": H}

    def locate(self, x, y, tol=1e-10):
        """(cell, xi, eta) containing the cross-section point."""
        cs = self.problem.mesh.cross_section
        target = np.array([x, y])
        scale = max(1.0, np.abs(cs.vertices).max())
        for cid in range(cs.n_cells):
            corners = cs.vertices[list(cs.cells[cid].vertices)]
            lo = corners.min(axis=0) - 0.35 * np.ptp(corners, axis=0) \
                - 1e-12 * scale
            hi = corners.max(axis=0) + 0.35 * np.ptp(corners, axis=0) \
                + 1e-12 * scale
            if np.any(target < lo) or np.any(target > hi):
                continue
            q = np.array([0.5, 0.5])
            ok = False
            for _ in range(40):
                r = cs.cell_map(cid, q[0], q[1]) - target
                if np.hypot(*r) < tol * scale:
                    ok = True
                    break
                J = cs.cell_jacobian(cid, q[0], q[1])
                q = q - np.linalg.solve(J, r)
                q = np.clip(q, -0.25, 1.25)
            if ok and np.all(q > -1e-9) and np.all(q < 1 + 1e-9):
                return cid, float(np.clip(q[0], 0, 1)), \
                    float(np.clip(q[1], 0, 1))
        raise ValueError("point (%g, %g) not found in cross-section"
                         % (x, y))

    def axis_profile(self, z_array, x=0.0, y=0.0, physical_fields=True,
                     apply_carrier=False):
        """E at a fixed transverse point over a z grid; (n, 3)."""
        mesh = self.problem.mesh
        cid, xi, eta = self.locate(x, y)
        out = np.empty((len(z_array), 3), dtype=complex)
        for i, z in enumerate(np.asarray(z_array, dtype=float)):
            lay = self.layer_of_z(z)
            z0 = mesh.z_levels[lay]
            dz = mesh.z_levels[lay + 1] - z0
            zeta = (z - z0) / dz
            eid = mesh.element_id(cid, lay)
            E, _ = self.evaluate_in_element(
                eid, [xi], [eta], [zeta], physical=physical_fields)
            out[i] = E[:, 0, 0, 0]
            if apply_carrier and self.problem.ansatz is not None:
                out[i] *= self.problem.ansatz.carrier(z)
        return out

    # -------------------------------------------------------- residuals
    def element_residuals(self):
        """Energy residual per element (square root of the dual-norm
        residual); cached after the first call."""
        if self._residuals is not None:
            return self._residuals
        problem = self.problem
        ref = problem.spaces.reference()
        alpha = problem.norm.resolve(problem.mesh.length)
        factors = _level_factor_fn(problem)
        numbering = self.numbering
        sys_cache = {}
        out = np.zeros(problem.mesh.n_elements)
        for eid in range(problem.mesh.n_elements):
            geom = element_geometry(problem.mesh, eid, ref)
            imp = _impedance_factor(problem, self.boundary, geom.layer)
            coef = _element_coefficients(problem, geom, imp)
            ckey = coef.key()
            key = None if ckey is None else (geom.key(), ckey)
            if key is not None and key in sys_cache:
                G, B, l = sys_cache[key]
            else:
                G, B, l = element_system(ref, geom, coef, alpha)
                # absorbing layers make every layer its own class; cap
                # the cache so long runs do not hold hundreds of Grams
                if key is not None and len(sys_cache) < 40:
                    sys_cache[key] = (G, B, l)
            gd, dd = numbering.element_map_pair(eid, factors(eid))
            u_loc = np.concatenate([self.fields[eid],
                                    dd * self.u_trace[gd]])
            out[eid] = np.sqrt(element_residual_sq(G, B, l, u_loc))
        self._residuals = out
        return out

    def residual_norm(self):
        return float(np.sqrt(np.sum(self.element_residuals() ** 2)))


# ------------------------------------------------------------ inf-sup

def discrete_infsup_probe(problem, boundary, cap=2000):
    """Smallest singular value of the discretized operator in plain L2
    norms, for the problem as given and for its zero-carrier variant.

    The carrier mapping is an L2 isometry of the trial space, so the
    two values should agree closely on any mesh; a large gap flags a
    broken phase-factor path.  Because the norms here are plain L2 on
    both sides (not the residual-minimizing test norm used by the
    solver), the value tracks the stability constant of the boundary
    value problem itself and shrinks roughly like 1/length on domains
    long enough to hold the slowest resolved mode.  Returns a dict with
    ``sigma_min_standard`` (carrier stripped), ``sigma_min_envelope``
    (the problem's own ansatz; equal to the standard value when the
    problem has none) and bookkeeping data.  Dense; the total dof count
    must stay at or below cap.
    """
    sigma_env, info = _probe_sigma(problem, boundary, cap)
    if problem.ansatz is None:
        sigma_std = sigma_env
    else:
        stripped = dataclasses_replace(problem, ansatz=None)
        sigma_std, _ = _probe_sigma(stripped, boundary, cap)
    out = {"sigma_min_standard": sigma_std,
           "sigma_min_envelope": sigma_env}
    out.update(info)
    return out


def _probe_sigma(problem, boundary, cap):
    """One probe evaluation: assemble the bilinear-form matrix B over
    the free trial dofs, Riesz-map it through the plain test L2 mass,
    and pair with the trial L2 matrix M (volume mass plus tangential
    face mass over the skeleton); returns sqrt(lambda_min(N, M)) with
    bookkeeping.  Both norms are plain L2, so the value measures the
    raw operator, not the residual-minimizing energy setting."""
    mesh = problem.mesh
    spaces = problem.spaces
    ref = spaces.reference()
    numbering = TraceNumbering(mesh, spaces)
    alpha = problem.norm.resolve(mesh.length)
    _validate_regions(problem)
    fixed, _ = _classify_bcs(problem, boundary, numbering)
    factors = _level_factor_fn(problem)

    free = np.where(~fixed)[0]
    pos = -np.ones(numbering.n_total, dtype=int)
    pos[free] = np.arange(len(free))
    nf_elem = spaces.n_field_cols
    n_fields_tot = nf_elem * mesh.n_elements
    n_dofs = n_fields_tot + len(free)
    if n_dofs > cap:
        raise ValueError("probe needs %d dofs, cap is %d" % (n_dofs, cap))

    N = np.zeros((n_dofs, n_dofs), dtype=complex)
    M = np.zeros((n_dofs, n_dofs), dtype=complex)

    for eid in range(mesh.n_elements):
        geom = element_geometry(mesh, eid, ref)
        imp = _impedance_factor(problem, boundary, geom.layer)
        coef = _element_coefficients(problem, geom, imp)
        _, B_el, _ = element_system(ref, geom, coef, alpha)
        # test L2 mass over the (F, G) pair; rows of B carry the same
        # sqrt-weighted quadrature scaling as the tables used here
        val, _ = physical_test_tables(ref, geom)
        W = geom.detA[:, None] * geom.dz * ref.w_vol
        V_ = (val * np.sqrt(W)[None, :, :, None]).reshape(val.shape[0],
                                                          -1)
        MV = V_ @ V_.T
        half = np.linalg.solve(MV, B_el[:val.shape[0]])
        N_el = B_el[:val.shape[0]].conj().T @ half
        half = np.linalg.solve(MV, B_el[val.shape[0]:])
        N_el += B_el[val.shape[0]:].conj().T @ half
        gd, dd = numbering.element_map_pair(eid, factors(eid))
        fslice = np.arange(eid * nf_elem, (eid + 1) * nf_elem)
        tmask = pos[gd] >= 0
        tidx = n_fields_tot + pos[gd[tmask]]
        dduse = dd[tmask]
        Nff = N_el[:nf_elem, :nf_elem]
        Nft = N_el[:nf_elem, nf_elem:][:, tmask]
        Ntt = N_el[nf_elem:, nf_elem:][np.ix_(tmask, tmask)]
        N[np.ix_(fslice, fslice)] += Nff
        N[np.ix_(fslice, tidx)] += Nft * dduse[None, :]
        N[np.ix_(tidx, fslice)] += np.conj(dduse)[:, None] * Nft.conj().T
        N[np.ix_(tidx, tidx)] += (np.conj(dduse)[:, None]
                                  * dduse[None, :]) * Ntt

        # volume L2 mass of the scaled trial fields
        tau = ref.trial_scal
        mblk = np.einsum("mqz,nqz,qz->mn", tau, tau, W)
        p3 = spaces.n_scalar
        for blk in range(6):
            sl = fslice[blk * p3:(blk + 1) * p3]
            M[np.ix_(sl, sl)] += mblk

    # tangential face mass over the skeleton, each global face once
    seen = set()
    for eid in range(mesh.n_elements):
        gd, dd = numbering.element_map_pair(eid, factors(eid))
        for lf, (kind, ent, _) in enumerate(mesh.element_faces(eid)):
            if (kind, ent) in seen:
                continue
            seen.add((kind, ent))
            _, w, vals, _ = _face_quadrature(problem, ref, eid, lf)
            mloc = np.einsum("mqa,nqa,q->mn", vals, vals, w)
            cols = ref.faces[lf]["cols"]
            for half in (0, numbering.n_single):
                g = gd[cols] if half == 0 else gd[len(gd) // 2 + cols]
                d = dd[cols]
                keep = pos[g] >= 0
                if not np.any(keep):
                    continue
                tidx = n_fields_tot + pos[g[keep]]
                dk = d[keep]
                M[np.ix_(tidx, tidx)] += (np.conj(dk)[:, None]
                                          * dk[None, :]) \
                    * mloc[np.ix_(keep, keep)]

    lam = eigh(N, M, subset_by_index=[0, 0], eigvals_only=True)
    sigma = float(np.sqrt(max(lam[0], 0.0)))
    return sigma, {"n_dofs": n_dofs, "alpha": alpha,
                   "n_fields": n_fields_tot, "n_free_traces": len(free)}
