"""Element matrices for the broken ultraweak envelope system.

Scaled variables: the magnetic field and its trace are multiplied by a
balancing factor S (usually the free-space wave impedance), which makes
the two first-order equations carry coefficients of comparable size.
With volume coefficients

    a = i omega eps S  * diag(Jz, Jz, 1/Jz)
    c = i omega mu / S * diag(Jz, Jz, 1/Jz)
    b = i k Jz

(Jz the complex z-stretch derivative, 1 outside absorbing regions), the
local sesquilinear form couples trial unknowns to the two adjoint
residual fields of a test pair v = (F, G):

    R_E(v) = curl F + conj(b) ez x F - conj(a) G      (pairs E)
    R_H(v) = curl G + conj(b) ez x G + conj(c) F      (pairs H)

and the test norm is |R_E|^2 + |R_H|^2 + alpha^2 (|F|^2 + |G|^2).
F tests the equation containing curl E, G the one containing curl H, so
the E trace couples to F and the H trace to G through the face duality
pairing, which is evaluated on the reference element (covariant fields
make it metric-free).  Orientation signs and interface carrier factors
are applied when scattering into the global system, so element matrices
depend only on geometry and coefficients and can be shared between
congruent elements.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "ElementCoefficients", "ElementGeometry", "CondensedElement",
    "element_geometry", "element_system", "condense_element",
    "element_residual_sq",
]


def _rot_ez(v):
    """ez x v on the last axis."""
    out = np.zeros_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


@dataclass
class ElementGeometry:
    cell_id: int
    layer: int
    A: np.ndarray        # (q2, 2, 2) cross-section Jacobian
    detA: np.ndarray     # (q2,)
    invAT: np.ndarray    # (q2, 2, 2)
    pts2: np.ndarray     # (q2, 2) physical cross-section points
    z0: float
    dz: float
    zq: np.ndarray       # (nz,) physical z of quadrature points

    def key(self):
        return (np.round(self.A, 12).tobytes(), np.float64(self.dz).tobytes())


def element_geometry(mesh, eid, ref):
    cs = mesh.cross_section
    cell_id, layer = mesh.element(eid)
    xi, eta = ref.quad2d
    A = cs.cell_jacobian(cell_id, xi, eta)
    detA = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    if np.any(detA <= 0.0):
        raise ValueError("non-positive Jacobian in element %d" % eid)
    invAT = np.empty_like(A)
    invAT[:, 0, 0] = A[:, 1, 1]
    invAT[:, 0, 1] = -A[:, 1, 0]
    invAT[:, 1, 0] = -A[:, 0, 1]
    invAT[:, 1, 1] = A[:, 0, 0]
    invAT /= detA[:, None, None]
    pts2 = cs.cell_map(cell_id, xi, eta)
    z0, z1 = mesh.element_z(eid)
    dz = z1 - z0
    zq = z0 + dz * ref.x1
    return ElementGeometry(cell_id, layer, A, detA, invAT, pts2,
                           z0, dz, zq)


@dataclass
class ElementCoefficients:
    """Pointwise volume coefficients of one element.

    avec, cvec broadcast against (q2, nz, 3); b has shape (nz,).
    load, if present, is (f_faraday, f_ampere) sampled at the volume
    quadrature points, already in scaled variables; f_faraday is tested
    by F, f_ampere by G.  impedance, if set, is the factor S/Z applied
    on the top face of the element.
    """
    avec: np.ndarray
    cvec: np.ndarray
    b: np.ndarray
    load: tuple = None
    impedance: complex = None

    def key(self):
        if self.load is not None:
            return None
        parts = [np.round(np.asarray(x), 14).tobytes()
                 for x in (self.avec, self.cvec, self.b)]
        parts.append(repr(self.impedance))
        return tuple(parts)


def physical_test_tables(ref, geom):
    """Covariant test values and transformed curls; (n, q2, nz, 3)."""
    v, c = ref.test_vals, ref.test_curls
    val = np.empty_like(v)
    val[..., :2] = np.einsum("qab,nqzb->nqza", geom.invAT, v[..., :2])
    val[..., 2] = v[..., 2] / geom.dz
    curl = np.empty_like(c)
    scale = geom.detA[:, None] * geom.dz
    curl[..., :2] = np.einsum("qab,nqzb->nqza", geom.A, c[..., :2]) \
        / scale[None, :, :, None]
    curl[..., 2] = c[..., 2] / geom.detA[None, :, None]
    return val, curl


def element_system(ref, geom, coef, alpha):
    """Gram matrix, rectangular form, and load of one element.

    Column layout: E components (3 p^3), scaled H components (3 p^3),
    then E trace (12 p^2) and scaled H trace (12 p^2), all in reference
    orientation.
    """
    p = ref.p
    nt = ref.n_test
    n_scal = p ** 3
    nf = 6 * n_scal
    ntr = 12 * p ** 2
    ncol = nf + 2 * ntr

    val, curl = physical_test_tables(ref, geom)
    W = geom.detA[:, None] * geom.dz * ref.w_vol
    sw = np.sqrt(W)[None, :, :, None]

    bbar = np.conj(coef.b)
    Ct = curl.astype(complex)
    Ct += bbar[None, None, :, None] * _rot_ez(val)
    Ct *= sw
    V = val * sw
    aV = np.conj(np.broadcast_to(coef.avec, (1,) + V.shape[1:])) * V
    cV = np.conj(np.broadcast_to(coef.cvec, (1,) + V.shape[1:])) * V

    C_ = Ct.reshape(nt, -1)
    V_ = V.reshape(nt, -1)
    aV_ = aV.reshape(nt, -1)
    cV_ = cV.reshape(nt, -1)

    M_C = C_ @ C_.conj().T
    M_V = (V_ @ V_.T).astype(complex)
    M_aV = aV_ @ aV_.conj().T
    M_cV = cV_ @ cV_.conj().T
    X_Ca = C_ @ aV_.conj().T
    X_cC = cV_ @ C_.conj().T

    a2 = alpha * alpha
    G = np.empty((2 * nt, 2 * nt), dtype=complex)
    G[:nt, :nt] = M_C + M_cV + a2 * M_V
    G[:nt, nt:] = -X_Ca + X_cC
    G[nt:, :nt] = G[:nt, nt:].conj().T
    G[nt:, nt:] = M_C + M_aV + a2 * M_V

    # stacked adjoint residual rows over the (F, G) pair
    A1 = np.vstack([C_, -aV_])
    A2 = np.vstack([cV_, C_])

    B = np.zeros((2 * nt, ncol), dtype=complex)
    tau = (ref.trial_scal * np.sqrt(W)[None]).reshape(n_scal, -1)
    A1c = A1.reshape(2 * nt, -1, 3)
    A2c = A2.reshape(2 * nt, -1, 3)
    for comp in range(3):
        B[:, comp * n_scal:(comp + 1) * n_scal] = \
            np.conj(A1c[:, :, comp]) @ tau.T
        B[:, nf // 2 + comp * n_scal:nf // 2 + (comp + 1) * n_scal] = \
            np.conj(A2c[:, :, comp]) @ tau.T

    for f in range(6):
        tab = ref.faces[f]
        cols = tab["cols"]
        D = tab["duality"]
        B[:nt, nf + cols] += D
        if coef.impedance is not None and f == 5:
            B[nt:, nf + cols] += -coef.impedance * _face_metric_mass(
                ref, geom, tab)
        else:
            B[nt:, nf + ntr + cols] += D

    l = np.zeros(2 * nt, dtype=complex)
    if coef.load is not None:
        f_far, f_amp = coef.load
        l[:nt] = np.conj(V_) @ (np.broadcast_to(f_far, V.shape[1:])
                                * np.sqrt(W)[..., None]).ravel()
        l[nt:] = np.conj(V_) @ (np.broadcast_to(f_amp, V.shape[1:])
                                * np.sqrt(W)[..., None]).ravel()
    return G, B, l


def _face_metric_mass(ref, geom, tab):
    """Tangential mass between test G and the E trace on the top face,
    with the physical surface metric; (n_test, n_face_tr)."""
    tr_t = np.einsum("qab,mqb->mqa", geom.invAT,
                     tab["trace_vals"][..., :2])
    te_t = np.einsum("qab,iqb->iqa", geom.invAT,
                     tab["test_vals"][..., :2])
    w = ref.w2 * geom.detA
    return np.einsum("iqa,mqa,q->im", te_t, tr_t, w)


@dataclass
class CondensedElement:
    """Trace Schur complement of one element class plus the operators
    needed to recover interior fields."""
    S: np.ndarray        # (n_tr, n_tr)
    r_t: np.ndarray      # (n_tr,)
    R: np.ndarray        # (n_f, n_tr) = Nff^-1 Nft
    Kff: tuple           # Cholesky factor of Nff
    n_f: np.ndarray
    n_fields: int

    def recover_fields(self, u_t):
        return cho_solve(self.Kff, self.n_f) - self.R @ u_t


def condense_element(G, B, l, n_fields):
    try:
        cho = cho_factor(G, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("test Gram matrix is not positive definite; "
                         "the local test norm is broken") from exc
    GB = cho_solve(cho, B, check_finite=False)
    N = B.conj().T @ GB
    n = B.conj().T @ cho_solve(cho, l, check_finite=False)
    nf = n_fields
    Nff = N[:nf, :nf]
    Nft = N[:nf, nf:]
    Ntt = N[nf:, nf:]
    try:
        Kff = cho_factor(Nff, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("field block of the normal equations is "
                         "singular") from exc
    R = cho_solve(Kff, Nft, check_finite=False)
    S = Ntt - Nft.conj().T @ R
    r_t = n[nf:] - R.conj().T @ n[:nf]
    return CondensedElement(S, r_t, R, Kff, n[:nf], nf), N


def element_residual_sq(G, B, l, u_local):
    """Squared energy residual |l - B u|^2 in the inverse-Gram norm."""
    r = l - B @ u_local
    cho = cho_factor(G, check_finite=False)
    val = np.vdot(r, cho_solve(cho, r, check_finite=False)).real
    return max(val, 0.0)
