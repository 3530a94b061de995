import numpy as np
import pytest

from fiberdpg import FiberConfig, mode_field, solve_modes
from fiberdpg.constants import EPS0, MU0
from fiberdpg.envelope import (
    EnvelopeAnsatz,
    FieldPair,
    MaterialCoefficients,
    apply_envelope_adjoint,
    apply_envelope_operator,
    envelope_to_physical,
    line_spectrum,
    physical_to_envelope,
    rotate_ez,
    shift_spectrum,
)

LMA = dict(r_core=12.7, r_clad=127.0, n_core=1.4512, n_clad=1.45,
           wavelength_nm=1064.0)


@pytest.fixture(scope="module")
def lma_config():
    return FiberConfig(**LMA)


@pytest.fixture(scope="module")
def lma_modes(lma_config):
    return solve_modes(lma_config)


# ---------------------------------------------------------------- helpers

def make_spectral_curl(lengths, shape):
    """Exact curl for trigonometric polynomials on a periodic box."""
    ks = [2j * np.pi * np.fft.fftfreq(n, L / n)
          for n, L in zip(shape, lengths)]
    KX = ks[0][:, None, None]
    KY = ks[1][None, :, None]
    KZ = ks[2][None, None, :]

    def curl(f):
        F = np.fft.fftn(np.asarray(f, dtype=complex), axes=(0, 1, 2))
        dx = lambda c: np.fft.ifftn(KX * c, axes=(0, 1, 2))
        dy = lambda c: np.fft.ifftn(KY * c, axes=(0, 1, 2))
        dz = lambda c: np.fft.ifftn(KZ * c, axes=(0, 1, 2))
        return np.stack([
            dy(F[..., 2]) - dz(F[..., 1]),
            dz(F[..., 0]) - dx(F[..., 2]),
            dx(F[..., 1]) - dy(F[..., 0]),
        ], axis=-1)

    return curl


def box_grid(lengths, shape):
    axes = [np.linspace(0.0, L, n, endpoint=False)
            for n, L in zip(shape, lengths)]
    return np.meshgrid(*axes, indexing="ij")


def random_trig_field(rng, lengths, shape, band=3, n_modes=8):
    """Smooth periodic complex 3-vector field, band-limited."""
    X, Y, Z = box_grid(lengths, shape)
    out = np.zeros(shape + (3,), dtype=complex)
    for _ in range(n_modes):
        m = rng.integers(-band, band + 1, size=3)
        amp = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        phase = np.exp(2j * np.pi * (m[0] * X / lengths[0]
                                     + m[1] * Y / lengths[1]
                                     + m[2] * Z / lengths[2]))
        out += amp * phase[..., None]
    return out


def l2_pair(a, b, lengths):
    """(a, b)_L2 on the periodic box by the exact trig quadrature."""
    vol = np.prod(lengths)
    return np.mean(np.sum(a * np.conj(b), axis=-1)) * vol


# ---------------------------------------------------------------- rotate_ez

def test_rotate_ez_unit_vectors():
    assert np.allclose(rotate_ez(np.array([1.0, 0, 0])), [0, 1, 0])
    assert np.allclose(rotate_ez(np.array([0.0, 1, 0])), [-1, 0, 0])
    assert np.allclose(rotate_ez(np.array([0.0, 0, 1])), [0, 0, 0])


def test_rotate_ez_twice_negates_transverse():
    rng = np.random.default_rng(7)
    v = rng.standard_normal((4, 5, 3)) + 1j * rng.standard_normal((4, 5, 3))
    twice = rotate_ez(rotate_ez(v))
    expect = np.stack([-v[..., 0], -v[..., 1], np.zeros_like(v[..., 2])],
                      axis=-1)
    assert np.allclose(twice, expect)


def test_rotate_ez_matches_cross_product():
    rng = np.random.default_rng(8)
    v = rng.standard_normal((10, 3))
    ez = np.array([0.0, 0.0, 1.0])
    assert np.allclose(rotate_ez(v), np.cross(ez, v))


# ------------------------------------------------------------- the operator

def test_operator_single_fourier_mode_exact():
    # one trig mode: curl and the whole operator are known analytically
    lengths = (2.0, 1.5, 3.0)
    shape = (16, 16, 16)
    X, Y, Z = box_grid(lengths, shape)
    a = 2.0 * np.pi * np.array([2 / lengths[0], -1 / lengths[1],
                                3 / lengths[2]])
    pE = np.array([0.3 - 0.2j, 1.1, -0.7j])
    pH = np.array([-0.5j, 0.25, 0.9 + 0.4j])
    phase = np.exp(1j * (a[0] * X + a[1] * Y + a[2] * Z))
    u = FieldPair(pE * phase[..., None], pH * phase[..., None])

    w, mu, eps, k = 1.3, 1.0, 2.0 + 0.5j, 0.8
    mat = MaterialCoefficients(mu0=mu, epsilon=eps, omega=w)
    ansatz = EnvelopeAnsatz(k_env=k)
    curl = make_spectral_curl(lengths, shape)
    res = apply_envelope_operator(u, ansatz, mat, curl)

    curlE = 1j * np.cross(a, pE)
    curlH = 1j * np.cross(a, pH)
    row_e = -1j * w * eps * pE + curlH - 1j * k * np.cross([0, 0, 1], pH)
    row_h = curlE - 1j * k * np.cross([0, 0, 1], pE) + 1j * w * mu * pH
    assert np.allclose(res.E, row_e * phase[..., None], atol=1e-11)
    assert np.allclose(res.H, row_h * phase[..., None], atol=1e-11)


def test_operator_k_zero_reduces_to_maxwell():
    rng = np.random.default_rng(11)
    lengths = (2.1, 1.7, 3.3)
    shape = (16, 16, 16)
    E = random_trig_field(rng, lengths, shape)
    H = random_trig_field(rng, lengths, shape)
    u = FieldPair(E, H)
    w, eps = 2.0, 1.4
    mat = MaterialCoefficients(mu0=1.0, epsilon=eps, omega=w)
    curl = make_spectral_curl(lengths, shape)
    res = apply_envelope_operator(u, EnvelopeAnsatz(k_env=0.0), mat, curl)
    assert np.allclose(res.E, -1j * w * eps * E + curl(H))
    assert np.allclose(res.H, curl(E) + 1j * w * 1.0 * H)


def test_adjoint_pairing_randomized():
    # <A u, v> == <u, A* v> on a periodic box, complex varying epsilon
    lengths = (2.1, 1.7, 3.3)
    shape = (16, 16, 16)
    curl = make_spectral_curl(lengths, shape)
    X, _, _ = box_grid(lengths, shape)
    eps = 1.5 + 0.4 * np.cos(2 * np.pi * X / lengths[0]) + 0.25j
    w = 1.9
    mat = MaterialCoefficients(mu0=1.0, epsilon=eps, omega=w)
    ansatz = EnvelopeAnsatz(k_env=3.7)
    rng = np.random.default_rng(12)
    for _ in range(5):
        u = FieldPair(random_trig_field(rng, lengths, shape),
                      random_trig_field(rng, lengths, shape))
        v = FieldPair(random_trig_field(rng, lengths, shape),
                      random_trig_field(rng, lengths, shape))
        Au = apply_envelope_operator(u, ansatz, mat, curl)
        Av = apply_envelope_adjoint(v, ansatz, mat, curl)
        lhs = l2_pair(Au.E, v.E, lengths) + l2_pair(Au.H, v.H, lengths)
        rhs = l2_pair(u.E, Av.E, lengths) + l2_pair(u.H, Av.H, lengths)
        assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), 1.0)


def test_adjoint_coefficients_conjugated():
    lengths = (1.0, 1.0, 1.0)
    shape = (8, 8, 8)
    curl = make_spectral_curl(lengths, shape)
    rng = np.random.default_rng(13)
    F = random_trig_field(rng, lengths, shape, band=2, n_modes=4)
    G = random_trig_field(rng, lengths, shape, band=2, n_modes=4)
    v = FieldPair(F, G)
    w, k = 1.2, 0.9
    eps = 2.0 + 0.7j
    mat = MaterialCoefficients(mu0=1.0, epsilon=eps, omega=w)
    out = apply_envelope_adjoint(v, EnvelopeAnsatz(k_env=k), mat, curl)
    rot = rotate_ez
    expect_e = 1j * w * np.conj(eps) * F + curl(G) - 1j * k * rot(G)
    expect_h = curl(F) - 1j * k * rot(F) - 1j * w * 1.0 * G
    assert np.allclose(out.E, expect_e)
    assert np.allclose(out.H, expect_h)


def test_commutation_with_carrier():
    # A_env u == exp(+ikz) * A_0 (exp(-ikz) u), k on the periodic grid
    lengths = (1.3, 1.1, 4.0)
    shape = (12, 12, 32)
    curl = make_spectral_curl(lengths, shape)
    _, _, Z = box_grid(lengths, shape)
    k = 2 * (2.0 * np.pi / lengths[2])
    rng = np.random.default_rng(14)
    u = FieldPair(random_trig_field(rng, lengths, shape),
                  random_trig_field(rng, lengths, shape))
    mat = MaterialCoefficients(mu0=1.0, epsilon=1.8 + 0.1j, omega=2.2)

    lhs = apply_envelope_operator(u, EnvelopeAnsatz(k_env=k), mat, curl)

    down = np.exp(-1j * k * Z)[..., None]
    up = np.exp(+1j * k * Z)[..., None]
    shifted = FieldPair(u.E * down, u.H * down)
    a0 = apply_envelope_operator(shifted, EnvelopeAnsatz(k_env=0.0), mat, curl)
    assert np.allclose(lhs.E, up * a0.E, atol=1e-10)
    assert np.allclose(lhs.H, up * a0.H, atol=1e-10)


def test_lp01_envelope_nearly_annihilated(lma_config, lma_modes):
    # the scalar-mode envelope with a spectrally matched H: the Faraday
    # row vanishes identically, the Ampere row is bounded by the
    # weak-guidance error, and a wrong carrier is far worse
    cfg = lma_config
    mode = lma_modes[0]
    n = 256
    half = 8.0 * cfg.r_core
    shape = (n, n, 1)
    lengths = (2 * half, 2 * half, 1.0)
    x = np.linspace(-half, half, n, endpoint=False)
    X, Y = np.meshgrid(x, x, indexing="ij")
    R = np.hypot(X, Y)

    mf = mode_field(mode, cfg)
    E = mf.transverse(X, Y)[..., None, :]  # z-constant slab
    curl = make_spectral_curl(lengths, shape)
    w = cfg.omega
    k = mode.k_lp
    H = (1j / (w * MU0)) * (curl(E) - 1j * k * rotate_ez(E))
    u = FieldPair(E, H)

    nsq = np.where(R < cfg.r_core, cfg.n_core ** 2, cfg.n_clad ** 2)
    mat = MaterialCoefficients(mu0=MU0, epsilon=EPS0 * nsq[..., None],
                               omega=w)

    res = apply_envelope_operator(u, EnvelopeAnsatz(k_env=k), mat, curl)
    scale = np.linalg.norm(w * EPS0 * nsq[..., None, None] * E)
    faraday = np.linalg.norm(res.H)
    ampere = np.linalg.norm(res.E)
    assert faraday < 1e-12 * scale
    assert ampere < 0.05 * scale

    bad = apply_envelope_operator(u, EnvelopeAnsatz(k_env=0.0), mat, curl)
    bad_norm = np.sqrt(np.linalg.norm(bad.E) ** 2
                       + np.linalg.norm(bad.H) ** 2)
    good_norm = np.sqrt(ampere ** 2 + faraday ** 2)
    assert bad_norm > 10.0 * good_norm


# ------------------------------------------------------------- conversions

def test_envelope_to_physical_lp01_traveling_wave(lma_config, lma_modes):
    cfg = lma_config
    mode = lma_modes[0]
    mf = mode_field(mode, cfg)
    pts = np.array([[0.0, 0.0], [5.0, 2.0], [10.0, -4.0]])
    E0 = mf.transverse(pts[:, 0], pts[:, 1])
    H0 = mf.matched_h(pts[:, 0], pts[:, 1])
    z = np.linspace(0.0, 50.0, 21)
    env = FieldPair(np.broadcast_to(E0[:, None, :], (3, 21, 3)),
                    np.broadcast_to(H0[:, None, :], (3, 21, 3)))
    phys = envelope_to_physical(env, EnvelopeAnsatz(k_env=mode.k_lp),
                                z[None, :])
    expect = E0[:, None, :] * np.exp(-1j * mode.k_lp * z)[None, :, None]
    assert phys.kind == "physical"
    assert np.allclose(phys.E, expect, rtol=1e-13)


def test_round_trip_identity():
    rng = np.random.default_rng(15)
    E = rng.standard_normal((4, 6, 3)) + 1j * rng.standard_normal((4, 6, 3))
    H = rng.standard_normal((4, 6, 3)) + 1j * rng.standard_normal((4, 6, 3))
    z = np.linspace(0.0, 9.0, 6)[None, :]
    for ansatz in (EnvelopeAnsatz(k_env=8.5),
                   EnvelopeAnsatz(regions=[(0, 4, 8.5), (4, 10, 2.0)])):
        env = FieldPair(E, H)
        back = physical_to_envelope(
            envelope_to_physical(env, ansatz, z), ansatz, z)
        assert back.kind == "envelope"
        assert np.allclose(back.E, E, rtol=1e-13)
        assert np.allclose(back.H, H, rtol=1e-13)


def test_conversion_rejects_wrong_flag():
    pair = FieldPair(np.zeros((2, 3)), np.zeros((2, 3)), kind="physical")
    with pytest.raises(ValueError):
        envelope_to_physical(pair, EnvelopeAnsatz(k_env=1.0), 0.0)
    env = FieldPair(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        physical_to_envelope(env, EnvelopeAnsatz(k_env=1.0), 0.0)


def test_norm_preserved_by_carrier():
    rng = np.random.default_rng(16)
    E = rng.standard_normal((50, 3)) + 1j * rng.standard_normal((50, 3))
    H = rng.standard_normal((50, 3)) + 1j * rng.standard_normal((50, 3))
    z = np.linspace(0.0, 12.0, 50)
    env = FieldPair(E, H)
    phys = envelope_to_physical(env, EnvelopeAnsatz(k_env=7.7), z)
    assert np.isclose(np.linalg.norm(phys.E), np.linalg.norm(E), rtol=1e-14)
    assert np.isclose(np.linalg.norm(phys.H), np.linalg.norm(H), rtol=1e-14)


def test_piecewise_interface_continuity():
    # envelope values jump by the interface factor, physical field does not
    l, k1, k2 = 3.0, 2.0, 0.5
    ansatz = EnvelopeAnsatz(regions=[(0.0, l, k1), (l, 7.0, k2)])
    rng = np.random.default_rng(17)
    vE = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    vH = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    jump = np.exp(-1j * (k1 - k2) * l)
    left = FieldPair(vE[None, :], vH[None, :])
    right = FieldPair(jump * vE[None, :], jump * vH[None, :])
    phys_left = envelope_to_physical(left, ansatz, np.array(l), side="-")
    phys_right = envelope_to_physical(right, ansatz, np.array(l), side="+")
    assert np.allclose(phys_left.E, phys_right.E, rtol=1e-13)
    assert np.allclose(phys_left.H, phys_right.H, rtol=1e-13)


def test_piecewise_k_lookup_sides():
    ansatz = EnvelopeAnsatz(regions=[(0.0, 2.0, 1.0), (2.0, 5.0, 3.0)])
    assert ansatz.k_at(1.0) == 1.0
    assert ansatz.k_at(4.0) == 3.0
    assert ansatz.k_at(2.0, side="-") == 1.0
    assert ansatz.k_at(2.0, side="+") == 3.0
    assert np.allclose(ansatz.k_at([0.5, 2.5, 5.0]), [1.0, 3.0, 3.0])
    with pytest.raises(ValueError):
        ansatz.k_at(5.5)


# ---------------------------------------------------------------- spectra

def test_pure_tone_envelope_spectrum_at_zero():
    n = 64
    Lz = 10.0
    z = 0.7 + np.arange(n) * (Lz / n)  # non-zero origin
    k0 = 5 * 2.0 * np.pi / Lz
    field = 0.8 * np.exp(-1j * k0 * z)
    ss = shift_spectrum(z, field, k_env=k0)
    i0 = np.argmin(np.abs(ss.k))
    assert abs(ss.envelope[i0] - 0.8) < 1e-12
    others = np.delete(np.abs(ss.envelope), i0)
    assert np.all(others < 1e-12)
    # the raw field spectrum reads the propagation constant directly
    assert np.isclose(ss.k[np.argmax(np.abs(ss.field))], k0)


def test_two_tone_envelope_peaks_at_beat_separation(lma_modes):
    k01 = lma_modes[0].k_lp
    k11 = lma_modes[1].k_lp
    dk = k01 - k11
    n = 64
    Lz = 4 * 2.0 * np.pi / dk  # beat separation lands on a DFT bin
    z = np.arange(n) * (Lz / n)
    field = 1.0 * np.exp(-1j * k01 * z) + 0.5 * np.exp(-1j * k11 * z)
    ss = shift_spectrum(z, field, k_env=k01)
    mags = np.abs(ss.envelope)
    top2 = np.argsort(mags)[-2:]
    peaks = sorted(ss.k[top2])
    assert np.isclose(peaks[1], 0.0, atol=1e-12)
    assert np.isclose(peaks[0], -dk, rtol=1e-12)
    assert abs(peaks[0] * 1e3 + 2.03) < 0.03  # around -2.03 per mm
    assert np.isclose(mags[top2].max(), 1.0, atol=1e-10)
    assert np.isclose(mags[top2].min(), 0.5, atol=1e-10)


def test_shift_is_circular_on_grid():
    rng = np.random.default_rng(18)
    n = 32
    Lz = 6.0
    z = np.arange(n) * (Lz / n)
    vals = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    m = 7
    k_env = m * 2.0 * np.pi / Lz
    ss = shift_spectrum(z, vals, k_env)
    assert np.allclose(np.roll(ss.field, -m), ss.envelope, atol=1e-12)


def test_zero_shift_is_identity():
    n = 16
    z = np.arange(n) * 0.25
    vals = np.sin(z) + 1j * np.cos(2 * z)
    ss = shift_spectrum(z, vals, 0.0)
    assert np.allclose(ss.field, ss.envelope)


def test_nonuniform_samples_rejected():
    z = np.array([0.0, 1.0, 2.5, 3.0])
    with pytest.raises(ValueError):
        shift_spectrum(z, np.ones_like(z), 1.0)
    with pytest.raises(ValueError):
        line_spectrum(z, np.ones_like(z))


# ------------------------------------------------------------- validation

def test_ansatz_validation():
    with pytest.raises(ValueError):
        EnvelopeAnsatz(k_env=-1.0)
    with pytest.raises(ValueError):
        EnvelopeAnsatz()
    with pytest.raises(ValueError):
        EnvelopeAnsatz(k_env=1.0, regions=[(0, 1, 1.0)])
    with pytest.raises(ValueError):
        EnvelopeAnsatz(regions=[(0, 1, 1.0), (1.5, 2, 1.0)])  # gap
    with pytest.raises(ValueError):
        EnvelopeAnsatz(regions=[(0, 1, 1.0), (1, 0.5, 1.0)])  # reversed
    with pytest.raises(ValueError):
        EnvelopeAnsatz(regions=[(0.5, 1, 1.0)])  # does not start at 0
    with pytest.raises(ValueError):
        EnvelopeAnsatz(regions=[(0, 1, -2.0)])  # negative wavenumber


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialCoefficients(mu0=1.0, epsilon=1.0, omega=0.0)
    with pytest.raises(ValueError):
        MaterialCoefficients(mu0=-1.0, epsilon=1.0, omega=1.0)
    with pytest.raises(ValueError):
        MaterialCoefficients(mu0=1.0, epsilon=-0.5 + 1j, omega=1.0)


def test_field_pair_validation():
    with pytest.raises(ValueError):
        FieldPair(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        FieldPair(np.zeros((2, 4)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        FieldPair(np.zeros((2, 3)), np.zeros((2, 3)), kind="spectral")
