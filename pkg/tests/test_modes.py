"""LP-mode solver tests: frozen constants, cutoffs, and a brute-force oracle."""

import math

import numpy as np
import pytest
from scipy.special import jv, jvp, kv, kvp

from fiberdpg.modes import (DomainError, FiberConfig, PoleError, beat_lengths,
                            characteristic_residual, cutoff_V, mode_field,
                            solve_modes)

# step-index large-mode-area fiber used for all frozen-constant checks
LMA = dict(r_core=12.7, r_clad=127.0, n_core=1.4512, n_clad=1.45,
           wavelength_nm=1064.0)

# expected propagation constants (1/um) and beat table (mm^-1, mm)
K_EXPECTED = [8.56833, 8.56630, 8.56380, 8.56322]
DK_EXPECTED = [2.03, 4.53, 5.11]
BEAT_EXPECTED = [3.10, 1.39, 1.23]


@pytest.fixture(scope="module")
def lma():
    return FiberConfig(**LMA)


@pytest.fixture(scope="module")
def lma_modes(lma):
    return solve_modes(lma)


def test_config_derived_quantities(lma):
    k0 = 2 * math.pi / 1.064
    assert lma.k_core == pytest.approx(k0 * 1.4512, rel=1e-12)
    assert lma.k_clad == pytest.approx(k0 * 1.45, rel=1e-12)
    assert lma.NA == pytest.approx(0.059, abs=2e-4)
    assert lma.V == pytest.approx(4.43, abs=5e-3)


def test_config_rejects_strong_guidance():
    with pytest.raises(ValueError, match="weakly-guiding"):
        FiberConfig(r_core=12.7, r_clad=127.0, n_core=1.60, n_clad=1.45,
                    wavelength_nm=1064.0)


def test_four_guided_modes(lma_modes):
    assert [m.label for m in lma_modes] == ["LP01", "LP11", "LP21", "LP02"]


def test_propagation_constants(lma_modes):
    for m, k_ref in zip(lma_modes, K_EXPECTED):
        assert abs(m.k_lp - k_ref) < 1e-4


def test_mode_window_and_residuals(lma, lma_modes):
    for m in lma_modes:
        assert lma.k_clad < m.k_lp < lma.k_core
        assert abs(characteristic_residual(m.l, m.zeta, lma)) < 1e-10
        vsq = (lma.r_core * m.zeta) ** 2 + (lma.r_core * m.chi) ** 2
        assert abs(vsq - lma.V**2) < 1e-12 * lma.V**2


def test_beat_lengths(lma_modes):
    rows = beat_lengths(lma_modes)
    for row, dk_ref, bl_ref in zip(rows, DK_EXPECTED, BEAT_EXPECTED):
        assert row["delta_k"] == pytest.approx(dk_ref, rel=0.01)
        assert row["beat_length"] == pytest.approx(bl_ref, rel=0.01)
    # wavelengths per beat, cross-checked against the ratio definition
    assert rows[0]["wavelengths_per_beat"] == pytest.approx(4220.85, rel=0.01)


def test_beat_lengths_degenerate(lma_modes):
    with pytest.raises(ValueError, match="degenerate"):
        beat_lengths([lma_modes[0], lma_modes[0]])


@pytest.mark.parametrize("lp,vc", [
    ((0, 1), None),
    ((1, 1), 2.405),
    ((2, 1), 3.832),
    ((0, 2), 3.832),
    ((3, 1), 5.136),
    ((1, 2), 5.520),
])
def test_cutoffs(lp, vc):
    got = cutoff_V(*lp)
    if vc is None:
        assert got is None
    else:
        assert abs(got - vc) < 1e-3


def test_mode_appears_at_cutoff():
    # shrink the core until V sits just above/below the LP11 cutoff
    vc = cutoff_V(1, 1)
    base = FiberConfig(**LMA)
    for eps, expect in [(1.02, 2), (0.98, 1)]:
        r = LMA["r_core"] * vc * eps / base.V
        cfg = FiberConfig(**{**LMA, "r_core": r})
        assert len(solve_modes(cfg)) == expect


def test_residual_domain_error(lma):
    with pytest.raises(DomainError):
        characteristic_residual(0, 1.1 * lma.V / lma.r_core, lma)


def test_residual_pole_error(lma):
    from scipy.special import jn_zeros
    x = jn_zeros(0, 1)[0]
    with pytest.raises(PoleError):
        characteristic_residual(0, x / lma.r_core, lma)


def test_mode_count_monotone_in_v():
    counts = []
    for r_core in np.linspace(4.0, 30.0, 12):
        cfg = FiberConfig(**{**LMA, "r_core": r_core, "r_clad": 300.0})
        counts.append(len(solve_modes(cfg)))
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def _brute_force_root_count(cfg, n=10_000):
    """Sign-change scan of the residual over a uniform zeta grid.

    Independent of the solver's bracketing: intervals containing a pole of
    J_l are discarded by checking for a J_l zero between the sample points.
    """
    from scipy.special import jn_zeros
    total = 0
    l = 0
    while True:
        xs = np.linspace(1e-3 * cfg.V, cfg.V * (1 - 1e-9), n)
        jl = jv(l, xs)
        y = np.sqrt(cfg.V**2 - xs**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            res = xs * jvp(l, xs) / jl - y * kvp(l, y) / kv(l, y)
        count = 0
        nz = jn_zeros(l, 40)
        for i in range(n - 1):
            if not (np.isfinite(res[i]) and np.isfinite(res[i + 1])):
                continue
            if res[i] * res[i + 1] < 0:
                # poles flip the sign too; skip intervals containing one
                if np.any((nz > xs[i]) & (nz < xs[i + 1])):
                    continue
                count += 1
        if count == 0 and l > 0:
            break
        total += count
        l += 1
    return total


def test_brute_force_oracle_equivalence():
    rng = np.random.default_rng(20240817)
    for _ in range(20):
        n_clad = rng.uniform(1.40, 1.50)
        n_core = n_clad * (1 + rng.uniform(1e-4, 0.03))
        cfg = FiberConfig(
            r_core=rng.uniform(2.0, 25.0),
            r_clad=400.0,
            n_core=n_core,
            n_clad=n_clad,
            wavelength_nm=rng.uniform(600.0, 2000.0),
        )
        assert len(solve_modes(cfg)) == _brute_force_root_count(cfg)


def test_mode_field_lp01_shape(lma, lma_modes):
    mf = mode_field(lma_modes[0], lma)
    r = np.linspace(0, lma.r_clad, 400)
    prof = mf.radial(r)
    assert np.argmax(np.abs(prof)) == 0          # peak on axis
    assert abs(prof[-1]) < 1e-10                 # dead at the jacket
    # radial symmetry
    psi_a = mf.scalar(3.0, 4.0)
    psi_b = mf.scalar(-4.0, 3.0)
    assert psi_a == pytest.approx(psi_b, rel=1e-12)


def test_mode_field_lp11_structure(lma, lma_modes):
    lp11 = next(m for m in lma_modes if m.label == "LP11")
    mf = mode_field(lp11, lma)
    assert mf.scalar(0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    # one azimuthal sign change between phi = 0 and phi = pi
    assert mf.scalar(5.0, 0.0) * mf.scalar(-5.0, 0.0) < 0


def test_mode_field_interface_continuity(lma, lma_modes):
    for m in lma_modes:
        mf = mode_field(m, lma)
        rc = lma.r_core
        below = mf.radial(np.array([rc * (1 - 1e-9)]))[0]
        above = mf.radial(np.array([rc * (1 + 1e-9)]))[0]
        assert abs(below - above) < 1e-8 * max(1.0, abs(below))


def test_mode_field_unit_norm(lma, lma_modes):
    # numeric L2 norm over the disk on a fine polar grid
    mf = mode_field(lma_modes[0], lma)
    r = np.linspace(1e-6, lma.r_clad, 4000)
    prof = mf._norm * mf.radial(r)
    val = 2 * math.pi * np.trapezoid(prof**2 * r, r)
    assert val == pytest.approx(1.0, rel=1e-3)


def test_mode_field_orthogonality(lma, lma_modes):
    # distinct l are orthogonal through the angular factor; same-l pairs
    # (LP01/LP02) through the radial profiles
    lp01 = mode_field(lma_modes[0], lma)
    lp02 = next(mode_field(m, lma) for m in lma_modes if m.label == "LP02")
    r = np.linspace(1e-6, lma.r_clad, 8000)
    inner = 2 * math.pi * np.trapezoid(
        (lp01._norm * lp01.radial(r)) * (lp02._norm * lp02.radial(r)) * r, r)
    assert abs(inner) < 5e-3
