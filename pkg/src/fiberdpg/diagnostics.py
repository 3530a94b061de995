"""Modal power decomposition and the beat/instability diagnostics.

Projections work on cross-section samples: a dict with ``points`` (n, 2),
``weights`` (n,) and ``E`` (n, 3), as produced by ``DPGSolution.sample_plane``
or assembled by hand from any quadrature grid.  Mode profiles are L2
orthonormalized over that discrete inner product before projecting, so the
recovered amplitudes obey the Bessel bound sum |a_i|^2 <= ||E_t||^2.

Powers use the transverse electric amplitudes with each mode's quasi-TEM
magnetic partner, in the bare time-average convention P = Re(E x conj(H)).e_z
shared with the amplifier bookkeeping.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModalPowers", "TMIResult", "orthonormal_profiles", "project_modes",
    "tmi_metric", "regime_classify", "mode_beat_spectrum",
    "write_modal_powers_csv", "write_tmi_sweep_csv",
]


def _inner(w, u, v):
    return complex(np.sum(w[:, None] * u * np.conj(v)))


def _orthonormalize(w, psi, eta):
    """Modified Gram-Schmidt on the E profiles; the matched H profiles get
    the same linear combination so each pair stays a consistent (E, H) mode."""
    m = psi.shape[0]
    scale = max(np.sqrt(abs(_inner(w, psi[i], psi[i]))) for i in range(m))
    for i in range(m):
        for _ in range(2):          # a second pass scrubs roundoff
            for j in range(i):
                c = _inner(w, psi[i], psi[j])
                psi[i] -= c * psi[j]
                eta[i] -= c * eta[j]
        nrm = np.sqrt(abs(_inner(w, psi[i], psi[i])))
        if nrm < 1e-8 * scale:
            raise ValueError(
                "mode profiles are linearly dependent on this sampling grid")
        psi[i] /= nrm
        eta[i] /= nrm
    return psi, eta


def orthonormal_profiles(plane, fields):
    """Mode (E, H) profiles on the plane's grid, L2-orthonormalized in E."""
    if not fields:
        raise ValueError("need at least one mode to project onto")
    pts = np.asarray(plane["points"], dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    psi = np.stack([np.asarray(f.transverse(x, y), dtype=complex)
                    for f in fields])
    eta = np.stack([np.asarray(f.matched_h(x, y), dtype=complex)
                    for f in fields])
    w = np.asarray(plane["weights"], dtype=float)
    return _orthonormalize(w, psi, eta)


def project_modes(plane, fields):
    """L2-project a sampled transverse field onto guided-mode profiles.

    plane: dict with points (n, 2), weights (n,), E (n, 3).
    fields: list of ModeField, fundamental first.

    Returns {labels, amplitudes, powers}: a_i = <E, psi_i> over the discrete
    inner product and P_i = |a_i|^2 times the Poynting flux of the
    orthonormalized (psi_i, eta_i) pair.
    """
    w = np.asarray(plane["weights"], dtype=float)
    E = np.asarray(plane["E"], dtype=complex)
    psi, eta = orthonormal_profiles(plane, fields)
    labels, amps, powers = [], [], []
    for i, f in enumerate(fields):
        a = _inner(w, E, psi[i])
        s = np.real(np.cross(psi[i], np.conj(eta[i])))[:, 2]
        powers.append(abs(a) ** 2 * float(np.sum(w * s)))
        amps.append(a)
        labels.append(f.mode.label)
    return {"labels": labels, "amplitudes": np.array(amps),
            "powers": np.array(powers)}


@dataclass(frozen=True)
class ModalPowers:
    """Per-mode powers over a series of time samples at one station."""

    labels: tuple
    times: np.ndarray
    powers: np.ndarray      # (n_times, n_modes), W

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        P = np.asarray(self.powers, dtype=float)
        if P.ndim != 2 or P.shape != (t.size, len(self.labels)):
            raise ValueError("powers must be (n_times, n_modes)")
        if np.any(P < -1e-12 * max(P.max(initial=0.0), 1.0)):
            raise ValueError("modal powers must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "powers", np.maximum(P, 0.0))


@dataclass(frozen=True)
class TMIResult:
    m_tmi: float
    threshold_flag: bool
    hom_fraction: np.ndarray    # per time sample


def tmi_metric(series, threshold=0.05):
    """Time-averaged higher-order-mode power fraction at the output.

    M = <sum_HOM P / sum_all P>_t with the arithmetic mean over samples; the
    flag trips at the 5 percent rule.  The fundamental column is the one
    labeled LP01 (the first column when no such label is present).
    """
    if series.powers.shape[0] < 2:
        raise ValueError("need at least two time samples")
    labels = list(series.labels)
    fm = labels.index("LP01") if "LP01" in labels else 0
    total = series.powers.sum(axis=1)
    if np.any(total <= 0.0):
        raise ValueError("zero total power in a time sample")
    frac = (total - series.powers[:, fm]) / total
    m = float(np.mean(frac))
    return TMIResult(m_tmi=m, threshold_flag=m >= threshold,
                     hom_fraction=frac)


def regime_classify(m_values, threshold=0.05):
    """Label each point of a pump sweep as stable, transition, or chaotic.

    Points below the threshold before the crossing are stable; from the
    crossing up to and including the first local maximum of M the sweep is in
    transition; past that maximum it is chaotic.  With no located maximum
    (monotone rise, or a sweep too short to bracket one) nothing is labeled
    chaotic.
    """
    m = np.asarray(m_values, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("need a 1d sweep of metric values")
    above = np.nonzero(m >= threshold)[0]
    if above.size == 0:
        return ["stable"] * m.size
    cross = int(above[0])
    peak = None
    for i in range(cross, m.size - 1):
        left_ok = i == 0 or m[i] >= m[i - 1]
        if left_ok and m[i] >= m[i + 1]:
            peak = i
            break
    labels = []
    for i in range(m.size):
        if i < cross:
            labels.append("stable")
        elif peak is None or i <= peak:
            labels.append("transition")
        else:
            labels.append("chaotic")
    return labels


def mode_beat_spectrum(z, intensity, floor=0.05):
    """Dominant spatial beat wavenumbers of an axial irradiance trace.

    z in um, uniformly spaced; returns wavenumbers in rad/mm sorted by
    descending spectral amplitude, plus the DFT bin width.  A trace with no
    oscillating part (a single guided mode) returns no peaks.
    """
    z = np.asarray(z, dtype=float)
    I = np.asarray(intensity, dtype=float)
    if z.size != I.size or z.size < 8:
        raise ValueError("need at least eight uniform samples")
    dz = np.diff(z)
    if np.ptp(dz) > 1e-9 * abs(dz[0]):
        raise ValueError("beat sampling must be uniform in z")
    spec = np.abs(np.fft.rfft(I - I.mean()))
    bin_width = 2000.0 * np.pi / (z[-1] - z[0] + dz[0])   # rad/mm
    if spec.max() <= 1e-9 * z.size * max(abs(I).max(), 1e-300):
        return {"wavenumbers": np.array([]), "amplitudes": np.array([]),
                "bin_width": bin_width}
    idx = [i for i in range(1, spec.size - 1)
           if spec[i] >= spec[i - 1] and spec[i] >= spec[i + 1]
           and spec[i] >= floor * spec.max()]
    if not idx:
        idx = [int(np.argmax(spec[1:])) + 1]
    idx.sort(key=lambda i: -spec[i])
    if idx[0] < 3:
        raise ValueError("sampling window spans fewer than three beats")
    k = np.array(idx, dtype=float) * bin_width
    return {"wavenumbers": k, "amplitudes": spec[idx], "bin_width": bin_width}


def write_modal_powers_csv(path, labels, rows):
    """Write (z, t, P_mode...) rows; `rows` yields (z, t, powers)."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["z", "t"] + [f"P_{lab}" for lab in labels])
        for z, t, powers in rows:
            wr.writerow([f"{z:.9g}", f"{t:.9g}"]
                        + [f"{p:.9g}" for p in powers])


def write_tmi_sweep_csv(path, pump_powers, metrics, regimes):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["pump_power", "m_tmi", "regime"])
        for p, m, r in zip(pump_powers, metrics, regimes):
            wr.writerow([f"{p:.9g}", f"{m:.9g}", r])
