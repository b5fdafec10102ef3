"""Time-local moment equations for the two coupled modes.

Every theory here is packaged as a Generator: a real 4x4 matrix M and drive
vector f0 acting on the moment vector f = (F_aa, F_bb, 2 Re F_ab, 2 Im F_ab)
through df/dt = -M f + f0.  Variants:

  br          non-secular Redfield; bath sampled at each mode's own frequency
  spbr        same, but the coherence columns sample the opposite frequency
              (slow Schroedinger-picture density matrix instead of slow
              interaction-picture one)
  secular     br/spbr with every phi_a*phi_b cross term removed
  collective  one jump operator phi_a psi_a + phi_b psi_b, rates at the mean
              frequency, no Lamb shift
  individual  independent decay of each mode at its own frequency, no Lamb shift
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bath import BathSpec, BathResponse, SystemSpec, occupation, response
from .exact import MultiBathSpec, SecondMoments

MARKOV_THRESHOLD = 0.1


class SingularGeneratorError(RuntimeError):
    """The generator has no (unique) steady state."""


@dataclass(frozen=True)
class Generator:
    """Moment-equation generator: df/dt = -M f + f0."""

    M: np.ndarray
    f0: np.ndarray
    kind: str

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        f0 = np.array(self.f0, dtype=float)
        if M.shape != (4, 4) or f0.shape != (4,):
            raise ValueError("generator needs a 4x4 matrix and a 4-vector")
        M.flags.writeable = False
        f0.flags.writeable = False
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "f0", f0)


@dataclass(frozen=True)
class KossakowskiPair:
    """Dissipator coefficient matrices L_down, L_up and the Lamb-shift matrix h."""

    Ldown: np.ndarray
    Lup: np.ndarray
    h: np.ndarray


def to_moment_vector(m: SecondMoments) -> np.ndarray:
    return np.array([m.faa, m.fbb, 2 * m.fab.real, 2 * m.fab.imag])


def from_moment_vector(f) -> SecondMoments:
    f = np.asarray(f, dtype=float)
    return SecondMoments(faa=float(f[0]), fbb=float(f[1]),
                         fab=complex(f[2], f[3]) / 2)


# --- generator assembly ------------------------------------------------------------

def _assemble(sys: SystemSpec, parts, kind: str) -> Generator:
    """Sum per-bath dissipative blocks and add the free coherence rotation."""
    M = np.zeros((4, 4))
    f0 = np.zeros(4)
    for p in parts:
        M += p[0]
        f0 += p[1]
    efree = sys.omega_b - sys.omega_a
    M[2, 3] += -efree
    M[3, 2] += efree
    return Generator(M=M, f0=f0, kind=kind)


def _dissipative_block(pa, pb, ra: BathResponse, rb: BathResponse, swap: bool):
    """Dissipative part of the 4x4 matrix and the drive vector for one bath.

    swap=False samples the coherence columns at each mode's own frequency
    (plain equation); swap=True exchanges the two sampling frequencies.
    """
    Ka, Kb = ra.K, rb.K
    X, Y = (Ka, Kb) if swap else (Kb, Ka)      # column-3/4 samples, rows 1/2
    A, B = (Kb, Ka) if swap else (Ka, Kb)      # gamma/lamb samples, rows 3/4
    gamma = pa**2 * A.real + pb**2 * B.real
    elamb = pa**2 * A.imag - pb**2 * B.imag
    M = np.array([
        [2 * pa**2 * Ka.real, 0.0, pa * pb * X.real, pa * pb * X.imag],
        [0.0, 2 * pb**2 * Kb.real, pa * pb * Y.real, -pa * pb * Y.imag],
        [2 * pa * pb * Ka.real, 2 * pa * pb * Kb.real, gamma, -elamb],
        [-2 * pa * pb * Ka.imag, 2 * pa * pb * Kb.imag, elamb, gamma],
    ])
    kbar_up = (ra.Kup + rb.Kup) / 2
    dk_up = (ra.Kup - rb.Kup) / 2
    f0 = 2 * np.array([pa**2 * ra.Kup.real, pb**2 * rb.Kup.real,
                       2 * pa * pb * kbar_up.real, -2 * pa * pb * dk_up.imag])
    return M, f0


def br_generator(sys: SystemSpec, bath: BathSpec) -> Generator:
    """Non-secular Redfield moment equation."""
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)
    return _assemble(sys, [_dissipative_block(sys.phi_a, sys.phi_b, ra, rb, False)], "br")


def spbr_generator(sys: SystemSpec, bath: BathSpec) -> Generator:
    """Slow-Schroedinger-picture variant: coherence columns sample the opposite mode."""
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)
    return _assemble(sys, [_dissipative_block(sys.phi_a, sys.phi_b, ra, rb, True)], "spbr")


def multibath_generator(multi: MultiBathSpec, sys: SystemSpec, kind: str) -> Generator:
    if kind not in ("br", "spbr"):
        raise ValueError("multibath generator supports kinds 'br' and 'spbr'")
    parts = []
    for cb in multi.baths:
        ra = response(cb.bath, sys.omega_a)
        rb = response(cb.bath, sys.omega_b)
        parts.append(_dissipative_block(cb.phi_a, cb.phi_b, ra, rb, kind == "spbr"))
    return _assemble(sys, parts, kind)


def secularize(g: Generator) -> Generator:
    """Zero every phi_a*phi_b cross term (and the coherence drive)."""
    if g.kind not in ("br", "spbr", "secular"):
        raise ValueError(f"cannot secularize a generator of kind {g.kind!r}")
    M = np.array(g.M)
    M[0:2, 2:4] = 0.0
    M[2:4, 0:2] = 0.0
    f0 = np.array(g.f0)
    f0[2:4] = 0.0
    return Generator(M=M, f0=f0, kind="secular")


# --- Kossakowski matrices and phenomenological forms ----------------------------------

def kossakowski(sys: SystemSpec, bath: BathSpec) -> KossakowskiPair:
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)

    def lmat(xa: complex, xb: complex, sign: float) -> np.ndarray:
        off = (xa + xb).real / 2 + sign * 1j * ((xa - xb) / 2).imag
        return np.array([[xa.real, off], [np.conj(off), xb.real]])

    Ka, Kb = ra.K, rb.K
    h = np.array([
        [Ka.imag, (Ka + Kb).imag / 2 - 1j * (Ka - Kb).real / 2],
        [(Ka + Kb).imag / 2 + 1j * (Ka - Kb).real / 2, Kb.imag],
    ])
    return KossakowskiPair(Ldown=lmat(ra.Kdown, rb.Kdown, +1.0),
                           Lup=lmat(ra.Kup, rb.Kup, -1.0), h=h)


def lindblad_rates(kp: KossakowskiPair) -> dict[str, tuple[float, float]]:
    """Eigenvalue pairs of L_down and L_up: mean rate +/- sqrt(mean^2 + |dK|^2)."""
    out = {}
    for name, L in (("down", kp.Ldown), ("up", kp.Lup)):
        mean = (L[0, 0].real + L[1, 1].real) / 2
        dk2 = ((L[0, 0].real - L[1, 1].real) / 2) ** 2 + L[0, 1].imag ** 2
        s = math.sqrt(mean**2 + dk2)
        out[name] = (mean + s, mean - s)
    return out


def _moment_equation(sys: SystemSpec, Ldown, Lup, h) -> tuple[np.ndarray, np.ndarray]:
    """Exact moment map of the quadratic master equation with coefficient
    matrices (Ldown, Lup, h); quartic terms cancel identically, so probing the
    four basis moment matrices determines M and f0 exactly."""
    phi = np.array([sys.phi_a, sys.phi_b])
    pp = np.outer(phi, phi)
    Vdn = pp * np.asarray(Ldown, dtype=complex)
    Vup = pp * np.asarray(Lup, dtype=complex)
    H = np.diag([sys.omega_a, sys.omega_b]).astype(complex) - pp * np.asarray(h, dtype=complex)
    Ht = np.conj(H)
    Vdnc = np.conj(Vdn)

    def fdot(f):
        F = np.array([[f[0], (f[2] + 1j * f[3]) / 2],
                      [(f[2] - 1j * f[3]) / 2, f[1]]], dtype=complex)
        R = (-1j * (F @ Ht - Ht @ F)
             - (Vdnc @ F + F @ Vdnc) + (Vup @ F + F @ Vup) + 2 * Vup)
        return np.array([R[0, 0].real, R[1, 1].real, 2 * R[0, 1].real, 2 * R[0, 1].imag])

    f0 = fdot(np.zeros(4))
    M = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        M[:, k] = f0 - fdot(e)
    return M, f0


def collective_generator(sys: SystemSpec, bath: BathSpec) -> Generator:
    """One collective jump operator, rates sampled at the mean frequency, no Lamb shift."""
    Om = sys.omega_mean
    j = float(bath.j(np.array(Om)))
    n = occupation(bath, Om)
    gdn, gup = math.pi * j * (n + 1), math.pi * j * n
    M, f0 = _moment_equation(sys, gdn * np.ones((2, 2)), gup * np.ones((2, 2)),
                             np.zeros((2, 2)))
    return Generator(M=M, f0=f0, kind="collective")


def individual_generator(sys: SystemSpec, bath: BathSpec) -> Generator:
    """Independent decay of each mode at its own frequency, no Lamb shift."""
    rates_dn, rates_up = [], []
    for w in (sys.omega_a, sys.omega_b):
        j = float(bath.j(np.array(w)))
        n = occupation(bath, w) if j > 0 else 0.0
        rates_dn.append(math.pi * j * (n + 1))
        rates_up.append(math.pi * j * n)
    M, f0 = _moment_equation(sys, np.diag(rates_dn), np.diag(rates_up), np.zeros((2, 2)))
    return Generator(M=M, f0=f0, kind="individual")


# --- evolution and fixed points --------------------------------------------------------

def _expm1_ratio(lam: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(1 - exp(-lam t))/lam, stable through lam -> 0."""
    x = np.multiply.outer(t, lam)
    small = np.abs(x) < 1e-8
    lam_safe = np.where(lam == 0, 1.0, lam)
    out = (1.0 - np.exp(-x)) / lam_safe[None, :]
    tser = t[:, None] * (1 - x / 2 + x**2 / 6)
    return np.where(small, tser, out)


def evolve(g: Generator, f_init, times, return_info: bool = False):
    """Trajectory f(t) = e^{-Mt} f_init + M^{-1}(1 - e^{-Mt}) f0 on the given times.

    Uses the eigendecomposition when M is comfortably diagonalizable, otherwise
    an adaptive RK45 integrator (noted in the returned info)."""
    times = np.asarray(times, dtype=float)
    f_init = np.asarray(f_init, dtype=float)
    lam, V = np.linalg.eig(g.M)
    cond = np.linalg.cond(V)
    if np.isfinite(cond) and cond < 1e8:
        ci = np.linalg.solve(V, f_init.astype(complex))
        c0 = np.linalg.solve(V, g.f0.astype(complex))
        decay = np.exp(-np.multiply.outer(times, lam))
        traj = (decay * ci[None, :] + _expm1_ratio(lam, times) * c0[None, :]) @ V.T
        traj = traj.real
        info = {"method": "eigendecomposition", "cond": float(cond)}
    else:
        sol = solve_ivp(lambda t, f: -g.M @ f + g.f0, (times[0], times[-1]), f_init,
                        t_eval=times, rtol=1e-10, atol=1e-12, method="RK45")
        if not sol.success:
            raise RuntimeError(f"moment-equation integration failed: {sol.message}")
        traj = sol.y.T
        info = {"method": "integrator", "cond": float(cond)}
    return (traj, info) if return_info else traj


def steady_state(g: Generator) -> np.ndarray:
    """Fixed point M^{-1} f0; raises when M is numerically singular."""
    cond = np.linalg.cond(g.M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularGeneratorError(
            f"generator is singular (condition number {cond:.2e}); no steady state")
    return np.linalg.solve(g.M, g.f0)


# --- spectra, stability, perturbative rates ---------------------------------------------

def _ktilde(sys: SystemSpec, baths) -> tuple[complex, complex]:
    if isinstance(baths, MultiBathSpec):
        ka = sum(cb.phi_a**2 * response(cb.bath, sys.omega_a).K for cb in baths.baths)
        kb = sum(cb.phi_b**2 * response(cb.bath, sys.omega_b).K for cb in baths.baths)
        return ka, kb
    return (sys.phi_a**2 * response(baths, sys.omega_a).K,
            sys.phi_b**2 * response(baths, sys.omega_b).K)


def closed_form_eigenvalues(sys: SystemSpec, baths) -> np.ndarray:
    """The four eigenvalues of the plain (br-kind) matrix in closed form:

        mu = Re[Ka~ + Kb~] +/- sqrt(Re Q +/- |Q|),
        Q  = 2 Ka~ Kb~ + (1/2) [Ka~ - Kb~ - i(wa - wb)]^2 .
    """
    ka, kb = _ktilde(sys, baths)
    Q = 2 * ka * kb + 0.5 * (ka - kb - 1j * (sys.omega_a - sys.omega_b)) ** 2
    base = (ka + kb).real
    out = []
    for s2 in (+1.0, -1.0):
        root = np.sqrt(complex(Q.real + s2 * abs(Q)))
        out.extend([base + root, base - root])
    return np.array(out)


def stability_margin(sys: SystemSpec, baths) -> float:
    """Left-hand side of the stability inequality; positive means all Re(mu) >= 0:

        2 D^2 Ka~' Kb~' + D (Ka~' + Kb~')(Ka~' Kb~'' - Kb~' Ka~'') > 0 .
    """
    ka, kb = _ktilde(sys, baths)
    d = sys.delta
    return (2 * d**2 * ka.real * kb.real
            + d * (ka.real + kb.real) * (ka.real * kb.imag - kb.real * ka.imag))


def markov_scale(sys: SystemSpec, bath: BathSpec) -> float:
    """|dK/dw| at the mean frequency; below MARKOV_THRESHOLD the stability
    guarantee of the plain equation applies."""
    Om = sys.omega_mean
    h = 1e-3 * max(1.0, abs(Om))
    dk = (response(bath, Om + h).K - response(bath, Om - h).K) / (2 * h)
    return abs(dk)


def br_perturbative_rate(sys: SystemSpec, bath: BathSpec) -> float:
    """Small-detuning slow eigenvalue of the plain equation (with the
    sampling-difference correction term)."""
    pa2, pb2 = sys.phi_a**2, sys.phi_b**2
    if pa2 * pb2 == 0:
        return 0.0
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)
    kbar, dk = (ra.K + rb.K) / 2, (ra.K - rb.K) / 2
    if kbar == 0:
        raise ZeroDivisionError("mean response vanishes")
    p2 = pa2 + pb2
    d = sys.delta
    lead = 8 * pa2 * pb2 * d**2 * kbar.real / (p2**3 * abs(kbar) ** 2)
    corr = (8 * pa2 * pb2 * d * (kbar.real * dk.imag - dk.real * kbar.imag)
            / (p2**2 * abs(kbar) ** 2))
    return lead - corr


def spbr_perturbative_rate(sys: SystemSpec, bath: BathSpec) -> float:
    """Small-detuning slow eigenvalue of the swapped-sampling equation; matches
    twice the exact pole decay rate through quadratic order."""
    pa2, pb2 = sys.phi_a**2, sys.phi_b**2
    if pa2 * pb2 == 0:
        return 0.0
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)
    kbar = (ra.K + rb.K) / 2
    if kbar == 0:
        raise ZeroDivisionError("mean response vanishes")
    return 8 * pa2 * pb2 * sys.delta**2 * kbar.real / ((pa2 + pb2) ** 3 * abs(kbar) ** 2)
