"""Cross-cutting diagnostics and the two independent brute-force oracles.

The discretized-bath oracle replaces the continuum by N modes and evolves the
full one-particle covariance unitarily (eigendecomposition, no step error), so
it validates the exact solver.  The truncated-Fock oracle propagates the full
density-matrix master equation and validates the moment-equation generators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bath import BathSpec, SystemSpec, response
from .exact import SecondMoments
from .meq import Generator, kossakowski

BOUNDARY_POP_LIMIT = 1e-8


class TruncationError(RuntimeError):
    """The truncated Fock space is too small for the requested evolution."""


@dataclass(frozen=True)
class MinimumUncertaintyState:
    """Rank-one Gaussian moment matrix: occupations n_a, n_b and relative phase."""

    n_a: float
    n_b: float
    theta: float

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 0:
            raise ValueError("occupations must be non-negative")

    def covariance(self) -> np.ndarray:
        off = math.sqrt(self.n_a * self.n_b) * np.exp(1j * self.theta)
        return np.array([[self.n_a, off], [np.conj(off), self.n_b]])

    def moments(self) -> SecondMoments:
        return SecondMoments.from_matrix(self.covariance())


@dataclass(frozen=True)
class OracleConfig:
    """Knobs for the two oracles: bath discretization and Fock truncation."""

    n_modes: int = 256
    nu_max: float | None = None
    n_max: int = 6

    def __post_init__(self):
        if self.n_modes < 2:
            raise ValueError("need at least two bath modes")
        if self.n_max < 1:
            raise ValueError("need at least one excited Fock level per mode")

    def recurrence_time(self, nu_max: float) -> float:
        return 2 * math.pi / (nu_max / self.n_modes)


# --- scalar diagnostics ---------------------------------------------------------

def min_eigen_F(m: SecondMoments) -> float:
    """Smaller eigenvalue of the Hermitian moment matrix (closed form)."""
    mean = (m.faa + m.fbb) / 2
    return mean - math.hypot((m.faa - m.fbb) / 2, abs(m.fab))


def sum_rule_residual(g: Generator, sys: SystemSpec) -> np.ndarray:
    """Conservation-law residual for the bath-decoupled mode combination.

    The quantity I = pb^2 F_aa + pa^2 F_bb - 2 pa pb Re F_ab evolves under the
    system Hamiltonian alone, which pins the generator row it projects onto:

        (pb^2, pa^2, -pa pb, 0) M = (wb - wa) (0, 0, 0, pa pb).

    Returns the residual of that identity (zero iff the rule holds).
    """
    pa, pb = sys.phi_a, sys.phi_b
    u = np.array([pb**2, pa**2, -pa * pb, 0.0])
    target = (sys.omega_b - sys.omega_a) * np.array([0.0, 0.0, 0.0, pa * pb])
    return u @ g.M - target


def gaussian_positivity_violation(sys: SystemSpec, bath: BathSpec,
                                  s: MinimumUncertaintyState) -> float:
    """Growth rate of the zero eigenvalue of a rank-one moment matrix under the
    plain time-local map; negative means the state is pushed unphysical:

        pa^2 K'up(wa) n_b + pb^2 K'up(wb) n_a
            - 2 pa pb sqrt(na nb) [Kbar'up cos(theta) - dK''up sin(theta)] .
    """
    ra, rb = response(bath, sys.omega_a), response(bath, sys.omega_b)
    kbar_up = (ra.Kup + rb.Kup) / 2
    dk_up = (ra.Kup - rb.Kup) / 2
    pa, pb = sys.phi_a, sys.phi_b
    return (pa**2 * ra.Kup.real * s.n_b + pb**2 * rb.Kup.real * s.n_a
            - 2 * pa * pb * math.sqrt(s.n_a * s.n_b)
            * (kbar_up.real * math.cos(s.theta) - dk_up.imag * math.sin(s.theta)))


# --- discretized-bath oracle ------------------------------------------------------

def discretized_bath_oracle(sys: SystemSpec, bath, cfg: OracleConfig,
                            times) -> list[SecondMoments]:
    """Unitary covariance evolution of system + N discrete modes per bath.

    Each bath is sampled on a uniform grid (midpoint rule), couplings
    g_i^2 = J(nu_i) dnu; bath modes start thermally occupied, the system in
    vacuum.  Times past the discretization recurrence are rejected.
    Accepts a single BathSpec (coupled through the system amplitudes) or a
    MultiBathSpec.
    """
    from .exact import CoupledBath, MultiBathSpec
    times = np.asarray(times, dtype=float)
    if isinstance(bath, MultiBathSpec):
        coupled = bath.baths
    else:
        coupled = (CoupledBath(bath, sys.phi_a, sys.phi_b),)
    N = cfg.n_modes
    blocks = []
    for cb in coupled:
        nu_max = cfg.nu_max if cfg.nu_max is not None else cb.bath.spectral.support()[1]
        t_rec = cfg.recurrence_time(nu_max)
        if times.max() >= t_rec:
            raise ValueError(f"t={times.max():g} exceeds the recurrence time {t_rec:g}; "
                             "increase n_modes or nu_max")
        dnu = nu_max / N
        nus = (np.arange(N) + 0.5) * dnu
        j = np.asarray(cb.bath.j(nus), dtype=float)
        g = np.sqrt(j * dnu)
        occ = cb.bath.jn(nus) / np.where(j > 0, j, 1.0)
        blocks.append((cb, nus, g, occ))
    ntot = 2 + N * len(blocks)
    h = np.zeros((ntot, ntot))
    h[0, 0], h[1, 1] = sys.omega_a, sys.omega_b
    occ_all = np.zeros(ntot)
    for k, (cb, nus, g, occ) in enumerate(blocks):
        s = 2 + k * N
        h[0, s:s + N] = h[s:s + N, 0] = cb.phi_a * g
        h[1, s:s + N] = h[s:s + N, 1] = cb.phi_b * g
        h[np.arange(s, s + N), np.arange(s, s + N)] = nus
        occ_all[s:s + N] = occ
    lam, V = np.linalg.eigh(h)
    out = []
    Vs = V[:2, :]
    for t in times:
        rows = (Vs * np.exp(-1j * lam * t)) @ V.T          # (2, ntot)
        F = (np.conj(rows) * occ_all[None, :]) @ rows.T    # (2, 2)
        out.append(SecondMoments.from_matrix(F))
    return out


# --- truncated-Fock oracle --------------------------------------------------------

def _destroy(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels)), 1)


def fock_master_rhs(sys: SystemSpec, bath: BathSpec, n_max: int):
    """Right-hand side of the full density-matrix master equation in a
    truncated two-mode number basis; returns (rhs, psi_ops, boundary_proj)."""
    kp = kossakowski(sys, bath)
    levels = n_max + 1
    eye = np.eye(levels)
    a = np.kron(_destroy(levels), eye)
    b = np.kron(eye, _destroy(levels))
    psi = (a, b)
    phi = (sys.phi_a, sys.phi_b)
    H = (sys.omega_a * a.conj().T @ a + sys.omega_b * b.conj().T @ b).astype(complex)
    for i in range(2):
        for j in range(2):
            H -= kp.h[i, j] * phi[i] * phi[j] * psi[i].conj().T @ psi[j]

    terms = []
    for i in range(2):
        for j in range(2):
            c = phi[i] * phi[j]
            if c == 0:
                continue
            dn = kp.Ldown[i, j] * c
            up = kp.Lup[i, j] * c
            if dn != 0:
                terms.append((dn, psi[j], psi[i].conj().T))
            if up != 0:
                terms.append((up, psi[j].conj().T, psi[i]))

    def rhs(rho: np.ndarray) -> np.ndarray:
        out = -1j * (H @ rho - rho @ H)
        for coef, jump, back in terms:
            out += coef * (2 * jump @ rho @ back - back @ jump @ rho - rho @ back @ jump)
        return out

    # projector onto states touching the truncation boundary
    na = np.kron(np.diag(np.arange(levels)), eye)
    nb = np.kron(eye, np.diag(np.arange(levels)))
    boundary = ((np.diag(na) >= n_max) | (np.diag(nb) >= n_max)).astype(float)
    return rhs, psi, boundary


def fock_oracle(sys: SystemSpec, bath: BathSpec, cfg: OracleConfig, times,
                rho0: np.ndarray | None = None) -> list[SecondMoments]:
    """Density-matrix propagation of the full master equation (validation scale).

    Aborts when the population of boundary Fock states exceeds 1e-8."""
    times = np.asarray(times, dtype=float)
    rhs, psi, boundary = fock_master_rhs(sys, bath, cfg.n_max)
    dim = psi[0].shape[0]
    if rho0 is None:
        rho0 = np.zeros((dim, dim), dtype=complex)
        rho0[0, 0] = 1.0
    a, b = psi
    ada, adb, bdb = a.conj().T @ a, a.conj().T @ b, b.conj().T @ b

    sol = solve_ivp(lambda t, y: rhs(y.reshape(dim, dim)).ravel(),
                    (times[0], times[-1]), rho0.astype(complex).ravel(),
                    t_eval=times, rtol=1e-10, atol=1e-12, method="RK45")
    if not sol.success:
        raise RuntimeError(f"Fock-space integration failed: {sol.message}")
    out = []
    for k in range(len(times)):
        rho = sol.y[:, k].reshape(dim, dim)
        pops = np.abs(np.diag(rho).real)
        bound_pop = float(pops @ boundary)
        if bound_pop > BOUNDARY_POP_LIMIT:
            raise TruncationError(
                f"boundary population {bound_pop:.2e} at t={times[k]:g} exceeds "
                f"{BOUNDARY_POP_LIMIT:g}; increase n_max")
        out.append(SecondMoments(
            faa=float(np.trace(ada @ rho).real),
            fbb=float(np.trace(bdb @ rho).real),
            fab=complex(np.trace(adb @ rho)),
        ))
    return out
