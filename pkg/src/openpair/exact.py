"""Exact reduced dynamics of two bosonic modes coupled to thermal baths.

Everything here derives from the retarded Green's function denominator

    d(z) = -(wa - z)(wb - z) + i Kc(z) [pa^2 (wb - z) + pb^2 (wa - z)]

with Kc the analytically continued bath response.  Mode propagation kernels
are Fourier integrals of (w_other - z)/d(z+i0) along the real axis; the sharp
quasi-mode peaks are handled by subtracting the complex poles of d exactly
(their Fourier transforms are damped exponentials) and quadrature is applied
only to the smooth remainder.  Second moments follow from the double
convolution of the kernels with the bath correlation function, assembled
incrementally on a uniform time grid in O(N^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bath as bathmod
from .bath import BathSpec, SystemSpec, response, response_continued, response_grid

POLE_TOL = 1e-12
_MAX_NEWTON = 100


class UndampedModeError(RuntimeError):
    """No steady state: the model has an undamped (real) pole."""


# --- domain types ---------------------------------------------------------------

@dataclass(frozen=True)
class SecondMoments:
    """Hermitian second-moment matrix F_ij = <psi_i^dag psi_j> of the two modes."""

    faa: float
    fbb: float
    fab: complex

    def matrix(self) -> np.ndarray:
        return np.array([[self.faa, self.fab],
                         [np.conj(self.fab), self.fbb]], dtype=complex)

    @classmethod
    def from_matrix(cls, m) -> "SecondMoments":
        m = np.asarray(m, dtype=complex)
        return cls(faa=float(m[0, 0].real), fbb=float(m[1, 1].real), fab=complex(m[0, 1]))


@dataclass(frozen=True)
class PoleSet:
    """Converged complex roots of the retarded denominator."""

    roots: tuple[complex, ...]
    residuals: tuple[float, ...]
    violations: tuple[bool, ...]   # True where Im(root) > +POLE_TOL

    def decay_rates(self) -> tuple[float, ...]:
        return tuple(-z.imag for z in self.roots)


@dataclass(frozen=True)
class CoupledBath:
    """One bath together with its coupling amplitudes to the two modes."""

    bath: BathSpec
    phi_a: float
    phi_b: float


@dataclass(frozen=True)
class MultiBathSpec:
    baths: tuple[CoupledBath, ...]

    def __post_init__(self):
        if not self.baths:
            raise ValueError("need at least one bath")
        if any(cb.phi_a == 0 and cb.phi_b == 0 for cb in self.baths):
            raise ValueError("every bath needs a nonzero coupling vector")


def _as_multi(sys: SystemSpec, baths) -> MultiBathSpec:
    if isinstance(baths, MultiBathSpec):
        return baths
    return MultiBathSpec((CoupledBath(baths, sys.phi_a, sys.phi_b),))


# --- denominator and Green's matrix ----------------------------------------------

def denominator_d(sys: SystemSpec, bath: BathSpec, zeta: complex) -> complex:
    """Retarded denominator d(zeta), using the continued response for Im zeta < 0."""
    z = complex(zeta)
    Kc = response_continued(bath, z)
    wa, wb = sys.omega_a, sys.omega_b
    return (-(wa - z) * (wb - z)
            + 1j * Kc * (sys.phi_a**2 * (wb - z) + sys.phi_b**2 * (wa - z)))


def green_matrix_inverse(multi: MultiBathSpec, sys: SystemSpec, zeta: complex) -> np.ndarray:
    z = complex(zeta)
    w = (sys.omega_a, sys.omega_b)
    g = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        g[i, i] = 1j * (w[i] - z)
    for cb in multi.baths:
        Kc = response_continued(cb.bath, z)
        phi = (cb.phi_a, cb.phi_b)
        for i in range(2):
            for j in range(2):
                g[i, j] += phi[i] * phi[j] * Kc
    return g


def green_matrix(multi: MultiBathSpec, sys: SystemSpec, zeta: complex) -> np.ndarray:
    """Retarded Green's matrix of the two modes, by 2x2 inversion."""
    ginv = green_matrix_inverse(multi, sys, zeta)
    det = ginv[0, 0] * ginv[1, 1] - ginv[0, 1] * ginv[1, 0]
    scale = max(1.0, abs(sys.omega_a * sys.omega_b))
    if abs(det) < 1e-14 * scale:
        raise ZeroDivisionError(f"Green's matrix singular at zeta={zeta} (pole)")
    adj = np.array([[ginv[1, 1], -ginv[0, 1]], [-ginv[1, 0], ginv[0, 0]]])
    return adj / det


def _det_ginv(multi: MultiBathSpec, sys: SystemSpec, zeta: complex) -> complex:
    g = green_matrix_inverse(multi, sys, zeta)
    return g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]


# --- pole hunting ----------------------------------------------------------------

def _newton(fun, seed: complex, deflate: list[complex], scale: float) -> complex:
    def g(z):
        val = fun(z)
        for r in deflate:
            val = val / (z - r)
        return val

    z = complex(seed)
    for _ in range(_MAX_NEWTON):
        if abs(fun(z)) < POLE_TOL * scale:
            return z
        h = 1e-7 * max(1.0, abs(z))
        dg = (g(z + h) - g(z - h)) / (2 * h)
        gz = g(z)
        if dg == 0:
            raise RuntimeError(f"Newton stalled at {z} (zero derivative)")
        step = gz / dg
        z = z - step
        if abs(step) < 1e-16 * max(1.0, abs(z)) and abs(fun(z)) < POLE_TOL * scale:
            return z
    if abs(fun(z)) < POLE_TOL * scale:
        return z
    raise RuntimeError(f"pole search did not converge from seed {seed} "
                       f"(|d| = {abs(fun(z)):.2e})")


def find_poles(sys: SystemSpec, baths, seeds=None) -> PoleSet:
    """Roots of the retarded denominator, Newton-iterated from the mode frequencies."""
    if isinstance(baths, MultiBathSpec):
        fun = lambda z: _det_ginv(baths, sys, z)
    else:
        fun = lambda z: denominator_d(sys, baths, z)
    if seeds is None:
        seeds = (sys.omega_a, sys.omega_b)
    scale = max(1.0, abs(sys.omega_a * sys.omega_b))
    roots: list[complex] = []
    for seed in seeds:
        seed = complex(seed)
        if any(abs(seed - r) < 1e-8 * max(1.0, abs(r)) for r in roots):
            # deflated function is 0/0 at a found root; start just below the axis
            seed = seed - 1e-3j * max(1.0, abs(seed))
        z = _newton(fun, seed, roots, scale)
        if z.imag > 0:  # clip roundoff-level overshoot above the axis
            if z.imag <= POLE_TOL:
                z = complex(z.real, 0.0)
        if not any(abs(z - r) < 1e-8 * max(1.0, abs(r)) for r in roots):
            roots.append(z)
    roots.sort(key=lambda z: z.real)
    return PoleSet(
        roots=tuple(roots),
        residuals=tuple(abs(fun(r)) for r in roots),
        violations=tuple(r.imag > POLE_TOL for r in roots),
    )


def perturbative_pole_rate(sys: SystemSpec, bath: BathSpec) -> float:
    """Leading small-detuning decay rate of the slow quasi-mode,

    -Im z0 = 4 D^2 pa^2 pb^2 K'(W) / [(pa^2+pb^2)^3 |K(W)|^2],  W the mean frequency.
    """
    pa2, pb2 = sys.phi_a**2, sys.phi_b**2
    if pa2 * pb2 == 0 or sys.delta == 0:
        return 0.0
    K = response(bath, sys.omega_mean).K
    if K == 0:
        raise ZeroDivisionError("K vanishes at the mean frequency")
    return (4 * sys.delta**2 * pa2 * pb2 / (pa2 + pb2)**3) * K.real / abs(K)**2


# --- Fourier kernels ---------------------------------------------------------------

def _window_grid(sys: SystemSpec, multi: MultiBathSpec, tmax: float) -> np.ndarray:
    """Uniform real-frequency grid covering the quasi-mode region and bath support."""
    Om = sys.omega_mean
    Kmag = sum(abs(response(cb.bath, Om).K) for cb in multi.baths)
    kbts = [cb.bath.occupation.kbt for cb in multi.baths
            if isinstance(cb.bath.occupation, bathmod.Thermal)]
    W = 20 * max(abs(sys.delta), Kmag, max(kbts, default=0.0), 0.5)
    lo = min(cb.bath.spectral.support()[0] for cb in multi.baths)
    hi = max(cb.bath.spectral.support()[1] for cb in multi.baths)
    scale = min(cb.bath.spectral.scale() for cb in multi.baths)
    wlo = min(Om - W, lo - 1.0)
    whi = max(Om + W, hi + 1.0)
    dz = min(math.pi / (4 * max(tmax, 1.0)), scale / 20)
    n = int(math.ceil((whi - wlo) / dz))
    # offset so no node can land exactly on a real root of d
    return wlo + dz * (np.arange(n + 1) + 0.37)


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


class _Kernel:
    """Shared machinery: grid, boundary values of 1/d, poles and residues."""

    def __init__(self, sys: SystemSpec, baths, tmax: float):
        multi = _as_multi(sys, baths)
        self.sys = sys
        self.multi = multi
        self.grid = _window_grid(sys, multi, tmax)
        try:
            self.poles = find_poles(sys, baths)
        except bathmod.ContinuationError:
            self.poles = None
            self.grid = self._refine_near_modes(self.grid)
        self.weights = _trap_weights(self.grid)
        # boundary values on the grid
        self.kstar = []   # conj(K) per bath on the grid
        for cb in multi.baths:
            g = response_grid(cb.bath, self.grid)
            self.kstar.append(g["Kp"] - 1j * g["Kpp"])
        wa, wb, z = sys.omega_a, sys.omega_b, self.grid
        ginv = np.empty((2, 2, len(z)), dtype=complex)
        ginv[0, 0] = 1j * (wa - z)
        ginv[1, 1] = 1j * (wb - z)
        ginv[0, 1] = 0.0
        ginv[1, 0] = 0.0
        for cb, ks in zip(multi.baths, self.kstar):
            phi = (cb.phi_a, cb.phi_b)
            for i in range(2):
                for j in range(2):
                    ginv[i, j] += phi[i] * phi[j] * ks
        self.det = ginv[0, 0] * ginv[1, 1] - ginv[0, 1] * ginv[1, 0]
        self.adj = np.empty_like(ginv)
        self.adj[0, 0], self.adj[1, 1] = ginv[1, 1], ginv[0, 0]
        self.adj[0, 1], self.adj[1, 0] = -ginv[0, 1], -ginv[1, 0]

    def _refine_near_modes(self, grid: np.ndarray) -> np.ndarray:
        """Without analytic poles, resolve the quasi-mode peaks by local grid clusters."""
        extra = [grid]
        for i, w in enumerate((self.sys.omega_a, self.sys.omega_b)):
            gam = sum((cb.phi_a, cb.phi_b)[i]**2 * math.pi
                      * float(cb.bath.j(np.array(w))) for cb in self.multi.baths)
            gam = max(gam, 1e-6)
            offs = gam * np.geomspace(0.02, 2e3, 160)
            extra.append(w + offs)
            extra.append(w - offs)
        merged = np.unique(np.concatenate(extra))
        return merged[(merged >= grid[0]) & (merged <= grid[-1])]

    def _detfun(self, z: complex) -> complex:
        return _det_ginv(self.multi, self.sys, z)

    def mode_vectors(self, phi_n) -> np.ndarray:
        """(G(z) @ phi_n) on the grid, shape (2, ngrid)."""
        v = np.empty((2, len(self.grid)), dtype=complex)
        for i in range(2):
            v[i] = (self.adj[i, 0] * phi_n[0] + self.adj[i, 1] * phi_n[1]) / self.det
        return v

    def pole_terms(self, phi_n):
        """Poles and residue vectors of G(z) @ phi_n (skipping negligible residues)."""
        if self.poles is None:
            return [], np.zeros((2, 0), dtype=complex)
        roots, res = [], []
        for z0 in self.poles.roots:
            h = 1e-7 * max(1.0, abs(z0))
            detp = (self._detfun(z0 + h) - self._detfun(z0 - h)) / (2 * h)
            ginv0 = green_matrix_inverse(self.multi, self.sys, z0)
            adj0 = np.array([[ginv0[1, 1], -ginv0[0, 1]], [-ginv0[1, 0], ginv0[0, 0]]])
            r = adj0 @ np.asarray(phi_n, dtype=complex) / detp
            if np.max(np.abs(r)) < 1e-13:
                continue
            if abs(z0.imag) < 1e-13:
                # undamped pole with a finite residue cannot be subtracted; keep it
                # on the contour (retarded prescription pushes it below the axis)
                z0 = complex(z0.real, -1e-13)
            roots.append(z0)
            res.append(r)
        if not roots:
            return [], np.zeros((2, 0), dtype=complex)
        return roots, np.array(res).T  # residues shape (2, nroots)

    def smooth_remainder(self, vec: np.ndarray, roots, res) -> np.ndarray:
        s = vec.copy()
        for k, z0 in enumerate(roots):
            s -= res[:, k][:, None] / (self.grid[None, :] - z0)
        return s


def _fourier_sum(grid, weights, svals, times, chunk=512) -> np.ndarray:
    """(1/2pi) int s(z) exp(-i z t) dz on the grid, for each t (rows: components)."""
    out = np.empty((svals.shape[0], len(times)), dtype=complex)
    wz = weights * np.ones_like(grid)
    for s in range(0, len(times), chunk):
        t = times[s:s + chunk]
        phase = np.exp(-1j * np.outer(grid, t))
        out[:, s:s + chunk] = (svals * wz) @ phase / (2 * math.pi)
    return out


def _mode_kernels(kern: _Kernel, phi_n, times) -> np.ndarray:
    """Time-domain kernels D_i(t) (shape (2, ntimes)) for one coupling vector."""
    roots, res = kern.pole_terms(phi_n)
    svals = kern.smooth_remainder(kern.mode_vectors(phi_n), roots, res)
    out = _fourier_sum(kern.grid, kern.weights, svals, np.asarray(times, dtype=float))
    for k, z0 in enumerate(roots):
        out += -1j * res[:, k][:, None] * np.exp(-1j * z0 * np.asarray(times)[None, :])
    return out


def propagator_D(sys: SystemSpec, bath: BathSpec, mode: str, t):
    """Propagation kernel D_i(t) = phi_i int dz/2pi (w_other - z) e^{-izt} / d(z+i0)."""
    idx = {"a": 0, "b": 1}[mode]
    phi = (sys.phi_a, sys.phi_b)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if phi[idx] == 0.0:
        vec = np.zeros(len(times), dtype=complex)
    else:
        kern = _Kernel(sys, bath, max(float(times.max()), 1e-6))
        # single-bath G(z) @ phi gives i * phi_i (w_other - z)/d; remove the i factor
        vec = _mode_kernels(kern, phi, times)[idx] / 1j
    return complex(vec[0]) if np.isscalar(t) else vec


# --- moments: double convolution ----------------------------------------------------

def _check_uniform(times) -> tuple[np.ndarray, float]:
    t = np.asarray(times, dtype=float)
    if t[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if len(t) < 2:
        return t, 0.0
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform")
    return t, dt


def _double_convolution(Dl, Dr, al_pos, dt) -> np.ndarray:
    """F(t_n) = int_0^tn du dv conj(Dl(u)) Dr(v) alpha(u - v), trapezoid weights.

    Dl, Dr have shape (npairs, N+1); al_pos holds alpha on non-negative lags.
    Assembled incrementally: each step adds one new row and column of the
    integrand table, with endpoint weights corrected via stored edge sums.
    """
    npairs, N1 = Dl.shape
    F = np.zeros((npairs, N1), dtype=complex)
    Dlc = np.conj(Dl)
    alc = np.conj(al_pos)
    T = Dlc[:, 0] * Dr[:, 0] * al_pos[0]
    R0 = T.copy()   # row p=0 partial sum
    C0 = T.copy()   # column q=0 partial sum
    A00 = T.copy()
    for n in range(1, N1):
        rev = al_pos[n::-1]          # lags n, n-1, ..., 0
        revc = alc[n::-1]
        y = Dr[:, :n + 1] @ rev      # sum_q Dr(q) alpha(n - q)
        zb = Dlc[:, :n + 1] @ revc   # sum_p conj(Dl(p)) conj(alpha(n - p))
        rowsum = Dlc[:, n] * y
        colsum = Dr[:, n] * zb
        Ann = Dlc[:, n] * Dr[:, n] * al_pos[0]
        A0n = Dlc[:, 0] * Dr[:, n] * alc[n]
        An0 = Dlc[:, n] * Dr[:, 0] * al_pos[n]
        T = T + rowsum + colsum - Ann
        R0 = R0 + A0n
        C0 = C0 + An0
        F[:, n] = dt * dt * (T - 0.5 * (R0 + rowsum + C0 + colsum)
                             + 0.25 * (A00 + A0n + An0 + Ann))
    return F


def _moments_from_kernels(kernels_per_bath, alphas_per_bath, dt, ntimes) -> list[SecondMoments]:
    F = np.zeros((3, ntimes), dtype=complex)
    for D, al in zip(kernels_per_bath, alphas_per_bath):
        Da, Db = D
        Dl = np.array([Da, Db, Da])
        Dr = np.array([Da, Db, Db])
        F += _double_convolution(Dl, Dr, al, dt)
    return [SecondMoments(faa=float(F[0, n].real), fbb=float(F[1, n].real),
                          fab=complex(F[2, n])) for n in range(ntimes)]


def exact_moments(sys: SystemSpec, bath: BathSpec, times) -> list[SecondMoments]:
    """F_ij(t) on a uniform grid from vacuum, via the kernel double convolution."""
    t, dt = _check_uniform(times)
    if len(t) == 1 or (sys.phi_a == 0 and sys.phi_b == 0):
        return [SecondMoments(0.0, 0.0, 0j) for _ in t]
    kern = _Kernel(sys, bath, float(t[-1]))
    D = _mode_kernels(kern, (sys.phi_a, sys.phi_b), t)
    al = bathmod.alpha_lags(bath, dt, len(t) - 1)
    return _moments_from_kernels([D], [al], dt, len(t))


def exact_moments_multibath(multi: MultiBathSpec, sys: SystemSpec, times) -> list[SecondMoments]:
    """Multi-bath generalization: one kernel set and correlation function per bath."""
    t, dt = _check_uniform(times)
    if len(t) == 1:
        return [SecondMoments(0.0, 0.0, 0j)]
    kern = _Kernel(sys, multi, float(t[-1]))
    kernels, alphas = [], []
    for cb in multi.baths:
        kernels.append(_mode_kernels(kern, (cb.phi_a, cb.phi_b), t))
        alphas.append(bathmod.alpha_lags(cb.bath, dt, len(t) - 1))
    return _moments_from_kernels(kernels, alphas, dt, len(t))


# --- moments: spectral form (cross-check) --------------------------------------------

def exact_moments_spectral(sys: SystemSpec, bath: BathSpec, t: float) -> SecondMoments:
    """Independent evaluation of F_ij(t) via the frequency-resolved amplitudes

        W_i(nu, t) = phi_i int dz/2pi (w_other - z) e^{-izt} / [(nu - z - i0) d(z+i0)]

    integrated against J(nu) n(nu).  Used as a cross-check of exact_moments.
    """
    t = float(t)
    if t == 0.0 or (sys.phi_a == 0 and sys.phi_b == 0):
        return SecondMoments(0.0, 0.0, 0j)
    nd = bathmod._nodes(bath)
    if nd.j0ref == 0.0:
        return SecondMoments(0.0, 0.0, 0j)
    kern = _Kernel(sys, bath, t)
    phi = (sys.phi_a, sys.phi_b)
    roots, res = kern.pole_terms(phi)
    svals = kern.smooth_remainder(kern.mode_vectors(phi), roots, res)

    nus, wnu = nd.x, nd.w
    jn = nd.jn
    # s_i evaluated on the nu nodes, via the same boundary-value formulas
    g = response_grid(bath, nus)
    kstar_nu = g["Kp"] - 1j * g["Kpp"]
    wa, wb = sys.omega_a, sys.omega_b
    ginv = np.empty((2, 2, len(nus)), dtype=complex)
    ginv[0, 0] = 1j * (wa - nus)
    ginv[1, 1] = 1j * (wb - nus)
    ginv[0, 1] = ginv[1, 0] = 0.0
    for i in range(2):
        for j in range(2):
            ginv[i, j] = ginv[i, j] + phi[i] * phi[j] * kstar_nu
    det_nu = ginv[0, 0] * ginv[1, 1] - ginv[0, 1] * ginv[1, 0]
    vec_nu = np.empty((2, len(nus)), dtype=complex)
    vec_nu[0] = (ginv[1, 1] * phi[0] - ginv[0, 1] * phi[1]) / det_nu
    vec_nu[1] = (-ginv[1, 0] * phi[0] + ginv[0, 0] * phi[1]) / det_nu
    s_nu = vec_nu.copy()
    for k, z0 in enumerate(roots):
        s_nu -= res[:, k][:, None] / (nus[None, :] - z0)

    enut = np.exp(-1j * nus * t)
    W = np.zeros((2, len(nus)), dtype=complex)
    # pole pieces: -i r (e^{-i z0 t} - e^{-i nu t}) / (nu - z0)
    for k, z0 in enumerate(roots):
        W += -1j * res[:, k][:, None] * (np.exp(-1j * z0 * t) - enut[None, :]) \
            / (nus[None, :] - z0)
    # smooth piece: PV integral plus the on-shell half residue
    zg, wg = kern.grid, kern.weights
    fz = svals * np.exp(-1j * zg * t)[None, :]      # (2, nz)
    fnu = s_nu * enut[None, :]                      # (2, nnu)
    chunk = 256
    pv = np.empty((2, len(nus)), dtype=complex)
    for s in range(0, len(nus), chunk):
        dz = zg[:, None] - nus[None, s:s + chunk]
        for i in range(2):
            num = fz[i][:, None] - fnu[i][None, s:s + chunk]
            pv[i, s:s + chunk] = wg @ (num / dz)
    logs = np.log(np.abs((zg[-1] - nus) / (nus - zg[0])))
    pv += fnu * logs[None, :]
    W += (-pv + 1j * math.pi * fnu) / (2 * math.pi)

    faa = float(np.sum(wnu * jn * np.abs(W[0])**2))
    fbb = float(np.sum(wnu * jn * np.abs(W[1])**2))
    fab = complex(np.sum(wnu * jn * np.conj(W[0]) * W[1]))
    return SecondMoments(faa, fbb, fab)


# --- steady state ---------------------------------------------------------------------

def exact_steady_state(sys: SystemSpec, bath: BathSpec) -> SecondMoments:
    """Late-time asymptote

        F_ij(inf) = phi_i phi_j int dnu J n (w_ibar - nu)(w_jbar - nu) / |d(nu+i0)|^2

    with local grid refinement around each quasi-mode peak of 1/|d|^2.
    """
    poles = find_poles(sys, bath)
    phis = (sys.phi_a, sys.phi_b)
    freqs = (sys.omega_a, sys.omega_b)
    for z in poles.roots:
        if abs(z.imag) > POLE_TOL * max(1.0, abs(z)):
            continue
        # a real pole is harmless only if it belongs to a decoupled mode
        decoupled = any(p == 0.0 and abs(z.real - w) < 1e-9 * max(1.0, abs(w))
                        for p, w in zip(phis, freqs))
        if not decoupled:
            raise UndampedModeError(
                "undamped pole on the real axis: no steady state "
                "(degenerate single-bath limit is singular)")
    nd = bathmod._nodes(bath)
    lo, hi = nd.lo, nd.hi
    edges = {lo, hi}
    step = min(nd.scale / 2, (hi - lo) / 8)
    edges.update(np.arange(lo, hi, step))
    for z0 in poles.roots:
        c, gam = z0.real, max(abs(z0.imag), 1e-9)
        if not (lo < c < hi):
            continue
        span = max(hi - c, c - lo)
        npts = max(int(24 * math.log10(span / (0.05 * gam))), 24)
        offs = gam * np.geomspace(0.05, span / gam, npts)
        edges.update(np.clip(c + offs, lo, hi))
        edges.update(np.clip(c - offs, lo, hi))
    e = np.array(sorted(edges))
    e = e[np.concatenate(([True], np.diff(e) > 1e-15 * max(1.0, hi - lo)))]
    gx, gw = leggauss_cached(8)
    mids = (e[1:] + e[:-1])[:, None] / 2
    half = (e[1:] - e[:-1])[:, None] / 2
    x = (mids + half * gx[None, :]).ravel()
    w = (half * gw[None, :]).ravel()

    jn = bath.jn(x)
    g = response_grid(bath, x)
    kstar = g["Kp"] - 1j * g["Kpp"]
    wa, wb = sys.omega_a, sys.omega_b
    pa2, pb2 = sys.phi_a**2, sys.phi_b**2
    d = -(wa - x) * (wb - x) + 1j * kstar * (pa2 * (wb - x) + pb2 * (wa - x))
    w_over = w * jn / np.abs(d)**2
    faa = sys.phi_a**2 * float(np.sum(w_over * (wb - x)**2))
    fbb = sys.phi_b**2 * float(np.sum(w_over * (wa - x)**2))
    fab = sys.phi_a * sys.phi_b * complex(np.sum(w_over * (wb - x) * (wa - x)))
    return SecondMoments(faa, fbb, fab)


_leggauss_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def leggauss_cached(n: int):
    if n not in _leggauss_cache:
        from numpy.polynomial.legendre import leggauss
        _leggauss_cache[n] = leggauss(n)
    return _leggauss_cache[n]
