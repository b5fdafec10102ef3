"""System and bath specifications, and the complex bath response functions.

The bath enters the dynamics only through its spectral density J(nu), the mode
occupation n(nu), and three complex response functions evaluated at real or
complex frequency:

    K(w)      = pi J(w)          + i PV int J(x)/(x-w) dx
    K_up(w)   = pi n(w) J(w)     + i PV int n(x)J(x)/(x-w) dx
    K_down(w) = pi (n(w)+1) J(w) + i PV int (n(x)+1)J(x)/(x-w) dx

so that K = K_down - K_up.  Real parts are evaluated in closed form; imaginary
parts use principal-value quadrature with singularity subtraction:

    PV int f(x)/(x-w) dx = int [f(x)-f(w)]/(x-w) dx + f(w) log|(hi-w)/(w-lo)|

on Gauss-Legendre panels covering the bath support.  The analytic continuation
of conj(K) into the lower half plane (needed for pole hunting) is

    Kc(z) = -i int J(x)/(x-z) dx + 2 pi J(z)

with J(z) the closed-form spectral density evaluated at complex argument; on
the real axis this reduces to conj(K(w)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

TAIL_CUT = 1e-14          # J * max(n+1, 1) below this (relative to peak J) is dropped
_GL_DEGREE = 16
_MAX_PANELS = 600


class QuadratureError(RuntimeError):
    """A bath integral failed to converge to the requested accuracy."""


class ContinuationError(RuntimeError):
    """Analytic continuation is not available for this spectral density."""


# --- spectral densities -------------------------------------------------------

@dataclass(frozen=True)
class SuperOhmicExpCutoff:
    """J(nu) = j0 exp(z - z nu/omega0) (nu/omega0)^z for nu > 0; peak J(omega0) = j0."""

    j0: float
    omega0: float
    z: float

    def __post_init__(self):
        if self.j0 < 0 or self.omega0 <= 0 or self.z <= 0:
            raise ValueError("super-Ohmic density needs j0 >= 0, omega0 > 0, z > 0")

    def j(self, nu):
        nu = np.asarray(nu, dtype=float)
        x = np.where(nu > 0, nu / self.omega0, 0.0)
        with np.errstate(invalid="ignore"):
            val = self.j0 * np.exp(self.z - self.z * x) * x**self.z
        return np.where(nu > 0, val, 0.0)

    def j_complex(self, zeta: complex) -> complex:
        # principal branch of (zeta/omega0)^z; fine for Re zeta > 0 where poles live
        x = complex(zeta) / self.omega0
        return self.j0 * np.exp(self.z - self.z * x) * x**self.z

    def support(self) -> tuple[float, float]:
        hi = _tail_root(self.j, self.omega0, self.j0)
        return 0.0, hi

    def scale(self) -> float:
        return self.omega0 / max(self.z, 1.0)


@dataclass(frozen=True)
class Flat:
    """Constant density j0 on the band [numin, numax], zero outside."""

    j0: float
    numin: float
    numax: float

    def __post_init__(self):
        if self.numax <= self.numin:
            raise ValueError("flat band needs numax > numin")

    def j(self, nu):
        nu = np.asarray(nu, dtype=float)
        return np.where((nu >= self.numin) & (nu <= self.numax), self.j0, 0.0)

    def j_complex(self, zeta: complex) -> complex:
        # continuation from inside the band: the constant function
        return complex(self.j0)

    def support(self) -> tuple[float, float]:
        return self.numin, self.numax

    def scale(self) -> float:
        return (self.numax - self.numin) / 8.0


@dataclass(frozen=True)
class MultiPeak:
    """Sum of super-Ohmic components."""

    peaks: tuple[SuperOhmicExpCutoff, ...]

    def __post_init__(self):
        if not self.peaks:
            raise ValueError("multi-peak density needs at least one component")

    def j(self, nu):
        return sum(p.j(nu) for p in self.peaks)

    def j_complex(self, zeta: complex) -> complex:
        return sum(p.j_complex(zeta) for p in self.peaks)

    def support(self) -> tuple[float, float]:
        j0ref = max(p.j0 for p in self.peaks)
        start = max(p.omega0 for p in self.peaks)
        hi = _tail_root(self.j, start, j0ref)
        return 0.0, hi

    def scale(self) -> float:
        return min(p.scale() for p in self.peaks)


@dataclass(frozen=True)
class Tabulated:
    """Linear interpolation through (nu, J) samples, zero outside the grid."""

    nus: tuple[float, ...]
    js: tuple[float, ...]

    def __post_init__(self):
        if len(self.nus) != len(self.js) or len(self.nus) < 2:
            raise ValueError("tabulated density needs matching nu/J grids of length >= 2")
        if any(b <= a for a, b in zip(self.nus, self.nus[1:])):
            raise ValueError("tabulated nu grid must be strictly increasing")
        if min(self.js) < 0:
            raise ValueError("tabulated J values must be non-negative")

    def j(self, nu):
        return np.interp(np.asarray(nu, dtype=float), self.nus, self.js,
                         left=0.0, right=0.0)

    def j_complex(self, zeta: complex) -> complex:
        raise ContinuationError("tabulated spectral density has no analytic continuation")

    def support(self) -> tuple[float, float]:
        return self.nus[0], self.nus[-1]

    def scale(self) -> float:
        gaps = np.diff(self.nus)
        return max(float(np.min(gaps)) * 4.0, (self.nus[-1] - self.nus[0]) / 64.0)


SpectralDensity = SuperOhmicExpCutoff | Flat | MultiPeak | Tabulated


def _tail_root(jfun, start: float, j0ref: float) -> float:
    """Frequency above which J falls below TAIL_CUT relative to the peak."""
    if j0ref == 0.0:
        return max(start * 5, 1.0)
    target = TAIL_CUT * j0ref
    hi = max(start, 1e-3)
    for _ in range(200):
        if jfun(np.array(hi)) < target:
            break
        hi *= 1.5
    else:
        raise QuadratureError("spectral density tail does not decay")
    lo = hi / 1.5
    return float(optimize.brentq(lambda x: float(jfun(np.array(x))) - target, lo, hi))


def j_value(spec: SpectralDensity, nu: float):
    """Spectral density J(nu); zero outside the support."""
    out = spec.j(nu)
    return float(out) if np.isscalar(nu) else out


# --- occupations --------------------------------------------------------------

@dataclass(frozen=True)
class Thermal:
    """Bose-Einstein occupation at temperature kbt (units of frequency)."""

    kbt: float

    def __post_init__(self):
        if self.kbt <= 0:
            raise ValueError("thermal occupation needs kbt > 0")

    def n(self, nu):
        nu = np.asarray(nu, dtype=float)
        if np.any(nu <= 0):
            raise ValueError("Bose-Einstein occupation undefined for nu <= 0")
        x = np.minimum(nu / self.kbt, 700.0)
        return 1.0 / np.expm1(x)


@dataclass(frozen=True)
class FlatOccupation:
    """Frequency-independent occupation n0."""

    n0: float

    def __post_init__(self):
        if self.n0 < 0:
            raise ValueError("flat occupation needs n0 >= 0")

    def n(self, nu):
        return np.full_like(np.asarray(nu, dtype=float), self.n0)


Occupation = Thermal | FlatOccupation


@dataclass(frozen=True)
class BathSpec:
    """A spectral density together with its occupation rule."""

    spectral: SpectralDensity
    occupation: Occupation

    def j(self, nu):
        return self.spectral.j(nu)

    def jn(self, nu):
        """J(nu) n(nu), evaluated safely (zero outside the support)."""
        nu = np.asarray(nu, dtype=float)
        j = self.spectral.j(nu)
        out = np.zeros_like(j)
        mask = j > 0
        if np.any(mask):
            out[mask] = j[mask] * self.occupation.n(nu[mask])
        return out


def occupation(bath: BathSpec, nu: float):
    """Mode occupation n(nu); thermal baths reject nu <= 0."""
    out = bath.occupation.n(np.asarray(nu, dtype=float))
    return float(out) if np.isscalar(nu) else out


# --- system -------------------------------------------------------------------

@dataclass(frozen=True)
class SystemSpec:
    """Two mode frequencies and the (real, gauged) bath-coupling amplitudes.

    Complex coupling amplitudes are accepted and rotated to non-negative reals
    at construction: a phase twist of the mode operators removes them without
    changing any of the observables computed here.
    """

    omega_a: float
    omega_b: float
    phi_a: float
    phi_b: float

    def __post_init__(self):
        for name in ("phi_a", "phi_b"):
            object.__setattr__(self, name, abs(complex(getattr(self, name))))

    @classmethod
    def from_mean(cls, omega: float, detuning: float, phi_a: float, phi_b: float):
        return cls(omega + detuning, omega - detuning, phi_a, phi_b)

    @property
    def delta(self) -> float:
        return (self.omega_a - self.omega_b) / 2

    @property
    def omega_mean(self) -> float:
        return (self.omega_a + self.omega_b) / 2


@dataclass(frozen=True)
class BathResponse:
    """Complex response K, K_up, K_down at a single real frequency."""

    omega: float
    K: complex
    Kup: complex
    Kdown: complex


# --- quadrature nodes ---------------------------------------------------------

class _BathNodes:
    """Cached Gauss-Legendre nodes/weights with J and J*n sampled on them."""

    __slots__ = ("lo", "hi", "x", "w", "j", "jn", "j0ref", "scale")

    def __init__(self, bath: BathSpec):
        lo, hi = bath.spectral.support()
        scale = bath.spectral.scale()
        if isinstance(bath.occupation, Thermal):
            scale = min(scale, bath.occupation.kbt)
            _check_integrable(bath, lo, hi)
        edges = _panel_edges(lo, hi, scale, thermal=isinstance(bath.occupation, Thermal))
        gx, gw = leggauss(_GL_DEGREE)
        mids = (edges[1:] + edges[:-1])[:, None] / 2
        half = (edges[1:] - edges[:-1])[:, None] / 2
        self.x = (mids + half * gx[None, :]).ravel()
        self.w = (half * gw[None, :]).ravel()
        self.j = np.asarray(bath.j(self.x), dtype=float)
        self.jn = bath.jn(self.x)
        self.lo, self.hi = lo, hi
        self.j0ref = float(np.max(self.j)) if np.any(self.j > 0) else 0.0
        self.scale = scale


def _panel_edges(lo: float, hi: float, scale: float, thermal: bool) -> np.ndarray:
    width = hi - lo
    step = min(scale / 2, width / 8)
    n_uniform = min(int(math.ceil(width / step)), _MAX_PANELS)
    edges = list(np.linspace(lo, hi, n_uniform + 1))
    if thermal:
        # geometric refinement toward the lower edge for the 1/nu occupation rise
        s = min(scale, width / 4)
        extra = [lo + s * 2.0**(-k) for k in range(1, 12)]
        edges = sorted(set(edges) | {e for e in extra if lo < e < hi})
    return np.asarray(edges)


def _check_integrable(bath: BathSpec, lo: float, hi: float):
    # n*J ~ J(nu)/nu near nu -> 0 must stay integrable for a thermal bath
    if lo <= 0:
        ref = float(np.max(bath.spectral.j(np.linspace(lo + 1e-12, hi, 64))))
        if ref > 0 and float(bath.spectral.j(np.array([1e-9]))[0]) > 1e-6 * ref:
            raise QuadratureError(
                "thermal occupation with J(0+) > 0 makes n*J non-integrable at nu=0")


@lru_cache(maxsize=None)
def _nodes(bath: BathSpec) -> _BathNodes:
    return _BathNodes(bath)


# --- principal-value machinery --------------------------------------------------

def _pv_weighted(nodes: _BathNodes, fvals: np.ndarray, ffun, omegas: np.ndarray,
                 fomega: np.ndarray) -> np.ndarray:
    """PV int f(x)/(x-w) dx for each w, by singularity subtraction.

    fvals are f on the cached nodes, fomega is f(w); ffun evaluates f afresh
    (used for the derivative limit when a node lands on top of w).
    """
    lo, hi = nodes.lo, nodes.hi
    out = np.empty(len(omegas))
    chunk = 256
    for s in range(0, len(omegas), chunk):
        w = omegas[s:s + chunk]
        fw = fomega[s:s + chunk]
        dx = nodes.x[:, None] - w[None, :]
        num = fvals[:, None] - fw[None, :]
        tiny = np.abs(dx) < 1e-9 * max(nodes.scale, 1e-6)
        if np.any(tiny):
            dx = np.where(tiny, 1.0, dx)
            h = 1e-6 * (1.0 + np.abs(w))
            deriv = (ffun(w + h) - ffun(w - h)) / (2 * h)
            num = np.where(tiny, np.broadcast_to(deriv[None, :], num.shape), num)
        out[s:s + chunk] = nodes.w @ (num / dx)
    inside = (omegas > lo) & (omegas < hi)
    logterm = np.zeros_like(out)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(np.abs((hi - omegas) / (omegas - lo)))
    bad = inside & ~np.isfinite(logs) & (fomega != 0)
    if np.any(bad):
        raise QuadratureError("principal value diverges at a band edge with J > 0")
    logterm[inside] = np.where(np.isfinite(logs[inside]), logs[inside], 0.0)
    return out + fomega * logterm


def response_grid(bath: BathSpec, omegas) -> dict[str, np.ndarray]:
    """K, K_up, K_down real/imag parts on an array of real frequencies."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    nd = _nodes(bath)
    j_w = np.asarray(bath.j(omegas), dtype=float)
    jn_w = bath.jn(omegas)
    jdn_w = j_w + jn_w

    def jfun(x):
        return np.asarray(bath.j(x), dtype=float)

    def jnfun(x):
        return bath.jn(x)

    def jdnfun(x):
        return jfun(x) + bath.jn(x)

    kpp = _pv_weighted(nd, nd.j, jfun, omegas, j_w)
    kpp_up = _pv_weighted(nd, nd.jn, jnfun, omegas, jn_w)
    kpp_dn = _pv_weighted(nd, nd.j + nd.jn, jdnfun, omegas, jdn_w)
    return {
        "Kp": math.pi * j_w, "Kpp": kpp,
        "Kp_up": math.pi * jn_w, "Kpp_up": kpp_up,
        "Kp_down": math.pi * jdn_w, "Kpp_down": kpp_dn,
    }


@lru_cache(maxsize=None)
def response(bath: BathSpec, omega: float) -> BathResponse:
    """Complex response functions at a single frequency (cached, write-once)."""
    g = response_grid(bath, [omega])
    return BathResponse(
        omega=omega,
        K=complex(g["Kp"][0], g["Kpp"][0]),
        Kup=complex(g["Kp_up"][0], g["Kpp_up"][0]),
        Kdown=complex(g["Kp_down"][0], g["Kpp_down"][0]),
    )


def response_continued(bath: BathSpec, zeta: complex) -> complex:
    """Analytic continuation of conj(K) to Im(zeta) <= 0.

    On the real axis this equals conj(response(bath, w).K); below it,
    Kc(z) = -i int J(x)/(x-z) dx + 2 pi J(z) with the closed-form J continued
    to complex argument, which matches the boundary value from above.
    """
    zeta = complex(zeta)
    if zeta.imag > 1e-14:
        raise ValueError("continuation is defined for Im(zeta) <= 0")
    if zeta.imag == 0.0:
        return np.conj(response(bath, zeta.real).K)
    nd = _nodes(bath)
    c = float(np.clip(zeta.real, nd.lo, nd.hi))
    jc = float(bath.j(np.array(c)))
    # subtract the local linear part of J as well: the remaining integrand has no
    # unresolved dip of width |Im zeta| at x = Re zeta
    h = 1e-6 * max(1.0, abs(c))
    if nd.lo + 10 * h < c < nd.hi - 10 * h:
        jp = float(bath.j(np.array(c + h)) - bath.j(np.array(c - h))) / (2 * h)
    else:
        jp = 0.0
    logterm = np.log(nd.hi - zeta) - np.log(nd.lo - zeta)
    integral = np.sum(nd.w * (nd.j - jc - jp * (nd.x - c)) / (nd.x - zeta))
    integral += jc * logterm
    integral += jp * ((nd.hi - nd.lo) + (zeta - c) * logterm)
    return -1j * integral + 2 * math.pi * bath.spectral.j_complex(zeta)


# --- bath correlation function ---------------------------------------------------

def alpha(bath: BathSpec, tau: float) -> complex:
    """Bath correlation function alpha(tau) = int J(nu) n(nu) exp(-i nu tau) dnu."""
    if tau < 0:
        return np.conj(alpha(bath, -tau))
    nd = _nodes(bath)
    if nd.j0ref == 0.0:
        return 0.0 + 0.0j

    def f(nu):
        return bath.jn(np.asarray([nu]))[0]

    scale = float(np.sum(np.abs(nd.w * nd.jn)))
    if tau == 0.0:
        val, err = integrate.quad(f, nd.lo, nd.hi, limit=400)
        _check_quad(err, scale)
        return complex(val, 0.0)
    re, re_err = integrate.quad(f, nd.lo, nd.hi, weight="cos", wvar=tau, limit=400)
    im, im_err = integrate.quad(f, nd.lo, nd.hi, weight="sin", wvar=tau, limit=400)
    _check_quad(re_err, scale)
    _check_quad(im_err, scale)
    return complex(re, -im)


def _check_quad(err: float, scale: float):
    if err > max(1e-8, 1e-4 * scale):
        raise QuadratureError(f"correlation integral error estimate {err:.2e} too large")


def alpha_lags(bath: BathSpec, dt: float, nlags: int) -> np.ndarray:
    """alpha on the uniform lag grid (0, dt, ..., nlags*dt) via a padded FFT."""
    nd = _nodes(bath)
    if nd.j0ref == 0.0:
        return np.zeros(nlags + 1, dtype=complex)
    lagmax = max(nlags * dt, dt)
    dnu_target = min(nd.scale / 40, math.pi / (8 * lagmax), (nd.hi - nd.lo) / 256)
    from scipy.fft import next_fast_len
    L = next_fast_len(max(int(math.ceil(2 * math.pi / (dnu_target * dt))), nlags + 1))
    dnu = 2 * math.pi / (L * dt)
    K = int(math.ceil((nd.hi - nd.lo) / dnu)) + 1
    if K > L:
        raise QuadratureError("time step too coarse for the bath bandwidth")
    nus = nd.lo + dnu * np.arange(K)
    f = bath.jn(nus)
    padded = np.zeros(L, dtype=complex)
    padded[:K] = f
    spec = np.fft.fft(padded)[: nlags + 1]
    m = np.arange(nlags + 1)
    out = dnu * np.exp(-1j * nd.lo * m * dt) * spec
    # rectangle -> trapezoid endpoint correction
    out -= dnu * 0.5 * (f[0] * np.exp(-1j * nus[0] * m * dt)
                        + f[-1] * np.exp(-1j * nus[-1] * m * dt))
    return out
