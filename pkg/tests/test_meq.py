import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from openpair import (BathSpec, CoupledBath, Flat, FlatOccupation, MultiBathSpec,
                      MultiPeak, SingularGeneratorError, SuperOhmicExpCutoff,
                      SystemSpec, Thermal, br_generator, br_perturbative_rate,
                      closed_form_eigenvalues, collective_generator, evolve,
                      from_moment_vector, individual_generator, kossakowski,
                      lindblad_rates, markov_scale, multibath_generator,
                      occupation, response, secularize, spbr_generator,
                      spbr_perturbative_rate, stability_margin, steady_state,
                      to_moment_vector)
from openpair.exact import SecondMoments
from openpair.meq import MARKOV_THRESHOLD, _moment_equation

SQ2 = 2**-0.5


def fock_probe_generator(sys, bath, n_max=5):
    """Independent reconstruction of (M, f0) from the full density-matrix
    master equation: probe instantaneous derivatives of basis states."""
    from openpair.diag import fock_master_rhs
    rhs, (a, b), _ = fock_master_rhs(sys, bath, n_max)
    levels = n_max + 1
    dim = a.shape[0]

    def fvec(rho):
        fab = np.trace(a.conj().T @ b @ rho)
        return np.array([np.trace(a.conj().T @ a @ rho).real,
                         np.trace(b.conj().T @ b @ rho).real,
                         2 * fab.real, 2 * fab.imag])

    def ket(na, nb):
        v = np.zeros(dim)
        v[na * levels + nb] = 1.0
        return v

    def dm(v):
        return np.outer(v, v.conj())

    probes = [dm(ket(1, 0)), dm(ket(0, 1)),
              dm((ket(1, 0) + ket(0, 1)) / np.sqrt(2)),
              dm((ket(1, 0) + 1j * ket(0, 1)) / np.sqrt(2))]
    f0 = fvec(rhs(dm(ket(0, 0))))
    F = np.array([fvec(r) for r in probes]).T
    G = np.array([fvec(rhs(r)) for r in probes]).T
    M = (f0[:, None] - G) @ np.linalg.inv(F)
    return M, f0


# --- generator assembly ----------------------------------------------------------

def test_br_matrix_matches_master_equation_probe(paper_bath, fig_sys):
    g = br_generator(fig_sys, paper_bath)
    M, f0 = fock_probe_generator(fig_sys, paper_bath)
    assert np.max(np.abs(g.M - M)) < 1e-13
    assert np.max(np.abs(g.f0 - f0)) < 1e-13


def test_br_matrix_matches_kossakowski_builder(paper_bath, fig_sys):
    g = br_generator(fig_sys, paper_bath)
    kp = kossakowski(fig_sys, paper_bath)
    M, f0 = _moment_equation(fig_sys, kp.Ldown, kp.Lup, kp.h)
    assert np.max(np.abs(g.M - M)) < 1e-13
    assert np.max(np.abs(g.f0 - f0)) < 1e-13


def test_br_cross_terms_vanish_for_decoupled_mode(paper_bath):
    s = SystemSpec(1.0, 0.9, 0.7, 0.0)
    g = br_generator(s, paper_bath)
    assert np.all(g.M[0:2, 2:4] == 0)
    assert np.all(g.M[2:4, 0:2] == 0)
    assert g.f0[2] == 0 and g.f0[3] == 0


def test_flat_degenerate_null_vector():
    bath = BathSpec(Flat(j0=1e-3, numin=0.2, numax=1.8), FlatOccupation(0.2))
    s = SystemSpec(1.0, 1.0, 0.8, 0.45)
    g = br_generator(s, bath)
    # the bath-decoupled combination is conserved at degeneracy
    u = np.array([s.phi_b**2, s.phi_a**2, -s.phi_a * s.phi_b, 0.0])
    assert np.max(np.abs(u @ g.M)) < 1e-15


def test_spbr_equals_br_at_degeneracy(paper_bath):
    s = SystemSpec(1.0, 1.0, SQ2, SQ2)
    assert np.array_equal(br_generator(s, paper_bath).M, spbr_generator(s, paper_bath).M)


def test_spbr_differs_only_in_coherence_columns(paper_bath, fig_sys):
    M = br_generator(fig_sys, paper_bath).M
    MS = spbr_generator(fig_sys, paper_bath).M
    assert np.array_equal(M[:, 0:2], MS[:, 0:2])
    assert not np.allclose(M[:, 2:4], MS[:, 2:4])
    assert np.array_equal(br_generator(fig_sys, paper_bath).f0,
                          spbr_generator(fig_sys, paper_bath).f0)


# --- secular and phenomenological forms ----------------------------------------------

def test_secular_kills_coherence(paper_bath, fig_sys):
    g = secularize(br_generator(fig_sys, paper_bath))
    traj = evolve(g, np.zeros(4), np.linspace(0, 50, 201))
    assert np.all(traj[:, 2] == 0) and np.all(traj[:, 3] == 0)


def test_secular_steady_populations_are_bath_occupations(paper_bath, fig_sys):
    g = secularize(br_generator(fig_sys, paper_bath))
    ss = steady_state(g)
    assert ss[0] == pytest.approx(occupation(paper_bath, fig_sys.omega_a), abs=1e-12)
    assert ss[1] == pytest.approx(occupation(paper_bath, fig_sys.omega_b), abs=1e-12)
    assert ss[2] == 0 and ss[3] == 0


def test_secularize_idempotent_and_kind_checked(paper_bath, fig_sys):
    g = secularize(br_generator(fig_sys, paper_bath))
    g2 = secularize(g)
    assert np.array_equal(g.M, g2.M) and g2.kind == "secular"
    with pytest.raises(ValueError):
        secularize(collective_generator(fig_sys, paper_bath))


def test_individual_is_secular_br_without_lamb_shifts(paper_bath, fig_sys):
    gi = individual_generator(fig_sys, paper_bath)
    gs = secularize(br_generator(fig_sys, paper_bath))
    expected = np.array(gs.M)
    ra = response(paper_bath, fig_sys.omega_a)
    rb = response(paper_bath, fig_sys.omega_b)
    lamb = fig_sys.phi_a**2 * ra.K.imag - fig_sys.phi_b**2 * rb.K.imag
    expected[2, 3] += lamb
    expected[3, 2] -= lamb
    assert np.max(np.abs(gi.M - expected)) < 1e-15
    assert np.max(np.abs(gi.f0 - gs.f0)) < 1e-15


def test_collective_zero_mode_at_degeneracy(paper_bath):
    s = SystemSpec(1.0, 1.0, SQ2, SQ2)
    g = collective_generator(s, paper_bath)
    assert np.min(np.abs(np.linalg.eigvals(g.M))) < 1e-12


def test_collective_equalizes_populations(paper_bath, fig_sys):
    g = collective_generator(fig_sys, paper_bath)
    ss = steady_state(g)
    assert ss[0] == pytest.approx(ss[1], rel=1e-6)
    na = occupation(paper_bath, fig_sys.omega_a)
    nb = occupation(paper_bath, fig_sys.omega_b)
    assert abs(ss[0] - na) > 0.01 or abs(ss[1] - nb) > 0.01


# --- Kossakowski spectra ----------------------------------------------------------------

def test_rates_at_degeneracy_are_nonnegative(paper_bath):
    s = SystemSpec(1.0, 1.0, SQ2, SQ2)
    rates = lindblad_rates(kossakowski(s, paper_bath))
    for lam_hi, lam_lo in rates.values():
        assert lam_lo == pytest.approx(0.0, abs=1e-15)
        assert lam_hi > 0


def test_one_negative_rate_off_degeneracy(paper_bath, fig_sys):
    rates = lindblad_rates(kossakowski(fig_sys, paper_bath))
    for lam_hi, lam_lo in rates.values():
        assert lam_lo < 0 < lam_hi


def test_rates_match_eigensolver(paper_bath, fig_sys):
    kp = kossakowski(fig_sys, paper_bath)
    rates = lindblad_rates(kp)
    for name, L in (("down", kp.Ldown), ("up", kp.Lup)):
        ev = np.linalg.eigvalsh(L)
        assert rates[name][1] == pytest.approx(ev[0], abs=1e-12)
        assert rates[name][0] == pytest.approx(ev[1], abs=1e-12)


# --- evolution and fixed point --------------------------------------------------------

def test_evolve_identity_when_frozen():
    g_zero = br_generator(SystemSpec(1.0, 0.9, 0.0, 0.0),
                          BathSpec(SuperOhmicExpCutoff(0.0, 0.9, 3.0), FlatOccupation(0.1)))
    f0 = np.array([0.3, 0.1, 0.02, -0.01])
    # fully decoupled, zero bath: only the free coherence rotation remains
    traj = evolve(g_zero, f0, np.linspace(0, 10, 11))
    assert np.allclose(traj[:, 0], 0.3) and np.allclose(traj[:, 1], 0.1)
    assert np.allclose(traj[:, 2]**2 + traj[:, 3]**2, 0.02**2 + 0.01**2)


def test_steady_state_is_fixed_point(paper_bath, fig_sys):
    g = br_generator(fig_sys, paper_bath)
    ss = steady_state(g)
    traj = evolve(g, ss, np.linspace(0, 20, 21))
    assert np.max(np.abs(traj - ss[None, :])) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_evolve_matches_step_doubling_integrator(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    M = A @ A.T + 0.1 * np.eye(4) + 0.5 * (rng.normal(size=(4, 4)) - A)
    # keep it stable: shift spectrum into the right half plane
    M = M + (0.1 - min(np.linalg.eigvals(M).real, default=0)) * np.eye(4)
    from openpair.meq import Generator
    g = Generator(M=M, f0=rng.normal(size=4), kind="br")
    f_init = rng.normal(size=4)
    times = np.linspace(0, 3.0, 7)
    traj = evolve(g, f_init, times)
    sol = solve_ivp(lambda t, f: -g.M @ f + g.f0, (0, 3.0), f_init, t_eval=times,
                    rtol=1e-12, atol=1e-13)
    assert np.max(np.abs(traj - sol.y.T)) < 1e-8


def test_steady_state_singular_at_degeneracy(paper_bath):
    g = br_generator(SystemSpec(1.0, 1.0, SQ2, SQ2), paper_bath)
    with pytest.raises(SingularGeneratorError):
        steady_state(g)


def test_swapped_sampling_improves_steady_coherence(strong_bath):
    from openpair import exact_steady_state
    for d in (0.02, 0.05, 0.1):
        s = SystemSpec.from_mean(1.0, d, SQ2, SQ2)
        ss_exact = exact_steady_state(s, strong_bath).fab.real
        fab_br = steady_state(br_generator(s, strong_bath))[2] / 2
        fab_sp = steady_state(spbr_generator(s, strong_bath))[2] / 2
        assert abs(fab_sp - ss_exact) < abs(fab_br - ss_exact)


# --- spectra, stability, perturbative rates ------------------------------------------------

def test_closed_form_eigenvalues_match_numeric(paper_bath):
    for (wa, wb, pa, pb) in ((1.0, 0.9, SQ2, SQ2), (1.3, 0.7, 0.9, 0.4),
                             (0.95, 1.1, 0.5, 0.8)):
        s = SystemSpec(wa, wb, pa, pb)
        mus = closed_form_eigenvalues(s, paper_bath)
        ev = np.linalg.eigvals(br_generator(s, paper_bath).M)
        assert np.max(np.abs(np.sort_complex(mus) - np.sort_complex(ev))) < 1e-10


def test_closed_form_zero_eigenvalue_at_degeneracy(paper_bath):
    mus = closed_form_eigenvalues(SystemSpec(1.0, 1.0, SQ2, SQ2), paper_bath)
    assert np.min(np.abs(mus)) < 1e-12


def test_closed_form_decoupled_pattern(paper_bath):
    mus = closed_form_eigenvalues(SystemSpec(1.3, 0.7, 0.0, 0.0), paper_bath)
    assert sorted(np.abs(mus)) == pytest.approx([0, 0, 0.6, 0.6], abs=1e-14)
    assert sorted(m.imag for m in mus) == pytest.approx([-0.6, 0, 0, 0.6], abs=1e-14)


def test_stability_margin_zero_at_degeneracy(paper_bath):
    assert stability_margin(SystemSpec(1.0, 1.0, SQ2, SQ2), paper_bath) == 0


def test_single_peak_weak_coupling_is_stable(paper_bath):
    for d in np.linspace(-0.3, 0.3, 13):
        s = SystemSpec.from_mean(1.0, float(d), SQ2, SQ2)
        assert stability_margin(s, paper_bath) >= 0
        mus = closed_form_eigenvalues(s, paper_bath)
        assert np.min(mus.real) > -1e-12


def test_two_peak_valley_violates_stability():
    spec = MultiPeak((SuperOhmicExpCutoff(0.3, 0.7, 30.0),
                      SuperOhmicExpCutoff(0.3, 1.3, 30.0)))
    bath = BathSpec(spec, Thermal(0.5))
    s = SystemSpec(0.93, 0.92, SQ2, SQ2)
    assert stability_margin(s, bath) < 0
    assert np.min(closed_form_eigenvalues(s, bath).real) < 0
    assert markov_scale(s, bath) > MARKOV_THRESHOLD


def test_markov_scale_small_for_weak_smooth_bath(paper_bath, fig_sys):
    assert markov_scale(fig_sys, paper_bath) < 0.01


def test_perturbative_rates_vanish_at_degeneracy(paper_bath):
    s = SystemSpec(1.0, 1.0, SQ2, SQ2)
    assert br_perturbative_rate(s, paper_bath) == 0
    assert spbr_perturbative_rate(s, paper_bath) == 0


def test_perturbative_rates_agree_for_flat_bath():
    # a very wide band makes the response equal at both frequencies, so the
    # sampling-difference correction term vanishes
    bath = BathSpec(Flat(j0=1e-3, numin=1.0 - 400, numax=1.0 + 400), FlatOccupation(0.3))
    s = SystemSpec.from_mean(1.0, 0.03, SQ2, SQ2)
    assert br_perturbative_rate(s, bath) == pytest.approx(
        spbr_perturbative_rate(s, bath), rel=1e-5)


# --- multiple baths --------------------------------------------------------------------

def test_multibath_single_reduction(paper_bath, fig_sys):
    multi = MultiBathSpec((CoupledBath(paper_bath, fig_sys.phi_a, fig_sys.phi_b),))
    for kind in ("br", "spbr"):
        gm = multibath_generator(multi, fig_sys, kind)
        gs = br_generator(fig_sys, paper_bath) if kind == "br" \
            else spbr_generator(fig_sys, paper_bath)
        assert np.array_equal(gm.M, gs.M) and np.array_equal(gm.f0, gs.f0)


def test_two_half_strength_baths_equal_one(paper_bath, fig_sys):
    half = BathSpec(SuperOhmicExpCutoff(j0=5e-4, omega0=0.9, z=3.0), Thermal(kbt=0.52))
    multi = MultiBathSpec((CoupledBath(half, fig_sys.phi_a, fig_sys.phi_b),
                           CoupledBath(half, fig_sys.phi_a, fig_sys.phi_b)))
    gm = multibath_generator(multi, fig_sys, "br")
    gs = br_generator(fig_sys, paper_bath)
    assert np.max(np.abs(gm.M - gs.M)) < 1e-15
    assert np.max(np.abs(gm.f0 - gs.f0)) < 1e-15


def test_multibath_closed_form_for_parallel_patterns(fig_sys):
    # the eigenvalue formula with summed responses holds when coupling vectors
    # are parallel (the sum acts as one effective bath)
    b1 = BathSpec(SuperOhmicExpCutoff(j0=2e-3, omega0=0.9, z=3.0), Thermal(kbt=0.52))
    b2 = BathSpec(SuperOhmicExpCutoff(j0=1e-3, omega0=1.3, z=5.0), Thermal(kbt=0.3))
    multi = MultiBathSpec((CoupledBath(b1, 0.6 * SQ2, 0.6 * SQ2),
                           CoupledBath(b2, 0.4, 0.4)))
    gm = multibath_generator(multi, fig_sys, "br")
    mus = closed_form_eigenvalues(fig_sys, multi)
    ev = np.linalg.eigvals(gm.M)
    assert np.max(np.abs(np.sort_complex(mus) - np.sort_complex(ev))) < 1e-12


def test_multibath_generator_rejects_other_kinds(paper_bath, fig_sys):
    multi = MultiBathSpec((CoupledBath(paper_bath, SQ2, SQ2),))
    with pytest.raises(ValueError):
        multibath_generator(multi, fig_sys, "secular")


# --- moment vector round trip ------------------------------------------------------------

@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_moment_vector_round_trip(faa, fbb, re, im):
    m = SecondMoments(faa=faa, fbb=fbb, fab=complex(re, im))
    back = from_moment_vector(to_moment_vector(m))
    assert back == m
