import json
import math
import warnings

import numpy as np
import pytest
import scipy.linalg

from emdecay.expm import BatchedExp, expm
from emdecay.system import (
    EFIELD,
    HFIELD,
    RHO,
    VEL,
    EulerMaxwellParams,
    HyperbolicSystem,
    build_euler_maxwell,
    check_structure,
    constraint_subspace,
    direction_set,
    fit_margin,
    green_batch,
    green_matrix,
    load_system,
    restricted_spectrum,
    scan_abscissa,
    skew,
    sort_eigenvalues,
    symbol,
    xi_grid,
)

rng = np.random.default_rng(7)


def rhs_from_equations(xi, z, n_inf=1.0, a_inf=1.0, B=(0.0, 0.0, 0.0)):
    """dz/dt written directly from the Fourier-side equations, one field at a time."""
    rho, v, E, h = z[0], z[1:4], z[4:7], z[7:10]
    xi = np.asarray(xi, dtype=float)
    out = np.empty(10, complex)
    out[0] = -1j * n_inf * xi @ v
    out[1:4] = -1j * a_inf * xi * rho - E - v + np.cross(B, v)
    out[4:7] = 1j * np.cross(xi, h) + n_inf * v
    out[7:10] = -1j * np.cross(xi, E)
    return out


def dense_generator(xi, **kw):
    return np.column_stack([rhs_from_equations(xi, e, **kw) for e in np.eye(10)])


# ------------------------------------------------------------------ construction

def test_default_params_give_unit_a0():
    p = EulerMaxwellParams()
    # p(n) = K n^gamma with K = 1/2, gamma = 2: p'(1) = 1
    assert p.a_inf == pytest.approx(1.0)
    assert np.array_equal(build_euler_maxwell(p).A0, np.eye(10))


@pytest.mark.parametrize("bad", [{"n_inf": 0}, {"pressure_K": -1}, {"pressure_gamma": 0}])
def test_params_reject_nonpositive(bad):
    with pytest.raises(ValueError):
        EulerMaxwellParams(**bad)


def test_structure_holds_for_random_params():
    for _ in range(10):
        p = EulerMaxwellParams(n_inf=rng.uniform(0.2, 3), B_inf=tuple(rng.normal(size=3)),
                               pressure_gamma=rng.uniform(1, 3), pressure_K=rng.uniform(0.1, 2))
        s = build_euler_maxwell(p)
        assert np.linalg.eigvalsh(s.A0).min() > 0
        assert all(np.array_equal(a, a.T) for a in s.A)
        assert np.linalg.eigvalsh((s.L + s.L.T) / 2).min() >= -1e-12


def test_magnetic_block_symmetric_part():
    p = EulerMaxwellParams(n_inf=1.7, B_inf=(0.0, 0.0, 1.0))
    Lv = build_euler_maxwell(p).L[VEL, VEL]
    assert np.allclose((Lv + Lv.T) / 2, 1.7 * np.eye(3), atol=1e-14)


def test_skew_is_cross_product():
    a, b = rng.normal(size=3), rng.normal(size=3)
    assert np.allclose(skew(a) @ b, np.cross(a, b))


# ------------------------------------------------------------------ symbol

def test_symbol_at_zero():
    s = build_euler_maxwell(EulerMaxwellParams(n_inf=2.0))
    ev = symbol(s, np.zeros(3))
    assert ev.omega is None
    assert np.allclose(ev.phi_hat, np.linalg.solve(s.A0, s.L))


def test_symbol_linear_in_radius():
    s = build_euler_maxwell()
    xi = rng.normal(size=3)
    base = np.linalg.solve(s.A0, s.L)
    assert np.allclose(symbol(s, 2 * xi).phi_hat - base, 2 * (symbol(s, xi).phi_hat - base), atol=1e-13)


@pytest.mark.parametrize("n_inf,B", [(1.0, (0, 0, 0)), (2.5, (0.3, -0.4, 1.1))])
def test_symbol_matches_equations(n_inf, B):
    p = EulerMaxwellParams(n_inf=n_inf, B_inf=B)
    s = build_euler_maxwell(p)
    for _ in range(5):
        xi = rng.normal(size=3) * 3
        M = dense_generator(xi, n_inf=n_inf, a_inf=p.a_inf, B=np.array(B, float))
        assert np.allclose(symbol(s, xi).phi_hat, -M, atol=1e-13)


def test_eigenvalues_match_dense_solver():
    xi = np.array([1.0, 0.0, 0.0])
    phi = -dense_generator(xi)
    ours = sort_eigenvalues(np.linalg.eigvals(symbol(build_euler_maxwell(), xi).phi_hat))
    ref = sort_eigenvalues(scipy.linalg.eigvals(phi))
    assert np.allclose(ours, ref, atol=1e-10)


def test_xi_dimension_checked():
    with pytest.raises(ValueError):
        symbol(build_euler_maxwell(), [1.0, 2.0])


# ------------------------------------------------------------------ Green matrix

def test_green_identity_at_zero_time():
    assert np.allclose(green_matrix(build_euler_maxwell(), [0.3, 0.1, -2], 0.0), np.eye(10))


def test_green_semigroup():
    s = build_euler_maxwell(EulerMaxwellParams(B_inf=(0, 0, 1)))
    for xi in [np.zeros(3), [0.01, 0, 0], [1.0, 2.0, -0.5], [30.0, 0, 40.0]]:
        for t, u in [(0.5, 1.5), (3.0, 7.0), (10.0, 0.0)]:
            G = green_matrix(s, xi, t + u)
            err = np.linalg.norm(G - green_matrix(s, xi, t) @ green_matrix(s, xi, u))
            assert err <= 1e-9 * np.linalg.norm(G)


def test_green_matches_taylor_series():
    phi = symbol(build_euler_maxwell(), np.array([0.6, 0.0, 0.8])).phi_hat
    term = np.eye(10, dtype=complex)
    total = term.copy()
    norm = np.linalg.norm(phi, 2)
    k = 0
    # remainder of sum_k (-phi)^k / k! after k terms is below norm^{k+1} e^norm / (k+1)!
    while norm ** (k + 1) * math.exp(norm) / math.factorial(k + 1) > 1e-14:
        k += 1
        term = term @ (-phi) / k
        total += term
    G = green_matrix(build_euler_maxwell(), [0.6, 0.0, 0.8], 1.0)
    assert np.abs(G - total).max() < 1e-10


def test_green_rejects_negative_time():
    with pytest.raises(ValueError):
        green_matrix(build_euler_maxwell(), [1, 0, 0], -1.0)


def test_expm_agrees_with_pade_and_fallback():
    M = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    assert np.allclose(expm(M), scipy.linalg.expm(M), atol=1e-10)
    jordan = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
    assert np.allclose(expm(jordan), scipy.linalg.expm(jordan), atol=1e-12)
    stack = np.stack([jordan, np.diag([1.0, 2.0, 3.0])])
    B = BatchedExp(stack)
    assert list(B.fallback) == [0]
    assert np.allclose(B(0.7)[0], scipy.linalg.expm(-0.7 * jordan))
    z = rng.normal(size=(2, 3))
    assert np.allclose(B.apply(0.7, z), np.einsum("kij,kj->ki", B(0.7), z))


# ------------------------------------------------------------------ constraints

def test_constraint_dimensions():
    s = build_euler_maxwell()
    assert constraint_subspace(s, np.zeros(3)).dim == 9
    for _ in range(5):
        assert constraint_subspace(s, rng.normal(size=3)).dim == 8


def test_constraint_rows_match_gauss_laws():
    xi = rng.normal(size=3)
    C = constraint_subspace(build_euler_maxwell(), xi).C
    expect = np.zeros((2, 10), complex)
    expect[0, RHO] = 1.0
    expect[0, EFIELD] = 1j * xi
    expect[1, HFIELD] = 1j * xi
    assert np.allclose(C, expect)


def test_constraint_basis_and_projector():
    s = build_euler_maxwell()
    for xi in [np.zeros(3), rng.normal(size=3), 100 * rng.normal(size=3)]:
        cs = constraint_subspace(s, xi)
        assert np.abs(cs.C @ cs.basis).max() <= 1e-12 * max(1, np.linalg.norm(xi))
        P = cs.projector
        assert np.allclose(P @ P, P, atol=1e-12)
        assert np.allclose(P, P.conj().T, atol=1e-12)


def test_green_keeps_constraint_space():
    s = build_euler_maxwell(EulerMaxwellParams(B_inf=(0.2, 0.0, 0.7)))
    for xi in [[0.05, 0, 0], [1.0, -1.0, 0.5], [20.0, 3.0, 1.0]]:
        cs = constraint_subspace(s, xi)
        off = np.eye(10) - cs.projector
        for t in (0.0, 1.0, 4.0, 10.0):
            assert np.linalg.norm(off @ green_matrix(s, xi, t) @ cs.basis) <= 1e-9


def test_unconstrained_system_has_no_subspace():
    s = HyperbolicSystem(np.eye(2), (np.eye(2),), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        constraint_subspace(s, [1.0])


# ------------------------------------------------------------------ spectrum

def test_zero_frequency_spectrum():
    sp = restricted_spectrum(build_euler_maxwell(), np.zeros(3))
    ev = sp.eigenvalues
    assert np.sum(np.abs(ev) < 1e-12) == 3
    osc = ev[np.abs(ev) > 1e-12]
    # each (v, E) pair obeys lambda^2 - lambda + 1 = 0
    assert np.allclose(osc**2 - osc + 1, 0, atol=1e-12)
    assert np.sum(np.abs(osc - (0.5 + 0.5j * math.sqrt(3))) < 1e-8) == 3
    assert sp.abscissa == pytest.approx(0.0, abs=1e-12)


def test_spectrum_nonnegative_on_scan():
    s = build_euler_maxwell(EulerMaxwellParams(B_inf=(0, 0, 1)))
    scan = scan_abscissa(s, xi_grid(1e-2, 1e2, 25), direction_set(3, 6))
    assert scan.mu.min() >= -1e-10
    assert scan.residual < 1e-9


def test_rotation_about_background_field():
    s = build_euler_maxwell(EulerMaxwellParams(B_inf=(0, 0, 1.3)))
    th = 0.83
    G = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    for _ in range(5):
        xi = rng.normal(size=3) * 2
        a = sort_eigenvalues(restricted_spectrum(s, xi, restrict=False).eigenvalues)
        b = sort_eigenvalues(restricted_spectrum(s, G @ xi, restrict=False).eigenvalues)
        assert np.allclose(a, b, atol=1e-10)


def test_abscissa_is_min_real_part():
    sp = restricted_spectrum(build_euler_maxwell(), [0.3, 0.2, 0.1])
    assert sp.abscissa == sp.eigenvalues.real.min()


def test_margin_fit():
    scan = scan_abscissa(build_euler_maxwell(), xi_grid(1e-2, 1e2, 60), direction_set(3))
    fit = fit_margin(scan)
    assert fit.c0 > 0
    assert fit.low_slope == pytest.approx(2.0, abs=0.15)
    assert fit.high_slope == pytest.approx(-2.0, abs=0.15)


def test_noninvariant_constraints_warn():
    # constraint w_1 = 0 is not preserved by a flux that mixes the two components
    s = HyperbolicSystem(np.eye(2), (np.array([[0.0, 1.0], [1.0, 0.0]]),), np.eye(2),
                         (np.zeros((1, 2)),), np.array([[1.0, 0.0]]))
    with pytest.warns(RuntimeWarning):
        restricted_spectrum(s, [1.0])


# ------------------------------------------------------------------ structure

def test_structure_report_euler_maxwell():
    rep = check_structure(build_euler_maxwell())
    assert (rep.A0_spd, rep.Aj_symmetric, rep.L_nonneg, rep.L_kernel_nontrivial, rep.L_symmetric) == (
        True, True, True, True, False)


def test_structure_zero_dissipation():
    rep = check_structure(HyperbolicSystem(np.eye(3), (np.diag([1.0, 0, -1]),), np.zeros((3, 3))))
    assert rep.L_nonneg and rep.L_kernel_nontrivial


def test_structure_flags_nonsymmetric_flux():
    s = build_euler_maxwell()
    A = list(s.A)
    A[0] = A[0].copy()
    A[0][0, 2] += 1.0
    bad = HyperbolicSystem(s.A0, tuple(A), s.L, s.Q, s.R)
    assert not check_structure(bad).Aj_symmetric


# ------------------------------------------------------------------ ingestion

def test_load_builtin_and_explicit(tmp_path):
    s = load_system({"builtin": "euler_maxwell", "params": {"n_inf": 2.0}})
    assert s.A0[0, 0] == pytest.approx(EulerMaxwellParams(n_inf=2.0).a_inf)
    doc = {"m": 2, "n": 1, "A0": [[1, 0], [0, 1]], "A": [[[0, 1], [1, 0]]], "L": [[0, 0], [0, 1]]}
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(doc))
    for src in (doc, json.dumps(doc), str(path), path):
        sysm = load_system(src)
        assert (sysm.m, sysm.n) == (2, 1)


@pytest.mark.parametrize("doc", [
    {"builtin": "mhd"},
    {"m": 3, "n": 1, "A0": [[1, 0], [0, 1]], "A": [[[0, 1], [1, 0]]], "L": [[0, 0], [0, 1]]},
    {"m": 2, "n": 1, "A0": [[1, 0], [0, 1]]},
])
def test_load_rejects_bad_documents(doc):
    with pytest.raises(ValueError):
        load_system(doc)


def test_green_batch_matches_single():
    s = build_euler_maxwell()
    xis = rng.normal(size=(4, 3))
    G = green_batch(s, xis)(1.3)
    for k in range(4):
        assert np.allclose(G[k], green_matrix(s, xis[k], 1.3), atol=1e-12)


def test_no_warnings_on_default_scan():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scan_abscissa(build_euler_maxwell(), [0.1, 1.0], direction_set(3))
