import numpy as np
import pytest

from emdecay.energy import (
    FrequencyGrid,
    FrequencyState,
    LyapunovParams,
    LyapunovSearchError,
    dissipation,
    energies,
    energy_identity_residual,
    integrate_rk4,
    linear_rhs,
    linear_rhs_array,
    lyapunov,
    lyapunov_matrix,
    lyapunov_time_derivative,
    pointwise_check,
    random_constrained,
    search_params,
    validate_params,
)
from emdecay.system import EulerMaxwellParams, build_euler_maxwell, constraint_subspace, symbol


def random_state(rng, xi, em=EulerMaxwellParams()):
    V = constraint_subspace(build_euler_maxwell(em), xi).basis
    c = rng.standard_normal(V.shape[1]) + 1j * rng.standard_normal(V.shape[1])
    return V @ c


@pytest.fixture(scope="module")
def grid():
    return FrequencyGrid.default(count=60)


@pytest.fixture(scope="module")
def searched(grid):
    return search_params(xis=grid.xis)


def test_rhs_matches_symbol():
    rng = np.random.default_rng(1)
    for em in (EulerMaxwellParams(), EulerMaxwellParams(n_inf=2.0, B_inf=(0.3, -1.0, 0.5))):
        sysm = build_euler_maxwell(em)
        for _ in range(10):
            xi = rng.normal(size=3) * 3
            z = rng.normal(size=10) + 1j * rng.normal(size=10)
            assert np.allclose(linear_rhs_array(xi, z, em), -symbol(sysm, xi).phi_hat @ z, atol=1e-12)


def test_frequency_state_round_trip():
    rng = np.random.default_rng(2)
    xi = np.array([0.4, -1.0, 2.0])
    s = FrequencyState.from_vector(xi, random_state(rng, xi))
    assert s.is_constrained()
    assert np.allclose(linear_rhs(s).vector(), linear_rhs_array(xi, s.vector(), EulerMaxwellParams()))
    e0 = energies(s)[0]
    assert e0 == pytest.approx(np.linalg.norm(s.vector()) ** 2)
    assert dissipation(s) > 0


def test_lyapunov_matrix_is_the_functional():
    rng = np.random.default_rng(3)
    lp = LyapunovParams(0.7, 0.4, 0.1)
    for _ in range(20):
        xi = rng.normal(size=3) * rng.choice([0.01, 1.0, 50.0])
        z = rng.normal(size=10) + 1j * rng.normal(size=10)
        H = lyapunov_matrix(xi, lp.alpha1, lp.alpha2, 1.0, 1.0)
        assert np.allclose(H, H.conj().T)
        assert np.real(z.conj() @ H @ z) == pytest.approx(lyapunov(FrequencyState.from_vector(xi, z), lp), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_energy_identity_along_trajectories(seed):
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=3) * 2
    traj = integrate_rk4(xi, random_state(rng, xi), 5.0)
    assert energy_identity_residual(traj).max() <= 1e-8


def test_constraints_persist_along_trajectories():
    rng = np.random.default_rng(7)
    xi = np.array([1.5, 0.2, -0.8])
    traj = integrate_rk4(xi, random_state(rng, xi), 10.0)
    res = [max(FrequencyState.from_vector(xi, z).constraint_residual()) for z in traj.states]
    assert max(res) <= 1e-10


def test_forced_identity_residual_is_the_source_term():
    rng = np.random.default_rng(0)
    xi = np.array([1.0, -0.5, 0.3])
    z0 = random_state(rng, xi)
    q0 = rng.normal(size=(3, 3))
    q0 = q0 + q0.T
    r0 = rng.normal(size=3) + 1j * rng.normal(size=3)
    forcing = lambda t: (q0 * np.cos(t), r0 * np.exp(-t))
    traj = integrate_rk4(xi, z0, 1.0, forcing_fn=forcing)
    q, r = traj.forcing
    assert q.shape == (len(traj.times), 3, 3)
    # source in the v-equation is (i q xi + r) / n_inf; with n_inf = 1 the
    # identity leaves 2 Re <i q xi + r, v>
    src = 1j * np.einsum("kij,j->ki", q, xi) + r
    expected = np.abs(2 * np.real(np.sum(src * np.conj(traj.states[:, 1:4]), axis=1)))
    assert np.allclose(energy_identity_residual(traj), expected, atol=1e-8)


def test_time_derivative_by_polarization(grid):
    lp = LyapunovParams(0.5, 0.5, 0.1)
    rng = np.random.default_rng(4)
    z = random_constrained(grid.V, 3, rng)
    X = np.broadcast_to(grid.xis[:, None, :], z.shape[:2] + (3,))
    dE = lyapunov_time_derivative(X, z, lp, grid.em)
    Kf, _, _ = grid.pencils(lp.alpha1, lp.alpha2)
    # K on X_xi expressed in basis coordinates
    c = np.einsum("kmd,ksm->ksd", grid.V.conj(), z)
    quad = np.real(np.einsum("ksd,kde,kse->ks", c.conj(), Kf, c))
    assert np.allclose(dE, -quad, atol=1e-10 * np.abs(quad).max())


def test_search_finds_positive_rate(searched):
    lp = searched.params
    assert lp.c1 > 0 and 0 < lp.alpha1 <= 1 and 0 < lp.alpha2 <= 1
    lo, hi = searched.equivalence_a0
    assert 0.5 <= lo and hi <= 2.0
    assert searched.validation["passed"]
    assert searched.validation["max_excess"] <= 0


def test_validation_rejects_inflated_rate(grid, searched):
    lp = searched.params
    bad = LyapunovParams(lp.alpha1, lp.alpha2, 3 * searched.c1_star)
    assert not validate_params(bad, grid, samples=20)["passed"]


def test_search_fails_with_certificate():
    xis = np.array([[1.0, 0.0, 0.0]])
    with pytest.raises(LyapunovSearchError) as err:
        search_params(xis=xis, coarse=[50.0], refine_steps=0)
    assert "alpha1" in err.value.certificate


def test_zero_frequency_only():
    res = search_params(xis=np.zeros((1, 3)))
    assert res.params.c1 > 0


def test_pointwise_bound(grid):
    rep = pointwise_check(grid)
    assert rep.c0 > 0
    assert rep.C >= 1.0
    assert rep.growth_points == []
    assert rep.t0_norm_range[0] == pytest.approx(1.0)
    # the fitted margin follows eta at both ends
    assert rep.low_exponent == pytest.approx(2.0, abs=0.05)
    assert rep.high_exponent == pytest.approx(-2.0, abs=0.05)


def test_params_validation():
    with pytest.raises(ValueError):
        LyapunovParams(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        FrequencyGrid(np.zeros((1, 3)), EulerMaxwellParams())
