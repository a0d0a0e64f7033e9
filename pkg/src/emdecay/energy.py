"""Frequency-wise energy method for the linearized Euler-Maxwell system.

State at one frequency: z = (rho, v, E, h) in C^10 with the Gauss relations
i xi.E = -rho and i xi.h = 0. Brackets are <a, b> = sum a_k conj(b_k).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm as pade_expm

from .expm import BatchedExp
from .kernel import EtaProfile, eta
from .system import (
    EulerMaxwellParams,
    build_euler_maxwell,
    constraint_subspace,
    direction_set,
    skew,
    symbol_batch,
    xi_grid,
)


def _omega(xi: np.ndarray):
    r = np.linalg.norm(xi, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    return r, np.where((r > 0)[..., None], xi / safe[..., None], 0.0)


def _split(z: np.ndarray):
    return z[..., 0], z[..., 1:4], z[..., 4:7], z[..., 7:10]


def _re_bracket(a, b):
    return np.real(np.sum(a * np.conj(b), axis=-1))


@dataclass(frozen=True)
class FrequencyState:
    xi: np.ndarray
    rho_hat: complex
    v_hat: np.ndarray
    E_hat: np.ndarray
    h_hat: np.ndarray

    @classmethod
    def from_vector(cls, xi, z) -> "FrequencyState":
        z = np.asarray(z, dtype=complex)
        return cls(np.asarray(xi, dtype=float), complex(z[0]), z[1:4].copy(), z[4:7].copy(), z[7:10].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.rho_hat], self.v_hat, self.E_hat, self.h_hat]).astype(complex)

    def constraint_residual(self) -> tuple:
        """(|i xi.E + rho|, |i xi.h|)."""
        return (
            abs(1j * np.dot(self.xi, self.E_hat) + self.rho_hat),
            abs(1j * np.dot(self.xi, self.h_hat)),
        )

    def is_constrained(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.linalg.norm(self.vector())))
        return max(self.constraint_residual()) <= tol * scale


@dataclass(frozen=True)
class LyapunovParams:
    alpha1: float
    alpha2: float
    c1: float
    a_inf: float = 1.0
    n_inf: float = 1.0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0 or not self.c1 > 0:
            raise ValueError("alpha1, alpha2 must be nonnegative and c1 positive")

    def as_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "c1": self.c1}


# ------------------------------------------------------------------ functionals
# The *_array versions take xi (..., 3) and z (..., 10); the FrequencyState
# versions wrap them.

def energies_array(xi, z, a_inf: float, n_inf: float):
    r, w = _omega(np.asarray(xi, dtype=float))
    rho, v, E, h = _split(np.asarray(z, dtype=complex))
    e0 = a_inf * np.abs(rho) ** 2 + n_inf * np.sum(np.abs(v) ** 2, -1) + np.sum(np.abs(E) ** 2, -1) \
        + np.sum(np.abs(h) ** 2, -1)
    e1 = _re_bracket(v, E)
    e2 = _re_bracket(1j * rho[..., None] * w, v)
    e3 = _re_bracket(E, 1j * np.cross(h, w))
    return e0, e1, e2, e3


def lyapunov_array(xi, z, alpha1: float, alpha2: float, a_inf: float, n_inf: float):
    r, _ = _omega(np.asarray(xi, dtype=float))
    e0, e1, e2, e3 = energies_array(xi, z, a_inf, n_inf)
    s = 1 + r * r
    return e0 + alpha1 / s * (e1 + a_inf * r * e2 + alpha2 * r / s * e3)


def dissipation_array(xi, z):
    r, _ = _omega(np.asarray(xi, dtype=float))
    rho, v, E, h = _split(np.asarray(z, dtype=complex))
    s = 1 + r * r
    return (np.abs(rho) ** 2 + np.sum(np.abs(v) ** 2, -1) + np.sum(np.abs(E) ** 2, -1) / s
            + r * r / s**2 * np.sum(np.abs(h) ** 2, -1))


def energies(s: FrequencyState, a_inf: float = 1.0, n_inf: float = 1.0):
    return tuple(float(x) for x in energies_array(s.xi, s.vector(), a_inf, n_inf))


def lyapunov(s: FrequencyState, params: LyapunovParams) -> float:
    return float(lyapunov_array(s.xi, s.vector(), params.alpha1, params.alpha2, params.a_inf, params.n_inf))


def dissipation(s: FrequencyState) -> float:
    return float(dissipation_array(s.xi, s.vector()))


def linear_rhs_array(xi, z, em: EulerMaxwellParams, forcing=None):
    """dz/dt assembled block by block; ``forcing`` = (q_hat (...,3,3), r_hat (...,3))."""
    xi = np.asarray(xi, dtype=float)
    rho, v, E, h = _split(np.asarray(z, dtype=complex))
    n, a = em.n_inf, em.a_inf
    B = np.asarray(em.B_inf)
    drho = -1j * n * np.sum(xi * v, -1)
    dv = -1j * a * xi * rho[..., None] - E - v + np.cross(B, v)
    if forcing is not None:
        q, rr = forcing
        dv = dv + (1j * np.einsum("...ij,...j->...i", q, xi) + rr) / n
    dE = 1j * np.cross(xi, h) + n * v
    dh = -1j * np.cross(xi, E)
    return np.concatenate([drho[..., None], dv, dE, dh], axis=-1)


def linear_rhs(s: FrequencyState, em: EulerMaxwellParams = EulerMaxwellParams(), forcing=None) -> FrequencyState:
    return FrequencyState.from_vector(s.xi, linear_rhs_array(s.xi, s.vector(), em, forcing))


# ---------------------------------------------------------- matrix forms

def a0_matrix(a_inf: float, n_inf: float) -> np.ndarray:
    return np.diag([a_inf] + [n_inf] * 3 + [1.0] * 6).astype(complex)


def lyapunov_matrix(xi, alpha1, alpha2, a_inf, n_inf) -> np.ndarray:
    """Hermitian H with z^H H z = E[z]; accepts xi (3,) or (K, 3)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    r, w = _omega(xi)
    K = xi.shape[0]
    H = np.broadcast_to(a0_matrix(a_inf, n_inf), (K, 10, 10)).copy()
    f = alpha1 / (1 + r * r)
    g = f * a_inf * r
    k3 = f * alpha2 * r / (1 + r * r)
    I3 = np.eye(3)
    H[:, 1:4, 4:7] += 0.5 * f[:, None, None] * I3
    H[:, 4:7, 1:4] += 0.5 * f[:, None, None] * I3
    H[:, 1:4, 0] += 0.5j * g[:, None] * w
    H[:, 0, 1:4] += -0.5j * g[:, None] * w
    # Re<E, i h x w> = Re sum conj(h)_j (-i W^T)_{jk} E_k with h x w = W h
    Wt = np.stack([(-skew(wk)).T for wk in w])
    blk = -1j * Wt * (0.5 * k3)[:, None, None]
    H[:, 7:10, 4:7] += blk
    H[:, 4:7, 7:10] += np.conj(np.swapaxes(blk, 1, 2))
    return H[0] if single else H


def dissipation_matrix(xi) -> np.ndarray:
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    r = np.linalg.norm(xi, axis=-1)
    s = 1 + r * r
    d = np.ones((xi.shape[0], 10))
    d[:, 4:7] = (1 / s)[:, None]
    d[:, 7:10] = (r * r / s**2)[:, None]
    return np.einsum("ki,ij->kij", d, np.eye(10)).astype(complex)


# --------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    xi: np.ndarray
    times: np.ndarray
    states: np.ndarray  # (K, 10)
    derivs: np.ndarray  # (K, 10), right-hand side at the nodes
    forcing: tuple | None = None  # (q (K,3,3), r (K,3)) at the nodes


def stable_dt(xi, em: EulerMaxwellParams) -> float:
    sysm = build_euler_maxwell(em)
    A = sysm.flux(np.asarray(xi, dtype=float))
    return 0.01 / (1 + np.linalg.norm(A, 2) + np.linalg.norm(sysm.L, 2))


def integrate_rk4(xi, z0, t_end: float, em: EulerMaxwellParams = EulerMaxwellParams(),
                  dt: float | None = None, forcing_fn=None) -> Trajectory:
    """Classical RK4 for dz/dt = linear_rhs(z) (+ forcing_fn(t))."""
    xi = np.asarray(xi, dtype=float)
    dt_max = stable_dt(xi, em)
    steps = max(1, int(np.ceil(t_end / (dt or dt_max))))
    h = t_end / steps
    f = lambda t, z: linear_rhs_array(xi, z, em, None if forcing_fn is None else forcing_fn(t))
    z = np.asarray(z0, dtype=complex).copy()
    ts = h * np.arange(steps + 1)
    Z = np.empty((steps + 1, 10), complex)
    D = np.empty_like(Z)
    for i, t in enumerate(ts[:-1]):
        Z[i] = z
        k1 = f(t, z)
        D[i] = k1
        k2 = f(t + h / 2, z + h / 2 * k1)
        k3 = f(t + h / 2, z + h / 2 * k2)
        k4 = f(t + h, z + h * k3)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    Z[-1] = z
    D[-1] = f(ts[-1], z)
    forcing = None
    if forcing_fn is not None:
        fs = [forcing_fn(t) for t in ts]
        forcing = (np.stack([q for q, _ in fs]), np.stack([r for _, r in fs]))
    return Trajectory(xi, ts, Z, D, forcing)


def energy_identity_residual(traj: Trajectory, a_inf: float = 1.0, n_inf: float = 1.0) -> np.ndarray:
    """|dE0/dt + 2 n_inf |v|^2| along the trajectory.

    dE0/dt is the derivative of the integrator's dense output at the nodes,
    i.e. 2 Re <A0 z, dz/dt>.
    """
    w = np.array([a_inf] + [n_inf] * 3 + [1.0] * 6)
    dE0 = 2 * np.real(np.sum(w * np.conj(traj.states) * traj.derivs, axis=-1))
    v = traj.states[:, 1:4]
    return np.abs(dE0 + 2 * n_inf * np.sum(np.abs(v) ** 2, -1))


# ---------------------------------------------------------- restrictions to X_xi

def constrained_bases(em: EulerMaxwellParams, xis: np.ndarray) -> np.ndarray:
    """Orthonormal bases of X_xi stacked to (K, 10, d); d is 8 away from xi = 0."""
    sysm = build_euler_maxwell(em)
    bases = [constraint_subspace(sysm, x).basis for x in xis]
    dims = {b.shape[1] for b in bases}
    if len(dims) != 1:
        raise ValueError("stack mixes xi = 0 with xi != 0; evaluate them separately")
    return np.stack(bases)


def _restrict(V, M):
    return np.conj(np.swapaxes(V, -1, -2)) @ M @ V


def _gen_eigvalsh(A, B):
    """Eigenvalues of the Hermitian pencil (A, B) with B > 0, batched."""
    Lc = np.linalg.cholesky(B)
    Li = np.linalg.inv(Lc)
    M = Li @ A @ np.conj(np.swapaxes(Li, -1, -2))
    return np.linalg.eigvalsh(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))


@dataclass
class FrequencyGrid:
    """Frequencies with cached symbols and X_xi bases for repeated checks."""

    xis: np.ndarray
    em: EulerMaxwellParams
    profile: EtaProfile = EtaProfile()
    phi: np.ndarray = field(init=False)
    V: np.ndarray = field(init=False)
    eta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.xis = np.atleast_2d(np.asarray(self.xis, dtype=float))
        if np.any(np.linalg.norm(self.xis, axis=1) == 0):
            raise ValueError("xi = 0 is handled separately; drop it from the grid")
        self.phi = symbol_batch(build_euler_maxwell(self.em), self.xis)
        self.V = constrained_bases(self.em, self.xis)
        self.eta = eta(np.linalg.norm(self.xis, axis=1), self.profile)

    @classmethod
    def default(cls, em: EulerMaxwellParams = EulerMaxwellParams(), count: int = 200, extra: int = 0,
                rmin: float = 1e-3, rmax: float = 1e3) -> "FrequencyGrid":
        radii = xi_grid(rmin, rmax, count)
        dirs = direction_set(3, extra)
        return cls((radii[:, None, None] * dirs[None]).reshape(-1, 3), em)

    def __len__(self):
        return self.xis.shape[0]

    def pencils(self, alpha1: float, alpha2: float):
        """Restricted (K, H, A0) where dE/dt = -z^H K z along the linear flow."""
        H = lyapunov_matrix(self.xis, alpha1, alpha2, self.em.a_inf, self.em.n_inf)
        Kf = np.conj(np.swapaxes(self.phi, 1, 2)) @ H + H @ self.phi
        A0 = a0_matrix(self.em.a_inf, self.em.n_inf)
        return _restrict(self.V, Kf), _restrict(self.V, H), _restrict(self.V, A0)


def _zero_frequency_ok(em: EulerMaxwellParams, alpha1: float, alpha2: float) -> tuple:
    """At xi = 0 the condition is K >= 0 on X_0; return (min eig of K, equivalence range)."""
    sysm = build_euler_maxwell(em)
    xi0 = np.zeros(3)
    V = constraint_subspace(sysm, xi0).basis
    phi = symbol_batch(sysm, xi0[None])[0]
    H = lyapunov_matrix(xi0, alpha1, alpha2, em.a_inf, em.n_inf)
    K = _restrict(V, phi.conj().T @ H + H @ phi)
    Hr = _restrict(V, H)
    A0r = _restrict(V, a0_matrix(em.a_inf, em.n_inf))
    eq = _gen_eigvalsh(Hr, A0r)
    return float(_gen_eigvalsh(K, Hr).min()) if eq.min() > 0 else -np.inf, (float(eq.min()), float(eq.max()))


@dataclass
class CandidateScore:
    alpha1: float
    alpha2: float
    c1_star: float  # largest feasible c1 (-inf when equivalence fails)
    equiv_min: float
    equiv_max: float
    worst_index: int


def score_candidate(grid: FrequencyGrid, alpha1: float, alpha2: float, equiv=(0.5, 2.0)) -> CandidateScore:
    K, H, A0 = grid.pencils(alpha1, alpha2)
    try:
        eq = _gen_eigvalsh(H, A0)
    except np.linalg.LinAlgError:
        return CandidateScore(alpha1, alpha2, -np.inf, -np.inf, np.inf, -1)
    emin, emax = float(eq.min()), float(eq.max())
    if emin <= 0:
        return CandidateScore(alpha1, alpha2, -np.inf, emin, emax, int(eq.min(axis=1).argmin()))
    lam = _gen_eigvalsh(K, H).min(axis=1)
    ratio = lam / grid.eta
    worst = int(ratio.argmin())
    c1 = float(ratio[worst])
    if not (equiv[0] <= emin and emax <= equiv[1]):
        c1 = -np.inf
    return CandidateScore(alpha1, alpha2, c1, emin, emax, worst)


class LyapunovSearchError(RuntimeError):
    def __init__(self, message: str, certificate: dict):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class SearchResult:
    params: LyapunovParams
    c1_star: float
    equivalence_a0: tuple
    equivalence_euclid: tuple
    validation: dict
    candidates: list

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "c1_star": self.c1_star,
            "equivalence": {"a0_weighted": list(self.equivalence_a0), "euclidean": list(self.equivalence_euclid)},
            "validation": self.validation,
        }


C1_SAFETY = 0.99


def search_params(em: EulerMaxwellParams = EulerMaxwellParams(), xis=None, seed: int = 0,
                  samples: int = 100, coarse=None, refine_steps: int = 2,
                  profile: EtaProfile = EtaProfile()) -> SearchResult:
    """Find (alpha1, alpha2, c1) certifying dE/dt + c1 eta E <= 0 on X_xi.

    For each candidate pair the largest admissible c1 is exact: it is the
    smallest generalized eigenvalue of the pencil (K, H) on X_xi divided by
    eta. The pair is then refined on successively finer log grids and the
    result is validated on random states and Green-matrix trajectories.
    """
    xis = FrequencyGrid.default(em).xis if xis is None else np.atleast_2d(np.asarray(xis, dtype=float))
    r = np.linalg.norm(xis, axis=1)
    has_zero = bool(np.any(r == 0))
    xis_nz = xis[r > 0]
    coarse = coarse if coarse is not None else [2.0**-k for k in range(7)]

    if xis_nz.shape[0] == 0:
        # only xi = 0: eta vanishes, so any pair with K >= 0 and the equivalence works
        for a1, a2 in itertools.product(sorted(coarse, reverse=True), repeat=2):
            kmin, eq = _zero_frequency_ok(em, a1, a2)
            if kmin >= -1e-12 and 0.5 <= eq[0] and eq[1] <= 2:
                lp = LyapunovParams(a1, a2, 1.0, em.a_inf, em.n_inf)
                return SearchResult(lp, np.inf, eq, eq, {"points": 1, "note": "eta(0)=0 leaves c1 free"}, [])
        raise LyapunovSearchError("no parameters pass at xi = 0", {"xi": [0, 0, 0]})

    grid = FrequencyGrid(xis_nz, em, profile)
    scores = [score_candidate(grid, a1, a2) for a1, a2 in itertools.product(coarse, repeat=2)]
    best = max(scores, key=lambda s: s.c1_star)
    step = 2.0
    for _ in range(refine_steps):
        step = step**0.5
        local = [
            score_candidate(grid, best.alpha1 * f1, best.alpha2 * f2)
            for f1 in (1 / step, 1.0, step)
            for f2 in (1 / step, 1.0, step)
            if best.alpha1 * f1 <= 1.0 and best.alpha2 * f2 <= 1.0
        ]
        scores.extend(local)
        best = max([best, *local], key=lambda s: s.c1_star)
    if not np.isfinite(best.c1_star) or best.c1_star <= 0:
        w = best.worst_index
        raise LyapunovSearchError(
            "no (alpha1, alpha2) with positive c1 and equivalent energy",
            {"alpha1": best.alpha1, "alpha2": best.alpha2, "xi": grid.xis[w].tolist() if w >= 0 else None,
             "c1_star": best.c1_star, "equivalence": [best.equiv_min, best.equiv_max]},
        )
    if has_zero:
        kmin, _ = _zero_frequency_ok(em, best.alpha1, best.alpha2)
        if kmin < -1e-12:
            raise LyapunovSearchError("dissipation fails at xi = 0", {"xi": [0, 0, 0], "min_eig": kmin})

    lp = LyapunovParams(best.alpha1, best.alpha2, C1_SAFETY * best.c1_star, em.a_inf, em.n_inf)
    validation = validate_params(lp, grid, seed=seed, samples=samples, em=em)
    if not validation["passed"]:
        raise LyapunovSearchError("validation of searched parameters failed", validation)
    K, H, A0 = grid.pencils(lp.alpha1, lp.alpha2)
    eu = _gen_eigvalsh(H, np.broadcast_to(np.eye(H.shape[-1]), H.shape))
    return SearchResult(lp, best.c1_star, (best.equiv_min, best.equiv_max),
                        (float(eu.min()), float(eu.max())), validation, scores)


def random_constrained(V: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit combinations of the basis columns: (K, samples, 10)."""
    d = V.shape[-1]
    c = rng.standard_normal((V.shape[0], samples, d)) + 1j * rng.standard_normal((V.shape[0], samples, d))
    c /= np.linalg.norm(c, axis=-1, keepdims=True)
    return np.einsum("kmd,ksd->ksm", V, c)


def lyapunov_time_derivative(xis, z, lp: LyapunovParams, em: EulerMaxwellParams):
    """dE/dt along the linear flow by polarization of the Lyapunov functional.

    For a real quadratic form E, E(z + w) - E(z - w) = 4 Re B(z, w); with
    w = dz/dt this is 2 dE/dt. It touches only the functional and linear_rhs.
    """
    dz = linear_rhs_array(xis, z, em)
    plus = lyapunov_array(xis, z + dz, lp.alpha1, lp.alpha2, lp.a_inf, lp.n_inf)
    minus = lyapunov_array(xis, z - dz, lp.alpha1, lp.alpha2, lp.a_inf, lp.n_inf)
    return (plus - minus) / 2


def validate_params(lp: LyapunovParams, grid: FrequencyGrid, seed: int = 0, samples: int = 100,
                    em: EulerMaxwellParams | None = None, trajectory_times: int = 50,
                    equiv=(0.5, 2.0), tol: float = 1e-9) -> dict:
    """Check equivalence and the dissipative inequality on basis vectors and random states,
    then check that e^{c1 eta t} E(t) is nonincreasing along Green-matrix trajectories."""
    em = em or grid.em
    rng = np.random.default_rng(seed)
    V = grid.V
    basis_states = np.swapaxes(V, 1, 2)  # (K, d, 10)
    states = np.concatenate([basis_states, random_constrained(V, samples, rng)], axis=1)
    X = np.broadcast_to(grid.xis[:, None, :], states.shape[:2] + (3,))
    E = lyapunov_array(X, states, lp.alpha1, lp.alpha2, lp.a_inf, lp.n_inf)
    E0 = energies_array(X, states, lp.a_inf, lp.n_inf)[0]
    ratio = E / E0
    dE = lyapunov_time_derivative(X, states, lp, em)
    excess = (dE + lp.c1 * grid.eta[:, None] * E) / E0  # must be <= 0
    worst = np.unravel_index(np.argmax(excess), excess.shape)

    # trajectories: two random states per xi, 50 times over a few decay times
    z0 = random_constrained(V, 2, rng)
    G = BatchedExp(grid.phi)
    t_end = np.clip(4.0 / (lp.c1 * grid.eta), 1.0, 1e7)
    taus = np.linspace(0, 1, trajectory_times)
    prev = None
    monotone_violation = 0.0
    for tau in taus:
        # per-xi time t = tau * t_end; propagate each xi with its own time
        zt = _propagate_scaled(G, grid.phi, z0, tau * t_end)
        Et = lyapunov_array(np.broadcast_to(grid.xis[:, None, :], zt.shape[:2] + (3,)), zt,
                            lp.alpha1, lp.alpha2, lp.a_inf, lp.n_inf)
        weighted = np.exp(lp.c1 * grid.eta * tau * t_end)[:, None] * Et
        if prev is not None:
            monotone_violation = max(monotone_violation, float(np.max((weighted - prev) / np.maximum(prev, 1e-300))))
        prev = weighted
    return {
        "points": int(len(grid)),
        "states_per_point": int(states.shape[1]),
        "equivalence_range": [float(ratio.min()), float(ratio.max())],
        "max_excess": float(excess.max()),
        "worst_point": {"xi": grid.xis[worst[0]].tolist(), "ratio": float(ratio[worst])},
        "trajectory_monotone_violation": monotone_violation,
        "passed": bool(
            equiv[0] <= ratio.min() and ratio.max() <= equiv[1]
            and excess.max() <= tol and monotone_violation <= 1e-8
        ),
    }


def _propagate_scaled(G: BatchedExp, phi: np.ndarray, z0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(-t_k Phi_k) z0_k with a separate time per frequency."""
    c = G.Vinv @ np.swapaxes(z0, 1, 2)
    out = G.V @ (np.exp(-times[:, None] * G.eigvals)[:, :, None] * c)
    for k in G.fallback:
        out[k] = pade_expm(-times[k] * phi[k]) @ z0[k].T
    return np.swapaxes(out, 1, 2)


def dissipation_comparison(grid: FrequencyGrid) -> float:
    """Smallest C with D[z] >= eta E0[z] / C on X_xi over the grid."""
    A0 = _restrict(grid.V, a0_matrix(grid.em.a_inf, grid.em.n_inf))
    Dm = _restrict(grid.V, dissipation_matrix(grid.xis))
    lam = _gen_eigvalsh(grid.eta[:, None, None] * A0, Dm).max(axis=1)
    return float(lam.max())


# ------------------------------------------------------------ pointwise bound

@dataclass
class PointwiseReport:
    radii: np.ndarray
    margins: np.ndarray  # fitted per-xi decay rate of the A0 operator norm
    c0: float
    C: float
    low_exponent: float
    high_exponent: float
    growth_points: list
    t0_norm_range: tuple

    def as_dict(self) -> dict:
        return {
            "fitted": {"c0": self.c0, "C": self.C},
            "margin_exponents": {"low": self.low_exponent, "high": self.high_exponent},
            "growth_points": self.growth_points,
            "t0_norm_range": list(self.t0_norm_range),
        }


def restricted_green_norms(grid: FrequencyGrid, taus: np.ndarray) -> np.ndarray:
    """A0-weighted operator norms of exp(-t Phi) on X_xi at t = tau / eta: (K, T)."""
    A0h = np.sqrt(np.diag(a0_matrix(grid.em.a_inf, grid.em.n_inf)).real)
    W = A0h[None, :, None] * grid.V
    _, R = np.linalg.qr(W)
    Rinv = np.linalg.inv(R)
    M = _restrict(grid.V, grid.phi)  # V^H Phi V, exact since X_xi is invariant
    G = BatchedExp(M)
    out = np.empty((len(grid), len(taus)))
    for i, tau in enumerate(taus):
        t = tau / grid.eta
        E = G.V @ (np.exp(-t[:, None] * G.eigvals)[:, :, None] * G.Vinv)
        for k in G.fallback:
            E[k] = pade_expm(-t[k] * M[k])
        out[:, i] = np.linalg.norm(R @ E @ Rinv, ord=2, axis=(1, 2))
    return out


def pointwise_check(grid: FrequencyGrid, taus=None, fit_taus=(2.0, 20.0),
                    low_band=(1e-3, 1e-1), high_band=(1e1, 1e3)) -> PointwiseReport:
    """Fit |exp(-t Phi)|_{X_xi} <= C e^{-c0 eta t} over the grid (t measured in units of 1/eta)."""
    taus = np.linspace(0, 20, 41) if taus is None else np.asarray(taus, dtype=float)
    norms = restricted_green_norms(grid, taus)
    growth = np.argwhere(norms > 1 + 1e-10)
    sel = (taus >= fit_taus[0]) & (taus <= fit_taus[1])
    slopes = np.array([np.polyfit(taus[sel], np.log(nr[sel]), 1)[0] for nr in norms])
    margins = -slopes * grid.eta  # back to a rate in t
    rel = margins / grid.eta
    c0 = 0.5 * float(rel.min())
    C = float(np.max(norms * np.exp(c0 * taus[None, :])))
    r = np.linalg.norm(grid.xis, axis=1)

    def band_slope(lo, hi):
        m = (r >= lo) & (r <= hi)
        return float(np.polyfit(np.log(r[m]), np.log(margins[m]), 1)[0])

    zero = taus == 0
    t0 = (float(norms[:, zero].min()), float(norms[:, zero].max())) if zero.any() else (np.nan, np.nan)
    return PointwiseReport(
        r, margins, c0, C, band_slope(*low_band), band_slope(*high_band),
        [{"xi": grid.xis[i].tolist(), "tau": float(taus[j]), "norm": float(norms[i, j])} for i, j in growth[:20]],
        t0,
    )


__all__ = [
    "FrequencyState", "LyapunovParams", "energies", "lyapunov", "dissipation", "linear_rhs",
    "integrate_rk4", "energy_identity_residual", "search_params", "pointwise_check",
    "FrequencyGrid",
]
