"""Constant-coefficient dissipative symmetric hyperbolic systems.

A system is A0 z_t + sum_j A^j z_{x_j} + L z = 0, optionally with a linear
constraint sum_j Q^j z_{x_j} + R z = 0. On the Fourier side this becomes
z_t + Phi(xi) z = 0 with Phi(xi) = A0^{-1}(i |xi| A(omega) + L).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .expm import BatchedExp, expm


def skew(v: Sequence[float]) -> np.ndarray:
    """Matrix of the cross product: skew(v) @ w == np.cross(v, w)."""
    v = np.asarray(v)
    return np.array(
        [[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=v.dtype
    )


@dataclass(frozen=True)
class HyperbolicSystem:
    """Coefficient matrices of A0 z_t + sum A^j z_{x_j} + L z = 0.

    Only shapes are validated here; the structural properties (A0 spd, A^j
    symmetric, L nonnegative) are reported by :func:`check_structure` so that
    malformed systems can still be inspected.
    """

    A0: np.ndarray
    A: tuple
    L: np.ndarray
    Q: Optional[tuple] = None
    R: Optional[np.ndarray] = None
    name: str = "custom"

    def __post_init__(self):
        A0 = np.array(self.A0, dtype=float)
        A = tuple(np.array(a, dtype=float) for a in self.A)
        L = np.array(self.L, dtype=float)
        m = A0.shape[0]
        if A0.shape != (m, m) or L.shape != (m, m):
            raise ValueError("A0 and L must be square and of equal size")
        if len(A) == 0 or any(a.shape != (m, m) for a in A):
            raise ValueError(f"need n >= 1 flux matrices of shape ({m}, {m})")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "L", L)
        if (self.Q is None) != (self.R is None):
            raise ValueError("constraints need both Q and R")
        if self.R is not None:
            R = np.atleast_2d(np.array(self.R, dtype=float))
            Q = tuple(np.atleast_2d(np.array(q, dtype=float)) for q in self.Q)
            m1 = R.shape[0]
            if R.shape[1] != m or len(Q) != len(A) or any(q.shape != R.shape for q in Q):
                raise ValueError("constraint matrices have inconsistent shapes")
            if m1 >= m:
                raise ValueError(f"constraint count m1={m1} must be below m={m}")
            object.__setattr__(self, "R", R)
            object.__setattr__(self, "Q", Q)
        for arr in (self.A0, self.L, *self.A):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.A0.shape[0]

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def has_constraints(self) -> bool:
        return self.R is not None

    def flux(self, xi: np.ndarray) -> np.ndarray:
        """sum_j A^j xi_j for one xi (n,) or a stack (..., n)."""
        return np.tensordot(np.asarray(xi, dtype=float), np.stack(self.A), axes=(-1, 0))


@dataclass(frozen=True)
class EulerMaxwellParams:
    """Equilibrium (n_inf, 0, 0, B_inf) and pressure law p(n) = K n^gamma."""

    n_inf: float = 1.0
    B_inf: tuple = (0.0, 0.0, 0.0)
    pressure_gamma: float = 2.0
    pressure_K: float = 0.5

    def __post_init__(self):
        if not self.n_inf > 0:
            raise ValueError(f"n_inf must be positive, got {self.n_inf}")
        if not self.pressure_K > 0:
            raise ValueError(f"pressure_K must be positive, got {self.pressure_K}")
        if not self.pressure_gamma > 0:
            raise ValueError(f"pressure_gamma must be positive, got {self.pressure_gamma}")
        B = tuple(float(b) for b in self.B_inf)
        if len(B) != 3:
            raise ValueError("B_inf must be a 3-vector")
        object.__setattr__(self, "B_inf", B)

    def pressure(self, n):
        return self.pressure_K * np.asarray(n, dtype=float) ** self.pressure_gamma

    def dpressure(self, n):
        return self.pressure_K * self.pressure_gamma * np.asarray(n, dtype=float) ** (self.pressure_gamma - 1)

    @property
    def a_inf(self) -> float:
        return float(self.dpressure(self.n_inf)) / self.n_inf

    @classmethod
    def from_dict(cls, d: dict) -> "EulerMaxwellParams":
        known = {"n_inf", "B_inf", "pressure_gamma", "pressure_K"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown Euler-Maxwell parameters: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_inf": self.n_inf,
            "B_inf": list(self.B_inf),
            "pressure_gamma": self.pressure_gamma,
            "pressure_K": self.pressure_K,
        }


# component slices of the Euler-Maxwell state (rho, v, E, h)
RHO, VEL, EFIELD, HFIELD = slice(0, 1), slice(1, 4), slice(4, 7), slice(7, 10)


def build_euler_maxwell(params: EulerMaxwellParams = EulerMaxwellParams()) -> HyperbolicSystem:
    """Linearization of the Euler-Maxwell system about (n_inf, 0, 0, B_inf)."""
    n, a = params.n_inf, params.a_inf
    dp = float(params.dpressure(n))
    I3 = np.eye(3)
    A0 = np.diag([a] + [n] * 3 + [1.0] * 6)

    L = np.zeros((10, 10))
    L[VEL, VEL] = n * (I3 - skew(params.B_inf))
    L[VEL, EFIELD] = n * I3
    L[EFIELD, VEL] = -n * I3

    A = []
    for j in range(3):
        e = I3[j]
        Aj = np.zeros((10, 10))
        Aj[0, 1 + j] = dp
        Aj[1 + j, 0] = dp
        Aj[EFIELD, HFIELD] = -skew(e)
        Aj[HFIELD, EFIELD] = skew(e)
        A.append(Aj)

    # div E + rho = 0 and div h = 0
    R = np.zeros((2, 10))
    R[0, 0] = 1.0
    Q = []
    for j in range(3):
        Qj = np.zeros((2, 10))
        Qj[0, 4 + j] = 1.0
        Qj[1, 7 + j] = 1.0
        Q.append(Qj)
    return HyperbolicSystem(A0, tuple(A), L, tuple(Q), R, name="euler_maxwell")


@dataclass(frozen=True)
class SymbolEvaluation:
    xi: np.ndarray
    phi_hat: np.ndarray
    omega: Optional[np.ndarray]  # None at xi = 0


def _xi(sys: HyperbolicSystem, xi) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape[-1] != sys.n:
        raise ValueError(f"xi must have {sys.n} components, got shape {xi.shape}")
    return xi


def symbol(sys: HyperbolicSystem, xi) -> SymbolEvaluation:
    xi = _xi(sys, xi)
    r = np.linalg.norm(xi)
    omega = xi / r if r > 0 else None
    phi = np.linalg.solve(sys.A0, 1j * sys.flux(xi) + sys.L)
    return SymbolEvaluation(xi, phi, omega)


def symbol_batch(sys: HyperbolicSystem, xis: np.ndarray) -> np.ndarray:
    """Phi(xi) for a stack of frequencies (..., n) -> (..., m, m)."""
    xis = _xi(sys, xis)
    A0inv = np.linalg.inv(sys.A0)
    return A0inv @ (1j * sys.flux(xis) + sys.L)


def green_matrix(sys: HyperbolicSystem, xi, t: float) -> np.ndarray:
    """exp(-t Phi(xi))."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return expm(-t * symbol(sys, xi).phi_hat)


def green_batch(sys: HyperbolicSystem, xis: np.ndarray) -> BatchedExp:
    """Reusable propagator t -> exp(-t Phi(xi_k)) over a flat stack of xi."""
    xis = _xi(sys, xis).reshape(-1, sys.n)
    return BatchedExp(symbol_batch(sys, xis))


@dataclass(frozen=True)
class ConstraintSubspace:
    xi: np.ndarray
    C: np.ndarray
    basis: np.ndarray
    projector: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


RANK_RTOL = 1e-10


def constraint_matrix(sys: HyperbolicSystem, xi) -> np.ndarray:
    if not sys.has_constraints:
        raise ValueError(f"system '{sys.name}' has no constraints")
    xi = _xi(sys, xi)
    return 1j * np.tensordot(xi, np.stack(sys.Q), axes=(-1, 0)) + sys.R


def null_space(C: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of ker C from an SVD."""
    _, s, vh = np.linalg.svd(C)
    smax = s.max() if s.size else 0.0
    rank = int((s > rtol * smax).sum()) if smax > 0 else 0
    return vh[rank:].conj().T


def constraint_subspace(sys: HyperbolicSystem, xi) -> ConstraintSubspace:
    C = constraint_matrix(sys, xi)
    V = null_space(C)
    return ConstraintSubspace(_xi(sys, xi), C, V, V @ V.conj().T)


def subspace_basis(sys: HyperbolicSystem, xi) -> np.ndarray:
    """Basis of X_xi, or the identity when the system is unconstrained."""
    if sys.has_constraints:
        return constraint_subspace(sys, xi).basis
    return np.eye(sys.m, dtype=complex)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    abscissa: float  # min Re(lambda), the decay margin mu(xi)
    invariance_residual: float


INVARIANCE_TOL = 1e-9


def restricted_spectrum(
    sys: HyperbolicSystem, xi, restrict: bool = True, tol: float = INVARIANCE_TOL
) -> Spectrum:
    """Eigenvalues of Phi(xi) restricted to X_xi when constraints are present.

    A warning is issued when X_xi is not numerically Phi-invariant, which
    points at a malformed constraint pair.
    """
    phi = symbol(sys, xi).phi_hat
    resid = 0.0
    if restrict and sys.has_constraints:
        V = constraint_subspace(sys, xi).basis
        PV = phi @ V
        M = V.conj().T @ PV
        resid = float(np.linalg.norm(PV - V @ M) / max(1.0, np.linalg.norm(phi)))
        if resid > tol:
            warnings.warn(
                f"X_xi is not invariant under the symbol at xi={np.asarray(xi).tolist()} "
                f"(residual {resid:.3e})",
                RuntimeWarning,
                stacklevel=2,
            )
    else:
        M = phi
    ev = sort_eigenvalues(np.linalg.eigvals(M))
    return Spectrum(ev, float(ev.real.min()), resid)


def sort_eigenvalues(ev: np.ndarray, quantum: float = 1e-10) -> np.ndarray:
    """Lexicographic (Re, Im) order after quantization, for multiset comparisons."""
    ev = np.asarray(ev)
    key_re = np.round(ev.real / quantum)
    key_im = np.round(ev.imag / quantum)
    return ev[np.lexsort((key_im, key_re))]


@dataclass(frozen=True)
class StructureReport:
    A0_spd: bool
    Aj_symmetric: bool
    L_nonneg: bool
    L_kernel_nontrivial: bool
    L_symmetric: bool

    def as_dict(self) -> dict:
        return {k: bool(v) for k, v in self.__dict__.items()}


def check_structure(sys: HyperbolicSystem, tol: float = 1e-12) -> StructureReport:
    A0 = sys.A0
    scale = max(1.0, np.abs(sys.L).max())
    A0_sym = np.allclose(A0, A0.T, atol=tol)
    A0_spd = A0_sym and np.linalg.eigvalsh((A0 + A0.T) / 2).min() > 0
    Aj_sym = all(np.abs(a - a.T).max() <= tol for a in sys.A)
    L1 = (sys.L + sys.L.T) / 2
    L_nonneg = np.linalg.eigvalsh(L1).min() >= -tol * scale
    s = np.linalg.svd(sys.L, compute_uv=False)
    kernel = s.min() <= tol * scale
    L_sym = np.abs(sys.L - sys.L.T).max() <= tol
    return StructureReport(bool(A0_spd), bool(Aj_sym), bool(L_nonneg), bool(kernel), bool(L_sym))


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic, nearly uniform points on S^2."""
    if count <= 0:
        return np.zeros((0, 3))
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = np.pi * (1 + 5**0.5) * k
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def direction_set(n: int = 3, extra: int = 0) -> np.ndarray:
    """Unit directions: the 2n axis directions, the 2^n sign diagonals, and
    ``extra`` quasi-random sphere points (n = 3 only)."""
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    signs = np.array(np.meshgrid(*[[1.0, -1.0]] * n, indexing="ij")).reshape(n, -1).T
    diags = signs / np.sqrt(n)
    dirs = [axes] if n == 1 else [axes, diags]
    if extra:
        if n != 3:
            raise ValueError("extra sphere directions are only defined for n = 3")
        dirs.append(fibonacci_sphere(extra))
    return np.concatenate(dirs)


def xi_grid(rmin: float = 1e-3, rmax: float = 1e3, count: int = 200) -> np.ndarray:
    return np.logspace(np.log10(rmin), np.log10(rmax), count)


@dataclass(frozen=True)
class AbscissaScan:
    radii: np.ndarray
    directions: np.ndarray
    mu: np.ndarray  # (len(radii), len(directions))
    residual: float  # worst invariance residual


def scan_abscissa(sys: HyperbolicSystem, radii, directions) -> AbscissaScan:
    radii = np.asarray(radii, dtype=float)
    directions = np.asarray(directions, dtype=float)
    mu = np.empty((radii.size, len(directions)))
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, r in enumerate(radii):
            for j, d in enumerate(directions):
                sp = restricted_spectrum(sys, r * d)
                mu[i, j] = sp.abscissa
                worst = max(worst, sp.invariance_residual)
    if worst > INVARIANCE_TOL:
        warnings.warn(f"X_xi invariance residual up to {worst:.3e}", RuntimeWarning, stacklevel=2)
    return AbscissaScan(radii, directions, mu, worst)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log slope needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def default_rate(r):
    """|xi|^2 / (1 + |xi|^2)^2, the Euler-Maxwell dissipative rate."""
    r2 = np.asarray(r, dtype=float) ** 2
    return r2 / (1 + r2) ** 2


@dataclass(frozen=True)
class MarginFit:
    c0: float  # min over the scan of mu / eta
    low_slope: float
    high_slope: float
    worst_radius: float
    worst_direction: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fit_margin(scan: AbscissaScan, rate=default_rate, low_band=(1e-2, 1e-1),
               high_band=(1e1, 1e2)) -> MarginFit:
    """Fit mu(xi) >= c0 eta(xi) and the power laws of min_omega mu at both ends.

    A band where the margin is not positive gets a nan slope; c0 <= 0 then
    reports the failure.
    """
    r = scan.radii
    ratio = scan.mu / rate(r)[:, None]
    i, j = np.unravel_index(np.argmin(ratio), ratio.shape)
    mu = scan.mu.min(axis=1)
    lo = (r >= low_band[0]) & (r <= low_band[1])
    hi = (r >= high_band[0]) & (r <= high_band[1])

    def slope(sel):
        return loglog_slope(r[sel], mu[sel]) if sel.sum() >= 2 and np.all(mu[sel] > 0) else math.nan

    return MarginFit(float(ratio[i, j]), slope(lo), slope(hi), float(r[i]), int(j))


# ---------------------------------------------------------------- ingestion

def system_from_dict(doc: dict) -> HyperbolicSystem:
    """Build from {"builtin": "euler_maxwell", "params": {...}} or explicit matrices."""
    if "builtin" in doc:
        if doc["builtin"] != "euler_maxwell":
            raise ValueError(f"unknown builtin system '{doc['builtin']}'")
        return build_euler_maxwell(EulerMaxwellParams.from_dict(doc.get("params", {})))
    required = ("m", "n", "A0", "A", "L")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValueError(f"system document is missing {missing}")
    Q, R = doc.get("Q"), doc.get("R")
    sys = HyperbolicSystem(
        np.array(doc["A0"]),
        tuple(np.array(a) for a in doc["A"]),
        np.array(doc["L"]),
        None if Q is None else tuple(np.array(q) for q in Q),
        None if R is None else np.array(R),
        name=doc.get("name", "custom"),
    )
    if sys.m != doc["m"] or sys.n != doc["n"]:
        raise ValueError(f"declared (m, n)=({doc['m']}, {doc['n']}) but matrices give ({sys.m}, {sys.n})")
    return sys


def load_system(source) -> HyperbolicSystem:
    """Accepts a dict, a JSON string, or a path to a JSON file."""
    if isinstance(source, dict):
        return system_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        with open(source) as fh:
            return system_from_dict(json.load(fh))
    return system_from_dict(json.loads(source))
