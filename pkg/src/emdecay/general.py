"""Constraint splitting and decay-property checks for user-supplied systems.

A system A0 w_t + sum A^j w_{x_j} + L w = 0 with constraints
sum Q^j w_{x_j} + R w = 0 is evolved frequency by frequency with its Green
matrix, and the measured norms are compared against the L^p-L^q-L^r bound of
:mod:`emdecay.kernel`. Whether that bound applies is decided from the
restricted spectral abscissa: it must behave like an (a, b) rate profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import grid as gridmod
from .grid import GridField, SpectrumInterpolator, ball_quadrature
from .kernel import (
    DecayPrediction,
    EtaProfile,
    FitResult,
    NormSpec,
    default_t_grid,
    fit_exponent,
    predict,
)
from .system import (
    RANK_RTOL,
    HyperbolicSystem,
    check_structure,
    direction_set,
    green_batch,
    loglog_slope,
    scan_abscissa,
    xi_grid,
)


@dataclass(frozen=True)
class ConstraintSplit:
    """Orthogonal projectors onto Image(R) and its complement in C^{m1}."""

    Pi1: np.ndarray
    Pi2: np.ndarray
    rank: int

    def identity_errors(self) -> dict:
        P1, P2 = self.Pi1, self.Pi2
        eye = np.eye(P1.shape[0])
        return {
            "idempotent": float(np.abs(P1 @ P1 - P1).max(initial=0.0)),
            "symmetric": float(np.abs(P1 - P1.T).max(initial=0.0)),
            "orthogonal": float(np.abs(P1 @ P2).max(initial=0.0)),
            "complete": float(np.abs(P1 + P2 - eye).max(initial=0.0)),
        }


def constraint_split(Q, R, rtol: float = RANK_RTOL) -> ConstraintSplit:
    """Pi1 from the leading left singular vectors of R (threshold rtol * s_max)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    m1 = R.shape[0]
    for q in Q:
        if np.atleast_2d(q).shape[0] != m1:
            raise ValueError(f"every Q^j needs {m1} rows to match R")
    U, s, _ = np.linalg.svd(R)
    smax = s.max() if s.size else 0.0
    rank = int((s > rtol * smax).sum()) if smax > 0 else 0
    B = U[:, :rank]
    Pi1 = B @ B.T
    Pi1 = 0.5 * (Pi1 + Pi1.T)
    return ConstraintSplit(Pi1, np.eye(m1) - Pi1, rank)


def split_system(sys: HyperbolicSystem) -> ConstraintSplit:
    if not sys.has_constraints:
        raise ValueError(f"system '{sys.name}' has no constraints")
    return constraint_split(sys.Q, sys.R)


def split_residuals(split: ConstraintSplit, sys: HyperbolicSystem, xi, w) -> tuple:
    """|Pi1 (i xi.Q + R) w| and |Pi2 (i xi.Q) w| for one frequency and state."""
    xi = np.asarray(xi, dtype=float)
    Qxi = 1j * np.tensordot(xi, np.stack(sys.Q), axes=(-1, 0))
    w = np.asarray(w)
    return (
        float(np.linalg.norm(split.Pi1 @ ((Qxi + sys.R) @ w))),
        float(np.linalg.norm(split.Pi2 @ (Qxi @ w))),
    )


# ------------------------------------------------------------ constraints on grids

def _constraint_stack(sys: HyperbolicSystem, xis: np.ndarray) -> np.ndarray:
    return 1j * np.tensordot(xis, np.stack(sys.Q), axes=(-1, 0)) + sys.R


def _grid_xis(field: GridField) -> np.ndarray:
    return np.stack([k.ravel() for k in gridmod.wavevectors(field)], axis=1)


def _nyquist_mask(field: GridField) -> np.ndarray:
    mask = np.zeros(field.shape, dtype=bool)
    for ax, s in enumerate(field.shape):
        idx = [slice(None)] * field.n
        idx[ax] = s // 2
        mask[tuple(idx)] = True
    return mask.ravel()


def _project_stack(sys: HyperbolicSystem, xis: np.ndarray, flat: np.ndarray) -> np.ndarray:
    """Project each w_k onto ker C(xi_k) for (K, m) samples."""
    _, s, vh = np.linalg.svd(_constraint_stack(sys, xis))
    smax = s.max(axis=1, keepdims=True)
    keep = (s > RANK_RTOL * np.where(smax > 0, smax, 1.0)) & (smax > 0)
    rows = vh[:, : s.shape[1], :] * keep[:, :, None]
    coef = np.einsum("kim,km->ki", rows, flat)
    return flat - np.einsum("kim,ki->km", rows.conj(), coef)


def project_constraints(sys: HyperbolicSystem, w: GridField) -> GridField:
    """Orthogonal projection of every Fourier mode onto the constraint kernel.

    Nyquist modes are dropped: they have no conjugate partner, so a projected
    real field could not keep them consistent.
    """
    if not sys.has_constraints:
        return w
    _check_field(sys, w)
    spec = w.to_spectral()
    flat = _project_stack(sys, _grid_xis(spec), spec.values.reshape(sys.m, -1).T)
    flat[_nyquist_mask(spec)] = 0.0
    phys = spec.with_values(flat.T.reshape(spec.values.shape)).to_physical()
    return phys.with_values(phys.values.real.astype(complex))


def constraint_residual(sys: HyperbolicSystem, w: GridField) -> float:
    """sqrt(sum |C(xi) w_hat|^2 / sum |w_hat|^2) over the grid frequencies."""
    if not sys.has_constraints:
        return 0.0
    spec = w.to_spectral()
    flat = spec.values.reshape(sys.m, -1).T
    res = np.einsum("kim,km->ki", _constraint_stack(sys, _grid_xis(spec)), flat)
    den = np.sqrt(np.sum(np.abs(flat) ** 2))
    return float(np.sqrt(np.sum(np.abs(res) ** 2)) / den) if den > 0 else 0.0


def _check_field(sys: HyperbolicSystem, w: GridField) -> None:
    if w.components != sys.m or w.n != sys.n:
        raise ValueError(
            f"field has {w.components} components in {w.n}-d, system needs {sys.m} in {sys.n}-d"
        )


# --------------------------------------------------------------- applicability

@dataclass(frozen=True)
class Applicability:
    applicable: bool
    low_slope: float | None
    high_slope: float | None
    profile: EtaProfile | None
    min_abscissa: float
    reason: str = ""


ABSCISSA_FLOOR = 1e-12
SLOPE_TOL = 0.15


def classify_abscissa(sys: HyperbolicSystem, radii=None, directions=None) -> Applicability:
    """Match min over directions of the restricted abscissa to |xi|^{2a}/(1+|xi|^2)^b."""
    radii = xi_grid(1e-2, 1e2, 41) if radii is None else np.asarray(radii, dtype=float)
    directions = direction_set(sys.n) if directions is None else directions
    mu = scan_abscissa(sys, radii, directions).mu.min(axis=1)
    floor = float(mu.min())
    if not floor > ABSCISSA_FLOOR:
        return Applicability(False, None, None, None, floor, "restricted abscissa is not positive")
    lo = radii <= 10 * radii[0]
    hi = radii >= radii[-1] / 10
    s_lo = loglog_slope(radii[lo], mu[lo])
    s_hi = loglog_slope(radii[hi], mu[hi])
    a = round(s_lo / 2)
    b = a + round(-s_hi / 2)
    if a < 1 or b <= a:
        return Applicability(False, s_lo, s_hi, None, floor,
                             f"slopes ({s_lo:.3f}, {s_hi:.3f}) do not fit a regularity-loss profile")
    if abs(s_lo - 2 * a) > SLOPE_TOL or abs(s_hi - 2 * (a - b)) > SLOPE_TOL:
        return Applicability(False, s_lo, s_hi, None, floor,
                             f"slopes ({s_lo:.3f}, {s_hi:.3f}) are not near even integers")
    return Applicability(True, s_lo, s_hi, EtaProfile(a, b), floor)


def two_two_one_prediction(n: int, k: int, l: int, j: int = 0) -> DecayPrediction:
    """Exponents of the (p, q, r) = (2, 1, 2) estimate written out for the (1, 2) profile:
    (1+t)^{-n/4 - (k-j)/2} for the L^1 data and (1+t)^{-l/2} for the derivative data."""
    return DecayPrediction(-Fraction(n, 4) - Fraction(k - j, 2), -Fraction(l, 2))


# ---------------------------------------------------------------- decay check

@dataclass
class DecayPropertyReport:
    spec: NormSpec
    applicability: Applicability
    prediction: DecayPrediction | None
    t: np.ndarray
    lhs: np.ndarray
    rhs_low: np.ndarray | None
    rhs_high: np.ndarray | None
    fit: FitResult | None
    constraint_initial: float
    constraint_max: float
    window: tuple
    notes: list = field(default_factory=list)

    @property
    def ratio(self) -> np.ndarray | None:
        if self.rhs_low is None:
            return None
        return self.lhs / (self.rhs_low + self.rhs_high)

    @property
    def c_star(self) -> float | None:
        r = self.ratio
        return None if r is None else float(r.max())

    def c_star_growth(self) -> float | None:
        r = self.ratio
        if r is None:
            return None
        sel = (self.t >= self.window[0]) & (self.t <= self.window[1])
        run = np.maximum.accumulate(r[sel])
        return float(run[-1] / run[0])

    @property
    def constraint_drift(self) -> float:
        return abs(self.constraint_max - self.constraint_initial)

    def as_dict(self) -> dict:
        ap = self.applicability
        pred = self.prediction
        return {
            "spec": self.spec.as_dict(),
            "applicable": ap.applicable,
            "abscissa_low_slope": ap.low_slope,
            "abscissa_high_slope": ap.high_slope,
            "profile": None if ap.profile is None else {"a": ap.profile.a, "b": ap.profile.b},
            "predicted": None if pred is None else {"low": str(pred.low_exp), "high": str(pred.high_exp)},
            "fit_slope": None if self.fit is None else self.fit.slope,
            "fit_r2": None if self.fit is None else self.fit.r_squared,
            "C_star": self.c_star,
            "C_star_growth": self.c_star_growth(),
            "constraint_initial": self.constraint_initial,
            "constraint_max": self.constraint_max,
            "window": list(self.window),
            "notes": list(self.notes),
        }


CONSTRAINT_TOL = 1e-10
PERSISTENCE_SAMPLES = 4096


def _require_structure(sys: HyperbolicSystem) -> None:
    rep = check_structure(sys)
    bad = [name for name, ok in (("A0 spd", rep.A0_spd), ("A^j symmetric", rep.Aj_symmetric),
                                 ("L nonnegative", rep.L_nonneg)) if not ok]
    if bad:
        raise ValueError(f"system '{sys.name}' fails: {', '.join(bad)}")


def _quadrature_l2(sys: HyperbolicSystem, w0: GridField, k: int, t: np.ndarray) -> np.ndarray:
    """||nabla^k w(t)||_{L^2} by Parseval on a ball rule over the sampled band."""
    interps = [SpectrumInterpolator(GridField(w0.values[c], w0.box), modulus=False)
               for c in range(sys.m)]
    kmax = float(interps[0].kmax.min())
    quad = ball_quadrature(sys.n, kmax)
    what = np.stack([f(quad.points) for f in interps], axis=1)
    if sys.has_constraints:
        # the interpolant smears the direction dependence of w_hat near 0;
        # projecting onto X_xi at each node removes the off-constraint error
        what = _project_stack(sys, quad.points, what)
    G = green_batch(sys, quad.points)
    scale = (2 * math.pi) ** (-sys.n / 2)
    weight = quad.radii ** k
    out = []
    for tt in t:
        wt = G.apply(tt, what)
        out.append(scale * quad.norm(weight * np.linalg.norm(wt, axis=1), 2))
    return np.array(out)


def _grid_norms(sys: HyperbolicSystem, w0: GridField, k: int, p: float, t: np.ndarray) -> np.ndarray:
    spec = w0.to_spectral()
    G = green_batch(sys, _grid_xis(spec))
    flat = spec.values.reshape(sys.m, -1).T
    out = []
    for tt in t:
        wt = G.apply(tt, flat).T.reshape(spec.values.shape)
        out.append(gridmod.derivative_norm(spec.with_values(wt), k, p))
    return np.array(out)


def _persistence(sys: HyperbolicSystem, w0: GridField, t: np.ndarray, seed: int) -> tuple:
    """Constraint residual at t = 0 and its maximum along the evolution, on a
    seeded subsample of grid frequencies."""
    spec = w0.to_spectral()
    xis = _grid_xis(spec)
    flat = spec.values.reshape(sys.m, -1).T
    if len(xis) > PERSISTENCE_SAMPLES:
        idx = np.random.default_rng(seed).choice(len(xis), PERSISTENCE_SAMPLES, replace=False)
        xis, flat = xis[idx], flat[idx]
    C = _constraint_stack(sys, xis)
    G = green_batch(sys, xis)
    den = max(np.sqrt(np.sum(np.abs(flat) ** 2)), 1e-300)

    def rel(v):
        return float(np.sqrt(np.sum(np.abs(np.einsum("kim,km->ki", C, v)) ** 2)) / den)

    first = rel(flat)
    worst = max([first] + [rel(G.apply(tt, flat)) for tt in t])
    return first, worst


def verify_decay_property(sys: HyperbolicSystem, w0: GridField, spec: NormSpec, t_grid=None,
                          window=(10.0, 1e3), seed: int = 0) -> DecayPropertyReport:
    """Evolve w0 with the Green matrix and compare ||nabla^k w(t)||_{L^p} with the
    L^p-L^q-L^r bound.

    The bound is used only when the restricted abscissa looks like an (a, b)
    profile; otherwise the report marks the decay property as not applicable
    and still records the measured norms. The energy inequality itself is not
    built for general systems: the spectral abscissa stands in for it.
    """
    _require_structure(sys)
    _check_field(sys, w0)
    if spec.n != sys.n:
        raise ValueError(f"spec n={spec.n} does not match system n={sys.n}")
    t = default_t_grid(*window) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")

    notes = ["dissipative inequality certified through the restricted spectral abscissa"]
    c0, cmax = 0.0, 0.0
    if sys.has_constraints:
        c0 = constraint_residual(sys, w0)
        if c0 > CONSTRAINT_TOL:
            raise ValueError(f"initial data violates the constraints (residual {c0:.3e})")
        c0, cmax = _persistence(sys, w0, t, seed)

    ap = classify_abscissa(sys)
    if not ap.applicable:
        notes.append(f"decay property not applicable: {ap.reason}")

    if spec.p == 2:
        lhs = _quadrature_l2(sys, w0, spec.k, t)
    else:
        lhs = _grid_norms(sys, w0, spec.k, spec.p, t)
        notes.append("left side evaluated on the grid")

    pred = rhs_low = rhs_high = None
    if ap.applicable:
        pred = predict(spec, ap.profile)
        norm_j = gridmod.derivative_norm(w0, spec.j, spec.q)
        norm_kl = gridmod.derivative_norm(w0, spec.k + spec.l, spec.r)
        rhs_low = (1 + t) ** float(pred.low_exp) * norm_j
        rhs_high = (1 + t) ** float(pred.high_exp) * norm_kl

    fit = None
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() >= 8 and np.all(lhs[sel] > 0):
        fit = fit_exponent(t, lhs, window)
    return DecayPropertyReport(spec, ap, pred, t, lhs, rhs_low, rhs_high, fit, c0, cmax,
                               tuple(window), notes)
