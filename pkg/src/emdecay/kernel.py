"""Dissipative-rate profiles, predicted decay exponents, and L^p-L^q-L^r checks.

A rate eta(xi) = |xi|^{2a} / (1 + |xi|^2)^b behaves like |xi|^{sigma1} near 0
and |xi|^{-sigma2} near infinity (sigma1 = 2a, sigma2 = 2(b - a)). For the
multiplier |xi|^k e^{-eta t} the L^p norm splits into a low-frequency part
decaying like (1+t)^{-gamma_{sigma1}(q,p) - (k-j)/sigma1} and a high-frequency
part decaying like (1+t)^{-l/sigma2 + gamma_{sigma2}(r,p)}, where
gamma_sigma(q,p) = (n/sigma)(1/q - 1/p).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from . import grid as gridmod
from .grid import GridField, SpectrumInterpolator, ball_quadrature, sphere_area


def _frac(x) -> Fraction:
    return Fraction(x).limit_denominator(10**6) if not isinstance(x, Fraction) else x


def inv(p) -> Fraction:
    """1/p as an exact rational, with 1/inf = 0."""
    if isinstance(p, float) and math.isinf(p):
        return Fraction(0)
    return 1 / _frac(p)


@dataclass(frozen=True)
class EtaProfile:
    a: int = 1
    b: int = 2

    def __post_init__(self):
        if int(self.a) != self.a or int(self.b) != self.b or self.a < 1 or self.b < 1:
            raise ValueError(f"profile exponents must be positive integers, got ({self.a}, {self.b})")

    @property
    def sigma1(self) -> int:
        return 2 * self.a

    @property
    def sigma2(self) -> int | None:
        """High-frequency exponent; None when eta does not vanish at infinity."""
        return 2 * (self.b - self.a) if self.b > self.a else None

    def __call__(self, r):
        return eta(r, self)


def eta(xi_norm, profile: EtaProfile = EtaProfile()):
    r = np.asarray(xi_norm, dtype=float)
    if np.any(r < 0):
        raise ValueError("|xi| must be nonnegative")
    r2 = r * r
    return r2**profile.a / (1 + r2) ** profile.b


def gamma(sigma, q, p, n: int) -> Fraction:
    """(n/sigma)(1/q - 1/p) as an exact rational."""
    if not _frac(sigma) > 0:
        raise ValueError("sigma must be positive")
    return Fraction(n) / _frac(sigma) * (inv(q) - inv(p))


def _is_inf(p) -> bool:
    return isinstance(p, float) and math.isinf(p)


@dataclass(frozen=True)
class NormSpec:
    p: float
    q: float
    r: float
    k: int
    j: int
    l: int
    n: int

    def __post_init__(self):
        for name in ("p", "q", "r"):
            v = getattr(self, name)
            if not _is_inf(v):
                object.__setattr__(self, name, int(v) if float(v).is_integer() else v)
        if not (1 <= self.q <= 2 and 1 <= self.r <= 2 and 2 <= self.p):
            raise ValueError(f"need 1 <= q, r <= 2 <= p, got p={self.p}, q={self.q}, r={self.r}")
        if not 0 <= self.j <= self.k:
            raise ValueError(f"need 0 <= j <= k, got j={self.j}, k={self.k}")
        if self.l < 0 or self.n < 1:
            raise ValueError("need l >= 0 and n >= 1")

    @property
    def admissible(self) -> bool:
        """l > n(1/r - 1/p), relaxed to l >= 0 when p = r = 2."""
        if self.p == 2 and self.r == 2:
            return self.l >= 0
        return Fraction(self.l) > self.n * (inv(self.r) - inv(self.p))

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["p"] = "inf" if _is_inf(self.p) else self.p
        return d


@dataclass(frozen=True)
class DecayPrediction:
    low_exp: Fraction
    high_exp: Fraction


def predict(spec: NormSpec, profile: EtaProfile = EtaProfile()) -> DecayPrediction:
    if not spec.admissible:
        raise ValueError(
            f"l={spec.l} must exceed n(1/r - 1/p) = {spec.n * (inv(spec.r) - inv(spec.p))}"
        )
    s1, s2 = profile.sigma1, profile.sigma2
    if s2 is None:
        raise ValueError("profile has no high-frequency decay (b <= a)")
    low = -gamma(s1, spec.q, spec.p, spec.n) - Fraction(spec.k - spec.j, s1)
    high = -Fraction(spec.l, s2) + gamma(s2, spec.r, spec.p, spec.n)
    return DecayPrediction(low, high)


def kernel_apply(phi: GridField, k: int, t: float, profile: EtaProfile = EtaProfile(),
                 modulus: bool = True) -> GridField:
    """Inverse transform of |xi|^k e^{-eta t} |phi_hat|.

    With ``modulus=False`` the phase of phi_hat is kept; that variant is an
    extra and carries no decay guarantee of its own.
    """
    if k < 0 or t < 0:
        raise ValueError("k and t must be nonnegative")
    spec = phi.to_spectral()
    r = gridmod.xi_norm(spec)
    mult = r**k * np.exp(-eta(r, profile) * t)
    base = np.abs(spec.values) if modulus else spec.values
    return spec.with_values(mult * base).to_physical()


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    count: int

    @property
    def reliable(self) -> bool:
        return self.r_squared >= R2_MIN


R2_MIN = 0.995


def fit_exponent(t, values, window=None) -> FitResult:
    """Least-squares slope of log(value) against log(1 + t) inside ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in the fit window, got {t.size}")
    if np.any(~(v > 0)):
        raise ValueError("fit needs strictly positive values")
    x, y = np.log1p(t), np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1 - np.sum(resid**2) / ss_tot)
    return FitResult(float(slope), float(icpt), float(r2), int(t.size))


def default_t_grid(t0: float = 10.0, t1: float = 1e3, count: int = 24) -> np.ndarray:
    return np.geomspace(t0, t1, count)


def gaussian(n: int, N: int, L: float, variance: float = 9.0) -> GridField:
    """exp(-|x|^2 / (2 variance)).

    The default width makes the spectral Gaussian e^{-9|xi|^2/2} offset the
    quartic correction of eta near 0, so power laws in (1+t) show up already
    at t ~ 10.
    """
    return gridmod.from_function(lambda *x: np.exp(-sum(c * c for c in x) / (2 * variance)), n, N, L)


# default boxes resolving the default Gaussian in physical and spectral space
DEFAULT_GRIDS = {1: (1024, 64 * math.pi), 2: (256, 32 * math.pi), 3: (128, 16 * math.pi)}


BOUNDARY_TOL = 1e-12


def _conj(p) -> float:
    """Hoelder conjugate exponent as a float."""
    ip = inv(p)
    return math.inf if ip == 1 else float(1 / (1 - ip))


def high_rate_constant(profile: EtaProfile, R0: float) -> float:
    """Largest c with eta(xi) >= c |xi|^{-sigma2} on |xi| >= R0."""
    rho = np.geomspace(R0, 1e8 * max(R0, 1.0), 4001)
    return float(np.min(eta(rho, profile) * rho ** profile.sigma2))


def _weight_norm(profile: EtaProfile, l: float, s: float, n: int, R0: float, t: float,
                 c: float) -> float:
    """|| e^{-c t |xi|^{-sigma2}} |xi|^{-l} ||_{L^s(|xi| >= R0)}; the sup when s = inf.

    Since eta >= c |xi|^{-sigma2} on the shell, this dominates the same norm
    taken with e^{-eta t}.
    """
    sig = profile.sigma2
    if math.isinf(s):
        if l == 0:
            return 1.0
        peak = (sig * c * t / l) ** (1 / sig)
        rho = max(R0, peak)
        return float(math.exp(-c * t * rho ** (-sig)) * rho ** (-l))
    return float(high_freq_weight_integral(profile, l, s, R0, t, n=n, c=c).values[0] ** (1 / s))


@dataclass
class LpqlrReport:
    spec: NormSpec
    profile: EtaProfile
    R0: float
    t: np.ndarray
    lhs: np.ndarray
    rhs_low: np.ndarray
    rhs_high: np.ndarray
    low_part: np.ndarray  # frequency part |xi| <= R0 of the left side
    high_part: np.ndarray  # frequency part |xi| >= R0 of the left side
    high_bound: np.ndarray  # Hoelder bound on the high part
    data_norms: dict
    prediction: DecayPrediction
    low_fit: FitResult | None = None
    high_fit: FitResult | None = None
    window: tuple = (10.0, 1e3)
    notes: list = field(default_factory=list)

    @property
    def ratio(self) -> np.ndarray:
        return self.lhs / (self.rhs_low + self.rhs_high)

    @property
    def c_star(self) -> float:
        return float(self.ratio.max())

    def c_star_growth(self) -> float:
        """Growth of the running max of lhs/rhs across the fit window."""
        sel = (self.t >= self.window[0]) & (self.t <= self.window[1])
        run = np.maximum.accumulate(self.ratio[sel])
        return float(run[-1] / run[0])

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.c_star) and self.c_star_growth() < 2.0

    @property
    def hoelder_ok(self) -> bool:
        return bool(np.all(self.high_part <= self.high_bound * (1 + 1e-8)))

    def rows(self):
        for row in zip(self.t, self.lhs, self.rhs_low, self.rhs_high, self.ratio):
            yield tuple(float(x) for x in row)

    def summary(self) -> dict:
        return {
            "spec": self.spec.as_dict(),
            "profile": {"a": self.profile.a, "b": self.profile.b},
            "R0": self.R0,
            "predicted": {"low": str(self.prediction.low_exp), "high": str(self.prediction.high_exp)},
            "low_fit": None if self.low_fit is None else self.low_fit.slope,
            "low_r2": None if self.low_fit is None else self.low_fit.r_squared,
            "high_fit": None if self.high_fit is None else self.high_fit.slope,
            "high_r2": None if self.high_fit is None else self.high_fit.r_squared,
            "C_star": self.c_star,
            "C_star_growth": self.c_star_growth(),
            "bounded": self.bounded,
            "hoelder_ok": self.hoelder_ok,
            "notes": list(self.notes),
        }


def verify_lpqlr(phi: GridField, spec: NormSpec, profile: EtaProfile = EtaProfile(),
                 t_grid=None, R0: float = 1.0, window=(10.0, 1e3)) -> LpqlrReport:
    """Measure both sides of the L^p-L^q-L^r bound for the data phi.

    For p = 2 and p = inf the left side is integrated on the frequency side
    with a radial x angular rule applied to the interpolated |phi_hat|: for
    p = 2 by Parseval, and for p = inf because a nonnegative multiplier peaks
    at x = 0. Other p are evaluated on the grid.
    """
    if phi.n != spec.n:
        raise ValueError(f"field dimension {phi.n} does not match spec n={spec.n}")
    if gridmod.boundary_max(phi) > BOUNDARY_TOL:
        raise ValueError("data does not decay to 1e-12 at the box boundary")
    pred = predict(spec, profile)
    t = default_t_grid(*window) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")

    k, n = spec.k, spec.n
    norm_j = gridmod.derivative_norm(phi, spec.j, spec.q)
    norm_kl = gridmod.derivative_norm(phi, spec.k + spec.l, spec.r)
    rhs_low = (1 + t) ** float(pred.low_exp) * norm_j
    rhs_high = (1 + t) ** float(pred.high_exp) * norm_kl

    interp = SpectrumInterpolator(phi)
    kmax = float(interp.kmax.min())
    quad = ball_quadrature(n, kmax, breaks=(R0,))
    ahat = interp(quad.points)
    rr = quad.radii
    low_mask = rr <= R0
    eta_q = eta(rr, profile)

    pinv = float(inv(spec.p))
    hy = (2 * math.pi) ** (-n * (1 - pinv))  # Hausdorff-Young constant, 1/p' = 1 - 1/p
    notes = []

    def split_norms(tt):
        g = rr**k * np.exp(-eta_q * tt) * ahat
        if spec.p == 2:
            lo = hy * quad.norm(g, 2, low_mask)
            hi = hy * quad.norm(g, 2, ~low_mask)
            return math.hypot(lo, hi), lo, hi
        if _is_inf(spec.p):
            lo = hy * quad.integrate(np.where(low_mask, g, 0.0))
            hi = hy * quad.integrate(np.where(low_mask, 0.0, g))
            return lo + hi, lo, hi
        return None

    lhs, lows, highs = [], [], []
    for tt in t:
        res = split_norms(tt)
        if res is None:
            full = gridmod.lp_norm(kernel_apply(phi, k, tt, profile), spec.p)
            spec_f = phi.to_spectral()
            rg = gridmod.xi_norm(spec_f)
            mult = rg**k * np.exp(-eta(rg, profile) * tt) * np.abs(spec_f.values)
            lo = gridmod.lp_norm(spec_f.with_values(np.where(rg <= R0, mult, 0)).to_physical(), spec.p)
            hi = gridmod.lp_norm(spec_f.with_values(np.where(rg > R0, mult, 0)).to_physical(), spec.p)
            res = (full, lo, hi)
        lhs.append(res[0])
        lows.append(res[1])
        highs.append(res[2])
    if not (spec.p == 2 or _is_inf(spec.p)):
        notes.append("left side evaluated on the grid (coarse for large t)")

    # Hoelder chain for the high part: ||.||_{L^p'} <= || |xi|^{k+l} phi_hat ||_{L^r'} W(t)
    rc = _conj(spec.r)
    s2 = math.inf if inv(spec.r) == inv(spec.p) else float(1 / (inv(spec.r) - inv(spec.p)))
    data_hi = quad.norm(rr ** (k + spec.l) * ahat, rc, ~low_mask)
    c_hi = high_rate_constant(profile, R0)
    W = np.array([_weight_norm(profile, spec.l, s2, n, R0, tt, c_hi) for tt in t])
    bound = hy * data_hi * W

    report = LpqlrReport(
        spec, profile, R0, t, np.array(lhs), rhs_low, rhs_high, np.array(lows), np.array(highs),
        bound, {"deriv_j_Lq": norm_j, "deriv_kl_Lr": norm_kl, "spectral_kl_Lr'": data_hi},
        pred, window=tuple(window), notes=notes,
    )
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() >= 8:
        report.low_fit = fit_exponent(t, report.low_part, window)
        if np.all(W[sel] > 0):
            report.high_fit = fit_exponent(t, W, window)
        for name, f in (("low", report.low_fit), ("high", report.high_fit)):
            if f is not None and not f.reliable:
                notes.append(f"{name} fit has r^2={f.r_squared:.4f} below {R2_MIN}")
    return report


@dataclass(frozen=True)
class WeightIntegral:
    t: np.ndarray
    values: np.ndarray
    fit: FitResult | None
    predicted: Fraction


def _shell_integral(sigma2: float, beta: float, c: float, R0: float, t: float, n: int) -> float:
    # rho = 1/u: int_{|xi|>=R0} e^{-ct/|xi|^s2} |xi|^{-ls} dxi = S * int_0^{1/R0} e^{-ct u^s2} u^{beta-1} du
    f = lambda u: np.exp(-c * t * u**sigma2) * u ** (beta - 1)
    u1 = 1 / R0
    # split near the bulk of the mass so quad sees the peak
    mid = min(u1, (1.0 / max(c * t, 1e-300)) ** (1 / sigma2)) if t > 0 else u1
    pts = [0.0, mid, u1] if 0 < mid < u1 else [0.0, u1]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, a, b, limit=400, epsabs=0, epsrel=1e-12)
        total += val
    return sphere_area(n) * total


def high_freq_weight_integral(profile: EtaProfile, l: float, s2: float, R0: float, t,
                              n: int = 3, c: float = 1.0, window=None) -> WeightIntegral:
    """int_{|xi| >= R0} e^{-c t / |xi|^sigma2} |xi|^{-l s2} dxi by radial quadrature."""
    sigma2 = profile.sigma2
    if sigma2 is None:
        raise ValueError("profile has no high-frequency decay")
    beta = l * s2 - n
    if not beta > 0:
        raise ValueError(f"need l*s2 > n, got l*s2={l * s2}, n={n}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    vals = np.array([_shell_integral(sigma2, beta, c, R0, tt, n) for tt in t])
    fit = None
    if t.size >= 8:
        fit = fit_exponent(t, vals, window)
    pred = -_frac(l) * _frac(s2) / sigma2 + Fraction(n, sigma2)
    return WeightIntegral(t, vals, fit, pred)


def weight_integral_closed_form(sigma2: float, l: float, s2: float, R0: float, t: float,
                                n: int = 3, c: float = 1.0) -> float:
    """Same integral through the regularized lower incomplete gamma function."""
    beta = l * s2 - n
    if t == 0:
        return sphere_area(n) * R0 ** (-beta) / beta
    a = beta / sigma2
    return sphere_area(n) / sigma2 * (c * t) ** (-a) * special.gamma(a) * special.gammainc(a, c * t / R0**sigma2)


CSV_HEADER = ("t", "lhs_norm", "rhs_low", "rhs_high", "ratio")


def fmt(x: float) -> str:
    return f"{x:.14e}"


def write_csv(report: LpqlrReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in report.rows():
            w.writerow([fmt(x) for x in row])
