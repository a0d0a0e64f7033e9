"""Pseudo-spectral simulation of the Euler-Maxwell perturbation system on a torus.

Unknowns z = (rho, v, E, h) with n = n_inf + rho and h = B - B_inf. The linear
part z_t + Phi(xi) z is propagated exactly per frequency; the nonlinear flux
and source enter only the v-equation as div Q + R with Q = q2 / n_inf and
R = r2 / n_inf, where

    q2 = -n_inf^2 v (x) v / n - [p(n) - p(n_inf) - p'(n_inf) rho] I
    r2 = -rho E - n_inf v x h.

Time stepping is the integrating-factor (Lawson) RK4 scheme, with 2/3-rule
truncation on both sides of every product. In the 2D slice mode fields do not
depend on x3 and xi3 = 0.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from . import grid as gridmod
from .energy import FrequencyGrid, LyapunovParams, _gen_eigvalsh, lyapunov_matrix
from .expm import BatchedExp
from .kernel import EtaProfile, FitResult, eta, fit_exponent
from .system import EulerMaxwellParams, build_euler_maxwell, symbol_batch

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """Numerical failure during time stepping (positivity loss, blow-up)."""


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class GridConfig:
    N: int = 64
    L: float = 32 * math.pi
    dims: int = 3

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dims

    @property
    def spectral_shape(self) -> tuple:
        return (self.N,) * (self.dims - 1) + (self.N // 2 + 1,)

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def volume(self) -> float:
        return self.L**self.dims

    def coords(self) -> list:
        x = (np.arange(self.N) - self.N // 2) * self.dx
        return np.meshgrid(*([x] * self.dims), indexing="ij")

    def wavevectors(self) -> np.ndarray:
        """(…, 3) frequencies on the rfft half-grid, xi3 = 0 in the slice mode."""
        k = 2 * math.pi * np.fft.fftfreq(self.N, self.dx)
        kr = 2 * math.pi * np.fft.rfftfreq(self.N, self.dx)
        axes = [k] * (self.dims - 1) + [kr]
        mesh = list(np.meshgrid(*axes, indexing="ij"))
        if self.dims == 2:
            mesh.append(np.zeros_like(mesh[0]))
        return np.stack(mesh, axis=-1)

    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each half-grid mode in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    def dealias_mask(self) -> np.ndarray:
        cut = self.N // 3
        idx = np.fft.fftfreq(self.N, 1.0 / self.N)
        idr = np.fft.rfftfreq(self.N, 1.0 / self.N)
        axes = [np.abs(idx) <= cut] * (self.dims - 1) + [np.abs(idr) <= cut]
        mask = axes[0]
        for a in axes[1:]:
            mask = mask[..., None] & a
        return mask.reshape(self.spectral_shape)


PROFILE_NAMES = ("gaussian_bump", "multi_bump", "random_band_limited")


@dataclass(frozen=True)
class InitConfig:
    profile: str = "gaussian_bump"
    epsilon: float = 1e-3
    seed: int = 0
    width: float = 2.5
    normalize: str = "peak"  # "peak": max |rho0| = eps; "l1": ||z0||_{L^1} = eps
    e_transverse: float = 0.0

    def __post_init__(self):
        if self.profile not in PROFILE_NAMES:
            raise ValueError(f"profile must be one of {list(PROFILE_NAMES)}, got {self.profile!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.normalize not in ("peak", "l1"):
            raise ValueError("normalize must be 'peak' or 'l1'")


@dataclass(frozen=True)
class TimeConfig:
    T: float = 40.0
    dt: float | None = None
    sample_dt: float = 0.25

    def __post_init__(self):
        if not self.T > 0 or not self.sample_dt > 0:
            raise ValueError("T and sample_dt must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridConfig = GridConfig()
    params: EulerMaxwellParams = EulerMaxwellParams()
    init: InitConfig = InitConfig()
    time: TimeConfig = TimeConfig()
    nonlinear: bool = True
    spectra_subsample: int = 32

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {"grid", "params", "init", "time", "nonlinear", "outputs", "spectra_subsample"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown simulation config keys: {sorted(extra)}")
        outputs = d.get("outputs", {})
        return cls(
            grid=GridConfig(**d.get("grid", {})),
            params=EulerMaxwellParams.from_dict(d.get("params", {})),
            init=InitConfig(**d.get("init", {})),
            time=TimeConfig(**d.get("time", {})),
            nonlinear=bool(d.get("nonlinear", True)),
            spectra_subsample=int(outputs.get("spectra_subsample", d.get("spectra_subsample", 32))),
        )


# ------------------------------------------------------------------ fields

def to_spectral(u: np.ndarray, dims: int) -> np.ndarray:
    return scipy.fft.rfftn(u, axes=tuple(range(-dims, 0)), workers=gridmod.FFT_WORKERS)


def to_physical(uh: np.ndarray, cfg: GridConfig) -> np.ndarray:
    return scipy.fft.irfftn(uh, s=cfg.shape, axes=tuple(range(-cfg.dims, 0)), workers=gridmod.FFT_WORKERS)


@dataclass(frozen=True)
class PerturbationField:
    """Spectral coefficients (10, *half-grid) of (rho, v, E, h) at time ``time``.

    Coefficients are those of the unnormalized rfft of samples taken on the
    centered grid x = (k - N/2) dx.
    """

    zhat: np.ndarray
    grid: GridConfig
    params: EulerMaxwellParams
    time: float = 0.0

    def physical(self) -> np.ndarray:
        return to_physical(self.zhat, self.grid)

    def with_state(self, zhat: np.ndarray, time: float) -> "PerturbationField":
        return replace(self, zhat=zhat, time=time)

    def l2_norm(self, comps=slice(None)) -> float:
        return sobolev_norm(self.zhat[comps], self.grid, 0)

    def constraint_residuals(self) -> tuple:
        return constraint_residuals(self.zhat, self.grid)


def sobolev_norm(uh: np.ndarray, cfg: GridConfig, s: float, homogeneous: bool = False) -> float:
    """Spectral H^s norm sum (1 + |xi|^2)^s |u_hat|^2 (|xi|^{2s} when homogeneous)."""
    xi = cfg.wavevectors()
    r2 = np.sum(xi * xi, axis=-1)
    mult = r2**s if homogeneous else (1 + r2) ** s
    w = cfg.rfft_weights() * mult
    total = np.sum(w * np.sum(np.abs(uh.reshape((-1,) + cfg.spectral_shape)) ** 2, axis=0))
    return float(np.sqrt(total * cfg.volume) / cfg.N**cfg.dims)


def constraint_residuals(zhat: np.ndarray, cfg: GridConfig) -> tuple:
    """L^2 norms of div E + rho and div h."""
    xi = np.moveaxis(cfg.wavevectors(), -1, 0)
    divE = 1j * np.sum(xi * zhat[4:7], axis=0) + zhat[0]
    divh = 1j * np.sum(xi * zhat[7:10], axis=0)
    return sobolev_norm(divE[None], cfg, 0), sobolev_norm(divh[None], cfg, 0)


# ------------------------------------------------------------------ initial data

def _gauss(cfg: GridConfig, center, width):
    X = cfg.coords()
    return np.exp(-sum((x - c) ** 2 for x, c in zip(X, center)) / (2 * width**2))


def _gaussian_bump(cfg: GridConfig, init: InitConfig, rng):
    return _gauss(cfg, [0.0] * cfg.dims, init.width)


def _multi_bump(cfg: GridConfig, init: InitConfig, rng):
    d = cfg.L / 16
    centers = [(d, 0, 0), (-d, d, 0), (0, -d, d)]
    signs = (1.0, -0.7, 0.5)
    return sum(s * _gauss(cfg, c[: cfg.dims], init.width) for s, c in zip(signs, centers))


def _random_band_limited(cfg: GridConfig, init: InitConfig, rng):
    # random modes with |k| below a fixed band, windowed by a Gaussian envelope
    shape = cfg.spectral_shape
    xi = cfg.wavevectors()
    band = np.sqrt(np.sum(xi * xi, -1)) <= 2.0 / init.width
    coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * band
    u = to_physical(coef, cfg)
    u /= np.abs(u).max()
    return u * _gauss(cfg, [0.0] * cfg.dims, init.width)


PROFILES = {
    "gaussian_bump": _gaussian_bump,
    "multi_bump": _multi_bump,
    "random_band_limited": _random_band_limited,
}

BOUNDARY_TOL = 1e-12


def build_initial_data(cfg: SimulationConfig) -> PerturbationField:
    """Constraint-respecting data: mean-zero rho, divergence-free h, E with div E = -rho."""
    g = cfg.grid
    init = cfg.init
    rng = np.random.default_rng(init.seed)
    shape = PROFILES[init.profile](g, init, rng)
    peak = np.abs(shape).max()
    faces = max(np.abs(np.take(shape, [0, -1], axis=ax)).max() for ax in range(g.dims))
    if faces > BOUNDARY_TOL * peak:
        raise ValueError(f"profile does not decay below {BOUNDARY_TOL} at the boundary ({faces / peak:.2e})")
    shape = shape / peak

    xi = np.moveaxis(g.wavevectors(), -1, 0)  # (3, *half)
    r2 = np.sum(xi * xi, axis=0)
    nz = r2 > 0
    safe = np.where(nz, r2, 1.0)
    sh = to_spectral(shape, g.dims)

    zh = np.zeros((10,) + g.spectral_shape, complex)
    zh[0] = np.where(nz, sh, 0.0)  # zero mean
    zh[1] = 0.5 * sh
    zh[2] = -0.25 * sh
    zh[7] = sh
    zh[8] = 0.5 * sh
    # divergence-free h and zero-mean h
    h = zh[7:10]
    h -= xi * np.sum(xi * h, axis=0) / safe
    h[:, ~nz] = 0.0
    # curl-free E solving i xi.E = -rho, plus an optional transverse part
    zh[4:7] = 1j * xi * zh[0] / safe
    if init.e_transverse:
        et = np.stack([sh, -sh, 0.5 * sh]) * init.e_transverse
        et -= xi * np.sum(xi * et, axis=0) / safe
        et[:, ~nz] = 0.0
        zh[4:7] += et

    z = PerturbationField(zh, g, cfg.params)
    if init.epsilon == 0:
        return z.with_state(np.zeros_like(zh), 0.0)
    if init.normalize == "l1":
        scale = init.epsilon / l1_norm(z)
    else:
        scale = init.epsilon / np.abs(to_physical(zh[0], g)).max()
    z = z.with_state(zh * scale, 0.0)
    nmin = cfg.params.n_inf + to_physical(z.zhat[0], g).min()
    if nmin <= 0:
        raise ValueError(f"epsilon={init.epsilon} makes the density nonpositive (min n = {nmin:.3e})")
    return z


def l1_norm(z: PerturbationField) -> float:
    u = z.physical()
    return float(np.sum(np.sqrt(np.sum(u * u, axis=0))) * z.grid.dx**z.grid.dims)


# ------------------------------------------------------------------ nonlinearity

def nonlinear_terms(z: PerturbationField, dealias: bool = False):
    """Physical-space (Q, R) with Q = q2 / n_inf (3, 3, *grid) and R = r2 / n_inf (3, *grid)."""
    p = z.params
    zh = z.zhat * z.grid.dealias_mask() if dealias else z.zhat
    u = to_physical(zh, z.grid)
    return _nonlinear_physical(u, p)


def _nonlinear_physical(u: np.ndarray, p: EulerMaxwellParams, guard: float | None = None):
    rho, v, E, h = u[0], u[1:4], u[4:7], u[7:10]
    n = p.n_inf + rho
    nmin = float(n.min())
    if nmin <= 0 or (guard is not None and nmin < guard):
        raise SimulationError(f"density positivity lost: min n = {nmin:.4e}")
    ni = p.n_inf
    pres = p.pressure(n) - p.pressure(ni) - p.dpressure(ni) * rho
    q2 = -ni**2 * v[:, None] * v[None, :] / n
    for i in range(3):
        q2[i, i] -= pres
    r2 = -rho * E - ni * np.cross(v, h, axis=0)
    return q2 / ni, r2 / ni


# ------------------------------------------------------------------ propagator

class LinearPropagator:
    """Dense exp(-t Phi(xi)) on the rfft half-grid for fixed step sizes."""

    def __init__(self, cfg: GridConfig, params: EulerMaxwellParams):
        self.cfg = cfg
        xi = cfg.wavevectors().reshape(-1, 3)
        self.xi = xi
        self.phi = symbol_batch(build_euler_maxwell(params), xi)
        self.exp = BatchedExp(self.phi)
        self._cache: dict = {}

    def matrices(self, t: float) -> np.ndarray:
        key = round(t, 14)
        if key not in self._cache:
            self._cache[key] = self.exp(t)
        return self._cache[key]

    def apply(self, t: float, zhat: np.ndarray) -> np.ndarray:
        G = self.matrices(t)
        flat = zhat.reshape(10, -1).T
        out = np.einsum("kij,kj->ki", G, flat)
        return out.T.reshape(zhat.shape)

    def apply_velocity(self, t: float, fv: np.ndarray) -> np.ndarray:
        """exp(-t Phi) applied to a state that is nonzero only in the v slots."""
        G = self.matrices(t)[:, :, 1:4]
        flat = fv.reshape(3, -1).T
        out = np.einsum("kij,kj->ki", G, flat)
        return out.T.reshape((10,) + fv.shape[1:])


def max_speed(params: EulerMaxwellParams) -> float:
    sysm = build_euler_maxwell(params)
    A0h = np.sqrt(np.diag(sysm.A0))
    A = sysm.flux(np.array([1.0, 0.0, 0.0])) / np.outer(A0h, A0h)
    return float(np.abs(np.linalg.eigvalsh(A)).max())


def default_dt(cfg: SimulationConfig) -> float:
    return min(0.25 * cfg.grid.dx / max_speed(cfg.params), 0.05)


SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class Stepper:
    """Integrating-factor RK4 for z_t + Phi z = (0, i xi.Q_hat + R_hat, 0, 0)."""

    def __init__(self, cfg: SimulationConfig, dt: float, nonlinear: bool = True):
        self.cfg = cfg
        self.g = cfg.grid
        self.dt = dt
        self.nonlinear = nonlinear
        self.prop = LinearPropagator(self.g, cfg.params)
        self.mask = self.g.dealias_mask()
        self.xi = np.moveaxis(self.g.wavevectors(), -1, 0)
        self.guard = cfg.params.n_inf / 2

    def forcing(self, zhat: np.ndarray, record: bool = False):
        """v-slot forcing i xi.Q_hat + R_hat, shape (3, *half-grid)."""
        u = to_physical(zhat * self.mask, self.g)
        Q, R = _nonlinear_physical(u, self.cfg.params, self.guard)
        # Q is symmetric: transform the six distinct entries only
        upper = to_spectral(np.stack([Q[i, j] for i, j in SYM_PAIRS]), self.g.dims) * self.mask
        Rh = to_spectral(R, self.g.dims) * self.mask
        Qh = np.empty((3, 3) + upper.shape[1:], complex)
        for m, (i, j) in enumerate(SYM_PAIRS):
            Qh[i, j] = upper[m]
            Qh[j, i] = upper[m]
        xi = self.xi
        f = Rh.copy()
        for i in range(3):
            f[i] += 1j * (Qh[i, 0] * xi[0] + Qh[i, 1] * xi[1] + Qh[i, 2] * xi[2])
        if record:
            return f, Qh, Rh
        return f

    def step(self, zhat: np.ndarray) -> np.ndarray:
        h = self.dt
        P = self.prop
        if not self.nonlinear:
            return P.apply(h, zhat)
        a = P.apply(h / 2, zhat)
        b = P.apply(h / 2, a)
        k1 = self.forcing(zhat)
        gk1 = P.apply_velocity(h / 2, k1)
        k2 = self.forcing(a + h / 2 * gk1)
        z3 = a.copy()
        z3[1:4] += h / 2 * k2
        k3 = self.forcing(z3)
        k4 = self.forcing(b + h * P.apply_velocity(h / 2, k3))
        out = b + h / 6 * P.apply(h / 2, gk1)
        mid = P.apply_velocity(h / 2, k2 + k3)
        out += h / 3 * mid
        out[1:4] += h / 6 * k4
        return out


def step(z: PerturbationField, dt: float, nonlinear: bool = True, stepper: Stepper | None = None) -> PerturbationField:
    """Advance one step; build a Stepper once and pass it in for repeated calls."""
    if stepper is None:
        cfg = SimulationConfig(grid=z.grid, params=z.params)
        stepper = Stepper(cfg, dt, nonlinear)
    return z.with_state(stepper.step(z.zhat), z.time + dt)


# ------------------------------------------------------------------ monitors

@dataclass
class Monitors:
    times: list = field(default_factory=list)
    l2_norm: list = field(default_factory=list)
    h3_norm: list = field(default_factory=list)
    N_t: list = field(default_factory=list)
    D_t_sq: list = field(default_factory=list)
    divE_res: list = field(default_factory=list)
    divh_res: list = field(default_factory=list)
    positivity_min: list = field(default_factory=list)
    data_scale: float = 0.0

    CSV_HEADER = ("t", "l2", "h3", "N", "D2", "divE_res", "divh_res")

    def arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in
                ("times", "l2_norm", "h3_norm", "N_t", "D_t_sq", "divE_res", "divh_res", "positivity_min")}

    def rows(self):
        yield from zip(self.times, self.l2_norm, self.h3_norm, self.N_t, self.D_t_sq, self.divE_res, self.divh_res)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_HEADER)
            for row in self.rows():
                w.writerow([f"{float(x):.14e}" for x in row])

    def max_constraint_residual(self) -> float:
        """Largest constraint residual relative to the initial L^2 size."""
        if not self.times or self.data_scale == 0:
            return 0.0
        return float(max(max(self.divE_res), max(self.divh_res)) / self.data_scale)


def _dissipation_density(zh: np.ndarray, g: GridConfig) -> float:
    """||(rho, v)||_{H^3}^2 + ||E||_{H^2}^2 + ||grad h||_{H^1}^2."""
    xi = g.wavevectors()
    r2 = np.sum(xi * xi, -1)
    w = g.rfft_weights()
    a = np.sum(np.abs(zh[0:4]) ** 2, 0) * (1 + r2) ** 3
    b = np.sum(np.abs(zh[4:7]) ** 2, 0) * (1 + r2) ** 2
    c = np.sum(np.abs(zh[7:10]) ** 2, 0) * r2 * (1 + r2)
    return float(np.sum(w * (a + b + c)) * g.volume / g.N ** (2 * g.dims))


@dataclass
class SpectralRecord:
    """States and nonlinear sources at a fixed set of frequencies."""

    xi: np.ndarray  # (S, 3)
    index: np.ndarray  # flat indices into the half-grid
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)  # (S, 10) per sample
    Q: list = field(default_factory=list)  # (S, 3, 3)
    R: list = field(default_factory=list)  # (S, 3)

    def as_arrays(self):
        return (np.asarray(self.times), np.asarray(self.states), np.asarray(self.Q), np.asarray(self.R))


def pick_subsample(g: GridConfig, count: int) -> np.ndarray:
    """Flat half-grid indices of ``count`` low, nonzero frequencies spread in |xi|."""
    xi = g.wavevectors().reshape(-1, 3)
    r = np.linalg.norm(xi, axis=1)
    cut = (g.N // 3) * 2 * math.pi / g.L
    ok = np.flatnonzero((r > 0) & (np.abs(xi).max(axis=1) <= cut))
    order = ok[np.argsort(r[ok], kind="stable")]
    if count >= order.size:
        return order
    pos = np.unique(np.round(np.geomspace(1, order.size, count)).astype(int) - 1)
    return order[pos]


@dataclass
class SimulationResult:
    config: SimulationConfig
    monitors: Monitors
    record: SpectralRecord
    final: PerturbationField
    dt: float
    warnings: list


def simulate(cfg: SimulationConfig, z0: PerturbationField | None = None) -> SimulationResult:
    g = cfg.grid
    z = build_initial_data(cfg) if z0 is None else z0
    notes = []
    c_max = max_speed(cfg.params)
    wrap = g.L / (2 * c_max)
    if cfg.time.T > wrap:
        msg = f"horizon T={cfg.time.T} exceeds the wrap-around time L/(2 c_max)={wrap:.3f}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    sample_dt = cfg.time.sample_dt
    dt = cfg.time.dt or default_dt(cfg)
    per_sample = max(1, math.ceil(sample_dt / dt - 1e-12))
    dt = sample_dt / per_sample
    n_samples = int(round(cfg.time.T / sample_dt))

    mon = Monitors()
    rec = SpectralRecord(g.wavevectors().reshape(-1, 3)[pick_subsample(g, cfg.spectra_subsample)],
                         pick_subsample(g, cfg.spectra_subsample))
    nonlinear = cfg.nonlinear and cfg.init.epsilon > 0
    stepper = Stepper(cfg, dt, nonlinear)
    h3_0 = sobolev_norm(z.zhat, g, 3)
    mon.data_scale = z.l2_norm()

    def sample(z: PerturbationField, prev_d: float | None):
        t = z.time
        l2 = z.l2_norm()
        h3 = sobolev_norm(z.zhat, g, 3)
        if h3_0 > 0 and h3 > 10 * h3_0:
            raise SimulationError(f"H^3 norm grew to {h3 / h3_0:.2f} x its initial value at t={t:.3f}")
        dens = _dissipation_density(z.zhat, g)
        mon.times.append(t)
        mon.l2_norm.append(l2)
        mon.h3_norm.append(h3)
        mon.N_t.append(max(mon.N_t[-1] if mon.N_t else 0.0, (1 + t) ** 0.75 * l2))
        if prev_d is None:
            mon.D_t_sq.append(0.0)
        else:
            mon.D_t_sq.append(mon.D_t_sq[-1] + 0.5 * sample_dt * (prev_d + dens))
        rE, rh = z.constraint_residuals()
        mon.divE_res.append(rE)
        mon.divh_res.append(rh)
        mon.positivity_min.append(float(cfg.params.n_inf + to_physical(z.zhat[0], g).min()))
        flat = z.zhat.reshape(10, -1)[:, rec.index].T
        rec.times.append(t)
        rec.states.append(flat.copy())
        if nonlinear:
            _, Qh, Rh = stepper.forcing(z.zhat, record=True)
            rec.Q.append(Qh.reshape(3, 3, -1)[:, :, rec.index].transpose(2, 0, 1) / g.N**g.dims)
            rec.R.append(Rh.reshape(3, -1)[:, rec.index].T / g.N**g.dims)
        else:
            rec.Q.append(np.zeros((rec.index.size, 3, 3), complex))
            rec.R.append(np.zeros((rec.index.size, 3), complex))
        # states are stored with the same 1/N^n scaling as the sources
        rec.states[-1] = rec.states[-1] / g.N**g.dims
        return dens

    d = sample(z, None)
    zh = z.zhat
    for s in range(n_samples):
        if nonlinear:
            for _ in range(per_sample):
                zh = stepper.step(zh)
        else:
            zh = stepper.prop.apply(sample_dt, zh)
        z = z.with_state(zh, (s + 1) * sample_dt)
        if not np.all(np.isfinite(zh)):
            raise SimulationError(f"non-finite state at t={z.time:.3f}")
        d = sample(z, d)
        log.debug("t=%.2f l2=%.4e", z.time, mon.l2_norm[-1])
    return SimulationResult(cfg, mon, rec, z, dt, notes)


# ------------------------------------------------------------------ reports

@dataclass
class DecayReport:
    fit: FitResult
    band: float
    passed: bool
    window: tuple
    warnings: list

    def as_dict(self) -> dict:
        return {
            "slope": self.fit.slope,
            "r_squared": self.fit.r_squared,
            "compensated_band": self.band,
            "window": list(self.window),
            "target": -0.75,
            "passed": self.passed,
            "warnings": list(self.warnings),
        }


def decay_report(mon: Monitors, window=None, rate: float = 0.75, max_slope: float = -0.6,
                 max_band: float = 4.0) -> DecayReport:
    t = np.asarray(mon.times)
    l2 = np.asarray(mon.l2_norm)
    window = window or (2.0, float(t.max()))
    if window[0] < 2.0:
        raise ValueError("the decay window must start past the transient (t >= 2)")
    fit = fit_exponent(t, l2, window)
    sel = (t >= window[0]) & (t <= window[1])
    comp = l2[sel] * (1 + t[sel]) ** rate
    band = float(comp.max() / comp.min())
    notes = []
    if fit.r_squared < 0.95:
        msg = f"decay fit r^2={fit.r_squared:.3f} below 0.95"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return DecayReport(fit, band, fit.slope <= max_slope and band <= max_band, tuple(window), notes)


@dataclass
class GNReport:
    ratios: np.ndarray  # (count, 3)
    max_ratio: np.ndarray  # (3,)

    def as_dict(self) -> dict:
        return {"max_ratio": self.max_ratio.tolist(), "count": int(self.ratios.shape[0])}


def gn_ratios(f: gridmod.GridField) -> np.ndarray:
    """Ratios of the three interpolation inequalities between L^2 norms of derivatives:

    |df| / (|f|^{2/3} |d^3 f|^{1/3}), |d^2 f| / (|f|^{1/3} |d^3 f|^{2/3}) and
    |df| / (|f|^{1/2} |d^2 f|^{1/2}), with |d^j f| the spectral norm of |xi|^j f_hat.
    """
    s = f.to_spectral()
    r = gridmod.xi_norm(s)
    mag2 = gridmod.pointwise_magnitude(s.values, s.components) ** 2
    nrm = [math.sqrt(float(np.sum(r ** (2 * j) * mag2))) for j in range(4)]
    if nrm[0] == 0:
        raise ValueError("gn ratios are undefined for the zero field")
    return np.array([
        nrm[1] / (nrm[0] ** (2 / 3) * nrm[3] ** (1 / 3)),
        nrm[2] / (nrm[0] ** (1 / 3) * nrm[3] ** (2 / 3)),
        nrm[1] / (nrm[0] ** 0.5 * nrm[2] ** 0.5),
    ])


def gn_check(fields) -> GNReport:
    if isinstance(fields, gridmod.GridField):
        fields = [fields]
    ratios = np.array([gn_ratios(f) for f in fields])
    return GNReport(ratios, ratios.max(axis=0))


def gn_corpus(count: int, N: int, L: float = 2 * math.pi, n: int = 3, band: int = 4, seed: int = 0):
    """Random real fields built from integer modes |k| <= band, identical across resolutions."""
    rng = np.random.default_rng(seed)
    ks = np.array([k for k in np.ndindex(*(2 * band + 1,) * n)]) - band
    ks = ks[(np.linalg.norm(ks, axis=1) <= band) & (np.linalg.norm(ks, axis=1) > 0)]
    if N <= 2 * band:
        raise ValueError("grid too coarse for the band")
    x = (np.arange(N) - N // 2) * (L / N)
    X = np.meshgrid(*([x] * n), indexing="ij")
    for _ in range(count):
        amp = rng.standard_normal(len(ks)) + 1j * rng.standard_normal(len(ks))
        amp *= rng.random(len(ks)) < 0.3
        if not np.any(amp):
            amp[0] = 1.0
        u = np.zeros((N,) * n, complex)
        for k, a in zip(ks, amp):
            if a:
                u += a * np.exp(1j * (2 * math.pi / L) * sum(kk * xx for kk, xx in zip(k, X)))
        yield gridmod.GridField(u.real.astype(complex), (L,) * n)


# ------------------------------------------------------------------ Duhamel bound

@dataclass
class DuhamelReport:
    c1: float
    rate: float
    C: float
    max_ratio: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"c1": self.c1, "rate": self.rate, "C": self.C, "max_ratio": self.max_ratio,
                "violations": self.violations[:20], "passed": self.passed}


def duhamel_constants(xis: np.ndarray, lp: LyapunovParams, em: EulerMaxwellParams,
                      profile: EtaProfile = EtaProfile()) -> np.ndarray:
    """Per-frequency C with |z(t)|^2 <= C [e^{-k eta t}|z0|^2 + int e^{-k eta (t-s)}(|xi|^2|Q|^2+|R|^2) ds],
    k = c1 / 2.

    From dE/dt = -z^H K z + 2 Re z^H H f and Young's inequality with the
    positive form K - k eta H on X_xi: dE/dt + k eta E <= C_F |f|^2 where
    C_F = lambda_max(B^H (K - k eta H)^{-1} B), B = V^H H P_v; then
    |f|^2 <= 2(|xi|^2 |Q|^2 + |R|^2) and e_lo |z|^2 <= E <= e_hi |z|^2.
    """
    grid = FrequencyGrid(xis, em, profile)
    K, H, _ = grid.pencils(lp.alpha1, lp.alpha2)
    k = lp.c1 / 2
    Hf = lyapunov_matrix(grid.xis, lp.alpha1, lp.alpha2, em.a_inf, em.n_inf)
    Pv = np.zeros((10, 3))
    Pv[1:4] = np.eye(3)
    B = np.conj(np.swapaxes(grid.V, 1, 2)) @ Hf @ Pv
    S = K - k * grid.eta[:, None, None] * H
    CF = np.linalg.eigvalsh(np.conj(np.swapaxes(B, 1, 2)) @ np.linalg.solve(S, B)).max(axis=1)
    eye = np.broadcast_to(np.eye(H.shape[-1]), H.shape)
    ev = _gen_eigvalsh(H, eye)
    e_lo, e_hi = ev.min(axis=1), ev.max(axis=1)
    return np.maximum(e_hi / e_lo, 2 * CF / e_lo)


def duhamel_check(record: SpectralRecord, lp: LyapunovParams, em: EulerMaxwellParams,
                  multiplier: float = 1.1, profile: EtaProfile = EtaProfile()) -> DuhamelReport:
    """Check the frequency-wise Duhamel bound at every recorded (t, xi)."""
    t, Z, Q, R = record.as_arrays()
    xi = record.xi
    Cxi = duhamel_constants(xi, lp, em, profile)
    C = float(Cxi.max())
    k = lp.c1 / 2
    et = eta(np.linalg.norm(xi, axis=1), profile)
    src = np.sum(xi * xi, 1)[None, :] * np.sum(np.abs(Q) ** 2, axis=(2, 3)) + np.sum(np.abs(R) ** 2, axis=2)
    lhs = np.sum(np.abs(Z) ** 2, axis=2)  # (T, S)
    z0 = lhs[0]
    violations = []
    max_ratio = 0.0
    for i, ti in enumerate(t):
        decay = np.exp(-k * et * ti) * z0
        if i > 0:
            wts = np.exp(-k * et[None, :] * (ti - t[: i + 1, None])) * src[: i + 1]
            duh = np.trapezoid(wts, t[: i + 1], axis=0)
        else:
            duh = np.zeros_like(z0)
        rhs = C * (decay + duh)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs[i] / rhs, np.where(lhs[i] > 0, np.inf, 0.0))
        max_ratio = max(max_ratio, float(ratio.max()))
        for s in np.flatnonzero(ratio > multiplier):
            violations.append({"t": float(ti), "xi": xi[s].tolist(), "ratio": float(ratio[s])})
    return DuhamelReport(lp.c1, k, C, max_ratio, violations)


def green_reference(cfg: SimulationConfig, z0: PerturbationField, t: float) -> np.ndarray:
    """Direct per-frequency Green-matrix evolution of the linear part."""
    xi = cfg.grid.wavevectors().reshape(-1, 3)
    Gt = BatchedExp(symbol_batch(build_euler_maxwell(cfg.params), xi))(t)
    flat = z0.zhat.reshape(10, -1).T
    return np.einsum("kij,kj->ki", Gt, flat).T.reshape(z0.zhat.shape)

