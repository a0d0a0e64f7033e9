"""Uniform periodic grids standing in for R^n, with a continuous Fourier transform.

Conventions: phi_hat(xi) = int phi(x) e^{-i x.xi} dx and
phi(x) = (2 pi)^{-n} int phi_hat(xi) e^{i x.xi} dxi. Physical samples live on a
centered grid x = (k - N/2) dx; spectral samples are kept in FFT order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial, gamma, pi

import numpy as np
import scipy.fft
from scipy import ndimage

FFT_WORKERS: int | None = None


def set_fft_workers(n: int | None) -> None:
    global FFT_WORKERS
    FFT_WORKERS = n


def _is_pow2(k: int) -> bool:
    return k > 0 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class GridField:
    """Samples of a scalar or m-component field on a periodic box.

    ``values`` has shape ``shape`` for scalars or ``(m, *shape)`` for vector
    fields (``components`` is then m). ``space`` is "physical" or "spectral".
    """

    values: np.ndarray
    box: tuple
    space: str = "physical"
    components: int = 0

    def __post_init__(self):
        box = tuple(float(b) for b in self.box)
        object.__setattr__(self, "box", box)
        if self.space not in ("physical", "spectral"):
            raise ValueError(f"space must be 'physical' or 'spectral', got {self.space!r}")
        shape = self.shape
        if len(shape) != len(box) or not 1 <= len(box) <= 3:
            raise ValueError(f"values shape {self.values.shape} does not match a {len(box)}-d box")
        if not all(_is_pow2(s) for s in shape):
            raise ValueError(f"grid sizes must be powers of two, got {shape}")

    @property
    def n(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:] if self.components else self.values.shape

    @property
    def spacing(self) -> tuple:
        return tuple(b / s for b, s in zip(self.box, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.n, 0))

    def coords(self) -> list:
        """Centered coordinates per axis."""
        return [(np.arange(s) - s // 2) * d for s, d in zip(self.shape, self.spacing)]

    def mesh(self) -> list:
        return np.meshgrid(*self.coords(), indexing="ij")

    def to_spectral(self) -> "GridField":
        if self.space == "spectral":
            return self
        v = scipy.fft.ifftshift(self.values, axes=self.axes)
        v = scipy.fft.fftn(v, axes=self.axes, workers=FFT_WORKERS) * self.cell_volume
        return GridField(v, self.box, "spectral", self.components)

    def to_physical(self) -> "GridField":
        if self.space == "physical":
            return self
        v = scipy.fft.ifftn(self.values, axes=self.axes, workers=FFT_WORKERS) / self.cell_volume
        v = scipy.fft.fftshift(v, axes=self.axes)
        return GridField(v, self.box, "physical", self.components)

    def with_values(self, values: np.ndarray, space: str | None = None) -> "GridField":
        return GridField(values, self.box, space or self.space, self.components)


def frequencies(shape, box) -> list:
    """Angular frequencies per axis in FFT order."""
    return [2 * pi * np.fft.fftfreq(s, d=b / s) for s, b in zip(shape, box)]


def wavevectors(field: GridField) -> list:
    return np.meshgrid(*frequencies(field.shape, field.box), indexing="ij")


def xi_norm(field: GridField) -> np.ndarray:
    return np.sqrt(sum(k * k for k in wavevectors(field)))


def from_function(func, n: int, N: int, L: float) -> GridField:
    """Sample ``func(*x)`` on a centered grid with N points per axis and edge L."""
    shape = (N,) * n
    proto = GridField(np.zeros(shape), (L,) * n)
    return proto.with_values(np.asarray(func(*proto.mesh()), dtype=complex))


def pointwise_magnitude(values: np.ndarray, components: int) -> np.ndarray:
    if components:
        return np.sqrt(np.sum(np.abs(values) ** 2, axis=0))
    return np.abs(values)


def lp_norm(field: GridField, p: float) -> float:
    """Riemann-sum L^p norm; vectors use the pointwise Euclidean magnitude.

    For p = inf this is the grid maximum, a lower bound on the true sup norm.
    """
    f = field.to_physical()
    mag = pointwise_magnitude(f.values, f.components)
    if np.isinf(p):
        return float(mag.max())
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float((np.sum(mag**p) * f.cell_volume) ** (1.0 / p))


def spectral_l2_norm(field: GridField) -> float:
    """(2 pi)^{-n/2} ||phi_hat||_{L^2}, computed from the spectral samples."""
    s = field.to_spectral()
    dxi = np.prod([2 * pi / b for b in s.box])
    mag = pointwise_magnitude(s.values, s.components)
    return float(np.sqrt(np.sum(mag**2) * dxi / (2 * pi) ** s.n))


def multi_indices(n: int, order: int):
    """All alpha in N^n with |alpha| = order, paired with the multinomial j!/alpha!."""
    for alpha in itertools.product(range(order + 1), repeat=n):
        if sum(alpha) == order:
            w = factorial(order)
            for a in alpha:
                w //= factorial(a)
            yield alpha, w


def derivative_magnitude(field: GridField, order: int) -> np.ndarray:
    """Pointwise Frobenius norm of the full derivative tensor of given order.

    |nabla^j phi|^2 = sum_{|alpha|=j} (j!/alpha!) |d^alpha phi|^2, i.e. every
    ordered index tuple counted once.
    """
    if order == 0:
        f = field.to_physical()
        return pointwise_magnitude(f.values, f.components)
    spec = field.to_spectral()
    ks = wavevectors(spec)
    total = np.zeros(spec.shape)
    for alpha, w in multi_indices(spec.n, order):
        mult = np.ones(spec.shape, dtype=complex)
        for k, a in zip(ks, alpha):
            if a:
                mult = mult * (1j * k) ** a
        d = spec.with_values(spec.values * mult).to_physical().values
        total += w * (np.sum(np.abs(d) ** 2, axis=0) if spec.components else np.abs(d) ** 2)
    return np.sqrt(total)


def derivative_norm(field: GridField, order: int, p: float) -> float:
    """|| nabla^order phi ||_{L^p} with the Frobenius pointwise norm."""
    mag = derivative_magnitude(field, order)
    proto = GridField(mag, field.box)
    return lp_norm(proto, p)


def boundary_max(field: GridField) -> float:
    """Largest magnitude on the outer faces of the box, relative to the global max."""
    f = field.to_physical()
    mag = pointwise_magnitude(f.values, f.components)
    peak = mag.max()
    if peak == 0:
        return 0.0
    faces = []
    for ax in range(f.n):
        faces.append(np.take(mag, [0, -1], axis=ax).max())
    return float(max(faces) / peak)


class SpectrumInterpolator:
    """Cubic-spline interpolation of |phi_hat| (or phi_hat) at off-grid frequencies.

    Outside the sampled band the transform is taken to vanish.
    """

    def __init__(self, field: GridField, modulus: bool = True):
        if field.components:
            raise ValueError("interpolation is implemented for scalar fields")
        s = field.to_spectral()
        data = scipy.fft.fftshift(s.values, axes=s.axes)
        self.n = s.n
        self.shape = s.shape
        self.dxi = np.array([2 * pi / b for b in s.box])
        self.modulus = modulus
        if modulus:
            self._coef = [ndimage.spline_filter(np.abs(data), order=3, mode="grid-wrap")]
        else:
            self._coef = [
                ndimage.spline_filter(data.real, order=3, mode="grid-wrap"),
                ndimage.spline_filter(data.imag, order=3, mode="grid-wrap"),
            ]
        self.kmax = np.array([(sz // 2 - 1) * d for sz, d in zip(self.shape, self.dxi)])

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        idx = xi / self.dxi + np.array([sz // 2 for sz in self.shape])
        inside = np.all(np.abs(xi) <= self.kmax, axis=1)
        out = [
            ndimage.map_coordinates(c, idx.T, order=3, mode="grid-wrap", prefilter=False)
            for c in self._coef
        ]
        val = out[0] if self.modulus else out[0] + 1j * out[1]
        return np.where(inside, val, 0.0)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2 * pi ** (n / 2) / gamma(n / 2)


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights for integrals over a ball or shell in R^n."""

    points: np.ndarray  # (K, n)
    weights: np.ndarray  # (K,)
    radii: np.ndarray  # (K,) |points|

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def norm(self, values: np.ndarray, s: float, mask: np.ndarray | None = None) -> float:
        """L^s norm of nonnegative samples (sup over nodes when s = inf)."""
        v = np.abs(values) if mask is None else np.where(mask, np.abs(values), 0.0)
        if np.isinf(s):
            return float(v.max())
        return float(np.dot(self.weights, v**s) ** (1.0 / s))


def radial_nodes(r_lo: float, r_hi: float, panels_per_decade: int = 6, order: int = 10,
                 breaks=()):
    """Composite Gauss-Legendre on geometric panels over [r_lo, r_hi], plus [0, r_lo].

    Every radius in ``breaks`` is a panel edge, so integrals split there exactly.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    pts = sorted({r_lo, r_hi, *[b for b in breaks if r_lo < b < r_hi]})
    edges = [0.0]
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil(np.log10(b / a) * panels_per_decade)))
        edges.extend(np.geomspace(a, b, k + 1)[:-1])
    edges.append(r_hi)
    edges = np.asarray(edges)
    r = (0.5 * np.diff(edges)[:, None] * x + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    wr = (0.5 * np.diff(edges)[:, None] * w).ravel()
    return r, wr


def angular_nodes(n: int, resolution: int = 8):
    """Unit directions and weights summing to |S^{n-1}|."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        th = 2 * pi * (np.arange(4 * resolution) + 0.5) / (4 * resolution)
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(th.size, 2 * pi / th.size)
    if n == 3:
        c, wc = np.polynomial.legendre.leggauss(resolution)
        ph = 2 * pi * (np.arange(2 * resolution) + 0.5) / (2 * resolution)
        C, P = np.meshgrid(c, ph, indexing="ij")
        W = np.repeat(wc[:, None], ph.size, axis=1) * (2 * pi / ph.size)
        s = np.sqrt(1 - C**2)
        dirs = np.stack([s * np.cos(P), s * np.sin(P), C], axis=-1).reshape(-1, 3)
        return dirs, W.ravel()
    raise ValueError(f"angular quadrature implemented for n <= 3, got {n}")


def ball_quadrature(n: int, r_max: float, r_min: float = 1e-4, panels_per_decade: int = 6,
                    order: int = 10, angular: int = 8, breaks=()) -> Quadrature:
    """Product radial x angular rule for int_{|xi| <= r_max} f(xi) dxi."""
    r, wr = radial_nodes(r_min, r_max, panels_per_decade, order, breaks)
    dirs, wa = angular_nodes(n, angular)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    w = (wr[:, None] * r[:, None] ** (n - 1) * wa[None, :]).ravel()
    return Quadrature(pts, w, np.repeat(r, len(dirs)))
