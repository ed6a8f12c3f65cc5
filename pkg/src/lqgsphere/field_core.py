"""Lattice Gaussian free fields on disks and cylinders.

Covariances follow the ``-Laplacian G = 2 pi delta`` convention, so the
continuum kernel is ``-log|x - y|`` plus a harmonic correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve
import scipy.sparse as sp
from scipy.fft import irfft
from scipy.linalg import cholesky_banded
from scipy.linalg.lapack import dtbtrs

from . import kernels
from .errors import ConfigurationError, GeometryError, SingularityError
from .grids import CylinderGrid, Grid, PlanarGrid, as_rng

PINNINGS = ("zero-boundary", "circle-mean-zero", "spherical-mean-zero", "modulo-constant",
            "angular", "custom-mean-zero")


@dataclass
class Field:
    """Real samples on every cell of a grid (zero outside the disk mask)."""

    geometry: Grid
    values: np.ndarray
    pinning: str = "zero-boundary"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.geometry.shape:
            raise GeometryError(f"values shape {self.values.shape} != grid shape {self.geometry.shape}")
        if self.pinning not in PINNINGS:
            raise ConfigurationError(f"unknown pinning {self.pinning!r}")

    def __add__(self, other):
        if isinstance(other, Field):
            return Field(self.geometry, self.values + other.values, self.pinning)
        return Field(self.geometry, self.values + other, "modulo-constant")


# --------------------------------------------------------------------------
# background measures and Green's functions
# --------------------------------------------------------------------------

@dataclass
class BackgroundMeasure:
    """Unit-mass pinning measure ``rho`` with its log-potential and ``theta``.

    ``log_potential(z)`` is ``m_rho(log 1/|z - .|)``. Closed forms are used for
    the spherical measure and the unit circle; custom densities go through a
    midpoint quadrature with ``nodes**2`` points on ``[-extent, extent]^2``.
    """

    kind: str
    density: Callable | None = None
    extent: float = 8.0
    nodes: int = 400
    _quad: tuple | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("spherical", "circle", "custom"):
            raise ConfigurationError(f"unknown background measure {self.kind!r}")
        if self.kind == "custom" and self.density is None:
            raise ConfigurationError("custom background measure needs a density")

    @classmethod
    def spherical(cls):
        return cls("spherical", density=spherical_density)

    @classmethod
    def circle(cls):
        return cls("circle")

    def _quadrature(self):
        if self._quad is None:
            h = 2 * self.extent / self.nodes
            ax = -self.extent + h * (np.arange(self.nodes) + 0.5)
            z = (ax[None, :] + 1j * ax[:, None]).ravel()
            w = self.density(z) * h * h
            w = w / w.sum()
            self._quad = (z, w, h)
        return self._quad

    def log_potential(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "spherical":
            return -0.5 * np.log1p(np.abs(z) ** 2)
        if self.kind == "circle":
            return -np.log(np.maximum(np.abs(z), 1.0))
        nodes, w, h = self._quadrature()
        flat = z.ravel()
        out = np.empty(flat.shape)
        for i in range(0, flat.size, 256):
            d = np.abs(flat[i:i + 256, None] - nodes[None, :])
            d = np.maximum(d, 0.5 * h)
            out[i:i + 256] = -(np.log(d) * w[None, :]).sum(axis=1)
        return out.reshape(z.shape)

    @property
    def theta(self) -> float:
        """``-int int rho(z) log|z-w| rho(w)``."""
        if self.kind == "spherical":
            return -0.5
        if self.kind == "circle":
            return 0.0
        _, w, h = self._quadrature()
        n = self.nodes
        # m on the quadrature grid is a convolution with the clamped log kernel
        off = h * np.arange(-(n - 1), n)
        r = np.maximum(np.hypot(off[None, :], off[:, None]), 0.5 * h)
        m = fftconvolve(w.reshape(n, n), -np.log(r), mode="valid")
        return float((m.ravel() * w).sum())

    def average(self, fld: Field) -> float:
        """``(h, rho)`` for a planar field, renormalizing rho to the domain."""
        g = fld.geometry
        if not isinstance(g, PlanarGrid):
            raise GeometryError("average() needs a planar field; use cylinder_average for cylinders")
        if self.kind == "circle":
            if g.domain_radius <= 1.0 + 2 * g.cell_size:
                raise ConfigurationError("unit circle is not inside the domain")
            return circle_average(fld, 0.0, 1.0)
        dens = self.density(g.centers) * g.mask
        captured = dens.sum() * g.cell_area
        if captured < 0.9:
            raise ConfigurationError(
                f"background measure has only {captured:.3f} of its mass inside the domain")
        return float((fld.values * dens).sum() / dens.sum())

    def describe(self) -> dict:
        return {"kind": self.kind, "theta": self.theta}


def spherical_density(z):
    """Normalized spherical area density ``pi^-1 (1 + |z|^2)^-2``."""
    return 1.0 / (math.pi * (1.0 + np.abs(np.asarray(z)) ** 2) ** 2)


def green_function(rho: BackgroundMeasure, x, y):
    """Whole-plane Green's function pinned by ``rho``.

    ``G(x, y) = log 1/|x-y| - m(x) - m(y) + theta`` with
    ``m = m_rho(log 1/|. - w|)``; it integrates to zero against ``rho``.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d = np.abs(x - y)
    if np.any(d == 0):
        raise SingularityError("Green's function is singular on the diagonal")
    # the sum m(x) + m(y) is commutative, so G(x, y) == G(y, x) bit for bit
    return -np.log(d) - (rho.log_potential(x) + rho.log_potential(y)) + rho.theta


def green_at_infinity(rho: BackgroundMeasure, z):
    """``lim_{w->inf} G_rho(z, w) = theta - m_rho(z)`` (finite since ``m_rho(w) ~ -log|w|``)."""
    return rho.theta - rho.log_potential(z)


def dirichlet_green_disk(x, y, radius: float = 1.0):
    """Continuum Dirichlet Green's function of the disk of given radius."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return -np.log(np.abs(x - y)) + np.log(np.abs(radius ** 2 - x * np.conj(y)) / radius)


# --------------------------------------------------------------------------
# planar Dirichlet GFF
# --------------------------------------------------------------------------

class DirichletSampler:
    """Discrete GFF on the interior cells of a ``PlanarGrid``.

    Precision is the graph Laplacian over ``2 pi`` (zero-boundary outside the
    mask), factorized once as a banded Cholesky ``P = U^T U``; a sample is
    ``U^-1 z`` for standard normal ``z``.
    """

    def __init__(self, grid: PlanarGrid):
        self.grid = grid
        mask = grid.mask
        self.flat_index = np.flatnonzero(mask.ravel())
        n = self.flat_index.size
        pos = -np.ones(mask.size, dtype=np.int64)
        pos[self.flat_index] = np.arange(n)
        pos = pos.reshape(mask.shape)
        rows, cols = [], []
        right = mask[:, :-1] & mask[:, 1:]
        rows.append(pos[:, :-1][right])
        cols.append(pos[:, 1:][right])
        up = mask[:-1, :] & mask[1:, :]
        rows.append(pos[:-1, :][up])
        cols.append(pos[1:, :][up])
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        self.bandwidth = int((j - i).max())
        u = self.bandwidth
        ab = np.zeros((u + 1, n))
        ab[u, :] = 4.0 / (2 * math.pi)
        ab[u + i - j, j] = -1.0 / (2 * math.pi)
        self.upper = cholesky_banded(ab, lower=False)
        self.n = n

    def precision(self) -> sp.csr_matrix:
        return _laplacian(self.grid.mask) / (2 * math.pi)

    def sample_flat(self, rng, size: int) -> np.ndarray:
        z = rng.standard_normal((self.n, size))
        x, info = dtbtrs(self.upper, z, uplo="U", trans="N")
        if info != 0:
            raise ArithmeticError(f"dtbtrs failed with info={info}")
        return x.T

    def sample(self, rng, size: int) -> np.ndarray:
        """``size`` samples as an array of shape ``(size, N, N)``."""
        flat = self.sample_flat(rng, size)
        out = np.zeros((size, self.grid.resolution ** 2))
        out[:, self.flat_index] = flat
        return out.reshape((size,) + self.grid.shape)

    def exact_covariance(self, probes: np.ndarray) -> np.ndarray:
        """Lattice covariance ``W P^-1 W^T`` for rows of probe weights over all cells."""
        w = probes.reshape(probes.shape[0], -1)[:, self.flat_index].T
        y, _ = dtbtrs(self.upper, w, uplo="U", trans="T")
        return y.T @ y


def _laplacian(mask: np.ndarray) -> sp.csr_matrix:
    idx = np.flatnonzero(mask.ravel())
    n = idx.size
    pos = -np.ones(mask.size, dtype=np.int64)
    pos[idx] = np.arange(n)
    pos = pos.reshape(mask.shape)
    right = mask[:, :-1] & mask[:, 1:]
    up = mask[:-1, :] & mask[1:, :]
    i = np.concatenate([pos[:, :-1][right], pos[:-1, :][up]])
    j = np.concatenate([pos[:, 1:][right], pos[1:, :][up]])
    off = sp.coo_matrix((-np.ones(i.size), (i, j)), shape=(n, n))
    return (off + off.T + 4.0 * sp.identity(n)).tocsr()


@lru_cache(maxsize=4)
def dirichlet_sampler(grid: PlanarGrid) -> DirichletSampler:
    return DirichletSampler(grid)


def sample_dirichlet_gff(grid: PlanarGrid, seed) -> Field:
    """One zero-boundary GFF sample on the disk inscribed in ``grid``."""
    if not isinstance(grid, PlanarGrid):
        raise ConfigurationError("sample_dirichlet_gff needs a PlanarGrid")
    values = dirichlet_sampler(grid).sample(as_rng(seed), 1)[0]
    return Field(grid, values, "zero-boundary")


def sample_dirichlet_batch(grid: PlanarGrid, n: int, seed) -> np.ndarray:
    return dirichlet_sampler(grid).sample(as_rng(seed), n)


def sample_pinned_whole_plane_gff(grid: PlanarGrid, rho: BackgroundMeasure, seed) -> Field:
    """Large-domain Dirichlet sample recentered so that ``(h, rho) = 0``."""
    fld = sample_dirichlet_gff(grid, seed)
    c = rho.average(fld)
    values = (fld.values - c) * grid.mask
    pin = {"spherical": "spherical-mean-zero", "circle": "circle-mean-zero"}.get(rho.kind, "custom-mean-zero")
    return Field(grid, values, pin)


# --------------------------------------------------------------------------
# circle averages
# --------------------------------------------------------------------------

def circle_points(grid, radius: float) -> int:
    return max(64, int(math.ceil(2 * math.pi * radius / grid.cell_size)))


def circle_average(fld: Field, center, radius: float) -> float:
    """Mean of bilinearly interpolated values over equispaced circle points."""
    g = fld.geometry
    return float(circle_average_values(fld.values, g, center, radius))


def circle_average_values(values: np.ndarray, g: Grid, center, radius: float):
    """Vectorized over leading axes of ``values`` (shape ``(..., *g.shape)``)."""
    center = complex(center)
    if isinstance(g, CylinderGrid):
        if center != 0:
            raise GeometryError("cylinder circle averages are only defined around the origin")
        if radius <= 0:
            raise GeometryError("radius must be positive")
        t = -math.log(radius)
        r = (t - g.t_min) / g.dt - 0.5
        if not 0 <= r <= g.n_t - 1:
            raise GeometryError("circle lies outside the cylinder window")
        means = values.mean(axis=-1)
        r0 = min(int(math.floor(r)), g.n_t - 2)
        f = r - r0
        return (1 - f) * means[..., r0] + f * means[..., r0 + 1]
    if radius < 2 * g.cell_size:
        raise GeometryError("radius must be at least two cell sizes")
    if abs(center) + radius > g.domain_radius:
        raise GeometryError("circle exits the domain")
    m = circle_points(g, radius)
    phi = 2 * math.pi * np.arange(m) / m
    pts = center + radius * np.exp(1j * phi)
    a = g.cell_size
    col = (pts.real + g.domain_radius) / a - 0.5
    row = (pts.imag + g.domain_radius) / a - 0.5
    if values.ndim == 2:
        return kernels.bilinear(values, row, col, False).mean()
    flat = values.reshape((-1,) + g.shape)
    out = np.array([kernels.bilinear(v, row, col, False).mean() for v in flat])
    return out.reshape(values.shape[:-2])


def circle_average_weights(g: PlanarGrid, center, radius: float) -> np.ndarray:
    """Linear functional (per-cell weights) equal to ``circle_average``."""
    eye = np.zeros(g.shape)
    m = circle_points(g, radius)
    phi = 2 * math.pi * np.arange(m) / m
    pts = complex(center) + radius * np.exp(1j * phi)
    a = g.cell_size
    col = (pts.real + g.domain_radius) / a - 0.5
    row = (pts.imag + g.domain_radius) / a - 0.5
    r0 = np.clip(np.floor(row).astype(int), 0, g.resolution - 2)
    c0 = np.clip(np.floor(col).astype(int), 0, g.resolution - 2)
    fr = row - r0
    fc = col - c0
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        np.add.at(eye, (r0 + dr, c0 + dc), w / m)
    return eye


# --------------------------------------------------------------------------
# cylinder fields
# --------------------------------------------------------------------------

def angular_variance(grid: CylinderGrid) -> float:
    """Pointwise variance of the mode-truncated angular field: ``H_K``."""
    k = np.arange(1, grid.n_modes + 1)
    return float((1.0 / k).sum())


def _angular_modes(grid: CylinderGrid, rng, n: int, dirichlet: bool) -> np.ndarray:
    """Angular field samples of shape ``(n, n_t, n_theta)``.

    Each real mode coefficient of frequency ``k`` is a Gauss-Markov process in
    ``t`` with covariance ``exp(-k|t-s|)/k`` (stationary) or, with
    ``dirichlet``, the same process pinned to zero at ``t = t_min``.
    """
    K = grid.n_modes
    k = np.arange(1, K + 1, dtype=np.float64)
    rho = np.exp(-k * grid.dt)
    sd = np.sqrt((1 - rho ** 2) / k)
    if dirichlet:
        sd0 = np.sqrt((1 - np.exp(-k * grid.dt)) / k)  # half-step from t_min
    else:
        sd0 = np.sqrt(1.0 / k)
    z = rng.standard_normal((n, 2, K, grid.n_t))
    innov = z * sd[None, None, :, None]
    innov[..., 0] = z[..., 0] * sd0[None, None, :]
    rows = innov.reshape(-1, grid.n_t)
    rho_rows = np.broadcast_to(rho[None, None, :], (n, 2, K)).reshape(-1)
    coef = kernels.ar1_filter(rows, rho_rows, np.zeros(rows.shape[0])).reshape(n, 2, K, grid.n_t)
    c = np.zeros((n, grid.n_t, grid.n_theta // 2 + 1), dtype=complex)
    half = grid.n_theta / 2
    c[:, :, 1:K + 1] = half * (coef[:, 0] - 1j * coef[:, 1]).transpose(0, 2, 1)
    return irfft(c, n=grid.n_theta, axis=-1)


def _brownian_at(t: np.ndarray, origin: float, rng, n: int) -> np.ndarray:
    """Two-sided standard Brownian motion with ``W(origin) = 0`` at points ``t``."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros((n, t.size))
    fwd = np.nonzero(t >= origin)[0]
    bwd = np.nonzero(t < origin)[0][::-1]
    for idx in (fwd, bwd):
        if idx.size == 0:
            continue
        steps = np.abs(np.diff(np.concatenate([[origin], t[idx]])))
        inc = rng.standard_normal((n, idx.size)) * np.sqrt(steps)
        out[:, idx] = np.cumsum(inc, axis=1)
    return out


def sample_angular_gff(grid: CylinderGrid, seed) -> Field:
    """Lateral (mean zero on every circle) part of a whole-plane GFF."""
    values = _angular_modes(grid, as_rng(seed), 1, dirichlet=False)[0]
    return Field(grid, values, "angular")


def sample_cylinder_batch(grid: CylinderGrid, n: int, seed, pinning: str = "circle-mean-zero"):
    """Cylinder GFF samples of shape ``(n, n_t, n_theta)``.

    ``circle-mean-zero``: whole-plane field with unit-circle average zero
    (radial part a two-sided Brownian motion from ``t = 0``).
    ``zero-boundary``: pull-back of the Dirichlet GFF of a disk, zero at
    ``t = t_min`` (radial part a Brownian motion from ``t_min``).
    """
    rng = as_rng(seed)
    if pinning == "circle-mean-zero":
        radial = _brownian_at(grid.t, 0.0, rng, n)
        ang = _angular_modes(grid, rng, n, dirichlet=False)
    elif pinning == "zero-boundary":
        radial = _brownian_at(grid.t, grid.t_min, rng, n)
        ang = _angular_modes(grid, rng, n, dirichlet=True)
    else:
        raise ConfigurationError(f"unsupported cylinder pinning {pinning!r}")
    return radial[:, :, None] + ang


def sample_cylinder_gff(grid: CylinderGrid, seed, pinning: str = "circle-mean-zero") -> Field:
    return Field(grid, sample_cylinder_batch(grid, 1, seed, pinning)[0], pinning)


def cylinder_spherical_weights(grid: CylinderGrid) -> np.ndarray:
    """Per-row mass of the spherical measure, ``dt / (2 cosh^2 t)``, normalized."""
    w = 1.0 / (2.0 * np.cosh(grid.t) ** 2)
    return w / w.sum()


def regularized_log_kernel(grid: CylinderGrid, w) -> np.ndarray:
    """``log 1/|z - w|`` on cylinder cells, truncated to the lattice modes.

    Uses ``min(t, t_w) + sum_{k<=K} exp(-k|t - t_w|) cos(k(theta - theta_w)) / k``;
    ``w = 0`` gives ``t`` exactly. At ``z = w`` it returns the lattice
    self-covariance instead of infinity.
    """
    t = grid.t[:, None]
    if w == 0:
        return np.broadcast_to(t, grid.shape).copy()
    w = complex(w)
    tw = -math.log(abs(w))
    thw = -math.atan2(w.imag, w.real)
    th = grid.theta[None, :]
    out = np.minimum(t, tw) + np.zeros(grid.shape)
    for k in range(1, grid.n_modes + 1):
        out += np.exp(-k * np.abs(t - tw)) * np.cos(k * (th - thw)) / k
    return out


# --------------------------------------------------------------------------
# radial / angular decomposition
# --------------------------------------------------------------------------

@dataclass
class RadialAngularSplit:
    t: np.ndarray
    radial: np.ndarray
    angular: Field

    def reconstruct(self) -> np.ndarray:
        return self.radial[:, None] + self.angular.values


def radial_angular_split(fld: Field) -> RadialAngularSplit:
    """Split a cylinder field into circle means and the mean-zero remainder."""
    g = fld.geometry
    if not isinstance(g, CylinderGrid):
        raise GeometryError("radial_angular_split needs a cylinder field")
    radial = fld.values.mean(axis=1)
    ang = fld.values - radial[:, None]
    return RadialAngularSplit(g.t.copy(), radial, Field(g, ang, "angular"))


def pullback_to_cylinder(fld: Field, cyl: CylinderGrid) -> Field:
    """Resample a planar field at the images ``exp(-(t + i theta))``."""
    g = fld.geometry
    z = cyl.centers
    if np.abs(z).max() > g.domain_radius - g.cell_size:
        raise GeometryError("cylinder window reaches outside the planar domain")
    a = g.cell_size
    col = (z.real + g.domain_radius) / a - 0.5
    row = (z.imag + g.domain_radius) / a - 0.5
    return Field(cyl, kernels.bilinear(fld.values, row, col, False), "modulo-constant")
