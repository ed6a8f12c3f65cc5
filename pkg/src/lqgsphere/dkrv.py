"""Liouville fields with insertions and the unit-volume Liouville measure."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from . import kernels
from .chaos import Measure, Probe, gmc_measure, normalize, observable_vector
from .ensemble import Ensemble
from .errors import ConfigurationError, GeometryError, NumericError, ParameterError
from .field_core import (BackgroundMeasure, Field, cylinder_spherical_weights, regularized_log_kernel,
                         sample_cylinder_gff, sample_pinned_whole_plane_gff)
from .grids import CylinderGrid, Grid, PlanarGrid, fingerprint, replica_rng

INF = math.inf


def _is_inf(z) -> bool:
    return z is None or (isinstance(z, str) and z == "inf") or (
        isinstance(z, (int, float, complex)) and math.isinf(abs(z)))


@dataclass(frozen=True)
class BoundVerdict:
    status: str
    classic_sum: bool
    all_below_Q: bool
    extended: bool

    def __str__(self):
        return self.status


@dataclass
class LqgParams:
    gamma: float
    insertions: list = dc_field(default_factory=list)

    @property
    def Q(self) -> float:
        return 2 / self.gamma + self.gamma / 2

    @property
    def alphas(self) -> list[float]:
        return [float(a) for _, a in self.insertions]

    @property
    def s(self) -> float:
        v = sum(self.alphas) - 2 * self.Q
        return 0.0 if abs(v) < 1e-12 else v  # gamma = sqrt 2 must give unit weights exactly

    @property
    def a(self) -> float:
        return (2 * self.Q - 3 * self.gamma) / self.gamma

    @property
    def delta_bessel(self) -> float:
        return 4 - 8 / self.gamma ** 2

    @property
    def bound_status(self) -> str:
        return check_bounds(self).status

    def describe(self) -> dict:
        pts = ["inf" if _is_inf(z) else [complex(z).real, complex(z).imag] for z, _ in self.insertions]
        return {"gamma": self.gamma, "Q": self.Q, "s": self.s, "a": self.a,
                "delta_bessel": self.delta_bessel, "insertions": pts, "alphas": self.alphas,
                "bound_status": self.bound_status}


def derive_params(gamma: float, insertions: Sequence[tuple] = ()) -> LqgParams:
    if not 0 < gamma < 2:
        raise ParameterError(f"gamma must lie in (0, 2), got {gamma}")
    ins = [(INF if _is_inf(z) else complex(z), float(a)) for z, a in insertions]
    if sum(_is_inf(z) for z, _ in ins) > 1:
        raise ConfigurationError("at most one insertion may sit at infinity")
    return LqgParams(float(gamma), ins)


def three_point_params(gamma: float, alphas: Sequence[float] | None = None) -> LqgParams:
    """Insertions at ``0, 1, inf`` (all weight ``gamma`` by default)."""
    a = (gamma, gamma, gamma) if alphas is None else tuple(alphas)
    return derive_params(gamma, [(0, a[0]), (1, a[1]), (INF, a[2])])


def check_bounds(params: LqgParams) -> BoundVerdict:
    """Seiberg bounds: classic, extended-only or violated."""
    Q = params.Q
    al = params.alphas
    below = all(a < Q for a in al)
    classic_sum = sum(al) > 2 * Q
    ext_rhs = min([2 / params.gamma] + [Q - a for a in al])
    extended = Q - sum(al) / 2 < ext_rhs
    if classic_sum and below:
        status = "classic-Seiberg"
    elif extended and below:
        status = "extended-only"
    else:
        status = "violated"
    return BoundVerdict(status, classic_sum, below, extended)


# --------------------------------------------------------------------------
# Liouville field
# --------------------------------------------------------------------------

@dataclass
class SingularPart:
    """Deterministic part ``2Q m_rho + sum alpha_i G_rho(., z_i)`` (plus ``-Q t`` on cylinders).

    An insertion at infinity contributes ``alpha (theta_rho - m_rho)``. On
    planar grids the cell containing a finite insertion is evaluated half a
    cell diagonal away from it. On cylinders ``log 1/|z - z_i|`` is replaced by
    its lattice-mode truncation so the insertion matches the sampled field.
    """

    rho: BackgroundMeasure
    params: LqgParams
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def at_points(self, z) -> np.ndarray:
        """Continuum closed form at arbitrary finite points (no regularization)."""
        z = np.asarray(z, dtype=complex)
        rho, Q = self.rho, self.params.Q
        m = rho.log_potential(z)
        out = 2 * Q * m
        for zi, a in self.params.insertions:
            if _is_inf(zi):
                out = out + a * (rho.theta - m)
            else:
                d = np.abs(z - zi)
                out = out + a * (-np.log(d) - m - rho.log_potential(zi) + rho.theta)
        return out

    def evaluate(self, grid: Grid) -> np.ndarray:
        key = fingerprint(grid.describe())
        if key not in self._cache:
            if isinstance(grid, CylinderGrid):
                self._cache[key] = self._cylinder(grid)
            else:
                self._cache[key] = self._planar(grid)
        return self._cache[key]

    def _planar(self, g: PlanarGrid) -> np.ndarray:
        z = g.centers.copy()
        half = 0.5 * g.cell_size * (1 + 1j)
        for zi, _ in self.params.insertions:
            if _is_inf(zi):
                continue
            r, c = g.cell_index(zi)
            if 0 <= r < g.resolution and 0 <= c < g.resolution:
                z[r, c] = zi + half
        out = self.at_points(z)
        return np.where(g.mask, out, 0.0)

    def _cylinder(self, g: CylinderGrid) -> np.ndarray:
        rho, Q = self.rho, self.params.Q
        z = g.centers
        m = rho.log_potential(z)
        out = 2 * Q * m - Q * g.t[:, None]
        for zi, a in self.params.insertions:
            if _is_inf(zi):
                out = out + a * (rho.theta - m)
            else:
                lk = regularized_log_kernel(g, zi)
                out = out + a * (lk - m - rho.log_potential(zi) + rho.theta)
        return out


def sample_gaussian_part(rho: BackgroundMeasure, grid: Grid, seed) -> Field:
    """Whole-plane GFF pinned by ``rho`` on either grid type."""
    if isinstance(grid, PlanarGrid):
        return sample_pinned_whole_plane_gff(grid, rho, seed)
    fld = sample_cylinder_gff(grid, seed, "circle-mean-zero")
    if rho.kind == "circle":
        return fld
    if rho.kind == "spherical":
        w = cylinder_spherical_weights(grid)
        shift = float((fld.values.mean(axis=1) * w).sum())
        return Field(grid, fld.values - shift, "spherical-mean-zero")
    dens = rho.density(grid.centers) * np.exp(-2 * grid.t)[:, None]
    shift = float((fld.values * dens).sum() / dens.sum())
    return Field(grid, fld.values - shift, "custom-mean-zero")


def assemble_liouville_field(rho: BackgroundMeasure, params: LqgParams, grid: Grid, seed):
    """Return ``(gaussian_field, singular_part)``; the Liouville field is their sum."""
    if any(a >= params.Q for a in params.alphas):
        raise ParameterError("every insertion weight must be below Q")
    return sample_gaussian_part(rho, grid, seed), SingularPart(rho, params)


# --------------------------------------------------------------------------
# unit-volume measure
# --------------------------------------------------------------------------

@dataclass
class WeightedMeasureSample:
    measure: Measure
    weight: float
    field_shift: float
    seed: int
    total: float


def unit_volume_draw(rho, params, grid, singular, seed, weight_exponent=None) -> WeightedMeasureSample:
    h = sample_gaussian_part(rho, grid, replica_rng(seed[0], seed[1]) if isinstance(seed, tuple) else seed)
    mu = gmc_measure(h, params.gamma, singular)
    total = mu.total
    p = -params.s / params.gamma if weight_exponent is None else weight_exponent
    w = total ** p
    return WeightedMeasureSample(normalize(mu), w, -math.log(total) / params.gamma,
                                 seed[1] if isinstance(seed, tuple) else -1, total)


def dkrv_unit_volume_sample(params: LqgParams, rho: BackgroundMeasure, grid: Grid, n: int, root_seed: int,
                            probes: Sequence[Probe], ess_floor: float | None = None,
                            weight_exponent: float | None = None, keep_measures: bool = False,
                            label: str = "dkrv") -> Ensemble:
    """``n`` weighted draws of the unit-volume measure, reduced to probe masses.

    Weights are ``mu(C)^(-s/gamma)`` with ``mu(C)`` the total over the grid;
    ``weight_exponent`` overrides the exponent (sensitivity checks only).
    """
    if params.bound_status == "violated":
        raise ParameterError("insertions violate the Seiberg bounds")
    if n < 1:
        raise ConfigurationError("n must be positive")
    singular = SingularPart(rho, params)
    obs = np.empty((n, len(probes)))
    weights = np.empty(n)
    shifts = np.empty(n)
    measures = []
    for i in range(n):
        smp = unit_volume_draw(rho, params, grid, singular, (root_seed, i), weight_exponent)
        obs[i] = observable_vector(smp.measure, probes, normalized=False)
        weights[i] = smp.weight
        shifts[i] = smp.field_shift
        if keep_measures:
            measures.append(smp)
    if not np.any(np.isfinite(weights)):
        raise NumericError("all importance weights are non-finite")
    floor = n / 10 if ess_floor is None else ess_floor
    ens = Ensemble(label=label, seeds=np.arange(n), weights=weights, field_shift=shifts,
                   observables=obs, probe_names=[p.name or p.kind for p in probes],
                   manifest={"params": params.describe(), "rho": rho.describe(), "grid": grid.describe(),
                             "probes": [p.describe() for p in probes], "root_seed": int(root_seed)})
    ens.ess_floor = floor
    if ens.ess < floor:
        ens.flags.append("low-ess")
        warnings.warn(f"{label}: ESS {ens.ess:.1f} below floor {floor:.1f}", RuntimeWarning, stacklevel=2)
    ens.samples = measures
    return ens


# --------------------------------------------------------------------------
# Mobius maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Mobius:
    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if abs(self.a * self.d - self.b * self.c) == 0:
            raise ParameterError("degenerate Mobius map (ad - bc = 0)")

    @property
    def is_identity(self) -> bool:
        return self.b == 0 and self.c == 0 and self.a == self.d

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.a * z + self.b) / (self.c * z + self.d)

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def log_abs_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        det = self.a * self.d - self.b * self.c
        return np.log(abs(det)) - 2 * np.log(np.abs(self.c * z + self.d))


@dataclass
class MobiusResult:
    value: object
    clipped_mass: float = 0.0


def _locate(grid: Grid, w: np.ndarray):
    """Row/column of the cell containing each point; ``-1`` when outside."""
    if isinstance(grid, CylinderGrid):
        with np.errstate(divide="ignore"):
            t = -np.log(np.abs(w))
        th = np.mod(-np.angle(w), 2 * np.pi)
        fin = np.isfinite(t)
        r = np.where(fin, np.floor((np.where(fin, t, 0.0) - grid.t_min) / grid.dt), -1).astype(np.int64)
        c = np.mod(np.floor(th / grid.dtheta + 0.5).astype(np.int64), grid.n_theta)
        ok = (r >= 0) & (r < grid.n_t)
    else:
        r, c = grid.cell_index(w)
        ok = (r >= 0) & (r < grid.resolution) & (c >= 0) & (c < grid.resolution)
        ok &= np.where(ok, grid.mask[np.clip(r, 0, grid.resolution - 1), np.clip(c, 0, grid.resolution - 1)], False)
    return r, c, ok


def mobius_apply(obj, psi: Mobius, target_grid: Grid | None = None, tail_budget: float = 1e-3,
                 gamma: float | None = None) -> MobiusResult:
    """Move a surface by ``psi``.

    Measures are pushed forward cell by cell (``psi_* mu``). Fields become
    ``h o phi + Q log|phi'|`` with ``phi = psi^-1`` (bilinear resampling), so
    the chaos of the output approximates the pushed-forward measure. Mass
    landing outside ``target_grid`` is reported as clipped. Fields need
    ``gamma`` for the ``Q log|phi'|`` term.
    """
    if psi.is_identity and (target_grid is None or target_grid == obj.geometry):
        return MobiusResult(obj, 0.0)
    tg = obj.geometry if target_grid is None else target_grid
    if isinstance(obj, Measure):
        src = obj.geometry
        w = psi(src.centers)
        r, c, ok = _locate(tg, w)
        mass = obj.cell_mass
        ok &= src.mask
        out = np.zeros(tg.shape)
        np.add.at(out, (r[ok], c[ok]), mass[ok])
        clipped = float(mass[src.mask & ~ok].sum())
        if clipped > tail_budget * max(obj.total, 1e-300):
            warnings.warn(f"Mobius pushforward clipped mass {clipped:.3g}", RuntimeWarning, stacklevel=2)
        return MobiusResult(Measure.from_masses(tg, out, obj.gamma), clipped)
    if isinstance(obj, Field):
        if isinstance(obj.geometry, CylinderGrid) or isinstance(tg, CylinderGrid):
            raise GeometryError("field resampling is implemented for planar fields")
        if gamma is None:
            raise ConfigurationError("transforming a field needs gamma")
        phi = psi.inverse()
        wz = tg.centers
        z = phi(wz)
        g = obj.geometry
        a = g.cell_size
        col = (z.real + g.domain_radius) / a - 0.5
        row = (z.imag + g.domain_radius) / a - 0.5
        inside = np.abs(z) < g.domain_radius
        Q = 2 / gamma + gamma / 2
        vals = kernels.bilinear(obj.values, np.nan_to_num(row), np.nan_to_num(col), False)
        vals = vals + Q * phi.log_abs_derivative(wz)
        vals = np.where(inside & tg.mask, vals, 0.0)
        return MobiusResult(Field(tg, vals, "modulo-constant"), 0.0)
    raise ConfigurationError("mobius_apply expects a Field or a Measure")


def background_independence_test(params: LqgParams, grid: Grid, n: int, root_seed: int,
                                 probes: Sequence[Probe], alpha: float = 0.01, n_boot: int = 1000,
                                 rho_a: BackgroundMeasure | None = None, rho_b: BackgroundMeasure | None = None,
                                 weight_exponent_b: float | None = None, ess_min: float = 100.0):
    """Compare unit-volume ensembles pinned by two background measures."""
    from .equivalence import weighted_two_sample_test

    ra = rho_a or BackgroundMeasure.spherical()
    rb = rho_b or BackgroundMeasure.circle()
    ea = dkrv_unit_volume_sample(params, ra, grid, n, root_seed, probes, label=f"dkrv-{ra.kind}")
    eb = dkrv_unit_volume_sample(params, rb, grid, n, root_seed + 1_000_003, probes, label=f"dkrv-{rb.kind}",
                                 weight_exponent=weight_exponent_b)
    return weighted_two_sample_test(ea, eb, alpha=alpha, n_boot=n_boot, seed=root_seed, ess_min=ess_min)
