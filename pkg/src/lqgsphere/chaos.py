"""Gaussian multiplicative chaos on lattice fields."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (ConfigurationError, DegenerateMeasureError, NumericError, ParameterError,
                     TruncationError)
from .field_core import Field, _brownian_at, angular_variance
from .grids import CylinderGrid, Grid, PlanarGrid, as_rng

# Lattice GFF point variance is log(R/a) + KAPPA + o(1) for the -Lap G = 2 pi delta
# normalization, so a cell behaves like a circle average at radius exp(-KAPPA) * a.
KAPPA = float(np.euler_gamma + 1.5 * math.log(2.0))
LATTICE_SCALE = math.exp(-KAPPA)


def regularization_scale(grid: Grid, calibration: float | None = None) -> float:
    """Effective regularization radius ``s_cell`` of a lattice cell.

    Planar grids: ``c * cell_size``. Cylinder grids: ``c * exp(-H_K)``, a
    multiplier of ``|z|`` since cylinder cells have planar size ``~|z| dtheta``.
    """
    if isinstance(grid, CylinderGrid):
        c = 1.0 if calibration is None else calibration
        return c * math.exp(-angular_variance(grid))
    c = LATTICE_SCALE if calibration is None else calibration
    return c * grid.cell_size


@dataclass(frozen=True)
class Measure:
    """Cell masses on a grid; ``log_mass`` is kept for stable renormalization."""

    geometry: Grid
    log_mass: np.ndarray
    gamma: float = float("nan")

    @property
    def cell_mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @property
    def log_total(self) -> float:
        return float(logsumexp(self.log_mass))

    @property
    def total(self) -> float:
        return float(np.exp(self.log_total))

    def mass(self, cells: np.ndarray) -> float:
        """Mass of a boolean cell set."""
        return float(self.cell_mass[cells].sum())

    @classmethod
    def from_masses(cls, geometry: Grid, masses, gamma: float = float("nan")) -> "Measure":
        masses = np.asarray(masses, dtype=np.float64)
        if np.any(masses < 0):
            raise NumericError("negative cell mass")
        with np.errstate(divide="ignore"):
            return cls(geometry, np.log(masses), gamma)


def _singular_values(singular_part, grid):
    if singular_part is None:
        return 0.0
    if hasattr(singular_part, "evaluate"):
        return singular_part.evaluate(grid)
    return np.asarray(singular_part, dtype=np.float64)


def gmc_measure(fld: Field, gamma: float, singular_part=None, calibration: float | None = None) -> Measure:
    """``cell_area * s_cell^(gamma^2/2) * exp(gamma * (h + singular))`` per cell.

    ``singular_part`` is ``None``, a per-cell array, or an object with an
    ``evaluate(grid)`` method. Cells outside the disk mask get zero mass.
    """
    if not 0 < gamma < 2:
        raise ParameterError(f"gamma must lie in (0, 2), got {gamma}")
    g = fld.geometry
    s = regularization_scale(g, calibration)
    h = fld.values + _singular_values(singular_part, g)
    if not np.all(np.isfinite(h[g.mask])):
        raise NumericError("non-finite field value inside the domain")
    logm = math.log(g.cell_area) + 0.5 * gamma ** 2 * math.log(s) + gamma * h
    if isinstance(g, PlanarGrid):
        logm = np.where(g.mask, logm, -np.inf)
    return Measure(g, np.asarray(logm, dtype=np.float64), gamma)


def normalize(measure: Measure) -> Measure:
    lt = measure.log_total
    if not np.isfinite(lt):
        raise DegenerateMeasureError("cannot normalize a measure with zero or infinite total")
    return Measure(measure.geometry, measure.log_mass - lt, measure.gamma)


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Probe:
    """A region of the plane; cells are included by their center.

    kinds: ``disk`` (center, radius), ``annulus`` (center, r_in, r_out),
    ``halfplane`` (angle, offset: points with Re(z e^{-i angle}) > offset),
    ``sector`` (angle0, angle1), ``all``.
    """

    kind: str
    params: tuple = ()
    name: str = ""

    def contains(self, z: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "all":
            return np.ones(z.shape, dtype=bool)
        if self.kind == "disk":
            return np.abs(z - p[0]) < p[1]
        if self.kind == "annulus":
            d = np.abs(z - p[0])
            return (d >= p[1]) & (d < p[2])
        if self.kind == "halfplane":
            return (z * np.exp(-1j * p[0])).real > p[1]
        if self.kind == "sector":
            ang = np.mod(np.angle(z) - p[0], 2 * np.pi)
            return ang < np.mod(p[1] - p[0], 2 * np.pi)
        raise ConfigurationError(f"unknown probe kind {self.kind!r}")

    def cells(self, grid: Grid) -> np.ndarray:
        sel = self.contains(grid.centers) & grid.mask
        if not sel.any():
            raise ConfigurationError(f"probe {self.name or self.kind} contains no cells")
        return sel

    def describe(self) -> dict:
        return {"kind": self.kind, "params": [complex(x) if isinstance(x, complex) else x for x in self.params],
                "name": self.name}


def probe_from_dict(d: dict) -> Probe:
    params = tuple(complex(*x) if isinstance(x, (list, tuple)) else x for x in d.get("params", ()))
    return Probe(d["kind"], params, d.get("name", ""))


def default_probes() -> list[Probe]:
    """Probe set for sphere comparisons, separating the three marked points."""
    return [
        Probe("disk", (0j, 1.0), "unit_disk"),
        Probe("annulus", (0j, 1.0, 2.0), "annulus_1_2"),
        Probe("halfplane", (0.0, 0.5), "re_gt_half"),
        Probe("disk", (1 + 0j, 0.25), "disk_1_quarter"),
    ]


def observable_vector(measure: Measure, probes: Sequence[Probe], normalized: bool = True) -> np.ndarray:
    """``(mu_bar(probe_1), ..., mu_bar(probe_m))``."""
    m = normalize(measure) if normalized else measure
    mass = m.cell_mass
    return np.array([mass[p.cells(m.geometry)].sum() for p in probes])


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------

@dataclass
class MomentEstimate:
    q: float
    value: float
    stderr: float
    admissible: bool
    threshold: float


def moment_threshold(gamma: float, alphas: Sequence[float] = ()) -> float:
    """Upper end of the finite-moment range: ``4/gamma^2 ^ min (2/gamma)(Q - alpha_i)``."""
    Q = 2 / gamma + gamma / 2
    bound = 4 / gamma ** 2
    for a in alphas:
        bound = min(bound, 2 / gamma * (Q - a))
    return bound


def moment_estimate(sampler: Callable[[int], float | Measure], q: float, n: int, gamma: float | None = None,
                    alphas: Sequence[float] = (), totals: np.ndarray | None = None) -> MomentEstimate:
    """Monte Carlo ``E[mu(C)^q]`` with a jackknife standard error.

    ``sampler(i)`` returns replica ``i``'s measure or total; pass ``totals``
    to reuse draws. Warns when ``q`` lies outside the finite-moment range.
    """
    if n < 100:
        raise ConfigurationError("moment_estimate needs n >= 100")
    thr = moment_threshold(gamma, alphas) if gamma is not None else math.inf
    admissible = q < thr
    if not admissible:
        warnings.warn(f"q={q} is outside the finite-moment range (q < {thr:.4g}); estimate is unreliable",
                      RuntimeWarning, stacklevel=2)
    if q == 0:
        return MomentEstimate(q, 1.0, 0.0, admissible, thr)
    if totals is None:
        out = []
        for i in range(n):
            v = sampler(i)
            out.append(v.total if isinstance(v, Measure) else float(v))
        totals = np.asarray(out)
    x = np.asarray(totals, dtype=np.float64)[:n] ** q
    loo = (x.sum() - x) / (n - 1)
    se = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return MomentEstimate(q, float(x.mean()), se, admissible, thr)


# --------------------------------------------------------------------------
# far-field truncation
# --------------------------------------------------------------------------

@dataclass
class TailEstimate:
    truncation_radius: float
    annulus_masses: np.ndarray
    tail_bound: float
    decay_rate: float = float("nan")


def tail_truncation(gamma: float, insertions: Sequence[tuple], target_tail_mass: float, *,
                    n_pilot: int = 200, seed=0, min_radius: float = math.e ** 2,
                    max_radius: float = math.e ** 40, pilot_half_width: float = 30.0) -> TailEstimate:
    """Radius ``R`` so that the expected normalized mass outside ``1/R < |z| < R`` is small.

    In the log-polar chart the radial part of the field is a two-sided Brownian
    motion with drift ``-(Q - alpha_0)`` towards the origin and
    ``-(Q - alpha_inf)`` towards infinity. Pilot paths give mean normalized
    masses of unit-width annuli, fitted by ``b1 exp(-n b2)`` and summed
    geometrically beyond ``log R``.
    """
    if not 0 < gamma < 2:
        raise ParameterError(f"gamma must lie in (0, 2), got {gamma}")
    Q = 2 / gamma + gamma / 2
    a0 = ainf = 0.0
    for point, alpha in insertions:
        if point is None or (isinstance(point, float) and math.isinf(point)) or point == "inf":
            ainf = alpha
        elif abs(complex(point)) == 0:
            a0 = alpha
    if not ainf < Q or not a0 < Q:
        raise ParameterError("insertions at 0 and infinity need alpha < Q")
    rng = as_rng(seed)
    dt = 0.05
    t = np.arange(-pilot_half_width, pilot_half_width + dt / 2, dt)
    x = _brownian_at(t, 0.0, rng, n_pilot)
    x += np.where(t > 0, -(Q - a0) * t, (Q - ainf) * t)[None, :]
    w = np.exp(gamma * (x - x.max(axis=1, keepdims=True)))
    w /= w.sum(axis=1, keepdims=True)
    n_ann = int(pilot_half_width)
    r = np.abs(t)
    ann = np.array([w[:, (r >= k) & (r < k + 1)].sum(axis=1).mean() for k in range(n_ann)])
    fit_rng = np.arange(2, n_ann)
    pos = ann[fit_rng] > 1e-300
    slope, icept = np.polyfit(fit_rng[pos], np.log(ann[fit_rng][pos]), 1)
    b2 = max(-slope, 1e-6)
    b1 = math.exp(icept)

    def tail(n):  # mass beyond |t| = n
        return b1 * math.exp(-n * b2) / (1 - math.exp(-b2))

    n = math.ceil(max(math.log(min_radius), 0.0))
    if target_tail_mass >= 1.0:
        return TailEstimate(min_radius, ann, min(1.0, tail(math.log(min_radius))), b2)
    while tail(n) > target_tail_mass:
        n += 1
        if n > math.log(max_radius):
            raise TruncationError(f"tail mass {tail(n - 1):.3g} above target at max radius",
                                  achieved_tail=tail(n - 1), max_radius=max_radius)
    radius = max(math.exp(n), min_radius)
    return TailEstimate(radius, ann, tail(math.log(radius)), b2)
