"""Lattice calibration checks against continuum closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import gmc_measure
from .field_core import (Field, circle_average_values, dirichlet_green_disk, dirichlet_sampler)
from .grids import PlanarGrid, as_rng

# Five circles; covariances of circle averages of a harmonic-Green field equal the
# Green's function at the centers whenever the circles are disjoint.
DEFAULT_CIRCLES = [(0j, 0.35)] + [(0.7 * 1j ** k, 0.25) for k in range(4)]


@dataclass
class CalibrationResult:
    name: str
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    tolerance: float
    passed: bool
    extra: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(np.asarray(self.estimate) - np.asarray(self.target))))

    def as_dict(self) -> dict:
        return {"name": self.name, "estimate": np.atleast_1d(self.estimate).tolist(),
                "target": np.atleast_1d(self.target).tolist(), "stderr": np.atleast_1d(self.stderr).tolist(),
                "tolerance": self.tolerance, "max_error": self.max_error, "passed": self.passed, **self.extra}


def _batches(grid: PlanarGrid, draws: int, seed, chunk: int):
    rng = as_rng(seed)
    sampler = dirichlet_sampler(grid)
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        yield sampler.sample(rng, k)
        done += k


def covariance_calibration(grid: PlanarGrid | None = None, draws: int = 2000, seed=0,
                           circles=DEFAULT_CIRCLES, tolerance: float = 0.05) -> CalibrationResult:
    """Empirical covariances of circle averages vs the Dirichlet Green's function at their centers."""
    grid = grid or PlanarGrid(128, 1.0)
    vals = []
    for b in _batches(grid, draws, seed, 100):
        vals.append(np.stack([circle_average_values(b, grid, c, r) for c, r in circles], axis=1))
    X = np.concatenate(vals)
    pairs = [(i, j) for i in range(len(circles)) for j in range(i + 1, len(circles))]
    est = np.array([np.mean(X[:, i] * X[:, j]) for i, j in pairs])
    se = np.array([np.std(X[:, i] * X[:, j], ddof=1) / math.sqrt(draws) for i, j in pairs])
    tgt = np.array([float(dirichlet_green_disk(circles[i][0], circles[j][0], grid.domain_radius)) for i, j in pairs])
    ok = bool(np.max(np.abs(est - tgt)) <= tolerance)
    return CalibrationResult("gff-covariance", est, tgt, se, tolerance, ok, {"pairs": pairs, "draws": draws})


def circle_variance(epsilon: float, draws: int = 2000, seed=0, resolution: int = 256,
                    rel_tolerance: float = 0.05) -> CalibrationResult:
    """``Var[A_eps]`` for the unit-disk zero-boundary field, by scaling.

    The unit disk scaled by ``1/eps`` is sampled and the average over the unit
    circle taken; its variance should be ``log(1/eps)``.
    """
    grid = PlanarGrid(resolution, 1 / epsilon)
    a = np.concatenate([circle_average_values(b, grid, 0, 1.0) for b in _batches(grid, draws, seed, 50)])
    var = float(np.var(a, ddof=1))
    tgt = math.log(1 / epsilon)
    se = var * math.sqrt(2 / (draws - 1))
    return CalibrationResult(f"circle-variance-{epsilon:g}", np.array([var]), np.array([tgt]), np.array([se]),
                             rel_tolerance * tgt, abs(var - tgt) <= rel_tolerance * tgt, {"draws": draws})


def gmc_half_disk_target(gamma: float) -> float:
    """``E mu(D/2) = int_{|z|<1/2} (1 - |z|^2)^(gamma^2/2) dz`` on the unit disk."""
    p = gamma ** 2 / 2
    return math.pi * (1 - 0.75 ** (p + 1)) / (p + 1)


def gmc_expectation(gamma: float = 1.0, n: int = 2000, seed=0, resolution: int = 128,
                    n_se: float = 3.0) -> CalibrationResult:
    grid = PlanarGrid(resolution, 1.0)
    inside = np.abs(grid.centers) < 0.5
    masses = []
    for b in _batches(grid, n, seed, 100):
        for v in b:
            masses.append(gmc_measure(Field(grid, v), gamma).mass(inside))
    m = np.asarray(masses)
    est = float(m.mean())
    se = float(m.std(ddof=1) / math.sqrt(n))
    tgt = gmc_half_disk_target(gamma)
    return CalibrationResult("gmc-expectation", np.array([est]), np.array([tgt]), np.array([se]),
                             n_se * se, abs(est - tgt) <= n_se * se, {"n": n, "gamma": gamma})
