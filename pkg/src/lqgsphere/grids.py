"""Discrete geometries: a square lattice over a disk and a log-polar cylinder.

The cylinder ``R x [0, 2pi)`` is used as a chart of the punctured plane via
``z = exp(-(t + i theta))``, so ``t -> +inf`` is the origin and ``t -> -inf``
is the point at infinity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PlanarGrid:
    """Square lattice of ``resolution**2`` cells covering ``[-R, R]^2``.

    Only cells whose centers lie strictly inside the disk of radius ``R`` are
    interior; the field is implicitly zero on all other cells.
    """

    resolution: int
    domain_radius: float = 1.0

    def __post_init__(self):
        if int(self.resolution) <= 0:
            raise ConfigurationError(f"resolution must be positive, got {self.resolution}")
        if self.resolution < 16:
            raise ConfigurationError(f"resolution must be >= 16, got {self.resolution}")
        if not self.domain_radius > 0:
            raise ConfigurationError("domain_radius must be positive")

    kind = "planar"

    @property
    def cell_size(self) -> float:
        return 2.0 * self.domain_radius / self.resolution

    @property
    def cell_area(self) -> float:
        return self.cell_size ** 2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.resolution, self.resolution)

    @property
    def axis(self) -> np.ndarray:
        """Cell-center coordinate along either axis."""
        a = self.cell_size
        return -self.domain_radius + a * (np.arange(self.resolution) + 0.5)

    @property
    def centers(self) -> np.ndarray:
        """Complex cell centers, indexed ``[row (y), column (x)]``."""
        ax = self.axis
        return ax[None, :] + 1j * ax[:, None]

    @property
    def mask(self) -> np.ndarray:
        return np.abs(self.centers) < self.domain_radius

    def cell_index(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Row/column of the cell containing each point (may be out of range)."""
        z = np.asarray(z, dtype=complex)
        a = self.cell_size
        col = np.floor((z.real + self.domain_radius) / a).astype(int)
        row = np.floor((z.imag + self.domain_radius) / a).astype(int)
        return row, col

    def describe(self) -> dict:
        return {"kind": "planar", "resolution": int(self.resolution),
                "domain_radius": float(self.domain_radius)}


@dataclass(frozen=True)
class CylinderGrid:
    """Cells on ``[t_min, t_max] x [0, 2pi)`` with periodic angular wrap.

    Row ``j`` has center ``t_min + (j + 1/2) dt``; column ``k`` has center
    ``2 pi k / n_theta`` (so column 0 straddles the positive real axis).
    """

    t_min: float
    t_max: float
    n_t: int
    n_theta: int

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ConfigurationError("cylinder needs t_min < t_max")
        if self.n_theta < 8:
            raise ConfigurationError(f"n_theta must be >= 8, got {self.n_theta}")
        if self.n_t < 1:
            raise ConfigurationError("n_t must be positive")

    kind = "cylinder"

    @classmethod
    def centered(cls, half_width: float, n_theta: int) -> "CylinderGrid":
        """Square cells, one row centered exactly on ``t = 0`` (the unit circle)."""
        dt = 2 * math.pi / n_theta
        m = int(math.ceil(half_width / dt))
        return cls(-(m + 0.5) * dt, (m + 0.5) * dt, 2 * m + 1, n_theta)

    @classmethod
    def half(cls, length: float, n_theta: int) -> "CylinderGrid":
        """Square cells on ``[0, length]``: the pull-back of the unit disk."""
        dt = 2 * math.pi / n_theta
        n = int(math.ceil(length / dt))
        return cls(0.0, n * dt, n, n_theta)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_t

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.n_theta

    @property
    def cell_size(self) -> float:
        return min(self.dt, self.dtheta)

    @property
    def cell_area(self) -> float:
        return self.dt * self.dtheta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_theta)

    @property
    def t(self) -> np.ndarray:
        return self.t_min + self.dt * (np.arange(self.n_t) + 0.5)

    @property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.n_theta)

    @property
    def n_modes(self) -> int:
        """Angular Fourier modes kept (Nyquist excluded)."""
        return self.n_theta // 2 - 1

    @property
    def centers(self) -> np.ndarray:
        """Planar images ``exp(-(t + i theta))`` of the cell centers."""
        return np.exp(-(self.t[:, None] + 1j * self.theta[None, :]))

    @property
    def mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool)

    def row_of(self, t: float) -> int:
        return int(math.floor((t - self.t_min) / self.dt))

    def describe(self) -> dict:
        return {"kind": "cylinder", "t_min": float(self.t_min), "t_max": float(self.t_max),
                "n_t": int(self.n_t), "n_theta": int(self.n_theta)}


Grid = PlanarGrid | CylinderGrid


def grid_from_dict(d: dict) -> Grid:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "planar":
        return PlanarGrid(int(d["resolution"]), float(d["domain_radius"]))
    if kind == "cylinder":
        return CylinderGrid(float(d["t_min"]), float(d["t_max"]), int(d["n_t"]), int(d["n_theta"]))
    raise ConfigurationError(f"unknown grid kind {kind!r}")


def fingerprint(obj) -> str:
    """Short content hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def replica_rng(root_seed: int, index: int) -> np.random.Generator:
    """Stream for replica ``index``: ``SeedSequence(root_seed, spawn_key=(index,))``."""
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=(int(index),)))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class SeedStream:
    """Hands out independent replica generators derived from one root seed."""

    root_seed: int
    next_index: int = field(default=0)

    def spawn(self) -> tuple[int, np.random.Generator]:
        i = self.next_index
        self.next_index += 1
        return i, replica_rng(self.root_seed, i)
