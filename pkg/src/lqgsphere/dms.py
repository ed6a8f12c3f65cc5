"""Unit-area quantum spheres on the cylinder: limiting and Bessel constructions.

Cylinder coordinates ``z = exp(-(t + i theta))``; the marked points ``0`` and
``inf`` sit at ``t = +inf`` and ``t = -inf``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .chaos import Measure, Probe, gmc_measure, normalize, observable_vector
from .ensemble import Ensemble
from .errors import BudgetError, ConfigurationError, DegenerateMeasureError, ParameterError, UnsupportedRegimeError
from .field_core import Field, _angular_modes, _brownian_at
from .grids import CylinderGrid, as_rng, replica_rng


def _q(gamma: float) -> float:
    return 2 / gamma + gamma / 2


@dataclass
class RadialPath:
    t: np.ndarray
    X: np.ndarray
    maximum_location: int
    weight: float = 1.0
    excursion: np.ndarray | None = None
    excursion_time: np.ndarray | None = None


@dataclass
class QuantumPoint:
    row: int
    col: int
    t: float
    theta: float

    @property
    def z(self) -> complex:
        return complex(np.exp(-(self.t + 1j * self.theta)))


@dataclass
class SphereSample:
    field: Field | None
    measure: Measure
    marked_points: list
    embedding: str
    total: float
    attempts: int = 1
    clipped_mass: float = 0.0
    weight: float = 1.0


@dataclass
class RejectionStats:
    attempts: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else float("nan")


# --------------------------------------------------------------------------
# quantum points and re-embedding
# --------------------------------------------------------------------------

def sample_quantum_point(measure: Measure, seed) -> QuantumPoint:
    """Cell drawn proportionally to its mass, jittered uniformly inside the cell."""
    rng = as_rng(seed)
    w = measure.cell_mass.ravel()
    tot = w.sum()
    if not tot > 0 or not np.isfinite(tot):
        raise DegenerateMeasureError("cannot sample a point from a zero measure")
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, w.size - 1)
    while w[idx] == 0:  # only reachable through float ties at the top
        idx -= 1
    g = measure.geometry
    r, c = divmod(idx, g.shape[1])
    ju, jv = rng.random(2) - 0.5
    if isinstance(g, CylinderGrid):
        return QuantumPoint(r, c, float(g.t[r] + ju * g.dt), float(g.theta[c] + jv * g.dtheta))
    z = g.centers[r, c] + g.cell_size * (ju + 1j * jv)
    return QuantumPoint(r, c, float(-math.log(abs(z))), float(-math.atan2(z.imag, z.real)))


def translate_to_window(log_mass: np.ndarray, src: CylinderGrid, row: int, col: int,
                        window: CylinderGrid) -> tuple[np.ndarray, float]:
    """Re-grid so cell ``(row, col)`` lands on the window cell at ``t = 0, theta = 0``.

    This is the Mobius map ``z -> z / w`` with ``w`` the cell center: a shift
    in ``t`` and a rotation in ``theta``. The ``Q log|psi'|`` term is constant
    and drops out after normalization. Returns window log-masses and the
    mass that falls outside the window.
    """
    if not (math.isclose(src.dt, window.dt) and src.n_theta == window.n_theta):
        raise ConfigurationError("source and window cylinders need identical cells")
    center = window.row_of(0.0)
    rolled = np.roll(log_mass, -col, axis=1)
    out = np.full(window.shape, -np.inf)
    lo = row - center
    s0, s1 = max(lo, 0), min(lo + window.n_t, src.n_t)
    if s1 > s0:
        out[s0 - lo:s1 - lo] = rolled[s0:s1]
    m = np.exp(rolled)
    clipped = float(m[:s0].sum() + m[s1:].sum())
    return out, clipped


def recenter_rows(log_mass: np.ndarray, src: CylinderGrid, row: int, window: CylinderGrid):
    """Shift rows so ``row`` sits at ``t = 0`` (no rotation)."""
    return translate_to_window(log_mass, src, row, 0, window)


# --------------------------------------------------------------------------
# limiting procedure
# --------------------------------------------------------------------------

def half_cylinder_length(gamma: float, C: float) -> float:
    """Length of ``[0, L]`` carrying the mass of ``h0 - gamma log|z| - C``."""
    a = _q(gamma) - gamma
    return C / a + 5 * math.sqrt(max(C, 1.0) / a ** 3) + 15 / (gamma * a)


def limiting_grid(gamma: float, C: float, n_theta: int) -> CylinderGrid:
    return CylinderGrid.half(half_cylinder_length(gamma, C), n_theta)


def _limiting_batch(gamma, C, grid: CylinderGrid, rng, n):
    """Cylinder log cell masses of ``h0 - gamma log|z| - C`` for ``n`` draws."""
    a = _q(gamma) - gamma
    radial = _brownian_at(grid.t, 0.0, rng, n) - a * grid.t[None, :] - C
    ang = _angular_modes(grid, rng, n, dirichlet=True)
    h = radial[:, :, None] + ang
    base = math.log(grid.cell_area) + 0.5 * gamma ** 2 * (-float((1.0 / np.arange(1, grid.n_modes + 1)).sum()))
    return base + gamma * h, radial


def sample_limiting_batch(gamma: float, C: float, delta: float, grid: CylinderGrid, n_accept: int, rng,
                          batch: int = 64, max_attempts: int = 2_000_000, min_rate: float = 0.0):
    """Rejection sampler for ``mu(D)`` in ``[e^{-gamma delta}, e^{gamma delta}]``.

    Returns a list of ``(log_mass, radial, total)`` for accepted draws and the
    :class:`RejectionStats`.
    """
    if C <= 0 or delta <= 0:
        raise ParameterError("C and delta must be positive")
    if not 0 < gamma < 2:
        raise ParameterError(f"gamma must lie in (0, 2), got {gamma}")
    st = RejectionStats()
    lo, hi = -gamma * delta, gamma * delta
    out = []
    while len(out) < n_accept:
        if st.attempts >= max_attempts:
            raise BudgetError("rejection budget exhausted", attempts=st.attempts, accepted=st.accepted,
                              rate=st.rate)
        logm, radial = _limiting_batch(gamma, C, grid, rng, batch)
        mx = logm.max(axis=(1, 2), keepdims=True)
        lt = (mx[:, 0, 0] + np.log(np.exp(logm - mx).sum(axis=(1, 2))))
        used = batch
        for i in np.nonzero((lt >= lo) & (lt <= hi))[0]:
            st.accepted += 1
            out.append((logm[i], radial[i], float(math.exp(lt[i]))))
            if len(out) == n_accept:
                used = int(i) + 1  # draws past the last acceptance are not counted
                break
        st.attempts += used
        if len(out) < n_accept and min_rate > 0 and st.attempts >= 20 * batch and st.rate < min_rate:
            raise BudgetError("acceptance rate below floor", attempts=st.attempts, accepted=st.accepted,
                              rate=st.rate)
    return out, st


def sample_limiting_sphere(gamma: float, C: float, delta: float, grid: CylinderGrid | None, seed,
                           window: CylinderGrid | None = None, n_theta: int = 64, batch: int = 64,
                           max_attempts: int = 2_000_000, min_rate: float = 0.0) -> tuple[SphereSample, RejectionStats]:
    """Two-point sphere from ``h0 - gamma log|z| - C`` conditioned on its mass.

    The accepted sample is re-embedded so the radial maximum sits at ``t = 0``
    of ``window`` (default: centered window of half-width 16).
    """
    grid = grid or limiting_grid(gamma, C, n_theta)
    window = window or CylinderGrid.centered(16.0, grid.n_theta)
    rng = as_rng(seed)
    (acc,), st = sample_limiting_batch(gamma, C, delta, grid, 1, rng, batch, max_attempts, min_rate)
    logm, radial, total = acc
    jmax = int(np.argmax(radial))
    out, clipped = recenter_rows(logm, grid, jmax, window)
    meas = normalize(Measure(window, out, gamma))
    return SphereSample(None, meas, ["+inf", "-inf"], "maxima", total, st.attempts, clipped), st


# --------------------------------------------------------------------------
# Bessel construction (gamma in (sqrt 2, 2))
# --------------------------------------------------------------------------

def _bes3_drift(n_steps: int, dt: float, a: float, rng, n: int) -> np.ndarray:
    """``|W_t + a t e_1|`` for a 3-d Brownian motion ``W`` at ``t = k dt``, ``k = 1..n_steps``."""
    inc = rng.standard_normal((n, n_steps, 3)) * math.sqrt(dt)
    inc[:, :, 0] += a * dt
    return np.linalg.norm(np.cumsum(inc, axis=1), axis=2)


def sample_bessel_radial(gamma: float, area_window, grid: CylinderGrid, seed, n: int = 1) -> list[RadialPath]:
    """Maxima-embedded radial paths of the two-point sphere.

    ``Y_t = (2/gamma) log e`` with ``e`` a Bessel excursion of dimension
    ``4 - 8/gamma^2`` run at unit quadratic variation. Either side of the
    maximum is ``-|3-d Brownian motion with drift Q - gamma|`` (Williams'
    decomposition). The level of the maximum is not drawn here; the area
    conditioning enters downstream as a weight, see :func:`bessel_sphere_batch`.
    The pre-transform excursion ``e`` and its own time ``u`` are attached.
    """
    if not math.sqrt(2) < gamma < 2:
        raise UnsupportedRegimeError(
            f"Bessel construction needs gamma in (sqrt 2, 2), got {gamma}; use sample_limiting_sphere")
    lo, hi = area_window
    if not 0 < lo < hi:
        raise ConfigurationError("area window must satisfy 0 < lo < hi")
    rng = as_rng(seed)
    a = _q(gamma) - gamma
    center = grid.row_of(0.0)
    n_right = grid.n_t - center - 1
    n_left = center
    right = -_bes3_drift(n_right, grid.dt, a, rng, n) if n_right else np.zeros((n, 0))
    left = -_bes3_drift(n_left, grid.dt, a, rng, n) if n_left else np.zeros((n, 0))
    X = np.concatenate([left[:, ::-1], np.zeros((n, 1)), right], axis=1)
    paths = []
    for i in range(n):
        e = np.exp(gamma * X[i] / 2)
        du = gamma ** 2 / 4 * e ** 2 * grid.dt
        u = np.cumsum(du) - du / 2
        paths.append(RadialPath(grid.t.copy(), X[i], center, 1.0, e, u))
    return paths


def bessel_sphere_batch(gamma: float, delta: float, window: CylinderGrid, rng, n: int):
    """``n`` area-weighted Bessel spheres on ``window``.

    For shape area ``A`` (maximum at level 0) the area window selects the
    maximum level ``M`` in an interval of length ``2 delta``; integrating the
    ``exp(-(4/gamma - gamma) M) dM`` law of the maximum over it gives the weight
    ``A^(4/gamma^2 - 1)``. Returns log masses at ``M = 0`` and weights.
    """
    paths = sample_bessel_radial(gamma, (math.exp(-gamma * delta), math.exp(gamma * delta)), window, rng, n)
    ang = _angular_modes(window, rng, n, dirichlet=False)
    base = math.log(window.cell_area) - 0.5 * gamma ** 2 * float((1.0 / np.arange(1, window.n_modes + 1)).sum())
    out = []
    for i, p in enumerate(paths):
        logm = base + gamma * (p.X[:, None] + ang[i])
        mx = logm.max()
        la = mx + math.log(np.exp(logm - mx).sum())
        w = math.exp((4 / gamma ** 2 - 1) * la)
        out.append((logm, p, w))
    return out


# --------------------------------------------------------------------------
# three-point spheres
# --------------------------------------------------------------------------

def dms_three_point_sample(gamma: float, C: float, delta: float, window: CylinderGrid, n: int, root_seed: int,
                           probes: Sequence[Probe], method: str = "limiting", batch: int = 16,
                           max_attempts: int = 5_000_000, min_rate: float = 0.0, tail_budget: float = 1e-2,
                           label: str = "dms", keep_samples: bool = False) -> Ensemble:
    """Three-point spheres normalized so the marked points are ``0, 1, inf``.

    Each replica draws a two-point sphere, a third point from its quantum
    area, and applies ``z -> z / w`` (``w`` the center of the sampled cell)
    before renormalizing inside ``window``.
    """
    if method not in ("limiting", "bessel"):
        raise ConfigurationError(f"unknown method {method!r}")
    src = limiting_grid(gamma, C, window.n_theta) if method == "limiting" else window
    obs = np.empty((n, len(probes)))
    weights = np.ones(n)
    totals = np.empty(n)
    clipped = np.empty(n)
    attempts = 0
    samples = []
    for i in range(n):
        rng = replica_rng(root_seed, i)
        if method == "limiting":
            (acc,), st = sample_limiting_batch(gamma, C, delta, src, 1, rng, batch, max_attempts, min_rate)
            logm, _, total = acc
            attempts += st.attempts
            w = 1.0
        else:
            ((logm, _, w),) = bessel_sphere_batch(gamma, delta, src, rng, 1)
            total = float(np.exp(logm).sum())
            attempts += 1
        pt = sample_quantum_point(Measure(src, logm, gamma), rng)
        out, clip = translate_to_window(logm, src, pt.row, pt.col, window)
        clipped[i] = clip / total
        meas = normalize(Measure(window, out, gamma))
        obs[i] = observable_vector(meas, probes, normalized=False)
        weights[i] = w
        totals[i] = total
        if keep_samples:
            samples.append(SphereSample(None, meas, ["+inf", "-inf", (pt.t, pt.theta)], "mobius-(0,1,inf)",
                                        total, 0, clip, w))
    ens = Ensemble(label=label, seeds=np.arange(n), weights=weights, field_shift=-np.log(totals) / gamma,
                   observables=obs, probe_names=[p.name or p.kind for p in probes],
                   manifest={"gamma": gamma, "C": C, "delta": delta, "method": method,
                             "grid": window.describe(), "source_grid": src.describe(),
                             "probes": [p.describe() for p in probes], "root_seed": int(root_seed),
                             "attempts": attempts, "acceptance_rate": n / attempts if method == "limiting" else 1.0,
                             "max_clipped_fraction": float(clipped.max()), "mean_clipped_fraction": float(clipped.mean())})
    if clipped.max() > tail_budget:
        ens.flags.append("clipped-mass")
        warnings.warn(f"{label}: clipped mass fraction up to {clipped.max():.3g}", RuntimeWarning, stacklevel=2)
    ens.samples = samples
    return ens


# --------------------------------------------------------------------------
# hitting time
# --------------------------------------------------------------------------

@dataclass
class HittingTimeReport:
    a: float
    A: float
    n: int
    dt: float
    mean: float
    variance: float
    mean_target: float
    variance_inverse_gaussian: float
    variance_as_stated: float
    ks_statistic: float
    ks_critical_01: float
    ks_pvalue: float
    times: np.ndarray = dc_field(repr=False, default=None)

    @property
    def mean_rel_error(self) -> float:
        return abs(self.mean - self.mean_target) / self.mean_target if self.mean_target else abs(self.mean)

    @property
    def passed(self) -> bool:
        """Mean within 2% and KS distance below the 1% critical value."""
        return self.mean_rel_error <= 0.02 and self.ks_statistic < self.ks_critical_01

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("a", "A", "n", "dt", "mean", "variance", "mean_target",
                                           "variance_inverse_gaussian", "variance_as_stated", "ks_statistic",
                                           "ks_critical_01", "ks_pvalue")}
        d["mean_rel_error"] = self.mean_rel_error
        d["passed"] = self.passed
        return d


def inverse_gaussian(a: float, A: float):
    """Law of the first time ``B_t + a t`` reaches ``A``: mean ``A/a``, shape ``A^2``."""
    mu, lam = A / a, A ** 2
    return stats.invgauss(mu / lam, scale=lam)


def hitting_time_selftest(a: float, A: float, n: int, seed, dt: float = 1e-2, block: int = 256) -> HittingTimeReport:
    """First passage of ``B_t + a t`` to ``A`` by Euler steps with a bridge crossing check."""
    if a <= 0 or A <= 0:
        raise ParameterError("a and A must be positive")
    if n < 1000:
        raise ConfigurationError("hitting_time_selftest needs n >= 1000")
    rng = as_rng(seed)
    x = np.zeros(n)
    t = np.zeros(n)
    hit = np.full(n, np.nan)
    live = np.arange(n)
    while live.size:
        z = rng.standard_normal((live.size, block))
        u = rng.random((live.size, block))
        xo, to, h = kernels.first_passage(x[live], t[live], a, A, dt, z, u)
        x[live], t[live] = xo, to
        done = ~np.isnan(h)
        hit[live[done]] = h[done]
        live = live[~done]
    law = inverse_gaussian(a, A)
    ks = stats.kstest(hit, law.cdf)
    return HittingTimeReport(a, A, n, dt, float(hit.mean()), float(hit.var(ddof=1)), A / a, A / a ** 3, a * A,
                             float(ks.statistic), 1.628 / math.sqrt(n), float(ks.pvalue), hit)
