"""The epsilon-scheme for the three-insertion sphere and weighted ensemble comparisons."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .chaos import Measure, Probe, gmc_measure, normalize, observable_vector
from .ensemble import Ensemble
from .errors import BudgetError, ConfigurationError, InsufficientESSError
from .field_core import (Field, circle_average, regularized_log_kernel, sample_cylinder_batch,
                         sample_dirichlet_gff)
from .grids import CylinderGrid, PlanarGrid, fingerprint, replica_rng


# --------------------------------------------------------------------------
# scheme configuration and field
# --------------------------------------------------------------------------

@dataclass
class SchemeConfig:
    """Field ``h0 + (2Q - gamma) log eps + gamma G(., z1) + gamma G(., z2)`` on ``eps^-1 D``.

    With ``geometry="cylinder"`` the disk is pulled back to the half cylinder
    ``[log eps, t_max]``; ``eps`` is snapped so ``t = 0`` is a row center and
    the snapped value is exposed as ``epsilon_eff``.
    """

    gamma: float
    epsilon: float = 1 / 16
    delta: float = 0.3
    z1: complex = 0j
    z2: complex = 1 + 0j
    geometry: str = "cylinder"
    n_theta: int = 64
    t_max: float = 16.0
    resolution: int = 256
    enforce_H: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if self.delta <= 0:
            raise ConfigurationError("delta must be positive")
        if not 0 < self.gamma < 2:
            raise ConfigurationError("gamma must lie in (0, 2)")
        self.z1, self.z2 = complex(self.z1), complex(self.z2)
        if self.z1 == self.z2:
            raise ConfigurationError("z1 and z2 must differ")
        if abs(self.z1) > 1 or abs(self.z2) > 1:
            raise ConfigurationError("insertions must lie in the closed unit disk")
        if self.geometry not in ("cylinder", "planar"):
            raise ConfigurationError(f"unknown scheme geometry {self.geometry!r}")

    @property
    def Q(self) -> float:
        return 2 / self.gamma + self.gamma / 2

    @property
    def grid(self):
        if self.geometry == "planar":
            return PlanarGrid(self.resolution, 1 / self.epsilon)
        dt = 2 * math.pi / self.n_theta
        m = int(round(-math.log(self.epsilon) / dt - 0.5))
        t_min = -(m + 0.5) * dt
        n_t = m + 1 + int(math.ceil(self.t_max / dt))
        return CylinderGrid(t_min, t_min + n_t * dt, n_t, self.n_theta)

    @property
    def epsilon_eff(self) -> float:
        g = self.grid
        return math.exp(g.t_min) if isinstance(g, CylinderGrid) else self.epsilon

    @property
    def log_window(self) -> tuple[float, float]:
        return -self.gamma * self.delta, self.gamma * self.delta

    def describe(self) -> dict:
        return {"gamma": self.gamma, "epsilon": self.epsilon, "epsilon_eff": self.epsilon_eff,
                "delta": self.delta, "z1": [self.z1.real, self.z1.imag], "z2": [self.z2.real, self.z2.imag],
                "geometry": self.geometry, "grid": self.grid.describe(), "enforce_H": self.enforce_H}


@dataclass
class SchemeSingular:
    """Deterministic part of the scheme field, with ``r_eps`` kept separately."""

    config: SchemeConfig
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def _green_cyl(self, g: CylinderGrid, w: complex, R: float) -> np.ndarray:
        if w == 0:
            return g.t[:, None] + math.log(R) + np.zeros(g.shape)
        wstar = R ** 2 / np.conj(w)
        return regularized_log_kernel(g, w) - regularized_log_kernel(g, wstar) + math.log(abs(w)) - math.log(R)

    def evaluate(self, grid) -> np.ndarray:
        key = fingerprint(grid.describe())
        if key in self._cache:
            return self._cache[key]
        c = self.config
        eps = c.epsilon_eff
        R = 1 / eps
        if isinstance(grid, CylinderGrid):
            out = (2 * c.Q - c.gamma) * math.log(eps) - c.Q * grid.t[:, None] + np.zeros(grid.shape)
            for zi in (c.z1, c.z2):
                out = out + c.gamma * self._green_cyl(grid, zi, R)
        else:
            z = grid.centers.copy()
            half = 0.5 * grid.cell_size * (1 + 1j)
            for zi in (c.z1, c.z2):
                r, col = grid.cell_index(zi)
                z[r, col] = zi + half
            out = (2 * c.Q - c.gamma) * math.log(eps) + np.zeros(grid.shape)
            for zi in (c.z1, c.z2):
                out = out + c.gamma * (-np.log(np.abs(z - zi)) + np.log(np.abs(R ** 2 - z * np.conj(zi))) - math.log(R))
            out = np.where(grid.mask, out, 0.0)
        self._cache[key] = out
        return out

    def r_eps(self, grid) -> np.ndarray:
        """``gamma log|1 - eps^2 conj(z_i) z|`` summed over insertions (diagnostic)."""
        c = self.config
        eps = c.epsilon_eff
        z = grid.centers
        return sum(c.gamma * np.log(np.abs(1 - eps ** 2 * np.conj(zi) * z)) for zi in (c.z1, c.z2))


def scheme_field(config: SchemeConfig, seed) -> tuple[Field, SchemeSingular]:
    """Zero-boundary GFF on ``eps^-1 D`` and the deterministic part."""
    g = config.grid
    if isinstance(g, CylinderGrid):
        vals = sample_cylinder_batch(g, 1, seed, "zero-boundary")[0]
        h0 = Field(g, vals, "zero-boundary")
    else:
        h0 = sample_dirichlet_gff(g, seed)
    return h0, SchemeSingular(config)


@dataclass
class EventFlags:
    total_mass: float
    E_flag: bool
    A_eps: float
    A_tilde: float
    H_flag: bool


def _flags(config: SchemeConfig, log_total: float, A: float) -> EventFlags:
    eps = config.epsilon_eff
    lo, hi = config.log_window
    At = A + (2 * config.Q - 3 * config.gamma) * math.log(eps)
    return EventFlags(math.exp(log_total), bool(lo <= log_total <= hi), A, At,
                      bool(At >= -abs(math.log(eps)) ** (2 / 3)))


def compute_events(h0: Field, singular: SchemeSingular, config: SchemeConfig) -> EventFlags:
    mu = gmc_measure(h0, config.gamma, singular)
    A = circle_average(h0, 0.0, 1.0)
    return _flags(config, mu.log_total, A)


def _embed_rows(log_mass: np.ndarray, src: CylinderGrid, window: CylinderGrid) -> np.ndarray:
    """Place a cylinder measure into ``window`` by matching row centers."""
    off = int(round((src.t[0] - window.t[0]) / window.dt))
    out = np.full(window.shape, -np.inf)
    s0, s1 = max(0, -off), min(src.n_t, window.n_t - off)
    out[s0 + off:s1 + off] = log_mass[s0:s1]
    return out


def scheme_sample(config: SchemeConfig, n: int, root_seed: int, probes: Sequence[Probe],
                  window: CylinderGrid | None = None, batch: int = 32, max_attempts: int = 2_000_000,
                  label: str = "scheme") -> Ensemble:
    """Rejection samples of the scheme under ``E`` (and ``H`` if enforced).

    Measures are normalized on the whole domain; for cylinder geometry they
    are then placed in ``window`` (default: the centered window reaching
    ``t_max``), zero beyond the disk.
    """
    g = config.grid
    if isinstance(g, CylinderGrid) and window is None:
        window = CylinderGrid.centered(config.t_max, config.n_theta)
    sing = SchemeSingular(config)
    obs = np.empty((n, len(probes)))
    totals = np.empty(n)
    attempts = 0
    h_rate = []
    for i in range(n):
        rng = replica_rng(root_seed, i)
        while True:
            if attempts >= max_attempts:
                raise BudgetError("scheme rejection budget exhausted", attempts=attempts, accepted=i)
            if isinstance(g, CylinderGrid):
                vals = sample_cylinder_batch(g, batch, rng, "zero-boundary")
                m = batch
            else:
                vals = sample_dirichlet_gff(g, rng).values[None]
                m = 1
            attempts += m
            hit = None
            for j in range(m):
                h0 = Field(g, vals[j], "zero-boundary")
                mu = gmc_measure(h0, config.gamma, sing)
                A = float(vals[j][g.row_of(0.0)].mean()) if isinstance(g, CylinderGrid) else circle_average(h0, 0, 1)
                fl = _flags(config, mu.log_total, A)
                h_rate.append(fl.H_flag)
                if fl.E_flag and (fl.H_flag or not config.enforce_H):
                    hit = (mu, fl)
                    attempts -= m - j - 1  # unused draws of the batch
                    break
            if hit is not None:
                break
        mu, fl = hit
        nm = normalize(mu)
        if isinstance(g, CylinderGrid):
            nm = Measure(window, _embed_rows(nm.log_mass, g, window), config.gamma)
        obs[i] = observable_vector(nm, probes, normalized=False)
        totals[i] = fl.total_mass
    geom = window if window is not None else g
    ens = Ensemble(label=label, seeds=np.arange(n), weights=np.ones(n), field_shift=-np.log(totals) / config.gamma,
                   observables=obs, probe_names=[p.name or p.kind for p in probes],
                   manifest={"scheme": config.describe(), "grid": geom.describe(),
                             "probes": [p.describe() for p in probes], "root_seed": int(root_seed),
                             "attempts": attempts, "acceptance_rate": n / attempts,
                             "H_fraction": float(np.mean(h_rate)) if h_rate else float("nan")})
    return ens


def h_flag_fraction(config: SchemeConfig, n: int, root_seed: int) -> float:
    """Fraction of unconditioned scheme draws with ``H`` true."""
    g = config.grid
    hits = 0
    for i in range(n):
        h0, _ = scheme_field(config, replica_rng(root_seed, i))
        A = float(h0.values[g.row_of(0.0)].mean()) if isinstance(g, CylinderGrid) else circle_average(h0, 0, 1)
        hits += _flags(config, 0.0, A).H_flag
    return hits / n


# --------------------------------------------------------------------------
# weighted two-sample test
# --------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    probe_names: list
    ks_statistics: np.ndarray
    ks_pvalues: np.ndarray
    energy_statistic: float
    energy_pvalue: float
    ess_a: float
    ess_b: float
    n_a: int
    n_b: int
    alpha: float
    n_boot: int
    reject: bool
    fingerprints: dict = dc_field(default_factory=dict)
    notes: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.reject

    @property
    def min_pvalue(self) -> float:
        return float(min(self.energy_pvalue, self.ks_pvalues.min() * len(self.ks_pvalues)))

    def as_dict(self) -> dict:
        return {"label_a": self.label_a, "label_b": self.label_b, "probe_names": list(self.probe_names),
                "ks_statistics": self.ks_statistics.tolist(), "ks_pvalues": self.ks_pvalues.tolist(),
                "energy_statistic": self.energy_statistic, "energy_pvalue": self.energy_pvalue,
                "ess_a": self.ess_a, "ess_b": self.ess_b, "n_a": self.n_a, "n_b": self.n_b,
                "alpha": self.alpha, "n_boot": self.n_boot, "reject": self.reject,
                "fingerprints": self.fingerprints, "notes": self.notes}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("probe,ks_statistic,ks_pvalue\n")
            for name, s, p in zip(self.probe_names, self.ks_statistics, self.ks_pvalues):
                fh.write(f"{name},{s!r},{p!r}\n")
            fh.write(f"energy,{self.energy_statistic!r},{self.energy_pvalue!r}\n")


def _ks_from_weights(sorted_vals: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Weighted KS distance(s); ``wa``/``wb`` are ``(..., N)`` in sorted order and sum to 1."""
    diff = np.cumsum(wa - wb, axis=-1)
    last = np.r_[sorted_vals[1:] != sorted_vals[:-1], True]
    return np.abs(diff[..., last]).max(axis=-1)


def _energy(ca: np.ndarray, cb: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``2 a D b - a D a - b D b`` row-wise for weight matrices ``ca``, ``cb``."""
    da = ca @ D
    db = cb @ D
    return 2 * (da * cb).sum(-1) - (da * ca).sum(-1) - (db * cb).sum(-1)


def weighted_two_sample_test(ens_a: Ensemble, ens_b: Ensemble, alpha: float = 0.01, n_boot: int = 1000,
                             seed=0, ess_min: float = 100.0, probes: Sequence[int] | None = None) -> ComparisonReport:
    """Per-probe weighted KS and an energy distance, with bootstrap p-values.

    Under the null both samples come from one law, estimated by pooling the
    two weighted samples in proportion to their effective sizes. Bootstrap
    replicates draw ``round(ESS)`` unweighted points per side from it.
    Rejects when the energy p-value or the Bonferroni-corrected smallest KS
    p-value falls below ``alpha``.
    """
    if list(ens_a.probe_names) != list(ens_b.probe_names):
        raise ConfigurationError("ensembles have different probe sets")
    ga, gb = ens_a.manifest.get("grid"), ens_b.manifest.get("grid")
    if ga is not None and gb is not None and fingerprint(ga) != fingerprint(gb):
        raise ConfigurationError("ensembles live on different grids")
    ess_a, ess_b = ens_a.ess, ens_b.ess
    if min(ess_a, ess_b) < ess_min:
        raise InsufficientESSError(f"effective sample size below {ess_min}", ess_a=ess_a, ess_b=ess_b)
    cols = list(range(len(ens_a.probe_names))) if probes is None else list(probes)
    xa = ens_a.observables[:, cols]
    xb = ens_b.observables[:, cols]
    wa = ens_a.normalized_weights
    wb = ens_b.normalized_weights
    pooled = np.vstack([xa, xb])
    na, nb = len(xa), len(xb)
    N = na + nb
    scale = pooled.std(axis=0)
    scale[scale == 0] = 1.0
    z = pooled / scale
    D = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    va = np.r_[wa, np.zeros(nb)]
    vb = np.r_[np.zeros(na), wb]
    e_obs = float(_energy(va[None], vb[None], D)[0])
    orders = [np.argsort(pooled[:, j], kind="stable") for j in range(len(cols))]
    ks_obs = np.array([_ks_from_weights(pooled[o, j], va[o], vb[o]) for j, o in enumerate(orders)])

    rng = np.random.default_rng(seed)
    pool_w = (ess_a * va + ess_b * vb) / (ess_a + ess_b)
    ma, mb = max(int(round(ess_a)), 1), max(int(round(ess_b)), 1)
    e_boot = np.empty(n_boot)
    ks_boot = np.empty((n_boot, len(cols)))
    chunk = 100
    for s in range(0, n_boot, chunk):
        k = min(chunk, n_boot - s)
        ca = rng.multinomial(ma, pool_w, size=k) / ma
        cb = rng.multinomial(mb, pool_w, size=k) / mb
        e_boot[s:s + k] = _energy(ca, cb, D)
        for j, o in enumerate(orders):
            ks_boot[s:s + k, j] = _ks_from_weights(pooled[o, j], ca[:, o], cb[:, o])
    e_p = (1 + np.sum(e_boot >= e_obs - 1e-12)) / (n_boot + 1)
    ks_p = (1 + np.sum(ks_boot >= ks_obs[None, :] - 1e-12, axis=0)) / (n_boot + 1)
    reject = bool(e_p < alpha or ks_p.min() < alpha / len(cols))
    fps = {"a": fingerprint(ens_a.manifest_dict()), "b": fingerprint(ens_b.manifest_dict())}
    notes = [f"{lab} flags: {fl}" for lab, fl in ((ens_a.label, ens_a.flags), (ens_b.label, ens_b.flags)) if fl]
    return ComparisonReport(ens_a.label, ens_b.label, [ens_a.probe_names[c] for c in cols], ks_obs, ks_p,
                            e_obs, float(e_p), ess_a, ess_b, na, nb, alpha, n_boot, reject, fps, notes)


def energy_distance(ens_a: Ensemble, ens_b: Ensemble) -> float:
    """Weighted energy distance between standardized probe vectors."""
    pooled = np.vstack([ens_a.observables, ens_b.observables])
    scale = pooled.std(axis=0)
    scale[scale == 0] = 1.0
    z = pooled / scale
    D = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    na = len(ens_a)
    va = np.r_[ens_a.normalized_weights, np.zeros(len(ens_b))]
    vb = np.r_[np.zeros(na), ens_b.normalized_weights]
    return float(_energy(va[None], vb[None], D)[0])


def stabilization_diagnostic(ladder: Sequence[float], ensembles: Sequence[Ensemble]) -> dict:
    """Energy distances between successive rungs of a parameter ladder."""
    d = [energy_distance(a, b) for a, b in zip(ensembles[:-1], ensembles[1:])]
    return {"ladder": list(ladder), "successive_distances": d,
            "non_increasing": bool(all(x >= y for x, y in zip(d[:-1], d[1:])))}


# --------------------------------------------------------------------------
# Fubini identities
# --------------------------------------------------------------------------

@dataclass
class FubiniSpec:
    """Joint sampler ``draw(rng, n) -> (X, Y, Z)``; ``gaussian_x`` enables the analytic oracle."""

    name: str
    draw: Callable
    gaussian_x: tuple | None = None


def example_fubini_specs() -> list[tuple[FubiniSpec, float]]:
    def degenerate(rng, n):
        x = np.zeros(n)
        return x, x.copy(), np.ones(n)

    def diagonal(rng, n):
        x = rng.standard_normal(n)
        return x, x.copy(), 1 + x ** 2

    def gaussian(rng, n):
        x = rng.standard_normal(n)
        return x, x + 0.5 * np.abs(rng.standard_normal(n)), np.ones(n)

    return [(FubiniSpec("degenerate", degenerate), 0.5),
            (FubiniSpec("diagonal", diagonal), 0.3),
            (FubiniSpec("gaussian", gaussian, (0.0, 1.0)), 0.25)]


@dataclass
class FubiniReport:
    name: str
    delta: float
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    oracle1: float | None = None

    @property
    def discrepancy1(self) -> float:
        return abs(self.lhs1 - self.rhs1)

    @property
    def discrepancy2(self) -> float:
        return abs(self.lhs2 - self.rhs2)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(discrepancy1=self.discrepancy1, discrepancy2=self.discrepancy2)
        return d


def _step_integral(lo: np.ndarray, hi: np.ndarray, z: np.ndarray, step: float) -> float:
    """Trapezoid rule over ``x`` of ``mean_i z_i 1{lo_i <= x <= hi_i}``."""
    ok = hi >= lo
    lo, hi, z = lo[ok], hi[ok], z[ok]
    n = len(ok)
    if lo.size == 0:
        return 0.0
    a, b = lo.min() - 1.0, hi.max() + 1.0
    x = np.arange(a, b + step, step)
    ol = np.argsort(lo)
    oh = np.argsort(hi)
    cum_lo = np.r_[0.0, np.cumsum(z[ol])]
    cum_hi = np.r_[0.0, np.cumsum(z[oh])]
    started = cum_lo[np.searchsorted(lo[ol], x, side="right")]
    ended = cum_hi[np.searchsorted(hi[oh], x, side="left")]
    f = (started - ended) / n
    return float(integrate.trapezoid(f, x))


def fubini_selftest(spec: FubiniSpec, delta: float, n: int = 20000, seed=0, step: float = 1e-5) -> FubiniReport:
    """Both sides of the two Fubini identities on one shared Monte Carlo sample.

    F1: ``int E[Z 1{X in [-x-d, d-x]}] dx = 2 d E[Z]``.
    F2: ``int E[Z 1{X <= d-x, Y >= -x-d}] dx = E[Z ((Y - X + 2d) v 0)]``.
    The ``x`` integrals use a fine trapezoid grid.
    """
    rng = np.random.default_rng(seed)
    X, Y, Z = spec.draw(rng, n)
    lhs1 = _step_integral(-X - delta, delta - X, Z, step)
    rhs1 = 2 * delta * float(Z.mean())
    lhs2 = _step_integral(-Y - delta, delta - X, Z, step)
    rhs2 = float((Z * np.maximum(Y - X + 2 * delta, 0.0)).mean())
    oracle = None
    if spec.gaussian_x is not None:
        mu, sd = spec.gaussian_x
        f = lambda x: stats.norm.cdf((delta - x - mu) / sd) - stats.norm.cdf((-x - delta - mu) / sd)
        oracle = float(integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)[0])
    return FubiniReport(spec.name, delta, lhs1, rhs1, lhs2, rhs2, oracle)


def null_calibration(make_ensemble: Callable[[int], Ensemble], repeats: int = 50, alpha: float = 0.01,
                     n_boot: int = 1000, max_fraction: float = 0.05, seed=0,
                     ess_min: float = 100.0) -> dict:
    """Compare independent replicates of one pipeline ``repeats`` times.

    ``make_ensemble(k)`` must return an ensemble built from root seed ``k``.
    Passes when the rejection fraction is at most ``max_fraction``.
    """
    rejects = []
    pvals = []
    for r in range(repeats):
        rep = weighted_two_sample_test(make_ensemble(2 * r), make_ensemble(2 * r + 1), alpha=alpha,
                                       n_boot=n_boot, seed=(seed, r), ess_min=ess_min)
        rejects.append(rep.reject)
        pvals.append(rep.energy_pvalue)
    frac = float(np.mean(rejects))
    return {"repeats": repeats, "alpha": alpha, "rejections": int(np.sum(rejects)), "fraction": frac,
            "energy_pvalues": pvals, "max_fraction": max_fraction, "passed": frac <= max_fraction}
