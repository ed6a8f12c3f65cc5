"""Command-line entry point: ``lqgsphere <subcommand>``.

Exit codes: 0 all checks pass, 2 configuration error, 3 budget exhausted,
4 a statistical or identity check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .calibration import circle_variance, covariance_calibration, gmc_expectation
from .chaos import Measure, normalize
from .config import RunConfig, load_config
from .dkrv import check_bounds, derive_params, dkrv_unit_volume_sample, three_point_params
from .dms import dms_three_point_sample, hitting_time_selftest, sample_limiting_sphere
from .ensemble import Ensemble
from .equivalence import (example_fubini_specs, fubini_selftest, null_calibration, stabilization_diagnostic,
                          weighted_two_sample_test)
from .errors import ConfigurationError, LqgError
from .field_core import BackgroundMeasure
from .grids import CylinderGrid, fingerprint
from .io import load_snapshot, save_snapshot

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_FAIL = 0, 2, 3, 4
PLOT_KINDS = ("mass-histogram", "radial-profile", "probe-scatter")


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_default))
    return path


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return str(o)


def _stamp(ens: Ensemble, cfg: RunConfig) -> Ensemble:
    ens.manifest["config_fingerprint"] = cfg.fingerprint
    ens.manifest["calibration"] = cfg["calibration"]
    return ens


def _background(name: str) -> BackgroundMeasure:
    return BackgroundMeasure.circle() if name == "circle" else BackgroundMeasure.spherical()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_calibrate(cfg: RunConfig, args) -> int:
    draws = args.draws or 2000
    res = [covariance_calibration(cfg.planar_grid, draws, seed=cfg.seed)]
    if not args.quick:
        res += [circle_variance(e, draws, seed=cfg.seed + 1 + k) for k, e in enumerate((1 / 16, 1 / 32))]
        res.append(gmc_expectation(1.0, draws, seed=cfg.seed + 3))
    report = {"config_fingerprint": cfg.fingerprint, "checks": [r.as_dict() for r in res],
              "passed": all(r.passed for r in res)}
    _write_json(cfg.out_dir / "calibration.json", report)
    for r in res:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max error {r.max_error:.4g} (tol {r.tolerance:.4g})")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_sample_dkrv(cfg: RunConfig, args) -> int:
    n = args.n or cfg["run"]["n"]
    bg = args.background or cfg["dkrv"]["background"]
    floor = cfg["dkrv"]["ess_floor"] or None
    ens = dkrv_unit_volume_sample(cfg.params, _background(bg), cfg.window, n, cfg.seed, cfg.probes,
                                  ess_floor=floor, keep_measures=args.snapshots > 0, label=f"dkrv-{bg}")
    _stamp(ens, cfg)
    stem = cfg.out_dir / (args.name or f"dkrv_{bg}")
    stem.parent.mkdir(parents=True, exist_ok=True)
    ens.save(stem)
    for k, s in enumerate(ens.samples[:args.snapshots]):
        save_snapshot(s.measure, stem.parent / f"{stem.name}_{k:04d}.lqgf")
    print(f"wrote {stem}.csv ({len(ens)} rows, ESS {ens.ess:.1f})")
    return EXIT_OK


def cmd_sample_dms(cfg: RunConfig, args) -> int:
    n = args.n or cfg["run"]["n"]
    ladder = [args.C] if args.C is not None else cfg.C_ladder
    d = cfg["dms"]
    ensembles = []
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for C in ladder:
        ens = dms_three_point_sample(cfg.gamma, C, d["delta"], cfg.window, n, cfg.seed, cfg.probes,
                                     method=d["method"], batch=d["batch"], max_attempts=d["max_attempts"],
                                     min_rate=d["min_rate"], tail_budget=d["tail_budget"], label=f"dms-C{C:g}")
        _stamp(ens, cfg)
        ens.save(cfg.out_dir / f"{args.name or 'dms'}_C{C:g}")
        ensembles.append(ens)
        print(f"C={C:g}: acceptance {ens.manifest['acceptance_rate']:.4f}")
    if args.snapshots:
        for k in range(args.snapshots):
            sph, _ = sample_limiting_sphere(cfg.gamma, ladder[-1], d["delta"], None, (cfg.seed, k),
                                            window=cfg.window, n_theta=cfg.window.n_theta,
                                            batch=d["batch"])
            save_snapshot(sph.measure, cfg.out_dir / f"{args.name or 'dms'}_maxima_{k:04d}.lqgf")
    if len(ensembles) > 1:
        diag = stabilization_diagnostic(ladder, ensembles)
        diag["config_fingerprint"] = cfg.fingerprint
        _write_json(cfg.out_dir / f"{args.name or 'dms'}_ladder.json", diag)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    a = Ensemble.load(args.a)
    b = Ensemble.load(args.b)
    pa, pb = a.manifest.get("probes"), b.manifest.get("probes")
    if pa is not None and pb is not None and fingerprint(pa) != fingerprint(pb):
        raise ConfigurationError("ensembles were built with different probe definitions")
    c = cfg["compare"]
    rep = weighted_two_sample_test(a, b, alpha=c["alpha"], n_boot=c["n_boot"], seed=cfg.seed, ess_min=c["ess_min"])
    rep.fingerprints["config"] = cfg.fingerprint
    stem = cfg.out_dir / (args.name or "comparison")
    stem.parent.mkdir(parents=True, exist_ok=True)
    rep.to_json(stem.with_suffix(".json"))
    rep.to_csv(stem.with_suffix(".csv"))
    print(f"energy p={rep.energy_pvalue:.4g}, min KS p={rep.ks_pvalues.min():.4g}: "
          f"{'reject' if rep.reject else 'no rejection'} at {rep.alpha}")
    return EXIT_FAIL if rep.reject else EXIT_OK


def run_selftest(cfg: RunConfig, hitting_n: int | None = None, null_repeats: int | None = None) -> dict:
    st = cfg["selftest"]
    out = {}
    fub = [fubini_selftest(spec, d) for spec, d in example_fubini_specs()]
    out["fubini"] = {"reports": [f.as_dict() for f in fub],
                     "passed": all(f.discrepancy1 <= 1e-4 and f.discrepancy2 <= 1e-4
                                   and (f.oracle1 is None or abs(f.lhs1 - f.oracle1) <= 1e-4) for f in fub)}
    ht = hitting_time_selftest(1.0, 10.0, hitting_n or st["hitting_n"], seed=cfg.seed)
    out["hitting_time"] = ht.as_dict()
    cases = {"classic": derive_params(1.8, [(0, 1.8), (1, 1.8), (math.inf, 1.8)]),
             "extended-only": three_point_params(1.0),
             "violated": derive_params(1.0, [(0, 2.5), (1, 1.0), (math.inf, 1.0)])}
    expect = {"classic": "classic-Seiberg", "extended-only": "extended-only", "violated": "violated"}
    verdicts = {k: check_bounds(p).status for k, p in cases.items()}
    sweep = {g: check_bounds(three_point_params(g)).status for g in (0.5, 1.0, 1.5, 1.9)}
    out["bounds"] = {"verdicts": verdicts, "sweep": sweep,
                     "passed": verdicts == expect and "violated" not in sweep.values()}
    repeats = st["null_repeats"] if null_repeats is None else null_repeats
    if repeats > 0:
        rho = _background(cfg["dkrv"]["background"])
        make = lambda k: dkrv_unit_volume_sample(cfg.params, rho, cfg.window, st["null_n"], cfg.seed * 1000 + k,
                                                 cfg.probes)
        # binomial slack: allow the 99th percentile of Binomial(repeats, alpha) rejections
        alpha = cfg["compare"]["alpha"]
        slack = stats.binom.ppf(0.99, repeats, alpha) / repeats
        out["null_calibration"] = null_calibration(make, repeats, alpha, cfg["compare"]["n_boot"],
                                                   max(0.05, slack), seed=cfg.seed,
                                                   ess_min=cfg["compare"]["ess_min"])
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict))
    return out


def cmd_selftest(cfg: RunConfig, args) -> int:
    rep = run_selftest(cfg, args.hitting_n, args.null_repeats)
    rep["config_fingerprint"] = cfg.fingerprint
    _write_json(cfg.out_dir / "selftest.json", rep)
    for k, v in rep.items():
        if isinstance(v, dict):
            print(f"{'PASS' if v['passed'] else 'FAIL'} {k}")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def emit_plot_data(source, kind: str, path, bins: int = 20) -> Path:
    """Write plain CSV for plotting; ``source`` is an Ensemble, snapshot object or file path."""
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    path = Path(path)
    if isinstance(source, (str, Path)):
        p = Path(source)
        if not p.exists():
            raise ConfigurationError(f"{p} does not exist")
        source = load_snapshot(p) if p.suffix == ".lqgf" else Ensemble.load(p)
    rows: list
    if kind == "radial-profile":
        if isinstance(source, Ensemble) or not isinstance(source.geometry, CylinderGrid):
            raise ConfigurationError("radial-profile needs a cylinder field or measure snapshot")
        g = source.geometry
        if isinstance(source, Measure):
            m = normalize(source)
            header = ["t (log-radius)", "row_mass (fraction of total)", "row_mean_log_mass (log area units)"]
            rows = [[_num(t), _num(a), _num(b)] for t, a, b in zip(g.t, m.cell_mass.sum(1), m.log_mass.mean(1))]
        else:
            header = ["t (log-radius)", "row_mean_field (field units)"]
            rows = [[_num(t), _num(v)] for t, v in zip(g.t, source.values.mean(1))]
    else:
        if not isinstance(source, Ensemble):
            raise ConfigurationError(f"{kind} needs an ensemble")
        w = source.normalized_weights
        if kind == "probe-scatter":
            header = ["seed", "normalized_weight"] + [f"{n} (mass fraction)" for n in source.probe_names]
            rows = [[str(s), _num(wi)] + [_num(x) for x in o]
                    for s, wi, o in zip(source.seeds, w, source.observables)]
        else:
            edges = np.linspace(0.0, 1.0, bins + 1)
            header = ["bin_lo (mass fraction)", "bin_hi (mass fraction)"] + \
                     [f"{n} (weight fraction)" for n in source.probe_names]
            cols = []
            for j in range(len(source.probe_names)):
                x = np.clip(source.observables[:, j], 0.0, 1.0)
                h, _ = np.histogram(x, bins=edges, weights=w)
                cols.append(h / h.sum())
            rows = [[_num(edges[i]), _num(edges[i + 1])] + [_num(c[i]) for c in cols] for i in range(bins)]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    return path


def cmd_plot_data(cfg: RunConfig, args) -> int:
    out = Path(args.output) if args.output else cfg.out_dir / f"{Path(args.input).stem}_{args.kind}.csv"
    emit_plot_data(args.input, args.kind, out, bins=args.bins)
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqgsphere", description="Quantum sphere sampling and comparison.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--threads", type=int, help="thread count recorded in the manifest")
    p.add_argument("--gamma", type=float, help="overrides [run] gamma")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("calibrate", help="lattice covariance and chaos calibration checks")
    s.add_argument("--draws", type=int)
    s.add_argument("--quick", action="store_true", help="covariance check only")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sample-dkrv", help="weighted unit-volume ensemble")
    s.add_argument("--n", type=int)
    s.add_argument("--background", choices=("circle", "spherical"))
    s.add_argument("--snapshots", type=int, default=0)
    s.add_argument("--name")
    s.set_defaults(func=cmd_sample_dkrv)

    s = sub.add_parser("sample-dms", help="three-point ensembles over the C ladder")
    s.add_argument("--n", type=int)
    s.add_argument("--C", type=float, help="single C instead of the configured ladder")
    s.add_argument("--snapshots", type=int, default=0, help="maxima-embedded measure snapshots to save")
    s.add_argument("--name")
    s.set_defaults(func=cmd_sample_dms)

    s = sub.add_parser("compare", help="weighted two-sample test of two ensemble CSVs")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--name")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("selftest", help="identity checks and null calibration")
    s.add_argument("--hitting-n", type=int)
    s.add_argument("--null-repeats", type=int)
    s.set_defaults(func=cmd_selftest)

    s = sub.add_parser("plot-data", help="CSV for plotting")
    s.add_argument("input")
    s.add_argument("--kind", required=True)
    s.add_argument("--output")
    s.add_argument("--bins", type=int, default=20)
    s.set_defaults(func=cmd_plot_data)
    return p


def _error_exit(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    diag = getattr(exc, "diagnostics", None)
    if diag:
        payload["diagnostics"] = diag
    print(json.dumps(payload, default=_default), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed is not None:
            overrides[("run", "seed")] = args.seed
        if args.out is not None:
            overrides[("run", "out")] = args.out
        if args.threads is not None:
            overrides[("run", "threads")] = args.threads
        if args.gamma is not None:
            overrides[("run", "gamma")] = args.gamma
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except LqgError as exc:
        return _error_exit(exc, exc.exit_code if exc.exit_code in (2, 3, 4) else EXIT_FAIL)
    except (OSError, ValueError) as exc:
        return _error_exit(exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
