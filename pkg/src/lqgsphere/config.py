"""INI run configuration with strict key checking.

Example::

    [run]
    gamma = 1.4142135623730951
    seed = 7
    out = results
    n = 500

    [grid]
    n_theta = 64
    half_width = 16

    [probes]
    unit_disk = disk 0 1
    annulus_1_2 = annulus 0 1 2

Only ``LQGSPHERE_OUT`` and ``LQGSPHERE_THREADS`` are read from the
environment; they override ``[run] out`` and ``[run] threads``.
"""

from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .chaos import Probe, default_probes
from .dkrv import LqgParams, three_point_params
from .equivalence import SchemeConfig
from .errors import ConfigurationError
from .grids import CylinderGrid, PlanarGrid, fingerprint

# section -> key -> (type, default)
_SCHEMA = {
    "run": {"gamma": (float, math.sqrt(2)), "alphas": (str, ""), "seed": (int, 0), "out": (str, "lqg-out"),
            "n": (int, 500), "threads": (int, 1)},
    "grid": {"n_theta": (int, 64), "half_width": (float, 16.0), "planar_resolution": (int, 128),
             "planar_radius": (float, 1.0)},
    "dkrv": {"background": (str, "circle"), "ess_floor": (float, 0.0), "tail_budget": (float, 1e-3)},
    "dms": {"C_ladder": (str, "1, 2, 3"), "delta": (float, 0.3), "method": (str, "limiting"),
            "batch": (int, 16), "max_attempts": (int, 5_000_000), "min_rate": (float, 0.0),
            "tail_budget": (float, 1e-2)},
    "scheme": {"epsilon": (float, 1 / 16), "epsilon_ladder": (str, "1/8, 1/16"), "delta": (float, 0.3),
               "enforce_H": (bool, True), "t_max": (float, 16.0)},
    "compare": {"alpha": (float, 0.01), "n_boot": (int, 1000), "ess_min": (float, 100.0)},
    "calibration": {"planar_scale": (float, float("nan")), "cylinder_scale": (float, 1.0)},
    "selftest": {"hitting_n": (int, 5000), "null_repeats": (int, 10), "null_n": (int, 200)},
}

_KINDS = {"disk": 2, "annulus": 3, "halfplane": 2, "sector": 2, "all": 0}


def _parse_number(tok: str):
    if "j" in tok:
        return complex(tok)
    return float(tok)


def parse_probe(name: str, spec: str) -> Probe:
    parts = spec.split()
    if not parts or parts[0] not in _KINDS:
        raise ConfigurationError(f"probe {name!r}: unknown kind in {spec!r}")
    kind = parts[0]
    try:
        params = [_parse_number(t) for t in parts[1:]]
    except ValueError as exc:
        raise ConfigurationError(f"probe {name!r}: bad parameter ({exc})") from None
    if len(params) != _KINDS[kind]:
        raise ConfigurationError(f"probe {name!r}: {kind} takes {_KINDS[kind]} parameters")
    if kind in ("disk", "annulus"):
        params[0] = complex(params[0])
    return Probe(kind, tuple(params), name)


def _parse_list(text: str) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        if "/" in tok:
            num, den = tok.split("/")
            out.append(float(num) / float(den))
        else:
            out.append(float(tok))
    return out


@dataclass
class RunConfig:
    values: dict
    probes: list = field(default_factory=default_probes)
    source: str = ""

    def __getitem__(self, section):
        return self.values[section]

    @property
    def gamma(self) -> float:
        return self.values["run"]["gamma"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def out_dir(self) -> Path:
        return Path(os.environ.get("LQGSPHERE_OUT", self.values["run"]["out"]))

    @property
    def params(self) -> LqgParams:
        al = self.values["run"]["alphas"]
        return three_point_params(self.gamma, _parse_list(al) if al else None)

    @property
    def C_ladder(self) -> list[float]:
        return _parse_list(self.values["dms"]["C_ladder"])

    @property
    def epsilon_ladder(self) -> list[float]:
        return _parse_list(self.values["scheme"]["epsilon_ladder"])

    @property
    def window(self) -> CylinderGrid:
        g = self.values["grid"]
        return CylinderGrid.centered(g["half_width"], g["n_theta"])

    @property
    def planar_grid(self) -> PlanarGrid:
        g = self.values["grid"]
        return PlanarGrid(g["planar_resolution"], g["planar_radius"])

    def scheme(self, **overrides) -> SchemeConfig:
        s = self.values["scheme"]
        kw = dict(gamma=self.gamma, epsilon=s["epsilon"], delta=s["delta"], enforce_H=s["enforce_H"],
                  n_theta=self.values["grid"]["n_theta"], t_max=s["t_max"])
        kw.update(overrides)
        return SchemeConfig(**kw)

    def as_dict(self) -> dict:
        d = json.loads(json.dumps(self.values, default=str))
        d["probes"] = [p.describe() for p in self.probes]
        return json.loads(json.dumps(d, default=lambda o: [o.real, o.imag] if isinstance(o, complex) else str(o)))

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.as_dict())

    def validate(self) -> "RunConfig":
        self.params  # raises on bad gamma / alphas
        if self.values["run"]["n"] < 1:
            raise ConfigurationError("[run] n must be positive")
        if self.values["dkrv"]["background"] not in ("circle", "spherical"):
            raise ConfigurationError("[dkrv] background must be circle or spherical")
        if self.values["dms"]["method"] not in ("limiting", "bessel"):
            raise ConfigurationError("[dms] method must be limiting or bessel")
        if any(c <= 0 for c in self.C_ladder):
            raise ConfigurationError("[dms] C_ladder entries must be positive")
        if not 0 < self.values["compare"]["alpha"] < 1:
            raise ConfigurationError("[compare] alpha must lie in (0, 1)")
        self.window
        self.scheme()
        return self


def _convert(section, key, raw, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is float and "/" in raw:
            return _parse_list(raw)[0]
        return typ(raw.strip())
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def default_config() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in _SCHEMA.items()})


def load_config(text_or_path=None, overrides: dict | None = None) -> RunConfig:
    """Parse an INI file (path or text); unknown sections or keys are errors."""
    cfg = default_config()
    text = ""
    if text_or_path is not None and str(text_or_path).strip():
        p = Path(str(text_or_path))
        if "\n" not in str(text_or_path) and p.exists():
            text = p.read_text()
        elif "\n" in str(text_or_path) or str(text_or_path).lstrip().startswith("["):
            text = str(text_or_path)
        else:
            raise ConfigurationError(f"config file {text_or_path} not found")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section == "probes":
            cfg.probes = [parse_probe(k, v) for k, v in parser[section].items()]
            continue
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            cfg.values[section][key] = _convert(section, key, raw, _SCHEMA[section][key][0])
    for (section, key), val in (overrides or {}).items():
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigurationError(f"unknown override {section}.{key}")
        cfg.values[section][key] = val
    if "LQGSPHERE_THREADS" in os.environ:
        cfg.values["run"]["threads"] = _convert("run", "threads", os.environ["LQGSPHERE_THREADS"], int)
    cfg.source = text
    return cfg.validate()


def config_to_ini(cfg: RunConfig) -> str:
    lines = []
    for section, keys in cfg.values.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in keys.items()]
        lines.append("")
    lines.append("[probes]")
    for p in cfg.probes:
        parts = [p.kind] + [_fmt(x) for x in p.params]
        lines.append(f"{p.name} = {' '.join(parts)}")
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+.17g}j"
    return repr(float(x))
