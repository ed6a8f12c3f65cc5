"""Weighted ensembles of probe observables and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass
class Ensemble:
    """One row per sample: seed, importance weight, field shift, probe masses."""

    label: str
    seeds: np.ndarray
    weights: np.ndarray
    field_shift: np.ndarray
    observables: np.ndarray
    probe_names: list
    manifest: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    ess_floor: float = 0.0
    samples: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.seeds = np.asarray(self.seeds, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.field_shift = np.asarray(self.field_shift, dtype=np.float64)
        self.observables = np.atleast_2d(np.asarray(self.observables, dtype=np.float64))
        n = self.seeds.size
        if not (self.weights.size == self.field_shift.size == self.observables.shape[0] == n):
            raise ConfigurationError("ensemble columns have inconsistent lengths")
        if self.observables.shape[1] != len(self.probe_names):
            raise ConfigurationError("observable columns do not match probe names")

    def __len__(self):
        return int(self.seeds.size)

    @property
    def normalized_weights(self) -> np.ndarray:
        w = np.where(np.isfinite(self.weights), self.weights, 0.0)
        return w / w.sum()

    @property
    def ess(self) -> float:
        w = np.where(np.isfinite(self.weights), self.weights, 0.0)
        return float(w.sum() ** 2 / (w ** 2).sum())

    def weighted_mean(self) -> np.ndarray:
        return self.normalized_weights @ self.observables

    def subset(self, keep) -> "Ensemble":
        keep = np.asarray(keep)
        return Ensemble(self.label, self.seeds[keep], self.weights[keep], self.field_shift[keep],
                        self.observables[keep], list(self.probe_names), dict(self.manifest),
                        list(self.flags), self.ess_floor)

    def with_weights(self, weights) -> "Ensemble":
        return Ensemble(self.label, self.seeds, weights, self.field_shift, self.observables,
                        list(self.probe_names), dict(self.manifest), list(self.flags), self.ess_floor)

    # ---------------------------------------------------------------- I/O
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "weight", "field_shift"] + list(self.probe_names))
            for i in range(len(self)):
                w.writerow([int(self.seeds[i]), repr(float(self.weights[i])), repr(float(self.field_shift[i]))]
                           + [repr(float(x)) for x in self.observables[i]])

    def manifest_dict(self) -> dict:
        d = dict(self.manifest)
        d.update({"label": self.label, "n": len(self), "ess": self.ess, "ess_floor": self.ess_floor,
                  "flags": list(self.flags), "probe_names": list(self.probe_names)})
        return d

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest_dict(), indent=2, default=_json_default))

    def save(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        self.to_csv(csv_path)
        self.to_json(json_path)
        return csv_path, json_path

    @classmethod
    def load(cls, csv_path, json_path=None) -> "Ensemble":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        manifest = json.loads(json_path.read_text()) if json_path.exists() else {}
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:3] != ["seed", "weight", "field_shift"]:
            raise ConfigurationError(f"{csv_path} is not an ensemble CSV")
        names = rows[0][3:]
        body = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, 3 + len(names)))
        ens = cls(manifest.pop("label", csv_path.stem), body[:, 0].astype(np.int64), body[:, 1], body[:, 2],
                  body[:, 3:].reshape(len(body), len(names)), names)
        ens.flags = list(manifest.pop("flags", []))
        ens.ess_floor = float(manifest.pop("ess_floor", 0.0))
        for k in ("n", "ess", "probe_names"):
            manifest.pop(k, None)
        ens.manifest = manifest
        return ens


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
