"""Scenario configurations: loading, validation and construction of the
library objects they describe."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .calabi import CalabiProfile, measure_ke_constant
from .deform import SectionFamily
from .torus import WeightMatrix
from .varieties import AmbientSpace, HomogeneousPoly
from .volforms import MeromorphicVolumeSection

SCHEMA = "slag-scenario/1"
ACTIONS = ("verify", "trace", "boundary", "calabi", "deform", "consistency", "pushdown")

KNOB_RANGES = {
    "samples": (1, 100_000),
    "orbits": (1, 10_000),
    "orbit_points": (1, 10_000),
    "fibers": (1, 1000),
    "steps": (1, 100_000),
    "h": (1e-6, 10.0),
    "m": (1, 64),
    "t": (0.0, 10.0),
    "iters": (0, 10_000),
    "loop_points": (8, 1_000_000),
    "radius": (1e-6, 1e6),
}


class ConfigError(ValueError):
    """Invalid scenario configuration."""


def _require(data: dict, key: str, where: str = "scenario"):
    if key not in data:
        raise ConfigError(f"{where}: missing field '{key}'")
    return data[key]


def parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex number must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def parse_poly(data, where: str) -> HomogeneousPoly:
    try:
        return HomogeneousPoly.from_json(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class Scenario:
    name: str
    data: dict
    source: str = ""
    knobs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, source: str = "") -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        schema = data.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported schema '{schema}' (expected {SCHEMA})")
        name = _require(data, "name")
        _require(data, "ambient")
        plan = _require(data, "plan")
        bad = [a for a in plan if a not in ACTIONS]
        if bad:
            raise ConfigError(f"plan: unknown action(s) {bad}")
        kind = data["ambient"].get("kind")
        if kind in ("projective", "quadric"):
            _require(data, "weights")
            try:
                WeightMatrix(data["weights"])
            except ValueError as exc:
                raise ConfigError(f"weights: {exc}") from exc
        elif kind == "canonical_bundle":
            _require(data, "profile")
        else:
            raise ConfigError(f"ambient: unknown kind {kind!r}")
        if any(a in plan for a in ("deform", "consistency")):
            _require(data, "sections")
            _require(data, "perturbations")
            _require(data, "components")
        if any(a in plan for a in ("trace", "pushdown")):
            _require(data, "eta")
        if "verify" in plan and "eta" not in data:
            _require(data, "sections")
        knobs = dict(data.get("knobs", {}))
        for k, v in knobs.items():
            if k in KNOB_RANGES:
                lo, hi = KNOB_RANGES[k]
                if not isinstance(v, (int, float)) or not lo <= v <= hi:
                    raise ConfigError(f"knobs.{k}={v!r} outside [{lo}, {hi}]")
        sc = cls(name, data, source, knobs)
        sc.validate()
        return sc

    def validate(self) -> None:
        """Build every object once so that malformed fields surface early."""
        if self.data["ambient"]["kind"] != "canonical_bundle":
            self.ambient()
            self.weights()
        if "eta" in self.data:
            self.sigma()
        if "sections" in self.data:
            self.family()
            self.components()

    @property
    def plan(self) -> list[str]:
        return list(self.data["plan"])

    @property
    def summary(self) -> str:
        return self.data.get("summary", "")

    def ambient(self) -> AmbientSpace:
        try:
            return AmbientSpace.from_json(self.data["ambient"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"ambient: {exc}") from exc

    def weights(self, key: str = "weights") -> WeightMatrix:
        W = WeightMatrix(_require(self.data, key))
        if W.n_coords != self.ambient().n_coords:
            raise ConfigError(f"{key}: {W.n_coords} columns for {self.ambient().n_coords} coordinates")
        return W

    def sigma(self) -> MeromorphicVolumeSection:
        eta = parse_poly(self.data["eta"], "eta")
        try:
            return MeromorphicVolumeSection(self.ambient(), eta)
        except ValueError as exc:
            raise ConfigError(f"eta: {exc}") from exc

    def family(self, t: float | None = None) -> SectionFamily:
        base = [parse_poly(p, f"sections[{i}]") for i, p in enumerate(self.data["sections"])]
        pert = [parse_poly(p, f"perturbations[{i}]") for i, p in enumerate(self.data["perturbations"])]
        try:
            fam = SectionFamily(self.ambient(), base, pert)
        except ValueError as exc:
            raise ConfigError(f"sections: {exc}") from exc
        return fam if t is None else fam.at(t)

    def components(self) -> list[tuple[str, np.ndarray]]:
        out = []
        n = self.ambient().n_coords
        for i, c in enumerate(self.data["components"]):
            pt = np.array([parse_complex(v) for v in _require(c, "point", f"components[{i}]")])
            if len(pt) != n:
                raise ConfigError(f"components[{i}].point has {len(pt)} coordinates, need {n}")
            out.append((c.get("tag", f"C{i + 1}"), pt))
        return out

    def profile(self, rng=None) -> CalabiProfile:
        spec = self.data["profile"]
        kind = spec.get("kind")
        t = spec.get("t")
        if t is None:
            t = round(measure_ke_constant(rng), 6)
        if kind == "ricci-flat":
            return CalabiProfile.ricci_flat(t, float(spec.get("l", 1.0)))
        if kind == "compactifiable":
            return CalabiProfile.compactifiable(t, float(spec.get("scale", 1.0)))
        raise ConfigError(f"profile: unknown kind {kind!r}")

    def knob(self, key: str, default=None):
        return self.knobs.get(key, default)


# -- catalog -----------------------------------------------------------------------

def _catalog_dir():
    return resources.files("slag") / "catalog"


def catalog() -> dict[str, Scenario]:
    out = {}
    for entry in sorted(_catalog_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            data = json.loads(entry.read_text())
            out[data["name"]] = Scenario.from_dict(data, f"catalog/{entry.name}")
    return out


def resolve_name(name: str) -> Scenario:
    cat = catalog()
    if name in cat:
        return cat[name]
    for sc in cat.values():
        if name in sc.data.get("aliases", []):
            return sc
    raise ConfigError(f"unknown scenario '{name}' (try 'slag list')")


def load(path_or_name: str) -> Scenario:
    """Load a scenario from a JSON file, or from the catalog by name (a path
    like ``catalog/toric_p3.json`` that does not exist locally resolves to
    the catalog entry ``toric_p3``)."""
    p = Path(path_or_name)
    if p.is_file():
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        return Scenario.from_dict(data, str(p))
    return resolve_name(p.stem if p.suffix == ".json" else path_or_name)
