"""Run configuration: schema, defaults and validation.

Configs are YAML or JSON mappings with ``version: 1``.  Every field has a
default except ``potential``.
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

STAGES = ("landscape", "predict", "spectrum", "quasimode", "semigroup")
SCHEMA_VERSION = 1

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "collision": {"rho": "mild_relaxation", "scale": 1.0, "coercivity_C": 4.0, "m0_matrix": None},
    "h_list": [0.2, 0.1, 0.05],
    "discretization": {"nx": 400, "n_hermite": 30, "scheme": "staggered"},
    "spectrum": {"count": None, "c": 1.5, "ctilde": 1.0, "probes": True, "probe_samples": 16},
    "quasimode": {"gamma": 4.5, "nx": 3001, "nv": 801, "n_levels": 60},
    "semigroup": {"horizon": 12.0, "dt_fraction": 0.1, "plateau_threshold": 1e-3},
    "stages": list(STAGES),
    "tolerances": {
        "ek_band": 0.25,  # |lambda / lambda_EK - 1| at the smallest h
        "rayleigh_band": 0.1,
        "transport_rel": 1e-10,
        "resolvent_factor": 3.0,
        "rate_band": 0.1,
        "onset_factor": 10.0,
        "kernel_drift": 1e-8,
    },
    "output": "results",
    "seed": 0,
}

# stage -> stages whose results it consumes
REQUIRES = {
    "landscape": (),
    "predict": ("landscape",),
    "spectrum": ("landscape", "predict"),
    "quasimode": ("landscape", "predict"),
    "semigroup": ("landscape", "predict", "spectrum"),
}


@dataclass
class RunConfig:
    potential: dict
    collision: dict
    h_list: list
    discretization: dict
    spectrum: dict
    quasimode: dict
    semigroup: dict
    stages: list
    tolerances: dict
    output: str
    seed: int = 0
    version: int = SCHEMA_VERSION
    raw: dict = field(default_factory=dict, repr=False)

    def closure(self):
        """Requested stages plus their prerequisites, in execution order."""
        need = set(self.stages)
        for s in self.stages:
            need.update(REQUIRES[s])
        return [s for s in STAGES if s in need]

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in
                ("version", "potential", "collision", "h_list", "discretization", "spectrum",
                 "quasimode", "semigroup", "stages", "tolerances", "output", "seed")}


def _merge(base, over, path):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown field")
        if isinstance(base[k], dict) and v is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"{path}.{k}" if path else k, "expected a mapping")
            out[k] = _merge(base[k], v, f"{path}.{k}" if path else k)
        else:
            out[k] = v
    return out


def _positive_int(d, key, path, lo=1):
    v = d.get(key)
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{path}.{key}", f"expected an integer >= {lo}")


def _check_collision(spec):
    from .collision import from_spec
    from .errors import BoltzSpecError
    try:
        from_spec(spec)
    except ConfigError:
        raise
    except (BoltzSpecError, ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError("collision", str(exc)) from exc


def validate(raw):
    """Check a raw mapping and return a RunConfig.

    :raises ConfigError: with the dotted path of the first bad field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    original = copy.deepcopy(raw)
    raw = dict(raw)
    if "potential" not in raw:
        raise ConfigError("potential", "required")
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version!r}")
    potential = raw.pop("potential")
    if not isinstance(potential, dict):
        raise ConfigError("potential", "expected a mapping")
    merged = _merge(DEFAULTS, raw, "")
    h = merged["h_list"]
    if not isinstance(h, (list, tuple)) or not h:
        raise ConfigError("h_list", "expected a nonempty list")
    try:
        h = [float(x) for x in h]
    except (TypeError, ValueError) as exc:
        raise ConfigError("h_list", "entries must be numbers") from exc
    for i, x in enumerate(h):
        if not 0.0 < x <= 0.5:
            raise ConfigError(f"h_list[{i}]", f"{x} not in (0, 0.5]")
    if any(b >= a for a, b in zip(h, h[1:])):
        raise ConfigError("h_list", "must be strictly decreasing")
    merged["h_list"] = h
    stages = merged["stages"]
    if isinstance(stages, str):
        stages = [s.strip() for s in stages.split(",") if s.strip()]
    if not stages:
        raise ConfigError("stages", "at least one stage required")
    for s in stages:
        if s not in STAGES:
            raise ConfigError("stages", f"unknown stage {s!r}; choose from {STAGES}")
    merged["stages"] = [s for s in STAGES if s in stages]
    disc = merged["discretization"]
    _positive_int(disc, "nx", "discretization", 16)
    _positive_int(disc, "n_hermite", "discretization", 8)
    if disc["scheme"] not in ("staggered", "central", "upwind"):
        raise ConfigError("discretization.scheme", f"unknown scheme {disc['scheme']!r}")
    _check_collision(merged["collision"])
    _positive_int(merged["spectrum"], "count", "spectrum", 2)
    for key in ("nx", "nv", "n_levels"):
        _positive_int(merged["quasimode"], key, "quasimode", 2)
    for key, val in merged["tolerances"].items():
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"tolerances.{key}", "expected a positive number")
    if not isinstance(merged["seed"], int):
        raise ConfigError("seed", "expected an integer")
    merged.pop("version")
    return RunConfig(potential=potential, raw=original, version=version, **merged)


def load(path):
    """Read a YAML or JSON config file."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from exc
    return validate(data)
