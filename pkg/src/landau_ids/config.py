"""Run configuration (TOML), schema validation, provenance and table output."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .disorder import DisorderModel, check_h4, match_sup_norm, potential_from_dict, sup_V
from .geometry import make_lattice

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "landau-ids run configuration",
    "type": "object",
    "required": ["lattice", "potential", "disorder", "sampling"],
    "additionalProperties": False,
    "properties": {
        "lattice": {
            "type": "object", "required": ["b", "a", "n"], "additionalProperties": False,
            "properties": {"b": _POS, "a": _POS, "n": {"type": "integer", "minimum": 1}},
        },
        "level": {
            "type": "object", "additionalProperties": False,
            "properties": {"q": {"type": "integer", "minimum": 0, "maximum": 16}},
        },
        "potential": {
            "type": "object", "required": ["family"],
            "properties": {
                "family": {"enum": ["powerlaw", "exponential", "supergaussian", "indicator"]},
                "sup_norm": _POS,
            },
        },
        "disorder": {
            "type": "object", "required": ["kappa", "seed"], "additionalProperties": False,
            "properties": {"kappa": _POS, "seed": {"type": "integer", "minimum": 0}},
        },
        "energies": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "min": _POS, "max": _POS, "count": {"type": "integer", "minimum": 1},
                "spacing": {"enum": ["log", "linear"]},
                "units": {"enum": ["2b", "absolute"]},
            },
        },
        "sampling": {
            "type": "object", "required": ["samples"], "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 2},
                "theta_per_side": {"type": "integer", "minimum": 1},
                "chunk": {"type": "integer", "minimum": 1},
                "max_window": {"type": "integer", "minimum": 0},
                "q_max": {"type": "integer", "minimum": 1},
            },
        },
        "policy": {
            "type": "object", "additionalProperties": False,
            "properties": {"starvation": {"enum": ["warn", "error"]}},
        },
        "band": {
            "type": "object", "required": ["p", "r", "W"], "additionalProperties": False,
            "properties": {
                "p": {"type": "integer", "minimum": 1}, "r": {"type": "integer", "minimum": 1},
                "theta_per_side": {"type": "integer", "minimum": 1},
                "q_max": {"type": "integer", "minimum": 1},
                "band_tol": _POS,
                "W": {
                    "type": "object", "required": ["kind"],
                    "properties": {"kind": {"enum": ["constant", "cosine", "bumps"]}},
                },
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "level": {"q": 0},
    "energies": {"min": 1e-3, "max": 1e-1, "count": 25, "spacing": "log", "units": "2b"},
    "sampling": {"theta_per_side": 4, "chunk": 256, "max_window": 16, "q_max": 3},
    "policy": {"starvation": "warn"},
    "output": {"dir": "out"},
}

BAND_SCHEMA = {
    "$schema": SCHEMA["$schema"],
    "title": "landau-ids band sweep configuration",
    "type": "object", "required": ["band"], "additionalProperties": False,
    "properties": {"band": SCHEMA["properties"]["band"], "output": SCHEMA["properties"]["output"]},
}
SCHEMA["properties"].pop("band")


class ConfigError(ValueError):
    """Configuration rejected; the message is a machine-readable diagnostic line."""


def load_toml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


def _schema_errors(data: dict, schema: dict) -> list[str]:
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def materialize(data: dict) -> dict:
    cfg = copy.deepcopy(data)
    for section, values in DEFAULTS.items():
        cfg.setdefault(section, {})
        for k, v in values.items():
            cfg[section].setdefault(k, v)
    return cfg


@dataclass
class RunSetup:
    config: dict
    lattice: object
    potential: object
    disorder: DisorderModel
    energies: np.ndarray
    M: float


def energy_grid(section: dict, b: float) -> np.ndarray:
    lo, hi, n = float(section["min"]), float(section["max"]), int(section["count"])
    if hi < lo:
        raise ConfigError("energies: max must not be below min")
    grid = np.geomspace(lo, hi, n) if section.get("spacing", "log") == "log" else np.linspace(lo, hi, n)
    return grid * (2 * b) if section.get("units", "2b") == "2b" else grid


def validate_run(data: dict) -> RunSetup:
    """Schema plus physical hypotheses (integer flux, decay class, H4, energy range)."""
    errors = _schema_errors(data, SCHEMA)
    if errors:
        raise ConfigError("schema: " + "; ".join(errors))
    cfg = materialize(data)
    lat_cfg = cfg["lattice"]
    try:
        lattice = make_lattice(lat_cfg["b"], lat_cfg["a"], lat_cfg["n"])
        pot = dict(cfg["potential"])
        target = pot.pop("sup_norm", None)
        potential = potential_from_dict(pot)
        if target is not None:
            potential = match_sup_norm(potential, float(target))
        disorder = DisorderModel(float(cfg["disorder"]["kappa"]))
        M = sup_V(potential, disorder)
        check_h4(M, lattice.b)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"hypotheses: {exc}") from exc
    E = energy_grid(cfg["energies"], lattice.b)
    if E.min() <= 0:
        raise ConfigError("energies: must be positive")
    return RunSetup(cfg, lattice, potential, disorder, E, M)


def validate_band(data: dict) -> dict:
    errors = _schema_errors(data, BAND_SCHEMA)
    if errors:
        raise ConfigError("schema: " + "; ".join(errors))
    cfg = copy.deepcopy(data)
    cfg.setdefault("output", {}).setdefault("dir", "out")
    band = cfg["band"]
    band.setdefault("theta_per_side", 8)
    band.setdefault("q_max", 2)
    if math.gcd(band["p"], band["r"]) != 1:
        raise ConfigError(f"band: flux p/r = {band['p']}/{band['r']} is not in lowest terms")
    return cfg


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short=12", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def provenance(cfg: dict) -> dict:
    return {"tool": "landau-ids", "version": __version__, "git": git_revision(), "config_sha256": config_hash(cfg)}


def provenance_line(prov: dict) -> str:
    return f"landau-ids {prov['version']} git:{prov['git']} config-sha256:{prov['config_sha256']}"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curve_csv(path, energies, values, stderr, prov: dict, comments=()) -> None:
    """Columns E,value,stderr with '#' provenance lines; repr floats are locale-free and round-trip."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {provenance_line(prov)}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["E", "value", "stderr"])
        for e, v, s in zip(energies, values, stderr):
            w.writerow([_fmt(e), _fmt(v), _fmt(s)])


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if header != ["E", "value", "stderr"]:
        raise ConfigError(f"{path}: unexpected header {header}")
    data = np.array([[float(x) for x in r] for r in reader], dtype=float).reshape(-1, 3)
    return data[:, 0], data[:, 1], data[:, 2]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def finite_or_none(x: float):
    return x if math.isfinite(x) else None
