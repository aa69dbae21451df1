"""Run configuration: YAML loading, schema validation and model construction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .gsb import PRESETS, ModelSpec, SpinSystem, model_spec, preset
from .io import matrix_text, parse_complex, parse_matrix
from .modes import DISPERSIONS, FormFactor, ModeGrid, geometric_grid, power_form_factor, single_mode, uniform_grid
from .renorm import DEFAULT_Z_SET

STUDIES = ("validate", "spectrum", "resolvent-check", "converge", "dress", "vanish")

_NUMBER = {"type": "number"}
_COMPLEX = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": r"^[-+0-9.eEj ]+$"}]}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _COMPLEX}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "grid", "truncation"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["preset"],
            "properties": {
                "preset": {"enum": list(PRESETS) + ["custom"]},
                "eta": {"anyOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 1}]},
                "n_atoms": {"type": "integer", "minimum": 1, "maximum": 6},
                "K": _MATRIX,
                "couplings": {"type": "array", "minItems": 1, "items": _MATRIX},
                "factors": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "exponent": _NUMBER,
                            "amplitude": _COMPLEX,
                            "phase_rate": _NUMBER,
                            "re": {"type": "array", "items": _NUMBER},
                            "im": {"type": "array", "items": _NUMBER},
                        },
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "geometric", "single", "explicit"]},
                "k_min": {"type": "number", "minimum": 0},
                "k_max": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {"anyOf": [{"type": "integer", "minimum": 1, "maximum": 64},
                                    {"type": "array", "items": _NUMBER, "minItems": 1}]},
                "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "omega": {"anyOf": [{"type": "number", "exclusiveMinimum": 0},
                                    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}]},
                "weight": {"type": "number", "exclusiveMinimum": 0},
                "dispersion": {"enum": sorted(DISPERSIONS)},
                "mass": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_max"],
            "properties": {
                "n_max": {"type": "integer", "minimum": 0, "maximum": 200},
                "size_cap": {"type": "integer", "minimum": 1, "maximum": 20000},
            },
        },
        "cutoffs": {"anyOf": [
            {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
            {"type": "object", "additionalProperties": False, "required": ["rungs"],
             "properties": {"rungs": {"type": "integer", "minimum": 2}}},
        ]},
        "z": {"type": "array", "items": _COMPLEX, "minItems": 1},
        "z0": {"type": "number", "exclusiveMaximum": 0},
        "studies": {"type": "array", "items": {"enum": list(STUDIES)}, "uniqueItems": True},
        "require_assumption": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string", "minLength": 1},
        "samples": {"type": "integer", "minimum": 1, "maximum": 10000},
        "dress": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_max": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}},
        },
        "vanish": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "s": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 2}},
                "n_min": {"type": "integer", "minimum": 0},
                "n_max": {"type": "integer", "minimum": 1, "maximum": 60},
            },
        },
        "export": {"type": "array", "items": {"enum": ["binary", "mtx"]}, "uniqueItems": True},
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    studies: tuple[str, ...]
    z: tuple[complex, ...]
    z0: float = -1.0
    seed: int = 0
    output: str = "out"
    require_assumption: bool = False
    samples: int = 20
    dress_n_max: tuple[int, ...] = (10, 20, 40)
    vanish_s: tuple[float, ...] = (0.5, 1.0)
    vanish_n: tuple[int, int] = (3, 10)
    export: tuple[str, ...] = ()


def parse_config(raw: dict) -> RunConfig:
    """Validate a config tree (unknown keys are errors) and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    vanish = raw.get("vanish", {})
    n_lo, n_hi = vanish.get("n_min", 3), vanish.get("n_max", 10)
    if n_hi <= n_lo:
        raise ConfigError("vanish: n_max must exceed n_min")
    try:
        z = tuple(parse_complex(v) for v in raw.get("z", DEFAULT_Z_SET))
    except ValueError as exc:
        raise ConfigError(f"z: {exc}") from None
    return RunConfig(
        raw=raw,
        studies=tuple(raw.get("studies", ())),
        z=z,
        z0=float(raw.get("z0", -1.0)),
        seed=int(raw.get("seed", 0)),
        output=raw.get("output", "out"),
        require_assumption=bool(raw.get("require_assumption", False)),
        samples=int(raw.get("samples", 20)),
        dress_n_max=tuple(raw.get("dress", {}).get("n_max", (10, 20, 40))),
        vanish_s=tuple(float(s) for s in vanish.get("s", (0.5, 1.0))),
        vanish_n=(n_lo, n_hi),
        export=tuple(raw.get("export", ())),
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)


def build_grid(g: dict) -> ModeGrid:
    kind = g["kind"]
    disp, mass = g.get("dispersion", "relativistic"), g.get("mass", 1.0)
    if kind in ("uniform", "geometric"):
        missing = [k for k in ("k_min", "k_max", "nodes") if k not in g]
        if missing or not isinstance(g["nodes"], int):
            raise ConfigError(f"grid: {kind} grid needs k_min, k_max and an integer node count")
        builder = uniform_grid if kind == "uniform" else geometric_grid
        return builder(g["k_min"], g["k_max"], g["nodes"], disp, mass)
    if kind == "single":
        if not isinstance(g.get("omega"), (int, float)):
            raise ConfigError("grid: single-mode grid needs a scalar omega")
        return single_mode(g["omega"], g.get("weight", 1.0))
    if not all(isinstance(g.get(k), list) for k in ("nodes", "weights", "omega")):
        raise ConfigError("grid: explicit grid needs node, weight and omega lists")
    return ModeGrid(g["nodes"], g["weights"], g["omega"], g.get("mass"), "custom")


def build_factor(item: dict, grid: ModeGrid) -> FormFactor:
    if "re" in item or "im" in item:
        re = np.asarray(item.get("re", np.zeros(grid.size)), float)
        im = np.asarray(item.get("im", np.zeros(grid.size)), float)
        if re.size != grid.size or im.size != grid.size:
            raise ConfigError(f"factors: explicit values need {grid.size} entries")
        return FormFactor(re + 1j * im)
    return power_form_factor(grid, item.get("exponent", -0.25), parse_complex(item.get("amplitude", 1.0)),
                             item.get("phase_rate", 0.0))


def build_spec(cfg: RunConfig) -> ModelSpec:
    """Model spec from the ``model``, ``grid`` and ``truncation`` sections."""
    model, trunc = cfg.raw["model"], cfg.raw["truncation"]
    try:
        grid = build_grid(cfg.raw["grid"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    items = model.get("factors", [{}])
    factors = [build_factor(item, grid) for item in items]
    n_max, cap = trunc["n_max"], trunc.get("size_cap", 20000)
    name = model["preset"]
    try:
        if name == "custom":
            if "K" not in model or "couplings" not in model:
                raise ConfigError("model: custom preset needs K and couplings")
            couplings = tuple(parse_matrix(B) for B in model["couplings"])
            spin = SpinSystem(parse_matrix(model["K"]), couplings, tuple(f"B{j + 1}" for j in range(len(couplings))))
            return model_spec(spin, grid, factors, n_max, cap)
        n_atoms = model.get("n_atoms")
        if name.endswith("_multi") and len(factors) == 1 and n_atoms:
            factors = factors * n_atoms
        return preset(name, grid, factors, n_max, model.get("eta", 1.0), n_atoms, cap)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def cutoff_schedule(cfg: RunConfig, grid: ModeGrid) -> list[float]:
    """Explicit cutoffs, or the ``rungs`` nodes just below the largest node."""
    spec = cfg.raw.get("cutoffs", {"rungs": 8})
    if isinstance(spec, list):
        return [float(c) for c in spec]
    rungs = spec["rungs"]
    if rungs > grid.size - 1:
        raise ConfigError(f"cutoffs: {rungs} rungs need more than {rungs} grid nodes")
    return [float(k) for k in grid.nodes[grid.size - 1 - rungs: grid.size - 1]]


def spec_to_config(spec: ModelSpec) -> dict:
    """Explicit ``custom`` model, grid and truncation sections reproducing ``spec``."""
    g = spec.grid
    return {
        "model": {
            "preset": "custom",
            "K": matrix_text(spec.spin.K),
            "couplings": [matrix_text(B) for B in spec.spin.couplings],
            "factors": [{"re": [float(v) for v in f.values.real], "im": [float(v) for v in f.values.imag]}
                        for f in spec.factors],
        },
        "grid": {
            "kind": "explicit",
            "nodes": [float(v) for v in g.nodes],
            "weights": [float(v) for v in g.weights],
            "omega": [float(v) for v in g.omega],
            "mass": float(g.mass_floor),
        },
        "truncation": {"n_max": spec.basis.n_max, "size_cap": 20000},
    }


def dump_config(raw: dict) -> str:
    return yaml.safe_dump(raw, sort_keys=False)

