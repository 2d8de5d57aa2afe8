#!/usr/bin/env python3

import json
import logging
from pathlib import Path
from typing import Optional

try:
    import jsonschema
except ImportError:
    jsonschema = None

from integrators import SPLIT_LETTERS
from models import ConstraintKind, ExperimentKind, OptimizerName


SCHEMA_DIR = Path(__file__).parent.parent / "schemas"

VARIANT_PREFIX = "variant."

Lines = dict[tuple[str, Optional[str]], int]


def _load_schema(schema_name: str) -> dict:
    schema_path = SCHEMA_DIR / f"{schema_name}.schema.json"
    if not schema_path.exists():
        raise FileNotFoundError(f"Schema not found: {schema_path}")
    with open(schema_path, "r") as f:
        return json.load(f)


def where(lines: Lines, section: str, key: Optional[str] = None) -> str:
    line = lines.get((section, key)) or lines.get((section, None))
    target = f"[{section}] {key}" if key else f"[{section}]"
    return f"line {line}: {target}" if line else target


def _section_schema(schema: dict, section: str) -> Optional[dict]:
    if section.startswith(VARIANT_PREFIX):
        return schema["definitions"]["optimizer"]
    entry = schema["properties"].get(section)
    if entry is None:
        return None
    if "$ref" in entry:
        return schema["definitions"][entry["$ref"].rsplit("/", 1)[-1]]
    return entry


def check_known_keys(sections: dict, lines: Lines, schema_name: str = "run_config") -> list[str]:
    schema = _load_schema(schema_name)
    errors = []
    for section, values in sections.items():
        section_schema = _section_schema(schema, section)
        if section_schema is None:
            errors.append(f"{where(lines, section)}: unknown section")
            continue
        known = section_schema.get("properties", {})
        for key in values:
            if key not in known:
                errors.append(f"{where(lines, section, key)}: unknown key '{key}'")
    return errors


def validate_schema(data: dict, schema_name: str, lines: Optional[Lines] = None) -> list[str]:
    if jsonschema is None:
        logging.warning("jsonschema not installed, skipping schema validation")
        return []

    try:
        schema = _load_schema(schema_name)
    except FileNotFoundError as e:
        return [str(e)]

    lines = lines or {}
    errors = []
    validator = jsonschema.Draft7Validator(schema)
    for error in sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.path]):
        path = list(error.absolute_path)
        if len(path) >= 2:
            location = where(lines, str(path[0]), str(path[1]))
            rest = " → ".join(str(p) for p in path[2:])
            location = f"{location} → {rest}" if rest else location
        elif path:
            location = where(lines, str(path[0]))
        else:
            location = "(root)"
        errors.append(f"[{schema_name}] {location}: {error.message}")

    return errors


def weight_layer_count(sections: dict) -> int:
    hidden = sections.get("model", {}).get("hidden", [500])
    return len(hidden) + 1 if isinstance(hidden, list) else 0


def variant_sections(sections: dict) -> dict[str, dict]:
    base = sections.get("optimizer", {})
    variants = {
        name[len(VARIANT_PREFIX):]: {**base, **values}
        for name, values in sections.items()
        if name.startswith(VARIANT_PREFIX)
    }
    if not variants:
        variants = {str(base.get("name", OptimizerName.SGD.value)): dict(base)}
    return variants


def _variant_section(sections: dict, label: str) -> str:
    name = f"{VARIANT_PREFIX}{label}"
    return name if name in sections else "optimizer"


def validate_optimizer(label: str, values: dict, section: str, lines: Lines,
                       experiment: ExperimentKind, n_layers: int) -> tuple[list[str], list[str]]:
    errors = []
    warnings = []
    try:
        name = OptimizerName(values.get("name", OptimizerName.SGD.value))
    except ValueError:
        # the schema reports the bad name
        return errors, warnings

    kind = name.constraint
    radii = values.get("radii") or []
    if kind in (ConstraintKind.CIRCLE, ConstraintKind.SPHERE):
        if not radii:
            errors.append(f"{where(lines, section, 'name')}: {kind.value} constraint requires radii")
        elif experiment == ExperimentKind.ORTHO_DEPTH_STUDY and len(radii) != 1:
            errors.append(
                f"{where(lines, section, 'radii')}: depth studies take a single radius, got {len(radii)}"
            )
        elif experiment != ExperimentKind.ORTHO_DEPTH_STUDY and len(radii) not in (1, n_layers):
            errors.append(
                f"{where(lines, section, 'radii')}: expected 1 or {n_layers} radii "
                f"(one per weight layer), got {len(radii)}"
            )

    if kind == ConstraintKind.SPHERE and float(values.get("tau", 0.0)) != 0.0:
        errors.append(f"{where(lines, section, 'tau')}: sphere constraint requires tau = 0")

    split = values.get("split", "ABO")
    if name.underdamped and isinstance(split, str):
        if not split:
            errors.append(f"{where(lines, section, 'split')}: {name.value} requires a non-empty split")
        elif set(split) - SPLIT_LETTERS:
            errors.append(f"{where(lines, section, 'split')}: split letters must be A, B or O")

    layers = values.get("constrained_layers")
    if layers and experiment != ExperimentKind.ORTHO_DEPTH_STUDY:
        bad = [i for i in layers if isinstance(i, int) and i >= n_layers]
        if bad:
            errors.append(
                f"{where(lines, section, 'constrained_layers')}: layer(s) {bad} do not exist "
                f"in a {n_layers}-layer model"
            )

    if kind != ConstraintKind.NONE and float(values.get("weight_decay", 0.0)) > 0:
        warnings.append(
            f"{where(lines, section, 'weight_decay')}: {label} applies weight decay "
            f"to unconstrained parameters only"
        )
    if name != OptimizerName.SGD_M and float(values.get("momentum", 0.0)) > 0:
        warnings.append(f"{where(lines, section, 'momentum')}: ignored by {name.value}")
    if kind != ConstraintKind.NONE and float(values.get("orth_penalty", 0.0)) > 0:
        warnings.append(f"{where(lines, section, 'orth_penalty')}: ignored by {name.value}")

    return errors, warnings


def validate_cross_references(sections: dict, lines: Lines,
                              experiment: ExperimentKind) -> tuple[list[str], list[str]]:
    errors = []
    warnings = []

    n_layers = weight_layer_count(sections)
    for label, values in variant_sections(sections).items():
        section = _variant_section(sections, label)
        e, w = validate_optimizer(label, values, section, lines, experiment, n_layers)
        errors.extend(e)
        warnings.extend(w)

    sampler = sections.get("sampler", {})
    steps, burn_in = sampler.get("steps"), sampler.get("burn_in")
    if isinstance(steps, int) and isinstance(burn_in, int) and burn_in >= steps:
        errors.append(f"{where(lines, 'sampler', 'burn_in')}: burn-in must be smaller than steps")

    extent = sections.get("study", {}).get("grid_extent")
    if isinstance(extent, list) and len(extent) == 4:
        if not (extent[0] < extent[1] and extent[2] < extent[3]):
            errors.append(f"{where(lines, 'study', 'grid_extent')}: expected [xmin, xmax, ymin, ymax]")

    model = sections.get("model", {})
    if model.get("loss") == "cross-entropy" and experiment == ExperimentKind.CURVATURE_STUDY:
        warnings.append(
            f"{where(lines, 'model', 'loss')}: curvature uses the class-1 softmax probability"
        )

    return errors, warnings


def validate_all(sections: dict, lines: Lines,
                 experiment: ExperimentKind) -> tuple[list[str], list[str]]:
    errors = check_known_keys(sections, lines)
    if errors:
        return errors, []
    errors = validate_schema(sections, "run_config", lines)
    if errors:
        return errors, []
    return validate_cross_references(sections, lines, experiment)
