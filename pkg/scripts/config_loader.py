#!/usr/bin/env python3

import logging
import re
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from models import (
    Activation,
    CircleProjection,
    DataConfig,
    DatasetKind,
    ExperimentKind,
    GradcheckConfig,
    InitKind,
    LossKind,
    ModelConfig,
    OptimizerConfig,
    OptimizerName,
    RunConfig,
    SamplerConfig,
    StudyConfig,
    Variant,
)
from validators import Lines, validate_all, variant_sections


SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
FLOAT_RE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


def _coerce(value: Any) -> Any:
    # PyYAML's YAML 1.1 resolver leaves "5e-5" and "1e-8" as strings
    if isinstance(value, str) and FLOAT_RE.match(value.strip()):
        return float(value)
    if isinstance(value, list):
        return [_coerce(v) for v in value]
    return value


def read_sections(path: Path) -> tuple[dict[str, dict[str, Any]], Lines]:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"Config file not found: {path}"])

    sections: dict[str, dict[str, Any]] = {}
    lines: Lines = {}
    errors = []
    current = None

    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue

            header = SECTION_RE.match(text)
            if header:
                current = header.group(1)
                if current in sections:
                    errors.append(f"line {lineno}: duplicate section [{current}]")
                sections.setdefault(current, {})
                lines[(current, None)] = lineno
                continue

            if "=" not in text:
                errors.append(f"line {lineno}: expected 'key = value', got '{text}'")
                continue
            key, value_text = (part.strip() for part in text.split("=", 1))
            if current is None:
                errors.append(f"line {lineno}: '{key}' appears before any [section]")
                continue
            if not KEY_RE.match(key):
                errors.append(f"line {lineno}: invalid key '{key}'")
                continue
            if key in sections[current]:
                errors.append(f"line {lineno}: duplicate key '{key}' in [{current}]")
                continue
            if not value_text:
                errors.append(f"line {lineno}: missing value for '{key}'")
                continue
            try:
                value = yaml.safe_load(value_text)
            except yaml.YAMLError as e:
                errors.append(f"line {lineno}: cannot parse value of '{key}': {e}")
                continue
            sections[current][key] = _coerce(value)
            lines[(current, key)] = lineno

    if errors:
        raise ConfigError(errors)
    return sections, lines


def _take(values: dict, cls, converters: dict) -> dict:
    names = {f.name for f in fields(cls)}
    out = {}
    for key, value in values.items():
        if key in names:
            out[key] = converters[key](value) if key in converters else value
    return out


OPTIMIZER_CONVERTERS = {
    "name": OptimizerName,
    "circle_projection": CircleProjection,
    "init": InitKind,
    "h": float,
    "gamma": float,
    "tau": float,
    "momentum": float,
    "weight_decay": float,
    "tol": float,
    "orth_penalty": float,
    "radii": lambda v: [float(r) for r in v],
    "K": int,
    "split": str,
}


def build_run_config(sections: dict, experiment: ExperimentKind, source: Optional[str] = None) -> RunConfig:
    run = sections.get("run", {})
    seeds = run.get("seeds", 1)
    config = RunConfig(
        experiment=experiment,
        seeds=list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds],
        out_dir=str(run.get("out", RunConfig.out_dir)),
        threads=int(run.get("threads", 1)),
        epochs=int(run.get("epochs", RunConfig.epochs)),
        eval_every=int(run.get("eval_every", RunConfig.eval_every)),
        record_wall_time=bool(run.get("record_wall_time", False)),
        export_grid=bool(run.get("export_grid", False)),
        export_gradients=bool(run.get("export_gradients", False)),
        source=source,
    )

    config.data = DataConfig(**_take(sections.get("data", {}), DataConfig, {
        "dataset": DatasetKind, "sigma": float, "batch_fraction": float,
    }))
    config.model = ModelConfig(**_take(sections.get("model", {}), ModelConfig, {
        "activation": Activation, "loss": LossKind, "init": InitKind,
    }))
    config.study = StudyConfig(**_take(sections.get("study", {}), StudyConfig, {
        "grid_extent": lambda v: [float(e) for e in v], "level": float,
    }))
    sampler_converters = {
        key: float for key in ("beta", "radius", "h", "slope", "l1_threshold", "uniform_sigmas",
                               "ergodic_sigmas", "clt_tolerance", "orth_h", "orth_gamma",
                               "orth_tau", "orth_threshold")
    }
    sampler_converters.update({
        key: int for key in ("steps", "burn_in", "chains", "bins", "clt_t0", "clt_chains",
                             "orth_rows", "orth_cols", "orth_steps")
    })
    config.sampler = SamplerConfig(**_take(sections.get("sampler", {}), SamplerConfig, sampler_converters))
    config.gradcheck = GradcheckConfig(**_take(sections.get("gradcheck", {}), GradcheckConfig, {
        "activation": Activation, "eps": float, "threshold": float,
    }))

    base = OptimizerConfig()
    for label, values in variant_sections(sections).items():
        optimizer = replace(base, **_take(values, OptimizerConfig, OPTIMIZER_CONVERTERS))
        config.variants.append(Variant(label=label, optimizer=optimizer))
    return config


def parse_config(path, experiment: Optional[ExperimentKind] = None) -> RunConfig:
    sections, lines = read_sections(Path(path))

    declared = sections.get("run", {}).get("experiment")
    if experiment is None:
        try:
            experiment = ExperimentKind(declared or ExperimentKind.TRAIN.value)
        except ValueError:
            # reported by schema validation below
            experiment = ExperimentKind.TRAIN
    elif declared and declared != experiment.value:
        logging.warning(f"Config declares experiment '{declared}', running '{experiment.value}'")

    errors, warnings = validate_all(sections, lines, experiment)
    for warning in warnings:
        logging.warning(warning)
    if errors:
        raise ConfigError(errors)

    config = build_run_config(sections, experiment, source=str(path))
    logging.info(
        f"Loaded {path}: {experiment.value}, {len(config.variants)} variant(s), "
        f"{len(config.seeds)} seed(s)"
    )
    return config
