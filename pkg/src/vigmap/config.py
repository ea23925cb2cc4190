"""TOML run configuration with sections [archspace] [platform] [ioe] [ooe] [analysis].

Relative file paths inside a config resolve against the config file's
directory. Unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from vigmap.archspace import (Backbone, DimensionSchedule, Granularity, SpaceConfig)
from vigmap.errors import ConfigError
from vigmap.hwmodel import CostTable, Platform, load_cost_table, load_platform, preset, synth_profile
from vigmap.hwmodel.synth import SynthSpec
from vigmap.ioe import DEFAULT_ORACLE_BUDGET, Constraints, IoeConfig
from vigmap.ooe import AccuracyModel, OoeConfig, SurrogateParams

CONFIG_DIR_ENV = "VIGMAP_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "vigmap.toml"

_SECTIONS = {
    "": {"seed", "archspace", "platform", "ioe", "ooe", "analysis"},
    "archspace": {"superblocks", "depths", "graph_ops", "fc_pre", "ffn_use", "widths",
                  "backbone", "nodes", "dims", "k", "schedule", "resolution", "num_classes",
                  "granularity"},
    "platform": {"preset", "profile_seed", "platform_file", "cost_table"},
    "ioe": {"population", "generations", "mutation_prob", "crossover_prob", "gamma1",
            "gamma2", "elite_fraction", "dvfs_mode", "budget", "exhaustive_init",
            "stall_generations", "constraints"},
    "ioe.constraints": {"latency", "energy", "power", "latency_increase"},
    "ooe": {"population", "generations", "elite_fraction", "mutation_prob", "crossover_prob",
            "fitness_weights", "accuracy", "dataset", "surrogate"},
    "ooe.surrogate": {"base", "cap", "op", "ffn", "fc_pre", "ref_width"},
    "analysis": {"reference", "oracle_budget"},
}


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    reference: tuple[float, float, float] | None = None
    oracle_budget: int = DEFAULT_ORACLE_BUDGET


@dataclasses.dataclass
class RunConfig:
    path: Path | None
    sha256: str
    seed: int
    space: SpaceConfig
    granularity: Granularity
    platform: Platform
    table: CostTable
    ioe: IoeConfig
    ooe: OoeConfig
    accuracy: AccuracyModel
    analysis: AnalysisConfig
    raw: dict


def _check_keys(doc: dict, section: str) -> None:
    allowed = _SECTIONS[section]
    for key, val in doc.items():
        name = f"{section}.{key}" if section else key
        if key not in allowed:
            raise ConfigError(f"unknown config key [{section or 'top level'}] {key!r}")
        if name in _SECTIONS and not isinstance(val, dict):
            raise ConfigError(f"config key {name!r} must be a table")
        if name in _SECTIONS:
            _check_keys(val, name)


def _get(doc: dict, key: str, kind, section: str, default=None):
    if key not in doc:
        return default
    val = doc[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
        raise ConfigError(f"[{section}] {key} must be {getattr(kind, '__name__', kind)}, "
                          f"got {val!r}")
    return val


def space_from_dict(doc: dict) -> tuple[SpaceConfig, Granularity]:
    s = "archspace"
    superblocks = _get(doc, "superblocks", int, s, 4)
    backbone = Backbone(_get(doc, "backbone", str, s, "isotropic"))
    preset_sched = _get(doc, "schedule", str, s)
    if preset_sched == "pyramid-synthetic":
        schedule = DimensionSchedule.pyramid_synthetic()
    elif preset_sched not in (None, "isotropic"):
        raise ConfigError(f"[archspace] unknown schedule preset {preset_sched!r}")
    else:
        schedule = DimensionSchedule.isotropic(superblocks)

    def per_sb(key, current):
        val = doc.get(key)
        if val is None:
            return current
        if isinstance(val, int):
            return (val,) * superblocks
        if isinstance(val, list) and all(isinstance(v, int) for v in val):
            return tuple(val)
        raise ConfigError(f"[archspace] {key} must be an integer or a list of integers")

    try:
        schedule = DimensionSchedule(per_sb("nodes", schedule.nodes), per_sb("dims", schedule.dims),
                                     per_sb("k", schedule.k))
        kw = {}
        for key in ("depths", "graph_ops", "fc_pre", "ffn_use", "widths"):
            if key in doc:
                if not isinstance(doc[key], list):
                    raise ConfigError(f"[archspace] {key} must be a list")
                kw[key] = tuple(doc[key])
        space = SpaceConfig(superblocks=superblocks, backbone=backbone, schedule=schedule,
                            resolution=_get(doc, "resolution", int, s, 224),
                            num_classes=_get(doc, "num_classes", int, s, 100), **kw)
        granularity = Granularity(_get(doc, "granularity", str, s, "blockwise"))
    except ValueError as exc:
        raise ConfigError(f"[archspace] {exc}") from None
    space.validate()
    return space, granularity


def ioe_from_dict(doc: dict) -> IoeConfig:
    s = "ioe"
    cons = None
    if "constraints" in doc:
        c = doc["constraints"]
        cons = Constraints(**{k: _get(c, k, float, "ioe.constraints") for k in c})
    gens = doc.get("generations", 10)
    if gens is not None and (not isinstance(gens, int) or isinstance(gens, bool)):
        raise ConfigError(f"[ioe] generations must be int, got {gens!r}")
    return IoeConfig(
        population=_get(doc, "population", int, s, 200),
        generations=gens,
        mutation_prob=_get(doc, "mutation_prob", float, s, 0.4),
        crossover_prob=_get(doc, "crossover_prob", float, s, 0.8),
        gamma1=_get(doc, "gamma1", float, s, 1.0),
        gamma2=_get(doc, "gamma2", float, s, 1.0),
        elite_fraction=_get(doc, "elite_fraction", float, s, 0.5),
        constraints=cons,
        dvfs_mode=_get(doc, "dvfs_mode", str, s, "max"),
        budget=_get(doc, "budget", int, s),
        exhaustive_init=_get(doc, "exhaustive_init", bool, s, True),
        stall_generations=_get(doc, "stall_generations", int, s, 50),
    )


def ooe_from_dict(doc: dict, ioe: IoeConfig, granularity: Granularity) -> OoeConfig:
    s = "ooe"
    weights = doc.get("fitness_weights", [1.0, 1.0, 1.0])
    if not (isinstance(weights, list) and len(weights) == 3
            and all(isinstance(w, (int, float)) for w in weights)):
        raise ConfigError("[ooe] fitness_weights must be a list of three numbers")
    return OoeConfig(
        population=_get(doc, "population", int, s, 100),
        generations=_get(doc, "generations", int, s, 50),
        elite_fraction=_get(doc, "elite_fraction", float, s, 0.30),
        mutation_prob=_get(doc, "mutation_prob", float, s, 0.4),
        crossover_prob=_get(doc, "crossover_prob", float, s, 0.5),
        fitness_weights=tuple(float(w) for w in weights),
        granularity=granularity,
        ioe=ioe,
    )


def accuracy_from_dict(doc: dict, base: Path) -> AccuracyModel:
    acc = doc.get("accuracy", "surrogate")
    if acc == "surrogate":
        sur = doc.get("surrogate", {})
        try:
            return AccuracyModel("surrogate", surrogate=SurrogateParams(**sur))
        except TypeError as exc:
            raise ConfigError(f"[ooe.surrogate] {exc}") from None
    if not isinstance(acc, str):
        raise ConfigError("[ooe] accuracy must be 'surrogate' or a CSV path")
    path = _resolve(base, acc)
    if not path.exists():
        raise ConfigError(f"[ooe] accuracy table not found: {path}")
    dataset = doc.get("dataset")
    if dataset is not None and not isinstance(dataset, str):
        raise ConfigError("[ooe] dataset must be a string")
    return AccuracyModel.from_csv(path, dataset)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def platform_from_section(doc: dict, space: SpaceConfig, base: Path) -> tuple[Platform, CostTable]:
    s = "platform"
    name = _get(doc, "preset", str, s)
    pfile = _get(doc, "platform_file", str, s)
    tfile = _get(doc, "cost_table", str, s)
    if name is not None:
        if pfile or tfile:
            raise ConfigError("[platform] give either preset or platform_file + cost_table")
        spec: SynthSpec = preset(name, space)
        return spec.platform(), synth_profile(_get(doc, "profile_seed", int, s, 0), spec)
    if not (pfile and tfile):
        raise ConfigError("[platform] needs preset, or both platform_file and cost_table")
    platform = load_platform(_resolve(base, pfile))
    return platform, load_cost_table(_resolve(base, tfile), platform)


_SPEC_SCALARS = ("latency_per_gop", "energy_per_gop", "transfer_latency_base",
                 "transfer_latency_per_mb", "transfer_energy_base", "transfer_energy_per_mb",
                 "noise")


def synth_spec_from_dict(doc: dict) -> SynthSpec:
    """A generator spec file: ``preset = "..."`` plus scalar overrides and [archspace]."""
    unknown = set(doc) - {"preset", "name", "archspace", *_SPEC_SCALARS}
    if unknown:
        raise ConfigError(f"unknown spec keys {sorted(unknown)}")
    name = doc.get("preset")
    if not isinstance(name, str):
        raise ConfigError("spec file needs preset = \"<name>\"")
    space = None
    if "archspace" in doc:
        _check_keys(doc["archspace"], "archspace")
        space, _ = space_from_dict(doc["archspace"])
    spec = preset(name, space)
    changes = {k: float(doc[k]) for k in _SPEC_SCALARS if k in doc}
    if "name" in doc:
        changes["name"] = str(doc["name"])
    spec = dataclasses.replace(spec, **changes)
    spec.validate()
    return spec


def find_config(path: str | None) -> Path:
    """Locate a config file, falling back to the directory named by the env var."""
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if path is None:
        candidates = [Path(DEFAULT_CONFIG_NAME)]
        if env_dir:
            candidates.append(Path(env_dir) / DEFAULT_CONFIG_NAME)
    else:
        candidates = [Path(path)]
        if env_dir and not Path(path).is_absolute():
            candidates.append(Path(env_dir) / path)
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"config file not found (looked in {[str(c) for c in candidates]})")


def _set_dotted(doc: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    cur = doc
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"override {dotted!r} crosses a non-table key")
    cur[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``section.key=value`` where value is parsed as a TOML value (bare words are strings)."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.strip(), value


def load_config(path, overrides: list[tuple[str, Any]] = ()) -> RunConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = tomllib.loads(data.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for key, value in overrides:
        _set_dotted(doc, key, value)
    digest = hashlib.sha256(data)
    if overrides:
        digest.update(json.dumps(sorted(overrides, key=lambda kv: kv[0]), default=str).encode())
    return config_from_dict(doc, path.parent, path, digest.hexdigest())


def config_from_dict(doc: dict, base: Path = Path("."), path: Path | None = None,
                     sha256: str | None = None) -> RunConfig:
    _check_keys(doc, "")
    if sha256 is None:
        sha256 = hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()
    seed = _get(doc, "seed", int, "top level", 0)
    space, granularity = space_from_dict(doc.get("archspace", {}))
    platform, table = platform_from_section(doc.get("platform", {"preset": "xavier-like"}),
                                            space, base)
    ioe = ioe_from_dict(doc.get("ioe", {}))
    ooe = ooe_from_dict(doc.get("ooe", {}), ioe, granularity)
    accuracy = accuracy_from_dict(doc.get("ooe", {}), base)
    an = doc.get("analysis", {})
    ref = an.get("reference")
    if ref is not None and not (isinstance(ref, list) and len(ref) == 3):
        raise ConfigError("[analysis] reference must be [accuracy, latency, energy]")
    analysis = AnalysisConfig(tuple(float(v) for v in ref) if ref is not None else None,
                              _get(an, "oracle_budget", int, "analysis", DEFAULT_ORACLE_BUDGET))
    return RunConfig(path, sha256, seed, space, granularity, platform, table, ioe, ooe,
                     accuracy, analysis, doc)
