"""Heterogeneous SoC model: platforms, cost tables and mapping evaluation."""

from vigmap.hwmodel.costs import (COST_FIELDS, KEY_FIELDS, CostRecord, CostTable, MappingVector,
                                  PerfEval, PlanCosts, UnitEval, cost_key, evaluate,
                                  mapping_string, standalone_eval, utilization)
from vigmap.hwmodel.platform import ComputeUnit, DvfsSetting, Platform
from vigmap.hwmodel.profile_io import (fixture_path, load_cost_table, load_platform, parse_cost_table,
                                       save_cost_table, save_platform)
from vigmap.hwmodel.synth import PRESETS, CuProfile, DvfsRule, SynthSpec, preset, synth_profile

__all__ = [
    "COST_FIELDS", "KEY_FIELDS", "ComputeUnit", "CostRecord", "CostTable", "CuProfile",
    "DvfsRule", "DvfsSetting", "MappingVector", "PRESETS", "PerfEval", "Platform", "PlanCosts",
    "SynthSpec", "UnitEval", "cost_key", "evaluate", "fixture_path", "load_cost_table", "load_platform",
    "mapping_string", "parse_cost_table", "preset", "save_cost_table", "save_platform",
    "standalone_eval", "synth_profile", "utilization",
]
