"""Synthetic cost profiles standing in for measured lookup tables.

Every number produced here is invented. The presets are shaped so that the
search has something to find: CUs trade latency for energy and differ in
which layer kinds they run well, and inter-CU transfers are cheap relative
to block compute.
"""

from __future__ import annotations

import dataclasses
from typing import Mapping

import numpy as np

from vigmap.archspace import (Backbone, DimensionSchedule, GraphOp, SpaceConfig, UnitKind,
                              UnitSignature)
from vigmap.errors import ConfigError
from vigmap.hwmodel.costs import KEY_FIELDS, CostRecord, CostTable, cost_key
from vigmap.hwmodel.platform import ComputeUnit, DvfsSetting, Platform

# layer kinds the synthetic model prices directly; blocks are sums of these
PRIMITIVES = ("stem", "grapher_pre", "grapher_agg", "grapher_comb", "grapher_post",
              "ffn_fc1", "ffn_fc2", "classifier")

# (aggregation, combination) work multipliers per graph operator
DEFAULT_OP_COST = {
    GraphOp.MAX_RELATIVE: (1.0, 2.0),
    GraphOp.EDGE_CONV: (1.6, 2.7),
    GraphOp.GRAPH_SAGE: (1.2, 2.3),
    GraphOp.GIN: (0.8, 1.0),
}


@dataclasses.dataclass(frozen=True)
class CuProfile:
    id: str
    symbol: str
    latency: Mapping[str, float]
    energy: Mapping[str, float]
    transfer_latency: float = 1.0
    transfer_energy: float = 1.0
    # exponent on (tensor volume / reference volume); <0 favours large tensors
    shape_bias: float = 0.0
    clock: str | None = None
    kinds: tuple[str, ...] | None = None
    unsupported_ops: tuple[str, ...] = ()

    def multiplier(self, table: Mapping[str, float], kind: str) -> float:
        return float(table.get(kind, table.get("default", 1.0)))

    def compute_unit(self) -> ComputeUnit:
        kinds = None if self.kinds is None else frozenset(UnitKind(k) for k in self.kinds)
        return ComputeUnit(self.id, self.symbol, kinds, frozenset(self.unsupported_ops),
                           self.clock)


@dataclasses.dataclass(frozen=True)
class DvfsRule:
    """Multiplicative clock scaling.

    Compute latency scales as (f_max/f)^a_core * (emc_max/emc)^a_mem with the
    exponents chosen per layer class (``sparse`` for aggregation, ``dense``
    otherwise); transfers scale with the memory and host clocks. Power is a
    static share plus dynamic terms in each clock; energy = power x time.
    """

    memory_domain: str = "emc"
    host_domain: str = "cpu"
    core_exp: Mapping[str, float] = dataclasses.field(
        default_factory=lambda: {"dense": 0.9, "sparse": 0.45})
    mem_exp: Mapping[str, float] = dataclasses.field(
        default_factory=lambda: {"dense": 0.1, "sparse": 0.5})
    transfer_mem_exp: float = 0.8
    transfer_host_exp: float = 0.3
    static_power: float = 0.35
    core_power_exp: float = 2.5
    power_weights: tuple[float, float, float] = (0.75, 0.15, 0.10)  # core, memory, host

    def as_dict(self) -> dict:
        return {k: (dict(v) if isinstance(v, Mapping) else list(v) if isinstance(v, tuple) else v)
                for k, v in dataclasses.asdict(self).items()}


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    name: str
    cus: tuple[CuProfile, ...]
    space: SpaceConfig
    latency_per_gop: float = 12.0
    energy_per_gop: float = 220.0
    transfer_latency_base: float = 0.005
    transfer_latency_per_mb: float = 0.05
    transfer_energy_base: float = 0.05
    transfer_energy_per_mb: float = 0.5
    noise: float = 0.08
    op_cost: Mapping[GraphOp, tuple[float, float]] = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_OP_COST))
    clock_domains: tuple[tuple[str, tuple[int, ...]], ...] = ()
    dvfs_rule: DvfsRule | None = None

    def validate(self) -> None:
        if not self.cus:
            raise ConfigError("synthetic spec needs at least one CU")
        for cu in self.cus:
            for table in (cu.latency, cu.energy):
                for kind, v in table.items():
                    if not v > 0:
                        raise ConfigError(f"CU {cu.id!r}: multiplier for {kind!r} must be "
                                          f"positive, got {v}")
            if not (cu.transfer_latency > 0 and cu.transfer_energy > 0):
                raise ConfigError(f"CU {cu.id!r}: transfer multipliers must be positive")
        for name in ("latency_per_gop", "energy_per_gop"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("transfer_latency_base", "transfer_latency_per_mb",
                     "transfer_energy_base", "transfer_energy_per_mb"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 <= self.noise < 0.5:
            raise ConfigError("noise must be in [0, 0.5)")
        for op, mults in self.op_cost.items():
            if min(mults) <= 0:
                raise ConfigError(f"op cost multipliers for {op} must be positive")
        self.space.validate()

    def platform(self) -> Platform:
        rules = {} if self.dvfs_rule is None else self.dvfs_rule.as_dict()
        return Platform(self.name, tuple(cu.compute_unit() for cu in self.cus),
                        self.clock_domains, dvfs_rules=rules)


def _layer_work(kind: str, unit: UnitSignature, spec: SynthSpec) -> float:
    n, d = unit.nodes, unit.dim
    if kind == "stem":
        return unit.nodes ** 2 * d * 0.5
    if kind == "classifier":
        return d * 2048 + 1024 * unit.nodes
    if kind in ("grapher_pre", "grapher_post"):
        return n * d * d
    if kind == "grapher_agg":
        return n * unit.k_neighbors * d * 8 * spec.op_cost[unit.graph_op][0]
    if kind == "grapher_comb":
        return n * d * d * spec.op_cost[unit.graph_op][1]
    if kind in ("ffn_fc1", "ffn_fc2"):
        return n * d * unit.ffn_width
    raise ValueError(kind)


def _primitives(unit: UnitSignature) -> list[tuple[str, UnitSignature]]:
    """Constituent primitive layers of a unit (itself when already primitive)."""
    kind = unit.kind
    rep = dataclasses.replace
    if kind is UnitKind.GRAPHER:
        parts = []
        if unit.fc_pre_present:
            parts.append(("grapher_pre", rep(unit, kind=UnitKind.GRAPHER_PRE, graph_op=None,
                                             fc_pre_present=None)))
        parts += [
            ("grapher_agg", rep(unit, kind=UnitKind.GRAPHER_AGG, fc_pre_present=None)),
            ("grapher_comb", rep(unit, kind=UnitKind.GRAPHER_COMB, fc_pre_present=None)),
            ("grapher_post", rep(unit, kind=UnitKind.GRAPHER_POST, graph_op=None,
                                 fc_pre_present=None)),
        ]
        return parts
    if kind is UnitKind.FFN:
        return [("ffn_fc1", rep(unit, kind=UnitKind.FFN_FC1)),
                ("ffn_fc2", rep(unit, kind=UnitKind.FFN_FC2))]
    return [(kind.value, unit)]


def reachable_units(space: SpaceConfig) -> list[UnitSignature]:
    """Every unit signature any genome of the space can produce, both granularities."""
    sched = space.schedule
    units = [UnitSignature(UnitKind.STEM, None, None, space.resolution, sched.dims[0],
                           None, None, None),
             UnitSignature(UnitKind.CLASSIFIER, None, None, space.num_classes,
                           sched.dims[-1], None, None, None)]
    for i in range(space.superblocks):
        n, d, k = sched.nodes[i], sched.dims[i], sched.k[i]
        for op in space.graph_ops:
            for pre in space.fc_pre:
                units.append(UnitSignature(UnitKind.GRAPHER, i, op, n, d, k, None, pre))
            units.append(UnitSignature(UnitKind.GRAPHER_AGG, i, op, n, d, k, None, None))
            units.append(UnitSignature(UnitKind.GRAPHER_COMB, i, op, n, d, k, None, None))
        for w in space.widths:
            for kind in (UnitKind.FFN, UnitKind.FFN_FC1, UnitKind.FFN_FC2):
                units.append(UnitSignature(kind, i, None, n, d, k, w, None))
        units.append(UnitSignature(UnitKind.GRAPHER_PRE, i, None, n, d, k, None, None))
        units.append(UnitSignature(UnitKind.GRAPHER_POST, i, None, n, d, k, None, None))
    return units


def _clock_ratio(setting: DvfsSetting | None, domains: dict, name: str | None) -> float:
    """f / f_max for a domain; 1 when the domain is absent."""
    if setting is None or name is None or name not in domains:
        return 1.0
    return setting.clock(name) / max(domains[name])


def _dvfs_factors(rule: DvfsRule | None, setting: DvfsSetting | None, domains: dict,
                  cu: CuProfile, layer_class: str) -> tuple[float, float, float, float]:
    """(compute latency, compute energy, transfer latency, transfer energy) multipliers."""
    if rule is None or setting is None:
        return 1.0, 1.0, 1.0, 1.0
    core = _clock_ratio(setting, domains, cu.clock)
    mem = _clock_ratio(setting, domains, rule.memory_domain)
    host = _clock_ratio(setting, domains, rule.host_domain)
    lat = core ** -rule.core_exp[layer_class] * mem ** -rule.mem_exp[layer_class]
    wc, wm, wh = rule.power_weights
    s = rule.static_power
    power = s + (1 - s) * (wc * core ** rule.core_power_exp + wm * mem ** 2 + wh * host ** 2)
    t_lat = mem ** -rule.transfer_mem_exp * host ** -rule.transfer_host_exp
    t_power = s + (1 - s) * (wm * mem ** 2 + wh * host ** 2) / (wm + wh)
    return lat, lat * power, t_lat, t_lat * t_power


def synth_profile(seed: int, spec: SynthSpec) -> CostTable:
    """Deterministic synthetic cost table covering every unit the space can produce."""
    spec.validate()
    rng = np.random.default_rng(seed)
    units = reachable_units(spec.space)
    domains = dict(spec.clock_domains)
    platform = spec.platform()
    settings = platform.dvfs_settings()
    sched = spec.space.schedule
    ref_volume = sched.nodes[0] * sched.dims[0]

    # one noise draw per (primitive key, CU, metric), in sorted key order
    prim_keys = sorted({cost_key(p) for u in units for _, p in _primitives(u)},
                       key=lambda k: tuple("" if v is None else str(v) for v in k))
    noise = {}
    for key in prim_keys:
        for cu in spec.cus:
            draws = rng.uniform(1 - spec.noise, 1 + spec.noise, size=4)
            noise[(key, cu.id)] = draws

    entries = {}
    for unit in units:
        key = cost_key(unit)
        volume = unit.nodes * unit.dim
        if unit.kind is UnitKind.STEM:
            volume = ref_volume
        mb = volume * 2 / 1e6
        for cu in spec.cus:
            if not cu.compute_unit().supports(unit):
                continue
            shape = (volume / ref_volume) ** cu.shape_bias
            for setting in settings or [None]:
                comp_lat = comp_en = 0.0
                for kind, prim in _primitives(unit):
                    layer_class = "sparse" if kind == "grapher_agg" else "dense"
                    f_lat, f_en, _, _ = _dvfs_factors(spec.dvfs_rule, setting, domains, cu,
                                                      layer_class)
                    gop = _layer_work(kind, prim, spec) / 1e9
                    nz = noise[(cost_key(prim), cu.id)]
                    comp_lat += (gop * spec.latency_per_gop * cu.multiplier(cu.latency, kind)
                                 * shape * nz[0] * f_lat)
                    comp_en += (gop * spec.energy_per_gop * cu.multiplier(cu.energy, kind)
                                * shape * nz[1] * f_en)
                _, _, t_lat, t_en = _dvfs_factors(spec.dvfs_rule, setting, domains, cu, "dense")
                nz = noise[(cost_key(_primitives(unit)[0][1]), cu.id)]
                xfer_lat = ((spec.transfer_latency_base + spec.transfer_latency_per_mb * mb)
                            * cu.transfer_latency * t_lat)
                xfer_en = ((spec.transfer_energy_base + spec.transfer_energy_per_mb * mb)
                           * cu.transfer_energy * t_en)
                dvfs = setting.id if setting is not None else platform.default_dvfs
                entries[(key, cu.id, dvfs)] = CostRecord(
                    comp_lat, comp_en,
                    xfer_lat * nz[2], xfer_lat * nz[3],
                    xfer_en * nz[2], xfer_en * nz[3])
    return CostTable(entries, KEY_FIELDS)


# ---------------------------------------------------------------------------
# presets

XAVIER_CLOCKS = (("cpu", (1728, 2265)), ("gpu", (520, 900, 1377)), ("emc", (1065, 2133)),
                 ("dla", (1050, 1395)))


def xavier_like(space: SpaceConfig | None = None) -> SynthSpec:
    """Two CUs: ``gpu`` is the fast one, ``dla`` the energy-efficient one.

    Whole-model standalone latency and energy differ by roughly 2x in
    opposite directions. Graph aggregation is comparatively poor on the
    DLA while the FFN layers suit it, so splitting the work pays off.
    """
    gpu = CuProfile("gpu", "G", latency={"default": 1.0}, energy={"default": 1.0},
                    clock="gpu")
    dla = CuProfile(
        "dla", "D",
        latency={"grapher_agg": 3.0, "grapher_comb": 2.3, "grapher_pre": 2.0,
                 "grapher_post": 2.0, "ffn_fc1": 1.25, "ffn_fc2": 1.25, "default": 1.6},
        energy={"grapher_agg": 0.85, "grapher_comb": 0.75, "grapher_pre": 0.7,
                "grapher_post": 0.7, "ffn_fc1": 0.25, "ffn_fc2": 0.25, "default": 0.5},
        transfer_latency=1.2, transfer_energy=0.8, clock="dla")
    return SynthSpec("xavier-like", (gpu, dla), space or SpaceConfig(), noise=0.06,
                     clock_domains=XAVIER_CLOCKS, dvfs_rule=DvfsRule())


def maestro_3cu(space: SpaceConfig | None = None) -> SynthSpec:
    """Three dataflow-flavoured accelerators on a pyramid backbone.

    ``dsa-d`` is the better whole-model deployment for grapher-heavy
    networks, while ``dsa-k`` is both faster and more frugal on FFN layers.
    ``dsa-y`` is fast, power hungry, and strongest on aggregation and large
    early-stage tensors.
    """
    if space is None:
        space = SpaceConfig(backbone=Backbone.PYRAMID,
                            schedule=DimensionSchedule.pyramid_synthetic())
    k = CuProfile("dsa-k", "K",
                  latency={"grapher_agg": 3.0, "grapher_comb": 1.05, "grapher_pre": 0.95,
                           "grapher_post": 0.95, "ffn_fc1": 0.65, "ffn_fc2": 0.65,
                           "stem": 1.3, "default": 1.1},
                  energy={"grapher_agg": 2.6, "grapher_comb": 0.95, "grapher_pre": 0.85,
                          "grapher_post": 0.85, "ffn_fc1": 0.55, "ffn_fc2": 0.55,
                          "stem": 1.2, "default": 1.0},
                  shape_bias=0.08)
    y = CuProfile("dsa-y", "Y",
                  latency={"grapher_agg": 0.5, "grapher_comb": 0.85, "grapher_pre": 0.9,
                           "grapher_post": 0.9, "ffn_fc1": 1.0, "ffn_fc2": 1.0,
                           "stem": 0.7, "default": 0.9},
                  energy={"grapher_agg": 1.0, "grapher_comb": 1.35, "grapher_pre": 1.35,
                          "grapher_post": 1.35, "ffn_fc1": 1.5, "ffn_fc2": 1.5,
                          "stem": 1.2, "default": 1.3},
                  shape_bias=-0.12)
    d = CuProfile("dsa-d", "D",
                  latency={"grapher_agg": 1.6, "grapher_comb": 0.95, "grapher_pre": 0.95,
                           "grapher_post": 0.95, "ffn_fc1": 1.25, "ffn_fc2": 1.25,
                           "stem": 1.1, "default": 1.0},
                  energy={"grapher_agg": 1.4, "grapher_comb": 0.8, "grapher_pre": 0.8,
                          "grapher_post": 0.8, "ffn_fc1": 1.15, "ffn_fc2": 1.15,
                          "stem": 1.0, "default": 0.9})
    return SynthSpec("maestro-3cu", (k, y, d), space, latency_per_gop=10.0,
                     energy_per_gop=150.0, transfer_latency_base=0.004,
                     transfer_latency_per_mb=0.04, transfer_energy_base=0.04,
                     transfer_energy_per_mb=0.4)


PRESETS = {"xavier-like": xavier_like, "maestro-3cu": maestro_3cu}


def preset(name: str, space: SpaceConfig | None = None) -> SynthSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return factory(space)
