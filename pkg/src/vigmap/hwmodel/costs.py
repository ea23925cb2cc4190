"""Lookup-table cost model and pipelined latency/energy evaluation.

A unit's total latency is its compute latency plus an input transfer when
its predecessor ran on a different CU and an output transfer when its
successor does. Energy follows the same pattern. The first unit never pays
an input transfer and the last never pays an output transfer: model input
and output already live in shared memory.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from vigmap.archspace import UnitKind, UnitSignature, WorkloadPlan
from vigmap.errors import ConfigError, InfeasibleError, LookupMissError, ProfileError
from vigmap.hwmodel.platform import ComputeUnit, Platform

KEY_FIELDS = ("kind", "superblock_index", "graph_op", "nodes", "dim", "k", "width", "fc_pre")
COST_FIELDS = ("comp_latency", "comp_energy", "in_latency", "out_latency", "in_energy",
               "out_energy")

# signature fields that influence the cost of each unit kind
_RELEVANT = {
    UnitKind.STEM: {"kind", "nodes", "dim"},
    UnitKind.CLASSIFIER: {"kind", "nodes", "dim"},
    UnitKind.GRAPHER: {"kind", "superblock_index", "graph_op", "nodes", "dim", "k", "fc_pre"},
    UnitKind.FFN: {"kind", "superblock_index", "nodes", "dim", "width"},
    UnitKind.GRAPHER_PRE: {"kind", "superblock_index", "nodes", "dim"},
    UnitKind.GRAPHER_POST: {"kind", "superblock_index", "nodes", "dim"},
    UnitKind.GRAPHER_AGG: {"kind", "superblock_index", "graph_op", "nodes", "dim", "k"},
    UnitKind.GRAPHER_COMB: {"kind", "superblock_index", "graph_op", "nodes", "dim"},
    UnitKind.FFN_FC1: {"kind", "superblock_index", "nodes", "dim", "width"},
    UnitKind.FFN_FC2: {"kind", "superblock_index", "nodes", "dim", "width"},
}

Key = tuple


def signature_fields(unit: UnitSignature) -> dict:
    return {
        "kind": unit.kind.value,
        "superblock_index": unit.superblock_index,
        "graph_op": unit.graph_op.value if unit.graph_op is not None else None,
        "nodes": unit.nodes,
        "dim": unit.dim,
        "k": unit.k_neighbors,
        "width": unit.ffn_width,
        "fc_pre": unit.fc_pre_present,
    }


def canonical_key(fields: Mapping, key_fields: Iterable[str] = KEY_FIELDS) -> Key:
    """Project raw signature fields onto the lookup key, blanking irrelevant ones."""
    kind = UnitKind(fields["kind"])
    keep = _RELEVANT[kind] & set(key_fields)
    return tuple(fields.get(f) if f in keep else None for f in KEY_FIELDS)


def cost_key(unit: UnitSignature, key_fields: Iterable[str] = KEY_FIELDS) -> Key:
    return canonical_key(signature_fields(unit), key_fields)


def describe_key(key: Key) -> str:
    return ",".join(f"{f}={v}" for f, v in zip(KEY_FIELDS, key) if v is not None)


@dataclasses.dataclass(frozen=True)
class CostRecord:
    comp_latency: float
    comp_energy: float
    in_latency: float = 0.0
    out_latency: float = 0.0
    in_energy: float = 0.0
    out_energy: float = 0.0

    def __post_init__(self):
        for f in COST_FIELDS:
            v = float(getattr(self, f))
            if not math.isfinite(v) or v < 0:
                raise ProfileError(f"cost field {f} must be finite and >= 0, got {v}")
            object.__setattr__(self, f, v)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in COST_FIELDS)


@dataclasses.dataclass(frozen=True)
class CostTable:
    entries: Mapping[tuple[Key, str, str], CostRecord]
    key_fields: tuple[str, ...] = KEY_FIELDS

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, unit: UnitSignature, cu_id: str, dvfs: str) -> CostRecord:
        key = cost_key(unit, self.key_fields)
        try:
            return self.entries[(key, cu_id, dvfs)]
        except KeyError:
            raise LookupMissError(
                f"no cost entry for ({describe_key(key)}) on CU {cu_id!r} "
                f"at DVFS {dvfs!r}") from None

    def missing(self, plan: WorkloadPlan, platform: Platform,
                dvfs_ids: Sequence[str] | None = None) -> list[tuple[Key, str, str]]:
        """Every (key, CU, DVFS) triple the plan needs but the table lacks."""
        dvfs_ids = platform.dvfs_ids() if dvfs_ids is None else dvfs_ids
        out = []
        seen = set()
        for unit in plan.units:
            key = cost_key(unit, self.key_fields)
            for cu in platform.cus:
                if not cu.supports(unit):
                    continue
                for d in dvfs_ids:
                    trip = (key, cu.id, d)
                    if trip not in self.entries and trip not in seen:
                        seen.add(trip)
                        out.append(trip)
        return out

    def cu_ids(self) -> set[str]:
        return {cu for _, cu, _ in self.entries}

    def dvfs_ids(self) -> set[str]:
        return {d for _, _, d in self.entries}


@dataclasses.dataclass(frozen=True)
class MappingVector:
    assignments: tuple[str, ...]
    dvfs: str

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(self.assignments))

    def __len__(self) -> int:
        return len(self.assignments)

    def transitions(self) -> int:
        a = self.assignments
        return sum(x != y for x, y in zip(a, a[1:]))

    def check(self, plan: WorkloadPlan, platform: Platform | None = None) -> None:
        if len(self.assignments) != len(plan.units):
            raise ConfigError(f"mapping has {len(self.assignments)} assignments for a "
                              f"{len(plan.units)}-unit plan")
        if platform is None:
            return
        for i, (unit, cu_id) in enumerate(zip(plan.units, self.assignments)):
            if not platform.cu(cu_id).supports(unit):
                raise ConfigError(f"unit {i} ({unit.kind.value}) is not supported on {cu_id!r}")


@dataclasses.dataclass(frozen=True)
class UnitEval:
    latency: float
    energy: float


@dataclasses.dataclass(frozen=True)
class PerfEval:
    total_latency: float
    total_energy: float
    transitions: int
    per_unit: tuple[UnitEval, ...] | None = None

    @property
    def avg_power_mw(self) -> float:
        # mJ / ms = W
        return 1000.0 * self.total_energy / self.total_latency if self.total_latency > 0 else 0.0


def evaluate(plan: WorkloadPlan, mapping: MappingVector, table: CostTable,
             platform: Platform | None = None) -> PerfEval:
    """Reference per-unit evaluation of one mapping."""
    mapping.check(plan, platform)
    a = mapping.assignments
    n = len(a)
    per_unit = []
    for i, unit in enumerate(plan.units):
        rec = table.lookup(unit, a[i], mapping.dvfs)
        lat, en = rec.comp_latency, rec.comp_energy
        if i > 0 and a[i - 1] != a[i]:
            lat += rec.in_latency
            en += rec.in_energy
        if i < n - 1 and a[i] != a[i + 1]:
            lat += rec.out_latency
            en += rec.out_energy
        per_unit.append(UnitEval(lat, en))
    return PerfEval(
        total_latency=math.fsum(u.latency for u in per_unit),
        total_energy=math.fsum(u.energy for u in per_unit),
        transitions=mapping.transitions(),
        per_unit=tuple(per_unit),
    )


def standalone_eval(plan: WorkloadPlan, cu: ComputeUnit | str, table: CostTable,
                    dvfs: str, platform: Platform | None = None) -> PerfEval:
    cu_id = cu if isinstance(cu, str) else cu.id
    if platform is not None:
        cu_obj = platform.cu(cu_id)
        bad = [i for i, u in enumerate(plan.units) if not cu_obj.supports(u)]
        if bad:
            raise InfeasibleError(f"CU {cu_id!r} cannot run units {bad}; "
                                  f"standalone deployment infeasible")
    return evaluate(plan, MappingVector((cu_id,) * len(plan.units), dvfs), table, platform)


class PlanCosts:
    """Dense per-(unit, CU) cost arrays for fast batch evaluation of one plan.

    Mappings are integer arrays of CU indices (platform order). Infeasible
    (unit, CU) pairs hold NaN and are excluded by ``feasible``.
    """

    def __init__(self, plan: WorkloadPlan, table: CostTable, platform: Platform,
                 dvfs: str | None = None):
        self.plan = plan
        self.platform = platform
        self.dvfs = platform.default_dvfs if dvfs is None else dvfs
        n, c = len(plan.units), len(platform.cus)
        arr = np.full((6, n, c), np.nan)
        feasible = np.zeros((n, c), dtype=bool)
        for i, unit in enumerate(plan.units):
            for j, cu in enumerate(platform.cus):
                if not cu.supports(unit):
                    continue
                feasible[i, j] = True
                arr[:, i, j] = table.lookup(unit, cu.id, self.dvfs).as_tuple()
        if not feasible.any(axis=1).all():
            bad = [i for i in range(n) if not feasible[i].any()]
            raise InfeasibleError(f"no CU supports plan units {bad}")
        self.feasible = feasible
        (self.comp_lat, self.comp_en, self.in_lat, self.out_lat,
         self.in_en, self.out_en) = arr
        self.choices = [np.flatnonzero(feasible[i]) for i in range(n)]

    @property
    def n_units(self) -> int:
        return self.feasible.shape[0]

    def feasible_count(self) -> int:
        return math.prod(len(ch) for ch in self.choices)

    def standalone_indices(self) -> list[int]:
        return [j for j in range(self.feasible.shape[1]) if self.feasible[:, j].all()]

    def evaluate_many(self, mappings: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = np.atleast_2d(np.asarray(mappings, dtype=np.intp))
        idx = np.arange(m.shape[1])
        lat = self.comp_lat[idx, m].sum(axis=1)
        en = self.comp_en[idx, m].sum(axis=1)
        change = m[:, 1:] != m[:, :-1]
        lat = lat + (self.in_lat[idx[1:], m[:, 1:]] * change).sum(axis=1)
        lat = lat + (self.out_lat[idx[:-1], m[:, :-1]] * change).sum(axis=1)
        en = en + (self.in_en[idx[1:], m[:, 1:]] * change).sum(axis=1)
        en = en + (self.out_en[idx[:-1], m[:, :-1]] * change).sum(axis=1)
        return lat, en, change.sum(axis=1)

    def to_vector(self, mapping: np.ndarray) -> MappingVector:
        ids = self.platform.cu_ids
        return MappingVector(tuple(ids[int(j)] for j in mapping), self.dvfs)

    def from_vector(self, mapping: MappingVector) -> np.ndarray:
        return np.array([self.platform.cu_index(c) for c in mapping.assignments], dtype=np.intp)


def mapping_string(plan: WorkloadPlan, assignments: Sequence[str], platform: Platform,
                   sep: str = "-", joiner: str = "") -> str:
    """Compact grouped rendering, e.g. ``D-GGGGGGGG-GDDDDGDD-D`` (stem-graphers-ffns-cls)."""
    sym = {cu.id: cu.symbol for cu in platform.cus}
    return sep.join(joiner.join(sym[assignments[i]] for i in idx)
                    for _, idx in plan.group_slices())


def utilization(assignments: Sequence[str], cu_ids: Sequence[str]) -> dict[str, float]:
    n = len(assignments)
    return {cu: sum(a == cu for a in assignments) / n for cu in cu_ids}
