"""Small random instances shared by several test modules."""

from __future__ import annotations

import numpy as np

from vigmap.archspace import (ArchitectureGenome, DimensionSchedule, GraphOp, SuperblockGenes,
                              expand_architecture)
from vigmap.hwmodel import ComputeUnit, CostRecord, CostTable, Platform, cost_key

OPS = list(GraphOp)


def plan_with_units(n_units: int, rng: np.random.Generator, granularity="blockwise"):
    """Blockwise plan of exactly ``n_units`` units built from depth-1 superblocks."""
    inner = n_units - 2
    assert inner >= 1
    sbs = []
    while inner > 0:
        ffn = inner >= 2 and bool(rng.integers(2))
        sbs.append(SuperblockGenes(1, OPS[int(rng.integers(4))], bool(rng.integers(2)), ffn,
                                   int(rng.choice([96, 192, 320]))))
        inner -= 1 + ffn
    genome = ArchitectureGenome(tuple(sbs))
    schedule = DimensionSchedule.isotropic(len(sbs), k=(12,))
    plan = expand_architecture(genome, granularity, schedule)
    assert len(plan) == n_units
    return plan


def random_platform(n_cus: int, dvfs: bool = False) -> Platform:
    cus = tuple(ComputeUnit(f"cu{j}", chr(ord("A") + j)) for j in range(n_cus))
    return Platform("rand", cus)


def random_table(plan, platform, rng, transfer_scale=1.0, zero_transfer=False) -> CostTable:
    entries = {}
    for unit in plan.units:
        key = cost_key(unit)
        for cu in platform.cus:
            trip = (key, cu.id, platform.default_dvfs)
            if trip in entries:
                continue
            lat, en = rng.uniform(1.0, 10.0, size=2)
            tr = np.zeros(4) if zero_transfer else rng.uniform(0.0, 2.0, size=4) * transfer_scale
            entries[trip] = CostRecord(lat, en, *tr)
    return CostTable(entries)


def random_instance(seed: int, n_units: int, n_cus: int, **kw):
    rng = np.random.default_rng(seed)
    plan = plan_with_units(n_units, rng)
    platform = random_platform(n_cus)
    return plan, random_table(plan, platform, rng, **kw), platform


def naive_front(plan, table, platform, bound=None):
    """Independent oracle: every CU product through the reference evaluator, O(n^2) filter.

    ``bound`` is an optional (latency, energy) strict upper bound.
    """
    import itertools

    from vigmap.hwmodel import MappingVector, evaluate

    choices = [[cu.id for cu in platform.cus if cu.supports(u)] for u in plan.units]
    pts = {}
    for a in itertools.product(*choices):
        perf = evaluate(plan, MappingVector(a, platform.default_dvfs), table, platform)
        p = (perf.total_latency, perf.total_energy)
        if bound is not None and not (p[0] < bound[0] and p[1] < bound[1]):
            continue
        pts.setdefault(p, a)
    front = []
    for p, a in pts.items():
        if not any(q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts):
            front.append((p, a))
    return sorted(front)
