"""Regenerate the Xavier AGX reconstruction fixtures under src/vigmap/fixtures.

Only whole-model aggregates were published, so the per-unit split is
synthetic: a seeded random apportionment in 1e-4 ms / mJ ticks chosen so the
constant mappings add up to the published totals. Costs are written with at
most four decimals, which keeps float sums within 1e-9 of the targets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from vigmap.archspace import Granularity, SpaceConfig, UnitKind, parse_genome, plan_for
from vigmap.hwmodel import (ComputeUnit, CostRecord, CostTable, Platform, cost_key,
                            save_cost_table, save_platform)
from vigmap.hwmodel.costs import KEY_FIELDS

OUT = Path(__file__).resolve().parents[1] / "src" / "vigmap" / "fixtures"
TICK = 10_000
DVFS = "nominal"

BASELINES = {
    "b0": "ops=M-M-M-M;d=4,4,4,4;ffn=1,1,1,1;pre=1,1,1,1;w=320,320,320,320",
    "b1": "ops=E-E-E-E;d=4,4,4,4;ffn=1,1,1,1;pre=1,1,1,1;w=320,320,320,320",
    "b2": "ops=G-G-G-G;d=4,4,4,4;ffn=1,1,1,1;pre=1,1,1,1;w=320,320,320,320",
    "b3": "ops=S-S-S-S;d=4,4,4,4;ffn=1,1,1,1;pre=1,1,1,1;w=320,320,320,320",
}
# (latency ms, energy mJ) per CU for the constant mappings
BASELINE_TOTALS = {
    "b0": {"gpu": (25.28, 459.44), "dla": (40.11, 224.41)},
    "b1": {"gpu": (33.74, 770.36), "dla": (62.11, 323.70)},
    "b2": {"gpu": (22.49, 429.07), "dla": (39.62, 214.35)},
    "b3": {"gpu": (29.57, 623.76), "dla": (57.77, 263.48)},
}
A3 = "ops=S-G-S-G;d=2,2,2,2;ffn=1,1,1,1;pre=1,0,0,0;w=192,192,192,192"
A3_TOTALS = {"gpu": (13.42, 273.22), "dla": (25.56, 121.74)}

# relative per-kind weight of one unit, (latency, energy)
KIND_WEIGHT = {UnitKind.STEM: (0.6, 0.5), UnitKind.CLASSIFIER: (0.15, 0.1),
               UnitKind.GRAPHER: (1.0, 1.0), UnitKind.FFN: (0.7, 0.8)}
# transfer cost ranges (ms, mJ) for moving one unit's activations across CUs
TRANSFER_MS = (0.02, 0.12)
TRANSFER_MJ = (0.3, 1.6)


def platform() -> Platform:
    return Platform("xavier-agx-fixture", (ComputeUnit("gpu", "G"), ComputeUnit("dla", "D")))


def ticks(x: float) -> int:
    return round(x * TICK)


def split(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights``; the last slot absorbs rounding."""
    parts = np.floor(total * weights / weights.sum()).astype(np.int64)
    parts[-1] += total - parts.sum()
    assert (parts > 0).all()
    return parts


def jitter(rng, n: int) -> np.ndarray:
    return rng.uniform(0.8, 1.25, n)


def transfer_record(rng, comp_lat: int, comp_en: int) -> CostRecord:
    li, lo = rng.uniform(*TRANSFER_MS, 2)
    ei, eo = rng.uniform(*TRANSFER_MJ, 2)
    return CostRecord(comp_lat / TICK, comp_en / TICK, round(li, 4), round(lo, 4),
                      round(ei, 4), round(eo, 4))


def baseline_table(space: SpaceConfig, rng) -> CostTable:
    """Stem, classifier and FFN keys are shared by b0..b3; grapher keys differ by op."""
    plans = {name: plan_for(parse_genome(g), space, Granularity.BLOCKWISE)
             for name, g in BASELINES.items()}
    b0 = plans["b0"].units
    stem, cls = b0[0], b0[-1]
    ffns = [next(u for u in b0 if u.kind is UnitKind.FFN and u.superblock_index == s)
            for s in range(4)]
    entries = {}
    for ci, cu in enumerate(("gpu", "dla")):
        shared: dict = {}
        for m in range(2):
            smallest = min(ticks(t[cu][m]) for t in BASELINE_TOTALS.values())
            # the shared part is a multiple of 4 so each per-op grapher remainder divides by 4
            c = (int(smallest * 0.32) // 4) * 4
            w = np.concatenate([[KIND_WEIGHT[UnitKind.CLASSIFIER][m]],
                                4 * KIND_WEIGHT[UnitKind.FFN][m] * jitter(rng, 4),
                                [KIND_WEIGHT[UnitKind.STEM][m]]])
            raw = np.floor(c * w / w.sum()).astype(np.int64)
            ffn_v = raw[1:5] // 4
            stem_v = c - raw[0] - 4 * ffn_v.sum()
            shared[m] = {cost_key(cls): raw[0], cost_key(stem): stem_v,
                         **{cost_key(f): v for f, v in zip(ffns, ffn_v)}}
            for name, plan in plans.items():
                rest = (ticks(BASELINE_TOTALS[name][cu][m]) - c) // 4
                assert rest * 4 + c == ticks(BASELINE_TOTALS[name][cu][m])
                graphers = [next(u for u in plan.units
                                 if u.kind is UnitKind.GRAPHER and u.superblock_index == s)
                            for s in range(4)]
                for g, v in zip(graphers, split(rest, jitter(rng, 4))):
                    shared[m][cost_key(g)] = v
        for key in shared[0]:
            entries[(key, cu, DVFS)] = transfer_record(rng, shared[0][key], shared[1][key])
    return CostTable(entries, KEY_FIELDS)


def single_table(genome: str, totals: dict, space: SpaceConfig, rng) -> CostTable:
    plan = plan_for(parse_genome(genome), space, Granularity.BLOCKWISE)
    keys, mult = [], {}
    for u in plan.units:
        k = cost_key(u)
        if k not in mult:
            keys.append((k, u.kind))
            mult[k] = 0
        mult[k] += 1
    # the stem appears once and absorbs the rounding remainder
    order = sorted(keys, key=lambda kk: kk[1] is UnitKind.STEM)
    assert mult[order[-1][0]] == 1
    entries = {}
    for cu in ("gpu", "dla"):
        vals = {}
        for m in range(2):
            total = ticks(totals[cu][m])
            w = np.array([KIND_WEIGHT[kind][m] * mult[k] for k, kind in order]) * jitter(rng, len(order))
            raw = np.floor(total * w / w.sum()).astype(np.int64)
            per = [r // mult[k] for r, (k, _) in zip(raw[:-1], order[:-1])]
            last = total - sum(p * mult[k] for p, (k, _) in zip(per, order[:-1]))
            vals[m] = dict(zip([k for k, _ in order], per + [last]))
        for k, _ in order:
            entries[(k, cu, DVFS)] = transfer_record(rng, vals[0][k], vals[1][k])
    return CostTable(entries, KEY_FIELDS)


def main() -> None:
    space = SpaceConfig()
    rng = np.random.default_rng(20240917)
    OUT.mkdir(parents=True, exist_ok=True)
    save_platform(platform(), OUT / "xavier_agx.toml")
    save_cost_table(baseline_table(space, rng), OUT / "baselines_costs.csv",
                    "isotropic baselines b0..b3 on gpu/dla; per-unit split is synthetic,\n"
                    "constant-mapping totals match the published whole-model measurements")
    save_cost_table(single_table(A3, A3_TOTALS, space, rng), OUT / "c100_a3_costs.csv",
                    f"CIFAR-100 a3 network {A3}; per-unit split is synthetic,\n"
                    "gpu-only and dla-only totals match the published endpoints")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
