"""Hypervolume, Pareto-composition and EA-vs-random comparisons."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Iterable, Sequence

import numpy as np

from vigmap.archspace import WorkloadPlan
from vigmap.evo import Sense, nondominated_mask, to_min_space
from vigmap.hwmodel.costs import CostTable, PlanCosts
from vigmap.hwmodel.platform import Platform
from vigmap.ioe import (DEFAULT_ORACLE_BUDGET, IoeConfig, StandaloneRefs, brute_force_oracle,
                        search_mappings)


@dataclasses.dataclass(frozen=True)
class HypervolumeSpec:
    """Reference point in minimize space plus an optional normalizer."""

    reference: tuple[float, ...]
    normalizer: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(float(v) for v in self.reference))
        if self.normalizer is not None and not self.normalizer > 0:
            raise ValueError(f"normalizer must be positive, got {self.normalizer}")


def _hv2d(pts: np.ndarray, ref: np.ndarray) -> float:
    # non-dominated and sorted by x ascending means y is descending
    pts = pts[np.argsort(pts[:, 0], kind="stable")]
    xs = np.append(pts[1:, 0], ref[0])
    return float(np.sum((xs - pts[:, 0]) * (ref[1] - pts[:, 1])))


def _hv3d(pts: np.ndarray, ref: np.ndarray) -> float:
    pts = pts[np.argsort(pts[:, 2], kind="stable")]
    zs = np.append(pts[1:, 2], ref[2])
    total = 0.0
    for i in range(len(pts)):
        depth = zs[i] - pts[i, 2]
        if depth <= 0:
            continue
        layer = pts[:i + 1, :2]
        layer = layer[nondominated_mask(layer)]
        layer = np.unique(layer, axis=0)
        total += depth * _hv2d(layer, ref[:2])
    return total


def hypervolume(front, reference: Sequence[float] | HypervolumeSpec,
                senses: Sequence[Sense | str] | None = None) -> float:
    """Exact dominated hypervolume of a 2- or 3-objective front.

    ``front`` is in minimize space unless ``senses`` is given, in which case
    maximize columns (and the matching reference coordinates) are negated.
    Every point must strictly dominate the reference point.
    """
    spec = reference if isinstance(reference, HypervolumeSpec) else HypervolumeSpec(reference)
    ref = np.array(spec.reference, dtype=float)
    pts = np.array(front, dtype=float).reshape(-1, len(ref))
    if senses is not None:
        pts = to_min_space(pts, senses)
        ref = to_min_space(ref[None, :], senses)[0]
    if len(ref) not in (2, 3):
        raise ValueError(f"hypervolume supports 2 or 3 objectives, got {len(ref)}")
    if not len(pts):
        return 0.0
    bad = ~(pts < ref).all(axis=1)
    if bad.any():
        p = pts[np.flatnonzero(bad)[0]]
        raise ValueError(f"front point {tuple(p.tolist())} does not strictly dominate the "
                         f"reference point {tuple(ref.tolist())}")
    pts = np.unique(pts[nondominated_mask(pts)], axis=0)
    hv = _hv2d(pts, ref) if len(ref) == 2 else _hv3d(pts, ref)
    return hv / spec.normalizer if spec.normalizer else hv


def hypervolume_clipped(front, reference: Sequence[float],
                        senses: Sequence[Sense | str] | None = None) -> float:
    """Hypervolume counting only the points that strictly dominate the reference."""
    ref = np.array(reference, dtype=float)
    pts = np.array(front, dtype=float).reshape(-1, len(ref))
    if senses is not None:
        pts = to_min_space(pts, senses)
        ref = to_min_space(ref[None, :], senses)[0]
    pts = pts[(pts < ref).all(axis=1)]
    return hypervolume(pts, ref)


def default_reference(points, senses: Sequence[Sense | str] | None = None,
                      margin: float = 0.1) -> tuple[float, ...]:
    """Componentwise worst point pushed outward by ``margin`` of its magnitude.

    Returned in the caller's orientation: minimized columns grow, maximized
    columns shrink. With positive minimize objectives this is 1.1x the worst.
    """
    pts = np.array(points, dtype=float, ndmin=2)
    senses = [Sense.MIN] * pts.shape[1] if senses is None else [Sense(s) for s in senses]
    out = []
    for k, s in enumerate(senses):
        col = pts[:, k]
        if s is Sense.MIN:
            w = col.max()
            out.append(float(w + margin * abs(w)))
        else:
            w = col.min()
            out.append(float(w - margin * abs(w)))
    return tuple(out)


# ---------------------------------------------------------------------------
# composition of an archive by mapping class

@dataclasses.dataclass(frozen=True)
class Composition:
    counts: dict[str, int]
    total: int

    def percent(self, label: str) -> float:
        return 100.0 * self.counts.get(label, 0) / self.total if self.total else 0.0

    @property
    def distributed_pct(self) -> float:
        return self.percent("distributed")

    def rows(self) -> list[tuple[str, int, float]]:
        return [(k, v, self.percent(k)) for k, v in self.counts.items()]


def mapping_class(assignments: Sequence[str]) -> str:
    first = assignments[0]
    if all(a == first for a in assignments):
        return f"standalone:{first}"
    return "distributed"


def pareto_composition(mappings: Iterable[Sequence[str]],
                       cu_ids: Sequence[str] | None = None) -> Composition:
    """Count archive members as standalone-on-each-CU or distributed."""
    counts: dict[str, int] = {}
    if cu_ids is not None:
        counts.update({f"standalone:{cu}": 0 for cu in cu_ids})
    counts["distributed"] = 0
    total = 0
    for a in mappings:
        label = mapping_class(tuple(a))
        counts[label] = counts.get(label, 0) + 1
        total += 1
    return Composition(counts, total)


# ---------------------------------------------------------------------------
# EA against uniform random sampling

@dataclasses.dataclass(frozen=True)
class SeedComparison:
    seed: int
    ea_hv: float
    random_hv: float
    normalizer: float
    ea_trace: tuple[tuple[int, float], ...]
    random_trace: tuple[tuple[int, float], ...]

    @property
    def ea_norm(self) -> float:
        return self.ea_hv / self.normalizer if self.normalizer > 0 else 0.0

    @property
    def random_norm(self) -> float:
        return self.random_hv / self.normalizer if self.normalizer > 0 else 0.0


@dataclasses.dataclass(frozen=True)
class EaVsRandom:
    budget: int
    reference: tuple[float, float]
    oracle_normalized: bool
    per_seed: tuple[SeedComparison, ...]

    @property
    def ea_mean(self) -> float:
        return float(np.mean([s.ea_norm for s in self.per_seed])) if self.per_seed else 0.0

    @property
    def random_mean(self) -> float:
        return float(np.mean([s.random_norm for s in self.per_seed])) if self.per_seed else 0.0


def random_search_front(costs: PlanCosts, budget: int, rng: np.random.Generator,
                        checkpoints: Sequence[int] = ()) -> tuple[np.ndarray, list[tuple[int, np.ndarray]]]:
    """Uniform sampling with replacement; returns the final front and prefix fronts."""
    if budget <= 0:
        return np.zeros((0, 2)), [(c, np.zeros((0, 2))) for c in checkpoints]
    counts = np.array([len(c) for c in costs.choices])
    table = np.zeros((len(counts), counts.max()), dtype=np.intp)
    for i, ch in enumerate(costs.choices):
        table[i, :len(ch)] = ch
    r = (rng.random((budget, len(counts))) * counts).astype(np.intp)
    m = table[np.arange(len(counts))[None, :], r]
    lat, en, _ = costs.evaluate_many(m)
    pts = np.column_stack([lat, en])
    prefix = []
    for c in checkpoints:
        sub = pts[:min(c, budget)]
        prefix.append((c, sub[nondominated_mask(sub)] if len(sub) else sub))
    return pts[nondominated_mask(pts)], prefix


def ea_vs_random(plan: WorkloadPlan, table: CostTable, platform: Platform, budget: int,
                 seeds: Sequence[int], cfg: IoeConfig | None = None,
                 oracle_budget: int = DEFAULT_ORACLE_BUDGET) -> EaVsRandom:
    """Run the mapping EA and uniform random sampling with the same budget.

    Hypervolumes use 1.1x the worst standalone point as reference (points
    beyond it add nothing). They are normalized by the exact oracle front's
    hypervolume when enumeration fits ``oracle_budget``, otherwise by the
    hypervolume of the union of every front found (all seeds, both methods).
    """
    cfg = IoeConfig() if cfg is None else cfg
    cfg = dataclasses.replace(cfg, budget=budget, generations=None)
    costs = PlanCosts(plan, table, platform)
    refs = StandaloneRefs.compute(plan, table, platform, costs.dvfs)
    ref = default_reference([(e.total_latency, e.total_energy) for e in refs.per_cu.values()])
    oracle_hv = None
    if costs.feasible_count() <= oracle_budget:
        orc = brute_force_oracle(plan, table, platform, budget=oracle_budget, costs=costs)
        oracle_hv = hypervolume_clipped([(r.latency, r.energy) for r in orc.pareto], ref)

    runs = []
    for seed in seeds:
        ss = np.random.SeedSequence(seed)
        ea_seed, rnd_seed = ss.spawn(2)
        res = search_mappings(plan, table, platform, cfg, ea_seed, costs=costs)
        ea_front = res.history[-1].front if res.history else np.zeros((0, 2))
        ea_trace = [(h.evaluations, hypervolume_clipped(h.front, ref)) for h in res.history]
        rnd_front, prefix = random_search_front(costs, budget, np.random.default_rng(rnd_seed),
                                                [e for e, _ in ea_trace])
        rnd_trace = [(c, hypervolume_clipped(f, ref)) for c, f in prefix]
        runs.append((int(seed), ea_front.reshape(-1, 2), rnd_front.reshape(-1, 2), ea_trace,
                     rnd_trace))
    if oracle_hv is not None:
        norm = oracle_hv
    else:
        union = np.concatenate([np.zeros((0, 2))] + [f for r in runs for f in r[1:3]])
        norm = hypervolume_clipped(union, ref)

    def scaled(trace):
        return tuple((e, h / norm if norm > 0 else 0.0) for e, h in trace)

    results = [SeedComparison(seed, hypervolume_clipped(ea_f, ref), hypervolume_clipped(rnd_f, ref),
                              norm, scaled(ea_t), scaled(rnd_t))
               for seed, ea_f, rnd_f, ea_t, rnd_t in runs]
    return EaVsRandom(budget, ref, oracle_hv is not None, tuple(results))


# ---------------------------------------------------------------------------
# delimited exports

def to_csv(header: Sequence[str], rows: Iterable[Sequence], preamble: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in preamble:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            return str(v)
        return f"{v:.6f}"
    return str(v)


def composition_csv(comp: Composition, preamble: Sequence[str] = ()) -> str:
    return to_csv(("class", "count", "percent"), comp.rows(), preamble)


def ea_vs_random_csv(cmp: EaVsRandom, preamble: Sequence[str] = ()) -> str:
    rows = []
    for s in cmp.per_seed:
        for e, h in s.ea_trace:
            rows.append((s.seed, "ea", e, h))
        for e, h in s.random_trace:
            rows.append((s.seed, "random", e, h))
    return to_csv(("seed", "method", "evaluations", "normalized_hv"), rows, preamble)
