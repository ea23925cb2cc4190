"""Inner search: CU assignments (and optionally DVFS) for one fixed network.

The EA works directly on integer arrays of CU indices; every mapping that
gets evaluated is memoized, so ``evaluations`` counts distinct mappings.
NSGA-II ranks raw (latency, energy) pairs. The normalized scalar from
``ioe_fitness`` only picks the single reported mapping.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterator, Sequence

import numpy as np

from vigmap.archspace import WorkloadPlan
from vigmap.errors import BudgetExceededError, ConfigError, InfeasibleError
from vigmap.evo import (Sense, ParetoArchive, binary_tournament, nondominated_mask,
                        rank_and_crowding, order_by)
from vigmap.hwmodel.costs import (CostTable, MappingVector, PerfEval, PlanCosts, evaluate,
                                  standalone_eval)
from vigmap.hwmodel.platform import Platform, dvfs_id

DEFAULT_ORACLE_BUDGET = 2 ** 24


@dataclasses.dataclass(frozen=True)
class Constraints:
    """Upper bounds on a mapping. All comparisons are strict.

    ``latency_increase`` is a ratio over the best standalone latency and is
    turned into an absolute latency bound once the references are known.
    """

    latency: float | None = None
    energy: float | None = None
    power: float | None = None
    latency_increase: float | None = None

    def __post_init__(self):
        for f in ("latency", "energy", "power", "latency_increase"):
            v = getattr(self, f)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"constraint {f} must be finite and >= 0, got {v}")

    @property
    def active(self) -> bool:
        return any(getattr(self, f) is not None
                   for f in ("latency", "energy", "power", "latency_increase"))

    def resolve(self, best_latency: float) -> "Constraints":
        if self.latency_increase is None:
            return self
        bound = best_latency * (1.0 + self.latency_increase)
        lat = bound if self.latency is None else min(self.latency, bound)
        return dataclasses.replace(self, latency=lat, latency_increase=None)

    def satisfied(self, lat, en) -> np.ndarray:
        lat = np.asarray(lat, dtype=float)
        en = np.asarray(en, dtype=float)
        ok = np.ones(lat.shape, dtype=bool)
        if self.latency is not None:
            ok &= lat < self.latency
        if self.energy is not None:
            ok &= en < self.energy
        if self.power is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                ok &= 1000.0 * en / lat < self.power
        return ok

    def violation(self, lat, en) -> np.ndarray:
        """Summed relative overshoot; zero for satisfying mappings."""
        lat = np.asarray(lat, dtype=float)
        en = np.asarray(en, dtype=float)
        out = np.zeros(lat.shape)
        if self.latency is not None:
            out += np.maximum(0.0, lat / self.latency - 1.0)
        if self.energy is not None:
            out += np.maximum(0.0, en / self.energy - 1.0)
        if self.power is not None:
            out += np.maximum(0.0, 1000.0 * en / lat / self.power - 1.0)
        return out


@dataclasses.dataclass(frozen=True)
class IoeConfig:
    population: int = 200
    generations: int | None = 10
    mutation_prob: float = 0.4
    crossover_prob: float = 0.8
    gamma1: float = 1.0
    gamma2: float = 1.0
    elite_fraction: float = 0.5
    constraints: Constraints | None = None
    # "max", "min", "searched" or an explicit setting id
    dvfs_mode: str = "max"
    # cap on distinct mapping evaluations; None means generations alone decide
    budget: int | None = None
    exhaustive_init: bool = True
    # budget-driven runs stop after this many generations without a new mapping
    stall_generations: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in ("mutation_prob", "crossover_prob"):
            p = getattr(self, f)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"ioe.{f} must lie in [0, 1], got {p}")
        if self.population < 2:
            raise ConfigError(f"ioe.population must be >= 2, got {self.population}")
        if self.generations is not None and self.generations < 0:
            raise ConfigError("ioe.generations must be >= 0")
        if self.generations is None and self.budget is None:
            raise ConfigError("ioe needs a generation count or an evaluation budget")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("ioe.budget must be >= 0")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ConfigError(f"ioe.elite_fraction must lie in (0, 1], got {self.elite_fraction}")
        for f in ("gamma1", "gamma2"):
            if not math.isfinite(getattr(self, f)):
                raise ConfigError(f"ioe.{f} must be finite")

    def effective_population(self) -> int:
        """Population actually used; small budgets shrink it to leave room to evolve."""
        if self.budget is None:
            return self.population
        return max(2, min(self.population, self.budget // 4))

    def capacity(self) -> int:
        """Most distinct evaluations this configuration may spend."""
        if self.budget is not None:
            return self.budget
        n_elite = math.ceil(self.elite_fraction * self.population)
        return self.population + self.generations * (self.population - n_elite)


@dataclasses.dataclass(frozen=True)
class StandaloneRefs:
    """Best standalone latency and energy, the normalizers of the fitness."""

    latency: float
    energy: float
    per_cu: dict = dataclasses.field(compare=False)

    @classmethod
    def compute(cls, plan: WorkloadPlan, table: CostTable, platform: Platform,
                dvfs: str | None = None) -> "StandaloneRefs":
        dvfs = platform.default_dvfs if dvfs is None else dvfs
        per_cu = {}
        for cu in platform.cus:
            try:
                per_cu[cu.id] = standalone_eval(plan, cu, table, dvfs, platform)
            except InfeasibleError:
                continue
        if not per_cu:
            raise InfeasibleError("no CU can run the whole plan standalone")
        return cls(min(e.total_latency for e in per_cu.values()),
                   min(e.total_energy for e in per_cu.values()), per_cu)


def ioe_fitness(perf: PerfEval | tuple[float, float], refs: StandaloneRefs,
                gamma1: float = 1.0, gamma2: float = 1.0) -> float:
    """(E / E_best)^gamma1 * (L / L_best)^gamma2. Lower is better."""
    if refs.latency <= 0 or refs.energy <= 0:
        raise ValueError(f"standalone references must be positive, got "
                         f"L={refs.latency}, E={refs.energy}")
    lat, en = ((perf.total_latency, perf.total_energy) if isinstance(perf, PerfEval)
               else perf)
    return (en / refs.energy) ** gamma1 * (lat / refs.latency) ** gamma2


def _fitness_arr(lat, en, refs: StandaloneRefs, g1: float, g2: float) -> np.ndarray:
    return (np.asarray(en) / refs.energy) ** g1 * (np.asarray(lat) / refs.latency) ** g2


@dataclasses.dataclass(frozen=True)
class MappingRecord:
    mapping: MappingVector
    latency: float
    energy: float
    transitions: int
    fitness: float


@dataclasses.dataclass(frozen=True)
class IoeGeneration:
    generation: int
    evaluations: int
    best_fitness: float
    front: np.ndarray = dataclasses.field(compare=False, repr=False)


@dataclasses.dataclass(frozen=True)
class IoeResult:
    best_mapping: MappingVector
    best_eval: PerfEval
    best_fitness: float
    pareto: tuple[MappingRecord, ...]
    refs: StandaloneRefs
    feasible: bool
    evaluations: int
    dvfs_evaluations: int = 0
    history: tuple[IoeGeneration, ...] = ()
    exhaustive: bool = False


def resolve_dvfs(platform: Platform, mode: str) -> str:
    if mode in ("max", "default"):
        return platform.default_dvfs
    if mode == "min":
        return dvfs_id((n, min(v)) for n, v in platform.clock_domains)
    if mode == "searched":
        return platform.default_dvfs
    platform.dvfs(mode)
    return mode


# ---------------------------------------------------------------------------
# enumeration helpers

def iter_feasible(costs: PlanCosts, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """All feasible mappings in lexicographic order of CU indices, in chunks."""
    counts = np.array([len(c) for c in costs.choices], dtype=np.int64)
    n = len(counts)
    total = costs.feasible_count()
    table = np.zeros((n, counts.max()), dtype=np.intp)
    for i, ch in enumerate(costs.choices):
        table[i, :len(ch)] = ch
    # place values: the first unit is the most significant digit
    place = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        place[i] = place[i + 1] * counts[i + 1]
    rows = np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % counts[None, :]
        yield table[rows[None, :], digits]


class _Sampler:
    def __init__(self, costs: PlanCosts):
        self.counts = np.array([len(c) for c in costs.choices])
        self.table = np.zeros((len(self.counts), self.counts.max()), dtype=np.intp)
        for i, ch in enumerate(costs.choices):
            self.table[i, :len(ch)] = ch
        self.rows = np.arange(len(self.counts))

    def random(self, rng: np.random.Generator, k: int) -> np.ndarray:
        r = (rng.random((k, len(self.counts))) * self.counts).astype(np.intp)
        return self.table[self.rows[None, :], r]


def _key(row: np.ndarray) -> tuple[int, ...]:
    return tuple(int(v) for v in row)


class _Memo:
    """Distinct-mapping evaluation cache with an optional budget."""

    def __init__(self, costs: PlanCosts, budget: int | None):
        self.costs = costs
        self.budget = budget
        self.index: dict[bytes, int] = {}
        self.rows: list[np.ndarray] = []
        self.lat: list[float] = []
        self.en: list[float] = []
        self.trans: list[int] = []

    def __len__(self) -> int:
        return len(self.rows)

    def remaining(self) -> float:
        return math.inf if self.budget is None else self.budget - len(self.rows)

    def evaluate(self, m: np.ndarray) -> np.ndarray:
        """Indices into the cache for each row of ``m``; -1 when the budget ran out."""
        out = np.full(len(m), -1, dtype=np.intp)
        fresh_rows, fresh_pos = [], []
        pending: dict[bytes, int] = {}
        for i, row in enumerate(m):
            b = row.tobytes()
            if b in self.index:
                out[i] = self.index[b]
            elif b in pending:
                out[i] = pending[b]
            elif len(fresh_rows) < self.remaining():
                slot = len(self.rows) + len(fresh_rows)
                pending[b] = slot
                fresh_rows.append(row)
                fresh_pos.append(i)
                out[i] = slot
        if fresh_rows:
            block = np.array(fresh_rows, dtype=np.intp)
            lat, en, tr = self.costs.evaluate_many(block)
            for row, l, e, t in zip(block, lat, en, tr):
                self.index[row.tobytes()] = len(self.rows)
                self.rows.append(row)
                self.lat.append(float(l))
                self.en.append(float(e))
                self.trans.append(int(t))
        return out


def _selection_order(lat, en, cons: Constraints | None) -> np.ndarray:
    """Population order: constraint-satisfying members by (rank, crowding) first,
    then the rest by increasing violation."""
    pts = np.column_stack([lat, en])
    if cons is None:
        ranks, crowd = rank_and_crowding(pts)
        return order_by(ranks, crowd)
    ok = cons.satisfied(lat, en)
    good = np.flatnonzero(ok)
    bad = np.flatnonzero(~ok)
    parts = []
    if good.size:
        ranks, crowd = rank_and_crowding(pts[good])
        parts.append(good[order_by(ranks, crowd)])
    if bad.size:
        viol = cons.violation(lat[bad], en[bad])
        parts.append(bad[np.lexsort((bad, viol))])
    return np.concatenate(parts)


def _record(costs: PlanCosts, row, lat, en, tr, refs, g1, g2) -> MappingRecord:
    return MappingRecord(costs.to_vector(row), float(lat), float(en), int(tr),
                         float(ioe_fitness((lat, en), refs, g1, g2)))


def _pick_best(records: Sequence[MappingRecord], costs: PlanCosts) -> MappingRecord:
    return min(records, key=lambda r: (r.fitness, r.latency, _key(costs.from_vector(r.mapping))))


def search_mappings(plan: WorkloadPlan, table: CostTable, platform: Platform,
                    cfg: IoeConfig | None = None, seed: int | np.random.SeedSequence = 0,
                    costs: PlanCosts | None = None) -> IoeResult:
    cfg = IoeConfig() if cfg is None else cfg
    rng = np.random.default_rng(seed)
    dvfs = resolve_dvfs(platform, cfg.dvfs_mode)
    if costs is None or costs.dvfs != dvfs:
        costs = PlanCosts(plan, table, platform, dvfs)
    refs = StandaloneRefs.compute(plan, table, platform, dvfs)
    g1, g2 = cfg.gamma1, cfg.gamma2
    cons = None
    if cfg.constraints is not None and cfg.constraints.active:
        cons = cfg.constraints.resolve(refs.latency)

    memo = _Memo(costs, cfg.budget)
    archive = ParetoArchive((Sense.MIN, Sense.MIN))
    history: list[IoeGeneration] = []

    def absorb(slots: np.ndarray) -> None:
        slots = slots[slots >= 0]
        if not slots.size:
            return
        lat = np.array([memo.lat[s] for s in slots])
        en = np.array([memo.en[s] for s in slots])
        ok = np.ones(len(slots), bool) if cons is None else cons.satisfied(lat, en)
        archive.update((_key(memo.rows[s]), (memo.lat[s], memo.en[s]), s)
                       for s, good in zip(slots, ok) if good)

    def snapshot(gen: int) -> None:
        front = archive.objectives()
        best = (float(_fitness_arr(front[:, 0], front[:, 1], refs, g1, g2).min())
                if len(front) else math.inf)
        history.append(IoeGeneration(gen, len(memo), best, front))

    exhaustive = cfg.exhaustive_init and costs.feasible_count() <= cfg.capacity()
    if exhaustive:
        for block in iter_feasible(costs):
            absorb(memo.evaluate(block))
        snapshot(0)
    else:
        sampler = _Sampler(costs)
        n = costs.n_units
        pop_size = cfg.effective_population()
        standalone = np.array([[j] * n for j in costs.standalone_indices()], dtype=np.intp)
        init = np.concatenate([standalone, sampler.random(rng, max(0, pop_size - len(standalone)))])
        slots = memo.evaluate(init[:pop_size])
        slots = slots[slots >= 0]
        absorb(slots)
        pop = slots
        snapshot(0)
        n_elite = math.ceil(cfg.elite_fraction * pop_size)
        n_child = max(pop_size - n_elite, 1)
        gen = 0
        stall = 0
        while pop.size:
            if cfg.generations is not None and gen >= cfg.generations:
                break
            if memo.remaining() <= 0 or len(memo) >= costs.feasible_count():
                break
            gen += 1
            lat = np.array([memo.lat[s] for s in pop])
            en = np.array([memo.en[s] for s in pop])
            elite = pop[_selection_order(lat, en, cons)[:n_elite]]
            parents = np.array([memo.rows[s] for s in elite])
            # tournament on elite position is the (rank, crowding) comparison
            pos = np.arange(len(elite))
            pick = binary_tournament(pos, np.zeros(len(elite)), rng, 2 * n_child)
            a, b = parents[pick[:n_child]], parents[pick[n_child:]]
            children = a.copy()
            if n > 1:
                cross = rng.random(n_child) < cfg.crossover_prob
                cuts = rng.integers(1, n, size=n_child)
                tail = np.arange(n)[None, :] >= cuts[:, None]
                children = np.where(cross[:, None] & tail, b, a)
            mutate = rng.random(children.shape) < cfg.mutation_prob
            children = np.where(mutate, sampler.random(rng, n_child), children)
            before = len(memo)
            slots = memo.evaluate(children)
            absorb(slots)
            pop = np.concatenate([elite, slots[slots >= 0]])
            snapshot(gen)
            stall = stall + 1 if len(memo) == before else 0
            if cfg.budget is not None and stall >= cfg.stall_generations:
                break

    records = tuple(_record(costs, memo.rows[m.payload], m.objectives[0], m.objectives[1],
                            memo.trans[m.payload], refs, g1, g2) for m in archive)
    feasible = bool(records)
    if feasible:
        best = _pick_best(records, costs)
        pareto = records
    else:
        # nothing met the constraints: report the standalone deployments
        pareto = tuple(MappingRecord(MappingVector((cu,) * len(plan), dvfs), e.total_latency,
                                     e.total_energy, 0, ioe_fitness(e, refs, g1, g2))
                       for cu, e in refs.per_cu.items())
        best = _pick_best(pareto, costs)
    best_mapping = best.mapping
    best_eval = evaluate(plan, best_mapping, table, platform)
    best_fitness = best.fitness
    dvfs_evals = 0
    if cfg.dvfs_mode == "searched":
        found = search_dvfs(plan, best_mapping, table, platform, g1, g2, refs)
        best_mapping, best_eval, best_fitness = found.mapping, found.eval, found.fitness
        dvfs_evals = len(found.scan)
    return IoeResult(best_mapping, best_eval, best_fitness, pareto, refs, feasible,
                     len(memo), dvfs_evals, tuple(history), exhaustive)


# ---------------------------------------------------------------------------
# exact enumeration

@dataclasses.dataclass(frozen=True)
class OracleResult:
    pareto: tuple[MappingRecord, ...]
    best: MappingRecord | None
    count: int
    refs: StandaloneRefs


def brute_force_oracle(plan: WorkloadPlan, table: CostTable, platform: Platform,
                       constraints: Constraints | None = None,
                       budget: int = DEFAULT_ORACLE_BUDGET, dvfs: str | None = None,
                       gamma1: float = 1.0, gamma2: float = 1.0,
                       costs: PlanCosts | None = None) -> OracleResult:
    """Exact Pareto set over every feasible mapping.

    Mappings with identical (latency, energy) collapse onto the
    lexicographically smallest one, matching ``ParetoArchive``.
    """
    dvfs = platform.default_dvfs if dvfs is None else dvfs
    if costs is None or costs.dvfs != dvfs:
        costs = PlanCosts(plan, table, platform, dvfs)
    count = costs.feasible_count()
    if count > budget:
        raise BudgetExceededError(count, budget)
    refs = StandaloneRefs.compute(plan, table, platform, dvfs)
    cons = None
    if constraints is not None and constraints.active:
        cons = constraints.resolve(refs.latency)

    keep_m = np.zeros((0, costs.n_units), dtype=np.intp)
    keep_v = np.zeros((0, 3))
    for block in iter_feasible(costs):
        lat, en, tr = costs.evaluate_many(block)
        if cons is not None:
            ok = cons.satisfied(lat, en)
            block, lat, en, tr = block[ok], lat[ok], en[ok], tr[ok]
        m = np.concatenate([keep_m, block])
        v = np.concatenate([keep_v, np.column_stack([lat, en, tr])])
        mask = nondominated_mask(v[:, :2])
        keep_m, keep_v = m[mask], v[mask]
    # rows are still in enumeration (= lexicographic) order, so the first
    # occurrence of each objective pair is the smallest mapping
    _, first = np.unique(keep_v[:, :2], axis=0, return_index=True)
    first.sort()
    records = tuple(_record(costs, keep_m[i], keep_v[i, 0], keep_v[i, 1], keep_v[i, 2],
                            refs, gamma1, gamma2) for i in first)
    records = tuple(sorted(records, key=lambda r: (r.latency, r.energy)))
    best = _pick_best(records, costs) if records else None
    return OracleResult(records, best, count, refs)


# ---------------------------------------------------------------------------
# DVFS

@dataclasses.dataclass(frozen=True)
class DvfsResult:
    setting: str
    mapping: MappingVector
    eval: PerfEval
    fitness: float
    scan: tuple[tuple[str, PerfEval, float], ...]


def search_dvfs(plan: WorkloadPlan, mapping: MappingVector, table: CostTable,
                platform: Platform, gamma1: float = 1.0, gamma2: float = 1.0,
                refs: StandaloneRefs | None = None) -> DvfsResult:
    """Exhaustive scan of the platform's DVFS settings for one mapping.

    Fitness is normalized by the standalone references at the platform's
    default setting so that every setting is scored on the same scale. The
    first setting in enumeration order wins ties.
    """
    if refs is None:
        refs = StandaloneRefs.compute(plan, table, platform)
    scan = []
    best = None
    for setting in platform.dvfs_ids():
        m = MappingVector(mapping.assignments, setting)
        perf = evaluate(plan, m, table, platform)
        fit = ioe_fitness(perf, refs, gamma1, gamma2)
        scan.append((setting, perf, fit))
        if best is None or fit < best[2]:
            best = (setting, perf, fit)
    setting, perf, fit = best
    return DvfsResult(setting, MappingVector(mapping.assignments, setting), perf, fit, tuple(scan))
