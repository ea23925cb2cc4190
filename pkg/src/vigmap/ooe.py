"""Outer search over architectures, each scored through its best mapping.

Every genome is expanded into a workload plan and handed to the inner
engine; the resulting (accuracy, latency, energy) triple is ranked by
non-dominated sorting. IOE results are memoized per genome and each IOE
run is seeded from (run seed, genome encoding), so results do not depend on
evaluation order or thread count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import math
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from vigmap.analysis import default_reference, hypervolume_clipped
from vigmap.archspace import (ArchitectureGenome, GraphOp, Granularity, SpaceConfig,
                              decode, encode, format_genome, parse_genome,
                              plan_for, random_genome)
from vigmap.errors import ConfigError, LookupMissError
from vigmap.evo import ObjectiveVector, ParetoArchive, Sense, order_by, front_ranks
from vigmap.hwmodel.costs import CostTable, MappingVector, PerfEval, standalone_eval
from vigmap.hwmodel.platform import Platform
from vigmap.ioe import IoeConfig, IoeResult, StandaloneRefs, ioe_fitness, resolve_dvfs, search_mappings

SENSES = (Sense.MAX, Sense.MIN, Sense.MIN)


# ---------------------------------------------------------------------------
# accuracy

@dataclasses.dataclass(frozen=True)
class SurrogateParams:
    """Saturating additive accuracy rule (synthetic, not measured).

    Each block contributes ``op[graph_op]`` plus bonuses for a kept FFN
    (scaled by the square root of its relative width) and a kept pre-layer;
    accuracy is ``base + (cap - base) * (1 - exp(-total))``.
    """

    base: float = 60.0
    cap: float = 95.0
    op: Mapping[str, float] = dataclasses.field(
        default_factory=lambda: {"M": 0.10, "E": 0.12, "S": 0.09, "G": 0.07})
    ffn: float = 0.06
    fc_pre: float = 0.02
    ref_width: int = 320

    def __post_init__(self):
        if not 0.0 <= self.base <= self.cap <= 100.0:
            raise ConfigError(f"surrogate needs 0 <= base <= cap <= 100, got "
                              f"{self.base}, {self.cap}")
        op = {GraphOp.parse(k).value: float(v) for k, v in self.op.items()}
        missing = {o.value for o in GraphOp} - set(op)
        if missing:
            raise ConfigError(f"surrogate lacks coefficients for ops {sorted(missing)}")
        if any(v < 0 for v in op.values()) or self.ffn < 0 or self.fc_pre < 0:
            raise ConfigError("surrogate coefficients must be >= 0")
        object.__setattr__(self, "op", op)


@dataclasses.dataclass(frozen=True)
class AccuracyModel:
    kind: str = "surrogate"
    table: Mapping[str, float] | None = None
    surrogate: SurrogateParams = dataclasses.field(default_factory=SurrogateParams)

    def __post_init__(self):
        if self.kind not in ("surrogate", "table"):
            raise ConfigError(f"accuracy model kind must be 'surrogate' or 'table', got {self.kind!r}")
        if self.kind == "table":
            if not self.table:
                raise ConfigError("table accuracy model needs entries")
            canon = {}
            for k, v in self.table.items():
                g = parse_genome(k) if isinstance(k, str) else k
                if not 0.0 <= float(v) <= 100.0:
                    raise ConfigError(f"accuracy {v} for {k} outside [0, 100]")
                canon[_canon(g)] = float(v)
            object.__setattr__(self, "table", canon)

    def __call__(self, genome: ArchitectureGenome) -> float:
        if self.kind == "table":
            try:
                return self.table[_canon(genome)]
            except KeyError:
                raise LookupMissError(f"no accuracy entry for genome {format_genome(genome)}") from None
        p = self.surrogate
        total = 0.0
        for sb in genome.superblocks:
            per_block = p.op[sb.graph_op.value]
            if sb.ffn_use:
                per_block += p.ffn * math.sqrt(sb.ffn_width / p.ref_width)
            if sb.fc_pre_use:
                per_block += p.fc_pre
            total += sb.depth * per_block
        return p.base + (p.cap - p.base) * (1.0 - math.exp(-total))

    @classmethod
    def from_csv(cls, path, dataset: str | None = None) -> "AccuracyModel":
        """Rows of ``genome,accuracy`` with an optional ``dataset`` column.

        Extra columns are ignored and '#' comments allowed. When the file has a
        dataset column, ``dataset`` selects the rows to use.
        """
        lines = [ln for ln in Path(path).read_text().splitlines()
                 if ln.strip() and not ln.lstrip().startswith("#")]
        rows = list(csv.DictReader(lines))
        if not rows or "genome" not in rows[0] or "accuracy" not in rows[0]:
            raise ConfigError(f"{path}: accuracy table needs 'genome' and 'accuracy' columns")
        if dataset is not None:
            if "dataset" not in rows[0]:
                raise ConfigError(f"{path}: no dataset column to select {dataset!r} from")
            rows = [r for r in rows if r["dataset"] == dataset]
            if not rows:
                raise ConfigError(f"{path}: no rows for dataset {dataset!r}")
        table = {}
        for r in rows:
            g = format_genome(parse_genome(r["genome"]))
            if g in table:
                raise ConfigError(f"{path}: genome {g} listed twice"
                                  + ("" if dataset else "; select a dataset"))
            table[g] = float(r["accuracy"])
        return cls("table", table)


def _canon(genome: ArchitectureGenome) -> str:
    return format_genome(genome)


# ---------------------------------------------------------------------------
# configuration and results

@dataclasses.dataclass(frozen=True)
class OoeConfig:
    population: int = 100
    generations: int = 50
    elite_fraction: float = 0.30
    mutation_prob: float = 0.4
    crossover_prob: float = 0.5
    # exponents of (accuracy, 1/latency, 1/energy) in the reporting scalar
    fitness_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    granularity: Granularity = Granularity.BLOCKWISE
    ioe: IoeConfig = dataclasses.field(default_factory=IoeConfig)

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "fitness_weights", tuple(float(w) for w in self.fitness_weights))
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ConfigError(f"ooe.elite_fraction must lie in (0, 1], got {self.elite_fraction}")
        for f in ("mutation_prob", "crossover_prob"):
            p = getattr(self, f)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"ooe.{f} must lie in [0, 1], got {p}")
        if self.population < 1:
            raise ConfigError("ooe.population must be >= 1")
        if self.generations < 0:
            raise ConfigError("ooe.generations must be >= 0")
        if len(self.fitness_weights) != 3:
            raise ConfigError("ooe.fitness_weights needs three exponents")

    @property
    def elite_size(self) -> int:
        return math.ceil(self.elite_fraction * self.population)


def ooe_fitness(acc: float, perf: PerfEval | tuple[float, float],
                weights: Sequence[float] = (1.0, 1.0, 1.0)) -> tuple[ObjectiveVector, float]:
    """Objective triple and the weighted-product scalar (higher is better)."""
    lat, en = ((perf.total_latency, perf.total_energy) if isinstance(perf, PerfEval) else perf)
    if not 0.0 <= acc <= 100.0:
        raise ValueError(f"accuracy must lie in [0, 100], got {acc}")
    w_acc, w_t, w_e = weights
    if (w_t and lat <= 0) or (w_e and en <= 0):
        raise ValueError(f"latency and energy must be positive, got T={lat}, E={en}")
    # a zero exponent drops its term, even when the base is zero
    scalar = 1.0
    for base, w in ((acc, w_acc), (1.0 / lat if w_t else 1.0, w_t), (1.0 / en if w_e else 1.0, w_e)):
        if w:
            scalar *= base ** w
    return ObjectiveVector((acc, lat, en), SENSES), scalar


@dataclasses.dataclass(frozen=True)
class Candidate:
    genome: ArchitectureGenome
    encoding: tuple[int, ...]
    mapping: MappingVector
    accuracy: float
    latency: float
    energy: float
    transitions: int
    ioe_fitness: float
    scalar: float
    feasible: bool
    evaluations: int

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (self.accuracy, self.latency, self.energy)


@dataclasses.dataclass(frozen=True)
class OoeGeneration:
    generation: int
    archive: tuple[Candidate, ...]
    hypervolume: float
    genomes_evaluated: int
    eval_count: int


@dataclasses.dataclass(frozen=True)
class CoSearchResult:
    pareto: tuple[Candidate, ...]
    history: tuple[OoeGeneration, ...]
    eval_count: int
    genomes_evaluated: int
    reference: tuple[float, float, float]
    evaluated: tuple[Candidate, ...] = ()

    def objectives(self) -> np.ndarray:
        return np.array([c.objectives for c in self.pareto], dtype=float).reshape(-1, 3)


def genome_seed(seed: int, encoding: Sequence[int]) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *(int(v) for v in encoding)])


# ---------------------------------------------------------------------------
# variation

def mutate(genome: ArchitectureGenome, space: SpaceConfig, prob: float,
           rng: np.random.Generator) -> ArchitectureGenome:
    """Resample each gene of each superblock with probability ``prob``."""
    vec = list(encode(genome, space))
    values = space.gene_values()
    width = len(values)
    draws = rng.random(len(vec))
    picks = rng.random(len(vec))
    for i in range(len(vec)):
        if draws[i] < prob:
            vec[i] = int(picks[i] * len(values[i % width]))
    return decode(vec, space)


def superblock_crossover(a: ArchitectureGenome, b: ArchitectureGenome,
                         rng: np.random.Generator) -> tuple[ArchitectureGenome, ArchitectureGenome]:
    """Swap whole superblocks at independently chosen positions (each with p=1/2)."""
    swap = rng.random(len(a.superblocks)) < 0.5
    sa = tuple(y if s else x for x, y, s in zip(a.superblocks, b.superblocks, swap))
    sb = tuple(x if s else y for x, y, s in zip(a.superblocks, b.superblocks, swap))
    return ArchitectureGenome(sa, a.backbone), ArchitectureGenome(sb, b.backbone)


# ---------------------------------------------------------------------------
# the search loop

Evaluator = Callable[[ArchitectureGenome, tuple[int, ...]], tuple[MappingVector, PerfEval, float, bool, int]]


def _run(space: SpaceConfig, acc_model: AccuracyModel, cfg: OoeConfig, seed: int,
         evaluator: Evaluator, threads: int, reference_fn) -> CoSearchResult:
    space.validate()
    rng = np.random.default_rng(seed)
    memo: dict[tuple[int, ...], Candidate] = {}
    archive = ParetoArchive(SENSES)
    history: list[OoeGeneration] = []

    def score(genomes: list[ArchitectureGenome]) -> list[Candidate]:
        encs = [encode(g, space) for g in genomes]
        todo = sorted({e: g for e, g in zip(encs, genomes) if e not in memo}.items())
        if todo:
            if threads > 1 and len(todo) > 1:
                with concurrent.futures.ThreadPoolExecutor(threads) as pool:
                    outs = list(pool.map(lambda item: evaluator(item[1], item[0]), todo))
            else:
                outs = [evaluator(g, e) for e, g in todo]
            for (enc, g), (mapping, perf, fit, feasible, n_eval) in zip(todo, outs):
                acc = acc_model(g)
                _, scalar = ooe_fitness(acc, perf, cfg.fitness_weights)
                memo[enc] = Candidate(g, enc, mapping, acc, perf.total_latency, perf.total_energy,
                                      perf.transitions, fit, scalar, feasible, n_eval)
        return [memo[e] for e in encs]

    pop = score([random_genome(space, rng) for _ in range(cfg.population)])
    reference = reference_fn(pop)

    def record(gen: int) -> None:
        archive.update((c.encoding, c.objectives, c) for c in pop if c.feasible)
        members = tuple(m.payload for m in archive)
        hv = hypervolume_clipped([c.objectives for c in members], reference, SENSES)
        history.append(OoeGeneration(gen, members, hv, len(memo),
                                     sum(c.evaluations for c in memo.values())))

    record(0)
    n_elite = cfg.elite_size
    for gen in range(1, cfg.generations + 1):
        elite = _elite(pop, n_elite)
        children: list[ArchitectureGenome] = []
        while len(children) < cfg.population - len(elite):
            i, j = rng.integers(len(elite), size=2)
            a, b = elite[i].genome, elite[j].genome
            if rng.random() < cfg.crossover_prob:
                a, b = superblock_crossover(a, b, rng)
            children.append(mutate(a, space, cfg.mutation_prob, rng))
            if len(children) < cfg.population - len(elite):
                children.append(mutate(b, space, cfg.mutation_prob, rng))
        pop = elite + score(children)
        record(gen)

    return CoSearchResult(tuple(m.payload for m in archive), tuple(history),
                          sum(c.evaluations for c in memo.values()), len(memo), reference,
                          tuple(memo[k] for k in sorted(memo)))


def _elite(pop: list[Candidate], k: int) -> list[Candidate]:
    """Best ``k`` by (front rank, weighted-product scalar); infeasible last."""
    pts = np.array([(-c.accuracy, c.latency, c.energy) for c in pop])
    ranks = front_ranks(pts)
    feasible = np.array([c.feasible for c in pop])
    ranks = np.where(feasible, ranks, ranks.max() + 1 + ranks)
    scal = np.array([c.scalar for c in pop])
    return [pop[i] for i in order_by(ranks, scal)[:k]]


def _initial_reference(table: CostTable, platform: Platform, space: SpaceConfig,
                       granularity: Granularity, dvfs: str):
    def ref(pop: list[Candidate]) -> tuple[float, float, float]:
        pts = []
        for c in pop:
            plan = plan_for(c.genome, space, granularity)
            refs = StandaloneRefs.compute(plan, table, platform, dvfs)
            for e in refs.per_cu.values():
                pts.append((c.accuracy, e.total_latency, e.total_energy))
        return default_reference(pts, SENSES)
    return ref


def co_search(space: SpaceConfig, platform: Platform, table: CostTable,
              acc_model: AccuracyModel | None = None, cfg: OoeConfig | None = None,
              seed: int = 0, threads: int = 1) -> CoSearchResult:
    """Nested search: architectures outside, mappings (via the IOE) inside."""
    acc_model = AccuracyModel() if acc_model is None else acc_model
    cfg = OoeConfig() if cfg is None else cfg
    dvfs = resolve_dvfs(platform, cfg.ioe.dvfs_mode)

    def evaluator(genome, enc):
        plan = plan_for(genome, space, cfg.granularity)
        res: IoeResult = search_mappings(plan, table, platform, cfg.ioe, genome_seed(seed, enc))
        return (res.best_mapping, res.best_eval, res.best_fitness, res.feasible,
                res.evaluations + res.dvfs_evaluations)

    return _run(space, acc_model, cfg, seed, evaluator, threads,
                _initial_reference(table, platform, space, cfg.granularity, dvfs))


def standalone_only_search(space: SpaceConfig, platform: Platform, table: CostTable,
                           acc_model: AccuracyModel | None, cfg: OoeConfig | None, cu: str,
                           seed: int = 0, threads: int = 1) -> CoSearchResult:
    """Same outer loop with every genome deployed entirely on ``cu``."""
    acc_model = AccuracyModel() if acc_model is None else acc_model
    cfg = OoeConfig() if cfg is None else cfg
    platform.cu(cu)
    dvfs = resolve_dvfs(platform, cfg.ioe.dvfs_mode)

    def evaluator(genome, enc):
        plan = plan_for(genome, space, cfg.granularity)
        perf = standalone_eval(plan, cu, table, dvfs, platform)
        refs = StandaloneRefs.compute(plan, table, platform, dvfs)
        fit = ioe_fitness(perf, refs, cfg.ioe.gamma1, cfg.ioe.gamma2)
        return MappingVector((cu,) * len(plan), dvfs), perf, fit, True, 1

    return _run(space, acc_model, cfg, seed, evaluator, threads,
                _initial_reference(table, platform, space, cfg.granularity, dvfs))
