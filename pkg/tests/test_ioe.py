import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vigmap.archspace import (DimensionSchedule, SpaceConfig, parse_genome, plan_for)
from vigmap.errors import BudgetExceededError, ConfigError
from vigmap.hwmodel import (ComputeUnit, CostRecord, CostTable, MappingVector, Platform,
                            PlanCosts, cost_key, evaluate, fixture_path, load_cost_table,
                            load_platform, preset, standalone_eval, synth_profile)
from vigmap.ioe import (Constraints, IoeConfig, StandaloneRefs, brute_force_oracle, ioe_fitness,
                        iter_feasible, resolve_dvfs, search_dvfs, search_mappings)

from helpers import naive_front, plan_with_units, random_instance

A3 = "ops=S-G-S-G;d=2,2,2,2;ffn=1,1,1,1;pre=1,0,0,0;w=192,192,192,192"


def refs_of(lat, en):
    return StandaloneRefs(lat, en, {})


def test_fitness_on_published_mapping():
    f = ioe_fitness((17.29, 197.8), refs_of(13.42, 121.74))
    assert f == pytest.approx((197.8 / 121.74) * (17.29 / 13.42))
    # the quoted 2.0934 is a rounding slip; the exact product is 2.093319
    assert f == pytest.approx(2.0934, abs=1e-3)


def test_fitness_trivial_cases():
    assert ioe_fitness((5.0, 7.0), refs_of(5.0, 7.0)) == 1.0
    assert ioe_fitness((10.0, 3.0), refs_of(5.0, 7.0), gamma1=0.0) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="positive"):
        ioe_fitness((1.0, 1.0), refs_of(0.0, 1.0))


def test_fitness_from_fixture_refs():
    platform = load_platform(fixture_path("xavier_agx.toml"))
    table = load_cost_table(fixture_path("c100_a3_costs.csv"), platform)
    plan = plan_for(parse_genome(A3), SpaceConfig())
    refs = StandaloneRefs.compute(plan, table, platform)
    assert (round(refs.latency, 2), round(refs.energy, 2)) == (13.42, 121.74)
    assert ioe_fitness((17.29, 197.8), refs) == pytest.approx(2.093319, abs=1e-6)


def fronts_match(records, naive):
    got = sorted((r.latency, r.energy) for r in records)
    assert len(got) == len(naive)
    for (l, e), ((nl, ne), _) in zip(got, naive):
        assert l == pytest.approx(nl, rel=1e-12) and e == pytest.approx(ne, rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_oracle_matches_naive_enumeration(seed):
    plan, table, platform = random_instance(seed, 7 + seed % 3, 2 + seed % 2)
    orc = brute_force_oracle(plan, table, platform)
    fronts_match(orc.pareto, naive_front(plan, table, platform))
    assert orc.count == len(platform.cus) ** len(plan)


def test_oracle_ten_units():
    plan, table, platform = random_instance(3, 10, 2)
    orc = brute_force_oracle(plan, table, platform)
    assert orc.count == 1024
    pts = [(r.latency, r.energy) for r in orc.pareto]
    for p in pts:
        assert not any(q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts)


def test_oracle_tiny_plan_and_budget_refusal():
    plan, table, platform = random_instance(0, 3, 2)
    orc = brute_force_oracle(plan, table, platform)
    assert 1 <= len(orc.pareto) <= 8
    with pytest.raises(BudgetExceededError) as exc:
        brute_force_oracle(plan, table, platform, budget=7)
    assert exc.value.count == 8


def test_oracle_unreachable_latency_bound_is_empty():
    plan, table, platform = random_instance(1, 6, 2)
    orc = brute_force_oracle(plan, table, platform, Constraints(latency=1e-6))
    assert orc.pareto == () and orc.best is None


def test_oracle_respects_constraints():
    plan, table, platform = random_instance(2, 9, 2)
    full = brute_force_oracle(plan, table, platform)
    lat_bound = float(np.median([r.latency for r in full.pareto]))
    en_bound = float(np.max([r.energy for r in full.pareto]))
    orc = brute_force_oracle(plan, table, platform, Constraints(latency=lat_bound, energy=en_bound))
    assert all(r.latency < lat_bound and r.energy < en_bound for r in orc.pareto)
    fronts_match(orc.pareto, naive_front(plan, table, platform, (lat_bound, en_bound)))


def test_iter_feasible_is_lexicographic_and_respects_support():
    plan, table, _ = random_instance(0, 4, 3)
    platform = Platform("p", (ComputeUnit("cu0", "A"),
                              ComputeUnit("cu1", "B", kinds=frozenset()),
                              ComputeUnit("cu2", "C")))
    costs = PlanCosts(plan, table, platform)
    rows = np.concatenate(list(iter_feasible(costs, chunk=5)))
    assert len(rows) == costs.feasible_count()
    assert [tuple(r) for r in rows] == sorted(tuple(r) for r in rows)
    for i, u in enumerate(plan.units):
        ok = [j for j, cu in enumerate(platform.cus) if cu.supports(u)]
        assert set(rows[:, i]) <= set(ok)


# ---------------------------------------------------------------------------
# the EA

@pytest.mark.parametrize("seed", range(4))
def test_ea_equals_oracle_with_full_budget(seed):
    plan, table, platform = random_instance(100 + seed, 10, 2)
    cfg = IoeConfig(population=40, generations=None, budget=1024, exhaustive_init=False)
    res = search_mappings(plan, table, platform, cfg, seed)
    orc = brute_force_oracle(plan, table, platform)
    assert sorted((r.latency, r.energy) for r in res.pareto) == \
           sorted((r.latency, r.energy) for r in orc.pareto)
    assert res.evaluations <= 1024


def test_exhaustive_init_equals_oracle():
    plan, table, platform = random_instance(7, 3, 2)
    res = search_mappings(plan, table, platform, IoeConfig(population=20, generations=2))
    orc = brute_force_oracle(plan, table, platform)
    assert res.exhaustive and res.evaluations == 8
    assert [(r.mapping, r.latency, r.energy) for r in res.pareto] == \
           [(r.mapping, r.latency, r.energy) for r in orc.pareto]


def test_free_transfers_and_dominant_cu():
    plan, table, platform = random_instance(5, 12, 3, zero_transfer=True)
    d = platform.default_dvfs
    cheap = {k: (CostRecord(r.comp_latency / 100, r.comp_energy / 100) if k[1] == "cu1" else r)
             for k, r in table.entries.items()}
    res = search_mappings(plan, CostTable(cheap), platform, IoeConfig(population=30, generations=5))
    assert res.best_mapping == MappingVector(("cu1",) * len(plan), d)
    assert len(res.pareto) == 1


def test_xavier_like_front_endpoints_are_standalone():
    space = SpaceConfig(superblocks=2, depths=(2,), graph_ops=("M",), fc_pre=(True,),
                        ffn_use=(True,), widths=(320,), schedule=DimensionSchedule.isotropic(2))
    spec = preset("xavier-like", space)
    table = synth_profile(0, spec)
    platform = spec.platform()
    plan = plan_for(next(space.genomes()), space)
    assert len(plan) == 10
    orc = brute_force_oracle(plan, table, platform)
    ends = (orc.pareto[0], orc.pareto[-1])
    assert set(ends[0].mapping.assignments) == {"gpu"}
    assert set(ends[1].mapping.assignments) == {"dla"}
    assert len(orc.pareto) > 2
    assert all(len(set(r.mapping.assignments)) == 2 for r in orc.pareto[1:-1])
    res = search_mappings(plan, table, platform)
    assert sorted((r.latency, r.energy) for r in res.pareto) == \
           sorted((r.latency, r.energy) for r in orc.pareto)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(12, 16))
def test_best_never_worse_than_standalone(seed, n):
    plan, table, platform = random_instance(seed, n, 2)
    cfg = IoeConfig(population=20, generations=3, exhaustive_init=False)
    res = search_mappings(plan, table, platform, cfg, seed)
    stand = min(ioe_fitness(e, res.refs) for e in res.refs.per_cu.values())
    assert res.best_fitness <= stand + 1e-12
    pts = [(r.latency, r.energy) for r in res.pareto]
    for p in pts:
        assert not any(q[0] <= p[0] and q[1] <= p[1] and q != p for q in pts)
    for r in res.pareto:
        perf = evaluate(plan, r.mapping, table, platform)
        assert perf.total_latency == pytest.approx(r.latency)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_constrained_results_satisfy_bounds(seed, ratio):
    plan, table, platform = random_instance(seed, 12, 2)
    cons = Constraints(latency_increase=ratio, energy=1e9)
    res = search_mappings(plan, table, platform,
                          IoeConfig(population=20, generations=3, constraints=cons,
                                    exhaustive_init=False), seed)
    bound = (1 + ratio) * res.refs.latency
    if res.feasible:
        assert all(r.latency < bound for r in res.pareto)
    else:
        assert ratio == 0.0 or not res.pareto[0].latency < bound


def test_infeasible_constraints_return_standalone():
    plan, table, platform = random_instance(8, 8, 2)
    res = search_mappings(plan, table, platform,
                          IoeConfig(population=10, generations=2,
                                    constraints=Constraints(latency=1e-9)))
    assert not res.feasible
    assert {r.mapping.assignments[0] for r in res.pareto} == {"cu0", "cu1"}
    assert all(r.transitions == 0 for r in res.pareto)


def test_power_constraint():
    plan, table, platform = random_instance(9, 12, 2)
    free = search_mappings(plan, table, platform, IoeConfig(population=30, generations=4))
    powers = sorted(1000 * r.energy / r.latency for r in free.pareto)
    cap = powers[len(powers) // 2]
    res = search_mappings(plan, table, platform,
                          IoeConfig(population=30, generations=4,
                                    constraints=Constraints(power=cap)))
    assert res.feasible
    assert all(1000 * r.energy / r.latency < cap for r in res.pareto)


def test_constraints_resolution_and_violation():
    c = Constraints(latency=20.0, latency_increase=0.1).resolve(10.0)
    assert c.latency == pytest.approx(11.0) and c.latency_increase is None
    assert Constraints(latency=5.0).satisfied([5.0, 4.9], [0, 0]).tolist() == [False, True]
    v = Constraints(latency=10.0, energy=10.0).violation([12.0], [15.0])
    assert v[0] == pytest.approx(0.7)
    with pytest.raises(ConfigError):
        Constraints(latency=-1.0)


def test_determinism():
    plan, table, platform = random_instance(12, 14, 3)
    cfg = IoeConfig(population=30, generations=5)
    a = search_mappings(plan, table, platform, cfg, 4)
    b = search_mappings(plan, table, platform, cfg, 4)
    assert a.pareto == b.pareto and a.best_mapping == b.best_mapping
    assert a.evaluations == b.evaluations


def test_mutation_only_uses_supported_cus():
    plan = plan_with_units(12, np.random.default_rng(3))
    platform = Platform("p", (ComputeUnit("cu0", "A"),
                              ComputeUnit("cu1", "B", kinds=frozenset({"ffn"}))))
    rng = np.random.default_rng(0)
    entries = {}
    for u in plan.units:
        for cu in platform.cus:
            if cu.supports(u):
                entries[(cost_key(u), cu.id, platform.default_dvfs)] = CostRecord(
                    *rng.uniform(1, 5, 2), *rng.uniform(0, 1, 4))
    res = search_mappings(plan, CostTable(entries), platform,
                          IoeConfig(population=20, generations=5, exhaustive_init=False))
    for r in res.pareto:
        r.mapping.check(plan, platform)
    assert all(set(r.mapping.assignments) <= {"cu0", "cu1"} for r in res.pareto)


def test_budget_caps_distinct_evaluations():
    plan, table, platform = random_instance(13, 14, 3)
    res = search_mappings(plan, table, platform,
                          IoeConfig(population=200, generations=None, budget=300))
    assert res.evaluations <= 300
    assert res.history[-1].evaluations == res.evaluations


def test_config_validation():
    with pytest.raises(ConfigError):
        IoeConfig(mutation_prob=1.5)
    with pytest.raises(ConfigError):
        IoeConfig(generations=None)
    assert IoeConfig(budget=100).effective_population() == 25
    assert IoeConfig().capacity() == 200 + 10 * 100


# ---------------------------------------------------------------------------
# DVFS

def small_xavier():
    space = SpaceConfig(superblocks=1, depths=(2,), graph_ops=("G",), fc_pre=(False,),
                        ffn_use=(True,), widths=(96,), schedule=DimensionSchedule.isotropic(1))
    spec = preset("xavier-like", space)
    return plan_for(next(space.genomes()), space), synth_profile(0, spec), spec.platform()


def test_dvfs_scan_is_exhaustive_and_optimal():
    plan, table, platform = small_xavier()
    m = MappingVector(("gpu", "dla", "dla", "gpu", "gpu", "dla"), platform.default_dvfs)
    res = search_dvfs(plan, m, table, platform)
    assert len(res.scan) == 24
    refs = StandaloneRefs.compute(plan, table, platform)
    for setting in platform.dvfs_ids():
        perf = evaluate(plan, MappingVector(m.assignments, setting), table, platform)
        assert res.fitness <= ioe_fitness(perf, refs)


def test_dvfs_dominating_setting_and_ties():
    plan, table, platform = small_xavier()
    target = platform.dvfs_ids()[5]
    boosted = {k: (CostRecord(*(v / 10 for v in r.as_tuple())) if k[2] == target else r)
               for k, r in table.entries.items()}
    m = MappingVector(("gpu",) * len(plan), platform.default_dvfs)
    assert search_dvfs(plan, m, CostTable(boosted), platform).setting == target
    flat = {(k, cu, d): table.entries[(k, cu, platform.default_dvfs)]
            for (k, cu, d) in table.entries}
    assert search_dvfs(plan, m, CostTable(flat), platform).setting == platform.dvfs_ids()[0]


def test_searched_mode_counts_dvfs_evaluations():
    plan, table, platform = small_xavier()
    res = search_mappings(plan, table, platform, IoeConfig(population=20, generations=3,
                                                           dvfs_mode="searched"))
    assert res.dvfs_evaluations == 24
    fixed = search_mappings(plan, table, platform, IoeConfig(population=20, generations=3))
    assert res.best_fitness <= fixed.best_fitness + 1e-12


def test_resolve_dvfs_modes():
    platform = preset("xavier-like").platform()
    assert resolve_dvfs(platform, "max") == platform.default_dvfs
    assert resolve_dvfs(platform, "min") == "cpu1728-gpu520-emc1065-dla1050"
    assert resolve_dvfs(platform, "cpu1728-gpu900-emc2133-dla1395") == \
           "cpu1728-gpu900-emc2133-dla1395"
    with pytest.raises(ConfigError):
        resolve_dvfs(platform, "cpu1-gpu2")


def test_min_clock_mode_evaluates_at_that_setting():
    plan, table, platform = small_xavier()
    res = search_mappings(plan, table, platform, IoeConfig(population=20, generations=2,
                                                           dvfs_mode="min"))
    assert res.best_mapping.dvfs == "cpu1728-gpu520-emc1065-dla1050"
    slow = standalone_eval(plan, "gpu", table, res.best_mapping.dvfs)
    fast = standalone_eval(plan, "gpu", table, platform.default_dvfs)
    assert slow.total_latency > fast.total_latency
    assert math.isclose(res.refs.latency, min(
        standalone_eval(plan, c, table, res.best_mapping.dvfs).total_latency
        for c in platform.cu_ids))


def test_refs_fall_back_when_a_cu_cannot_run_everything():
    plan, table, _ = random_instance(0, 6, 2)
    platform = Platform("p", (ComputeUnit("cu0", "A"), ComputeUnit("cu1", "B", kinds=frozenset())))
    refs = StandaloneRefs.compute(plan, table, platform)
    assert set(refs.per_cu) == {"cu0"}


def test_seed_sequences_accepted():
    plan, table, platform = random_instance(0, 12, 2)
    ss = np.random.SeedSequence([1, 2, 3])
    cfg = dataclasses.replace(IoeConfig(population=10, generations=2), exhaustive_init=False)
    a = search_mappings(plan, table, platform, cfg, ss)
    b = search_mappings(plan, table, platform, cfg, np.random.SeedSequence([1, 2, 3]))
    assert a.pareto == b.pareto
