"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible, 4 oracle budget refused.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path
from typing import Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from vigmap import __version__
from vigmap.analysis import (mapping_class, pareto_composition, to_csv)
from vigmap.archspace import Granularity, parse_genome, plan_for
from vigmap.config import (RunConfig, find_config, load_config, parse_override,
                           synth_spec_from_dict)
from vigmap.errors import (BudgetExceededError, ConfigError, InfeasibleError, LookupMissError,
                           ProfileError, VigmapError)
from vigmap.hwmodel import (mapping_string, preset, save_cost_table, save_platform,
                            synth_profile, utilization)
from vigmap.hwmodel.synth import reachable_units
from vigmap.ioe import brute_force_oracle, resolve_dvfs, search_mappings
from vigmap.ooe import co_search

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4

_CONSTRAINT_KEYS = {"latency": "latency", "energy": "energy", "power": "power",
                    "latency-increase": "latency_increase", "latency_increase": "latency_increase"}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Run:
    """Output directory bookkeeping plus the manifest written at the end."""

    def __init__(self, out: Path, command: str, cfg: RunConfig | None, seed: int | None,
                 force: bool, extra: dict | None = None):
        self.out = out
        self.files: list[str] = []
        if out.exists() and any(out.iterdir()) and not force:
            raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
        out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "tool": "vigmap",
            "version": __version__,
            "command": command,
            "config_path": str(cfg.path) if cfg is not None and cfg.path else None,
            "config_sha256": cfg.sha256 if cfg is not None else None,
            "seed": seed,
            "started": _now(),
            **(extra or {}),
        }
        self.tag = f"run: config_sha256={self.manifest['config_sha256']} seed={seed} command={command}"

    def write(self, name: str, header: Sequence[str], rows, notes: Sequence[str] = ()) -> None:
        text = to_csv(header, rows, [self.tag, *notes])
        (self.out / name).write_text(text)
        self.files.append(name)

    def finish(self, **extra) -> None:
        self.manifest.update(extra)
        self.manifest["finished"] = _now()
        self.manifest["files"] = {
            f: hashlib.sha256((self.out / f).read_bytes()).hexdigest() for f in self.files}
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=2) + "\n")


def _load(args) -> RunConfig:
    overrides = [parse_override(s) for s in getattr(args, "set", None) or []]
    for c in getattr(args, "constraint", None) or []:
        key, value = parse_override(c)
        if key not in _CONSTRAINT_KEYS:
            raise ConfigError(f"unknown constraint {key!r} (expected one of "
                              f"{sorted(set(_CONSTRAINT_KEYS))})")
        overrides.append((f"ioe.constraints.{_CONSTRAINT_KEYS[key]}", value))
    return load_config(find_config(args.config), overrides)


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _util_cols(cfg: RunConfig) -> list[str]:
    return [f"util_{cu}" for cu in cfg.platform.cu_ids]


def _mapping_text(plan, assignments, platform) -> str:
    return mapping_string(plan, assignments, platform, sep=" | ", joiner="-")


# ---------------------------------------------------------------------------
# commands

def cmd_gen_profile(args) -> int:
    if args.spec:
        try:
            doc = tomllib.loads(Path(args.spec).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{args.spec}: {exc}") from None
        spec = synth_spec_from_dict(doc)
    else:
        spec = preset(args.preset)
    out = Path(args.out)
    targets = [out / "platform.toml", out / "costs.csv"]
    clash = [str(t) for t in targets if t.exists()]
    if clash and not args.force:
        raise ConfigError(f"refusing to overwrite {clash} (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    table = synth_profile(args.seed, spec)
    save_platform(spec.platform(), targets[0])
    save_cost_table(table, targets[1],
                    f"synthetic profile {spec.name} seed={args.seed}\nvalues are invented, "
                    f"not measured")
    print(f"wrote {targets[0]} and {targets[1]} ({len(table)} entries)")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    run = _Run(Path(args.out), "search", cfg, seed, args.force)
    res = co_search(cfg.space, cfg.platform, cfg.table, cfg.accuracy, cfg.ooe, seed,
                    threads=args.threads)
    cu_ids = cfg.platform.cu_ids

    def cand_row(c):
        plan = plan_for(c.genome, cfg.space, cfg.granularity)
        util = utilization(c.mapping.assignments, cu_ids)
        return [str(c.genome), c.genome.ops_summary, c.genome.ffn_use_pct(),
                c.genome.fc_pre_use_pct(), c.accuracy, c.latency, c.energy, c.transitions,
                *[100.0 * util[cu] for cu in cu_ids], c.mapping.dvfs,
                _mapping_text(plan, c.mapping.assignments, cfg.platform), c.ioe_fitness, c.scalar]

    head = ["genome", "ops", "ffn_use_pct", "fc_pre_use_pct", "accuracy", "latency_ms",
            "energy_mj", "transitions", *_util_cols(cfg), "dvfs", "mapping", "ioe_fitness",
            "scalar"]
    run.write("pareto.csv", head, [cand_row(c) for c in res.pareto],
              ["objectives: accuracy max, latency min, energy min"])
    run.write("hv_trace.csv", ["generation", "hypervolume", "archive_size", "genomes_evaluated",
                               "mapping_evaluations"],
              [(h.generation, h.hypervolume, len(h.archive), h.genomes_evaluated, h.eval_count)
               for h in res.history],
              [f"reference (accuracy, latency, energy) = {res.reference}"])
    combined = {}
    for h in res.history:
        for c in h.archive:
            combined.setdefault(c.encoding, c)
    final = pareto_composition((c.mapping.assignments for c in res.pareto), cu_ids)
    union = pareto_composition((c.mapping.assignments for c in combined.values()), cu_ids)
    rows = [("final", *r) for r in final.rows()] + [("all_generations", *r) for r in union.rows()]
    run.write("composition.csv", ["scope", "class", "count", "percent"], rows)
    run.write("scatter.csv", ["genome", "accuracy", "latency_ms", "energy_mj", "mapping_class",
                              "feasible"],
              [(str(c.genome), c.accuracy, c.latency, c.energy,
                mapping_class(c.mapping.assignments), int(c.feasible)) for c in res.evaluated])
    run.finish(threads=args.threads, genomes_evaluated=res.genomes_evaluated,
               mapping_evaluations=res.eval_count,
               mapping_evaluations_note="counts distinct (genome, mapping) evaluations")
    print(f"search finished: {len(res.pareto)} Pareto members, {res.genomes_evaluated} genomes, "
          f"{res.eval_count} (genome, mapping) evaluations -> {run.out}")
    return EXIT_OK


def _plan(cfg: RunConfig, text: str):
    genome = parse_genome(text, cfg.space.backbone)
    if len(genome.superblocks) != cfg.space.superblocks:
        raise ConfigError(f"genome has {len(genome.superblocks)} superblocks, space has "
                          f"{cfg.space.superblocks}")
    return plan_for(genome, cfg.space, cfg.granularity)


def _mapping_rows(plan, records, platform):
    return [(_mapping_text(plan, r.mapping.assignments, platform), r.latency, r.energy,
             r.transitions, r.fitness, 1000.0 * r.energy / r.latency,
             ";".join(r.mapping.assignments)) for r in records]


_MAP_HEAD = ["mapping", "latency_ms", "energy_mj", "transitions", "fitness", "power_mw",
             "assignments"]


def cmd_map(args) -> int:
    cfg = _load(args)
    seed = _seed(args, cfg)
    plan = _plan(cfg, args.genome)
    run = _Run(Path(args.out), "map", cfg, seed, args.force, {"genome": args.genome})
    res = search_mappings(plan, cfg.table, cfg.platform, cfg.ioe, seed)
    run.write("ioe_pareto.csv", _MAP_HEAD, _mapping_rows(plan, res.pareto, cfg.platform),
              [f"genome: {args.genome}", f"feasible: {int(res.feasible)}"])
    refs = [(f"standalone:{cu}", e.total_latency, e.total_energy) for cu, e in res.refs.per_cu.items()]
    b = res.best_eval
    run.write("ioe_best.csv", ["label", "mapping", "latency_ms", "energy_mj", "transitions",
                               "fitness", "dvfs"],
              [(label, "", lat, en, 0, "", "") for label, lat, en in refs]
              + [("best", _mapping_text(plan, res.best_mapping.assignments, cfg.platform),
                  b.total_latency, b.total_energy, b.transitions, res.best_fitness,
                  res.best_mapping.dvfs)])
    run.finish(evaluations=res.evaluations, dvfs_evaluations=res.dvfs_evaluations,
               feasible=res.feasible, exhaustive=res.exhaustive)
    print(f"m* = {_mapping_text(plan, res.best_mapping.assignments, cfg.platform)}  "
          f"latency {b.total_latency:.2f} ms, energy {b.total_energy:.2f} mJ, "
          f"fitness {res.best_fitness:.4f}")
    if not res.feasible:
        print("no mapping satisfies the constraints; standalone evaluations reported",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args)
    plan = _plan(cfg, args.genome)
    budget = args.budget if args.budget is not None else cfg.analysis.oracle_budget
    # the oracle scores mappings at the setting the IOE would search them at
    dvfs = resolve_dvfs(cfg.platform, cfg.ioe.dvfs_mode)
    res = brute_force_oracle(plan, cfg.table, cfg.platform, cfg.ioe.constraints, budget, dvfs,
                             cfg.ioe.gamma1, cfg.ioe.gamma2)
    run = _Run(Path(args.out), "oracle", cfg, None, args.force, {"genome": args.genome})
    run.write("oracle_pareto.csv", _MAP_HEAD, _mapping_rows(plan, res.pareto, cfg.platform),
              [f"genome: {args.genome}", f"enumerated: {res.count}"])
    run.finish(enumerated=res.count)
    print(f"enumerated {res.count} mappings; exact front has {len(res.pareto)} members")
    if not res.pareto:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _read_records(path: Path) -> tuple[list[str], list[dict]]:
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return reader.fieldnames or [], list(reader)


def _table(rows: list[list[str]], head: list[str]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*r) for r in rows]
    return "\n".join(out)


def _f(x: str, nd: int = 2) -> str:
    try:
        return f"{float(x):.{nd}f}"
    except ValueError:
        return x


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    mpath = run / "manifest.json"
    if not mpath.is_file():
        raise ConfigError(f"{run} has no manifest.json; not a finished run directory")
    manifest = json.loads(mpath.read_text())
    print(f"run: {manifest['command']}  seed={manifest.get('seed')}  "
          f"config_sha256={manifest.get('config_sha256')}")
    if manifest["command"] == "search":
        head, rows = _read_records(run / "pareto.csv")
        utils = [h for h in head if h.startswith("util_")]
        rows.sort(key=lambda r: -float(r["accuracy"]))
        print("\nPareto-optimal architectures and mappings")
        print(_table([[r["ops"], _f(r["ffn_use_pct"], 0), _f(r["fc_pre_use_pct"], 0),
                       _f(r["accuracy"]), _f(r["latency_ms"]), _f(r["energy_mj"]),
                       *[_f(r[u], 1) for u in utils]] for r in rows],
                     ["ops", "ffn%", "pre%", "acc%", "lat ms", "energy mJ",
                      *[u.replace("util_", "") + "%" for u in utils]]))
        _, comp = _read_records(run / "composition.csv")
        print("\nPareto composition")
        print(_table([[c["scope"], c["class"], c["count"], _f(c["percent"], 1)] for c in comp],
                     ["scope", "class", "count", "percent"]))
        print(f"\n{manifest.get('genomes_evaluated')} genomes, "
              f"{manifest.get('mapping_evaluations')} (genome, mapping) evaluations")
    elif manifest["command"] in ("map", "oracle"):
        print(f"genome: {manifest.get('genome')}")
        name = "ioe_pareto.csv" if manifest["command"] == "map" else "oracle_pareto.csv"
        if manifest["command"] == "map":
            _, best = _read_records(run / "ioe_best.csv")
            print("\nStandalone references and selected mapping")
            print(_table([[b["label"], b["mapping"], _f(b["latency_ms"]), _f(b["energy_mj"]),
                           b["transitions"], _f(b["fitness"], 4)] for b in best],
                         ["config", "mapping", "lat ms", "energy mJ", "transitions", "fitness"]))
        _, rows = _read_records(run / name)
        print("\nLatency-energy front")
        print(_table([[r["mapping"], _f(r["latency_ms"]), _f(r["energy_mj"]), r["transitions"],
                       _f(r["fitness"], 4)] for r in rows],
                     ["mapping", "lat ms", "energy mJ", "transitions", "fitness"]))
    else:
        raise ConfigError(f"unknown run command {manifest['command']!r}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    missing = []
    settings = cfg.platform.dvfs_ids()
    for unit in reachable_units(cfg.space):
        if cfg.granularity is Granularity.BLOCKWISE and unit.kind.value.startswith(("grapher_", "ffn_")):
            continue
        if cfg.granularity is Granularity.LAYERWISE and unit.kind.value in ("grapher", "ffn"):
            continue
        for cu in cfg.platform.cus:
            if not cu.supports(unit):
                continue
            for d in settings:
                try:
                    cfg.table.lookup(unit, cu.id, d)
                except LookupMissError as exc:
                    missing.append(str(exc))
    if missing:
        uniq = sorted(set(missing))
        for m in uniq[:50]:
            print(m, file=sys.stderr)
        raise ConfigError(f"cost table misses {len(uniq)} entries the search space can reach")
    print(f"config OK: {cfg.platform.name} with {len(cfg.platform.cus)} CUs, "
          f"{len(settings)} DVFS settings, {len(cfg.table)} cost entries, "
          f"space of {cfg.space.superblocks} superblocks")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vigmap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"vigmap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", "-c", help="run config (TOML); falls back to "
                        "$VIGMAP_CONFIG_DIR/vigmap.toml")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config key")
        sp.add_argument("--constraint", action="append", metavar="NAME=VALUE",
                        help="latency, energy, power or latency-increase bound")

    g = sub.add_parser("gen-profile", help="write a synthetic platform and cost table")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset")
    src.add_argument("--spec", help="TOML generator spec")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_profile)

    s = sub.add_parser("search", help="nested architecture and mapping search")
    with_config(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_search)

    m = sub.add_parser("map", help="search mappings for one architecture")
    with_config(m)
    m.add_argument("--genome", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", required=True)
    m.add_argument("--force", action="store_true")
    m.set_defaults(func=cmd_map)

    o = sub.add_parser("oracle", help="exact front by enumeration")
    with_config(o)
    o.add_argument("--genome", required=True)
    o.add_argument("--budget", type=int)
    o.add_argument("--out", required=True)
    o.add_argument("--force", action="store_true")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", help="summarize a finished run directory")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check a config and its cost table")
    with_config(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ProfileError, LookupMissError, VigmapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
