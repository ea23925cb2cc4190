"""Reading and writing cost-table (CSV) and platform (TOML) files."""

from __future__ import annotations

import csv
import importlib.resources
import io
import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
import tomli_w

from vigmap.archspace import GraphOp, UnitKind, WorkloadPlan
from vigmap.errors import ConfigError, ProfileError
from vigmap.hwmodel.costs import (COST_FIELDS, KEY_FIELDS, CostRecord, CostTable,
                                  canonical_key, describe_key)
from vigmap.hwmodel.platform import ComputeUnit, Platform

COLUMNS = KEY_FIELDS + ("cu_id", "dvfs_id") + COST_FIELDS
_INT_FIELDS = ("superblock_index", "nodes", "dim", "k", "width")
_LATENCY_FIELDS = ("comp_latency", "in_latency", "out_latency")


def _parse_key_value(field: str, text: str):
    text = text.strip()
    if text == "":
        return None
    if field == "kind":
        return UnitKind(text).value
    if field == "graph_op":
        return GraphOp.parse(text).value
    if field == "fc_pre":
        low = text.lower()
        if low in ("1", "true"):
            return True
        if low in ("0", "false"):
            return False
        raise ValueError(f"expected boolean, got {text!r}")
    if field in _INT_FIELDS:
        return int(text)
    raise AssertionError(field)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_cost_table(text: str, platform: Platform | None = None,
                     source: str | None = None) -> CostTable:
    """Parse cost-table text. Lines starting with '#' are comments."""
    rows = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            cells = next(csv.reader([line]))
        except csv.Error as exc:
            raise ProfileError(f"parse error: {exc}", lineno, source) from None
        if header is None:
            header = [c.strip() for c in cells]
            missing = [c for c in COLUMNS if c not in header]
            if missing:
                raise ProfileError(f"header lacks columns {missing}", lineno, source)
            continue
        if len(cells) != len(header):
            raise ProfileError(f"expected {len(header)} columns, got {len(cells)}",
                               lineno, source)
        rows.append((lineno, dict(zip(header, cells))))
    if header is None:
        raise ProfileError("missing header row", None, source)

    parsed = []
    present = {"kind"}
    for lineno, row in rows:
        try:
            fields = {f: _parse_key_value(f, row[f]) for f in KEY_FIELDS}
        except ValueError as exc:
            raise ProfileError(f"bad signature field: {exc}", lineno, source) from None
        if fields["kind"] is None:
            raise ProfileError("kind must not be empty", lineno, source)
        present |= {f for f, v in fields.items() if v is not None}
        costs = {}
        for f in COST_FIELDS:
            try:
                costs[f] = float(row[f])
            except ValueError:
                raise ProfileError(f"{f} is not a number: {row[f]!r}", lineno, source) from None
            if not math.isfinite(costs[f]) or costs[f] < 0:
                raise ProfileError(f"{f} must be finite and >= 0, got {row[f].strip()}",
                                   lineno, source)
        parsed.append((lineno, fields, row["cu_id"].strip(), row["dvfs_id"].strip(), costs))

    # a column left blank everywhere does not take part in the lookup key
    key_fields = tuple(f for f in KEY_FIELDS if f in present)
    cu_ids = set(platform.cu_ids) if platform is not None else None
    dvfs_ids = set(platform.dvfs_ids()) if platform is not None else None
    scale = 1.0
    if platform is not None and platform.latency_unit == "cycles":
        scale = 1.0 / platform.cycles_per_ms

    entries = {}
    for lineno, fields, cu_id, dvfs, costs in parsed:
        if cu_ids is not None and cu_id not in cu_ids:
            raise ProfileError(f"unknown CU id {cu_id!r}", lineno, source)
        if dvfs_ids is not None and dvfs not in dvfs_ids:
            raise ProfileError(f"unknown DVFS setting {dvfs!r}", lineno, source)
        for f in _LATENCY_FIELDS:
            costs[f] *= scale
        key = canonical_key(fields, key_fields)
        trip = (key, cu_id, dvfs)
        if trip in entries:
            raise ProfileError(f"duplicate entry for ({describe_key(key)}) on {cu_id!r} at "
                               f"{dvfs!r}", lineno, source)
        entries[trip] = CostRecord(**costs)
    return CostTable(entries, key_fields)


def load_cost_table(path, platform: Platform | None = None,
                    reference_plan: WorkloadPlan | None = None) -> CostTable:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProfileError(f"cannot read cost table: {exc}", None, path) from None
    table = parse_cost_table(text, platform, str(path))
    if reference_plan is not None:
        if platform is None:
            raise ConfigError("validating against a reference plan needs a platform")
        missing = table.missing(reference_plan, platform)
        if missing:
            listing = "; ".join(f"({describe_key(k)}) on {cu} at {d}" for k, cu, d in missing)
            raise ProfileError(f"{len(missing)} missing entries for reference plan: {listing}",
                               None, path)
    return table


def dump_cost_table(table: CostTable, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        for line in header_comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for (key, cu, dvfs), rec in table.entries.items():
        w.writerow([_fmt(v) for v in key] + [cu, dvfs] + [_fmt(v) for v in rec.as_tuple()])
    return buf.getvalue()


def save_cost_table(table: CostTable, path, header_comment: str | None = None) -> None:
    Path(path).write_text(dump_cost_table(table, header_comment))


# ---------------------------------------------------------------------------
# platform files

def platform_to_dict(platform: Platform) -> dict:
    doc = {
        "name": platform.name,
        "latency_unit": platform.latency_unit,
        "cycles_per_ms": platform.cycles_per_ms,
        "default_dvfs": platform.default_dvfs,
        "clocks": {name: list(vals) for name, vals in platform.clock_domains},
        "cu": [],
    }
    for cu in platform.cus:
        entry = {"id": cu.id, "symbol": cu.symbol}
        if cu.clock is not None:
            entry["clock"] = cu.clock
        if cu.kinds is not None:
            entry["kinds"] = sorted(k.value for k in cu.kinds)
        if cu.unsupported_ops:
            entry["unsupported_ops"] = sorted(o.value for o in cu.unsupported_ops)
        doc["cu"].append(entry)
    if platform.dvfs_rules:
        doc["dvfs_rules"] = platform.dvfs_rules
    return doc


def platform_from_dict(doc: dict, source: str | None = None) -> Platform:
    try:
        cus = []
        for entry in doc["cu"]:
            unknown = set(entry) - {"id", "symbol", "clock", "kinds", "unsupported_ops"}
            if unknown:
                raise ConfigError(f"unknown CU keys {sorted(unknown)}")
            kinds = entry.get("kinds")
            cus.append(ComputeUnit(
                entry["id"], entry.get("symbol", ""),
                None if kinds is None else frozenset(UnitKind(k) for k in kinds),
                frozenset(entry.get("unsupported_ops", ())), entry.get("clock")))
        return Platform(
            name=doc.get("name", "platform"),
            cus=tuple(cus),
            clock_domains=tuple((k, tuple(v)) for k, v in doc.get("clocks", {}).items()),
            default_dvfs=doc.get("default_dvfs"),
            latency_unit=doc.get("latency_unit", "ms"),
            cycles_per_ms=float(doc.get("cycles_per_ms", 1.0)),
            dvfs_rules=doc.get("dvfs_rules", {}),
        )
    except KeyError as exc:
        raise ProfileError(f"platform missing required key {exc}", None, source) from None
    except (ValueError, TypeError) as exc:
        raise ProfileError(f"invalid platform: {exc}", None, source) from None


def load_platform(path) -> Platform:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ProfileError(f"cannot read platform: {exc}", None, path) from None
    except tomllib.TOMLDecodeError as exc:
        raise ProfileError(f"parse error: {exc}", None, path) from None
    return platform_from_dict(doc, str(path))


def dump_platform(platform: Platform) -> str:
    return tomli_w.dumps(platform_to_dict(platform))


def save_platform(platform: Platform, path) -> None:
    Path(path).write_text(dump_platform(platform))


def fixture_path(name: str) -> Path:
    """Path of a file shipped in the package's fixtures directory."""
    path = Path(str(importlib.resources.files("vigmap") / "fixtures" / name))
    if not path.is_file():
        raise ConfigError(f"no shipped fixture named {name!r}")
    return path
