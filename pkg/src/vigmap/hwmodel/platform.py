"""Compute units, clock domains and DVFS settings of a modeled SoC."""

from __future__ import annotations

import dataclasses
import itertools
from typing import Iterable

from vigmap.archspace import GraphOp, UnitKind, UnitSignature
from vigmap.errors import ConfigError

NOMINAL_DVFS = "nominal"

ALWAYS_SUPPORTED = frozenset({UnitKind.STEM, UnitKind.CLASSIFIER})


@dataclasses.dataclass(frozen=True)
class ComputeUnit:
    """One CU. ``kinds=None`` means every unit kind is supported."""

    id: str
    symbol: str = ""
    kinds: frozenset[UnitKind] | None = None
    unsupported_ops: frozenset[GraphOp] = frozenset()
    clock: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ConfigError("compute unit id must be non-empty")
        if not self.symbol:
            object.__setattr__(self, "symbol", self.id[0].upper())
        if self.kinds is not None:
            kinds = frozenset(UnitKind(k) for k in self.kinds) | ALWAYS_SUPPORTED
            object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "unsupported_ops",
                           frozenset(GraphOp.parse(o) for o in self.unsupported_ops))

    def supports(self, unit: UnitSignature) -> bool:
        if self.kinds is not None and unit.kind not in self.kinds:
            return False
        if unit.graph_op is not None and unit.graph_op in self.unsupported_ops:
            return False
        return True


@dataclasses.dataclass(frozen=True)
class DvfsSetting:
    id: str
    clocks: tuple[tuple[str, int], ...]

    def clock(self, domain: str) -> int:
        return dict(self.clocks)[domain]


def dvfs_id(clocks: Iterable[tuple[str, int]]) -> str:
    parts = [f"{name}{mhz}" for name, mhz in clocks]
    return "-".join(parts) if parts else NOMINAL_DVFS


@dataclasses.dataclass(frozen=True)
class Platform:
    name: str
    cus: tuple[ComputeUnit, ...]
    clock_domains: tuple[tuple[str, tuple[int, ...]], ...] = ()
    default_dvfs: str | None = None
    latency_unit: str = "ms"
    cycles_per_ms: float = 1.0
    dvfs_rules: dict = dataclasses.field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "cus", tuple(self.cus))
        object.__setattr__(self, "clock_domains",
                           tuple((n, tuple(int(v) for v in vals)) for n, vals in self.clock_domains))
        if self.default_dvfs is None:
            top = tuple((n, max(vals)) for n, vals in self.clock_domains)
            object.__setattr__(self, "default_dvfs", dvfs_id(top))
        self.validate()

    def validate(self) -> None:
        if not self.cus:
            raise ConfigError(f"platform {self.name!r} has no compute units")
        ids = [cu.id for cu in self.cus]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate CU ids in platform {self.name!r}: {ids}")
        symbols = [cu.symbol for cu in self.cus]
        if len(set(symbols)) != len(symbols):
            raise ConfigError(f"duplicate CU symbols in platform {self.name!r}: {symbols}")
        domains = [n for n, _ in self.clock_domains]
        if len(set(domains)) != len(domains):
            raise ConfigError(f"duplicate clock domains: {domains}")
        for name, vals in self.clock_domains:
            if not vals or any(v <= 0 for v in vals):
                raise ConfigError(f"clock domain {name!r} needs positive values, got {vals}")
        for cu in self.cus:
            if cu.clock is not None and cu.clock not in domains:
                raise ConfigError(f"CU {cu.id!r} refers to unknown clock domain {cu.clock!r}")
        if self.default_dvfs not in self.dvfs_ids():
            raise ConfigError(f"default DVFS setting {self.default_dvfs!r} is not in the "
                              f"platform's setting space")
        if self.latency_unit not in ("ms", "cycles"):
            raise ConfigError(f"latency_unit must be 'ms' or 'cycles', got {self.latency_unit!r}")
        if self.cycles_per_ms <= 0:
            raise ConfigError("cycles_per_ms must be positive")

    @property
    def cu_ids(self) -> tuple[str, ...]:
        return tuple(cu.id for cu in self.cus)

    def cu(self, cu_id: str) -> ComputeUnit:
        for cu in self.cus:
            if cu.id == cu_id:
                return cu
        raise ConfigError(f"unknown CU id {cu_id!r} (platform has {list(self.cu_ids)})")

    def cu_index(self, cu_id: str) -> int:
        return self.cu_ids.index(self.cu(cu_id).id)

    def dvfs_settings(self) -> list[DvfsSetting]:
        """All settings in enumeration order (the product of domain value lists)."""
        names = [n for n, _ in self.clock_domains]
        out = []
        for combo in itertools.product(*(vals for _, vals in self.clock_domains)):
            clocks = tuple(zip(names, combo))
            out.append(DvfsSetting(dvfs_id(clocks), clocks))
        return out

    def dvfs_ids(self) -> list[str]:
        return [s.id for s in self.dvfs_settings()]

    def dvfs(self, setting_id: str) -> DvfsSetting:
        for s in self.dvfs_settings():
            if s.id == setting_id:
                return s
        raise ConfigError(f"unknown DVFS setting {setting_id!r}")

    def feasible_cus(self, unit: UnitSignature) -> list[int]:
        return [i for i, cu in enumerate(self.cus) if cu.supports(unit)]
