"""Architecture search space: superblock genomes and workload plans.

A candidate network is a fixed number of superblocks, each a stack of
``depth`` ViG blocks sharing one graph operator, width and skip choices.
``expand_architecture`` turns a genome into the ordered list of mappable
units that the hardware model prices.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import math
from typing import Iterator, Sequence

from vigmap.errors import ConfigError, GenomeParseError


class GraphOp(str, enum.Enum):
    MAX_RELATIVE = "M"
    EDGE_CONV = "E"
    GRAPH_SAGE = "S"
    GIN = "G"

    @classmethod
    def parse(cls, text: str) -> "GraphOp":
        key = text.strip()
        if isinstance(text, cls):
            return text
        for op in cls:
            if key == op.value:
                return op
        aliases = {"maxrelative": cls.MAX_RELATIVE, "mrconv": cls.MAX_RELATIVE,
                   "edgeconv": cls.EDGE_CONV, "graphsage": cls.GRAPH_SAGE,
                   "sage": cls.GRAPH_SAGE, "gin": cls.GIN}
        try:
            return aliases[key.lower().replace("-", "").replace("_", "")]
        except KeyError:
            raise ValueError(f"unknown graph op {text!r}") from None


class Backbone(str, enum.Enum):
    ISOTROPIC = "isotropic"
    PYRAMID = "pyramid"


class Granularity(str, enum.Enum):
    BLOCKWISE = "blockwise"
    LAYERWISE = "layerwise"


class UnitKind(str, enum.Enum):
    STEM = "stem"
    GRAPHER = "grapher"
    FFN = "ffn"
    CLASSIFIER = "classifier"
    GRAPHER_PRE = "grapher_pre"
    GRAPHER_AGG = "grapher_agg"
    GRAPHER_COMB = "grapher_comb"
    GRAPHER_POST = "grapher_post"
    FFN_FC1 = "ffn_fc1"
    FFN_FC2 = "ffn_fc2"


BLOCK_KINDS = frozenset({UnitKind.GRAPHER, UnitKind.FFN})
LAYER_KINDS = frozenset({UnitKind.GRAPHER_PRE, UnitKind.GRAPHER_AGG, UnitKind.GRAPHER_COMB,
                         UnitKind.GRAPHER_POST, UnitKind.FFN_FC1, UnitKind.FFN_FC2})
# kinds whose cost depends on the graph operator
OP_KINDS = frozenset({UnitKind.GRAPHER, UnitKind.GRAPHER_AGG, UnitKind.GRAPHER_COMB})


@dataclasses.dataclass(frozen=True)
class SuperblockGenes:
    depth: int
    graph_op: GraphOp
    fc_pre_use: bool
    ffn_use: bool
    ffn_width: int

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"superblock depth must be >= 1, got {self.depth}")
        if self.ffn_width < 1:
            raise ConfigError(f"ffn width must be >= 1, got {self.ffn_width}")
        object.__setattr__(self, "graph_op", GraphOp(self.graph_op))
        object.__setattr__(self, "fc_pre_use", bool(self.fc_pre_use))
        object.__setattr__(self, "ffn_use", bool(self.ffn_use))


@dataclasses.dataclass(frozen=True)
class ArchitectureGenome:
    superblocks: tuple[SuperblockGenes, ...]
    backbone: Backbone = Backbone.ISOTROPIC

    def __post_init__(self):
        object.__setattr__(self, "superblocks", tuple(self.superblocks))
        object.__setattr__(self, "backbone", Backbone(self.backbone))
        if not self.superblocks:
            raise ConfigError("a genome needs at least one superblock")

    def __str__(self) -> str:
        return format_genome(self)

    @property
    def ops_summary(self) -> str:
        return "-".join(sb.graph_op.value for sb in self.superblocks)

    def ffn_use_pct(self) -> float:
        return 100.0 * sum(sb.ffn_use for sb in self.superblocks) / len(self.superblocks)

    def fc_pre_use_pct(self) -> float:
        return 100.0 * sum(sb.fc_pre_use for sb in self.superblocks) / len(self.superblocks)


@dataclasses.dataclass(frozen=True)
class DimensionSchedule:
    """Per-superblock graph size ``nodes`` (N), feature dim (D) and neighbours (K)."""

    nodes: tuple[int, ...]
    dims: tuple[int, ...]
    k: tuple[int, ...]

    def __post_init__(self):
        for name in ("nodes", "dims", "k"):
            vals = tuple(int(v) for v in getattr(self, name))
            if any(v < 1 for v in vals):
                raise ConfigError(f"dimension schedule {name} must be positive: {vals}")
            object.__setattr__(self, name, vals)
        if not len(self.nodes) == len(self.dims) == len(self.k):
            raise ConfigError("dimension schedule lists must have equal length")

    def __len__(self) -> int:
        return len(self.nodes)

    def check_backbone(self, backbone: Backbone) -> None:
        pairs = list(zip(self.nodes, self.dims))
        if backbone is Backbone.ISOTROPIC and len(set(pairs)) > 1:
            raise ConfigError(f"isotropic backbone needs a single (N, D), got {pairs}")
        if backbone is Backbone.PYRAMID:
            for (n0, d0), (n1, d1) in zip(pairs, pairs[1:]):
                if n1 > n0 or n1 * d1 > n0 * d0:
                    raise ConfigError(
                        f"pyramid schedule must not grow node count or feature volume: {pairs}")

    @classmethod
    def isotropic(cls, superblocks: int = 4, nodes: int = 196, dim: int = 320,
                  k: Sequence[int] = (12, 16, 20, 24)) -> "DimensionSchedule":
        k = tuple(k)
        if len(k) != superblocks:
            k = tuple(k[min(i, len(k) - 1)] for i in range(superblocks))
        return cls((nodes,) * superblocks, (dim,) * superblocks, k)

    @classmethod
    def pyramid_synthetic(cls) -> "DimensionSchedule":
        # synthetic preset: 4x fewer nodes, 2x wider features per stage
        return cls((3136, 784, 196, 49), (96, 192, 384, 768), (12, 16, 20, 24))


@dataclasses.dataclass(frozen=True)
class SpaceConfig:
    """Value sets for each superblock gene plus the fixed network context."""

    superblocks: int = 4
    depths: tuple[int, ...] = (2, 3, 4)
    graph_ops: tuple[GraphOp, ...] = (GraphOp.MAX_RELATIVE, GraphOp.EDGE_CONV,
                                      GraphOp.GRAPH_SAGE, GraphOp.GIN)
    fc_pre: tuple[bool, ...] = (False, True)
    ffn_use: tuple[bool, ...] = (False, True)
    widths: tuple[int, ...] = (96, 192, 320)
    backbone: Backbone = Backbone.ISOTROPIC
    schedule: DimensionSchedule = dataclasses.field(
        default_factory=lambda: DimensionSchedule.isotropic())
    resolution: int = 224
    num_classes: int = 100

    def __post_init__(self):
        object.__setattr__(self, "graph_ops", tuple(GraphOp.parse(o) for o in self.graph_ops))
        object.__setattr__(self, "backbone", Backbone(self.backbone))
        for name in ("depths", "fc_pre", "ffn_use", "widths"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def gene_values(self) -> tuple[tuple, ...]:
        """Value lists in encoding slot order."""
        return (self.depths, self.graph_ops, self.fc_pre, self.ffn_use, self.widths)

    def validate(self) -> None:
        if self.superblocks < 1:
            raise ConfigError("superblock count must be >= 1")
        names = ("depths", "graph_ops", "fc_pre", "ffn_use", "widths")
        for name, vals in zip(names, self.gene_values()):
            if not vals:
                raise ConfigError(f"empty value set for gene {name!r}")
            if len(set(vals)) != len(vals):
                raise ConfigError(f"duplicate values in gene {name!r}: {vals}")
        if len(self.schedule) != self.superblocks:
            raise ConfigError(f"dimension schedule covers {len(self.schedule)} superblocks, "
                              f"space has {self.superblocks}")
        self.schedule.check_backbone(self.backbone)

    def genomes(self) -> Iterator[ArchitectureGenome]:
        """Every genome of the space in encoding order (use only on small spaces)."""
        per_sb = [SuperblockGenes(*vals) for vals in itertools.product(*self.gene_values())]
        for combo in itertools.product(per_sb, repeat=self.superblocks):
            yield ArchitectureGenome(combo, self.backbone)


GENE_SLOTS = ("depth", "graph_op", "fc_pre_use", "ffn_use", "ffn_width")


def genome_space_cardinality(config: SpaceConfig) -> int:
    config.validate()
    per_sb = math.prod(len(v) for v in config.gene_values())
    return per_sb ** config.superblocks


def encode(genome: ArchitectureGenome, config: SpaceConfig) -> tuple[int, ...]:
    """Flat index vector: for each superblock, one slot per gene in ``GENE_SLOTS`` order."""
    if len(genome.superblocks) != config.superblocks:
        raise ConfigError("genome superblock count does not match space")
    out = []
    for sb in genome.superblocks:
        for slot, vals in zip(GENE_SLOTS, config.gene_values()):
            try:
                out.append(vals.index(getattr(sb, slot)))
            except ValueError:
                raise ConfigError(f"gene {slot}={getattr(sb, slot)!r} not in space {vals}") from None
    return tuple(out)


def decode(vector: Sequence[int], config: SpaceConfig) -> ArchitectureGenome:
    values = config.gene_values()
    width = len(values)
    if len(vector) != width * config.superblocks:
        raise ConfigError(f"encoded genome has {len(vector)} slots, expected "
                          f"{width * config.superblocks}")
    sbs = []
    for i in range(config.superblocks):
        chunk = vector[i * width:(i + 1) * width]
        sbs.append(SuperblockGenes(*(vals[int(j)] for vals, j in zip(values, chunk))))
    return ArchitectureGenome(tuple(sbs), config.backbone)


# ---------------------------------------------------------------------------
# compact text form: "ops=G-M-G-G;d=4,4,4,4;ffn=1,0,1,1;pre=0,0,0,0;w=192,192,96,320"

_FIELDS = {"ops": "graph_op", "d": "depth", "ffn": "ffn_use", "pre": "fc_pre_use", "w": "ffn_width"}


def format_genome(genome: ArchitectureGenome) -> str:
    sbs = genome.superblocks
    return ";".join([
        "ops=" + "-".join(sb.graph_op.value for sb in sbs),
        "d=" + ",".join(str(sb.depth) for sb in sbs),
        "ffn=" + ",".join(str(int(sb.ffn_use)) for sb in sbs),
        "pre=" + ",".join(str(int(sb.fc_pre_use)) for sb in sbs),
        "w=" + ",".join(str(sb.ffn_width) for sb in sbs),
    ])


def parse_genome(text: str, backbone: Backbone = Backbone.ISOTROPIC) -> ArchitectureGenome:
    """Parse the compact genome notation; errors carry the 1-based column."""
    fields: dict[str, list[tuple[str, int]]] = {}
    pos = 0
    for part in text.split(";"):
        col = pos + 1
        pos += len(part) + 1
        if not part.strip():
            continue
        if "=" not in part:
            raise GenomeParseError(f"expected key=value, got {part!r}", col)
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise GenomeParseError(f"unknown field {key!r} (expected one of {sorted(_FIELDS)})", col)
        if key in fields:
            raise GenomeParseError(f"duplicate field {key!r}", col)
        sep = "-" if key == "ops" else ","
        items = []
        off = col + len(part) - len(part.lstrip()) + len(key) + 1
        for tok in val.split(sep):
            items.append((tok.strip(), off))
            off += len(tok) + 1
        fields[key] = items
    missing = [k for k in _FIELDS if k not in fields]
    if missing:
        raise GenomeParseError(f"missing field(s) {missing}", len(text) + 1)
    n = len(fields["ops"])
    for key, items in fields.items():
        if len(items) != n:
            raise GenomeParseError(f"field {key!r} has {len(items)} entries, ops has {n}",
                                   items[0][1])

    def conv(key, tok, col):
        try:
            if key == "ops":
                return GraphOp.parse(tok)
            if key in ("ffn", "pre"):
                if tok not in ("0", "1"):
                    raise ValueError(tok)
                return tok == "1"
            return int(tok)
        except ValueError:
            raise GenomeParseError(f"bad value {tok!r} for field {key!r}", col) from None

    sbs = []
    for i in range(n):
        kw = {_FIELDS[k]: conv(k, *fields[k][i]) for k in _FIELDS}
        try:
            sbs.append(SuperblockGenes(**kw))
        except ConfigError as exc:
            raise GenomeParseError(str(exc), fields["d"][i][1]) from None
    return ArchitectureGenome(tuple(sbs), backbone)


# ---------------------------------------------------------------------------
# workload plans

@dataclasses.dataclass(frozen=True)
class UnitSignature:
    """Dimensional signature of one mappable unit.

    Stem and classifier carry network-level context instead of graph sizes:
    the stem's ``nodes`` is the input resolution and the classifier's ``nodes``
    is the class count; ``dim`` is the feature width they produce or consume.
    """

    kind: UnitKind
    superblock_index: int | None
    graph_op: GraphOp | None
    nodes: int
    dim: int
    k_neighbors: int | None
    ffn_width: int | None
    fc_pre_present: bool | None


@dataclasses.dataclass(frozen=True)
class WorkloadPlan:
    units: tuple[UnitSignature, ...]
    granularity: Granularity
    genome: ArchitectureGenome

    def __len__(self) -> int:
        return len(self.units)

    def kinds(self) -> list[UnitKind]:
        return [u.kind for u in self.units]

    def group_slices(self) -> list[tuple[str, list[int]]]:
        """Unit indices grouped for display: stem | graphers | ffns | classifier."""
        graph = [i for i, u in enumerate(self.units)
                 if u.kind in (UnitKind.GRAPHER,) or u.kind.value.startswith("grapher_")]
        ffn = [i for i, u in enumerate(self.units)
               if u.kind is UnitKind.FFN or u.kind.value.startswith("ffn_")]
        groups = [("stem", [0]), ("grapher", graph)]
        if ffn:
            groups.append(("ffn", ffn))
        groups.append(("classifier", [len(self.units) - 1]))
        return groups


def expand_architecture(genome: ArchitectureGenome,
                        granularity: Granularity | str = Granularity.BLOCKWISE,
                        schedule: DimensionSchedule | None = None,
                        resolution: int = 224,
                        num_classes: int = 100) -> WorkloadPlan:
    granularity = Granularity(granularity)
    sbs = genome.superblocks
    if schedule is None:
        schedule = DimensionSchedule.isotropic(len(sbs))
    if len(schedule) != len(sbs):
        raise ConfigError(f"dimension schedule has {len(schedule)} entries for "
                          f"{len(sbs)} superblocks")
    schedule.check_backbone(genome.backbone)

    units = [UnitSignature(UnitKind.STEM, None, None, resolution, schedule.dims[0],
                           None, None, None)]
    for i, sb in enumerate(sbs):
        n, d, k = schedule.nodes[i], schedule.dims[i], schedule.k[i]

        def unit(kind, op=None, width=None, pre=None):
            return UnitSignature(kind, i, op, n, d, k, width, pre)

        for _ in range(sb.depth):
            if granularity is Granularity.BLOCKWISE:
                units.append(unit(UnitKind.GRAPHER, sb.graph_op, pre=sb.fc_pre_use))
                if sb.ffn_use:
                    units.append(unit(UnitKind.FFN, width=sb.ffn_width))
            else:
                if sb.fc_pre_use:
                    units.append(unit(UnitKind.GRAPHER_PRE))
                units.append(unit(UnitKind.GRAPHER_AGG, sb.graph_op))
                units.append(unit(UnitKind.GRAPHER_COMB, sb.graph_op))
                units.append(unit(UnitKind.GRAPHER_POST))
                if sb.ffn_use:
                    units.append(unit(UnitKind.FFN_FC1, width=sb.ffn_width))
                    units.append(unit(UnitKind.FFN_FC2, width=sb.ffn_width))
    units.append(UnitSignature(UnitKind.CLASSIFIER, None, None, num_classes,
                               schedule.dims[-1], None, None, None))
    return WorkloadPlan(tuple(units), granularity, genome)


def plan_for(genome: ArchitectureGenome, space: SpaceConfig,
             granularity: Granularity | str = Granularity.BLOCKWISE) -> WorkloadPlan:
    return expand_architecture(genome, granularity, space.schedule, space.resolution,
                               space.num_classes)


def mapping_space_cardinality(plan: WorkloadPlan, num_cus: int) -> int:
    if num_cus < 1:
        raise ConfigError("need at least one compute unit")
    return num_cus ** len(plan.units)


def random_genome(space: SpaceConfig, rng) -> ArchitectureGenome:
    values = space.gene_values()
    vec = [int(rng.integers(len(v))) for _ in range(space.superblocks) for v in values]
    return decode(vec, space)
