"""Layer-wise circuit construction from a schema.

Each heterogeneous region of the schema (its fields, flattened through
nested objects, down to leaf and homogeneous positions) is modeled by a
block: alternating layers of sum and product units that repeatedly copy
(mixture) and split (factorization) the scope, terminated by an input
layer assigning leaf densities to leaf positions and set units to
homogeneous positions.  The feature sub-network of every set unit is a
fresh block over the element scope with independent parameters; blocks
are attached recursively until no unwired set units remain.

Splitting stops after ``n_l`` rounds or as soon as any scope in the
layer becomes a singleton.  A regular block with ``|psi|`` root scopes
therefore holds ``|psi| * sum((n_s*n_p)**l for l in range(n_l))`` sum
units and ``|psi| * (n_s*n_p)**n_l`` input-layer units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import schema as sc
from .circuit import INPUT, PROD, SET, SUM, Circuit, CircuitBuilder


@dataclass(frozen=True)
class BuildConfig:
    n_c: int = 1   # number of roots (classes)
    n_l: int = 2   # sum/product rounds per block
    n_s: int = 2   # children per sum unit
    n_p: int = 2   # children per product unit
    k_cat: int = 100   # categorical-vs-Gaussian threshold for integer leaves
    k_max: int | None = None  # cardinality truncation override

    def __post_init__(self):
        if self.n_c < 1 or self.n_l < 1 or self.n_s < 2 or self.n_p < 2:
            raise ValueError("config out of range: need n_c,n_l >= 1 and n_s,n_p >= 2")


@dataclass
class BlockStats:
    hom_path: tuple | None  # None for the root block
    size: int               # number of scopes handed to the block
    rounds: int             # sum/product rounds actually performed
    n_l: int
    n_s: int
    n_p: int
    regular: bool           # full rounds, no forced splits, no short splits
    n_sum: int = 0
    n_prod: int = 0
    n_set: int = 0
    n_input: int = 0


@dataclass
class BuildReport:
    config: BuildConfig
    blocks: list = field(default_factory=list)


def block_sum_count(size: int, n_l: int, n_s: int, n_p: int) -> int:
    """Closed-form sum-unit count of a regular block."""
    return size * sum((n_s * n_p) ** l for l in range(n_l))


def block_input_count(size: int, n_l: int, n_s: int, n_p: int) -> int:
    """Closed-form input-layer size (input plus set units) of a regular block."""
    return size * (n_s * n_p) ** n_l


def block_scope(node, prefix=()) -> tuple:
    """Scope of the block modeling ``node``: every leaf or homogeneous
    position reachable without crossing a homogeneous node, in document
    order.  Nested objects flatten into the enclosing block."""
    if isinstance(node, sc.HetS):
        out = []
        for name, child in node.fields:
            out.extend(block_scope(child, prefix + (name,)))
        return tuple(out)
    return (prefix,)


def split(scope: tuple, n_p: int) -> list:
    """Balanced contiguous partition of ``scope`` into ``n_p`` parts, the
    remainder going to the leftmost parts.  Scopes shorter than ``n_p``
    split into one singleton per element."""
    n = len(scope)
    parts = min(n_p, n)
    q, r = divmod(n, parts)
    out = []
    at = 0
    for i in range(parts):
        size = q + 1 if i < r else q
        out.append(scope[at:at + size])
        at += size
    return out


def scope_slayer(scopes, n_s: int) -> list:
    """Repeat every scope ``n_s`` times: sum children share scopes."""
    out = []
    for s in scopes:
        out.extend([s] * n_s)
    return out


def scope_player(scopes, n_p: int) -> list:
    """Split every scope into ``n_p`` disjoint parts: product children
    partition scopes."""
    out = []
    for s in scopes:
        out.extend(split(s, n_p))
    return out


def scope_layers(scopes, n_l: int, n_s: int, n_p: int) -> list:
    """Layer 0 is the input multiset; each round applies scope_slayer then
    scope_player.  Rounds stop after ``n_l`` or once any scope in the
    current layer is a singleton."""
    layers = [list(scopes)]
    while len(layers) - 1 < n_l and min(len(s) for s in layers[-1]) > 1:
        layers.append(scope_player(scope_slayer(layers[-1], n_s), n_p))
    return layers


def _kmax_for(schema, hom_path, cfg):
    node = schema.node_at(hom_path)
    if cfg.k_max is not None:
        if cfg.k_max < node.card_max:
            raise ValueError("k_max override %d below observed maximum %d"
                             % (cfg.k_max, node.card_max))
        return cfg.k_max
    # headroom beyond the observed maximum for sampling
    return max(2 * node.card_max, 8)


def spsn_block(arena: CircuitBuilder, scopes, cfg: BuildConfig, hom_path=None):
    """Build one block over a multiset of identical scopes.

    Returns (root unit ids, [(set unit id, hom path)] hooks for the
    recursion, BlockStats).
    """
    scopes = list(scopes)
    if not scopes:
        raise ValueError("block requires at least one scope")
    layers = scope_layers(scopes, cfg.n_l, cfg.n_s, cfg.n_p)
    rounds = len(layers) - 1
    stats = BlockStats(hom_path, len(scopes), rounds, cfg.n_l, cfg.n_s, cfg.n_p,
                       regular=(rounds == cfg.n_l))
    hooks = []
    n_s, n_p = cfg.n_s, cfg.n_p
    nodes = arena.nodes
    mark = len(arena.units)
    split_memo = {}
    scope_kinds = {}  # scope -> (leaf paths, ((hom path, k_max), ...))

    def ilayer_unit(scope):
        kinds = scope_kinds.get(scope)
        if kinds is None:
            leaf_paths = []
            hom_paths = []
            for p in scope:
                if isinstance(nodes[p], sc.HomS):
                    hom_paths.append(p)
                else:
                    leaf_paths.append(p)
            kinds = (tuple(leaf_paths),
                     tuple((h, _kmax_for(arena.schema, h, cfg)) for h in hom_paths))
            scope_kinds[scope] = kinds
        leaf_paths, homs = kinds
        parts = []
        if leaf_paths:
            parts.append(arena.input(leaf_paths))
        for h, kmax in homs:
            sid = arena.set(h, kmax)
            hooks.append((sid, h))
            parts.append(sid)
        if len(parts) == 1:
            return parts[0]
        # a scope holding a homogeneous position next to other positions
        # must be factorized so the set unit stands alone
        stats.regular = False
        return arena.product(parts)

    def build(scope, level):
        if rounds == 0:
            # no split is possible; smooth over n_s copies of the inputs
            return arena.sum([ilayer_unit(scope) for _ in range(n_s)])
        if level == rounds:
            return ilayer_unit(scope)
        parts = split_memo.get(scope)
        if parts is None:
            parts = split(scope, n_p)
            split_memo[scope] = parts
            if len(parts) < n_p:
                stats.regular = False
        if len(parts) == 1:
            return arena.sum([build(parts[0], level + 1) for _ in range(n_s)])
        return arena.sum([
            arena.product([build(p, level + 1) for p in parts])
            for _ in range(n_s)
        ])

    roots = [build(s, 0) for s in scopes]
    for u in arena.units[mark:]:
        if u.kind == SUM:
            stats.n_sum += 1
        elif u.kind == PROD:
            stats.n_prod += 1
        elif u.kind == SET:
            stats.n_set += 1
        elif u.kind == INPUT:
            stats.n_input += 1
    return roots, hooks, stats


def spsn_network(schema: sc.Schema, cfg: BuildConfig = BuildConfig()) -> Circuit:
    """Construct a full circuit: ``n_c`` independent roots over the full
    schema, with blocks recursively attached at set-unit feature
    positions, grouped per homogeneous schema node."""
    arena = CircuitBuilder(schema, cfg.k_cat)
    root_scope = block_scope(schema.root)
    report = BuildReport(cfg)
    segments = [0]

    roots, frontier, stats = spsn_block(
        arena, [root_scope] * cfg.n_c, cfg, hom_path=None)
    report.blocks.append(stats)
    segments.append(len(arena.units))

    while frontier:
        groups = {}
        for sid, hom in frontier:
            groups.setdefault(hom, []).append(sid)
        frontier = []
        for hom, sids in groups.items():
            elem = schema.node_at(hom).element
            escope = block_scope(elem, hom + (sc.ELEM,))
            sub_roots, hooks, stats = spsn_block(
                arena, [escope] * len(sids), cfg, hom_path=hom)
            for sid, rid in zip(sids, sub_roots):
                arena.wire_feature(sid, rid)
            report.blocks.append(stats)
            segments.append(len(arena.units))
            frontier.extend(hooks)

    # the discovery order creates every set unit before its feature block;
    # concatenating the block segments in reverse is therefore topological
    order = []
    for lo, hi in zip(segments[-2::-1], segments[::-1]):
        order.extend(range(lo, hi))
    circuit = arena.finish(roots, order=order)
    circuit.build_report = report
    return circuit
