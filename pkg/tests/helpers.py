"""Shared test fixtures and independent oracles.

The generators here build random AND/OR trees and random knowledge
graphs; the oracles recompute the planner's and enumerator's answers
by blunt force (itertools products, fixed-point iteration) so the fast
implementations have something honest to disagree with.
"""

from __future__ import annotations

import itertools
import random
import re
from pathlib import Path

from retroplan.kgraph import KnowledgeGraph, ReactionConditions, ReactionRecord
from retroplan.retrotree import RetroNode

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
CORPUS = FIXTURES / "corpus"
CATALOG = FIXTURES / "catalog"
SYNONYMS = FIXTURES / "synonyms.json"
RANKING_TOML = FIXTURES / "ranking.toml"
FIVE_ROUTE = FIXTURES / "five_route"
GOLDEN = FIXTURES / "golden"


# ======================================================================
# Graph construction shorthand
# ======================================================================


def mk_record(rid: str, reactants: list[str], products: list[str], *,
              temperature: float | None = None, pressure: float | None = None,
              duration: float | None = None, yield_pct: float | None = None,
              catalysts: tuple[str, ...] = (), solvents: tuple[str, ...] = (),
              atmosphere: str | None = None, source: str = "test") -> ReactionRecord:
    return ReactionRecord(
        id=rid,
        reactants=tuple(reactants),
        products=tuple(products),
        conditions=ReactionConditions(
            temperature=temperature,
            pressure=pressure,
            catalysts=catalysts,
            solvents=solvents,
            atmosphere=atmosphere,
            duration=duration,
        ),
        yield_pct=yield_pct,
        source=source,
    )


def mk_graph(*reactions: tuple[str, list[str], list[str]]) -> KnowledgeGraph:
    """Graph from (id, reactants, products) triples, no conditions."""
    g = KnowledgeGraph()
    for rid, reactants, products in reactions:
        g.add_reaction(mk_record(rid, reactants, products))
    return g


# ======================================================================
# Random AND/OR trees + brute-force pathway oracle
# ======================================================================


def _path_upper_bound(node: RetroNode) -> int:
    """Sum-product bound on pathway count (exact absent id reuse)."""
    if node.is_leaf:
        return 1
    total = 0
    for _rid, children in node.groups():
        prod = 1
        for child in children:
            prod *= _path_upper_bound(child)
        total += prod
    return total


def random_tree(rng: random.Random, max_depth: int = 6, max_nodes: int = 200,
                reuse_id_prob: float = 0.2, max_paths: int = 400) -> RetroNode:
    """Random well-formed tree.  With probability ``reuse_id_prob`` an AND
    group replays an already-used reaction id (same child compounds),
    exercising set-union collapse in enumeration.  Trees whose pathway
    count exceeds ``max_paths`` are redrawn so oracle comparisons stay
    cheap."""
    compound_counter = itertools.count()
    reaction_counter = itertools.count()
    registry: dict[str, tuple[str, ...]] = {}
    nodes = 0

    def reset() -> None:
        nonlocal nodes
        registry.clear()
        nodes = 0

    def fresh_compound() -> str:
        return f"c{next(compound_counter)}"

    def grow(compound: str, ancestors: frozenset[str], depth: int) -> RetroNode:
        nonlocal nodes
        nodes += 1
        if depth >= max_depth or nodes >= max_nodes or rng.random() < 0.35:
            return RetroNode(compound=compound, is_leaf=True)
        node = RetroNode(compound=compound)
        blocked = ancestors | {compound}
        used_here: set[str] = set()
        for _ in range(rng.randint(1, 3)):
            rid: str | None = None
            children_names: tuple[str, ...] | None = None
            if registry and rng.random() < reuse_id_prob:
                candidates = [
                    (k, v) for k, v in registry.items()
                    if k not in used_here and not set(v) & blocked
                ]
                if candidates:
                    rid, children_names = candidates[rng.randrange(len(candidates))]
            if rid is None:
                rid = f"r{next(reaction_counter)}"
                children_names = tuple(fresh_compound() for _ in range(rng.randint(1, 2)))
                registry[rid] = children_names
            assert children_names is not None
            used_here.add(rid)
            for name in children_names:
                child = grow(name, blocked, depth + 1)
                child.via_reaction = rid
                node.children.append(child)
        if not node.children:
            node.is_leaf = True
        return node

    while True:
        reset()
        tree = grow(fresh_compound(), frozenset(), 0)
        if _path_upper_bound(tree) <= max_paths:
            return tree


def oracle_paths(node: RetroNode) -> set[frozenset[str]]:
    """All reaction-id sets synthesizing ``node``, by exhaustive product."""
    if node.is_leaf:
        return {frozenset()}
    out: set[frozenset[str]] = set()
    for rid, children in node.groups():
        child_sets = [oracle_paths(child) for child in children]
        for combo in itertools.product(*child_sets):
            out.add(frozenset({rid}).union(*combo))
    return out


# ======================================================================
# Random knowledge graphs + fixed-point validity oracle
# ======================================================================


def random_kg(rng: random.Random, n_compounds: int = 20, n_reactions: int = 40,
              acyclic: bool = False) -> tuple[KnowledgeGraph, set[str], str]:
    """Random graph, a random available subset, and a root compound.

    With ``acyclic`` the producing structure is a DAG: reactions only
    produce compounds of strictly higher index than every reactant.
    """
    names = [f"c{i}" for i in range(n_compounds)]
    g = KnowledgeGraph()
    for name in names:
        g.ensure_compound(name)
    made = 0
    attempt = 0
    while made < n_reactions and attempt < n_reactions * 10:
        attempt += 1
        if acyclic:
            pi = rng.randrange(1, n_compounds)
            product = names[pi]
            pool = names[:pi]
        else:
            product = names[rng.randrange(n_compounds)]
            pool = [n for n in names if n != product]
        if not pool:
            continue
        k = min(rng.randint(1, 3), len(pool))
        reactants = rng.sample(pool, k)
        rid = f"r{made}"
        try:
            g.add_reaction(mk_record(rid, reactants, [product]))
        except Exception:
            continue
        if rid in g.reactions:
            made += 1
    available = {n for n in names if rng.random() < 0.3}
    root = names[rng.randrange(n_compounds)]
    return g, available, root


def lfp_valid(g: KnowledgeGraph, available: set[str]) -> dict[str, bool]:
    """Least fixed point of: valid(n) ⇔ available(n) or some producing
    reaction has all reactants valid.  Membership in the LFP is exactly
    'derivable by a finite acyclic chain', which is what depth-first
    search with the ancestor-cycle rule decides."""
    valid = {name: name in available for name in g.compounds}
    changed = True
    while changed:
        changed = False
        for rec in g.reactions.values():
            if all(valid.get(m, False) for m in rec.reactants):
                for product in rec.products:
                    if product in valid and not valid[product]:
                        valid[product] = True
                        changed = True
    return valid


def lfp_retained(root: str, g: KnowledgeGraph, available: set[str],
                 valid: dict[str, bool]) -> set[str]:
    """Compound set a validity-labeled expansion retains (DAGs only:
    context-free, so no ancestor pruning can disagree)."""
    if not valid.get(root, False):
        return set()
    seen: set[str] = set()
    stack = [root]
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        if name in available:
            continue
        for rec in g.reactions_producing(name):
            if all(valid.get(m, False) for m in rec.reactants):
                stack.extend(rec.reactants)
    return seen


class SetAvailability:
    """Availability by set membership; counts lookups."""

    def __init__(self, names: set[str]):
        self.names = set(names)
        self.calls = 0

    def is_available(self, name: str) -> bool:
        self.calls += 1
        return name in self.names


# ======================================================================
# Minimal DOT reader (independent of the writer)
# ======================================================================

_NODE_RE = re.compile(r'^\s*(\w+)\s*\[label="((?:[^"\\]|\\.)*)"(?:,\s*shape=(\w+))?\];\s*$')
_EDGE_RE = re.compile(r'^\s*(\w+)\s*->\s*(\w+)\s*\[label="((?:[^"\\]|\\.)*)"\];\s*$')


def parse_dot(text: str) -> tuple[dict[str, str], list[tuple[str, str, str]]]:
    """Parse the subset of DOT these exports emit.

    Returns ({node_id: label}, [(src, dst, edge_label)]); labels are
    unescaped.  Raises ValueError on anything unrecognized so writer
    drift is caught rather than skipped.
    """
    def unescape(s: str) -> str:
        return s.replace('\\"', '"').replace("\\\\", "\\")

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("digraph") or lines[-1].strip() != "}":
        raise ValueError("not a digraph block")
    nodes: dict[str, str] = {}
    edges: list[tuple[str, str, str]] = []
    for line in lines[1:-1]:
        if line.strip().startswith("rankdir"):
            continue
        m = _EDGE_RE.match(line)
        if m:
            edges.append((m.group(1), m.group(2), unescape(m.group(3))))
            continue
        m = _NODE_RE.match(line)
        if m:
            nodes[m.group(1)] = unescape(m.group(2))
            continue
        raise ValueError(f"unrecognized DOT line: {line!r}")
    return nodes, edges
