"""Enumerate complete reaction pathways from a retrosynthetic tree.

A pathway is the *set* of reaction ids needed to reach the root from
available materials.  Enumeration is recursive over the AND/OR tree:

* a leaf needs nothing: its only pathway is the empty set (the product
  identity of the combination step);
* an internal node combines, for each producing reaction (AND group),
  the reaction id with one pathway choice per child (cartesian
  product), and takes the union over alternative reactions (OR).

Reactions used by several branches collapse by set union, so a shared
precursor is made once per pathway.  Results are deduplicated and
presented in a canonical order: each pathway's ids ascending, pathways
sorted lexicographically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .kgraph import KnowledgeGraph, reaction_from_obj
from .names import canonical_name
from .retrotree import RetroNode

__all__ = [
    "Pathway",
    "PathwaySet",
    "TreeStructureError",
    "enumerate_pathways",
    "count_pathways",
    "count_pathways_with_stats",
    "initial_reactants",
    "validate_closure",
    "validate_pathway",
    "pathways_text",
    "pathways_to_json",
    "pathways_from_json",
]


class TreeStructureError(ValueError):
    """The tree violates a structural invariant; names the offending node."""


@dataclass(frozen=True)
class Pathway:
    """An unordered set of reaction ids with a canonical presentation."""

    reactions: frozenset[str]
    canonical_order: tuple[str, ...]

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "Pathway":
        s = frozenset(ids)
        return cls(reactions=s, canonical_order=tuple(sorted(s)))

    def __len__(self) -> int:
        return len(self.reactions)


@dataclass
class PathwaySet:
    """Deduplicated pathways in canonical order.

    ``truncated`` is False only when the list is exhaustive.
    """

    root: str
    pathways: list[Pathway] = field(default_factory=list)
    truncated: bool = False


def _check_structure(node: RetroNode, ancestors: set[str], where: str) -> None:
    if node.is_leaf and node.children:
        raise TreeStructureError(f"{where}: leaf {node.compound!r} has children")
    if not node.is_leaf and not node.children:
        raise TreeStructureError(f"{where}: internal node {node.compound!r} has no children")
    if node.compound in ancestors:
        raise TreeStructureError(f"{where}: {node.compound!r} repeats an ancestor")
    path = ancestors | {node.compound}
    for i, child in enumerate(node.children):
        if child.via_reaction is None:
            raise TreeStructureError(
                f"{where}.children[{i}]: non-root node {child.compound!r} lacks via_reaction"
            )
        _check_structure(child, path, f"{where}.children[{i}]")


def enumerate_pathways(tree: RetroNode, limit: int | None = None) -> PathwaySet:
    """All pathways encoded by the tree, deduplicated, canonically ordered.

    With ``limit`` set and more pathways than the limit, exactly
    ``limit`` pathways are kept (first in canonical order) and
    ``truncated`` is flagged.

    Raises
    ------
    TreeStructureError
        If the tree violates a node invariant.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be a positive integer")
    _check_structure(tree, set(), "tree")

    def paths(node: RetroNode) -> set[frozenset[str]]:
        if node.is_leaf:
            return {frozenset()}
        out: set[frozenset[str]] = set()
        for rid, children in node.groups():
            combos: list[frozenset[str]] = [frozenset((rid,))]
            for child in children:
                child_paths = paths(child)
                combos = [c | p for c in combos for p in child_paths]
            out.update(combos)
        return out

    all_sets = paths(tree)
    ordered = sorted(
        (Pathway.from_ids(s) for s in all_sets), key=lambda p: p.canonical_order
    )
    if limit is not None and len(ordered) > limit:
        return PathwaySet(root=tree.compound, pathways=ordered[:limit], truncated=True)
    return PathwaySet(root=tree.compound, pathways=ordered, truncated=False)


def count_pathways(tree: RetroNode) -> int:
    """Exact number of distinct pathways (never an estimate)."""
    return count_pathways_with_stats(tree)[0]


def count_pathways_with_stats(tree: RetroNode) -> tuple[int, bool]:
    """Count pathways; second element reports whether the closed-form
    product/sum formula was used (True) or the counter had to fall back
    to materializing the pathway set (False).

    The formula ``C(leaf)=1, C(node)=Σ_groups Π_children C(child)`` is
    exact when every reaction id labels at most one AND-group occurrence
    in the tree: distinct choice profiles then differ in at least one
    id that no other occurrence can contribute, so no two profiles
    collapse to the same set.  A repeated id breaks that argument
    (unions absorb), so we materialize instead.
    """
    _check_structure(tree, set(), "tree")
    occurrences: dict[str, int] = {}

    def scan(node: RetroNode) -> None:
        for rid, children in node.groups():
            occurrences[rid] = occurrences.get(rid, 0) + 1
            for child in children:
                scan(child)

    scan(tree)
    if any(n > 1 for n in occurrences.values()):
        return len(enumerate_pathways(tree).pathways), False

    def count(node: RetroNode) -> int:
        if node.is_leaf:
            return 1
        total = 0
        for _rid, children in node.groups():
            prod = 1
            for child in children:
                prod *= count(child)
            total += prod
        return total

    return count(tree), True


# ======================================================================
# Pathway-level helpers
# ======================================================================


def initial_reactants(pathway: Pathway, g: KnowledgeGraph) -> set[str]:
    """Compounds a pathway consumes but never produces — its starting materials."""
    consumed: set[str] = set()
    produced: set[str] = set()
    for rid in pathway.reactions:
        rec = g.reactions.get(rid)
        if rec is None:
            raise KeyError(f"pathway references unknown reaction {rid!r}")
        consumed.update(rec.reactants)
        produced.update(canonical_name(p) for p in rec.products)
    return {c for c in consumed if canonical_name(c) not in produced}


def validate_closure(
    reaction_ids: Iterable[str],
    g: KnowledgeGraph,
    is_available: Callable[[str], bool],
) -> list[str]:
    """Check the closure invariant; returns human-readable violations.

    Every reactant of every reaction in the set must be available or
    produced by some other reaction in the set.  Implemented directly
    from that definition, independent of the enumerator.
    """
    ids = sorted(set(reaction_ids))
    produced: set[str] = set()
    for rid in ids:
        rec = g.reactions.get(rid)
        if rec is None:
            return [f"unknown reaction id {rid!r}"]
        produced.update(canonical_name(p) for p in rec.products)
    violations = []
    for rid in ids:
        for reactant in g.reactions[rid].reactants:
            if canonical_name(reactant) in produced:
                continue
            if is_available(reactant):
                continue
            violations.append(
                f"reaction {rid}: reactant {reactant!r} neither available nor produced in-pathway"
            )
    return violations


def validate_pathway(
    root: str,
    pathway: Pathway,
    g: KnowledgeGraph,
    is_available: Callable[[str], bool],
) -> list[str]:
    """Closure check plus the root-production requirement."""
    violations = validate_closure(pathway.reactions, g, is_available)
    if pathway.reactions:
        root_key = canonical_name(root)
        makes_root = any(
            any(canonical_name(p) == root_key for p in g.reactions[rid].products)
            for rid in pathway.reactions
            if rid in g.reactions
        )
        if not makes_root:
            violations.append(f"no reaction in the pathway produces the root {root!r}")
    return violations


# ======================================================================
# Exports
# ======================================================================


def pathways_text(ps: PathwaySet) -> str:
    """One pathway per line: comma-separated reaction ids, ascending."""
    return "".join(",".join(p.canonical_order) + "\n" for p in ps.pathways)


def pathways_to_json(ps: PathwaySet, g: KnowledgeGraph) -> bytes:
    """Machine-readable export embedding the full reaction records."""
    used = sorted({rid for p in ps.pathways for rid in p.reactions})
    records = {}
    for rid in used:
        rec = g.reactions.get(rid)
        if rec is None:
            raise KeyError(f"pathway references unknown reaction {rid!r}")
        c = rec.conditions
        records[rid] = {
            "id": rec.id,
            "reactants": list(rec.reactants),
            "products": list(rec.products),
            "temperature": c.temperature,
            "pressure": c.pressure,
            "catalysts": list(c.catalysts),
            "solvents": list(c.solvents),
            "atmosphere": c.atmosphere,
            "duration": c.duration,
            "yield_pct": rec.yield_pct,
            "source": rec.source,
        }
    doc = {
        "root": ps.root,
        "truncated": ps.truncated,
        "pathways": [{"reactions": list(p.canonical_order)} for p in ps.pathways],
        "records": records,
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def pathways_from_json(data: bytes | str) -> tuple[PathwaySet, KnowledgeGraph]:
    """Parse a machine-readable pathway file.

    Returns the pathway set plus a small graph holding exactly the
    embedded records, so ranking can run from this one file.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "pathways" not in doc or "root" not in doc:
        raise ValueError("top level must be an object with 'root' and 'pathways'")
    g = KnowledgeGraph()
    for rid, obj in doc.get("records", {}).items():
        rec = reaction_from_obj(obj, where=f"records[{rid!r}]")
        g.add_reaction(rec)
    pathways = []
    for i, entry in enumerate(doc["pathways"]):
        if not isinstance(entry, dict) or not isinstance(entry.get("reactions"), list):
            raise ValueError(f"pathways[{i}]: expected an object with a 'reactions' array")
        pathways.append(Pathway.from_ids(entry["reactions"]))
    return (
        PathwaySet(
            root=doc["root"],
            pathways=pathways,
            truncated=bool(doc.get("truncated", False)),
        ),
        g,
    )
