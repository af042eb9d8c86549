"""Retrosynthetic tree construction and literature-driven expansion.

The tree is grown depth-first from the target compound:

* an available compound becomes a leaf, requiring no further expansion;
* otherwise every reaction producing the compound contributes an AND
  group of children (its reactants), alternatives forming OR choices;
* a candidate child equal to any ancestor on the current path discards
  its whole AND group (cycle rule);
* a node with no availability and no fully-valid AND group is invalid
  and removed entirely, recorded as a dead end.

Only availability verdicts are memoized (they are context-free database
facts).  Subtree validity depends on the ancestor set, so it is *not*
cached across contexts by default; an opt-in memo keyed by
``(compound, ancestor set)`` is available via
``PlanConfig.validity_memo`` and provably returns identical trees.

Dead ends feed :func:`expand_plan`, which retrieves additional
literature per dead-end compound (bounded by a per-compound budget),
adds the extracted reactions to the graph, re-runs entity alignment,
and rebuilds the tree — repeating until the budget or round limit runs
out, or nothing is left to fix.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .availability import AvailabilityChecker
from .extraction import LiteratureQuery, ProviderError, parse_records, suggest_alignments, apply_alignments
from .kgraph import KnowledgeGraph
from .names import canonical_name, display_name

__all__ = [
    "RetroNode",
    "PlanConfig",
    "PlanStats",
    "PlanOutcome",
    "PlanLimitError",
    "TreeFormatError",
    "ExpansionSources",
    "build_tree",
    "expand_plan",
    "serialize_outcome",
    "parse_outcome",
    "count_nodes",
    "reactions_used",
]


@dataclass
class RetroNode:
    """One compound occurrence in the retrosynthetic tree.

    ``via_reaction`` is set on every non-root node: the id of the
    reaction that produces the *parent's* compound and consumes this
    node's compound.  Children sharing a ``via_reaction`` form one AND
    group; distinct ids under the same parent are OR alternatives.
    """

    compound: str
    via_reaction: str | None = None
    children: list["RetroNode"] = field(default_factory=list)
    is_leaf: bool = False

    def groups(self) -> list[tuple[str, list["RetroNode"]]]:
        """Children grouped by producing reaction id, ascending id."""
        by_id: dict[str, list[RetroNode]] = {}
        for child in self.children:
            by_id.setdefault(child.via_reaction or "", []).append(child)
        return sorted(by_id.items())


@dataclass
class PlanConfig:
    """Knobs for tree construction and expansion.

    ``max_depth``/``max_nodes`` are hard resource limits — exceeding
    them raises :class:`PlanLimitError` rather than silently truncating.
    ``broaden_successful`` keeps expanding dead ends even after a valid
    tree exists, widening the route space; switch it off to stop at the
    first plannable graph.  ``validity_memo`` enables the optional
    subtree-validity cache (identical results, fewer visits).
    """

    max_depth: int = 10
    max_nodes: int = 100000
    expansion_budget_per_compound: int = 5
    max_expansion_rounds: int = 5
    broaden_successful: bool = True
    validity_memo: bool = False

    def __post_init__(self) -> None:
        if self.max_depth < 1 or self.max_nodes < 1:
            raise ValueError("max_depth and max_nodes must be positive")
        if self.expansion_budget_per_compound < 0 or self.max_expansion_rounds < 0:
            raise ValueError("expansion budget and rounds must be >= 0")


@dataclass
class PlanStats:
    nodes_visited: int = 0
    nodes_retained: int = 0
    reactions_used: int = 0
    cache_hits: int = 0
    expansion_rounds: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "nodes_visited": self.nodes_visited,
            "nodes_retained": self.nodes_retained,
            "reactions_used": self.reactions_used,
            "cache_hits": self.cache_hits,
            "expansion_rounds": self.expansion_rounds,
        }


@dataclass
class PlanOutcome:
    """Result of one planning attempt.

    ``tree`` is present exactly when the target is synthesizable from
    available materials.  ``dead_ends`` lists every compound that was
    visited, found unavailable, and yielded no valid producing reaction
    in its context — the expansion loop's work list.
    """

    tree: RetroNode | None
    dead_ends: set[str]
    stats: PlanStats
    provider_errors: dict[str, str] = field(default_factory=dict)


class PlanLimitError(RuntimeError):
    """A resource limit (max_nodes / max_depth) was hit; carries partial stats."""

    def __init__(self, message: str, stats: PlanStats):
        super().__init__(message)
        self.stats = stats


class TreeFormatError(ValueError):
    """A serialized tree/plan document is malformed; message carries position."""


# ======================================================================
# MDFS construction
# ======================================================================


def build_tree(
    target: str,
    g: KnowledgeGraph,
    availability: AvailabilityChecker,
    cfg: PlanConfig | None = None,
) -> PlanOutcome:
    """Grow the retrosynthetic tree for ``target`` over graph ``g``.

    Deterministic: OR alternatives are explored in ascending reaction-id
    order and AND-group children in the reaction's reactant order, so
    identical inputs produce identical trees.

    Raises
    ------
    PlanLimitError
        When ``cfg.max_nodes`` visits or ``cfg.max_depth`` recursion
        depth is exceeded.  The partial stats ride on the exception; no
        truncated tree is ever returned as if complete.
    """
    cfg = cfg or PlanConfig()
    target = display_name(target)
    stats = PlanStats()
    dead_ends: set[str] = set()
    # any object with is_available() works; hit counters are optional
    hits_before = getattr(availability, "cache_hits", 0)
    memo: dict[tuple[str, frozenset[str]], RetroNode | None] = {}

    def visit(compound: str, ancestors: frozenset[str], depth: int) -> RetroNode | None:
        stats.nodes_visited += 1
        if stats.nodes_visited > cfg.max_nodes:
            stats.cache_hits = getattr(availability, "cache_hits", 0) - hits_before
            raise PlanLimitError(f"node budget exceeded: max_nodes={cfg.max_nodes}", stats)
        if depth > cfg.max_depth:
            stats.cache_hits = getattr(availability, "cache_hits", 0) - hits_before
            raise PlanLimitError(f"depth limit exceeded: max_depth={cfg.max_depth}", stats)
        if availability.is_available(compound):
            return RetroNode(compound=compound, is_leaf=True)
        memo_key = (compound, ancestors)
        if cfg.validity_memo and memo_key in memo:
            cached = memo[memo_key]
            return copy.deepcopy(cached) if cached is not None else None

        node = RetroNode(compound=compound)
        path = ancestors | {compound}
        for rec in g.reactions_producing(compound):
            # Cycle rule: any reactant already on the path discards the
            # whole AND group for this reaction.
            if any(r in path for r in rec.reactants):
                continue
            group: list[RetroNode] = []
            for reactant in rec.reactants:
                child = visit(reactant, path, depth + 1)
                if child is None:
                    group = []
                    break
                child.via_reaction = rec.id
                group.append(child)
            node.children.extend(group)
        result = node if node.children else None
        if result is None:
            dead_ends.add(compound)
        if cfg.validity_memo:
            memo[memo_key] = copy.deepcopy(result)
        return result

    root = visit(target, frozenset(), 0)
    stats.cache_hits = getattr(availability, "cache_hits", 0) - hits_before
    stats.nodes_retained = count_nodes(root)
    stats.reactions_used = len(reactions_used(root))
    return PlanOutcome(tree=root, dead_ends=dead_ends, stats=stats)


def count_nodes(node: RetroNode | None) -> int:
    if node is None:
        return 0
    return 1 + sum(count_nodes(c) for c in node.children)


def reactions_used(node: RetroNode | None) -> set[str]:
    """Distinct reaction ids appearing anywhere in the tree."""
    if node is None:
        return set()
    out = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if n.via_reaction is not None:
            out.add(n.via_reaction)
        stack.extend(n.children)
    return out


# ======================================================================
# Expansion loop
# ======================================================================


@dataclass
class ExpansionSources:
    """Providers used while widening the graph.

    ``literature`` must expose ``retrieve(LiteratureQuery)``;
    ``alignment``, when present, must expose ``suggest(graph)``.
    """

    literature: object
    alignment: object | None = None


def expand_plan(
    target: str,
    g: KnowledgeGraph,
    availability: AvailabilityChecker,
    extraction: ExpansionSources,
    cfg: PlanConfig | None = None,
) -> tuple[PlanOutcome, KnowledgeGraph]:
    """Plan with literature-driven graph expansion.

    Each round queries additional articles for every dead-end compound
    that still has budget, folds the extracted reactions into ``g``
    (dedup-safe, hence monotonic), re-runs alignment, and rebuilds the
    tree.  A compound whose retrieval adds nothing new has its budget
    zeroed so the loop cannot spin.  Provider failures are recorded per
    compound and skipped, never fatal.

    Returns the final outcome and the enriched graph (the same ``g``
    object, mutated).
    """
    cfg = cfg or PlanConfig()
    outcome = build_tree(target, g, availability, cfg)
    budgets: dict[str, int] = {}
    provider_errors: dict[str, str] = {}
    rounds = 0

    while rounds < cfg.max_expansion_rounds and cfg.expansion_budget_per_compound > 0:
        if outcome.tree is not None and not cfg.broaden_successful:
            break
        candidates = [
            name
            for name in sorted(outcome.dead_ends)
            if budgets.get(canonical_name(name), cfg.expansion_budget_per_compound) > 0
        ]
        if not candidates:
            break
        progress = False
        for compound in candidates:
            key = canonical_name(compound)
            remaining = budgets.get(key, cfg.expansion_budget_per_compound)
            try:
                docs = extraction.literature.retrieve(
                    LiteratureQuery(compound=compound, max_articles=remaining)
                )
            except ProviderError as exc:
                provider_errors[compound] = str(exc)
                continue
            budgets[key] = remaining - len(docs)
            added = 0
            for raw in docs:
                records, _errors = parse_records(raw)
                for rec in records:
                    # Re-retrieved lines keep their original spellings,
                    # which alignment may have merged away in the graph's
                    # copy; the graph stays authoritative for ids it
                    # already holds.
                    if rec.id in g.reactions:
                        continue
                    before = len(g.reactions)
                    g.add_reaction(rec)
                    if len(g.reactions) > before:
                        added += 1
            if added == 0:
                budgets[key] = 0
            else:
                progress = True
        if not progress:
            break
        rounds += 1
        if extraction.alignment is not None:
            apply_alignments(g, suggest_alignments(g, extraction.alignment))
        # Alignment may have folded the target's spelling into another
        # entity; plan against whatever name now carries it.
        target = g.resolve_name(target) or target
        outcome = build_tree(target, g, availability, cfg)

    outcome.stats.expansion_rounds = rounds
    outcome.provider_errors = provider_errors
    return outcome, g


# ======================================================================
# Serialization
# ======================================================================


def _node_to_obj(node: RetroNode) -> dict:
    return {
        "compound": node.compound,
        "via_reaction": node.via_reaction,
        "is_leaf": node.is_leaf,
        "children": [_node_to_obj(c) for c in node.children],
    }


def _node_from_obj(obj: object, where: str) -> RetroNode:
    if not isinstance(obj, dict):
        raise TreeFormatError(f"{where}: expected an object")
    for name in ("compound", "is_leaf", "children"):
        if name not in obj:
            raise TreeFormatError(f"{where}: missing field {name!r}")
    if not isinstance(obj["compound"], str) or not obj["compound"].strip():
        raise TreeFormatError(f"{where}: 'compound' must be a non-empty string")
    if not isinstance(obj["is_leaf"], bool):
        raise TreeFormatError(f"{where}: 'is_leaf' must be a boolean")
    via = obj.get("via_reaction")
    if via is not None and not isinstance(via, str):
        raise TreeFormatError(f"{where}: 'via_reaction' must be a string")
    if not isinstance(obj["children"], list):
        raise TreeFormatError(f"{where}: 'children' must be an array")
    if via is None and where != "tree":
        raise TreeFormatError(f"{where}: non-root node missing 'via_reaction'")
    if obj["is_leaf"] and obj["children"]:
        raise TreeFormatError(f"{where}: leaf node has children")
    if not obj["is_leaf"] and not obj["children"]:
        raise TreeFormatError(f"{where}: internal node has no children")
    node = RetroNode(compound=obj["compound"], via_reaction=via, is_leaf=obj["is_leaf"])
    node.children = [
        _node_from_obj(c, f"{where}.children[{i}]") for i, c in enumerate(obj["children"])
    ]
    return node


def serialize_outcome(target: str, outcome: PlanOutcome) -> bytes:
    """Byte-stable JSON for a plan outcome (tree + dead ends + stats)."""
    doc = {
        "target": target,
        "tree": _node_to_obj(outcome.tree) if outcome.tree is not None else None,
        "dead_ends": sorted(outcome.dead_ends),
        "stats": outcome.stats.as_dict(),
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def parse_outcome(data: bytes | str) -> tuple[str, PlanOutcome]:
    """Inverse of :func:`serialize_outcome`; positioned errors on bad input."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "target" not in doc or "tree" not in doc:
        raise TreeFormatError("top level must be an object with 'target' and 'tree'")
    if not isinstance(doc["target"], str):
        raise TreeFormatError("'target' must be a string")
    tree = None if doc["tree"] is None else _node_from_obj(doc["tree"], "tree")
    if "dead_ends" not in doc:
        raise TreeFormatError("missing 'dead_ends'")
    dead_ends = doc["dead_ends"]
    if not isinstance(dead_ends, list) or not all(isinstance(d, str) for d in dead_ends):
        raise TreeFormatError("'dead_ends' must be an array of strings")
    stats = PlanStats()
    raw_stats = doc.get("stats", {})
    if isinstance(raw_stats, dict):
        for k in stats.as_dict():
            v = raw_stats.get(k, 0)
            if not isinstance(v, int):
                raise TreeFormatError(f"stats.{k} must be an integer")
            setattr(stats, k, v)
    return doc["target"], PlanOutcome(tree=tree, dead_ends=set(dead_ends), stats=stats)
