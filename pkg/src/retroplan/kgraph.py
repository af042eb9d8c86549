"""Chemical reaction knowledge graph.

Compounds are nodes; every reaction record induces conceptual directed
edges from each of its reactants to each of its products, labeled with
the reaction id.  The graph maintains a ``produces_index`` so the tree
builder can ask "which reactions make X?" in one lookup.

Graph values follow a single-writer contract: mutation methods
(:meth:`KnowledgeGraph.add_reaction`, :meth:`KnowledgeGraph.merge_entities`)
must not race with readers.  All query methods are safe to share between
threads once mutation has stopped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .names import canonical_name, display_name

__all__ = [
    "Compound",
    "ReactionConditions",
    "ReactionRecord",
    "KnowledgeGraph",
    "InvalidRecordError",
    "UnknownCompoundError",
    "GraphFormatError",
    "serialize",
    "deserialize",
]

COMPOUND_KINDS = ("small-molecule", "polymer", "unknown")

# Flat on-disk field order for a reaction object.  Kept fixed so that
# serialized graphs are byte-stable.
_REACTION_FIELDS = (
    "id",
    "reactants",
    "products",
    "temperature",
    "pressure",
    "catalysts",
    "solvents",
    "atmosphere",
    "duration",
    "yield_pct",
    "source",
)


class InvalidRecordError(ValueError):
    """A reaction record violates a structural invariant.

    Attributes
    ----------
    field : str
        Name of the offending field.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class UnknownCompoundError(KeyError):
    """A named compound does not exist in the graph."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown compound: {self.name!r}"


class GraphFormatError(ValueError):
    """A serialized graph document is malformed; message carries position."""


# ======================================================================
# Domain types
# ======================================================================


@dataclass
class Compound:
    """A chemical entity, identified by its display name.

    Parameters
    ----------
    name : str
        Trimmed display name, unique within a graph.
    aliases : set of str
        Alternative names folded into this entity by alignment merges.
        Never contains ``name`` itself.
    kind : str
        One of ``small-molecule``, ``polymer``, ``unknown``.
    """

    name: str
    aliases: set[str] = field(default_factory=set)
    kind: str = "unknown"

    def __post_init__(self) -> None:
        self.name = display_name(self.name)
        if self.kind not in COMPOUND_KINDS:
            raise ValueError(f"bad compound kind: {self.kind!r}")
        self.aliases.discard(self.name)


@dataclass
class ReactionConditions:
    """Reaction conditions as reported in the literature.

    All fields are optional; absent means "not reported".  Units are
    fixed: temperature in °C, pressure in atm, duration in hours.
    """

    temperature: float | None = None
    pressure: float | None = None
    catalysts: tuple[str, ...] = ()
    solvents: tuple[str, ...] = ()
    atmosphere: str | None = None
    duration: float | None = None

    def __post_init__(self) -> None:
        self.catalysts = tuple(self.catalysts)
        self.solvents = tuple(self.solvents)

    def as_key(self) -> tuple:
        return (
            self.temperature,
            self.pressure,
            self.catalysts,
            self.solvents,
            self.atmosphere,
            self.duration,
        )


@dataclass
class ReactionRecord:
    """One literature-reported reaction.

    Parameters
    ----------
    id : str
        Stable identifier, unique within a graph.
    reactants, products : tuple of str
        Non-empty lists of compound display names.  A name may not
        appear on both sides (compared canonically).
    conditions : ReactionConditions
    yield_pct : float, optional
        Reported yield in [0, 100].
    source : str
        Free-text literature reference (document id, title, DOI...).
    """

    id: str
    reactants: tuple[str, ...]
    products: tuple[str, ...]
    conditions: ReactionConditions = field(default_factory=ReactionConditions)
    yield_pct: float | None = None
    source: str = ""

    def __post_init__(self) -> None:
        self.reactants = tuple(self.reactants)
        self.products = tuple(self.products)

    def validate(self) -> None:
        """Raise :class:`InvalidRecordError` on the first violated invariant."""
        if not isinstance(self.id, str) or not self.id.strip():
            raise InvalidRecordError("id", "must be a non-empty identifier")
        for field_name, names in (("reactants", self.reactants), ("products", self.products)):
            if not names:
                raise InvalidRecordError(field_name, "list is empty")
            for n in names:
                if not isinstance(n, str) or not n.strip():
                    raise InvalidRecordError(field_name, f"contains an empty name: {n!r}")
        overlap = {canonical_name(r) for r in self.reactants} & {
            canonical_name(p) for p in self.products
        }
        if overlap:
            raise InvalidRecordError(
                "products", f"also listed as reactants: {sorted(overlap)}"
            )
        c = self.conditions
        if c.duration is not None and c.duration < 0:
            raise InvalidRecordError("duration", f"negative duration: {c.duration}")
        if c.temperature is not None and c.temperature <= -273.15:
            raise InvalidRecordError(
                "temperature", f"below absolute zero: {c.temperature}"
            )
        if c.pressure is not None and c.pressure < 0:
            raise InvalidRecordError("pressure", f"negative pressure: {c.pressure}")
        if self.yield_pct is not None and not (0 <= self.yield_pct <= 100):
            raise InvalidRecordError("yield_pct", f"outside [0, 100]: {self.yield_pct}")

    def content_key(self) -> tuple:
        """Dedup key: sorted canonical reactants/products, conditions, source.

        Two records with the same key describe the same reported
        reaction, independent of name spellings and list order.
        """
        return (
            tuple(sorted(canonical_name(r) for r in self.reactants)),
            tuple(sorted(canonical_name(p) for p in self.products)),
            self.conditions.as_key(),
            self.source,
        )


# ======================================================================
# The graph
# ======================================================================


class KnowledgeGraph:
    """Reaction knowledge graph keyed by compound display name.

    Attributes
    ----------
    compounds : dict of str to Compound
    reactions : dict of str to ReactionRecord
    produces_index : dict of str to set of str
        Maps a compound name to the ids of all reactions whose products
        contain it.  Maintained incrementally; always rebuildable.
    """

    def __init__(self) -> None:
        self.compounds: dict[str, Compound] = {}
        self.reactions: dict[str, ReactionRecord] = {}
        self.produces_index: dict[str, set[str]] = {}
        self._by_content: dict[tuple, str] = {}

    # -- construction --------------------------------------------------

    def ensure_compound(self, name: str, kind: str = "unknown") -> Compound:
        """Return the compound for ``name`` (trimmed), creating it if new."""
        name = display_name(name)
        comp = self.compounds.get(name)
        if comp is None:
            comp = Compound(name=name, kind=kind)
            self.compounds[name] = comp
        elif comp.kind == "unknown" and kind != "unknown":
            comp.kind = kind
        return comp

    def add_reaction(self, rec: ReactionRecord) -> str:
        """Insert a validated record; return the effective reaction id.

        Content-identical records (same sorted canonical reactants and
        products, same conditions, same source) are deduplicated: the
        graph is left unchanged and the already-present id is returned.

        Raises
        ------
        InvalidRecordError
            If the record violates an invariant, or reuses an existing
            id for different content.
        """
        rec = replace(
            rec,
            reactants=tuple(display_name(n) for n in rec.reactants),
            products=tuple(display_name(n) for n in rec.products),
        )
        rec.validate()
        key = rec.content_key()
        existing = self._by_content.get(key)
        if existing is not None:
            return existing
        if rec.id in self.reactions:
            raise InvalidRecordError(
                "id", f"id {rec.id!r} already used by a different reaction"
            )
        for name in (*rec.reactants, *rec.products):
            self.ensure_compound(name)
        self.reactions[rec.id] = rec
        for product in rec.products:
            self.produces_index.setdefault(product, set()).add(rec.id)
        self._by_content[key] = rec.id
        return rec.id

    # -- queries ---------------------------------------------------------

    def reactions_producing(self, compound: str) -> list[ReactionRecord]:
        """All reactions whose products contain ``compound``, ascending id.

        Matches the exact display name; unknown names yield ``[]``.
        """
        ids = self.produces_index.get(compound, set())
        return [self.reactions[i] for i in sorted(ids)]

    def resolve_name(self, query: str) -> str | None:
        """Resolve a query to a stored display name.

        Exact display-name match wins; otherwise a unique canonical
        match, then a unique alias match.  Returns ``None`` when
        nothing (or more than one thing) matches.
        """
        if query in self.compounds:
            return query
        want = canonical_name(query)
        hits = [n for n in self.compounds if canonical_name(n) == want]
        if len(hits) == 1:
            return hits[0]
        if not hits:
            via_alias = [
                n
                for n, comp in self.compounds.items()
                if any(canonical_name(a) == want for a in comp.aliases)
            ]
            if len(via_alias) == 1:
                return via_alias[0]
        return None

    def compound_count(self) -> int:
        return len(self.compounds)

    def edge_count(self) -> int:
        """Number of conceptual reactant→product edges over all reactions."""
        return sum(len(r.reactants) * len(r.products) for r in self.reactions.values())

    # -- alignment -------------------------------------------------------

    def merge_entities(self, canonical: str, duplicates: Iterable[str]) -> list[str]:
        """Fold duplicate compound entries into ``canonical``.

        Every occurrence of a duplicate name in any reaction is
        rewritten to ``canonical``; the duplicates are recorded as
        aliases and their compound entries removed.  A reaction whose
        rewritten form would list the same compound as both reactant
        and product is rejected: removed from the graph and reported.

        Returns
        -------
        list of str
            Ids of rejected reactions, ascending.

        Raises
        ------
        UnknownCompoundError
            If ``canonical`` or any duplicate is not in the graph.
        """
        if canonical not in self.compounds:
            raise UnknownCompoundError(canonical)
        dupes = set()
        for name in duplicates:
            if name not in self.compounds:
                raise UnknownCompoundError(name)
            if name != canonical:
                dupes.add(name)
        if not dupes:
            return []

        def rewrite(names: tuple[str, ...]) -> tuple[str, ...]:
            seen: set[str] = set()
            out: list[str] = []
            for n in names:
                n = canonical if n in dupes else n
                key = canonical_name(n)
                if key not in seen:
                    seen.add(key)
                    out.append(n)
            return tuple(out)

        rejected: list[str] = []
        for rid in list(self.reactions):
            rec = self.reactions[rid]
            touched = any(n in dupes for n in (*rec.reactants, *rec.products))
            if not touched:
                continue
            new = replace(rec, reactants=rewrite(rec.reactants), products=rewrite(rec.products))
            try:
                new.validate()
            except InvalidRecordError:
                del self.reactions[rid]
                rejected.append(rid)
                continue
            self.reactions[rid] = new

        keep = self.compounds[canonical]
        for name in dupes:
            gone = self.compounds.pop(name)
            keep.aliases.add(name)
            keep.aliases.update(gone.aliases)
            if keep.kind == "unknown" and gone.kind != "unknown":
                keep.kind = gone.kind
        keep.aliases.discard(keep.name)
        self._reindex()
        return sorted(rejected)

    def _reindex(self) -> None:
        self.produces_index = {}
        self._by_content = {}
        for rid, rec in sorted(self.reactions.items()):
            for product in rec.products:
                self.produces_index.setdefault(product, set()).add(rid)
            self._by_content.setdefault(rec.content_key(), rid)

    # -- equality ----------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.compounds == other.compounds and self.reactions == other.reactions

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(compounds={len(self.compounds)}, "
            f"reactions={len(self.reactions)})"
        )


# ======================================================================
# Serialization
# ======================================================================


def _reaction_to_obj(rec: ReactionRecord) -> dict[str, Any]:
    c = rec.conditions
    return {
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


def reaction_from_obj(obj: dict[str, Any], where: str = "record") -> ReactionRecord:
    """Build a record from a flat mapping; errors cite ``where``."""
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object, got {type(obj).__name__}")
    for name in ("id", "reactants", "products"):
        if name not in obj:
            raise GraphFormatError(f"{where}: missing field {name!r}")
    unknown = set(obj) - set(_REACTION_FIELDS)
    if unknown:
        raise GraphFormatError(f"{where}: unknown fields {sorted(unknown)}")
    for name in ("reactants", "products", "catalysts", "solvents"):
        v = obj.get(name, [])
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise GraphFormatError(f"{where}: field {name!r} must be a list of strings")
    for name in ("temperature", "pressure", "duration", "yield_pct"):
        v = obj.get(name)
        if v is not None and not isinstance(v, (int, float)):
            raise GraphFormatError(f"{where}: field {name!r} must be a number")
    for name in ("id", "source"):
        if name in obj and not isinstance(obj[name], str):
            raise GraphFormatError(f"{where}: field {name!r} must be a string")
    if obj.get("atmosphere") is not None and not isinstance(obj["atmosphere"], str):
        raise GraphFormatError(f"{where}: field 'atmosphere' must be a string")
    rec = ReactionRecord(
        id=obj["id"],
        reactants=tuple(obj["reactants"]),
        products=tuple(obj["products"]),
        conditions=ReactionConditions(
            temperature=obj.get("temperature"),
            pressure=obj.get("pressure"),
            catalysts=tuple(obj.get("catalysts", [])),
            solvents=tuple(obj.get("solvents", [])),
            atmosphere=obj.get("atmosphere"),
            duration=obj.get("duration"),
        ),
        yield_pct=obj.get("yield_pct"),
        source=obj.get("source", ""),
    )
    try:
        rec.validate()
    except InvalidRecordError as exc:
        raise GraphFormatError(f"{where}: {exc}") from exc
    return rec


def serialize(g: KnowledgeGraph) -> bytes:
    """Serialize a graph to a byte-stable JSON document.

    Compounds are sorted by name, reactions by id, and every field is
    always present, so equal graphs serialize to identical bytes.
    """
    doc = {
        "compounds": [
            {
                "name": comp.name,
                "aliases": sorted(comp.aliases),
                "kind": comp.kind,
            }
            for _, comp in sorted(g.compounds.items())
        ],
        "reactions": [_reaction_to_obj(rec) for _, rec in sorted(g.reactions.items())],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def deserialize(data: bytes | str) -> KnowledgeGraph:
    """Parse a serialized graph; malformed input raises a positioned error."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("top level must be an object")
    for name in ("compounds", "reactions"):
        if name not in doc or not isinstance(doc[name], list):
            raise GraphFormatError(f"missing or non-array field {name!r}")

    g = KnowledgeGraph()
    for i, obj in enumerate(doc["compounds"]):
        where = f"compounds[{i}]"
        if not isinstance(obj, dict) or "name" not in obj:
            raise GraphFormatError(f"{where}: missing field 'name'")
        kind = obj.get("kind", "unknown")
        if kind not in COMPOUND_KINDS:
            raise GraphFormatError(f"{where}: bad kind {kind!r}")
        aliases = obj.get("aliases", [])
        if not isinstance(aliases, list):
            raise GraphFormatError(f"{where}: field 'aliases' must be a list")
        comp = Compound(name=obj["name"], aliases=set(aliases), kind=kind)
        if comp.name in g.compounds:
            raise GraphFormatError(f"{where}: duplicate compound {comp.name!r}")
        g.compounds[comp.name] = comp

    for i, obj in enumerate(doc["reactions"]):
        where = f"reactions[{i}]"
        rec = reaction_from_obj(obj, where)
        if rec.id in g.reactions:
            raise GraphFormatError(f"{where}: duplicate reaction id {rec.id!r}")
        missing = [n for n in (*rec.reactants, *rec.products) if n not in g.compounds]
        if missing:
            raise GraphFormatError(
                f"{where}: references compounds absent from 'compounds': {missing}"
            )
        g.reactions[rec.id] = rec
    g._reindex()
    return g
