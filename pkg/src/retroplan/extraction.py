"""Reaction-record wire format and provider interfaces.

A literature provider hands back :class:`RawExtraction` objects: one
structured payload per document, one reaction per line.  Each line is a
JSON object with the fields::

    reactants, products, temperature, pressure, catalysts, solvents,
    atmosphere, duration, yield_pct

plus optional ``id`` and ``source``.  When ``id``/``source`` are absent
the parser assigns ``<document_id>:L<line>`` and the document id, so
records stay traceable to their literature source.

Three provider roles are defined here:

* literature retrieval (``retrieve``): compound name → raw extractions.
  Shipped: a fixture-directory provider and a generic HTTP
  chat-completion adapter.
* entity alignment (``suggest``): knowledge graph → merge suggestions.
  Shipped: a deterministic canonicalization + synonym-table provider;
  an LLM-backed provider can be plugged in behind the same interface.
* structured extraction itself is folded into retrieval: providers
  return already-structured payloads (the fixture corpus is stored
  structured; the HTTP adapter asks the model for the wire format).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .kgraph import (
    InvalidRecordError,
    KnowledgeGraph,
    ReactionConditions,
    ReactionRecord,
)
from .names import canonical_name

__all__ = [
    "RawExtraction",
    "LiteratureQuery",
    "AlignmentSuggestion",
    "ParseError",
    "ProviderError",
    "parse_records",
    "format_records",
    "FixtureLiteratureProvider",
    "ChatCompletionProvider",
    "SynonymAligner",
    "suggest_alignments",
    "apply_alignments",
]

_WIRE_FIELDS = {
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
}


@dataclass
class RawExtraction:
    """Structured output extracted from one document."""

    document_id: str
    payload: str


@dataclass
class LiteratureQuery:
    """A retrieval request for documents about synthesizing a compound."""

    compound: str
    max_articles: int = 5

    def __post_init__(self) -> None:
        if self.max_articles < 1:
            raise ValueError("max_articles must be >= 1")


@dataclass
class AlignmentSuggestion:
    """Proposal to merge duplicate compound names into one entity."""

    canonical: str
    duplicates: set[str]
    confidence: float = 1.0

    def __post_init__(self) -> None:
        self.duplicates = set(self.duplicates) - {self.canonical}
        if not self.duplicates:
            raise ValueError("duplicates must be non-empty")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")


@dataclass
class ParseError:
    """One rejected payload line."""

    line: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}, field {self.field!r}: {self.message}"


class ProviderError(RuntimeError):
    """A provider could not answer at all (distinct from empty results).

    ``retryable`` is True for transport-level failures worth retrying.
    """

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


# ======================================================================
# Wire format
# ======================================================================


def parse_records(raw: RawExtraction) -> tuple[list[ReactionRecord], list[ParseError]]:
    """Parse a payload into records, collecting per-line errors.

    Well-formed lines become records in input order; malformed lines
    become positioned :class:`ParseError` entries and never abort the
    batch.  Blank lines are skipped.  Lines without an explicit ``id``
    get ``<document_id>:L<n>``; missing ``source`` defaults to the
    document id.
    """
    records: list[ReactionRecord] = []
    errors: list[ParseError] = []
    for lineno, line in enumerate(raw.payload.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(ParseError(lineno, "line", f"not valid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            errors.append(ParseError(lineno, "line", "expected a JSON object"))
            continue
        unknown = set(obj) - _WIRE_FIELDS
        if unknown:
            errors.append(ParseError(lineno, sorted(unknown)[0], "unknown field"))
            continue
        missing = [f for f in ("reactants", "products") if f not in obj]
        if missing:
            errors.append(ParseError(lineno, missing[0], "missing field"))
            continue
        try:
            rec = _record_from_wire(obj, raw.document_id, lineno)
            rec.validate()
        except InvalidRecordError as exc:
            errors.append(ParseError(lineno, exc.field, str(exc)))
            continue
        except (TypeError, ValueError) as exc:
            errors.append(ParseError(lineno, "line", str(exc)))
            continue
        records.append(rec)
    return records, errors


def _record_from_wire(obj: dict, document_id: str, lineno: int) -> ReactionRecord:
    def str_list(name: str) -> tuple[str, ...]:
        v = obj.get(name, [])
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise InvalidRecordError(name, "must be a list of strings")
        return tuple(v)

    def number(name: str) -> float | None:
        v = obj.get(name)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidRecordError(name, f"must be a number, got {v!r}")
        return float(v)

    atmosphere = obj.get("atmosphere")
    if atmosphere is not None and not isinstance(atmosphere, str):
        raise InvalidRecordError("atmosphere", "must be a string")
    rec_id = obj.get("id")
    if rec_id is None:
        rec_id = f"{document_id}:L{lineno}"
    elif not isinstance(rec_id, str):
        raise InvalidRecordError("id", "must be a string")
    source = obj.get("source")
    if source is None:
        source = document_id
    elif not isinstance(source, str):
        raise InvalidRecordError("source", "must be a string")
    return ReactionRecord(
        id=rec_id,
        reactants=str_list("reactants"),
        products=str_list("products"),
        conditions=ReactionConditions(
            temperature=number("temperature"),
            pressure=number("pressure"),
            catalysts=str_list("catalysts"),
            solvents=str_list("solvents"),
            atmosphere=atmosphere,
            duration=number("duration"),
        ),
        yield_pct=number("yield_pct"),
        source=source,
    )


def format_records(records: list[ReactionRecord], document_id: str = "export") -> RawExtraction:
    """Inverse of :func:`parse_records` for valid records.

    Emits one JSON object per line including ``id`` and ``source``, so
    ``parse_records(format_records(rs))`` returns ``rs`` exactly.
    """
    lines = []
    for rec in records:
        c = rec.conditions
        obj = {
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
        lines.append(json.dumps(obj, ensure_ascii=False))
    return RawExtraction(document_id=document_id, payload="\n".join(lines) + ("\n" if lines else ""))


# ======================================================================
# Literature providers
# ======================================================================


class FixtureLiteratureProvider:
    """Serves pre-extracted documents from an on-disk corpus directory.

    Layout: ``<root>/index.json`` maps canonical compound names to
    document-id lists; ``<root>/docs/<id>.jsonl`` holds each payload.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        index_path = self.root / "index.json"
        try:
            raw = json.loads(index_path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ProviderError(f"corpus index not found: {index_path}", retryable=False) from exc
        except json.JSONDecodeError as exc:
            raise ProviderError(f"corpus index unreadable: {exc}", retryable=False) from exc
        self._index: dict[str, list[str]] = {
            canonical_name(k): list(v) for k, v in raw.items()
        }

    def retrieve(self, query: LiteratureQuery) -> list[RawExtraction]:
        doc_ids = self._index.get(canonical_name(query.compound), [])
        out = []
        for doc_id in doc_ids[: query.max_articles]:
            out.append(self.load_document(doc_id))
        return out

    def load_document(self, doc_id: str) -> RawExtraction:
        path = self.root / "docs" / f"{doc_id}.jsonl"
        try:
            payload = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ProviderError(f"corpus document unreadable: {path}", retryable=False) from exc
        return RawExtraction(document_id=doc_id, payload=payload)

    def all_document_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "docs").glob("*.jsonl"))


class ChatCompletionProvider:
    """Literature retrieval + extraction through an HTTP chat endpoint.

    Sends ``POST <endpoint>`` with a chat-completion request body::

        {"model": ..., "messages": [{"role": "user", "content": ...}]}

    and expects the standard response shape with the assistant message
    under ``choices[0].message.content``; the content must be wire-format
    JSON lines.  The API key is read from the environment (default
    ``RETROPLAN_API_KEY``) and sent as a bearer token — never stored.
    """

    PROMPT = (
        "List up to {n} literature syntheses of {compound}. "
        "Answer with one JSON object per line using exactly the keys: "
        "reactants, products, temperature, pressure, catalysts, solvents, "
        "atmosphere, duration, yield_pct."
    )

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "RETROPLAN_API_KEY",
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def retrieve(self, query: LiteratureQuery) -> list[RawExtraction]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [
                {
                    "role": "user",
                    "content": self.PROMPT.format(n=query.max_articles, compound=query.compound),
                }
            ],
        }
        try:
            resp = self._session.post(
                self.endpoint, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ProviderError(f"chat endpoint unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise ProviderError(
                f"chat endpoint returned HTTP {resp.status_code}", retryable=resp.status_code >= 500
            )
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}", retryable=False) from exc
        return [RawExtraction(document_id=f"llm:{query.compound}", payload=content)]


# ======================================================================
# Alignment
# ======================================================================


class SynonymAligner:
    """Deterministic alignment provider.

    Flags name groups that are equal after canonicalization, plus groups
    linked by a configurable synonym table (abbreviation → full name).
    Stand-in for an LLM alignment pass; any object with the same
    ``suggest(g)`` interface can replace it.
    """

    def __init__(self, synonyms: dict[str, list[str]] | None = None):
        # Map canonical alias form -> canonical primary form.
        self._alias_to_primary: dict[str, str] = {}
        self._primary_display: dict[str, str] = {}
        for primary, aliases in (synonyms or {}).items():
            pkey = canonical_name(primary)
            self._primary_display[pkey] = primary.strip()
            for alias in aliases:
                self._alias_to_primary[canonical_name(alias)] = pkey

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymAligner":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"synonym table unreadable: {exc}", retryable=False) from exc
        return cls(data)

    def _group_key(self, name: str) -> str:
        key = canonical_name(name)
        return self._alias_to_primary.get(key, key)

    def suggest(self, g: KnowledgeGraph) -> list[AlignmentSuggestion]:
        groups: dict[str, list[str]] = {}
        for name in g.compounds:
            groups.setdefault(self._group_key(name), []).append(name)
        suggestions = []
        for key in sorted(groups):
            members = groups[key]
            if len(members) < 2:
                continue
            # Prefer the name spelled like the table's primary entry;
            # otherwise the longest name (tie: lexicographic) so the
            # most explicit spelling survives the merge.
            primary = self._primary_display.get(key)
            exact = [m for m in members if canonical_name(m) == canonical_name(primary)] if primary else []
            canonical = min(exact) if exact else min(members, key=lambda m: (-len(m), m))
            dupes = set(members) - {canonical}
            confidence = 1.0 if all(canonical_name(m) == key for m in members) else 0.9
            suggestions.append(
                AlignmentSuggestion(canonical=canonical, duplicates=dupes, confidence=confidence)
            )
        return suggestions


def suggest_alignments(g: KnowledgeGraph, provider) -> list[AlignmentSuggestion]:
    """Ask a provider for merge suggestions over the graph's names.

    Suggestions are validated to reference only present names; a
    provider failure propagates as :class:`ProviderError` (never a
    silent partial result).
    """
    suggestions = provider.suggest(g)
    for s in suggestions:
        for name in {s.canonical, *s.duplicates}:
            if name not in g.compounds:
                raise ProviderError(
                    f"alignment suggestion references unknown compound {name!r}",
                    retryable=False,
                )
    return suggestions


def apply_alignments(
    g: KnowledgeGraph, suggestions: list[AlignmentSuggestion]
) -> dict[str, list[str]]:
    """Apply suggestions via merges; returns rejected reaction ids per canonical name."""
    rejected: dict[str, list[str]] = {}
    for s in suggestions:
        bad = g.merge_entities(s.canonical, s.duplicates)
        if bad:
            rejected[s.canonical] = bad
    return rejected
