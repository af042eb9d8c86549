"""Compound availability: is this a purchasable / stock starting material?

Check order is fixed: memo cache, polymer whitelist, local catalog
names, structure match, then remote catalog clients.  Every definitive
verdict is written through to an append-only cache file so any repeated
query — across runs — costs zero remote requests.

The cache is a pure memo, never a source of truth: replaying it after
a catalog edit drops entries that would contradict the catalog.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import urlencode

import requests

from .names import canonical_name

__all__ = [
    "AvailabilityCatalog",
    "AvailabilityCache",
    "AvailabilityVerdict",
    "AvailabilityChecker",
    "StructureTable",
    "canonical_structure",
    "StructureResolutionError",
    "RemoteLookupError",
    "IndeterminateAvailabilityError",
    "StubCatalogClient",
    "RestCatalogClient",
    "load_catalog_dir",
]

PROVENANCES = ("local", "whitelist", "remote")


class RemoteLookupError(RuntimeError):
    """A remote catalog client failed (transport or protocol)."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class IndeterminateAvailabilityError(RuntimeError):
    """No local verdict and every remote client failed."""


class StructureResolutionError(RuntimeError):
    """The structure adapter itself failed (distinct from 'name unknown')."""


@dataclass(frozen=True)
class AvailabilityVerdict:
    """A verdict plus where it came from.

    ``indeterminate`` marks the optimistic-unavailable fallback used
    when remotes fail and policy says keep planning; such verdicts are
    never cached.
    """

    available: bool
    provenance: str
    indeterminate: bool = False

    def __bool__(self) -> bool:  # allows `if checker.is_available(name):`
        return self.available


# ======================================================================
# Catalog
# ======================================================================


def _read_name_file(path: Path) -> set[str]:
    names = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.add(canonical_name(line))
    return names


@dataclass
class AvailabilityCatalog:
    """Local knowledge about available compounds.

    All three sets hold canonical forms; membership tests canonicalize
    their argument.
    """

    local_names: set[str] = field(default_factory=set)
    local_structures: set[str] = field(default_factory=set)
    polymer_whitelist: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.local_names = {canonical_name(n) for n in self.local_names}
        self.polymer_whitelist = {canonical_name(n) for n in self.polymer_whitelist}
        self.local_structures = set(self.local_structures)

    def has_name(self, name: str) -> bool:
        return canonical_name(name) in self.local_names

    def in_whitelist(self, name: str) -> bool:
        return canonical_name(name) in self.polymer_whitelist

    def has_structure(self, structure: str | None) -> bool:
        return structure is not None and structure in self.local_structures


class StructureTable:
    """Stub structure adapter: canonical structure strings from a table file.

    Resolves small-molecule names to canonical structure strings;
    returns ``None`` for anything not in the table (polymers,
    unresolvable names).  A missing/corrupt table file is an adapter
    failure, not a non-resolution.
    """

    def __init__(self, table: dict[str, str]):
        self._table = {canonical_name(k): v for k, v in table.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "StructureTable":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StructureResolutionError(f"structure table unreadable: {exc}") from exc
        return cls(data)

    def resolve(self, name: str) -> str | None:
        return self._table.get(canonical_name(name))

    def structures_for(self, names: set[str]) -> set[str]:
        out = set()
        for n in names:
            s = self.resolve(n)
            if s is not None:
                out.add(s)
        return out


def canonical_structure(name: str, adapter: StructureTable | None) -> str | None:
    """Resolve a name to its canonical structure string, or ``None``.

    Absent adapter or unresolvable name (including polymers) → ``None``.
    Adapter failures raise :class:`StructureResolutionError`.
    """
    if adapter is None:
        return None
    return adapter.resolve(name)


def load_catalog_dir(
    path: str | Path, structures: StructureTable | None = None
) -> AvailabilityCatalog:
    """Build a catalog from a directory of plain files.

    Expected files (each optional): ``names.txt`` (one compound per
    line, ``#`` comments), ``polymers.txt`` (whitelist), and
    ``structures.json`` (name → structure table; used both as the
    structure adapter and to precompute local structure strings).
    """
    path = Path(path)
    names: set[str] = set()
    polymers: set[str] = set()
    if (path / "names.txt").exists():
        names = _read_name_file(path / "names.txt")
    if (path / "polymers.txt").exists():
        polymers = _read_name_file(path / "polymers.txt")
    if structures is None and (path / "structures.json").exists():
        structures = StructureTable.from_file(path / "structures.json")
    local_structures = structures.structures_for(names) if structures else set()
    return AvailabilityCatalog(
        local_names=names,
        local_structures=local_structures,
        polymer_whitelist=polymers,
    )


# ======================================================================
# Cache
# ======================================================================


class AvailabilityCache:
    """Append-only availability memo, persisted one entry per line.

    Line format (tab-separated): ``name<TAB>verdict<TAB>provenance<TAB>timestamp``
    with verdict ``true``/``false`` and an ISO-8601 UTC timestamp.
    Later lines win on replay.  Entries whose local/whitelist
    provenance contradicts the current catalog are dropped at replay
    time (the catalog, not the cache, is the source of truth).
    """

    def __init__(
        self,
        path: str | Path | None = None,
        catalog: AvailabilityCatalog | None = None,
        structures: StructureTable | None = None,
    ):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, tuple[bool, str, str]] = {}
        if self.path is not None and self.path.exists():
            self._replay(catalog, structures)

    def _replay(self, catalog: AvailabilityCatalog | None,
                structures: StructureTable | None) -> None:
        assert self.path is not None
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                continue  # tolerate torn writes at the tail
            name, verdict_s, provenance, stamp = parts
            if provenance not in PROVENANCES or verdict_s not in ("true", "false"):
                continue
            verdict = verdict_s == "true"
            if catalog is not None and provenance in ("local", "whitelist"):
                truth = catalog.in_whitelist(name) or catalog.has_name(name)
                if not truth and structures is not None:
                    structure = structures.resolve(name)
                    truth = structure is not None and catalog.has_structure(structure)
                if verdict != truth:
                    continue
            self.entries[canonical_name(name)] = (verdict, provenance, stamp)

    def get(self, name: str) -> tuple[bool, str] | None:
        hit = self.entries.get(canonical_name(name))
        return (hit[0], hit[1]) if hit else None

    def put(self, name: str, verdict: bool, provenance: str) -> None:
        if provenance not in PROVENANCES:
            raise ValueError(f"bad provenance: {provenance}")
        key = canonical_name(name)
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.entries[key] = (verdict, provenance, stamp)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(f"{key}\t{'true' if verdict else 'false'}\t{provenance}\t{stamp}\n")


# ======================================================================
# Remote clients
# ======================================================================


class StubCatalogClient:
    """In-memory remote catalog for tests; counts lookups."""

    def __init__(self, available: set[str] = frozenset(), fail: bool = False, delay: float = 0.0):
        self.available = {canonical_name(n) for n in available}
        self.fail = fail
        self.delay = delay
        self.calls = 0
        self.queried: list[str] = []

    def lookup(self, name: str, structure: str | None = None) -> bool:
        self.calls += 1
        self.queried.append(name)
        if self.delay:
            time.sleep(self.delay)
        if self.fail:
            raise RemoteLookupError("stub configured to fail")
        return canonical_name(name) in self.available


class RestCatalogClient:
    """Remote availability over REST.

    Issues ``GET <base_url>/availability?name=<name>[&structure=<s>]``
    and expects ``200`` with a JSON body ``{"available": true|false}``.
    Everything else — transport errors, non-200 statuses, malformed
    bodies — raises :class:`RemoteLookupError`.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def lookup(self, name: str, structure: str | None = None) -> bool:
        params = {"name": name}
        if structure is not None:
            params["structure"] = structure
        url = f"{self.base_url}/availability?{urlencode(params)}"
        try:
            resp = self._session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteLookupError(f"remote catalog unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteLookupError(
                f"remote catalog returned HTTP {resp.status_code}",
                retryable=resp.status_code >= 500,
            )
        try:
            body = resp.json()
            return bool(body["available"])
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteLookupError(f"malformed remote response: {exc}", retryable=False) from exc


# ======================================================================
# Checker
# ======================================================================


class AvailabilityChecker:
    """Answers availability queries with memoization and single-flight.

    Parameters
    ----------
    catalog : AvailabilityCatalog
    cache : AvailabilityCache, optional
        Defaults to an in-memory cache.
    remote_clients : list, optional
        Objects with ``lookup(name, structure=None) -> bool`` raising
        :class:`RemoteLookupError` on failure.  Queried in order; the
        first definitive answer wins.
    structures : StructureTable, optional
        Adapter used for the structure-match step.
    indeterminate_policy : str
        ``"unavailable"`` (default): when no local verdict exists and
        every remote fails, report not-available (uncached, flagged
        indeterminate) so planning degrades to deeper search.
        ``"error"``: raise :class:`IndeterminateAvailabilityError`.

    Concurrent calls are safe; per-name in-flight requests are
    serialized so each name hits the remotes at most once.
    """

    def __init__(
        self,
        catalog: AvailabilityCatalog,
        cache: AvailabilityCache | None = None,
        remote_clients: list | None = None,
        structures: StructureTable | None = None,
        indeterminate_policy: str = "unavailable",
    ):
        if indeterminate_policy not in ("unavailable", "error"):
            raise ValueError(f"bad indeterminate_policy: {indeterminate_policy}")
        self.catalog = catalog
        self.cache = cache if cache is not None else AvailabilityCache()
        self.remote_clients = list(remote_clients or [])
        self.structures = structures
        self.indeterminate_policy = indeterminate_policy
        self.cache_hits = 0
        self.remote_requests = 0
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _name_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(key)
            if lock is None:
                lock = self._locks[key] = threading.Lock()
            return lock

    def is_available(self, name: str) -> AvailabilityVerdict:
        """Decide availability for one compound name.

        Raises
        ------
        IndeterminateAvailabilityError
            Only under ``indeterminate_policy="error"`` when every
            remote client fails and there is no local verdict.
        """
        if not name or not name.strip():
            raise ValueError("empty compound name")
        key = canonical_name(name)
        with self._name_lock(key):
            hit = self.cache.get(key)
            if hit is not None:
                self.cache_hits += 1
                return AvailabilityVerdict(available=hit[0], provenance=hit[1])
            verdict = self._decide(name, key)
            if not verdict.indeterminate:
                self.cache.put(key, verdict.available, verdict.provenance)
            return verdict

    def _decide(self, name: str, key: str) -> AvailabilityVerdict:
        if self.catalog.in_whitelist(key):
            return AvailabilityVerdict(True, "whitelist")
        if self.catalog.has_name(key):
            return AvailabilityVerdict(True, "local")
        structure = canonical_structure(name, self.structures)
        if self.catalog.has_structure(structure):
            return AvailabilityVerdict(True, "local")
        if not self.remote_clients:
            # Offline mode: the local catalog is the whole universe.
            return AvailabilityVerdict(False, "local")
        failures = 0
        for client in self.remote_clients:
            self.remote_requests += 1
            try:
                found = client.lookup(name, structure)
            except RemoteLookupError:
                failures += 1
                continue
            return AvailabilityVerdict(bool(found), "remote")
        # Every client failed.
        if self.indeterminate_policy == "error":
            raise IndeterminateAvailabilityError(
                f"no verdict for {name!r}: all {failures} remote client(s) failed"
            )
        return AvailabilityVerdict(False, "remote", indeterminate=True)
