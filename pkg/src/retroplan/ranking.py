"""Screen, score, and recommend reaction pathways.

Screening drops every pathway containing a reaction that breaks a
configured threshold or touches a banned substance.  Scoring combines
five per-pathway subscores, each normalized into [0, 1]:

* mildness — mean over reactions of the mean of three clamped linear
  ramps: temperature 25→250 °C maps 1→0, pressure 1→50 atm, duration
  1→72 h; unreported values score a neutral 0.5;
* yield — mean reported yield / 100, unreported reactions count 0.5;
* availability_cost — fraction of the pathway's starting materials
  found in the local catalog (structure-level and remote availability
  score lower than stock on the shelf);
* safety — 1 minus the fraction of referenced substances appearing on
  the configured hazard list;
* step_count — 1 / (1 + number of reactions).

The normalization constants are engineering defaults, configurable in
the ranking config file.  Ties break toward fewer reactions, then
lexicographic id order, so rankings are total and reproducible.
"""

from __future__ import annotations

import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

from .availability import AvailabilityCatalog
from .kgraph import KnowledgeGraph, ReactionRecord
from .names import canonical_name
from .pathways import Pathway, PathwaySet, initial_reactants

__all__ = [
    "ScreeningConfig",
    "ScoreWeights",
    "MildnessRamps",
    "RankingConfig",
    "Recommendation",
    "UnknownReactionError",
    "NoCandidatesError",
    "UnsatisfiableCriterionError",
    "CriterionSyntaxError",
    "load_ranking_config",
    "reaction_passes",
    "screen",
    "score_pathways",
    "recommend",
    "RuleEvaluator",
]


class UnknownReactionError(KeyError):
    def __init__(self, rid: str):
        super().__init__(rid)
        self.rid = rid

    def __str__(self) -> str:
        return f"pathway references unknown reaction {self.rid!r}"


class NoCandidatesError(RuntimeError):
    """The pathway set is empty; nothing to recommend."""


class UnsatisfiableCriterionError(RuntimeError):
    """No pathway satisfies the criterion; message lists nearest misses."""


class CriterionSyntaxError(ValueError):
    """The criterion text matches no supported rule form."""


# ======================================================================
# Configuration
# ======================================================================


@dataclass
class ScreeningConfig:
    """Per-reaction thresholds; an absent threshold filters nothing.

    Unreported condition values always pass; unreported yields pass
    unless ``require_yield_known`` demands them.
    """

    max_temperature: float | None = None
    max_pressure: float | None = None
    max_duration: float | None = None
    min_yield_pct: float | None = None
    banned_substances: set[str] = field(default_factory=set)
    require_yield_known: bool = False

    def __post_init__(self) -> None:
        for name in ("max_temperature", "max_pressure", "max_duration", "min_yield_pct"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        self.banned_substances = {canonical_name(b) for b in self.banned_substances}


@dataclass
class ScoreWeights:
    """Linear combination weights; non-negative, summing to 1."""

    w_mildness: float = 0.2
    w_yield: float = 0.2
    w_availability_cost: float = 0.2
    w_safety: float = 0.2
    w_step_count: float = 0.2

    def __post_init__(self) -> None:
        values = self.as_dict()
        if any(v < 0 for v in values.values()):
            raise ValueError("weights must be non-negative")
        total = sum(values.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")

    def as_dict(self) -> dict[str, float]:
        return {
            "mildness": self.w_mildness,
            "yield": self.w_yield,
            "availability_cost": self.w_availability_cost,
            "safety": self.w_safety,
            "step_count": self.w_step_count,
        }


@dataclass
class MildnessRamps:
    """(full-credit, zero-credit) breakpoints for the mildness ramps."""

    temperature: tuple[float, float] = (25.0, 250.0)
    pressure: tuple[float, float] = (1.0, 50.0)
    duration: tuple[float, float] = (1.0, 72.0)


@dataclass
class RankingConfig:
    screening: ScreeningConfig = field(default_factory=ScreeningConfig)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    hazards: set[str] = field(default_factory=set)
    ramps: MildnessRamps = field(default_factory=MildnessRamps)


def load_ranking_config(path: str | Path) -> RankingConfig:
    """Load screening thresholds, weights, hazards, and ramp overrides
    from a TOML file; the weight simplex constraint is enforced here."""
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    s = doc.get("screening", {})
    screening = ScreeningConfig(
        max_temperature=s.get("max_temperature"),
        max_pressure=s.get("max_pressure"),
        max_duration=s.get("max_duration"),
        min_yield_pct=s.get("min_yield_pct"),
        banned_substances=set(s.get("banned_substances", [])),
        require_yield_known=bool(s.get("require_yield_known", False)),
    )
    w = doc.get("weights")
    weights = (
        ScoreWeights(
            w_mildness=w.get("mildness", 0.0),
            w_yield=w.get("yield", 0.0),
            w_availability_cost=w.get("availability_cost", 0.0),
            w_safety=w.get("safety", 0.0),
            w_step_count=w.get("step_count", 0.0),
        )
        if w is not None
        else ScoreWeights()
    )
    hazards = {canonical_name(h) for h in doc.get("safety", {}).get("hazards", [])}
    m = doc.get("mildness", {})
    ramps = MildnessRamps(
        temperature=tuple(m.get("temperature_ramp", (25.0, 250.0))),
        pressure=tuple(m.get("pressure_ramp", (1.0, 50.0))),
        duration=tuple(m.get("duration_ramp", (1.0, 72.0))),
    )
    return RankingConfig(screening=screening, weights=weights, hazards=hazards, ramps=ramps)


# ======================================================================
# Screening
# ======================================================================


def _referenced_names(rec: ReactionRecord) -> set[str]:
    return {
        canonical_name(n)
        for n in (*rec.reactants, *rec.products, *rec.conditions.catalysts, *rec.conditions.solvents)
    }


def reaction_passes(rec: ReactionRecord, cfg: ScreeningConfig) -> bool:
    """The single-reaction screening predicate."""
    c = rec.conditions
    if cfg.max_temperature is not None and c.temperature is not None and c.temperature > cfg.max_temperature:
        return False
    if cfg.max_pressure is not None and c.pressure is not None and c.pressure > cfg.max_pressure:
        return False
    if cfg.max_duration is not None and c.duration is not None and c.duration > cfg.max_duration:
        return False
    if rec.yield_pct is None:
        if cfg.require_yield_known:
            return False
    elif cfg.min_yield_pct is not None and rec.yield_pct < cfg.min_yield_pct:
        return False
    if cfg.banned_substances and _referenced_names(rec) & cfg.banned_substances:
        return False
    return True


def _resolve(g: KnowledgeGraph, rid: str) -> ReactionRecord:
    rec = g.reactions.get(rid)
    if rec is None:
        raise UnknownReactionError(rid)
    return rec


def screen(pathways: PathwaySet, g: KnowledgeGraph, cfg: ScreeningConfig) -> PathwaySet:
    """Keep pathways whose every reaction passes every configured check."""
    survivors = [
        p
        for p in pathways.pathways
        if all(reaction_passes(_resolve(g, rid), cfg) for rid in p.canonical_order)
    ]
    return PathwaySet(root=pathways.root, pathways=survivors, truncated=pathways.truncated)


# ======================================================================
# Scoring
# ======================================================================


def _ramp(value: float | None, lo: float, hi: float) -> float:
    if value is None:
        return 0.5
    if value <= lo:
        return 1.0
    if value >= hi:
        return 0.0
    return (hi - value) / (hi - lo)


def _mean(values: list[float], empty: float) -> float:
    return sum(values) / len(values) if values else empty


def pathway_subscores(
    pathway: Pathway,
    g: KnowledgeGraph,
    catalog: AvailabilityCatalog | None,
    hazards: set[str],
    ramps: MildnessRamps,
) -> dict[str, float]:
    """All five normalized subscores for one pathway."""
    records = [_resolve(g, rid) for rid in pathway.canonical_order]

    per_reaction_mildness = []
    yields = []
    referenced: set[str] = set()
    for rec in records:
        c = rec.conditions
        per_reaction_mildness.append(
            (
                _ramp(c.temperature, *ramps.temperature)
                + _ramp(c.pressure, *ramps.pressure)
                + _ramp(c.duration, *ramps.duration)
            )
            / 3.0
        )
        yields.append(0.5 if rec.yield_pct is None else rec.yield_pct / 100.0)
        referenced |= _referenced_names(rec)

    leaves = initial_reactants(pathway, g)
    if catalog is None:
        availability_cost = 0.5
    elif not leaves:
        availability_cost = 1.0
    else:
        in_local = sum(1 for leaf in leaves if catalog.has_name(leaf))
        availability_cost = in_local / len(leaves)

    hazard_fraction = (
        len(referenced & hazards) / len(referenced) if referenced else 0.0
    )
    return {
        "mildness": _mean(per_reaction_mildness, empty=0.5),
        "yield": _mean(yields, empty=0.5),
        "availability_cost": availability_cost,
        "safety": 1.0 - hazard_fraction,
        "step_count": 1.0 / (1.0 + len(pathway.reactions)),
    }


@dataclass
class Recommendation:
    """One ranked pathway with its score breakdown and literature trail."""

    pathway: Pathway
    score: float
    per_criterion: dict[str, float]
    rationale: str
    sources: list[dict[str, str]]


def _rationale(
    pathway: Pathway,
    score: float,
    subs: dict[str, float],
    weights: ScoreWeights,
    leaves: set[str],
    catalog: AvailabilityCatalog | None,
) -> str:
    contributions = sorted(
        ((weights.as_dict()[k] * v, k, v) for k, v in subs.items()),
        key=lambda t: (-t[0], t[1]),
    )
    top = ", ".join(f"{k} {w:.3f} (= {weights.as_dict()[k]:.2f} x {v:.3f})" for w, k, v in contributions[:2])
    leaf_list = ", ".join(sorted(leaves)) if leaves else "none (target already available)"
    if catalog is not None and leaves:
        stocked = sum(1 for leaf in leaves if catalog.has_name(leaf))
        stock_note = f"; {stocked}/{len(leaves)} starting materials in local catalog"
    else:
        stock_note = ""
    return (
        f"score {score:.4f} over {len(pathway.reactions)} reaction(s); "
        f"strongest contributions: {top}; starting materials: {leaf_list}{stock_note}"
    )


def score_pathways(
    pathways: PathwaySet,
    g: KnowledgeGraph,
    weights: ScoreWeights,
    catalog: AvailabilityCatalog | None = None,
    hazards: set[str] = frozenset(),
    ramps: MildnessRamps | None = None,
) -> list[Recommendation]:
    """Rank pathways by weighted subscores, descending.

    Ties break toward fewer reactions, then lexicographic canonical
    order, making the ranking a total order.
    """
    ramps = ramps or MildnessRamps()
    hazards = {canonical_name(h) for h in hazards}
    out = []
    for p in pathways.pathways:
        subs = pathway_subscores(p, g, catalog, hazards, ramps)
        score = sum(weights.as_dict()[k] * v for k, v in subs.items())
        leaves = initial_reactants(p, g)
        out.append(
            Recommendation(
                pathway=p,
                score=score,
                per_criterion=subs,
                rationale=_rationale(p, score, subs, weights, leaves, catalog),
                sources=[
                    {"reaction": rid, "source": g.reactions[rid].source}
                    for rid in p.canonical_order
                ],
            )
        )
    out.sort(key=lambda r: (-r.score, len(r.pathway.reactions), r.pathway.canonical_order))
    return out


# ======================================================================
# Criterion-driven recommendation
# ======================================================================

_INITIAL_RE = re.compile(
    r"^\s*(?:the\s+)?initial\s+reactants\s+(?:must\s+)?include\s+(.+?)\s*$", re.IGNORECASE
)
_SOURCE_RE = re.compile(
    r"^\s*(?:pathway\s+must\s+)?include\s+reaction\s+from\s+source\s+(.+?)\s*$", re.IGNORECASE
)


def _strip_quotes(s: str) -> str:
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    return s


def _alias_keys(g: KnowledgeGraph, query: str) -> set[str]:
    """Canonical keys naming the same entity as ``query`` (via graph aliases)."""
    want = canonical_name(query)
    keys = {want}
    for name, comp in g.compounds.items():
        if canonical_name(name) == want or any(canonical_name(a) == want for a in comp.aliases):
            keys.add(canonical_name(name))
            keys.update(canonical_name(a) for a in comp.aliases)
    return keys


class RuleEvaluator:
    """Deterministic criterion evaluator.

    Supported criterion forms (case-insensitive, argument may be quoted):

    * ``initial reactants [must] include <compound>``
    * ``[pathway must] include reaction from source <text>``
    * empty — every pathway satisfies it.

    Pathways satisfying the criterion are ranked by
    :func:`score_pathways` and the best one returned.  An LLM-backed
    evaluator can replace this class behind the same ``select``
    interface; its output is advisory unless configured to override.
    """

    def __init__(
        self,
        weights: ScoreWeights | None = None,
        catalog: AvailabilityCatalog | None = None,
        hazards: set[str] = frozenset(),
        ramps: MildnessRamps | None = None,
    ):
        self.weights = weights or ScoreWeights()
        self.catalog = catalog
        self.hazards = set(hazards)
        self.ramps = ramps or MildnessRamps()

    def _matching(
        self, pathways: PathwaySet, g: KnowledgeGraph, criterion: str | None
    ) -> list[Pathway]:
        if criterion is None or not criterion.strip():
            return list(pathways.pathways)
        m = _INITIAL_RE.match(criterion)
        if m:
            compound = _strip_quotes(m.group(1))
            keys = _alias_keys(g, compound)
            matching = [
                p
                for p in pathways.pathways
                if any(canonical_name(leaf) in keys for leaf in initial_reactants(p, g))
            ]
            if not matching:
                seen = sorted({leaf for p in pathways.pathways for leaf in initial_reactants(p, g)})
                raise UnsatisfiableCriterionError(
                    f"no pathway has {compound!r} among its initial reactants; "
                    f"starting materials seen: {', '.join(seen[:10]) or 'none'}"
                )
            return matching
        m = _SOURCE_RE.match(criterion)
        if m:
            want = _strip_quotes(m.group(1)).lower()
            matching = [
                p
                for p in pathways.pathways
                if any(want in g.reactions[rid].source.lower() for rid in p.canonical_order if rid in g.reactions)
            ]
            if not matching:
                seen = sorted(
                    {
                        g.reactions[rid].source
                        for p in pathways.pathways
                        for rid in p.canonical_order
                        if rid in g.reactions
                    }
                )
                raise UnsatisfiableCriterionError(
                    f"no pathway includes a reaction from source {m.group(1)!r}; "
                    f"sources seen: {', '.join(seen[:10]) or 'none'}"
                )
            return matching
        raise CriterionSyntaxError(
            f"unsupported criterion {criterion!r}; expected "
            "'initial reactants include <compound>' or "
            "'include reaction from source <text>'"
        )

    def select(
        self, pathways: PathwaySet, g: KnowledgeGraph, criterion: str | None
    ) -> Recommendation:
        matching = self._matching(pathways, g, criterion)
        subset = PathwaySet(root=pathways.root, pathways=matching, truncated=pathways.truncated)
        ranked = score_pathways(
            subset, g, self.weights, catalog=self.catalog, hazards=self.hazards, ramps=self.ramps
        )
        return ranked[0]


def recommend(
    pathways: PathwaySet,
    g: KnowledgeGraph,
    criterion: str | None,
    evaluator: RuleEvaluator | None = None,
) -> Recommendation:
    """Pick exactly one pathway satisfying ``criterion``.

    Raises
    ------
    NoCandidatesError
        If the pathway set is empty.
    UnsatisfiableCriterionError
        If no pathway satisfies the criterion (message lists what was
        actually seen, as correction hints).
    CriterionSyntaxError
        If the criterion text matches no supported form.
    """
    if not pathways.pathways:
        raise NoCandidatesError("pathway set is empty; nothing to recommend")
    evaluator = evaluator or RuleEvaluator()
    return evaluator.select(pathways, g, criterion)
