import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import RANKING_TOML, mk_graph, mk_record
from retroplan.availability import AvailabilityCatalog
from retroplan.kgraph import KnowledgeGraph
from retroplan.pathways import Pathway, PathwaySet
from retroplan.ranking import (
    CriterionSyntaxError,
    MildnessRamps,
    NoCandidatesError,
    RankingConfig,
    RuleEvaluator,
    ScoreWeights,
    ScreeningConfig,
    UnknownReactionError,
    UnsatisfiableCriterionError,
    load_ranking_config,
    pathway_subscores,
    reaction_passes,
    recommend,
    score_pathways,
    screen,
)


def _ps(root, *id_lists):
    return PathwaySet(root=root, pathways=[Pathway.from_ids(ids) for ids in id_lists])


# ======================================================================
# Screening
# ======================================================================


def test_thresholds_filter_only_reported_values():
    cfg = ScreeningConfig(max_temperature=300.0)
    assert reaction_passes(mk_record("r", ["a"], ["b"], temperature=250.0), cfg)
    assert not reaction_passes(mk_record("r", ["a"], ["b"], temperature=350.0), cfg)
    assert reaction_passes(mk_record("r", ["a"], ["b"]), cfg)  # unreported passes


def test_pressure_duration_yield_thresholds():
    cfg = ScreeningConfig(max_pressure=5.0, max_duration=24.0, min_yield_pct=50.0)
    assert not reaction_passes(mk_record("r", ["a"], ["b"], pressure=6.0), cfg)
    assert not reaction_passes(mk_record("r", ["a"], ["b"], duration=36.0), cfg)
    assert not reaction_passes(mk_record("r", ["a"], ["b"], yield_pct=40.0), cfg)
    assert reaction_passes(mk_record("r", ["a"], ["b"], yield_pct=50.0), cfg)
    assert reaction_passes(mk_record("r", ["a"], ["b"]), cfg)  # yield unknown ok


def test_require_yield_known():
    cfg = ScreeningConfig(require_yield_known=True)
    assert not reaction_passes(mk_record("r", ["a"], ["b"]), cfg)
    assert reaction_passes(mk_record("r", ["a"], ["b"], yield_pct=10.0), cfg)


def test_banned_substances_cover_all_roles():
    cfg = ScreeningConfig(banned_substances={"Phosgene"})
    assert not reaction_passes(mk_record("r", ["phosgene", "x"], ["y"]), cfg)
    assert not reaction_passes(mk_record("r", ["x"], ["phosgene"]), cfg)
    assert not reaction_passes(
        mk_record("r", ["x"], ["y"], catalysts=("phosgene",)), cfg
    )
    assert not reaction_passes(
        mk_record("r", ["x"], ["y"], solvents=(" PHOSGENE ",)), cfg
    )
    assert reaction_passes(mk_record("r", ["x"], ["y"]), cfg)


def test_screening_config_rejects_non_finite():
    with pytest.raises(ValueError):
        ScreeningConfig(max_temperature=math.inf)


def test_screen_keeps_order_and_drops_failing_pathways():
    g = mk_graph(("cool", ["a"], ["t"]), ("hot", ["b"], ["t"]))
    g.reactions["hot"].conditions.temperature = 400.0
    ps = _ps("t", ["hot"], ["cool"])
    survivors = screen(ps, g, ScreeningConfig(max_temperature=300.0))
    assert [p.canonical_order for p in survivors.pathways] == [("cool",)]
    assert survivors.root == "t"


def test_screen_unknown_reaction_raises():
    g = mk_graph(("r1", ["a"], ["t"]))
    with pytest.raises(UnknownReactionError):
        screen(_ps("t", ["ghost"]), g, ScreeningConfig())


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_tightening_a_threshold_never_grows_survivors(data):
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    g = KnowledgeGraph()
    ids = []
    for i in range(8):
        rid = f"r{i}"
        g.add_reaction(
            mk_record(
                rid, [f"x{i}"], [f"y{i}"],
                temperature=rng.choice([None, 50.0, 150.0, 350.0]),
                pressure=rng.choice([None, 1.0, 30.0]),
                duration=rng.choice([None, 5.0, 100.0]),
                yield_pct=rng.choice([None, 20.0, 90.0]),
            )
        )
        ids.append(rid)
    ps = _ps("t", *[rng.sample(ids, rng.randint(1, 4)) for _ in range(6)])
    axis = data.draw(st.sampled_from(["max_temperature", "max_pressure", "max_duration"]))
    loose_v, tight_v = data.draw(
        st.sampled_from([(400.0, 100.0), (200.0, 40.0), (100.0, 1.0)])
    )
    loose = screen(ps, g, ScreeningConfig(**{axis: loose_v}))
    tight = screen(ps, g, ScreeningConfig(**{axis: tight_v}))
    tight_set = {p.reactions for p in tight.pathways}
    loose_set = {p.reactions for p in loose.pathways}
    assert tight_set <= loose_set


# ======================================================================
# Subscores
# ======================================================================


def _sub(pathway_ids, g, **kwargs):
    return pathway_subscores(
        Pathway.from_ids(pathway_ids), g,
        kwargs.get("catalog"), kwargs.get("hazards", set()),
        kwargs.get("ramps", MildnessRamps()),
    )


def test_mildness_ramp_endpoints_and_clamps():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["a"], ["b"], temperature=25.0, pressure=1.0, duration=1.0))
    g.add_reaction(mk_record("r2", ["a"], ["c"], temperature=250.0, pressure=50.0, duration=72.0))
    g.add_reaction(mk_record("r3", ["a"], ["d"], temperature=-10.0, pressure=0.5, duration=0.0))
    g.add_reaction(mk_record("r4", ["a"], ["e"], temperature=137.5))
    assert _sub(["r1"], g)["mildness"] == 1.0
    assert _sub(["r2"], g)["mildness"] == 0.0
    assert _sub(["r3"], g)["mildness"] == 1.0  # clamped below the ramp
    # halfway temperature, missing pressure/duration -> (0.5 + 0.5 + 0.5)/3
    assert _sub(["r4"], g)["mildness"] == pytest.approx(0.5)


def test_mildness_averages_over_reactions():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["a"], ["b"], temperature=25.0, pressure=1.0, duration=1.0))
    g.add_reaction(mk_record("r2", ["b"], ["c"], temperature=250.0, pressure=50.0, duration=72.0))
    assert _sub(["r1", "r2"], g)["mildness"] == pytest.approx(0.5)


def test_custom_ramps():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["a"], ["b"], temperature=100.0))
    ramps = MildnessRamps(temperature=(0.0, 200.0))
    subs = _sub(["r1"], g, ramps=ramps)
    # 0.5 from the custom temperature ramp, 0.5 for each missing component
    assert subs["mildness"] == pytest.approx(0.5)


def test_yield_subscore():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["a"], ["b"], yield_pct=80.0))
    g.add_reaction(mk_record("r2", ["b"], ["c"]))
    assert _sub(["r1"], g)["yield"] == pytest.approx(0.8)
    assert _sub(["r1", "r2"], g)["yield"] == pytest.approx((0.8 + 0.5) / 2)


def test_availability_cost_fraction():
    g = mk_graph(("r1", ["stocked", "exotic"], ["t"]))
    catalog = AvailabilityCatalog(local_names={"stocked"})
    assert _sub(["r1"], g, catalog=catalog)["availability_cost"] == pytest.approx(0.5)
    assert _sub(["r1"], g)["availability_cost"] == 0.5  # no catalog: neutral
    full = AvailabilityCatalog(local_names={"stocked", "exotic"})
    assert _sub(["r1"], g, catalog=full)["availability_cost"] == 1.0


def test_availability_cost_empty_pathway():
    g = KnowledgeGraph()
    subs = pathway_subscores(
        Pathway.from_ids([]), g, AvailabilityCatalog(), set(), MildnessRamps()
    )
    assert subs["availability_cost"] == 1.0  # nothing to buy
    assert subs["step_count"] == 1.0
    assert subs["mildness"] == 0.5 and subs["yield"] == 0.5
    assert subs["safety"] == 1.0


def test_safety_fraction_over_referenced_substances():
    g = KnowledgeGraph()
    g.add_reaction(
        mk_record("r1", ["nitric acid", "durene"], ["x"], solvents=("water",))
    )
    subs = _sub(["r1"], g, hazards={"nitric acid"})
    assert subs["safety"] == pytest.approx(1 - 1 / 4)  # 4 referenced names


def test_step_count_subscore():
    g = mk_graph(("r1", ["a"], ["b"]), ("r2", ["b"], ["c"]), ("r3", ["c"], ["d"]))
    assert _sub(["r1"], g)["step_count"] == pytest.approx(1 / 2)
    assert _sub(["r1", "r2", "r3"], g)["step_count"] == pytest.approx(1 / 4)


def test_subscores_all_in_unit_interval():
    rng = random.Random(3)
    g = KnowledgeGraph()
    ids = []
    for i in range(10):
        rid = f"r{i}"
        g.add_reaction(
            mk_record(
                rid, [f"x{i}", f"w{i}"], [f"y{i}"],
                temperature=rng.choice([None, -50.0, 500.0, 25.0]),
                pressure=rng.choice([None, 0.1, 100.0]),
                duration=rng.choice([None, 0.1, 1000.0]),
                yield_pct=rng.choice([None, 0.0, 100.0]),
            )
        )
        ids.append(rid)
    catalog = AvailabilityCatalog(local_names={"x1", "x2", "w5"})
    for _ in range(30):
        p = Pathway.from_ids(rng.sample(ids, rng.randint(1, 5)))
        subs = pathway_subscores(p, g, catalog, {"x1"}, MildnessRamps())
        assert all(0.0 <= v <= 1.0 for v in subs.values()), subs


# ======================================================================
# Weights and config loading
# ======================================================================


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ScoreWeights(w_mildness=0.5, w_yield=0.5, w_availability_cost=0.5,
                     w_safety=0.0, w_step_count=0.0)
    with pytest.raises(ValueError):
        ScoreWeights(w_mildness=-0.2, w_yield=0.4, w_availability_cost=0.4,
                     w_safety=0.2, w_step_count=0.2)


def test_load_ranking_config_fixture():
    cfg = load_ranking_config(RANKING_TOML)
    assert cfg.screening.max_temperature == 320.0
    assert cfg.screening.banned_substances == {"phosgene"}
    assert not cfg.screening.require_yield_known
    assert cfg.weights.w_mildness == pytest.approx(0.30)
    assert cfg.weights.w_step_count == pytest.approx(0.10)
    assert "nitric acid" in cfg.hazards
    assert cfg.ramps == MildnessRamps()


def test_load_ranking_config_defaults_and_overrides(tmp_path):
    empty = tmp_path / "empty.toml"
    empty.write_text("")
    cfg = load_ranking_config(empty)
    assert cfg.weights == ScoreWeights()
    assert cfg.screening == ScreeningConfig()
    custom = tmp_path / "custom.toml"
    custom.write_text(
        "[weights]\nmildness = 0.5\nyield = 0.5\n\n"
        "[mildness]\ntemperature_ramp = [0.0, 100.0]\n"
    )
    cfg = load_ranking_config(custom)
    assert cfg.weights.w_mildness == 0.5
    assert cfg.weights.w_availability_cost == 0.0  # unspecified -> 0 when table present
    assert cfg.ramps.temperature == (0.0, 100.0)


def test_load_ranking_config_rejects_bad_weights(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[weights]\nmildness = 0.9\n")
    with pytest.raises(ValueError):
        load_ranking_config(bad)


# ======================================================================
# Ranking order
# ======================================================================


def test_score_pathways_orders_by_score_then_length_then_ids():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("good", ["a"], ["t"], yield_pct=100.0))
    g.add_reaction(mk_record("bad", ["b"], ["t"], yield_pct=0.0))
    weights = ScoreWeights(w_mildness=0.0, w_yield=1.0, w_availability_cost=0.0,
                           w_safety=0.0, w_step_count=0.0)
    ranked = score_pathways(_ps("t", ["bad"], ["good"]), g, weights)
    assert [r.pathway.canonical_order for r in ranked] == [("good",), ("bad",)]
    assert ranked[0].score == pytest.approx(1.0)
    assert ranked[1].score == pytest.approx(0.0)


def test_tie_breaks_prefer_fewer_reactions_then_lexicographic():
    g = mk_graph(
        ("a1", ["x"], ["t"]), ("a2", ["y"], ["t"]),
        ("b1", ["w"], ["t"]), ("b2", ["w2"], ["x"]),
    )
    weights = ScoreWeights(w_mildness=1.0, w_yield=0.0, w_availability_cost=0.0,
                           w_safety=0.0, w_step_count=0.0)
    # all conditions unreported -> identical mildness 0.5 everywhere
    ranked = score_pathways(_ps("t", ["a2"], ["a1", "b2"], ["a1"]), g, weights)
    assert [r.pathway.canonical_order for r in ranked] == [
        ("a1",), ("a2",), ("a1", "b2"),
    ]


def test_recommendation_carries_sources_and_rationale():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["a"], ["t"], yield_pct=90.0, source="doi:x"))
    (rec,) = score_pathways(_ps("t", ["r1"]), g, ScoreWeights(),
                            catalog=AvailabilityCatalog(local_names={"a"}))
    assert rec.sources == [{"reaction": "r1", "source": "doi:x"}]
    assert "starting materials: a" in rec.rationale
    assert "1/1 starting materials in local catalog" in rec.rationale
    assert set(rec.per_criterion) == {
        "mildness", "yield", "availability_cost", "safety", "step_count"
    }


# ======================================================================
# Criterion-driven recommendation
# ======================================================================


def _city_graph():
    g = KnowledgeGraph()
    g.add_reaction(mk_record("r1", ["oda", "pmda"], ["paa"], source="smith2019"))
    g.add_reaction(mk_record("r2", ["paa"], ["pi"], yield_pct=95.0, source="jones2021"))
    g.add_reaction(mk_record("r3", ["bpda"], ["pi"], yield_pct=40.0, source="kim2020"))
    g.compounds["oda"].aliases.add("4,4'-oxydianiline")
    return g


def test_initial_reactants_criterion_selects_matching_pathway():
    g = _city_graph()
    ps = _ps("pi", ["r1", "r2"], ["r3"])
    rec = recommend(ps, g, "initial reactants include oda", RuleEvaluator())
    assert rec.pathway.reactions == frozenset({"r1", "r2"})


def test_criterion_matches_through_aliases_and_quotes():
    g = _city_graph()
    ps = _ps("pi", ["r1", "r2"], ["r3"])
    rec = recommend(
        ps, g, "the initial reactants must include \"4,4'-Oxydianiline\"", RuleEvaluator()
    )
    assert rec.pathway.reactions == frozenset({"r1", "r2"})


def test_source_criterion():
    g = _city_graph()
    ps = _ps("pi", ["r1", "r2"], ["r3"])
    rec = recommend(ps, g, "include reaction from source kim", RuleEvaluator())
    assert rec.pathway.reactions == frozenset({"r3"})


def test_empty_criterion_falls_back_to_score_order():
    g = _city_graph()
    ps = _ps("pi", ["r1", "r2"], ["r3"])
    best = recommend(ps, g, None, RuleEvaluator())
    by_score = score_pathways(ps, g, ScoreWeights())
    assert best.pathway == by_score[0].pathway


def test_unsatisfiable_criterion_lists_what_was_seen():
    g = _city_graph()
    ps = _ps("pi", ["r3"])
    with pytest.raises(UnsatisfiableCriterionError) as exc:
        recommend(ps, g, "initial reactants include unobtainium", RuleEvaluator())
    assert "bpda" in str(exc.value)


def test_unknown_criterion_form_is_a_syntax_error():
    g = _city_graph()
    with pytest.raises(CriterionSyntaxError):
        recommend(_ps("pi", ["r3"]), g, "maximize vibes", RuleEvaluator())


def test_no_candidates():
    g = _city_graph()
    with pytest.raises(NoCandidatesError):
        recommend(_ps("pi"), g, None, RuleEvaluator())


def test_rule_evaluator_scores_only_matching_subset():
    g = _city_graph()
    ps = _ps("pi", ["r1", "r2"], ["r3"])
    # r3 scores lower on yield, but it is the only kim2020 pathway
    weights = ScoreWeights(w_mildness=0.0, w_yield=1.0, w_availability_cost=0.0,
                           w_safety=0.0, w_step_count=0.0)
    rec = recommend(ps, g, "include reaction from source kim2020", RuleEvaluator(weights=weights))
    assert rec.pathway.reactions == frozenset({"r3"})


def test_ranking_config_default_shape():
    cfg = RankingConfig()
    assert cfg.weights == ScoreWeights()
    assert cfg.hazards == set()
