"""Command-line pipeline: ingest → plan → pathways → rank, plus export.

Stages communicate through files so each step is independently
repeatable and cacheable; every stage writes a run manifest with
SHA-256 digests of its inputs and outputs.  With fixture providers the
whole pipeline is deterministic — byte-identical outputs on rerun.

Exit codes: 0 success, 1 planning/ranking failure (no tree, nothing
recommendable), 2 usage errors (bad flags, malformed input files),
3 provider failures.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import sys
from pathlib import Path

import click

from . import __version__
from .availability import (
    AvailabilityCache,
    AvailabilityCatalog,
    AvailabilityChecker,
    StructureTable,
    load_catalog_dir,
)
from .extraction import (
    FixtureLiteratureProvider,
    LiteratureQuery,
    ProviderError,
    SynonymAligner,
    apply_alignments,
    parse_records,
    suggest_alignments,
)
from .kgraph import GraphFormatError, KnowledgeGraph, deserialize, serialize
from .manifest import build_manifest, write_manifest
from .pathways import (
    count_pathways_with_stats,
    enumerate_pathways,
    pathways_from_json,
    pathways_text,
    pathways_to_json,
)
from .ranking import (
    CriterionSyntaxError,
    NoCandidatesError,
    RankingConfig,
    Recommendation,
    RuleEvaluator,
    UnsatisfiableCriterionError,
    load_ranking_config,
    recommend,
    score_pathways,
    screen,
)
from .retrotree import (
    ExpansionSources,
    PlanConfig,
    PlanLimitError,
    RetroNode,
    TreeFormatError,
    build_tree,
    expand_plan,
    parse_outcome,
    serialize_outcome,
)

EXIT_PLANNING_FAILURE = 1
EXIT_PROVIDER_FAILURE = 3


def _handle_errors(fn):
    """Map domain errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProviderError as exc:
            click.echo(f"provider failure: {exc}", err=True)
            sys.exit(EXIT_PROVIDER_FAILURE)
        except (GraphFormatError, TreeFormatError) as exc:
            raise click.UsageError(str(exc))
        except PlanLimitError as exc:
            click.echo(f"planning aborted: {exc}", err=True)
            click.echo(f"partial stats: {exc.stats.as_dict()}", err=True)
            sys.exit(EXIT_PLANNING_FAILURE)

    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="retroplan")
def cli() -> None:
    """Retrosynthesis route planning over literature-derived reactions."""


# ======================================================================
# ingest
# ======================================================================


@cli.command()
@click.option("--corpus", type=click.Path(exists=True, file_okay=False), required=True,
              help="Corpus directory (index.json + docs/*.jsonl).")
@click.option("--target", default=None,
              help="Ingest only documents indexed under this compound; default: whole corpus.")
@click.option("--max-articles", default=25, show_default=True,
              help="Article cap when --target is given.")
@click.option("--synonyms", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON synonym table for entity alignment.")
@click.option("--align/--no-align", default=True, show_default=True)
@click.option("--kg", "out", type=click.Path(dir_okay=False), default="kg.json",
              show_default=True, help="Output knowledge-graph file.")
@_handle_errors
def ingest(corpus: str, target: str | None, max_articles: int, synonyms: str | None,
           align: bool, out: str) -> None:
    """Build a knowledge graph from a literature corpus."""
    provider = FixtureLiteratureProvider(corpus)
    if target:
        docs = provider.retrieve(LiteratureQuery(compound=target, max_articles=max_articles))
    else:
        docs = [provider.load_document(d) for d in provider.all_document_ids()]

    g = KnowledgeGraph()
    n_records = 0
    n_errors = 0
    for raw in docs:
        records, errors = parse_records(raw)
        for err in errors:
            click.echo(f"{raw.document_id}: {err}", err=True)
        n_errors += len(errors)
        for rec in records:
            g.add_reaction(rec)
            n_records += 1
    if docs and n_records == 0 and n_errors > 0:
        raise ProviderError("no document yielded a single parseable record")

    merges = 0
    if align:
        aligner = SynonymAligner.from_file(synonyms) if synonyms else SynonymAligner()
        suggestions = suggest_alignments(g, aligner)
        rejected = apply_alignments(g, suggestions)
        merges = len(suggestions)
        for name, ids in sorted(rejected.items()):
            click.echo(f"alignment into {name!r} rejected reactions: {', '.join(ids)}", err=True)

    Path(out).write_bytes(serialize(g))
    inputs = [Path(corpus) / "index.json"]
    inputs += sorted((Path(corpus) / "docs").glob("*.jsonl"))
    if synonyms:
        inputs.append(Path(synonyms))
    write_manifest(
        out + ".manifest.json",
        build_manifest(
            "ingest",
            {"target": target, "max_articles": max_articles, "align": align},
            inputs=inputs,
            outputs=[out],
            stats={
                "documents": len(docs),
                "records": n_records,
                "parse_errors": n_errors,
                "merges": merges,
                "compounds": len(g.compounds),
                "reactions": len(g.reactions),
            },
        ),
    )
    click.echo(
        f"ingested {len(docs)} document(s): {len(g.reactions)} reactions over "
        f"{len(g.compounds)} compounds -> {out}"
        + (f" ({n_errors} malformed line(s) skipped)" if n_errors else "")
    )


# ======================================================================
# plan
# ======================================================================


def _load_availability(catalog_dir: str | None, cache_path: str | None) -> AvailabilityChecker:
    if catalog_dir:
        structures = None
        table = Path(catalog_dir) / "structures.json"
        if table.exists():
            structures = StructureTable.from_file(table)
        catalog = load_catalog_dir(catalog_dir, structures)
    else:
        structures = None
        catalog = AvailabilityCatalog()
    cache = AvailabilityCache(cache_path, catalog, structures) if cache_path else None
    return AvailabilityChecker(catalog, cache=cache, structures=structures)


@cli.command()
@click.argument("target")
@click.option("--kg", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--catalog", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory with names.txt / polymers.txt / structures.json.")
@click.option("--cache", type=click.Path(dir_okay=False), default=None,
              help="Availability cache file (appended to across runs).")
@click.option("--max-depth", default=10, show_default=True)
@click.option("--max-nodes", default=100000, show_default=True)
@click.option("--expand/--no-expand", default=False, show_default=True,
              help="Fetch extra literature for dead-end compounds.")
@click.option("--budget", default=5, show_default=True,
              help="Additional articles per dead-end compound.")
@click.option("--rounds", default=5, show_default=True, help="Maximum expansion rounds.")
@click.option("--broaden/--no-broaden", default=True, show_default=True,
              help="Keep expanding dead ends after a tree is found.")
@click.option("--corpus", type=click.Path(exists=True, file_okay=False), default=None,
              help="Corpus directory for expansion retrieval (required with --expand).")
@click.option("--synonyms", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "-o", type=click.Path(dir_okay=False), default="tree.json", show_default=True)
@click.option("--kg-out", type=click.Path(dir_okay=False), default=None,
              help="Where to write the literature-enriched graph (with --expand); "
                   "defaults to <out base>.kg.json.")
@_handle_errors
def plan(target: str, kg: str, catalog: str | None, cache: str | None, max_depth: int,
         max_nodes: int, expand: bool, budget: int, rounds: int, broaden: bool,
         corpus: str | None, synonyms: str | None, out: str, kg_out: str | None) -> None:
    """Build the retrosynthetic tree for TARGET."""
    g = deserialize(Path(kg).read_bytes())
    checker = _load_availability(catalog, cache)
    cfg = PlanConfig(
        max_depth=max_depth,
        max_nodes=max_nodes,
        expansion_budget_per_compound=budget,
        max_expansion_rounds=rounds,
        broaden_successful=broaden,
    )
    resolved = g.resolve_name(target) or target

    inputs = [kg]
    if expand:
        if corpus is None:
            raise click.UsageError("--expand requires --corpus")
        sources = ExpansionSources(
            literature=FixtureLiteratureProvider(corpus),
            alignment=SynonymAligner.from_file(synonyms) if synonyms else SynonymAligner(),
        )
        outcome, g = expand_plan(resolved, g, checker, sources, cfg)
        resolved = g.resolve_name(resolved) or resolved
        if kg_out is None:
            kg_out = str(Path(out).with_suffix("")) + ".kg.json"
        Path(kg_out).write_bytes(serialize(g))
        inputs.append(str(Path(corpus) / "index.json"))
    else:
        outcome = build_tree(resolved, g, checker, cfg)

    for compound, message in sorted(outcome.provider_errors.items()):
        click.echo(f"expansion skipped for {compound!r}: {message}", err=True)

    if outcome.tree is None:
        click.echo(f"no synthesis route found for {resolved!r}", err=True)
        if outcome.dead_ends:
            click.echo("dead ends: " + ", ".join(sorted(outcome.dead_ends)), err=True)
        sys.exit(EXIT_PLANNING_FAILURE)

    Path(out).write_bytes(serialize_outcome(resolved, outcome))
    outputs = [out] + ([kg_out] if expand and kg_out else [])
    write_manifest(
        out + ".manifest.json",
        build_manifest(
            "plan",
            {
                "target": target,
                "max_depth": max_depth,
                "max_nodes": max_nodes,
                "expand": expand,
                "budget": budget,
                "rounds": rounds,
                "broaden": broaden,
            },
            inputs=inputs,
            outputs=outputs,
            stats=outcome.stats.as_dict(),
        ),
    )
    s = outcome.stats
    click.echo(
        f"tree for {resolved!r}: {s.nodes_retained} nodes, {s.reactions_used} reactions"
        f" ({s.expansion_rounds} expansion round(s)) -> {out}"
    )


# ======================================================================
# pathways
# ======================================================================


@cli.command()
@click.option("--tree", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kg", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Graph file supplying the reaction records to embed.")
@click.option("--limit", type=int, default=None,
              help="Keep at most this many pathways (sets the truncated flag).")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default="pathways.json", show_default=True)
@click.option("--text", type=click.Path(dir_okay=False), default=None,
              help="Also write a one-pathway-per-line text export.")
@_handle_errors
def pathways(tree: str, kg: str, limit: int | None, out: str, text: str | None) -> None:
    """Enumerate all reaction pathways encoded by a tree file."""
    target, outcome = parse_outcome(Path(tree).read_bytes())
    if outcome.tree is None:
        click.echo(f"{tree}: no tree to enumerate (planning failed)", err=True)
        sys.exit(EXIT_PLANNING_FAILURE)
    g = deserialize(Path(kg).read_bytes())
    ps = enumerate_pathways(outcome.tree, limit=limit)
    total, used_formula = count_pathways_with_stats(outcome.tree)
    Path(out).write_bytes(pathways_to_json(ps, g))
    outputs = [out]
    if text:
        Path(text).write_text(pathways_text(ps), encoding="utf-8")
        outputs.append(text)
    write_manifest(
        out + ".manifest.json",
        build_manifest(
            "pathways",
            {"limit": limit},
            inputs=[tree, kg],
            outputs=outputs,
            stats={
                "pathways": len(ps.pathways),
                "total": total,
                "count_by_formula": used_formula,
                "truncated": ps.truncated,
            },
        ),
    )
    suffix = " (truncated)" if ps.truncated else ""
    click.echo(f"{len(ps.pathways)} pathway(s) for {target!r}{suffix} -> {out}")


# ======================================================================
# rank
# ======================================================================


def _report_text(root: str, criterion: str | None, before: int, after: int,
                 rec: Recommendation, ranked: list[Recommendation]) -> str:
    buf = io.StringIO()
    buf.write("pathway ranking report\n")
    buf.write("======================\n")
    buf.write(f"root: {root}\n")
    buf.write(f"pathways: {before} screened -> {after} surviving\n")
    buf.write(f"criterion: {criterion or '(none)'}\n\n")
    buf.write("recommended pathway: " + (",".join(rec.pathway.canonical_order) or "(empty)") + "\n")
    buf.write(f"score: {rec.score:.4f}\n")
    buf.write(f"rationale: {rec.rationale}\n")
    buf.write("sources:\n")
    for entry in rec.sources:
        buf.write(f"  {entry['reaction']} <- {entry['source']}\n")
    buf.write("\nranking:\n")
    for i, r in enumerate(ranked, start=1):
        ids = ",".join(r.pathway.canonical_order) or "(empty)"
        buf.write(f"  {i:3d}. score {r.score:.4f}  [{len(r.pathway)} reaction(s)]  {ids}\n")
    return buf.getvalue()


def _rec_to_obj(r: Recommendation) -> dict:
    return {
        "reactions": list(r.pathway.canonical_order),
        "score": r.score,
        "per_criterion": r.per_criterion,
        "rationale": r.rationale,
        "sources": r.sources,
    }


@cli.command()
@click.option("--pathways", "pathways_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kg", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Graph file; defaults to the records embedded in the pathway file.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Ranking config (TOML: screening thresholds, weights, hazards).")
@click.option("--catalog", type=click.Path(exists=True, file_okay=False), default=None,
              help="Catalog directory for the availability subscore.")
@click.option("--criterion", default=None,
              help="e.g. \"initial reactants include 4,4'-oxydianiline\".")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@_handle_errors
def rank(pathways_path: str, kg: str | None, config_path: str | None, catalog: str | None,
         criterion: str | None, out_dir: str) -> None:
    """Screen, score, and recommend pathways; write report files."""
    ps, embedded = pathways_from_json(Path(pathways_path).read_bytes())
    g = deserialize(Path(kg).read_bytes()) if kg else embedded
    rc = load_ranking_config(config_path) if config_path else RankingConfig()
    cat = load_catalog_dir(catalog) if catalog else None

    before = len(ps.pathways)
    survivors = screen(ps, g, rc.screening)
    if not survivors.pathways:
        click.echo("no pathway survives screening", err=True)
        sys.exit(EXIT_PLANNING_FAILURE)

    ranked = score_pathways(survivors, g, rc.weights, catalog=cat, hazards=rc.hazards, ramps=rc.ramps)
    evaluator = RuleEvaluator(weights=rc.weights, catalog=cat, hazards=rc.hazards, ramps=rc.ramps)
    try:
        rec = recommend(survivors, g, criterion, evaluator)
    except CriterionSyntaxError as exc:
        raise click.UsageError(str(exc))
    except (NoCandidatesError, UnsatisfiableCriterionError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_PLANNING_FAILURE)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_txt = out / "report.txt"
    report_json = out / "report.json"
    scores_csv = out / "scores.csv"
    scores_png = out / "scores.png"

    report_txt.write_text(
        _report_text(ps.root, criterion, before, len(survivors.pathways), rec, ranked),
        encoding="utf-8",
    )
    report_doc = {
        "root": ps.root,
        "criterion": criterion,
        "screened": before,
        "surviving": len(survivors.pathways),
        "truncated": ps.truncated,
        "recommendation": _rec_to_obj(rec),
        "ranking": [_rec_to_obj(r) for r in ranked],
    }
    report_json.write_bytes(
        (json.dumps(report_doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    )

    with scores_csv.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["rank", "score", "n_reactions", "mildness", "yield", "availability_cost",
             "safety", "step_count", "reactions"]
        )
        for i, r in enumerate(ranked, start=1):
            writer.writerow(
                [
                    i,
                    f"{r.score:.6f}",
                    len(r.pathway),
                    *(f"{r.per_criterion[k]:.6f}" for k in
                      ("mildness", "yield", "availability_cost", "safety", "step_count")),
                    "+".join(r.pathway.canonical_order),
                ]
            )

    from .figures import render_score_figure  # deferred: pulls in matplotlib

    render_score_figure(ranked, rc.weights, scores_png)

    inputs = [pathways_path] + ([kg] if kg else []) + ([config_path] if config_path else [])
    write_manifest(
        str(out / "report.manifest.json"),
        build_manifest(
            "rank",
            {"criterion": criterion, "config": config_path and Path(config_path).name},
            inputs=inputs,
            outputs=[report_txt, report_json, scores_csv, scores_png],
            stats={"screened": before, "surviving": len(survivors.pathways)},
        ),
    )
    click.echo(
        f"recommended: {','.join(rec.pathway.canonical_order) or '(empty)'} "
        f"(score {rec.score:.4f}) -> {report_txt}"
    )


# ======================================================================
# export
# ======================================================================


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def tree_to_dot(root: RetroNode, dedup_display: bool = False) -> str:
    """Render a tree as DOT.  ``dedup_display`` hides repeated same-name
    children under each node — presentation only, the tree itself is
    never altered."""
    lines = ["digraph retroplan {", "  rankdir=TB;"]
    counter = 0

    def walk(node: RetroNode, parent_id: str | None) -> None:
        nonlocal counter
        node_id = f"n{counter}"
        counter += 1
        shape = "box" if node.is_leaf else "ellipse"
        lines.append(f'  {node_id} [label="{_dot_escape(node.compound)}", shape={shape}];')
        if parent_id is not None:
            lines.append(
                f'  {parent_id} -> {node_id} [label="{_dot_escape(node.via_reaction or "")}"];'
            )
        children = node.children
        if dedup_display:
            seen: set[str] = set()
            kept = []
            for child in children:
                if child.compound not in seen:
                    seen.add(child.compound)
                    kept.append(child)
            children = kept
        for child in children:
            walk(child, node_id)

    walk(root, None)
    lines.append("}")
    return "\n".join(lines) + "\n"


def kg_to_dot(g: KnowledgeGraph) -> str:
    """Render a knowledge graph as DOT: reactant → product edges labeled
    with reaction ids."""
    lines = ["digraph reactions {", "  rankdir=LR;"]
    ids = {}
    for i, name in enumerate(sorted(g.compounds)):
        ids[name] = f"c{i}"
        lines.append(f'  c{i} [label="{_dot_escape(name)}"];')
    for rid in sorted(g.reactions):
        rec = g.reactions[rid]
        for reactant in rec.reactants:
            for product in rec.products:
                lines.append(
                    f'  {ids[reactant]} -> {ids[product]} [label="{_dot_escape(rid)}"];'
                )
    lines.append("}")
    return "\n".join(lines) + "\n"


@cli.command()
@click.option("--tree", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--kg", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["dot", "structured"]), default="dot",
              show_default=True)
@click.option("--dedup-display", is_flag=True, default=False,
              help="Hide duplicate same-name children per node (DOT tree export only).")
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@_handle_errors
def export(tree: str | None, kg: str | None, fmt: str, dedup_display: bool, out: str) -> None:
    """Export a tree or graph for visualization or round-tripping."""
    if (tree is None) == (kg is None):
        raise click.UsageError("pass exactly one of --tree / --kg")
    if tree:
        target, outcome = parse_outcome(Path(tree).read_bytes())
        if outcome.tree is None:
            click.echo(f"{tree}: no tree to export", err=True)
            sys.exit(EXIT_PLANNING_FAILURE)
        if fmt == "dot":
            Path(out).write_text(tree_to_dot(outcome.tree, dedup_display), encoding="utf-8")
        else:
            Path(out).write_bytes(serialize_outcome(target, outcome))
    else:
        g = deserialize(Path(kg).read_bytes())
        if fmt == "dot":
            Path(out).write_text(kg_to_dot(g), encoding="utf-8")
        else:
            Path(out).write_bytes(serialize(g))
    click.echo(f"wrote {out}")


def main() -> None:
    cli(prog_name="retroplan")


if __name__ == "__main__":
    main()
