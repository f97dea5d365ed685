"""Command-line interface.

Exit codes: 0 success, 1 partial failures (a record or block failed but
the run completed), 2 configuration or input/output problems.
"""

from __future__ import annotations

import json
import random
import re
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import config as cfg
from .errors import (
    ConfigError,
    DatasetError,
    KgRelayError,
    RepairFailed,
)
from .evaluation import load_dataset, run_batch, write_results, write_summary
from .kg import load_tsv, node_sort_key, node_text
from .pipeline import answer_question, run_stage2_only
from .reasoning import (
    EntityMatch,
    ground_reasoning_path,
    parse_reasoning_path,
    serialize_reasoning_path,
)
from .repair import linearize, repair
from .sparql import (
    parse_sparql,
    path_to_sparql,
    render_sparql,
    round_trip_check,
    sparql_to_path,
)


def _die(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_graph(settings):
    if not settings.kg:
        _die("no knowledge graph configured (use --kg or the kg setting)", 2)
    try:
        return load_tsv(settings.kg)
    except (OSError, KgRelayError) as exc:
        _die(f"cannot load graph: {exc}", 2)


@click.group()
@click.option("--config", "config_path", default=None, metavar="FILE",
              help="Flat key = value config file.")
@click.option("--kg", "kg_path", default=None, metavar="TSV",
              help="Knowledge graph TSV file.")
@click.option("--workers", type=int, default=None, help="Worker threads for eval.")
@click.option("--seed", type=int, default=None, help="Random seed (default 42).")
@click.option("--trace", is_flag=True, help="Emit per-step trace events.")
@click.pass_context
def main(ctx, config_path, kg_path, workers, seed, trace):
    """Knowledge-graph question answering with path repair."""
    overrides = {}
    if kg_path is not None:
        overrides["kg"] = kg_path
    if workers is not None:
        overrides["workers"] = workers
    if seed is not None:
        overrides["seed"] = seed
    try:
        settings = cfg.load_settings(config_path, overrides)
    except ConfigError as exc:
        _die(str(exc), 2)
    # All tie-breaks in the pipeline are lexicographic, so the seed only
    # matters to code that opts into randomness.
    random.seed(settings.seed)
    ctx.obj = {"settings": settings, "trace": trace}


@main.command("load-check")
@click.pass_context
def load_check(ctx):
    """Load the graph and print basic counts."""
    g = _load_graph(ctx.obj["settings"])
    click.echo(f"triples    {len(g.triples)}")
    click.echo(f"entities   {len(g.entities)}")
    click.echo(f"relations  {len(g.relations)}")
    click.echo(f"aliases    {len(g.aliases)}")


def _print_trace(events):
    for event in events:
        click.echo(json.dumps(event, ensure_ascii=False), err=True)


@main.command()
@click.argument("question")
@click.option("--stage2-only", is_flag=True,
              help="Skip generation; search the graph directly.")
@click.option("--topic", default=None, help="Topic entity for --stage2-only.")
@click.option("--depth", type=int, default=None, help="Search depth for --stage2-only.")
@click.pass_context
def ask(ctx, question, stage2_only, topic, depth):
    """Answer one question."""
    settings = ctx.obj["settings"]
    g = _load_graph(settings)
    try:
        repair_cfg = cfg.repair_config(settings)
        factory = cfg.provider_factory(settings, need_specialized=not stage2_only)
        specialized, general, embedder = factory()
    except (ConfigError, KgRelayError) as exc:
        _die(str(exc), 2)
    prices = cfg.price_table(settings)

    if stage2_only:
        if topic is None or depth is None:
            _die("--stage2-only needs --topic and --depth", 2)
        result = run_stage2_only(
            g, question, topic, depth, general, embedder, repair_cfg, prices
        )
    else:
        result = answer_question(
            g, question, specialized, general, embedder, repair_cfg, prices,
            relax=settings.relaxation,
        )

    if ctx.obj["trace"]:
        _print_trace(result.trace)
    click.echo(f"route: {result.route.value}")
    click.echo(f"relaxation_tier: {result.answers.relaxation_tier}")
    if result.crp_final is not None:
        click.echo("path:")
        for line in serialize_reasoning_path(result.crp_final).splitlines():
            click.echo(f"  {line}")
    answers = sorted(result.answers.answers, key=node_sort_key)
    click.echo(f"answers ({len(answers)}):")
    for node in answers:
        click.echo(f"  {node_text(node)}")
    if result.error:
        click.echo(f"error: {result.error}", err=True)
        sys.exit(1)


@main.command("eval")
@click.argument("dataset", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for results.jsonl and summary.json.")
@click.option("--stage2-only", is_flag=True, help="Repair-only ablation run.")
@click.pass_context
def eval_cmd(ctx, dataset, out_dir, stage2_only):
    """Run the pipeline over a JSONL dataset and score it."""
    settings = ctx.obj["settings"]
    g = _load_graph(settings)
    try:
        records = load_dataset(dataset)
        repair_cfg = cfg.repair_config(settings)
        factory = cfg.provider_factory(settings, need_specialized=not stage2_only)
    except (DatasetError, ConfigError) as exc:
        _die(str(exc), 2)

    report, rows = run_batch(
        g, records, factory, repair_cfg, cfg.price_table(settings),
        workers=settings.workers, relax=settings.relaxation,
        stage2_only=stage2_only, include_trace=ctx.obj["trace"],
    )
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_results(out / "results.jsonl", rows)
        write_summary(out / "summary.json", report)
    except OSError as exc:
        _die(f"cannot write output: {exc}", 2)
    click.echo(report.format_table())
    click.echo(f"\nwrote {out / 'results.jsonl'} and {out / 'summary.json'}")
    sys.exit(1 if report.flagged else 0)


def _read_blocks(path: str) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _die(f"cannot read {path}: {exc}", 2)
    kept = "\n".join(
        line for line in text.splitlines() if not line.lstrip().startswith("#")
    )
    return [b.strip() for b in re.split(r"\n\s*\n", kept) if b.strip()]


@main.command()
@click.argument("input_file", type=click.Path())
@click.option("--direction", type=click.Choice(
    ["path-to-query", "query-to-path", "roundtrip"]), required=True)
@click.pass_context
def convert(ctx, input_file, direction):
    """Convert between reasoning paths and queries.

    The input file holds blocks separated by blank lines; lines starting
    with # are comments. path-to-query grounds topic surfaces through the
    configured graph when one is given, else treats them as symbols.
    """
    settings = ctx.obj["settings"]
    blocks = _read_blocks(input_file)
    if not blocks:
        _die("no blocks in input", 2)
    g = None
    if direction == "path-to-query" and settings.kg:
        g = _load_graph(settings)

    failures = 0
    for idx, block in enumerate(blocks, start=1):
        try:
            if direction == "path-to-query":
                rp = parse_reasoning_path(block)
                if g is not None:
                    rp = ground_reasoning_path(g, rp)
                else:
                    fixed = tuple(
                        replace(c, value=replace(c.value, entity=c.value.surface))
                        if isinstance(c.value, EntityMatch) and c.value.entity is None
                        else c
                        for c in rp.constraints
                    )
                    rp = replace(rp, topic_entity=rp.topic_surface, constraints=fixed)
                click.echo(render_sparql(path_to_sparql(rp)))
                click.echo("")
            elif direction == "query-to-path":
                rp = sparql_to_path(parse_sparql(block))
                click.echo(serialize_reasoning_path(rp))
                click.echo("")
            else:
                report = round_trip_check(block)
                if report.ok:
                    click.echo(f"block {idx}: ok")
                else:
                    failures += 1
                    click.echo(f"block {idx}: FAIL ({report.error})")
        except KgRelayError as exc:
            failures += 1
            click.echo(f"block {idx}: {type(exc).__name__}: {exc}", err=True)
    if failures:
        sys.exit(1)


@main.command("repair-demo")
@click.argument("question")
@click.option("--topic", required=True, help="Start entity surface form.")
@click.option("--depth", type=int, required=True, help="Target path depth.")
@click.pass_context
def repair_demo(ctx, question, topic, depth):
    """Run the repair search alone and show each step."""
    settings = ctx.obj["settings"]
    g = _load_graph(settings)
    try:
        repair_cfg = cfg.repair_config(settings)
        factory = cfg.provider_factory(settings, need_specialized=False)
        _, general, embedder = factory()
        start = g.ground_entity(topic)
    except (ConfigError, KgRelayError) as exc:
        _die(str(exc), 2)

    trace: list = []
    try:
        path = repair(g, question, start, depth, repair_cfg, general, embedder, trace)
    except KgRelayError as exc:
        _print_trace(trace)
        click.echo(f"repair failed: {exc}", err=True)
        sys.exit(1)
    _print_trace(trace)
    click.echo(f"path: {linearize(path)}")
    frontier = sorted(g.reach(start, path), key=node_sort_key)
    click.echo(f"reaches ({len(frontier)}):")
    for node in frontier:
        click.echo(f"  {node_text(node)}")


if __name__ == "__main__":
    main()
