"""KG-guided repair of unreachable reasoning paths.

When a generated path does not execute on the graph, a beam search walks
outward from the topic entity, keeping only relation chains that exist in
the graph. One blueprint call sketches the reasoning steps; at each depth
the candidate relations are scored against the blueprint, pruned, scored
again against the question, and a selection call picks the paths to keep.
Total LLM calls for depth d are therefore at most d + 1.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import EmptyBlueprint, RepairFailed
from .kg import EntityId, KnowledgeGraph
from .prompts import blueprint_prompt, selection_prompt
from .providers import EmbeddingProvider, LlmProvider

log = logging.getLogger(__name__)

_STEP_RE = re.compile(r"^\s*#\d+\s*(.+?)\s*$")


@dataclass(frozen=True)
class Blueprint:
    steps: tuple[str, ...]


@dataclass(frozen=True)
class PartialPath:
    relations: tuple[str, ...]
    score: float = 0.0


@dataclass(frozen=True)
class RepairConfig:
    beam_width: int = 3       # paths kept per depth
    relation_filter: int = 4  # relations kept per blueprint step
    path_filter: int = 10     # candidates shown to the selector
    max_depth_cap: int = 4


def linearize(relations: tuple[str, ...]) -> str:
    return " -> ".join(relations)


def generate_blueprint(llm: LlmProvider, question: str) -> Blueprint:
    """One LLM call producing numbered reasoning steps (#1, #2, ...)."""
    reply, _ = llm.complete(blueprint_prompt(question))
    steps = []
    for line in reply.splitlines():
        m = _STEP_RE.match(line)
        if m:
            steps.append(m.group(1))
    if not steps:
        raise EmptyBlueprint(f"no numbered steps in reply: {reply[:80]!r}")
    return Blueprint(tuple(steps))


def expand_beam(
    g: KnowledgeGraph,
    s1: EntityId,
    beam: list[PartialPath],
    blueprint: Blueprint,
    emb: EmbeddingProvider,
    x: int,
    trace: list | None = None,
) -> list[PartialPath]:
    """Extend each beam path by one relation that exists at its frontier.

    Per blueprint step the x best-scoring relations survive; the union
    over steps is kept, deduplicated across beam paths. Paths whose
    frontier has no outgoing relation are dead ends and are dropped.
    Every returned candidate reaches a non-empty frontier by construction.
    """
    candidates: dict[tuple[str, ...], None] = {}
    for pp in beam:
        frontier = [n for n in g.reach(s1, pp.relations) if isinstance(n, str)]
        rels = g.outgoing_relations(frontier)
        if not rels:
            log.info("dead end at %r", linearize(pp.relations))
            if trace is not None:
                trace.append({"event": "dead_end", "path": linearize(pp.relations)})
            continue
        keep: set[str] = set()
        for step in blueprint.steps:
            ranked = sorted(rels, key=lambda r: (-emb.similarity(step, r), r))
            keep.update(ranked[:x])
        for rel in sorted(keep):
            candidates.setdefault(pp.relations + (rel,), None)
    return [PartialPath(rels) for rels in candidates]


def filter_paths(
    question: str,
    cands: list[PartialPath],
    emb: EmbeddingProvider,
    y: int,
) -> list[PartialPath]:
    """Keep the y candidates most similar to the question, best first.

    Ties break on the linearized path text so the ranking is stable
    regardless of input order.
    """
    scored = [
        PartialPath(p.relations, emb.similarity(question, linearize(p.relations)))
        for p in cands
    ]
    scored.sort(key=lambda p: (-p.score, linearize(p.relations)))
    return scored[:y]


_PATH_REF_RE = re.compile(r"[Pp]ath\s+(\d+)")


def select_paths(
    llm: LlmProvider,
    question: str,
    s1_names: str,
    cands: list[PartialPath],
    n: int,
) -> tuple[list[PartialPath], str]:
    """One LLM call choosing up to n of the candidate paths.

    The reply is parsed for "Path k" references in mention order. Any
    reference outside 1..len(cands), or a reply with no reference at all,
    falls back to the top n candidates by score.
    """
    lines = [
        f"Path {k}: {s1_names} -> {linearize(p.relations)}"
        for k, p in enumerate(cands, start=1)
    ]
    prompt = selection_prompt(question, s1_names, lines, n)
    reply, _ = llm.complete(prompt)

    refs = [int(m) for m in _PATH_REF_RE.findall(reply)]
    chosen: list[PartialPath] = []
    seen: set[int] = set()
    bad = not refs
    for k in refs:
        if not 1 <= k <= len(cands):
            bad = True
            break
        if k in seen:
            continue
        seen.add(k)
        if len(chosen) < n:
            chosen.append(cands[k - 1])
    if bad:
        log.warning("selection fallback, reply was %r", reply[:80])
        chosen = cands[:n]
    return chosen, reply


def repair(
    g: KnowledgeGraph,
    question: str,
    s1: EntityId,
    depth: int,
    cfg: RepairConfig,
    llm: LlmProvider,
    emb: EmbeddingProvider,
    trace: list | None = None,
) -> tuple[str, ...]:
    """Search the graph for an executable relation chain of the given depth.

    The depth is capped by cfg.max_depth_cap. At every depth below the
    target the selector keeps up to beam_width paths; at the final depth
    it keeps exactly one, which is returned. Raises RepairFailed when all
    beam paths dead-end.
    """
    if depth < 1:
        raise ValueError("repair depth must be at least 1")
    d_eff = min(depth, cfg.max_depth_cap)

    blueprint = generate_blueprint(llm, question)
    if trace is not None:
        trace.append({"event": "blueprint", "steps": list(blueprint.steps)})

    beam = [PartialPath(())]
    for level in range(1, d_eff + 1):
        cands = expand_beam(g, s1, beam, blueprint, emb, cfg.relation_filter, trace)
        if not cands:
            raise RepairFailed(level, "all beam paths dead-ended")
        cands = filter_paths(question, cands, emb, cfg.path_filter)
        n = 1 if level == d_eff else cfg.beam_width
        before = [linearize(p.relations) for p in beam]
        chosen, reply = select_paths(llm, question, s1, cands, n)
        if trace is not None:
            trace.append(
                {
                    "event": "depth",
                    "depth": level,
                    "beam": before,
                    "candidates": [linearize(p.relations) for p in cands],
                    "llm_reply": reply,
                    "chosen": [linearize(p.relations) for p in chosen],
                }
            )
        beam = chosen
    return beam[0].relations
