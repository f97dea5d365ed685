"""Execution of reasoning paths and subset queries over a knowledge graph.

Both executors walk the main chain hop by hop. Constraints anchored at a
hop filter that hop's frontier before expansion continues; binary
comparisons run before extremal (ARGMAX/ARGMIN) selection so the result
does not depend on the order constraints were written in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .errors import UnclassifiableBranch, UngroundedTopic
from .kg import DATETIME, NUMERIC, STRING, EntityId, KnowledgeGraph, Literal, NodeRef
from .reasoning import (
    ComparisonOp,
    Constraint,
    EntityMatch,
    NumericCompare,
    ReasoningPath,
    StringMatch,
)
from .sparql import FilterClause, SparqlQuery, TriplePattern, Var, find_main_chain

log = logging.getLogger(__name__)

# Relaxation tiers, least to most aggressive.
TIER_FULL = 0
TIER_DROP_STRING = 1
TIER_DROP_STRING_NUMERIC = 2
TIER_SKELETON = 3


@dataclass(frozen=True)
class AnswerSet:
    answers: frozenset[NodeRef]
    relaxation_tier: int

    def __bool__(self) -> bool:
        return bool(self.answers)


def _compare(value: Literal, op: ComparisonOp, threshold: Literal) -> bool:
    """Binary comparison with kind checking.

    Numbers compare as decimals, dates as ISO text (so "2001" < "2001-05"
    < "2002"). A numeric value against a date threshold, or vice versa, is
    not comparable: it is logged and treated as non-matching.
    """
    if value.kind == STRING:
        return False
    if value.kind != threshold.kind:
        log.warning(
            "non-comparable literal: %s value %r vs %s threshold %r",
            value.kind, value.text, threshold.kind, threshold.text,
        )
        return False
    if value.kind == NUMERIC:
        a, b = value.decimal(), threshold.decimal()
    else:
        a, b = value.text, threshold.text
    if op == ComparisonOp.EQ:
        return a == b
    if op == ComparisonOp.GE:
        return a >= b
    if op == ComparisonOp.LE:
        return a <= b
    if op == ComparisonOp.GT:
        return a > b
    return a < b


def _value_key(lit: Literal) -> tuple:
    # Orders extremal candidates; kinds never mix in the second slot.
    if lit.kind == NUMERIC:
        return (NUMERIC, lit.decimal())
    return (lit.kind, lit.text)


def _extremal_values(g, entity: EntityId, relation: str) -> list[tuple]:
    return [
        _value_key(o)
        for o in g.neighbors(entity, relation)
        if isinstance(o, Literal) and o.kind in (NUMERIC, DATETIME)
    ]


def apply_constraint(
    g: KnowledgeGraph, candidates: set[EntityId], c: Constraint
) -> set[EntityId]:
    """Filter a candidate entity set by one constraint.

    Every constraint is existential over the objects of the constraint
    relation. An entity constraint whose surface cannot be grounded
    matches nothing. Extremal constraints keep all candidates attaining
    the extreme value (ties survive).
    """
    v = c.value
    if isinstance(v, EntityMatch):
        target = v.entity
        if target is None:
            try:
                target = g.ground_entity(v.surface)
            except Exception:
                return set()
        return {e for e in candidates if target in g.neighbors(e, c.relation)}

    if isinstance(v, StringMatch):
        want = v.text.strip()
        return {
            e
            for e in candidates
            if any(
                isinstance(o, Literal) and o.kind == STRING and o.text.strip() == want
                for o in g.neighbors(e, c.relation)
            )
        }

    if v.op.is_extremal:
        best_of = {}
        for e in candidates:
            values = _extremal_values(g, e, c.relation)
            if values:
                best_of[e] = max(values) if v.op == ComparisonOp.ARGMAX else min(values)
        if not best_of:
            return set()
        extreme = max(best_of.values()) if v.op == ComparisonOp.ARGMAX else min(best_of.values())
        return {e for e, val in best_of.items() if val == extreme}

    return {
        e
        for e in candidates
        if any(
            isinstance(o, Literal) and _compare(o, v.op, v.threshold)
            for o in g.neighbors(e, c.relation)
        )
    }


def _hop_constraints(rp: ReasoningPath, hop: int) -> list[Constraint]:
    # Binary constraints apply before extremal ones; canonical order
    # within each group. This makes constraint application commutative.
    at_hop = [c for c in rp.constraints if c.hop == hop]
    return sorted(at_hop, key=lambda c: (c.is_extremal, c.sort_key()))


def execute_skeleton(
    g: KnowledgeGraph, topic: EntityId, path: tuple[str, ...]
) -> set[NodeRef]:
    """Constraint-free chain traversal from a grounded topic."""
    return g.reach(topic, path)


def execute_full(g: KnowledgeGraph, rp: ReasoningPath) -> frozenset[NodeRef]:
    """Execute a grounded reasoning path with all its constraints.

    Literals reached at a hop that carries constraints are dropped there;
    at the final hop without constraints they are answers.
    """
    if rp.topic_entity is None:
        raise UngroundedTopic("execute_full needs a grounded topic")
    frontier: set[EntityId] = {rp.topic_entity}
    depth = rp.depth
    for i, rel in enumerate(rp.path, start=1):
        entities: set[EntityId] = set()
        literals: set[NodeRef] = set()
        for e in frontier:
            for o in g.neighbors(e, rel):
                if isinstance(o, str):
                    entities.add(o)
                else:
                    literals.add(o)
        constraints = _hop_constraints(rp, i)
        if constraints:
            for c in constraints:
                entities = apply_constraint(g, entities, c)
                if not entities:
                    return frozenset()
            literals = set()
        if i < depth:
            frontier = entities
            if not frontier:
                return frozenset()
        else:
            return frozenset(entities | literals)
    return frozenset(frontier)


def constraints_for_tier(
    constraints: tuple[Constraint, ...], tier: int
) -> tuple[Constraint, ...]:
    """Constraints that remain active at a relaxation tier.

    Tier 0 keeps everything; tier 1 drops string constraints; tier 2 also
    drops numeric ones (comparisons and extremals); tier 3 drops all.
    """
    if tier <= TIER_FULL:
        return constraints
    if tier >= TIER_SKELETON:
        return ()
    kept = []
    for c in constraints:
        if isinstance(c.value, StringMatch):
            continue
        if tier >= TIER_DROP_STRING_NUMERIC and isinstance(c.value, NumericCompare):
            continue
        kept.append(c)
    return tuple(kept)


def answers_at_tier(g: KnowledgeGraph, rp: ReasoningPath, tier: int) -> frozenset[NodeRef]:
    return execute_full(g, replace(rp, constraints=constraints_for_tier(rp.constraints, tier)))


def execute_with_relaxation(g: KnowledgeGraph, rp: ReasoningPath) -> AnswerSet:
    """Try tiers 0..3 in order and return the first non-empty answer set.

    The tier that produced the answers is recorded. When even the bare
    skeleton is empty the result is the empty set at tier 3.
    """
    for tier in (TIER_FULL, TIER_DROP_STRING, TIER_DROP_STRING_NUMERIC, TIER_SKELETON):
        answers = answers_at_tier(g, rp, tier)
        if answers:
            return AnswerSet(answers, tier)
    return AnswerSet(frozenset(), TIER_SKELETON)


# --- direct query interpretation ---

def _literal_eq(value: Literal, target: Literal) -> bool:
    if target.kind == STRING:
        return value.kind == STRING and value.text.strip() == target.text.strip()
    return _compare(value, ComparisonOp.EQ, target)


def evaluate_query(g: KnowledgeGraph, q: SparqlQuery) -> frozenset[NodeRef]:
    """Interpret a chain-shaped query directly on the graph.

    This never consults the reasoning-path representation, so it serves
    as an independent cross-check for compiled queries. Filters that sit
    on the same branch variable are a conjunction over one binding.
    Non-chain-shaped queries raise the chain-analysis errors.
    """
    topic, chain = find_main_chain(q)
    hop_of: dict[Var, int] = {}
    for i, pat in enumerate(chain, start=1):
        if isinstance(pat.object, Var):
            hop_of[pat.object] = i
    chain_ids = {id(pat) for pat in chain}

    filters_of: dict[Var, list[FilterClause]] = {}
    for f in q.filters:
        if f.var in hop_of:
            raise UnclassifiableBranch(f"filter on chain variable ?{f.var.name}")
        filters_of.setdefault(f.var, []).append(f)
    order_var = q.order.var if q.order else None
    if order_var is not None and (order_var in hop_of or order_var == q.select_var):
        raise UnclassifiableBranch(f"order on chain variable ?{order_var.name}")

    # Branch checks grouped by anchor hop. Each entry closes over one
    # off-chain pattern and its attached filters.
    checks: dict[int, list] = {}
    extremals: dict[int, list] = {}
    seen_vars: set[Var] = set()
    for pat in q.patterns:
        if id(pat) in chain_ids:
            continue
        subj = pat.subject
        if not isinstance(subj, Var) or subj not in hop_of:
            raise UnclassifiableBranch(f"pattern subject {subj!r} is not on the chain")
        hop = hop_of[subj]
        obj = pat.object
        rel = pat.relation
        if isinstance(obj, str):
            checks.setdefault(hop, []).append(
                lambda e, rel=rel, obj=obj: obj in g.neighbors(e, rel)
            )
        elif isinstance(obj, Literal):
            checks.setdefault(hop, []).append(
                lambda e, rel=rel, obj=obj: any(
                    isinstance(o, Literal) and _literal_eq(o, obj)
                    for o in g.neighbors(e, rel)
                )
            )
        else:
            if obj in hop_of or obj == q.select_var:
                raise UnclassifiableBranch("branch variable rejoins the chain")
            seen_vars.add(obj)
            conj = filters_of.get(obj, [])
            if order_var == obj:
                extremals.setdefault(hop, []).append((rel, conj, q.order.descending))
                continue
            if not conj:
                # Bare existence: the entity has at least one object here.
                checks.setdefault(hop, []).append(
                    lambda e, rel=rel: bool(g.neighbors(e, rel))
                )
                continue
            def admits(o, conj=conj):
                return isinstance(o, Literal) and all(
                    _compare(o, f.op, f.value) if f.value.kind != STRING
                    else _literal_eq(o, f.value)
                    for f in conj
                )
            checks.setdefault(hop, []).append(
                lambda e, rel=rel, admits=admits: any(
                    admits(o) for o in g.neighbors(e, rel)
                )
            )

    for var in filters_of:
        if var not in seen_vars:
            raise UnclassifiableBranch(f"filter on unknown variable ?{var.name}")
    if order_var is not None and order_var not in seen_vars:
        raise UnclassifiableBranch(f"order on unknown variable ?{order_var.name}")

    frontier: set[EntityId] = {topic}
    depth = len(chain)
    for i, pat in enumerate(chain, start=1):
        entities: set[EntityId] = set()
        literals: set[NodeRef] = set()
        for e in frontier:
            for o in g.neighbors(e, pat.relation):
                if isinstance(o, str):
                    entities.add(o)
                else:
                    literals.add(o)
        constrained = i in checks or i in extremals
        for check in checks.get(i, []):
            entities = {e for e in entities if check(e)}
        for rel, conj, descending in extremals.get(i, []):
            best_of = {}
            for e in entities:
                values = [
                    _value_key(o)
                    for o in g.neighbors(e, rel)
                    if isinstance(o, Literal)
                    and o.kind in (NUMERIC, DATETIME)
                    and all(
                        _compare(o, f.op, f.value) if f.value.kind != STRING
                        else _literal_eq(o, f.value)
                        for f in conj
                    )
                ]
                if values:
                    best_of[e] = max(values) if descending else min(values)
            if not best_of:
                entities = set()
            else:
                extreme = max(best_of.values()) if descending else min(best_of.values())
                entities = {e for e, val in best_of.items() if val == extreme}
        if constrained:
            literals = set()
        if i < depth:
            frontier = entities
            if not frontier:
                return frozenset()
        else:
            return frozenset(entities | literals)
    return frozenset(frontier)
