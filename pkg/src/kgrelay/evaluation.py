"""Batch evaluation: metrics, dataset loading, and the run harness.

Answer comparison is set-based after normalization (casefold, trim,
collapse inner whitespace). Path-level metrics compare the generated path
against one derived from the record's gold query; they are reported over
the records where that derivation succeeds and stay null otherwise.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .errors import DatasetError, KgRelayError
from .execute import AnswerSet, evaluate_query
from .kg import KnowledgeGraph, node_sort_key, node_text
from .pipeline import QuestionResult, Route, answer_question, run_stage2_only
from .providers import CostLedger, ledger_summary
from .reasoning import (
    Constraint,
    EntityMatch,
    NumericCompare,
    ReasoningPath,
    StringMatch,
    canonicalize,
    serialize_reasoning_path,
)
from .repair import RepairConfig
from .sparql import parse_sparql, sparql_to_path

log = logging.getLogger(__name__)


@dataclass
class DatasetRecord:
    id: str
    question: str
    answers: tuple[str, ...] = ()
    sparql: str | None = None
    topic: str | None = None
    depth: int | None = None
    error: str | None = None  # set for unparsable lines


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    """Read a JSONL dataset. Unparsable lines become flagged records so a
    batch run can score the rest; an unreadable or empty file raises."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset: {exc}") from exc
    records: list[DatasetRecord] = []
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            if not isinstance(obj, dict):
                raise ValueError("record is not an object")
            rid = str(obj.get("id", f"line-{line_no}"))
            question = obj["question"]
            if not isinstance(question, str) or not question:
                raise ValueError("missing question")
            answers = tuple(str(a) for a in obj.get("answers", []))
            sparql = obj.get("sparql")
            if not answers and not sparql:
                raise ValueError("record needs answers or a gold query")
            records.append(
                DatasetRecord(
                    rid,
                    question,
                    answers,
                    sparql,
                    obj.get("topic"),
                    obj.get("depth"),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("dataset line %d unusable: %s", line_no, exc)
            records.append(
                DatasetRecord(f"line-{line_no}", "", error=f"line {line_no}: {exc}")
            )
    if not records:
        raise DatasetError("no records in dataset")
    return records


# --- metrics ---

def normalize_answer(text: str) -> str:
    return " ".join(text.split()).casefold()


def _norm_set(values: Iterable[str]) -> frozenset[str]:
    return frozenset(normalize_answer(v) for v in values)


def hits_at_1(pred: Iterable[str], gold: Iterable[str]) -> int:
    """1 iff the first executable query's answers overlap the gold set."""
    return 1 if _norm_set(pred) & _norm_set(gold) else 0


def f1_score(pred: Iterable[str], gold: Iterable[str]) -> float:
    """Set-level F1; two empty sets count as a perfect match."""
    p, g = _norm_set(pred), _norm_set(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    overlap = len(p & g)
    if not overlap:
        return 0.0
    precision = overlap / len(p)
    recall = overlap / len(g)
    return 2 * precision * recall / (precision + recall)


def _constraint_shape(c: Constraint) -> tuple:
    # Payloads are masked: only hop, relation, class, and operator count.
    v = c.value
    if isinstance(v, EntityMatch):
        return (c.hop, c.relation, "entity", None)
    if isinstance(v, StringMatch):
        return (c.hop, c.relation, "string", None)
    return (c.hop, c.relation, "numeric", v.op.value)


def skeleton_accuracy(pred: ReasoningPath | None, gold: ReasoningPath) -> int:
    """1 iff main paths match and constraint shapes agree as multisets."""
    if pred is None:
        return 0
    if pred.path != gold.path:
        return 0
    return int(
        Counter(map(_constraint_shape, pred.constraints))
        == Counter(map(_constraint_shape, gold.constraints))
    )


def exact_match(pred: ReasoningPath | None, gold: ReasoningPath) -> int:
    """1 iff canonical serializations are identical (payloads included)."""
    if pred is None:
        return 0
    return int(
        serialize_reasoning_path(canonicalize(pred))
        == serialize_reasoning_path(canonicalize(gold))
    )


# --- batch harness ---

@dataclass
class MetricReport:
    questions: int
    flagged: int
    hits_at_1: float
    f1: float
    skeleton_accuracy: float | None
    exact_match: float | None
    path_scored: int
    avg_llm_calls: float
    avg_prompt_tokens: float
    avg_completion_tokens: float
    avg_tokens: float
    cost_usd: float
    cost_per_10k_usd: float
    routes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "questions": self.questions,
            "flagged": self.flagged,
            "hits_at_1": self.hits_at_1,
            "f1": self.f1,
            "skeleton_accuracy": self.skeleton_accuracy,
            "exact_match": self.exact_match,
            "path_scored": self.path_scored,
            "avg_llm_calls": self.avg_llm_calls,
            "avg_prompt_tokens": self.avg_prompt_tokens,
            "avg_completion_tokens": self.avg_completion_tokens,
            "avg_tokens": self.avg_tokens,
            "cost_usd": self.cost_usd,
            "cost_per_10k_usd": self.cost_per_10k_usd,
            "routes": dict(sorted(self.routes.items())),
        }

    def format_table(self) -> str:
        rows = []
        for key, value in self.to_dict().items():
            if key == "routes":
                value = ", ".join(f"{k}={v}" for k, v in value.items()) or "-"
            elif value is None:
                value = "n/a"
            elif isinstance(value, float):
                value = f"{value:.6f}"
            rows.append((key, str(value)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


ProviderFactory = Callable[[], tuple]


def _sorted_answer_texts(result: QuestionResult) -> list[str]:
    nodes = sorted(result.answers.answers, key=node_sort_key)
    return [node_text(n) for n in nodes]


def _gold_answers(g: KnowledgeGraph, rec: DatasetRecord) -> tuple[str, ...]:
    if rec.answers:
        return rec.answers
    answers = evaluate_query(g, parse_sparql(rec.sparql))
    return tuple(node_text(n) for n in sorted(answers, key=node_sort_key))


def run_batch(
    g: KnowledgeGraph,
    records: list[DatasetRecord],
    provider_factory: ProviderFactory,
    repair_cfg: RepairConfig | None = None,
    prices: dict | None = None,
    workers: int = 1,
    relax: bool = True,
    stage2_only: bool = False,
    include_trace: bool = False,
) -> tuple[MetricReport, list[dict]]:
    """Run the pipeline over a dataset and score every record.

    Fresh providers per record (scripted state must not leak between
    questions). Per-record failures are flagged and score zero; the batch
    itself never aborts. With workers > 1 records run concurrently but
    aggregation stays in dataset order, so output is identical.
    """
    repair_cfg = repair_cfg or RepairConfig()

    def work(rec: DatasetRecord) -> QuestionResult | None:
        if rec.error:
            return None
        specialized, general, embedder = provider_factory()
        if stage2_only:
            if rec.topic is None or rec.depth is None:
                return QuestionResult(
                    rec.question, Route.FALLBACK, AnswerSet(frozenset(), 0),
                    None, None, CostLedger(prices), [],
                    error="record lacks topic or depth",
                )
            return run_stage2_only(
                g, rec.question, rec.topic, rec.depth, general, embedder,
                repair_cfg, prices,
            )
        return answer_question(
            g, rec.question, specialized, general, embedder, repair_cfg, prices, relax
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(rec) for rec in records]

    ledger = CostLedger(prices)
    rows: list[dict] = []
    hits_total = 0.0
    f1_total = 0.0
    skel_total = 0
    exact_total = 0
    path_scored = 0
    flagged = 0
    routes: Counter = Counter()

    for rec, result in zip(records, results):
        if result is None:  # unparsable dataset line
            flagged += 1
            rows.append(
                {
                    "id": rec.id,
                    "question": rec.question,
                    "route": None,
                    "answers": [],
                    "relaxation_tier": None,
                    "crp_initial": None,
                    "crp_final": None,
                    "llm_calls": 0,
                    "prompt_tokens": 0,
                    "completion_tokens": 0,
                    "flagged": True,
                    "error": rec.error,
                }
            )
            continue
        ledger.merge(result.ledger)
        routes[result.route.value] += 1

        row_error = result.error
        row_flagged = False
        pred_texts = _sorted_answer_texts(result)
        try:
            gold = _gold_answers(g, rec)
        except KgRelayError as exc:
            gold = ()
            row_error = f"gold: {type(exc).__name__}: {exc}"
        if not gold:
            # Cannot score against nothing; count the record as failed.
            row_flagged = True
            hits = 0
            f1 = 0.0
        else:
            hits = hits_at_1(pred_texts, gold)
            f1 = f1_score(pred_texts, gold)
        hits_total += hits
        f1_total += f1

        skel = exact = None
        if rec.sparql and not row_flagged:
            try:
                gold_rp = sparql_to_path(parse_sparql(rec.sparql))
            except KgRelayError:
                gold_rp = None
            if gold_rp is not None:
                skel = skeleton_accuracy(result.crp_initial, gold_rp)
                exact = exact_match(result.crp_initial, gold_rp)
                skel_total += skel
                exact_total += exact
                path_scored += 1

        if row_flagged:
            flagged += 1
        row = {
            "id": rec.id,
            "question": rec.question,
            "route": result.route.value,
            "answers": pred_texts,
            "relaxation_tier": result.answers.relaxation_tier,
            "crp_initial": serialize_reasoning_path(result.crp_initial)
            if result.crp_initial
            else None,
            "crp_final": serialize_reasoning_path(result.crp_final)
            if result.crp_final
            else None,
            "llm_calls": result.ledger.calls(),
            "prompt_tokens": result.ledger.prompt_tokens(),
            "completion_tokens": result.ledger.completion_tokens(),
            "hits_at_1": hits,
            "f1": round(f1, 10),
        }
        if skel is not None:
            row["skeleton_accuracy"] = skel
            row["exact_match"] = exact
        if row_flagged:
            row["flagged"] = True
        if row_error:
            row["error"] = row_error
        if include_trace:
            row["trace"] = result.trace
        rows.append(row)

    n = len(records)
    summary = ledger_summary(ledger, n)
    report = MetricReport(
        questions=n,
        flagged=flagged,
        hits_at_1=hits_total / n,
        f1=f1_total / n,
        skeleton_accuracy=(skel_total / path_scored) if path_scored else None,
        exact_match=(exact_total / path_scored) if path_scored else None,
        path_scored=path_scored,
        avg_llm_calls=summary["avg_llm_calls"],
        avg_prompt_tokens=summary["avg_prompt_tokens"],
        avg_completion_tokens=summary["avg_completion_tokens"],
        avg_tokens=summary["avg_tokens"],
        cost_usd=summary["cost_usd"],
        cost_per_10k_usd=summary["cost_per_10k_usd"],
        routes=dict(routes),
    )
    return report, rows


def write_results(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_summary(path: str | Path, report: MetricReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n")
