"""MRR, success@k and candidate-count sweeps over pipeline configurations."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ._validation import check_positive_int
from .corpus import Question, atomic_write_text
from .pipeline import Pipeline, PipelineConfig, RankedList
from .reranker.model import RerankerModel
from .retrieval.index import Index

DEFAULT_KS = tuple(range(10, 101, 5))


def _gold_ranks(rankings: Sequence[RankedList], gold: Mapping[str, str]) -> list[int | None]:
    ranks = []
    for r in rankings:
        if r.query_id not in gold:
            raise KeyError(f"query {r.query_id!r} has no gold answer")
        ranks.append(r.rank_of(gold[r.query_id]))
    return ranks


def mrr(rankings: Sequence[RankedList], gold: Mapping[str, str]) -> float:
    """Mean of 1/rank of the gold question; a gold answer missing from the list counts 0."""
    if not rankings:
        raise ValueError("need at least one ranking")
    ranks = _gold_ranks(rankings, gold)
    return math.fsum(1.0 / r for r in ranks if r is not None) / len(ranks)


def success_at_k(rankings: Sequence[RankedList], gold: Mapping[str, str], k: int) -> tuple[int, float]:
    check_positive_int(k, "k")
    ranks = _gold_ranks(rankings, gold)
    count = sum(1 for r in ranks if r is not None and r <= k)
    return count, (count / len(ranks) if ranks else 0.0)


@dataclass(frozen=True)
class EvalRow:
    k: int
    count: int
    ratio: float
    mrr: float


@dataclass
class EvalReport:
    config: str
    n_queries: int
    rows: list[EvalRow] = field(default_factory=list)

    def best(self) -> EvalRow:
        return max(self.rows, key=lambda r: (r.mrr, -r.k))

    def summary(self) -> dict:
        best = self.best()
        return {
            "config": self.config,
            "queries": self.n_queries,
            "best_k": best.k,
            "best_mrr": best.mrr,
            "mean_position": (1.0 / best.mrr) if best.mrr > 0 else None,
            "rows": [{"k": r.k, "count": r.count, "ratio": r.ratio, "mrr": r.mrr} for r in self.rows],
        }


def validate_gold(gold: Mapping[str, str], index: Index) -> None:
    missing = sorted(v for v in set(gold.values()) if v not in index.pool)
    if missing:
        raise ValueError(f"gold ids not in the pool: {', '.join(missing[:5])}"
                         + (" ..." if len(missing) > 5 else ""))


def sweep(index: Index, queries: Sequence[Question], gold: Mapping[str, str], ks: Sequence[int],
          configs: Sequence[PipelineConfig], model: RerankerModel | None = None,
          tokenizer: str | None = None) -> list[EvalReport]:
    """One report per config, one row per candidate count ``k``.

    Each row equals running the pipeline with ``n = k``: stage-1 lists for
    smaller k are prefixes of the largest, and stage-2 scores are computed
    per pair, so both are computed once at ``max(ks)`` and reused.
    """
    if not ks:
        raise ValueError("ks must be non-empty")
    ks = [check_positive_int(k, "k") for k in ks]
    validate_gold(gold, index)
    k_max = max(ks)
    reports = []
    for cfg in configs:
        kwargs = {} if tokenizer is None else {"tokenizer": tokenizer}
        pipe = Pipeline(index, cfg, model if cfg.stage2 else None, **kwargs)
        per_query = []
        for q in queries:
            cands = pipe.stage1(q.tokens, k_max)
            s2 = pipe.stage2_scores(q.tokens, cands) if cfg.stage2 and cands else None
            per_query.append((q.id, cands, s2))
        report = EvalReport(cfg.label, len(queries))
        for k in ks:
            lists = [pipe.assemble(qid, cands[:k], None if s2 is None else s2[:k])
                     for qid, cands, s2 in per_query]
            count, ratio = success_at_k(lists, gold, k)
            report.rows.append(EvalRow(k, count, ratio, mrr(lists, gold)))
        reports.append(report)
    return reports


def format_report_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "k", "count", "ratio", "mrr"])
    for rep in reports:
        for r in rep.rows:
            w.writerow([rep.config, r.k, r.count, repr(r.ratio), repr(r.mrr)])
    return buf.getvalue()


def write_reports(reports: Sequence[EvalReport], csv_path: str | os.PathLike,
                  json_path: str | os.PathLike | None = None) -> None:
    atomic_write_text(csv_path, format_report_csv(reports))
    if json_path is not None:
        atomic_write_text(json_path, json.dumps([r.summary() for r in reports], indent=2) + "\n")
