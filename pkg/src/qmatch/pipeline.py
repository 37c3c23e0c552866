"""Two-stage matching: KNN shortlist, then re-ranking by the Siamese scorer."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_choice, check_in_range, check_positive_int
from .corpus import WHITESPACE_NORMALIZE, Question, atomic_write_text, tokenize
from .reranker.features import handcrafted_features
from .reranker.model import PairExample, RerankerModel, predict_proba
from .retrieval.index import METRICS, Candidate, Index


@dataclass(frozen=True)
class PipelineConfig:
    metric: str = "soft-cosine"
    n: int = 50
    stage2: bool = False
    model_path: str | None = None
    blend: float = 0.0
    name: str | None = None

    def __post_init__(self):
        check_choice(self.metric, "metric", METRICS)
        check_positive_int(self.n, "n")
        check_in_range(self.blend, "blend", 0.0, 1.0, high_inclusive=True)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        base = "tfidf" if self.metric == "cosine" else "soft"
        return f"{base}+dl" if self.stage2 else base


@dataclass(frozen=True)
class RankedEntry:
    question_id: str
    stage1_score: float
    stage2_score: float | None
    final_rank: int


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[RankedEntry, ...] = field(default_factory=tuple)

    @property
    def ids(self) -> list[str]:
        return [e.question_id for e in self.entries]

    def rank_of(self, question_id: str) -> int | None:
        for e in self.entries:
            if e.question_id == question_id:
                return e.final_rank
        return None

    def to_json(self) -> str:
        return json.dumps({
            "query_id": self.query_id,
            "entries": [{"question_id": e.question_id, "rank": e.final_rank,
                         "stage1_score": e.stage1_score, "stage2_score": e.stage2_score}
                        for e in self.entries],
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "RankedList":
        obj = json.loads(line)
        return cls(obj["query_id"], tuple(
            RankedEntry(e["question_id"], e["stage1_score"], e["stage2_score"], e["rank"])
            for e in obj["entries"]))


def write_rankings(rankings: Iterable[RankedList], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(r.to_json() + "\n" for r in rankings))


class Pipeline:
    """Immutable once built; ``query`` may be called concurrently."""

    def __init__(self, index: Index, config: PipelineConfig = PipelineConfig(),
                 model: RerankerModel | None = None, tokenizer: str = WHITESPACE_NORMALIZE):
        if config.metric not in index.metrics:
            raise ValueError(f"index was built without a relation matrix; metric {config.metric!r} unavailable")
        if config.stage2 and model is None:
            raise ValueError("stage 2 is enabled but no re-ranker model was given")
        if model is not None and not config.stage2:
            model = None
        self.index = index
        self.config = config
        self.model = model
        self.tokenizer = tokenizer

    def stage1(self, tokens: Sequence[str], n: int | None = None) -> list[Candidate]:
        vec = self.index.vectorize(tokens)
        if len(vec) == 0:
            return []
        return self.index.knn(vec, n or self.config.n, self.config.metric)

    def stage2_scores(self, tokens: Sequence[str], candidates: Sequence[Candidate]) -> np.ndarray:
        """Match probabilities; candidates without tokens score 0."""
        model = self.model
        pool = self.index.pool
        user = model.pad(tokens)
        scores = np.zeros(len(candidates))
        examples, slots = [], []
        for i, c in enumerate(candidates):
            q = pool.get(c.question_id)
            if not q.tokens:
                continue
            xf = handcrafted_features(tokens, q.tokens, self.index.model, self.index.relation)
            examples.append(PairExample(user, model.pad(q.tokens), xf))
            slots.append(i)
        if examples:
            scores[slots] = predict_proba(model, examples)
        return scores

    def assemble(self, query_id: str, candidates: Sequence[Candidate],
                 stage2: np.ndarray | None) -> RankedList:
        if stage2 is None:
            entries = [RankedEntry(c.question_id, c.stage1_score, None, c.stage1_rank) for c in candidates]
            return RankedList(query_id, tuple(entries))
        w = self.config.blend
        pos = self.index.pool.position
        scored = []
        for c, s2 in zip(candidates, stage2.tolist()):
            final = s2 if w == 0.0 else (1.0 - w) * s2 + w * c.stage1_score
            scored.append((-final, -c.stage1_score, pos(c.question_id), c, s2))
        scored.sort(key=lambda t: t[:3])
        entries = [RankedEntry(c.question_id, c.stage1_score, s2, r)
                   for r, (_, _, _, c, s2) in enumerate(scored, start=1)]
        return RankedList(query_id, tuple(entries))

    def query_tokens(self, tokens: Sequence[str], query_id: str = "query") -> RankedList:
        candidates = self.stage1(tokens)
        if not candidates:
            return RankedList(query_id)
        stage2 = self.stage2_scores(tokens, candidates) if self.config.stage2 else None
        return self.assemble(query_id, candidates, stage2)

    def query(self, user_text: str, query_id: str = "query") -> RankedList:
        return self.query_tokens(tokenize(user_text, self.tokenizer), query_id)

    def batch_query(self, queries: Iterable[Question | tuple[str, str]]) -> list[RankedList]:
        out = []
        for q in queries:
            if isinstance(q, Question):
                out.append(self.query_tokens(q.tokens, q.id))
            else:
                qid, text = q
                out.append(self.query(text, qid))
        return out


def query(pipeline: Pipeline, user_text: str, query_id: str = "query") -> RankedList:
    return pipeline.query(user_text, query_id)


def batch_query(pipeline: Pipeline, queries) -> list[RankedList]:
    return pipeline.batch_query(queries)


def mine_pairs(index: Index, queries: Sequence[Question], gold: dict, metric: str = "soft-cosine",
               n_hard: int = 2, n_random: int = 1, depth: int = 10, seed: int = 0) -> list:
    """Labeled pairs for re-ranker training: each query's gold plus negatives.

    Hard negatives are the top non-gold stage-1 candidates (within ``depth``);
    random negatives are drawn uniformly from the rest of the pool.
    """
    from .corpus import LabeledPair

    rng = np.random.default_rng(seed)
    pool = index.pool
    pairs = []
    for q in queries:
        g = gold[q.id]
        chosen = []
        vec = index.vectorize(q.tokens)
        if len(vec):
            for c in index.knn(vec, depth + 1, metric):
                if c.question_id != g and len(chosen) < n_hard:
                    chosen.append(c.question_id)
        while len(chosen) < n_hard + n_random and len(chosen) < len(pool) - 1:
            cand = pool[int(rng.integers(len(pool)))].id
            if cand != g and cand not in chosen:
                chosen.append(cand)
        user = lambda pid: Question(f"{pid}:user", q.text, q.tokens)
        pairs.append(LabeledPair(f"{q.id}p", user(f"{q.id}p"), pool.get(g), 1))
        for k, qid in enumerate(chosen):
            pairs.append(LabeledPair(f"{q.id}n{k}", user(f"{q.id}n{k}"), pool.get(qid), 0))
    return pairs
