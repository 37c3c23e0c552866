"""Synthetic FAQ benchmark with known synonym structure.

Concepts are connected by a sparse random successor graph; each concept has
two or three interchangeable surface words. Sentences (embedding corpus and
pool questions) are random walks rendered with random synonyms, so synonyms
share contexts but never co-occur by design. User queries are pool questions
with synonyms swapped, words dropped and filler words inserted. Half of the
pool are near-duplicate "variants" of the other half: either a reordering of
the same concepts, or one concept replaced and two swapped. Reorderings are
indistinguishable to any bag-of-words score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import LabeledPair, Question, QuestionPool

_LETTERS = "abcdefgh"


@dataclass(frozen=True)
class SyntheticConfig:
    n_concepts: int = 400
    min_synonyms: int = 2
    max_synonyms: int = 3
    successors: int = 4
    n_fillers: int = 20
    corpus_sentences: int = 20000
    sentence_len: tuple[int, int] = (6, 12)
    n_base: int = 250
    n_variants: int = 250
    question_len: tuple[int, int] = (4, 8)
    permutation_rate: float = 0.5
    n_queries: int = 200
    n_train_queries: int = 500
    negatives_per_query: int = 3
    substitution: float = 0.6
    drop: float = 0.1
    filler_rate: float = 0.05
    query_filler_rate: float = 0.3
    seed: int = 0


@dataclass
class SyntheticBenchmark:
    config: SyntheticConfig
    corpus: list[list[str]]
    pool: QuestionPool
    queries: list[Question]
    gold: dict[str, str]
    train_pairs: list[LabeledPair]
    synonyms: list[list[str]]
    concepts: dict[str, tuple[int, ...]] = field(default_factory=dict)


class _World:
    def __init__(self, config: SyntheticConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        n = config.n_concepts
        counts = rng.integers(config.min_synonyms, config.max_synonyms + 1, size=n)
        self.synonyms = [[f"t{c}{_LETTERS[j]}" for j in range(counts[c])] for c in range(n)]
        self.fillers = [f"f{i}" for i in range(config.n_fillers)]
        self.succ = np.array([rng.choice(n, size=config.successors, replace=False) for _ in range(n)])

    def walk(self, length: int) -> list[int]:
        c = int(self.rng.integers(self.config.n_concepts))
        out = [c]
        for _ in range(length - 1):
            c = int(self.succ[c, self.rng.integers(self.config.successors)])
            out.append(c)
        return out

    def render(self, concepts, fillers: bool = True) -> list[str]:
        words = []
        for c in concepts:
            syns = self.synonyms[c]
            words.append(syns[self.rng.integers(len(syns))])
            if fillers and self.rng.random() < self.config.filler_rate:
                words.append(self.fillers[self.rng.integers(len(self.fillers))])
        return words

    def variant(self, concepts: list[int]) -> list[int]:
        out = list(concepts)
        if self.rng.random() < self.config.permutation_rate:
            # same bag of concepts, different order
            i, j = sorted(self.rng.choice(len(out), size=2, replace=False).tolist())
            out[i:j + 1] = out[i:j + 1][::-1]
            return out
        i = int(self.rng.integers(len(out)))
        out[i] = int(self.rng.integers(self.config.n_concepts))
        if len(out) >= 3:
            j = int(self.rng.integers(len(out) - 1))
            out[j], out[j + 1] = out[j + 1], out[j]
        return out

    def perturb(self, tokens: list[str], concept_of: dict[str, int]) -> list[str]:
        cfg = self.config
        out = []
        for tok in tokens:
            c = concept_of.get(tok)
            if c is None:
                if self.rng.random() < 0.5:
                    out.append(tok)
                continue
            if self.rng.random() < cfg.drop:
                continue
            syns = self.synonyms[c]
            if len(syns) > 1 and self.rng.random() < cfg.substitution:
                others = [s for s in syns if s != tok]
                tok = others[self.rng.integers(len(others))]
            out.append(tok)
            if self.rng.random() < cfg.query_filler_rate:
                out.append(self.fillers[self.rng.integers(len(self.fillers))])
        if not any(t in concept_of for t in out):
            out.append(tokens[0])
        return out


def generate(config: SyntheticConfig = SyntheticConfig()) -> SyntheticBenchmark:
    rng = np.random.default_rng(config.seed)
    world = _World(config, rng)
    concept_of = {s: c for c, syns in enumerate(world.synonyms) for s in syns}

    corpus = [world.render(world.walk(int(rng.integers(config.sentence_len[0], config.sentence_len[1] + 1))))
              for _ in range(config.corpus_sentences)]

    lo, hi = config.question_len
    bases = [world.walk(int(rng.integers(lo, hi + 1))) for _ in range(config.n_base)]
    concept_seqs = list(bases)
    for _ in range(config.n_variants):
        concept_seqs.append(world.variant(bases[int(rng.integers(len(bases)))]))
    order = rng.permutation(len(concept_seqs))
    concept_seqs = [concept_seqs[i] for i in order]
    questions, concepts = [], {}
    for i, seq in enumerate(concept_seqs):
        qid = f"sq{i:04d}"
        toks = world.render(seq)
        questions.append(Question(qid, " ".join(toks), tuple(toks), category=f"cat{seq[0] % 17}"))
        concepts[qid] = tuple(seq)
    pool = QuestionPool(tuple(questions))

    queries, gold = [], {}
    for i in range(config.n_queries):
        target = questions[int(rng.integers(len(questions)))]
        toks = world.perturb(list(target.tokens), concept_of)
        q = Question(f"uq{i:04d}", " ".join(toks), tuple(toks))
        queries.append(q)
        gold[q.id] = target.id

    train_pairs = _training_pairs(world, questions, concepts, concept_of, rng)
    return SyntheticBenchmark(config, corpus, pool, queries, gold, train_pairs, world.synonyms, concepts)


def _overlap(a: tuple[int, ...], b: tuple[int, ...]) -> float:
    sa, sb = set(a), set(b)
    return len(sa & sb) / len(sa | sb)


def _training_pairs(world: _World, questions: list[Question], concepts, concept_of, rng) -> list[LabeledPair]:
    """Per training query: the gold pair plus hard (most concept overlap) and random negatives."""
    cfg = world.config
    n_hard = max(0, cfg.negatives_per_query - 1)
    pairs = []
    for i in range(cfg.n_train_queries):
        gi = int(rng.integers(len(questions)))
        target = questions[gi]
        toks = world.perturb(list(target.tokens), concept_of)
        text = " ".join(toks)

        def user(pid):
            return Question(f"{pid}:user", text, tuple(toks))

        pairs.append(LabeledPair(f"tq{i:04d}p", user(f"tq{i:04d}p"), target, 1))
        sims = np.array([_overlap(concepts[target.id], concepts[q.id]) if j != gi else -1.0
                         for j, q in enumerate(questions)])
        hard = np.argsort(-sims, kind="stable")[:n_hard]
        negs = [int(j) for j in hard]
        while len(negs) < cfg.negatives_per_query:
            j = int(rng.integers(len(questions)))
            if j != gi and j not in negs:
                negs.append(j)
        for k, j in enumerate(negs):
            pid = f"tq{i:04d}n{k}"
            pairs.append(LabeledPair(pid, user(pid), questions[j], 0))
    return pairs


def separable_pairs(bench: SyntheticBenchmark, n_pairs: int = 200, seed: int = 0) -> list[LabeledPair]:
    """Synonym-substituted positives against random-mismatch negatives, half each."""
    rng = np.random.default_rng([seed, 7])
    world = _World.__new__(_World)
    world.config = bench.config
    world.rng = rng
    world.synonyms = bench.synonyms
    world.fillers = [f"f{i}" for i in range(bench.config.n_fillers)]
    concept_of = {s: c for c, syns in enumerate(bench.synonyms) for s in syns}
    qs = bench.pool.questions
    pairs = []
    for i in range(n_pairs):
        gi = int(rng.integers(len(qs)))
        toks = world.perturb(list(qs[gi].tokens), concept_of)
        user = Question(f"sp{i:04d}:user", " ".join(toks), tuple(toks))  # matches load_pairs ids
        if i % 2 == 0:
            pairs.append(LabeledPair(f"sp{i:04d}", user, qs[gi], 1))
        else:
            j = int(rng.integers(len(qs) - 1))
            j = j + 1 if j >= gi else j
            pairs.append(LabeledPair(f"sp{i:04d}", user, qs[j], 0))
    return pairs
