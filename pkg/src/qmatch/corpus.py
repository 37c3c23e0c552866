"""Tokenization, vocabularies and the question-pool / labeled-pair file formats."""

from __future__ import annotations

import hashlib
import os
import string
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

WHITESPACE_NORMALIZE = "whitespace-normalize"
PRE_SEGMENTED = "pre-segmented"
TOKENIZER_MODES = (WHITESPACE_NORMALIZE, PRE_SEGMENTED)

OOV_ID = -1

# ASCII plus the common full-width / CJK punctuation seen in user questions.
_PUNCT = string.punctuation + "，。？！、；：“”‘’（）《》【】…—·～"


class CorpusFormatError(ValueError):
    """Raised for malformed pool or pair files."""


def tokenize(text: str, mode: str = WHITESPACE_NORMALIZE) -> list[str]:
    """Split ``text`` into tokens.

    ``whitespace-normalize`` lowercases and strips leading/trailing
    punctuation from every whitespace-delimited piece; pieces that become
    empty are dropped. ``pre-segmented`` only splits on whitespace.
    """
    if mode == PRE_SEGMENTED:
        return text.split()
    if mode != WHITESPACE_NORMALIZE:
        raise ValueError(f"unknown tokenizer mode {mode!r}; expected one of {TOKENIZER_MODES}")
    tokens = []
    for piece in text.lower().split():
        piece = piece.strip(_PUNCT)
        if piece:
            tokens.append(piece)
    return tokens


def tokenizer_fingerprint(mode: str) -> str:
    return f"{mode}:v1"


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    tokens: tuple[str, ...]
    category: str | None = None

    @classmethod
    def from_text(cls, id: str, text: str, category: str | None = None,
                  mode: str = WHITESPACE_NORMALIZE) -> "Question":
        return cls(id=id, text=text, tokens=tuple(tokenize(text, mode)), category=category)


@dataclass(frozen=True)
class QuestionPool:
    """Ordered, id-unique collection of standard questions.

    Insertion order is significant: it is the final tie-breaker of every
    ranking produced over the pool.
    """

    questions: tuple[Question, ...]
    tokenizer: str = tokenizer_fingerprint(WHITESPACE_NORMALIZE)
    _positions: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        positions = {}
        for i, q in enumerate(self.questions):
            if q.id in positions:
                raise CorpusFormatError(f"duplicate question id {q.id!r}")
            positions[q.id] = i
        object.__setattr__(self, "questions", tuple(self.questions))
        object.__setattr__(self, "_positions", positions)

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    def __getitem__(self, i: int) -> Question:
        return self.questions[i]

    def __contains__(self, qid: str) -> bool:
        return qid in self._positions

    @property
    def ids(self) -> list[str]:
        return [q.id for q in self.questions]

    def position(self, qid: str) -> int:
        return self._positions[qid]

    def get(self, qid: str) -> Question:
        return self.questions[self._positions[qid]]


@dataclass(frozen=True)
class LabeledPair:
    pair_id: str
    user_question: Question
    standard_question: Question
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Vocabulary:
    """Token to dense id map with corpus and document frequencies.

    Ids follow first-occurrence order. Tokens added through :meth:`extend`
    carry zero counts; the ``min_count`` guarantee applies to counted tokens.
    """

    tokens: tuple[str, ...]
    frequency: tuple[int, ...]
    doc_frequency: tuple[int, ...]
    min_count: int = 1
    _ids: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})
        if len(self._ids) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, OOV_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(t, OOV_ID) for t in tokens]

    def extend(self, tokens: Iterable[str]) -> "Vocabulary":
        new = [t for t in dict.fromkeys(tokens) if t not in self._ids]
        if not new:
            return self
        return Vocabulary(
            tokens=self.tokens + tuple(new),
            frequency=self.frequency + (0,) * len(new),
            doc_frequency=self.doc_frequency + (0,) * len(new),
            min_count=self.min_count,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.tokens:
            h.update(t.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def _token_lists(documents: Iterable[Question | Sequence[str]]) -> Iterable[Sequence[str]]:
    for doc in documents:
        yield doc.tokens if isinstance(doc, Question) else doc


def build_vocabulary(documents: Iterable[Question | Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Keep tokens whose corpus frequency reaches ``min_count``."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    freq: Counter[str] = Counter()
    df: Counter[str] = Counter()
    order: dict[str, None] = {}
    for toks in _token_lists(documents):
        freq.update(toks)
        df.update(set(toks))
        for t in toks:
            order.setdefault(t, None)
    kept = [t for t in order if freq[t] >= min_count]
    return Vocabulary(
        tokens=tuple(kept),
        frequency=tuple(freq[t] for t in kept),
        doc_frequency=tuple(df[t] for t in kept),
        min_count=min_count,
    )


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _data_lines(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line


def load_pool(path: str | os.PathLike, mode: str = WHITESPACE_NORMALIZE) -> QuestionPool:
    """Read ``id<TAB>category<TAB>text`` lines into a pool."""
    questions = []
    seen: dict[str, int] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        qid, category, text = parts
        if not qid:
            raise CorpusFormatError(f"{path}:{lineno}: empty question id")
        if qid in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate question id {qid!r} (first on line {seen[qid]})")
        seen[qid] = lineno
        questions.append(Question.from_text(qid, text, category or None, mode))
    return QuestionPool(tuple(questions), tokenizer_fingerprint(mode))


def save_pool(pool: QuestionPool, path: str | os.PathLike) -> None:
    lines = []
    for q in pool:
        _check_field(q.id, "id")
        _check_field(q.category or "", "category")
        _check_field(q.text, "text")
        lines.append(f"{q.id}\t{q.category or ''}\t{q.text}\n")
    atomic_write_text(path, "".join(lines))


def load_pairs(path: str | os.PathLike, pool: QuestionPool,
               mode: str = WHITESPACE_NORMALIZE) -> list[LabeledPair]:
    """Read ``pair_id<TAB>user_text<TAB>standard_question_id<TAB>label`` lines.

    Standard question ids are resolved against ``pool``.
    """
    pairs = []
    seen = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise CorpusFormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        pair_id, user_text, std_id, label = parts
        if pair_id in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate pair id {pair_id!r}")
        seen.add(pair_id)
        if label not in ("0", "1"):
            raise CorpusFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        if std_id not in pool:
            raise CorpusFormatError(f"{path}:{lineno}: unknown standard question id {std_id!r}")
        user = Question.from_text(f"{pair_id}:user", user_text, None, mode)
        pairs.append(LabeledPair(pair_id, user, pool.get(std_id), int(label)))
    return pairs


def save_pairs(pairs: Sequence[LabeledPair], path: str | os.PathLike) -> None:
    lines = []
    for p in pairs:
        _check_field(p.pair_id, "pair id")
        _check_field(p.user_question.text, "user text")
        lines.append(f"{p.pair_id}\t{p.user_question.text}\t{p.standard_question.id}\t{p.label}\n")
    atomic_write_text(path, "".join(lines))


def load_queries(path: str | os.PathLike, mode: str = WHITESPACE_NORMALIZE) -> list[Question]:
    """Read ``query_id<TAB>text`` lines (batch query / evaluation input)."""
    queries = []
    seen = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
        qid, text = parts
        if qid in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(Question.from_text(qid, text, None, mode))
    return queries


def save_queries(queries: Sequence[Question], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(f"{q.id}\t{q.text}\n" for q in queries))


def load_gold(path: str | os.PathLike) -> dict[str, str]:
    """Read ``query_id<TAB>standard_question_id`` lines."""
    gold = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}")
        if parts[0] in gold:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate query id {parts[0]!r}")
        gold[parts[0]] = parts[1]
    return gold


def save_gold(gold: Mapping[str, str], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(f"{k}\t{v}\n" for k, v in gold.items()))


def read_corpus(path: str | os.PathLike, mode: str = WHITESPACE_NORMALIZE) -> list[list[str]]:
    """One sentence per line; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return [toks for toks in (tokenize(line, mode) for line in fh) if toks]


def _check_field(value: str, name: str) -> None:
    if "\t" in value or "\n" in value:
        raise CorpusFormatError(f"{name} {value!r} contains a tab or newline")
