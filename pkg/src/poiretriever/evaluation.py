"""Accuracy@N and MRR under local (same-city) and global candidate pools."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import CorpusError, PoiCollection, Question
from .index import CandidateFilter, EmbeddingIndex, RankedResult, search

LOCAL_NS = (3, 5, 30)
GLOBAL_NS = (5, 30, 100)


class Ranker(Protocol):
    def rank(self, questions: Sequence[Question], filters: Sequence[CandidateFilter | None],
             k: int) -> list[list[RankedResult]]: ...


def accuracy_at_n(ranked: Sequence[str], answers, n: int) -> int:
    if n < 1:
        raise ValueError("N must be >= 1")
    answers = set(answers)
    if not answers:
        raise ValueError("empty answer set")
    return int(any(pid in answers for pid in ranked[:n]))


def reciprocal_rank(ranked: Sequence[str], answers) -> float:
    """1/rank of the first answer; 0 when no answer was retrieved."""
    answers = set(answers)
    if not answers:
        raise ValueError("empty answer set")
    for i, pid in enumerate(ranked, start=1):
        if pid in answers:
            return 1.0 / i
    return 0.0


@dataclass(frozen=True)
class EvalReport:
    mode: str
    acc_at: dict[int, float]
    mrr: float
    question_count: int

    def rows(self) -> list[tuple[str, float]]:
        rows = [(f"{self.mode}_acc@{n}", v) for n, v in sorted(self.acc_at.items())]
        rows.append((f"{self.mode}_mrr", self.mrr))
        return rows

    def to_dict(self) -> dict:
        return {"mode": self.mode, "acc_at": {str(k): v for k, v in sorted(self.acc_at.items())},
                "mrr": self.mrr, "question_count": self.question_count}


def write_report(reports: Sequence[EvalReport], csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for r in reports:
            for name, value in r.rows():
                w.writerow([name, f"{value:.4f}"])
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


def candidate_filters(questions: Sequence[Question], pois: PoiCollection, mode: str,
                      filter_type: bool = False) -> list[CandidateFilter | None]:
    if mode == "global":
        return [None] * len(questions)
    if mode != "local":
        raise ValueError(f"unknown evaluation mode {mode!r}")
    unknown = sorted({q.city for q in questions if q.city not in pois.by_city})
    if unknown:
        raise CorpusError(f"questions reference unknown cities: {unknown}")
    filters = []
    for q in questions:
        ptype = pois[q.answer_ids[0]].poi_type if filter_type else None
        filters.append(CandidateFilter(city=q.city, poi_type=ptype))
    return filters


def summarize(rankings: Sequence[Sequence[str]], questions: Sequence[Question], mode: str,
              ns: Sequence[int]) -> EvalReport:
    if not questions:
        raise ValueError("evaluation needs at least one question")
    acc = {n: float(np.mean([accuracy_at_n(r, q.answer_ids, n)
                             for r, q in zip(rankings, questions)])) for n in ns}
    mrr = float(np.mean([reciprocal_rank(r, q.answer_ids) for r, q in zip(rankings, questions)]))
    return EvalReport(mode, acc, mrr, len(questions))


def evaluate(ranker: Ranker, questions: Sequence[Question], pois: PoiCollection, mode: str,
             ns: Sequence[int] | None = None, k_retrieve: int | None = None,
             filter_type: bool = False) -> EvalReport:
    ns = tuple(ns) if ns else (LOCAL_NS if mode == "local" else GLOBAL_NS)
    k = k_retrieve or max(set(ns) | {100})
    filters = candidate_filters(questions, pois, mode, filter_type)
    results = ranker.rank(list(questions), filters, k)
    return summarize([[r.poi_id for r in res] for res in results], questions, mode, ns)


class IndexRanker:
    """Ranks with a question encoder against a pre-computed POI index."""

    def __init__(self, model, index: EmbeddingIndex, threads: int = 1):
        if index.dim != model.config.d:
            raise ValueError(f"index dim {index.dim} != model dim {model.config.d}")
        self.model = model
        self.index = index
        self.threads = threads

    def encode(self, questions: Sequence[Question]) -> np.ndarray:
        vecs, _ = self.model.encode_questions(self.model.question_inputs(questions))
        return vecs

    def rank(self, questions, filters, k):
        vecs = self.encode(questions)
        return [search(self.index, v, k, f, self.threads) for v, f in zip(vecs, filters)]
