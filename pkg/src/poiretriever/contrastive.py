"""Contrastive training of the bi-encoder: NLL over one positive and n tiered negatives,
two-phase schedule, and per-epoch hard-negative mining."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import DigestLimits, PoiCollection, Question
from .encoders import BiEncoder, PoiInputs, QuestionInputs
from .errors import ConfigError
from .evaluation import IndexRanker, evaluate
from .index import EmbeddingIndex, top_k
from .nn import Adam, lr_at

log = logging.getLogger(__name__)

TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class TrainingInstance:
    question: Question
    positive: str
    negatives: tuple[tuple[str, str], ...] = ()  # (poi_id, tier)


@dataclass(frozen=True)
class TrainConfig:
    total_epochs: int = 10
    phase1_epochs: int = 5
    batch_size: int = 8
    base_lr: float = 2e-5
    n_negatives: int = 15
    phase1_mix: dict = field(default_factory=lambda: {"easy": 8, "medium": 7})
    phase2_mix: dict = field(default_factory=lambda: {"medium": 3, "hard": 12})
    mining_k: int = 30
    freeze_location: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.phase1_epochs <= self.total_epochs:
            raise ConfigError("phase1_epochs must lie in [0, total_epochs]")
        if self.batch_size < 1 or self.n_negatives < 1 or self.mining_k < 1 or self.base_lr <= 0:
            raise ConfigError("batch_size, n_negatives, mining_k and base_lr must be positive")
        for name in ("phase1_mix", "phase2_mix"):
            mix = getattr(self, name)
            if set(mix) - set(TIERS) or any(v < 0 for v in mix.values()):
                raise ConfigError(f"{name} must map tiers {TIERS} to non-negative counts")
            if sum(mix.values()) != self.n_negatives:
                raise ConfigError(f"{name} counts sum to {sum(mix.values())}, "
                                  f"expected n_negatives={self.n_negatives}")


def nll_loss(sim_pos: float, sim_negs: Sequence[float]) -> float:
    """Negative log-likelihood of the positive under a softmax over positive + negatives."""
    if len(sim_negs) == 0:
        raise ValueError("nll_loss needs at least one negative")
    scores = np.concatenate([[sim_pos], np.asarray(sim_negs, dtype=np.float64)])
    top = scores.max()
    return float(top + np.log(np.exp(scores - top).sum()) - sim_pos)


def nll_rows(scores: np.ndarray):
    """Per-row NLL with the positive in column 0, and d loss / d scores."""
    top = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - top)
    z = e.sum(axis=1, keepdims=True)
    loss = (top[:, 0] + np.log(z[:, 0])) - scores[:, 0]
    grad = e / z
    grad[:, 0] -= 1.0
    return loss, grad


def build_instances(questions: Sequence[Question], pois: PoiCollection) -> list[TrainingInstance]:
    out = []
    for q in questions:
        answers = [a for a in q.answer_ids if a in pois.by_id]
        if not answers:
            raise ValueError(f"question {q.id} has no resolvable answers")
        out.extend(TrainingInstance(q, a) for a in answers)
    return out


def sample_negatives(instance: TrainingInstance, pois: PoiCollection, tier_mix: dict,
                     hard_pool: dict[str, list[str]] | None, rng: np.random.Generator
                     ) -> TrainingInstance:
    """Fill negatives tier by tier; a short tier is backfilled from the next easier one."""
    answers = set(instance.question.answer_ids) | {instance.positive}
    n_total = sum(tier_mix.values())
    n_available = sum(1 for pid in pois.by_id if pid not in answers)
    if n_available < n_total:
        raise ValueError(f"only {n_available} non-answer POIs for {n_total} negatives "
                         f"(question {instance.question.id})")
    pos = pois[instance.positive]
    pools = {
        "hard": (hard_pool or {}).get(instance.question.id, []),
        "medium": [p.id for p in pois.by_city_type.get((pos.city, pos.poi_type), [])],
        "easy": pois.ids,
    }
    chosen: list[tuple[str, str]] = []
    taken = set(answers)
    carry = 0
    for tier in ("hard", "medium", "easy"):
        want = tier_mix.get(tier, 0) + carry
        cands = [pid for pid in pools[tier] if pid not in taken]
        got = min(want, len(cands))
        if got:
            for i in rng.choice(len(cands), size=got, replace=False):
                chosen.append((cands[i], tier))
                taken.add(cands[i])
        carry = want - got
    return TrainingInstance(instance.question, instance.positive, tuple(chosen))


def contrastive_batch_loss(model: BiEncoder, q_inputs: QuestionInputs, p_inputs: PoiInputs,
                           q_rows, p_rows, backward: bool = True,
                           rng: np.random.Generator | None = None) -> float:
    """Mean NLL over a batch. ``p_rows[b]`` lists POI rows with the positive first."""
    p_rows = np.asarray(p_rows, dtype=np.int64)
    b, width = p_rows.shape
    q_sub = QuestionInputs([q_inputs.ids[i] for i in q_rows], q_inputs.features[q_rows],
                           q_inputs.coords[q_rows])
    qv, q_back = model.encode_questions(q_sub, rng)
    pv, p_back = model.encode_pois(p_inputs.take(p_rows.reshape(-1)), rng)
    pv = pv.reshape(b, width, -1)
    scores = np.einsum("bd,bjd->bj", qv, pv)
    loss, dscores = nll_rows(scores)
    if backward:
        dscores /= b
        q_back(np.einsum("bj,bjd->bd", dscores, pv))
        p_back((dscores[:, :, None] * qv[:, None, :]).reshape(b * width, -1))
    return float(loss.mean())


def encode_all(model: BiEncoder, q_inputs: QuestionInputs, p_inputs: PoiInputs):
    qv, _ = model.encode_questions(q_inputs)
    pv, _ = model.encode_pois(p_inputs)
    return qv, pv


def _id_keys(ids: Sequence[str]) -> np.ndarray:
    keys = np.empty(len(ids), dtype=np.int64)
    keys[sorted(range(len(ids)), key=list(ids).__getitem__)] = np.arange(len(ids))
    return keys


def mine_hard_negatives(model: BiEncoder, questions: Sequence[Question], pois: PoiCollection,
                        k: int, q_inputs: QuestionInputs | None = None,
                        p_inputs: PoiInputs | None = None) -> dict[str, list[str]]:
    """Top-k non-answer POIs per question from a full global inference pass."""
    questions = list(questions)
    q_inputs = q_inputs or model.question_inputs(questions)
    p_inputs = p_inputs or model.poi_inputs(pois.pois)
    qv, pv = encode_all(model, q_inputs, p_inputs)
    keys = _id_keys(p_inputs.ids)
    row_of = {pid: i for i, pid in enumerate(p_inputs.ids)}
    pools = {}
    for qi, q in enumerate(questions):
        mask = np.ones(len(p_inputs.ids), dtype=np.uint8)
        for a in q.answer_ids:
            if a in row_of:
                mask[row_of[a]] = 0
        rows = top_k(pv @ qv[qi], keys, mask, k)
        pools[q.id] = [p_inputs.ids[r] for r in rows]
    return pools


@dataclass
class TraceRow:
    epoch: int
    phase: int
    mean_loss: float
    local_acc1: float
    global_acc1: float


@dataclass
class TrainResult:
    model: BiEncoder
    trace: list[TraceRow]
    tier_counts: list[dict[str, int]]

    def write_trace(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "phase", "mean_loss", "local_acc1", "global_acc1"])
            for r in self.trace:
                w.writerow([r.epoch, r.phase, f"{r.mean_loss:.6f}", f"{r.local_acc1:.4f}",
                            f"{r.global_acc1:.4f}"])


def _acc1(model, questions, pois, p_inputs) -> tuple[float, float]:
    vecs, _ = model.encode_pois(p_inputs)
    index = EmbeddingIndex(p_inputs.ids, [pois[i].city for i in p_inputs.ids],
                           [pois[i].poi_type for i in p_inputs.ids], vecs, "training")
    ranker = IndexRanker(model, index)
    local = evaluate(ranker, questions, pois, "local", ns=(1,), k_retrieve=1)
    glob = evaluate(ranker, questions, pois, "global", ns=(1,), k_retrieve=1)
    return local.acc_at[1], glob.acc_at[1]


def train(model: BiEncoder, pois: PoiCollection, questions: Sequence[Question],
          config: TrainConfig = TrainConfig(), limits: DigestLimits = DigestLimits(),
          track_accuracy: bool = True) -> TrainResult:
    """Two-phase contrastive training of ``model`` in place."""
    questions = list(questions)
    p_inputs = model.poi_inputs(pois.pois, limits)
    q_inputs = model.question_inputs(questions)
    p_row = {pid: i for i, pid in enumerate(p_inputs.ids)}
    q_row = {q.id: i for i, q in enumerate(questions)}
    skeletons = build_instances(questions, pois)
    steps_per_epoch = -(-len(skeletons) // config.batch_size)
    total_steps = max(1, steps_per_epoch * config.total_epochs)
    params = model.question_parameters() + model.p_text.parameters() + model.fusion.parameters()
    if not config.freeze_location:
        params += model.location_parameters()
    opt = Adam(params)
    step = 0
    trace, tier_counts = [], []
    hard_pool: dict[str, list[str]] = {}
    for epoch in range(config.total_epochs):
        phase = 1 if epoch < config.phase1_epochs else 2
        mix = config.phase1_mix if phase == 1 else config.phase2_mix
        if phase == 2:
            hard_pool = mine_hard_negatives(model, questions, pois, config.mining_k,
                                            q_inputs, p_inputs)
        rng = np.random.default_rng([config.seed, epoch])
        instances = [sample_negatives(s, pois, mix, hard_pool, rng) for s in skeletons]
        counts = {t: 0 for t in TIERS}
        for inst in instances:
            for _, tier in inst.negatives:
                counts[tier] += 1
        tier_counts.append(counts)
        order = rng.permutation(len(instances))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[start : start + config.batch_size]]
            q_rows = [q_row[inst.question.id] for inst in batch]
            p_rows = [[p_row[inst.positive]] + [p_row[pid] for pid, _ in inst.negatives]
                      for inst in batch]
            losses.append(contrastive_batch_loss(model, q_inputs, p_inputs, q_rows, p_rows,
                                                 rng=rng) * len(batch))
            opt.step(lr_at(step, total_steps, config.base_lr))
            step += 1
        mean_loss = sum(losses) / len(instances)
        local1 = global1 = float("nan")
        if track_accuracy:
            local1, global1 = _acc1(model, questions, pois, p_inputs)
        trace.append(TraceRow(epoch + 1, phase, mean_loss, local1, global1))
        log.info("epoch %d phase %d loss %.5f local@1 %.3f global@1 %.3f",
                 epoch + 1, phase, mean_loss, local1, global1)
    return TrainResult(model, trace, tier_counts)
