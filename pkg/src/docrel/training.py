"""Training loop, negative resampling, threshold calibration, prediction runs."""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, backward
from .config import TrainingConfig, derive_rng
from .corpus import Document, Vocabulary, build_vocabulary, sample_training_pairs
from .errors import ContractError, TrainingDiverged
from .model import DocFeatures, DropoutState, RelationModel, bce_loss, prepare_document
from .optim import AdamW


@dataclass(frozen=True)
class PredRecord:
    title: str
    head: int
    tail: int
    relation: int
    score: float


@dataclass
class PredictionSet:
    """Per (document, head, tail, relation) probabilities plus a decision rule.

    `threshold=None` means the records were loaded as final decisions.
    """

    records: list[PredRecord]
    threshold: float | None = 0.5

    def decided(self) -> set[tuple[str, int, int, int]]:
        if self.threshold is None:
            return {(r.title, r.head, r.tail, r.relation) for r in self.records}
        return {(r.title, r.head, r.tail, r.relation)
                for r in self.records if r.score >= self.threshold}


def calibrate_threshold(scores: np.ndarray, gold: np.ndarray,
                        default: float = 0.5, warn=None) -> float:
    """Micro-F1-maximizing threshold over all distinct scores; ties pick the larger.

    A sentinel above the maximum score is always a candidate so "predict
    nothing" can win when every prediction is wrong.
    """
    scores = np.asarray(scores, dtype=float)
    gold = np.asarray(gold, dtype=bool)
    if scores.size == 0:
        if warn:
            warn("calibrate_threshold: empty dev set, falling back to default")
        return default
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    g_sorted = gold[order]
    tp = np.cumsum(g_sorted)
    pred = np.arange(1, scores.size + 1)
    total_gold = int(gold.sum())
    f1 = np.zeros(scores.size)
    denom = pred + total_gold
    np.divide(2.0 * tp, denom, out=f1, where=denom > 0)
    # keep only positions where the threshold can actually sit (last of each tie run)
    best_theta = float(s_sorted[0]) + 1.0  # predict nothing
    best_f1 = 0.0
    for i in range(scores.size):
        if i + 1 < scores.size and s_sorted[i + 1] == s_sorted[i]:
            continue
        theta = float(s_sorted[i])
        if f1[i] > best_f1 or (f1[i] == best_f1 and theta > best_theta):
            best_f1 = float(f1[i])
            best_theta = theta
    return best_theta


def predict_documents(model: RelationModel, features: list[DocFeatures],
                      threshold: float | None = None, threads: int = 1) -> PredictionSet:
    """Score every ordered entity pair of every document (no sampling)."""

    def run(feats: DocFeatures) -> list[PredRecord]:
        out = model.forward(feats)
        probs = out.probs.data
        recs = []
        for i, p in enumerate(out.pairs):
            for r in range(probs.shape[1]):
                recs.append(PredRecord(feats.doc.title, p.head, p.tail, r, float(probs[i, r])))
        return recs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, features))
    else:
        chunks = [run(f) for f in features]
    records = [r for chunk in chunks for r in chunk]
    return PredictionSet(records=records, threshold=threshold)


def _micro_f1(preds: PredictionSet, gold: set[tuple[str, int, int, int]]) -> float:
    decided = preds.decided()
    tp = len(decided & gold)
    if not decided or not gold or tp == 0:
        return 0.0
    p = tp / len(decided)
    r = tp / len(gold)
    return 2 * p * r / (p + r)


def gold_instance_set(docs: list[Document]) -> set[tuple[str, int, int, int]]:
    return {(d.title, f.head, f.tail, f.relation) for d in docs for f in d.facts}


@dataclass
class EpochStats:
    epoch: int
    loss: float
    n_pairs: int
    dev_f1: float | None = None
    threshold: float | None = None


@dataclass
class TrainResult:
    model: RelationModel
    vocab: Vocabulary
    history: list[EpochStats] = field(default_factory=list)
    best_state: dict[str, np.ndarray] | None = None
    best_f1: float | None = None
    threshold: float = 0.5


def train_model(train_docs: list[Document], config: TrainingConfig,
                dev_docs: list[Document] | None = None,
                vocab: Vocabulary | None = None,
                log=lambda msg: print(msg, file=sys.stderr)) -> TrainResult:
    """Run the full loop: resample negatives, shuffle, step, periodically evaluate.

    Deterministic for a fixed seed on one thread; the best dev checkpoint (or
    the final state when no dev set is given) lands in the result.
    """
    config.validate()
    if not train_docs:
        raise ContractError("train_model: empty training corpus")
    if vocab is None:
        vocab = build_vocabulary(train_docs, min_freq=config.min_freq)
    features = [prepare_document(d, vocab, config.allow_overlap) for d in train_docs]
    dev_features = [prepare_document(d, vocab, config.allow_overlap) for d in dev_docs] \
        if dev_docs else None
    dev_gold = gold_instance_set(dev_docs) if dev_docs else None

    model = RelationModel(config, vocab)
    optimizer = AdamW(model.parameters(), lr=config.learning_rate,
                      weight_decay=config.weight_decay)
    result = TrainResult(model=model, vocab=vocab, threshold=config.threshold)
    result.best_state = model.state_arrays()

    def evaluate_dev(epoch: int) -> tuple[float, float]:
        preds = predict_documents(model, dev_features)
        scores = np.array([r.score for r in preds.records])
        flags = np.array([(r.title, r.head, r.tail, r.relation) in dev_gold
                          for r in preds.records])
        theta = calibrate_threshold(scores, flags, default=config.threshold, warn=log)
        preds.threshold = theta
        return _micro_f1(preds, dev_gold), theta

    best_f1 = -1.0
    for epoch in range(1, config.epochs + 1):
        sample_rng = derive_rng(config.seed, "negatives", epoch)
        shuffle_rng = derive_rng(config.seed, "shuffle", epoch)
        drop_rng = derive_rng(config.seed, "dropout", epoch)
        sampled = [
            sample_training_pairs(f.pairs, f.doc.facts, config.neg_ratio, sample_rng)
            for f in features
        ]
        order = shuffle_rng.permutation(len(features))
        epoch_loss = 0.0
        epoch_pairs = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            dropout = DropoutState(config.dropout, drop_rng)
            with Tape():
                loss = None
                for di in batch:
                    if not sampled[di]:
                        continue
                    doc_loss = model.document_loss(features[di], sampled[di], dropout)
                    loss = doc_loss if loss is None else loss + doc_loss
                    epoch_pairs += len(sampled[di])
                if loss is None:
                    continue
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}",
                        epoch=epoch, batch=start // config.batch_size,
                        max_abs_grad=optimizer.max_abs_grad())
                backward(loss)
                epoch_loss += value
            optimizer.step()

        stats = EpochStats(epoch=epoch, loss=epoch_loss, n_pairs=epoch_pairs)
        if dev_features and (epoch % config.eval_every == 0 or epoch == config.epochs):
            f1, theta = evaluate_dev(epoch)
            stats.dev_f1, stats.threshold = f1, theta
            if f1 > best_f1:
                best_f1 = f1
                result.best_state = model.state_arrays()
                result.best_f1 = f1
                result.threshold = theta
        result.history.append(stats)
        log(f"epoch {epoch}: loss={epoch_loss:.4f} pairs={epoch_pairs}"
            + (f" dev_f1={stats.dev_f1:.4f}" if stats.dev_f1 is not None else ""))

    if not dev_features:
        result.best_state = model.state_arrays()
    return result
