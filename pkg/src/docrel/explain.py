"""Explanation records: attended words, evidence sentences, reasoning chains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import PairKind
from .errors import NotFoundError
from .model import DocFeatures, RelationModel
from .reps import EvidenceDistribution


@dataclass
class WordHighlight:
    sentence_id: int
    token_index: int
    token: str
    alpha: float


@dataclass
class IntraContextView:
    sentence_id: int
    head_text: str
    tail_text: str
    top_words: list[WordHighlight]


@dataclass
class EvidenceView:
    sentence_id: int
    score: float   # logistic evidence score
    weight: float  # normalized


@dataclass
class ChainView:
    head: int
    tail: int
    gamma: float
    is_self: bool = False


@dataclass
class ExplanationRecord:
    title: str
    head: int
    tail: int
    kind: PairKind
    probabilities: np.ndarray
    decisions: list[int]
    intra_contexts: list[IntraContextView] = field(default_factory=list)
    evidence: list[EvidenceView] = field(default_factory=list)
    chains: list[ChainView] = field(default_factory=list)
    # raw forward values kept so the record can be replayed against the model
    gamma_row: np.ndarray | None = None
    candidate_ids: np.ndarray | None = None
    rep_before: np.ndarray | None = None
    rep_after: np.ndarray | None = None
    pool_before: np.ndarray | None = None


def explain_pair(model: RelationModel, feats: DocFeatures, head: int, tail: int,
                 threshold: float = 0.5) -> ExplanationRecord:
    """Run the forward pass for one document and package the attention weights."""
    doc = feats.doc
    idx = feats.pair_index.get((head, tail))
    if idx is None:
        raise NotFoundError(f"document {doc.title!r} has no pair ({head}, {tail})")
    out = model.forward(feats)
    pair = out.pairs[idx]
    rep = out.reps_pre[idx]
    probs = out.probs.data[idx].copy()
    record = ExplanationRecord(
        title=doc.title, head=head, tail=tail, kind=pair.kind, probabilities=probs,
        decisions=sorted(int(r) for r in np.nonzero(probs >= threshold)[0]),
        rep_before=out.pool_input.data[idx].copy(),
        rep_after=out.reps_post.data[idx].copy(),
        pool_before=out.pool_input.data.copy(),
    )

    if isinstance(rep.provenance, EvidenceDistribution):
        ev = rep.provenance
        record.evidence = [
            EvidenceView(sentence_id=k, score=float(ev.scores[k]), weight=float(ev.alpha[k]))
            for k in range(len(ev.alpha))
        ]
    elif rep.provenance:
        for ctx in rep.provenance:
            sent = doc.sentences[ctx.sentence_id]
            record.intra_contexts.append(IntraContextView(
                sentence_id=ctx.sentence_id,
                head_text=" ".join(sent[ctx.head_span[0]:ctx.head_span[1]]),
                tail_text=" ".join(sent[ctx.tail_span[0]:ctx.tail_span[1]]),
                top_words=[
                    WordHighlight(ctx.sentence_id, int(t), sent[int(t)], float(ctx.alpha[int(t)]))
                    for t in ctx.topk
                ],
            ))

    if out.gamma is not None:
        record.gamma_row = out.gamma[idx].copy()
        cand = out.candidates[idx]
        record.candidate_ids = cand.copy()
        views = [ChainView(head=head, tail=tail, gamma=float(record.gamma_row[idx]), is_self=True)]
        for j in cand:
            q = out.pairs[int(j)]
            views.append(ChainView(head=q.head, tail=q.tail,
                                   gamma=float(record.gamma_row[int(j)])))
        views.sort(key=lambda v: -v.gamma)
        record.chains = views
    return record


def render_explanation(record: ExplanationRecord, vocab=None) -> str:
    lines = [
        f"document: {record.title}",
        f"pair: head={record.head} tail={record.tail} kind={record.kind.value}",
    ]
    if record.decisions:
        for r in record.decisions:
            label = vocab.relation_label(r) if vocab is not None else str(r)
            lines.append(f"predicted: {label} (p={record.probabilities[r]:.4f})")
    else:
        lines.append("predicted: nothing above threshold")
    for ctx in record.intra_contexts:
        lines.append(f"co-occurrence in sentence {ctx.sentence_id}: "
                     f"[{ctx.head_text}] .. [{ctx.tail_text}]")
        for w in ctx.top_words:
            lines.append(f"  top word: {w.token!r} (alpha={w.alpha:.4f})")
    if record.evidence:
        lines.append("evidence sentences:")
        for ev in sorted(record.evidence, key=lambda e: -e.weight):
            lines.append(f"  sentence {ev.sentence_id}: score={ev.score:.4f} "
                         f"weight={ev.weight:.4f}")
    if record.chains:
        lines.append("reasoning attention:")
        for ch in record.chains:
            tag = " (self)" if ch.is_self else ""
            lines.append(f"  pair ({ch.head}, {ch.tail}): gamma={ch.gamma:.4f}{tag}")
    return "\n".join(lines) + "\n"
