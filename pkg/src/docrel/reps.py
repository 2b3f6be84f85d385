"""Pair representation containers shared by the intra and inter routes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .corpus import PairKind


@dataclass
class IntraContext:
    """Attention provenance for one (head mention, tail mention) co-occurrence."""

    sentence_id: int
    head_span: tuple[int, int]
    tail_span: tuple[int, int]
    scores: np.ndarray  # relatedness score per word, pre-softmax
    alpha: np.ndarray   # softmax weights, sums to 1
    topk: np.ndarray    # chosen word indices, ascending


@dataclass
class EvidenceDistribution:
    """Per-sentence evidence scores for an inter-sentential pair."""

    scores: np.ndarray  # logistic score per sentence, in (0, 1)
    alpha: np.ndarray   # scores normalized by their sum


@dataclass
class PairRepresentation:
    head: int
    tail: int
    kind: PairKind
    vector: Tensor  # width 3 x model width: [head ; tail ; context]
    provenance: "list[IntraContext] | EvidenceDistribution | None" = None
