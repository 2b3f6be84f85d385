"""Logical reasoning over the pooled pair representations.

Each pair attends over chain-compatible pairs, i.e. pairs sharing its head or
its tail, and is replaced by the attention-weighted sum. One layer covers all
two-hop chains; stacking layers extends the horizon.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EntityPair
from .errors import ConfigError, ShapeError

POOL_MODES = ("chains", "all")


def chain_candidates(pairs: list[EntityPair], mode: str = "chains") -> list[np.ndarray]:
    """Candidate pool indices per pair.

    `chains`: pairs of the form (h, k) or (k, t) with k outside {h, t}.
    `all`: every other pair. Input order must already be deterministic.
    """
    if mode not in POOL_MODES:
        raise ConfigError(f"reasoning pool mode must be one of {POOL_MODES}: {mode!r}")
    out = []
    for i, p in enumerate(pairs):
        if mode == "all":
            cand = [j for j in range(len(pairs)) if j != i]
        else:
            cand = [
                j for j, q in enumerate(pairs)
                if j != i and ((q.head == p.head and q.tail != p.tail)
                               or (q.tail == p.tail and q.head != p.head))
            ]
        out.append(np.asarray(cand, dtype=np.int64))
    return out


def reasoning_update(reps: Tensor, candidates: list[np.ndarray],
                     w_att: Tensor) -> tuple[Tensor, np.ndarray]:
    """One synchronous self-attention pass over the pair pool.

    gamma_i = softmax over candidates(i) + {i} of (W r_i) . r_k, and the new
    representation is the gamma-weighted sum of the old ones. Returns the new
    (P, 3d) matrix and the dense (P, P) gamma matrix (zeros outside the pool).
    """
    n, width = reps.shape
    if w_att.shape != (width, width):
        raise ShapeError(f"reasoning_update: weight {w_att.shape}, expected {(width, width)}")
    if len(candidates) != n:
        raise ShapeError(f"reasoning_update: {len(candidates)} candidate sets for {n} pairs")
    mask = np.full((n, n), -np.inf)
    for i, cand in enumerate(candidates):
        mask[i, i] = 0.0
        mask[i, cand] = 0.0
    queries = ad.linear(reps, w_att)
    scores = ad.matmul(queries, ad.transpose(reps)) + ad.constant(mask)
    gamma = ad.softmax(scores)
    updated = ad.matmul(gamma, reps)
    return updated, gamma.data.copy()
