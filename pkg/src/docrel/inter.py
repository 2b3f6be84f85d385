"""Inter-sentential route: R-GCN over the mention graph plus evidence selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EntityPair, PairKind
from .errors import ContractError, ShapeError
from .graph import EdgeKind, MentionGraph
from .optim import Parameter
from .reps import EvidenceDistribution, PairRepresentation

EVIDENCE_EPS = 1e-12


@dataclass
class RgcnParams:
    layers: list[dict[EdgeKind, Parameter]]  # one (d_g, d_g) matrix per layer per edge kind
    w_u: Parameter                           # (d_g, (N+1) * d_g) layer-aggregation matrix

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer[kind] for kind in EdgeKind)
        out.append(self.w_u)
        return out

    @classmethod
    def create(cls, rng: np.random.Generator, width: int, n_layers: int) -> "RgcnParams":
        from .encoders import glorot
        layers = []
        for li in range(n_layers):
            layers.append({
                kind: Parameter(f"rgcn.{li}.{kind.value}", glorot(rng, (width, width)))
                for kind in EdgeKind
            })
        w_u = Parameter("rgcn.agg", glorot(rng, (width, (n_layers + 1) * width)))
        return cls(layers=layers, w_u=w_u)


def aggregation_matrices(g: MentionGraph) -> dict[EdgeKind, np.ndarray]:
    """Per-kind constant matrices A with A[u, v] = 1/c_u for v in N(u) or v = u.

    c_u = max(1, |N(u)|) so isolated nodes keep their self term intact.
    """
    n = g.n_nodes
    out = {}
    for kind in EdgeKind:
        adj = g.adjacency(kind)
        A = np.zeros((n, n))
        for u in range(n):
            c = max(1, len(adj[u]))
            A[u, adj[u]] = 1.0 / c
            A[u, u] += 1.0 / c
        out[kind] = A
    return out


def rgcn_layer(h: Tensor, agg: dict[EdgeKind, np.ndarray],
               layer_params: dict[EdgeKind, Parameter]) -> Tensor:
    """h_u' = relu(sum over kinds of (1/c) sum over N(u) + self of W_kind h_v)."""
    total = None
    for kind in EdgeKind:
        msg = ad.linear(h, layer_params[kind].tensor)
        routed = ad.matmul(ad.constant(agg[kind]), msg)
        total = routed if total is None else total + routed
    return ad.relu(total)


def propagate(h0: Tensor, agg: dict[EdgeKind, np.ndarray], params: RgcnParams) -> list[Tensor]:
    """All layer states [h^0 .. h^N]."""
    states = [h0]
    for layer_params in params.layers:
        states.append(rgcn_layer(states[-1], agg, layer_params))
    return states


def node_final_rep(states: list[Tensor], w_u: Parameter) -> Tensor:
    """m_u = relu(W_u [h^0 ; ... ; h^N]) per node."""
    cat = ad.concat(states, axis=-1)
    if w_u.data.shape[1] != cat.shape[1]:
        raise ShapeError(
            f"node_final_rep: aggregation matrix {w_u.data.shape} vs states {cat.shape}")
    return ad.relu(ad.linear(cat, w_u.tensor))


def entity_rep(mention_node_ids: list[int], m: Tensor) -> Tensor:
    """Mean of the final mention-node vectors of one entity."""
    if not mention_node_ids:
        raise ContractError("entity_rep: entity has no mention nodes")
    if len(mention_node_ids) == 1:
        return ad.take_row(m, mention_node_ids[0])
    return ad.mean(ad.take_rows(m, np.asarray(mention_node_ids)), axis=0)


def evidence_weights(head: Tensor, tail: Tensor, m_sentences: Tensor,
                     w_k: Tensor) -> tuple[Tensor, Tensor]:
    """Logistic evidence score per sentence, then sum-normalization.

    w_k has shape (1, 3 * d_g) and scores [head; tail; m_sentence_k]; the
    normalizer carries a 1e-12 floor so all-zero scores cannot divide by zero.
    """
    d = m_sentences.shape[1]
    if w_k.shape != (1, 3 * d):
        raise ShapeError(f"evidence_weights: weight {w_k.shape}, expected {(1, 3 * d)}")
    w = ad.reshape(w_k, (3 * d,))
    base = ad.matmul(ad.narrow(w, 0, 2 * d), ad.concat([head, tail], axis=-1))
    logits = ad.matmul(m_sentences, ad.narrow(w, 2 * d, 3 * d)) + base
    scores = ad.sigmoid(logits)
    alpha = ad.div(scores, ad.tsum(scores) + EVIDENCE_EPS)
    return scores, alpha


def inter_pair_rep(pair: EntityPair, head: Tensor, tail: Tensor, m_sentences: Tensor,
                   w_k: Tensor, kind: PairKind | None = None) -> PairRepresentation:
    """[head; tail; evidence-weighted sentence average] with the distribution kept."""
    scores, alpha = evidence_weights(head, tail, m_sentences, w_k)
    context = ad.matmul(alpha, m_sentences)
    vector = ad.concat([head, tail, context], axis=-1)
    return PairRepresentation(
        head=pair.head, tail=pair.tail, kind=kind or pair.kind, vector=vector,
        provenance=EvidenceDistribution(scores=scores.data.copy(), alpha=alpha.data.copy()))
