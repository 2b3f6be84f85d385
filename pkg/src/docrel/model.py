"""Full model: embeddings, encoders, both pair routes, reasoning, classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import inter as inter_mod
from . import intra as intra_mod
from .autodiff import Tensor
from .config import TrainingConfig, derive_rng
from .corpus import Document, EntityPair, PairKind, Vocabulary, enumerate_entity_pairs, featurize_document
from .encoders import (BiLstm, EmbeddingLayers, EncodedSentence, embed_tokens,
                       encode_document, encode_sentence, glorot)
from .errors import ContractError, ShapeError
from .graph import EdgeKind, MentionGraph, build_mention_graph
from .inter import RgcnParams, aggregation_matrices, entity_rep, node_final_rep, propagate
from .optim import Parameter
from .reasoning import chain_candidates, reasoning_update
from .reps import PairRepresentation

BCE_EPS = 1e-12


@dataclass
class DocFeatures:
    """Everything about one document that does not depend on parameters."""

    doc: Document
    sent_feats: list[np.ndarray]   # per sentence (n_i, 3) id triples
    doc_feats: np.ndarray          # (m, 3), sentences concatenated
    sent_offsets: list[int]
    graph: MentionGraph
    agg: dict[EdgeKind, np.ndarray]
    pairs: list[EntityPair]
    pair_index: dict[tuple[int, int], int]
    mention_doc_spans: list[tuple[int, int]]    # per mention node id, document-level
    entity_mention_nodes: list[list[int]]       # per entity id
    gold: dict[tuple[int, int], list[int]]      # (h, t) -> relation ids


def prepare_document(doc: Document, vocab: Vocabulary,
                     allow_overlap: str = "reject") -> DocFeatures:
    sent_feats = featurize_document(doc, vocab, allow_overlap=allow_overlap)
    doc_feats = np.concatenate(sent_feats, axis=0) if sent_feats else np.zeros((0, 3), np.int64)
    offsets = doc.sentence_offsets()
    graph = build_mention_graph(doc)
    pairs = enumerate_entity_pairs(doc)
    spans = []
    for node in graph.nodes[:len(graph.mention_nodes)]:
        eid, mi, sid = node.payload
        m = doc.entities[eid].mentions[mi]
        spans.append((offsets[sid] + m.start, offsets[sid] + m.end))
    entity_nodes = [graph.entity_mention_node_ids(e.id) for e in doc.entities]
    gold: dict[tuple[int, int], list[int]] = {}
    for f in doc.facts:
        gold.setdefault((f.head, f.tail), []).append(f.relation)
    return DocFeatures(
        doc=doc, sent_feats=sent_feats, doc_feats=doc_feats, sent_offsets=offsets,
        graph=graph, agg=aggregation_matrices(graph), pairs=pairs,
        pair_index={(p.head, p.tail): i for i, p in enumerate(pairs)},
        mention_doc_spans=spans, entity_mention_nodes=entity_nodes, gold=gold)


class DropoutState:
    """Inverted-dropout mask source; freeze to reuse masks across forwards."""

    def __init__(self, rate: float, rng: np.random.Generator | None, frozen: bool = False):
        self.rate = rate
        self.rng = rng
        self.frozen = frozen
        self._masks: dict[tuple, np.ndarray] = {}

    def apply(self, t: Tensor, key: tuple) -> Tensor:
        if self.rate == 0.0 or self.rng is None:
            return t
        if self.frozen and key in self._masks:
            mask = self._masks[key]
            if mask.shape != t.shape:
                raise ContractError(f"frozen dropout mask {key} has shape {mask.shape}, "
                                    f"tensor has {t.shape}")
        else:
            mask = ad.dropout_mask(self.rng, t.shape, self.rate)
            if self.frozen:
                self._masks[key] = mask
        return ad.dropout(t, mask)


_NO_DROPOUT = DropoutState(0.0, None)


@dataclass
class ClassifierParams:
    w2: Parameter  # (hidden, 3 * model width)
    b1: Parameter  # (hidden,)
    w1: Parameter  # (|R|, hidden)
    b2: Parameter  # (|R|,)

    def parameters(self) -> list[Parameter]:
        return [self.w2, self.b1, self.w1, self.b2]

    @classmethod
    def create(cls, rng: np.random.Generator, rep_width: int, hidden: int,
               n_relations: int) -> "ClassifierParams":
        return cls(
            w2=Parameter("cls.w2", glorot(rng, (hidden, rep_width))),
            b1=Parameter("cls.b1", np.zeros(hidden)),
            w1=Parameter("cls.w1", glorot(rng, (n_relations, hidden))),
            b2=Parameter("cls.b2", np.zeros(n_relations)),
        )


def relation_probabilities(rep, params: ClassifierParams,
                           dropout: DropoutState = _NO_DROPOUT,
                           dropout_key: tuple = ("cls",)) -> Tensor:
    """sigmoid(W1 relu(W2 r + b1) + b2), per relation independently."""
    rep = ad.as_tensor(rep) if not isinstance(rep, Tensor) else rep
    if rep.shape[-1] != params.w2.data.shape[1]:
        raise ShapeError(f"relation_probabilities: rep width {rep.shape[-1]}, "
                         f"classifier expects {params.w2.data.shape[1]}")
    hidden = ad.relu(ad.linear(rep, params.w2.tensor, params.b1.tensor))
    hidden = dropout.apply(hidden, dropout_key)
    return ad.sigmoid(ad.linear(hidden, params.w1.tensor, params.b2.tensor))


def bce_loss(probs: Tensor, targets: np.ndarray, reduction: str = "sum") -> Tensor:
    """Binary cross entropy against a {0,1} target array, summed by default."""
    if probs.shape != tuple(np.asarray(targets).shape):
        raise ShapeError(f"bce_loss: probs {probs.shape} vs targets {np.asarray(targets).shape}")
    y = np.asarray(targets, dtype=probs.data.dtype)
    p = ad.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    pos = ad.mul(ad.log(p), ad.constant(y))
    neg = ad.mul(ad.log(1.0 - p), ad.constant(1.0 - y))
    total = -1.0 * ad.tsum(pos + neg)
    if reduction == "mean":
        return total / float(max(1, y.size))
    if reduction != "sum":
        raise ContractError(f"bce_loss: unknown reduction {reduction!r}")
    return total


@dataclass
class DocForward:
    """Forward results for one document over a chosen pair subset."""

    pairs: list[EntityPair]
    reps_pre: list[PairRepresentation]   # pre-reasoning, with attention provenance
    pool_input: Tensor                   # (P, 3d) matrix entering the last reasoning layer
    reps_post: Tensor                    # (P, 3d) matrix after reasoning (== pool when disabled)
    gamma: np.ndarray | None             # (P, P) attention of the last reasoning layer
    candidates: list[np.ndarray] | None
    probs: Tensor                        # (P, |R|)


class RelationModel:
    """Parameter container plus the end-to-end forward pass."""

    def __init__(self, config: TrainingConfig, vocab: Vocabulary):
        config.validate()
        self.config = config
        self.vocab = vocab
        rng = derive_rng(config.seed, "init")
        d_in = config.word_dim + config.type_dim + config.coref_dim
        self.embeddings = EmbeddingLayers.create(
            rng, vocab.n_words, vocab.n_types, vocab.n_coref,
            config.word_dim, config.type_dim, config.coref_dim)
        self.sent_encoder = BiLstm.create(rng, "enc.sent", d_in, config.hidden_size)
        self.doc_encoder = BiLstm.create(rng, "enc.doc", d_in, config.hidden_size)
        self.projection: Parameter | None = None
        if config.needs_projection:
            self.projection = Parameter(
                "proj", glorot(rng, (config.model_width, config.encoder_width)))
        dm = config.model_width
        self.w_intra = Parameter("intra.att", glorot(rng, (dm, 2 * dm)))
        self.rgcn = RgcnParams.create(rng, dm, config.gcn_layers)
        self.w_evidence = Parameter("inter.evidence", glorot(rng, (1, 3 * dm)))
        self.w_att = Parameter("reason.att", glorot(rng, (3 * dm, 3 * dm)))
        self.classifier = ClassifierParams.create(
            rng, 3 * dm, config.classifier_width, vocab.n_relations)

    def parameters(self) -> list[Parameter]:
        out = self.embeddings.parameters()
        out += self.sent_encoder.parameters()
        out += self.doc_encoder.parameters()
        if self.projection is not None:
            out.append(self.projection)
        out.append(self.w_intra)
        out += self.rgcn.parameters()
        out.append(self.w_evidence)
        out.append(self.w_att)
        out += self.classifier.parameters()
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in arrays:
                raise ContractError(f"missing parameter {p.name!r} in state")
            src = np.asarray(arrays[p.name])
            if src.shape != p.data.shape:
                raise ShapeError(f"parameter {p.name!r}: state {src.shape} vs model {p.data.shape}")
            p.data[...] = src

    def _project(self, t: Tensor) -> Tensor:
        if self.projection is None:
            return t
        return ad.linear(t, self.projection.tensor)

    def initial_node_states(self, feats: DocFeatures, g_doc: Tensor,
                            sent_summaries: list[Tensor], d_doc: Tensor) -> Tensor:
        """Graph node start values: mention nodes from their document-level token
        means, sentence nodes from the sentence summaries, the document node from
        the document summary. Inputs are already projected to the model width."""
        rows = []
        for s, t in feats.mention_doc_spans:
            rows.append(ad.take_row(g_doc, s) if t - s == 1
                        else ad.mean(ad.narrow(g_doc, s, t), axis=0))
        rows.extend(sent_summaries)
        rows.append(d_doc)
        return ad.stack(rows)

    def forward(self, feats: DocFeatures, pairs: list[EntityPair] | None = None,
                dropout: DropoutState = _NO_DROPOUT) -> DocForward:
        cfg = self.config
        doc = feats.doc
        if pairs is None:
            pairs = feats.pairs
        if not pairs:
            raise ContractError(f"document {doc.title!r}: no entity pairs to score")

        enc_sents = []
        for sid, sf in enumerate(feats.sent_feats):
            enc = encode_sentence(embed_tokens(sf, self.embeddings), self.sent_encoder)
            enc_sents.append(EncodedSentence(
                g=dropout.apply(self._project(enc.g), ("sent", sid)),
                summary=self._project(enc.summary)))

        route_inter = [
            p for p in pairs
            if p.kind is PairKind.INTER or cfg.inter4intra
        ]
        node_m = None
        if route_inter:
            enc_doc = encode_document(embed_tokens(feats.doc_feats, self.embeddings),
                                      self.doc_encoder)
            g_doc = dropout.apply(self._project(enc_doc.g), ("doc",))
            d_doc = self._project(enc_doc.summary)
            h0 = self.initial_node_states(feats, g_doc,
                                          [enc.summary for enc in enc_sents], d_doc)
            states = propagate(h0, feats.agg, self.rgcn)
            node_m = node_final_rep(states, self.rgcn.w_u)

        sent_node_ids = feats.graph.sentence_nodes
        m_sentences = None
        entity_cache: dict[int, Tensor] = {}

        def entity_vec(eid: int) -> Tensor:
            if eid not in entity_cache:
                entity_cache[eid] = entity_rep(feats.entity_mention_nodes[eid], node_m)
            return entity_cache[eid]

        reps_pre: list[PairRepresentation] = []
        for p in pairs:
            if p.kind is PairKind.INTRA and not cfg.inter4intra:
                rep = intra_mod.intra_pair_rep(
                    p, doc, enc_sents, self.w_intra.tensor, cfg.topk, cfg.beta,
                    average=cfg.intra_average)
            else:
                if m_sentences is None:
                    m_sentences = ad.take_rows(node_m, np.asarray(sent_node_ids))
                rep = inter_mod.inter_pair_rep(
                    p, entity_vec(p.head), entity_vec(p.tail), m_sentences,
                    self.w_evidence.tensor, kind=p.kind)
            if cfg.no_context:
                dm = cfg.model_width
                kept = ad.narrow(rep.vector, 0, 2 * dm)
                rep.vector = ad.concat([kept, ad.constant(np.zeros(dm))], axis=-1)
            reps_pre.append(rep)

        pool = ad.stack([r.vector for r in reps_pre])
        pool_input = pool
        gamma = None
        candidates = None
        if not cfg.no_reasoning:
            candidates = chain_candidates(pairs, cfg.reasoning_pool)
            for _ in range(cfg.reasoning_layers):
                pool_input = pool
                pool, gamma = reasoning_update(pool, candidates, self.w_att.tensor)
        probs = relation_probabilities(pool, self.classifier, dropout, ("cls",))
        return DocForward(pairs=pairs, reps_pre=reps_pre, pool_input=pool_input,
                          reps_post=pool, gamma=gamma, candidates=candidates, probs=probs)

    def gold_targets(self, feats: DocFeatures, pairs: list[EntityPair]) -> np.ndarray:
        y = np.zeros((len(pairs), self.vocab.n_relations))
        for i, p in enumerate(pairs):
            for r in feats.gold.get((p.head, p.tail), ()):
                y[i, r] = 1.0
        return y

    def document_loss(self, feats: DocFeatures, pairs: list[EntityPair],
                      dropout: DropoutState = _NO_DROPOUT) -> Tensor:
        out = self.forward(feats, pairs, dropout)
        return bce_loss(out.probs, self.gold_targets(feats, pairs),
                        reduction=self.config.loss_reduction)
