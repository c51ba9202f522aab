"""Message passing over an inferred graph with a gated dual-GRU update.

Each pathway owns a node encoder f (window -> embedding), a message net g
applied to embedding differences, two GRUs, and a scalar gate network.  One
round computes messages on the current edges, aggregates them per node with
the adjacency weights, and blends the two GRU updates with the learned gate.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .latent_graph import EdgeSet
from .nn import GateUnit, GRUCell, MLP2, ParamRegistry


def aggregate(messages: Tensor, weights: Tensor, targets, num_nodes: int) -> Tensor:
    """Weighted sum of incoming messages per node; empty neighborhoods stay zero.

    messages: (E, D); weights: (E,); targets[e] is the node receiving edge e.
    """
    targets = np.asarray(targets, dtype=np.intp)
    if targets.size == 0:
        d = messages.shape[1] if messages.ndim == 2 else 0
        return Tensor(np.zeros((num_nodes, d)))
    weighted = ad.mul(messages, ad.reshape(weights, (targets.size, 1)))
    return ad.scatter_add_rows(weighted, targets, num_nodes)


class MessagePassingUnit:
    """The per-pathway networks; ``messages=False`` keeps only the encoder."""

    def __init__(
        self,
        reg: ParamRegistry,
        prefix: str,
        input_len: int,
        embed_dim: int,
        hidden_dim: int,
        *,
        single_gru: bool = False,
        messages: bool = True,
    ):
        self.input_len = input_len
        self.embed_dim = embed_dim
        self.encoder = MLP2(reg, f"{prefix}.enc", input_len, hidden_dim, embed_dim)
        if messages:
            self.message_net = MLP2(reg, f"{prefix}.msg", embed_dim, hidden_dim, embed_dim)
            # update gates start mostly closed so the encoder output survives the
            # early rounds and message corrections phase in during training
            self.gru1 = GRUCell(reg, f"{prefix}.gru1", embed_dim, embed_dim, update_bias=-3.0)
            self.gru2 = None if single_gru else GRUCell(reg, f"{prefix}.gru2", embed_dim, embed_dim,
                                                        update_bias=-3.0)
            self.gate = None if single_gru else GateUnit(reg, f"{prefix}.gate", 2 * embed_dim, hidden_dim)
        else:
            self.message_net = None
            self.gru1 = None
            self.gru2 = None
            self.gate = None

    def encode_nodes(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.input_len:
            raise ContractError(f"window length {x.shape[1]} != configured {self.input_len}")
        return self.encoder(x)

    def compute_messages(self, h: Tensor, src, dst) -> Tensor:
        """g(h_src - h_dst) for each edge; (E, D)."""
        src = np.asarray(src, dtype=np.intp)
        dst = np.asarray(dst, dtype=np.intp)
        if src.size == 0:
            return Tensor(np.zeros((0, self.embed_dim)))
        diff = ad.sub(ad.take_rows(h, src), ad.take_rows(h, dst))
        return self.message_net(diff)

    def gated_update(self, h: Tensor, agg: Tensor) -> Tensor:
        """Blend the two GRU updates with a per-node sigmoid gate (fixed to the
        first GRU when running single-GRU)."""
        h1 = self.gru1(h, agg)
        if self.gru2 is None:
            return h1
        h2 = self.gru2(h, agg)
        beta = self.gate(ad.concat([h, agg], axis=1))  # (N, 1) in (0, 1)
        return ad.add(ad.mul(beta, h1), ad.mul(ad.sub(1.0, beta), h2))

    def run(self, x: Tensor, graph_fn, rounds: int, *, recompute_each_round: bool = False):
        """Encode, then ``rounds`` iterations of messages/aggregate/update.

        ``graph_fn(h)`` returns the EdgeSet to use; by default it is called
        once on the initial embeddings and the edges stay fixed.  rounds=0
        returns the raw encoding (testing hook).
        """
        if rounds < 0:
            raise ContractError(f"rounds must be >= 0, got {rounds}")
        h = self.encode_nodes(x)
        edges: EdgeSet | None = None
        for _ in range(rounds):
            if edges is None or recompute_each_round:
                edges = graph_fn(h)
            m = self.compute_messages(h, edges.src, edges.dst)
            agg = aggregate(m, edges.weights, edges.src, edges.num_nodes)
            h = self.gated_update(h, agg)
        return h


def run_message_passing(unit: MessagePassingUnit, x: Tensor, graph_fn, rounds: int, **kw) -> Tensor:
    return unit.run(x, graph_fn, rounds, **kw)
