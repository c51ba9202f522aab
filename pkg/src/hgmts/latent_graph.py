"""Latent graph inference from node embeddings via sparse self-attention.

A dense attention matrix over N nodes costs N^2 query-key dot products.  This
module keeps that to O(N log N): score every query against a small random key
sample, keep the n = floor(c * ln N) most concentrated queries, then attend
each of those only to its n strongest keys.  Rows of the resulting adjacency
that belong to unselected queries are exactly zero; selected rows are a
softmax over their selected keys and sum to one.

Gradients flow through the retained attention weights; the discrete top-n
choices are made on plain arrays and act as constants during backward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor


@dataclass
class LgslConfig:
    """Sampling factor c sets n = floor(c * ln N), clamped to [1, N]."""

    sampling_c: float
    seed: int = 0


def sample_count(c: float, n_nodes: int) -> int:
    """n = floor(c * ln N), clamped to [1, N]. Natural log throughout."""
    if n_nodes < 1:
        raise ContractError(f"need at least one node, got {n_nodes}")
    raw = math.floor(c * math.log(n_nodes)) if n_nodes > 1 else 0
    return max(1, min(n_nodes, raw))


def c_for_gamma(gamma: float, n_nodes: int) -> float:
    """Sampling factor whose floor(c * ln N) hits round(gamma * N), clamped to [1, N]."""
    n = max(1, min(n_nodes, round(gamma * n_nodes)))
    if n_nodes <= 1:
        return 1.0
    return (n + 0.5) / math.log(n_nodes)  # +0.5 keeps the floor off an exact boundary


@dataclass
class EdgeSet:
    """Flat edge view of one or more adjacencies: weights[e] on (src[e] -> dst[e])."""

    src: np.ndarray
    dst: np.ndarray
    weights: Tensor  # 1-D, length len(src)
    num_nodes: int


@dataclass
class SparseAdjacency:
    """Row-stochastic-on-selected-rows adjacency with exact zeros elsewhere.

    ``matrix`` may be None on internal fast paths that only need the edge
    view; the public builder always materializes it.
    """

    matrix: Tensor | None  # N x N
    selected_queries: np.ndarray  # (n,) ascending
    selected_keys: np.ndarray  # (n, n); row i holds keys of selected_queries[i], ascending
    weights: Tensor  # (n, n) row-softmax aligned with selected_keys
    dot_product_count: int
    num_nodes: int = 0

    def __post_init__(self):
        if self.matrix is not None:
            self.num_nodes = self.matrix.shape[0]

    @property
    def selected_keys_per_query(self) -> dict[int, np.ndarray]:
        return {int(q): self.selected_keys[i] for i, q in enumerate(self.selected_queries)}

    def edge_set(self) -> EdgeSet:
        n = self.selected_keys.shape[1]
        src = np.repeat(self.selected_queries, n)
        dst = self.selected_keys.reshape(-1)
        flat = ad.reshape(self.weights, (src.size,))
        return EdgeSet(src=src, dst=dst, weights=flat, num_nodes=self.num_nodes)


def project_qk(h: Tensor, wq: Tensor, wk: Tensor) -> tuple[Tensor, Tensor]:
    """Linear query/key projections of the node embeddings."""
    return ad.matmul(h, wq), ad.matmul(h, wk)


def query_importance(q, k_sampled) -> Tensor:
    """Divergence of each query's attention over the sampled keys from uniform.

    score_i = KL(uniform || softmax(q_i k_j / sqrt(D) over sampled j))
            = logsumexp(l_i) - mean(l_i) - ln n
    Zero when a query spreads its attention evenly; grows as it concentrates.
    Returned as a constant (selection is not differentiated).
    """
    qv = q.values if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    kv = k_sampled.values if isinstance(k_sampled, Tensor) else np.asarray(k_sampled, dtype=np.float64)
    n = kv.shape[0]
    if n < 1:
        raise ContractError("query_importance requires at least one sampled key")
    d = qv.shape[1]
    logits = qv @ kv.T / math.sqrt(d)
    peak = logits.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.exp(logits - peak).sum(axis=1))
    scores = lse - logits.mean(axis=1) - math.log(n)
    return Tensor(np.maximum(scores, 0.0))  # clamp fp residue; KL >= 0


def select_queries(scores, n: int) -> np.ndarray:
    """Indices of the n largest scores, ties broken toward the lowest index."""
    s = scores.values if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    if n > s.shape[0]:
        raise ContractError(f"cannot select {n} queries from {s.shape[0]}")
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:n])


def _top_per_row(values: np.ndarray, n: int) -> np.ndarray:
    """Per-row indices of the n largest entries, ties toward the lowest index."""
    order = np.argsort(-values, axis=1, kind="stable")
    return np.sort(order[:, :n], axis=1)


def select_keys(q_selected, k) -> np.ndarray:
    """For each selected query row, the indices of its strongest keys.

    Returns an (n_q, n_q) index array aligned with the input row order; the
    key budget per query equals the number of selected queries.
    """
    qv = q_selected.values if isinstance(q_selected, Tensor) else np.asarray(q_selected)
    kv = k.values if isinstance(k, Tensor) else np.asarray(k)
    n = qv.shape[0]
    if n < 1:
        raise ContractError("select_keys requires at least one query")
    logits = qv @ kv.T / math.sqrt(qv.shape[1])
    return _top_per_row(logits, n)


def dense_adjacency(h: Tensor, wq: Tensor, wk: Tensor) -> Tensor:
    """Full quadratic attention adjacency; rows sum to one. Reference path."""
    q, k = project_qk(h, wq, wk)
    scale = 1.0 / math.sqrt(h.shape[1])
    return ad.softmax_rows(ad.mul(ad.matmul(q, ad.transpose(k)), scale))


def build_sparse_adjacency(
    h: Tensor,
    wq: Tensor,
    wk: Tensor,
    cfg: LgslConfig,
    *,
    n_override: int | None = None,
    seed: int | None = None,
) -> SparseAdjacency:
    """Compose sampling, query ranking, key selection, and the sparse softmax.

    Exactly N*n dot products rank the queries and n*N score the selected
    queries against all keys; the final softmax reuses the latter, so the
    recorded count is 2*N*n.
    """
    n_nodes, dim = h.shape
    n = n_override if n_override is not None else sample_count(cfg.sampling_c, n_nodes)
    if not 1 <= n <= n_nodes:
        raise ContractError(f"selection size {n} out of range [1, {n_nodes}]")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    q, k = project_qk(h, wq, wk)
    sampled = rng.choice(n_nodes, size=n, replace=False)
    scores = query_importance(q.values, k.values[sampled])
    sel_q = select_queries(scores, n)

    q_sel = ad.take_rows(q, sel_q)
    logits = ad.mul(ad.matmul(q_sel, ad.transpose(k)), 1.0 / math.sqrt(dim))
    sel_keys = _top_per_row(logits.values, n)
    weights = ad.softmax_rows(ad.gather_cols_per_row(logits, sel_keys))
    matrix = ad.scatter_2d(weights, sel_q, sel_keys, (n_nodes, n_nodes))

    return SparseAdjacency(
        matrix=matrix,
        selected_queries=sel_q,
        selected_keys=sel_keys,
        weights=weights,
        dot_product_count=2 * n_nodes * n,
    )


def build_sparse_adjacency_batch(
    h: Tensor,
    wq: Tensor,
    wk: Tensor,
    n_nodes: int,
    n: int,
    batch: int,
    seed,
) -> list[SparseAdjacency]:
    """Per-window adjacencies over batched embedding rows (``batch`` windows).

    Same math as build_sparse_adjacency per window, but the q/k projections run
    once over all rows, one generator drives every window's key sample, and the
    N x N matrix is left unmaterialized.
    """
    dim = h.shape[1]
    q, k = project_qk(h, wq, wk)
    qv = q.values
    kv = k.values
    rng = np.random.default_rng(seed)
    out = []
    for b in range(batch):
        lo = b * n_nodes
        sampled = lo + rng.choice(n_nodes, size=n, replace=False)
        scores = query_importance(qv[lo : lo + n_nodes], kv[sampled]).values
        sel_q = select_queries(scores, n)

        q_sel = ad.take_rows(q, lo + sel_q)
        k_b = k[lo : lo + n_nodes]
        logits = ad.mul(ad.matmul(q_sel, ad.transpose(k_b)), 1.0 / math.sqrt(dim))
        sel_keys = _top_per_row(logits.values, n)
        weights = ad.softmax_rows(ad.gather_cols_per_row(logits, sel_keys))
        out.append(
            SparseAdjacency(
                matrix=None,
                selected_queries=sel_q,
                selected_keys=sel_keys,
                weights=weights,
                dot_product_count=2 * n_nodes * n,
                num_nodes=n_nodes,
            )
        )
    return out


def dump_edges(adj: SparseAdjacency) -> list[tuple[int, int, float]]:
    """(i, j, weight) triples of the nonzero entries, row-major."""
    out = []
    w = adj.weights.values
    for i, qi in enumerate(adj.selected_queries):
        for j, kj in enumerate(adj.selected_keys[i]):
            out.append((int(qi), int(kj), float(w[i, j])))
    return out
