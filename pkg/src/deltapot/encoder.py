"""Graph encoder: atom embeddings, distance features, message passing.

Nodes start as embeddings of their atomic numbers; each directed edge gets a
feature vector built from a Gaussian expansion of its length concatenated
with its unit relative position; message-passing layers update node states
with neighbor sums gated by an edge-conditioned filter and a residual
connection.

Neighbor sums are computed by sorting each node's incoming message values
per feature dimension and reducing left to right. A node's sum then depends
only on the multiset of incoming values, never on edge order, which makes
the encoder commute with node permutations bit for bit (floating-point
addition does not commute on its own).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import torch
from torch import nn

from .elements import MAX_ATOMIC_NUMBER
from .graphs import AtomGraph

EncoderSharing = Literal["shared", "separate"]
Framework = Literal["difference", "complex_only"]


@dataclass
class ModelConfig:
    """Architecture and symmetry-handling choices.

    num_layers = 0 is allowed (embedding-only encoder) for tests.
    """

    hidden_dim: int = 128
    num_layers: int = 4
    rbf_count: int = 32
    rbf_cutoff: float = 5.0
    frame_mode: str = "SE3"
    encoder_sharing: str = "shared"
    framework: str = "difference"

    def validate(self) -> None:
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.rbf_count < 2:
            raise ValueError("rbf_count must be >= 2")
        if self.rbf_cutoff <= 0:
            raise ValueError("rbf_cutoff must be positive")
        if self.frame_mode not in ("SE3", "E3", "NONE"):
            raise ValueError(f"unknown frame_mode {self.frame_mode!r}")
        if self.encoder_sharing not in ("shared", "separate"):
            raise ValueError(f"unknown encoder_sharing {self.encoder_sharing!r}")
        if self.framework not in ("difference", "complex_only"):
            raise ValueError(f"unknown framework {self.framework!r}")


@dataclass
class GraphTensors:
    """An AtomGraph's arrays as torch tensors, ready for the encoder."""

    z: torch.Tensor  # (n,) long
    edges: torch.Tensor  # (E, 2) long, sorted by destination
    edge_dist: torch.Tensor  # (E,)
    edge_relpos: torch.Tensor  # (E, 3)
    num_nodes: int

    @classmethod
    def from_graph(cls, graph: AtomGraph, dtype: torch.dtype = torch.float32) -> "GraphTensors":
        return cls(
            z=torch.from_numpy(np.ascontiguousarray(graph.atomic_numbers)),
            edges=torch.from_numpy(np.ascontiguousarray(graph.edges)),
            edge_dist=torch.from_numpy(graph.edge_dist).to(dtype),
            edge_relpos=torch.from_numpy(graph.edge_relpos).to(dtype),
            num_nodes=graph.num_nodes,
        )

    def with_relpos(self, relpos: torch.Tensor) -> "GraphTensors":
        return replace(self, edge_relpos=relpos)


def rbf_expand(dist: torch.Tensor, num_basis: int, cutoff: float) -> torch.Tensor:
    """Gaussian expansion of distances on centers equally spaced in [0, cutoff].

    The Gaussian width equals the center spacing, so adjacent basis functions
    overlap smoothly; dist = 0 and dist = cutoff each light up an end basis
    function with value exactly 1.
    """
    if num_basis < 2:
        raise ValueError("need at least 2 basis functions for a finite spacing")
    centers = torch.linspace(0.0, cutoff, num_basis, dtype=dist.dtype, device=dist.device)
    gamma = centers[1] - centers[0]
    return torch.exp(-((dist[..., None] - centers) ** 2) / (2.0 * gamma**2))


class MLP2(nn.Module):
    """linear -> swish -> linear."""

    def __init__(self, dim_in: int, dim_hidden: int, dim_out: int):
        super().__init__()
        self.lin1 = nn.Linear(dim_in, dim_hidden)
        self.lin2 = nn.Linear(dim_hidden, dim_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin2(torch.nn.functional.silu(self.lin1(x)))


def sorted_segment_sum(values: torch.Tensor, segments: torch.Tensor, num_segments: int) -> torch.Tensor:
    """Per-segment sum whose result depends only on each segment's value multiset.

    ``segments`` must be nondecreasing (edges sorted by destination). Values
    are scattered into a dense (num_segments, max_count, dim) buffer, sorted
    along the count axis per feature dimension, and folded left to right, so
    any reordering of a segment's values (e.g. from a node permutation)
    produces a bitwise-identical sum. Zero padding is exact under IEEE
    addition.
    """
    if values.shape[0] == 0:
        return values.new_zeros((num_segments, values.shape[1]))
    if not bool((segments[1:] >= segments[:-1]).all()):
        raise ValueError("segment ids must be nondecreasing")
    counts = torch.bincount(segments, minlength=num_segments)
    starts = torch.cumsum(counts, 0) - counts
    slots = torch.arange(segments.shape[0], device=values.device) - starts[segments]
    max_count = int(counts.max())
    buf = values.new_zeros((num_segments, max_count, values.shape[1]))
    buf = buf.index_put((segments, slots), values)
    buf, _ = torch.sort(buf, dim=1)
    acc = buf[:, 0]
    for k in range(1, max_count):
        acc = acc + buf[:, k]
    return acc


class MessageLayer(nn.Module):
    """One round of edge-gated message passing with a residual update."""

    def __init__(self, dim: int):
        super().__init__()
        self.filter_mlp = MLP2(3 * dim, dim, dim)
        self.update_mlp = MLP2(dim, dim, dim)

    def forward(self, h: torch.Tensor, e: torch.Tensor, edges: torch.Tensor, num_nodes: int) -> torch.Tensor:
        if edges.shape[0] == 0:
            agg = h.new_zeros(h.shape)
        else:
            dst, src = edges[:, 0], edges[:, 1]
            gate = torch.nn.functional.silu(
                self.filter_mlp(torch.cat([e, h[dst], h[src]], dim=1))
            )
            agg = sorted_segment_sum(h[src] * gate, dst, num_nodes)
        return h + self.update_mlp(agg)


class Encoder(nn.Module):
    """Stack of embedding, edge featurization, and message-passing layers."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.hidden_dim
        # Row 0 is unused: atomic numbers start at 1.
        self.atom_embedding = nn.Embedding(MAX_ATOMIC_NUMBER + 1, d)
        self.edge_mlp = MLP2(config.rbf_count + 3, d, d)
        self.layers = nn.ModuleList(MessageLayer(d) for _ in range(config.num_layers))

    def embed_nodes(self, z: torch.Tensor) -> torch.Tensor:
        if z.numel() and (int(z.min()) < 1 or int(z.max()) > MAX_ATOMIC_NUMBER):
            raise ValueError("atomic number outside [1, 118]")
        return self.atom_embedding(z)

    def embed_edges(self, gt: GraphTensors) -> torch.Tensor:
        rbf = rbf_expand(gt.edge_dist, self.config.rbf_count, self.config.rbf_cutoff)
        return torch.nn.functional.silu(self.edge_mlp(torch.cat([rbf, gt.edge_relpos], dim=1)))

    def forward(self, gt: GraphTensors) -> torch.Tensor:
        h = self.embed_nodes(gt.z)
        if not self.layers:
            return h
        e = self.embed_edges(gt)
        for layer in self.layers:
            h = layer(h, e, gt.edges, gt.num_nodes)
        return h
