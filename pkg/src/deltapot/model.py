"""Affinity prediction: frame-averaged per-atom energies, bound minus unbound.

Each of the three graphs (complex, pocket, ligand) gets its own frame set;
the encoder runs under every frame (frames folded into the node axis in one
batched pass) and per-atom energies are averaged over frames in enumeration
order. The affinity is the sum of per-atom energy differences between the
unbound parts and the bound complex, so a report carries a per-atom
attribution that sums to the (negated) prediction by construction.

Frames are a fixed function of the input coordinates: no gradients flow
through the PCA.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import MLP2, Encoder, GraphTensors, ModelConfig
from .frames import apply_frame, compute_frames
from .graphs import AtomGraph, GraphTriple, build_graph_triple
from .structio import PocketComplex, write_pdb

GRAPH_ROLES = ("complex", "protein", "ligand")


@dataclass
class PreparedGraph:
    """Frame-batched encoder input: F copies of the graph, one per frame."""

    gt: GraphTensors
    num_frames: int
    nodes_per_frame: int


@dataclass
class PreparedTriple:
    complex: PreparedGraph
    protein: PreparedGraph
    ligand: PreparedGraph

    def role(self, name: str) -> PreparedGraph:
        return {"complex": self.complex, "protein": self.protein, "ligand": self.ligand}[name]


@dataclass
class PredictionReport:
    """Scalar affinity plus per-atom energies in complex atom order."""

    affinity: float
    per_atom_bound: np.ndarray
    per_atom_unbound: np.ndarray
    per_atom_delta: np.ndarray  # bound - unbound; sums to -affinity

    def validate(self, rtol: float = 1e-5) -> None:
        lhs = float(self.per_atom_unbound.sum() - self.per_atom_bound.sum())
        if abs(lhs - self.affinity) > rtol * (1.0 + abs(self.affinity)):
            raise ValueError("affinity is not the unbound-minus-bound energy sum")


def prepare_graph(
    graph: AtomGraph, frame_mode: str, dtype: torch.dtype = torch.float32
) -> PreparedGraph:
    """Compute frames and stack the per-frame graphs into one big graph.

    Edges and distances are frame-independent; only the relative position
    vectors are recomputed from the transformed coordinates. Node indices of
    frame k are offset by k * n.
    """
    frames = compute_frames(graph.coords, frame_mode)
    num_frames = len(frames)
    n = graph.num_nodes
    base = GraphTensors.from_graph(graph, dtype)

    relpos_per_frame = []
    for rotation in frames.rotations:
        transformed = apply_frame(graph.coords, rotation, frames.centroid)
        if graph.num_edges:
            rel = (transformed[graph.edges[:, 1]] - transformed[graph.edges[:, 0]])
            rel = rel / graph.edge_dist[:, None]
        else:
            rel = np.zeros((0, 3))
        relpos_per_frame.append(torch.from_numpy(rel).to(dtype))

    offsets = torch.arange(num_frames, dtype=torch.long).repeat_interleave(graph.num_edges) * n
    gt = GraphTensors(
        z=base.z.repeat(num_frames),
        edges=base.edges.repeat(num_frames, 1) + offsets[:, None],
        edge_dist=base.edge_dist.repeat(num_frames),
        edge_relpos=torch.cat(relpos_per_frame, dim=0),
        num_nodes=num_frames * n,
    )
    return PreparedGraph(gt=gt, num_frames=num_frames, nodes_per_frame=n)


def prepare_triple(
    triple: GraphTriple, frame_mode: str, dtype: torch.dtype = torch.float32
) -> PreparedTriple:
    return PreparedTriple(
        complex=prepare_graph(triple.complex_graph, frame_mode, dtype),
        protein=prepare_graph(triple.protein_graph, frame_mode, dtype),
        ligand=prepare_graph(triple.ligand_graph, frame_mode, dtype),
    )


class AffinityModel(nn.Module):
    """Encoder(s), a shared per-atom energy head, and the loss's noise scale.

    The learnable noise variance of the regression loss lives here (as its
    log) so that checkpoints capture the full optimized state.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        if config.encoder_sharing == "shared":
            self.encoder = Encoder(config)
        else:
            self.encoders = nn.ModuleDict({role: Encoder(config) for role in GRAPH_ROLES})
        self.head = MLP2(config.hidden_dim, config.hidden_dim, 1)
        self.log_noise_sigma2 = nn.Parameter(torch.zeros(()))

    def encoder_for(self, role: str) -> Encoder:
        if self.config.encoder_sharing == "shared":
            return self.encoder
        return self.encoders[role]

    def atomic_energies(self, h: torch.Tensor) -> torch.Tensor:
        """Per-atom scalar energies from node states."""
        return self.head(h).squeeze(-1)

    def frame_averaged_energies(self, role: str, pg: PreparedGraph) -> torch.Tensor:
        """Encode under all frames and average per-atom energies in frame order."""
        h = self.encoder_for(role)(pg.gt)
        energies = self.atomic_energies(h).view(pg.num_frames, pg.nodes_per_frame)
        acc = energies[0]
        for k in range(1, pg.num_frames):
            acc = acc + energies[k]
        return acc / pg.num_frames

    def forward(self, prepared: PreparedTriple) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (affinity, per_atom_bound, per_atom_unbound).

        Both per-atom vectors are in complex atom order, so the affinity is
        the elementwise difference summed once: identical bound/unbound
        energies cancel exactly, not just approximately.
        """
        bound = self.frame_averaged_energies("complex", prepared.complex)
        if self.config.framework == "difference":
            unbound = torch.cat(
                [
                    self.frame_averaged_energies("protein", prepared.protein),
                    self.frame_averaged_energies("ligand", prepared.ligand),
                ]
            )
        else:
            unbound = torch.zeros_like(bound)
        affinity = (unbound - bound).sum()
        return affinity, bound, unbound

    @torch.no_grad()
    def predict(self, triple: GraphTriple) -> PredictionReport:
        dtype = next(self.parameters()).dtype
        prepared = prepare_triple(triple, self.config.frame_mode, dtype)
        affinity, bound, unbound = self.forward(prepared)
        bound_np = bound.detach().cpu().double().numpy()
        unbound_np = unbound.detach().cpu().double().numpy()
        return PredictionReport(
            affinity=float(affinity),
            per_atom_bound=bound_np,
            per_atom_unbound=unbound_np,
            per_atom_delta=bound_np - unbound_np,
        )

    def predict_complex(self, pc: PocketComplex, cutoff: float | None = None) -> PredictionReport:
        triple = build_graph_triple(pc, cutoff if cutoff is not None else self.config.rbf_cutoff)
        return self.predict(triple)


ATTRIBUTION_HEADER = (
    "atom_index",
    "source",
    "element",
    "x",
    "y",
    "z",
    "energy_unbound",
    "energy_bound",
    "delta",
)


def export_attribution(report: PredictionReport, pc: PocketComplex) -> str:
    """Per-atom energy table as CSV text, one row per complex atom.

    The delta column is bound minus unbound, so it sums to -affinity: negative
    deltas mark atoms whose energy dropped on binding (favorable contacts).
    """
    atoms = pc.complex.atoms
    if len(atoms) != report.per_atom_delta.shape[0]:
        raise ValueError("report and complex disagree on atom count")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ATTRIBUTION_HEADER)
    for i, atom in enumerate(atoms):
        x, y, z = atom.position
        writer.writerow(
            [
                i,
                atom.source,
                atom.element,
                repr(x),
                repr(y),
                repr(z),
                repr(float(report.per_atom_unbound[i])),
                repr(float(report.per_atom_bound[i])),
                repr(float(report.per_atom_delta[i])),
            ]
        )
    return out.getvalue()


def export_attribution_pdb(report: PredictionReport, pc: PocketComplex) -> str:
    """Complex structure with each atom's delta in the temperature-factor column."""
    return write_pdb(pc.complex, bfactors=report.per_atom_delta)
