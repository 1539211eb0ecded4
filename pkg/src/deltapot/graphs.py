"""Atom-level radius graphs for the bound complex and its unbound parts.

Edges connect every pair of atoms within the cutoff (inclusive), stored in
both directions and sorted by (i, j). Each edge carries its length and the
unit relative position vector; interatomic distances are what downstream
features are built from, so no covalent bond information is needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .structio import MolecularStructure, PocketComplex

DEFAULT_CUTOFF = 5.0


@dataclass
class AtomGraph:
    """Nodes with atomic numbers plus directed radius edges."""

    atomic_numbers: np.ndarray  # (n,) int64
    coords: np.ndarray  # (n, 3) float64
    edges: np.ndarray  # (E, 2) int64, sorted by (i, j)
    edge_dist: np.ndarray  # (E,) float64
    edge_relpos: np.ndarray  # (E, 3) float64, unit vectors
    cutoff: float

    @property
    def num_nodes(self) -> int:
        return int(self.atomic_numbers.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def validate(self, tol: float = 1e-6) -> None:
        if self.edges.size and self.edges.max() >= self.num_nodes:
            raise ValueError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-loop present")
        pairs = self.edge_set()
        if any((j, i) not in pairs for i, j in pairs):
            raise ValueError("edge directions are not symmetric")
        if self.num_edges:
            norms = np.linalg.norm(self.edge_relpos, axis=1)
            if np.abs(norms - 1.0).max() > tol:
                raise ValueError("edge relative positions are not unit vectors")


def build_radius_graph(structure: MolecularStructure, cutoff: float = DEFAULT_CUTOFF) -> AtomGraph:
    """All-pairs radius graph with inclusive cutoff.

    Coincident distinct atoms (distance exactly 0) get no edge — the unit
    relative position would be undefined — and trigger a warning.
    """
    if len(structure) == 0:
        raise ValueError("cannot build a graph from an empty structure")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    coords = structure.coords()
    z = structure.atomic_numbers()
    n = coords.shape[0]

    diff = coords[None, :, :] - coords[:, None, :]  # diff[i, j] = x_j - x_i
    dist = np.sqrt((diff**2).sum(axis=-1))
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(off_diag & (dist == 0.0)):
        warnings.warn("coincident atoms: zero-distance pairs carry no edge", stacklevel=2)
    mask = off_diag & (dist > 0.0) & (dist <= cutoff)

    edges = np.argwhere(mask).astype(np.int64)  # row-major: sorted by (i, j)
    if edges.size == 0:
        edges = np.zeros((0, 2), dtype=np.int64)
        edge_dist = np.zeros((0,), dtype=np.float64)
        edge_relpos = np.zeros((0, 3), dtype=np.float64)
    else:
        edge_dist = dist[edges[:, 0], edges[:, 1]]
        edge_relpos = diff[edges[:, 0], edges[:, 1]] / edge_dist[:, None]
    return AtomGraph(
        atomic_numbers=z,
        coords=coords,
        edges=edges,
        edge_dist=edge_dist,
        edge_relpos=edge_relpos,
        cutoff=float(cutoff),
    )


@dataclass
class GraphTriple:
    """Radius graphs of the complex and of its two unbound parts.

    Complex nodes 0..n_protein-1 are the pocket atoms and the rest are the
    ligand atoms, in the same order as the part graphs.
    """

    complex_graph: AtomGraph
    protein_graph: AtomGraph
    ligand_graph: AtomGraph
    n_protein: int
    n_ligand: int

    def source_of(self, complex_index: int) -> tuple[str, int]:
        """Map a complex node index to ('protein'|'ligand', part index)."""
        if not 0 <= complex_index < self.n_protein + self.n_ligand:
            raise IndexError(complex_index)
        if complex_index < self.n_protein:
            return ("protein", complex_index)
        return ("ligand", complex_index - self.n_protein)

    def validate(self) -> None:
        if self.complex_graph.num_nodes != self.n_protein + self.n_ligand:
            raise ValueError("complex node count != protein + ligand node counts")
        stacked = np.concatenate(
            [self.protein_graph.atomic_numbers, self.ligand_graph.atomic_numbers]
        )
        if not np.array_equal(self.complex_graph.atomic_numbers, stacked):
            raise ValueError("atomic numbers disagree through the offset map")


def build_graph_triple(pc: PocketComplex, cutoff: float = DEFAULT_CUTOFF) -> GraphTriple:
    """Independent radius graphs for complex, pocket, and ligand.

    The complex graph is built on the concatenated coordinates, so it contains
    protein-ligand cross edges; the part graphs cannot.
    """
    return GraphTriple(
        complex_graph=build_radius_graph(pc.complex, cutoff),
        protein_graph=build_radius_graph(pc.protein_pocket, cutoff),
        ligand_graph=build_radius_graph(pc.ligand, cutoff),
        n_protein=len(pc.protein_pocket),
        n_ligand=len(pc.ligand),
    )
