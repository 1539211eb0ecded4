"""Shared builders for synthetic structures, files, and gradient checks."""

from __future__ import annotations

import numpy as np
import torch

from deltapot.structio import AtomRecord, MolecularStructure, PocketComplex, crop_pocket

ELEMENT_Z = {"C": 6, "N": 7, "O": 8, "S": 16}
PROTEIN_ELEMENTS = ("C", "N", "O", "S")
LIGAND_ELEMENTS = ("C", "N", "O")


def random_coords(rng: np.random.Generator, n: int, scale: float = 4.0,
                  cutoff: float = 5.0, margin: float = 1e-3) -> np.ndarray:
    """Random 3-D points with no pairwise distance within `margin` of `cutoff`.

    Keeping distances away from the graph cutoff makes radius-graph edge sets
    stable under float32 round-trips and rigid motions.
    """
    for _ in range(200):
        pts = rng.normal(scale=scale, size=(n, 3))
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        off = d[~np.eye(n, dtype=bool)]
        if np.all(np.abs(off - cutoff) > margin) and np.all(off > 1e-2):
            return pts
    raise RuntimeError("could not sample a cutoff-safe point cloud")


def random_structure(rng: np.random.Generator, n: int, kind: str = "ligand",
                     scale: float = 4.0) -> MolecularStructure:
    coords = random_coords(rng, n, scale=scale)
    elements = LIGAND_ELEMENTS if kind == "ligand" else PROTEIN_ELEMENTS
    atoms = []
    for i in range(n):
        e = elements[rng.integers(len(elements))]
        residue = ("A", i + 1) if kind == "protein" else None
        atoms.append(AtomRecord(e, ELEMENT_Z[e], tuple(map(float, coords[i])), residue, kind))
    return MolecularStructure(atoms, kind)


def make_pocket_complex(rng: np.random.Generator, n_res: int = 5, n_lig: int = 5,
                        max_residues: int = 50) -> PocketComplex:
    """Random protein-like cluster plus a central ligand, cropped to a pocket."""
    atoms_p = []
    for r in range(n_res):
        center = rng.normal(scale=4.0, size=3)
        for _ in range(4):
            e = PROTEIN_ELEMENTS[rng.integers(4)]
            pos = tuple(map(float, center + rng.normal(scale=1.2, size=3)))
            atoms_p.append(AtomRecord(e, ELEMENT_Z[e], pos, ("A", r + 1), "protein"))
    atoms_l = []
    for _ in range(n_lig):
        e = LIGAND_ELEMENTS[rng.integers(3)]
        pos = tuple(map(float, rng.normal(scale=1.5, size=3)))
        atoms_l.append(AtomRecord(e, ELEMENT_Z[e], pos, None, "ligand"))
    protein = MolecularStructure(atoms_p, "protein")
    ligand = MolecularStructure(atoms_l, "ligand")
    return crop_pocket(protein, ligand, max_residues=max_residues)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random proper rotation via QR with positive diagonal."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def pdb_text(atoms: list[tuple[str, str, int, float, float, float]],
             extra_lines: list[str] | None = None) -> str:
    """Minimal PDB with ATOM records: (name, resname, resseq, x, y, z)."""
    lines = []
    for i, (name, resname, resseq, x, y, z) in enumerate(atoms, start=1):
        element = name.strip()[:1].rjust(2)
        lines.append(
            f"ATOM  {i:5d}  {name:<3s}{resname:>4s} A{resseq:4d}    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00          {element}"
        )
    if extra_lines:
        lines.extend(extra_lines)
    lines.append("END")
    return "\n".join(lines) + "\n"


def sdf_text(atoms: list[tuple[str, float, float, float]], title: str = "mol") -> str:
    """Minimal V2000 SDF block with the given (element, x, y, z) atoms."""
    lines = [title, "  test", "", f"{len(atoms):3d}  0  0  0  0  0  0  0  0  0999 V2000"]
    for e, x, y, z in atoms:
        lines.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {e:<3s} 0  0  0  0  0  0  0  0  0  0  0  0")
    lines.append("M  END")
    lines.append("$$$$")
    return "\n".join(lines) + "\n"


def write_dataset(root, rng: np.random.Generator, counts=(6, 3, 2),
                  label_splits=("train", "val", "test")):
    """Small on-disk dataset: PDB/SDF pairs plus a manifest CSV.

    Splits outside `label_splits` get an empty label column.
    """
    from pathlib import Path

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = ["id,protein,ligand,label,split"]
    for split, n in zip(("train", "val", "test"), counts):
        for i in range(n):
            cid = f"{split}{i}"
            coords_p = random_coords(rng, 9, scale=2.0)
            atoms_p = []
            for k in range(9):
                name = "CNO"[rng.integers(3)]
                x, y, z = coords_p[k]
                atoms_p.append((name, "ALA", k // 3 + 1, x, y, z))
            (root / f"{cid}.pdb").write_text(pdb_text(atoms_p))
            coords_l = random_coords(rng, 4, scale=1.5)
            atoms_l = [("CNO"[rng.integers(3)], *map(float, coords_l[k])) for k in range(4)]
            (root / f"{cid}.sdf").write_text(sdf_text(atoms_l))
            label = round(float(rng.normal() * 2.0), 3) if split in label_splits else ""
            rows.append(f"{cid},{cid}.pdb,{cid}.sdf,{label},{split}")
    manifest_path = root / "manifest.csv"
    manifest_path.write_text("\n".join(rows) + "\n")
    return manifest_path


def finite_difference_grads(loss_fn, params: list[torch.nn.Parameter],
                            step: float = 1e-5) -> list[torch.Tensor]:
    """Central finite differences of a scalar loss for every parameter entry."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                hi = float(loss_fn())
                flat[i] = orig - step
                lo = float(loss_fn())
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * step)
            grads.append(g)
    return grads
