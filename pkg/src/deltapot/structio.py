"""Structure ingestion: PDB/SDF parsing, pocket cropping, dataset manifests.

Only the fixed-column ``ATOM`` subset of the PDB format and the V2000 atom
block of SDF/MOL files are understood. Hydrogens are dropped on ingestion,
HETATM records, waters, altlocs other than blank/'A' and inserted residues
are skipped, and ligand bond blocks are ignored: interaction edges are
rebuilt geometrically downstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .elements import atomic_number_for, normalize_symbol

StructureKind = Literal["protein", "ligand", "complex"]
SplitName = Literal["train", "val", "test"]

VALID_SPLITS = ("train", "val", "test")
MANIFEST_HEADER = ("id", "protein", "ligand", "label", "split")

_WATER_RESNAMES = {"HOH", "WAT", "DOD"}


class ParseError(ValueError):
    """A structure file violates the expected format."""


class ManifestError(ValueError):
    """A dataset manifest is malformed or references unreadable files."""


@dataclass(frozen=True)
class AtomRecord:
    """One heavy atom: element, position in Angstrom, provenance."""

    element: str
    atomic_number: int
    position: tuple[float, float, float]
    residue_id: tuple[str, int] | None
    source: Literal["protein", "ligand"]


@dataclass
class MolecularStructure:
    """Ordered heavy-atom records for a protein, ligand, or complex."""

    atoms: list[AtomRecord]
    kind: StructureKind

    def __len__(self) -> int:
        return len(self.atoms)

    def coords(self) -> np.ndarray:
        """Positions as an (n, 3) float64 array, in file order."""
        if not self.atoms:
            return np.zeros((0, 3), dtype=np.float64)
        return np.array([a.position for a in self.atoms], dtype=np.float64)

    def atomic_numbers(self) -> np.ndarray:
        return np.array([a.atomic_number for a in self.atoms], dtype=np.int64)

    def residue_order(self) -> list[tuple[str, int]]:
        """Distinct residue ids in first-occurrence order (protein atoms only)."""
        seen: dict[tuple[str, int], None] = {}
        for a in self.atoms:
            if a.residue_id is not None and a.residue_id not in seen:
                seen[a.residue_id] = None
        return list(seen)

    def validate(self) -> None:
        for a in self.atoms:
            if a.atomic_number == 1:
                raise ValueError("structure contains hydrogen after ingestion")
            if not 1 <= a.atomic_number <= 118:
                raise ValueError(f"atomic number out of range: {a.atomic_number}")
            if not all(math.isfinite(c) for c in a.position):
                raise ValueError("non-finite atom position")


@dataclass
class PocketComplex:
    """Cropped binding pocket, ligand, and their concatenation."""

    protein_pocket: MolecularStructure
    ligand: MolecularStructure
    complex: MolecularStructure
    label: float | None = None

    def validate(self) -> None:
        expected = self.protein_pocket.atoms + self.ligand.atoms
        if self.complex.atoms != expected:
            raise ValueError("complex atoms are not pocket atoms followed by ligand atoms")


def _element_from_atom_name(name: str) -> str:
    """Fallback element guess from a PDB atom name (columns 13-16)."""
    letters = "".join(c for c in name if c.isalpha())
    if len(letters) >= 2 and atomic_number_for(letters[:2]) is not None:
        return letters[:2]
    return letters[:1]


def parse_protein(text: str) -> MolecularStructure:
    """Parse fixed-column PDB ``ATOM`` records into a heavy-atom structure.

    HETATM records, waters, altlocs other than blank/'A', insertion codes,
    and hydrogens are all skipped. Raises ParseError with the offending line
    number on malformed coordinates or unknown element symbols.
    """
    atoms: list[AtomRecord] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith("ATOM"):
            continue
        if len(line) < 54:
            raise ParseError(f"line {lineno}: ATOM record too short for coordinates")
        altloc = line[16:17]
        if altloc not in (" ", "", "A"):
            continue
        if line[26:27].strip():  # insertion code
            continue
        resname = line[17:20].strip()
        if resname in _WATER_RESNAMES:
            continue
        chain = line[21:22]
        try:
            resseq = int(line[22:26])
        except ValueError as e:
            raise ParseError(f"line {lineno}: malformed residue number {line[22:26]!r}") from e
        try:
            pos = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError as e:
            raise ParseError(f"line {lineno}: malformed coordinate field") from e
        raw_element = line[76:78].strip() or _element_from_atom_name(line[12:16])
        z = atomic_number_for(raw_element)
        if z is None:
            raise ParseError(f"line {lineno}: unknown element symbol {raw_element!r}")
        if z == 1:
            continue
        atoms.append(
            AtomRecord(
                element=normalize_symbol(raw_element),
                atomic_number=z,
                position=pos,
                residue_id=(chain, resseq),
                source="protein",
            )
        )
    return MolecularStructure(atoms=atoms, kind="protein")


def parse_ligand(text: str) -> MolecularStructure:
    """Parse the atom block of an SDF/MOL V2000 file into heavy atoms.

    The bond block is ignored. Raises ParseError if the counts line and the
    atom block disagree.
    """
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("SDF/MOL input shorter than the 4-line header")
    counts = lines[3]
    if "V2000" not in counts:
        raise ParseError("counts line does not declare a V2000 block")
    try:
        n_atoms = int(counts[0:3])
    except ValueError as e:
        raise ParseError(f"malformed counts line {counts!r}") from e
    if len(lines) < 4 + n_atoms:
        raise ParseError(
            f"atom count mismatch: counts line declares {n_atoms} atoms, "
            f"block has {len(lines) - 4} lines"
        )
    atoms: list[AtomRecord] = []
    for i in range(n_atoms):
        lineno = 5 + i
        line = lines[4 + i]
        try:
            pos = (float(line[0:10]), float(line[10:20]), float(line[20:30]))
        except ValueError as e:
            raise ParseError(
                f"line {lineno}: malformed coordinate field "
                "(atom count mismatch with atom block?)"
            ) from e
        raw_element = line[31:34].strip()
        z = atomic_number_for(raw_element)
        if z is None:
            raise ParseError(f"line {lineno}: unknown element symbol {raw_element!r}")
        if z == 1:
            continue
        atoms.append(
            AtomRecord(
                element=normalize_symbol(raw_element),
                atomic_number=z,
                position=pos,
                residue_id=None,
                source="ligand",
            )
        )
    return MolecularStructure(atoms=atoms, kind="ligand")


def crop_pocket(
    protein: MolecularStructure,
    ligand: MolecularStructure,
    max_residues: int = 50,
) -> PocketComplex:
    """Keep the residues closest to the ligand and assemble the complex.

    Residue distance is the minimum heavy-atom pair distance to any ligand
    atom; the ``max_residues`` smallest win, ties broken by file order. The
    complex is pocket atoms followed by ligand atoms, both in file order.
    """
    if not protein.atoms:
        raise ValueError("protein structure is empty")
    if not ligand.atoms:
        raise ValueError("ligand structure is empty")
    if max_residues < 1:
        raise ValueError("max_residues must be positive")

    residue_first: dict[tuple[str, int], int] = {}
    residue_atoms: dict[tuple[str, int], list[int]] = {}
    for idx, a in enumerate(protein.atoms):
        if a.residue_id is None:
            raise ValueError("protein atom without residue id")
        if a.residue_id not in residue_first:
            residue_first[a.residue_id] = idx
            residue_atoms[a.residue_id] = []
        residue_atoms[a.residue_id].append(idx)

    pcoords = protein.coords()
    lcoords = ligand.coords()
    # (n_protein, n_ligand) pair distances, reduced per residue.
    dist = np.sqrt(((pcoords[:, None, :] - lcoords[None, :, :]) ** 2).sum(axis=-1))
    per_atom_min = dist.min(axis=1)

    ranked = sorted(
        residue_first,
        key=lambda rid: (per_atom_min[residue_atoms[rid]].min(), residue_first[rid]),
    )
    kept = set(ranked[:max_residues])

    pocket_atoms = [a for a in protein.atoms if a.residue_id in kept]
    pocket = MolecularStructure(atoms=pocket_atoms, kind="protein")
    complex_structure = MolecularStructure(
        atoms=pocket_atoms + list(ligand.atoms), kind="complex"
    )
    return PocketComplex(protein_pocket=pocket, ligand=ligand, complex=complex_structure)


@dataclass(frozen=True)
class ManifestEntry:
    complex_id: str
    protein_path: Path
    ligand_path: Path
    label: float | None
    split: SplitName


@dataclass
class DatasetManifest:
    """Parsed manifest rows plus the directory paths are resolved against."""

    entries: list[ManifestEntry]
    base_dir: Path = field(default_factory=Path)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, path: Path) -> Path:
        return path if path.is_absolute() else self.base_dir / path


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load a ``id,protein,ligand,label,split`` CSV manifest.

    Labels may be empty (prediction-only entries). Relative structure paths
    are resolved against the manifest's directory at entry load time.
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen_ids: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: expected header {','.join(MANIFEST_HEADER)!r}, got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ManifestError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            complex_id, protein_file, ligand_file, label_text, split = (c.strip() for c in row)
            if complex_id in seen_ids:
                raise ManifestError(f"{path}:{lineno}: duplicate id {complex_id!r}")
            seen_ids.add(complex_id)
            if label_text:
                try:
                    label = float(label_text)
                except ValueError as e:
                    raise ManifestError(
                        f"{path}:{lineno}: malformed label {label_text!r}"
                    ) from e
                if not math.isfinite(label):
                    raise ManifestError(f"{path}:{lineno}: non-finite label")
            else:
                label = None
            if split not in VALID_SPLITS:
                raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
            entries.append(
                ManifestEntry(
                    complex_id=complex_id,
                    protein_path=Path(protein_file),
                    ligand_path=Path(ligand_file),
                    label=label,
                    split=split,
                )
            )
    return DatasetManifest(entries=entries, base_dir=path.parent)


def load_complex(
    manifest: DatasetManifest,
    entry: ManifestEntry,
    max_residues: int = 50,
) -> PocketComplex:
    """Parse one manifest entry's files and crop the pocket.

    File problems are reported lazily here, naming the entry.
    """
    try:
        protein_text = manifest.resolve(entry.protein_path).read_text()
        ligand_text = manifest.resolve(entry.ligand_path).read_text()
    except OSError as e:
        raise ManifestError(f"entry {entry.complex_id!r}: cannot read structure file: {e}") from e
    try:
        protein = parse_protein(protein_text)
        ligand = parse_ligand(ligand_text)
        pc = crop_pocket(protein, ligand, max_residues=max_residues)
    except (ParseError, ValueError) as e:
        raise ParseError(f"entry {entry.complex_id!r}: {e}") from e
    pc.label = entry.label
    return pc


def rigid_transform(
    structure: MolecularStructure,
    rotation: np.ndarray,
    translation: np.ndarray,
) -> MolecularStructure:
    """Apply the rigid motion x -> R x + w to every atom."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = np.asarray(translation, dtype=np.float64)
    moved = structure.coords() @ rotation.T + translation
    atoms = [
        AtomRecord(
            element=a.element,
            atomic_number=a.atomic_number,
            position=(float(x), float(y), float(z)),
            residue_id=a.residue_id,
            source=a.source,
        )
        for a, (x, y, z) in zip(structure.atoms, moved)
    ]
    return MolecularStructure(atoms=atoms, kind=structure.kind)


def transform_complex(
    pc: PocketComplex,
    rotation: np.ndarray,
    translation: np.ndarray,
) -> PocketComplex:
    """Move pocket and ligand jointly; the pocket selection is not redone."""
    pocket = rigid_transform(pc.protein_pocket, rotation, translation)
    ligand = rigid_transform(pc.ligand, rotation, translation)
    return PocketComplex(
        protein_pocket=pocket,
        ligand=ligand,
        complex=MolecularStructure(atoms=pocket.atoms + ligand.atoms, kind="complex"),
        label=pc.label,
    )


def write_pdb(structure: MolecularStructure, bfactors: np.ndarray | None = None) -> str:
    """Serialize a structure as fixed-column PDB text (debug/visualization).

    Protein atoms become ATOM records with their residue ids; ligand atoms
    become HETATM records under residue LIG. ``bfactors`` values land in the
    temperature-factor column, clamped to its [-99.99, 999.99] width.
    """
    if bfactors is not None and len(bfactors) != len(structure.atoms):
        raise ValueError("one B-factor per atom required")
    lines = []
    for i, a in enumerate(structure.atoms):
        record = "ATOM  " if a.residue_id is not None else "HETATM"
        chain, resseq = a.residue_id if a.residue_id is not None else ("Z", 1)
        resname = "RES" if a.residue_id is not None else "LIG"
        name = f"{a.element.upper():>2s}"
        b = 0.0 if bfactors is None else float(np.clip(bfactors[i], -99.99, 999.99))
        x, y, z = a.position
        lines.append(
            f"{record}{i + 1:5d} {name:<4s} {resname:>3s} {chain:1.1s}{resseq:4d}    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{b:6.2f}          {a.element:>2s}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"
