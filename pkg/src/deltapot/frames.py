"""PCA-derived coordinate frames.

A point cloud is canonicalized by centering on its centroid and rotating into
its principal axes. Because eigenvectors are only defined up to sign, a fixed
finite set of sign choices is enumerated and downstream scalar outputs are
averaged over the resulting frames, which makes them invariant to rigid
motions of the input:

* ``SE3``: 4 proper rotations ``[a*u1, b*u2, a*b*(u1 x u2)]`` — invariant to
  rotations and translations but deliberately sensitive to reflections
  (chirality is preserved).
* ``E3``: all 8 sign choices ``[a*u1, b*u2, c*u3]`` — additionally invariant
  to reflections.
* ``NONE``: the identity frame; no invariance (ablation baseline).

Degenerate spectra (repeated eigenvalues, tiny clouds) are completed
deterministically so the frame set is a pure function of the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

FrameMode = Literal["SE3", "E3", "NONE"]

FRAME_MODES = ("SE3", "E3", "NONE")

# Relative eigenvalue gap below which two principal directions are treated as
# an indistinguishable (degenerate) pair.
DEGENERACY_RTOL = 1e-9

# Sign enumeration orders. Fixed so that frame lists, and therefore reduction
# order in the averages, are reproducible bit for bit.
_SE3_SIGNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
_E3_SIGNS = (
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
    (-1, 1, 1),
    (-1, 1, -1),
    (-1, -1, 1),
    (-1, -1, -1),
)


@dataclass(frozen=True)
class PcaDecomposition:
    """Centroid, covariance, and a completed, sign-canonical eigenbasis."""

    centroid: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3)
    eigenvalues: np.ndarray  # (3,), descending
    basis: np.ndarray  # (3, 3), columns are unit vectors
    degenerate: bool


@dataclass(frozen=True)
class FrameSet:
    """Ordered rotations plus the shared centroid they are applied around."""

    centroid: np.ndarray  # (3,)
    rotations: np.ndarray  # (F, 3, 3)
    mode: FrameMode

    def __len__(self) -> int:
        return self.rotations.shape[0]

    def validate(self, tol: float = 1e-6) -> None:
        expected = {"SE3": 4, "E3": 8, "NONE": 1}[self.mode]
        if len(self) != expected:
            raise ValueError(f"{self.mode} frame set must have {expected} rotations")
        eye = np.eye(3)
        for r in self.rotations:
            if np.abs(r.T @ r - eye).max() > tol:
                raise ValueError("rotation columns are not orthonormal")
        dets = np.linalg.det(self.rotations)
        if self.mode == "SE3" and np.abs(dets - 1.0).max() > tol:
            raise ValueError("SE3 frames must be proper rotations")
        if self.mode == "E3" and (np.sum(dets > 0) != 4 or np.sum(dets < 0) != 4):
            raise ValueError("E3 frames must split 4/4 by determinant sign")
        if self.mode == "NONE" and (np.abs(self.rotations[0] - eye).max() > 0 or np.any(self.centroid != 0)):
            raise ValueError("NONE mode must be the identity frame with zero centroid")


def _canonical_sign(u: np.ndarray) -> np.ndarray:
    """Flip u so its largest-magnitude component is positive (ties: first)."""
    idx = int(np.argmax(np.abs(u)))
    return -u if u[idx] < 0 else u


def _complete_basis(eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> tuple[np.ndarray, bool]:
    """Resolve degenerate eigenspaces into a deterministic orthonormal basis.

    Eigenvalues arrive descending with eigenvectors as matching columns.
    Columns belonging to near-equal eigenvalues are individually arbitrary, so
    those slots are refilled by Gram-Schmidt of the canonical axes e1, e2, e3
    against the well-defined columns. The complement of the kept columns is
    exactly the degenerate eigenspace, so refills are still eigenvectors of
    the covariance to within the degeneracy tolerance.
    """
    tol = DEGENERACY_RTOL * max(float(eigenvalues[0]), 1e-300)
    # Cluster adjacent eigenvalues closer than tol.
    cluster_ids = [0]
    for i in (1, 2):
        same = (eigenvalues[i - 1] - eigenvalues[i]) <= tol
        cluster_ids.append(cluster_ids[-1] if same else cluster_ids[-1] + 1)
    sizes = {c: cluster_ids.count(c) for c in cluster_ids}

    degenerate = any(s > 1 for s in sizes.values())
    basis = np.zeros((3, 3))
    open_slots = []
    for i in range(3):
        if sizes[cluster_ids[i]] == 1:
            basis[:, i] = eigenvectors[:, i]
        else:
            open_slots.append(i)

    if open_slots:
        kept = [basis[:, i] for i in range(3) if i not in open_slots]
        for candidate in np.eye(3):
            if not open_slots:
                break
            v = candidate.copy()
            for k in kept:
                v -= (candidate @ k) * k
            norm = np.linalg.norm(v)
            if norm < 1e-6:
                continue
            v = v / norm
            basis[:, open_slots.pop(0)] = v
            kept.append(v)
        if open_slots:  # cannot happen: 3 axes never fit in a <3-dim span
            raise RuntimeError("failed to complete a degenerate eigenbasis")

    for i in range(3):
        basis[:, i] = _canonical_sign(basis[:, i])
    return basis, degenerate


def compute_pca(coords: np.ndarray) -> PcaDecomposition:
    """Centroid, unnormalized covariance, and descending eigenpairs of a cloud."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
        raise ValueError(f"expected (n, 3) coordinates, got shape {coords.shape}")
    if not np.isfinite(coords).all():
        raise ValueError("non-finite coordinates")
    centroid = coords.mean(axis=0)
    centered = coords - centroid
    covariance = centered.T @ centered
    lams, vecs = np.linalg.eigh(covariance)  # ascending
    lams = lams[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    lams = np.maximum(lams, 0.0)  # clip eigh's tiny negative round-off
    basis, degenerate = _complete_basis(lams, vecs)
    return PcaDecomposition(
        centroid=centroid,
        covariance=covariance,
        eigenvalues=lams,
        basis=basis,
        degenerate=degenerate,
    )


def compute_frames(coords: np.ndarray, mode: FrameMode) -> FrameSet:
    """Build the ordered frame set for a point cloud under the given mode."""
    if mode not in FRAME_MODES:
        raise ValueError(f"unknown frame mode {mode!r}")
    if mode == "NONE":
        np.asarray(coords)  # shape/finite checks are skipped: coords unused
        return FrameSet(centroid=np.zeros(3), rotations=np.eye(3)[None], mode="NONE")

    pca = compute_pca(coords)
    u1, u2, u3 = pca.basis.T
    rotations = []
    if mode == "SE3":
        cross = np.cross(u1, u2)
        for a, b in _SE3_SIGNS:
            rotations.append(np.stack([a * u1, b * u2, a * b * cross], axis=1))
    else:
        for a, b, c in _E3_SIGNS:
            rotations.append(np.stack([a * u1, b * u2, c * u3], axis=1))
    return FrameSet(centroid=pca.centroid, rotations=np.stack(rotations), mode=mode)


def apply_frame(coords: np.ndarray, rotation: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    """Express coordinates in a frame: center on the centroid, project on axes."""
    coords = np.asarray(coords, dtype=np.float64)
    return (coords - np.asarray(centroid)) @ np.asarray(rotation)


def average_frame_outputs(outputs: Sequence[np.ndarray | float]) -> np.ndarray | float:
    """Mean of per-frame outputs, reduced in frame enumeration order."""
    if len(outputs) == 0:
        raise ValueError("cannot average an empty list of frame outputs")
    acc = np.asarray(outputs[0], dtype=np.float64).copy()
    for out in outputs[1:]:
        acc = acc + np.asarray(out, dtype=np.float64)
    acc = acc / len(outputs)
    return float(acc) if acc.ndim == 0 else acc
