"""Protein-ligand binding affinity from invariant per-atom energy differences.

The pipeline: parse structures and crop the pocket (structio), build radius
graphs for the complex and its unbound parts (graphs), canonicalize
coordinates with PCA frames (frames), encode atoms by message passing
(encoder), predict the affinity as the frame-averaged unbound-minus-bound
energy sum (model), and train with a balanced regression loss plus a ranking
penalty (losses, training). The CLI (cli) exposes train / predict / explain /
check-invariance.
"""

from .encoder import ModelConfig
from .frames import FrameSet, apply_frame, average_frame_outputs, compute_frames
from .graphs import AtomGraph, GraphTriple, build_graph_triple, build_radius_graph
from .losses import LossConfig, approx_ndcg, balanced_mse, rank_loss, total_loss
from .metrics import MetricReport, metric_pearson, metric_rmse
from .model import AffinityModel, PredictionReport, export_attribution, prepare_triple
from .structio import (
    DatasetManifest,
    MolecularStructure,
    PocketComplex,
    crop_pocket,
    load_complex,
    load_manifest,
    parse_ligand,
    parse_protein,
)
from .training import TrainConfig, fit, load_model, lr_schedule

__version__ = "0.1.0"

__all__ = [
    "AffinityModel",
    "AtomGraph",
    "DatasetManifest",
    "FrameSet",
    "GraphTriple",
    "LossConfig",
    "MetricReport",
    "ModelConfig",
    "MolecularStructure",
    "PocketComplex",
    "PredictionReport",
    "TrainConfig",
    "apply_frame",
    "approx_ndcg",
    "average_frame_outputs",
    "balanced_mse",
    "build_graph_triple",
    "build_radius_graph",
    "compute_frames",
    "crop_pocket",
    "export_attribution",
    "fit",
    "load_complex",
    "load_manifest",
    "load_model",
    "lr_schedule",
    "metric_pearson",
    "metric_rmse",
    "parse_ligand",
    "parse_protein",
    "prepare_triple",
    "rank_loss",
    "total_loss",
]
