"""Frame-averaged prediction: invariance, cancellation, and attribution."""

import csv
import io

import numpy as np
import numpy.testing as npt
import pytest
import torch

from deltapot.encoder import ModelConfig
from deltapot.graphs import build_graph_triple
from deltapot.model import (
    ATTRIBUTION_HEADER,
    AffinityModel,
    export_attribution,
    export_attribution_pdb,
    prepare_graph,
    prepare_triple,
)
from deltapot.structio import AtomRecord, MolecularStructure, PocketComplex, transform_complex

from helpers import make_pocket_complex, random_rotation, random_structure


def small_model(frame_mode="SE3", sharing="shared", framework="difference", seed=0):
    torch.manual_seed(seed)
    cfg = ModelConfig(
        hidden_dim=16,
        num_layers=2,
        rbf_count=8,
        frame_mode=frame_mode,
        encoder_sharing=sharing,
        framework=framework,
    )
    return AffinityModel(cfg)


class TestPrepareGraph:
    def test_frame_batching_layout(self):
        rng = np.random.default_rng(0)
        g = build_graph_triple(make_pocket_complex(rng)).complex_graph
        pg = prepare_graph(g, "SE3")
        n, e = g.num_nodes, g.num_edges
        assert pg.num_frames == 4
        assert pg.nodes_per_frame == n
        assert pg.gt.num_nodes == 4 * n
        assert pg.gt.edges.shape == (4 * e, 2)
        # atomic numbers repeat per frame; edge indices shift by k*n
        npt.assert_array_equal(pg.gt.z.view(4, n).numpy(), np.tile(g.atomic_numbers, (4, 1)))
        for k in range(4):
            block = pg.gt.edges[k * e : (k + 1) * e].numpy()
            npt.assert_array_equal(block, g.edges + k * n)
        # distances are frame-independent and reused bitwise
        assert torch.equal(pg.gt.edge_dist.view(4, e)[0], pg.gt.edge_dist.view(4, e)[3])

    def test_relpos_unit_vectors_per_frame(self):
        rng = np.random.default_rng(1)
        g = build_graph_triple(make_pocket_complex(rng)).complex_graph
        pg = prepare_graph(g, "SE3", dtype=torch.float64)
        rel = pg.gt.edge_relpos.view(4, g.num_edges, 3).numpy()
        # each frame's relative positions have unit norm (scaled by stored distance)
        npt.assert_allclose(np.linalg.norm(rel, axis=-1), 1.0, atol=1e-9)
        # frames differ pairwise unless the cloud is symmetric
        assert not np.allclose(rel[0], rel[1])

    def test_none_mode_single_frame(self):
        rng = np.random.default_rng(2)
        g = build_graph_triple(make_pocket_complex(rng)).complex_graph
        pg = prepare_graph(g, "NONE")
        assert pg.num_frames == 1
        assert pg.gt.num_nodes == g.num_nodes


class TestAffinityPrediction:
    def test_affinity_is_unbound_minus_bound(self):
        rng = np.random.default_rng(3)
        model = small_model()
        triple = build_graph_triple(make_pocket_complex(rng))
        prepared = prepare_triple(triple, "SE3")
        affinity, bound, unbound = model(prepared)
        assert torch.equal(affinity, (unbound - bound).sum())
        assert bound.shape == unbound.shape == (triple.complex_graph.num_nodes,)

    def test_report_identity_and_delta(self):
        rng = np.random.default_rng(4)
        model = small_model()
        triple = build_graph_triple(make_pocket_complex(rng))
        report = model.predict(triple)
        report.validate()
        npt.assert_allclose(
            report.per_atom_delta, report.per_atom_bound - report.per_atom_unbound
        )
        # the scalar affinity is accumulated in float32; the per-atom table is
        # exported in float64, so the sums agree to the advertised 1e-5, not exactly
        err = abs(float(report.per_atom_delta.sum()) + report.affinity)
        assert err <= 1e-5 * (1.0 + abs(report.affinity))

    def test_rigid_motion_invariance_se3(self):
        rng = np.random.default_rng(5)
        model = small_model()
        pc = make_pocket_complex(rng)
        base = model.predict_complex(pc).affinity
        for _ in range(5):
            moved = transform_complex(pc, random_rotation(rng), rng.normal(scale=10.0, size=3))
            d = abs(model.predict_complex(moved).affinity - base)
            assert d <= 1e-4 * (1.0 + abs(base))

    def test_none_mode_far_separation_cancels_exactly(self):
        """With identity frames, a distant ligand adds no interaction edges, so
        the complex energies equal the part energies atom for atom."""
        rng = np.random.default_rng(6)
        model = small_model(frame_mode="NONE")
        protein = random_structure(rng, 12, kind="protein", scale=3.0)
        far = [
            AtomRecord(a.element, a.atomic_number,
                       (a.position[0] + 500.0, a.position[1], a.position[2]),
                       None, "ligand")
            for a in random_structure(rng, 6, kind="ligand", scale=2.0).atoms
        ]
        ligand = MolecularStructure(far, "ligand")
        pc = PocketComplex(
            protein_pocket=protein,
            ligand=ligand,
            complex=MolecularStructure(protein.atoms + ligand.atoms, "complex"),
        )
        report = model.predict_complex(pc)
        assert report.affinity == 0.0
        npt.assert_array_equal(report.per_atom_delta, np.zeros(len(pc.complex)))

    def test_constant_head_cancels_exactly(self):
        rng = np.random.default_rng(7)
        model = small_model()
        with torch.no_grad():
            model.head.lin2.weight.zero_()
            model.head.lin2.bias.fill_(0.371)
        for _ in range(5):
            report = model.predict_complex(make_pocket_complex(rng))
            assert report.affinity == 0.0

    def test_complex_only_framework(self):
        rng = np.random.default_rng(8)
        model = small_model(framework="complex_only")
        triple = build_graph_triple(make_pocket_complex(rng))
        report = model.predict(triple)
        npt.assert_array_equal(report.per_atom_unbound, np.zeros_like(report.per_atom_bound))
        assert report.affinity == pytest.approx(-report.per_atom_bound.sum(), rel=1e-6)

    def test_separate_encoders_have_independent_weights(self):
        model = small_model(sharing="separate")
        assert not hasattr(model, "encoder")
        w_c = model.encoders["complex"].atom_embedding.weight
        w_p = model.encoders["protein"].atom_embedding.weight
        assert not torch.equal(w_c, w_p)
        rng = np.random.default_rng(9)
        report = model.predict_complex(make_pocket_complex(rng))
        report.validate()

    def test_permutation_equivariance_bitwise(self):
        """Shuffling atom order permutes per-atom energies with zero drift."""
        rng = np.random.default_rng(10)
        model = small_model()
        pc = make_pocket_complex(rng)
        n_p, n_l = len(pc.protein_pocket), len(pc.ligand)
        perm_p = rng.permutation(n_p)
        perm_l = rng.permutation(n_l)
        shuffled = PocketComplex(
            protein_pocket=MolecularStructure(
                [pc.protein_pocket.atoms[i] for i in perm_p], "protein"
            ),
            ligand=MolecularStructure([pc.ligand.atoms[i] for i in perm_l], "ligand"),
            complex=MolecularStructure(
                [pc.protein_pocket.atoms[i] for i in perm_p]
                + [pc.ligand.atoms[i] for i in perm_l],
                "complex",
            ),
        )
        base = model.predict_complex(pc)
        moved = model.predict_complex(shuffled)
        perm_full = np.concatenate([perm_p, n_p + perm_l])
        npt.assert_array_equal(moved.per_atom_bound, base.per_atom_bound[perm_full])
        npt.assert_array_equal(moved.per_atom_unbound, base.per_atom_unbound[perm_full])


class TestAttributionExport:
    def test_csv_layout_and_sum(self):
        rng = np.random.default_rng(11)
        model = small_model()
        pc = make_pocket_complex(rng)
        report = model.predict_complex(pc)
        text = export_attribution(report, pc)
        rows = list(csv.reader(io.StringIO(text)))
        assert tuple(rows[0]) == ATTRIBUTION_HEADER
        body = rows[1:]
        assert len(body) == len(pc.complex)
        deltas = np.array([float(r[8]) for r in body])
        assert abs(deltas.sum() + report.affinity) <= 1e-5 * (1.0 + abs(report.affinity))
        assert body[0][1] == "protein"
        assert body[-1][1] == "ligand"
        # coordinates round-trip exactly through repr
        npt.assert_array_equal(
            np.array([[float(r[3]), float(r[4]), float(r[5])] for r in body]),
            pc.complex.coords(),
        )

    def test_atom_count_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        model = small_model()
        pc = make_pocket_complex(rng)
        report = model.predict_complex(pc)
        other = make_pocket_complex(rng, n_res=7)
        with pytest.raises(ValueError):
            export_attribution(report, other)

    def test_pdb_export_carries_deltas(self):
        rng = np.random.default_rng(13)
        model = small_model()
        pc = make_pocket_complex(rng)
        report = model.predict_complex(pc)
        text = export_attribution_pdb(report, pc)
        lines = [l for l in text.splitlines() if l.startswith(("ATOM", "HETATM"))]
        assert len(lines) == len(pc.complex)
        written = np.array([float(l[60:66]) for l in lines])
        npt.assert_allclose(written, np.round(report.per_atom_delta, 2), atol=5e-3)
