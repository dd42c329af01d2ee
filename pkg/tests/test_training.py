"""Loss semantics, gradient fidelity, determinism, and a small overfit run."""

import numpy as np
import pytest

from planet2 import diffcore as dc
from planet2 import network as net
from planet2 import synth
from planet2 import training as tr
from planet2.chemio.sdf import Atom, molecule
from planet2.errors import TrainingError

TINY = net.NetConfig(hidden_dim=8, heads=2, mixtures=3, msg_layers=2,
                     dan_layers=2, egcl_layers=1, gate_hidden=6, contact_hidden=6)


def tiny_records(seed=0, n_labeled=2, n_decoys=1):
    rng = np.random.default_rng(seed)
    records = [synth.make_labeled_record(rng, f"a{i}") for i in range(n_labeled)]
    records += [synth.make_decoy_record(rng, f"d{i}") for i in range(n_decoys)]
    return records


class TestContactLabels:
    def test_bonded_pair_below_threshold(self):
        mol = molecule("m", [Atom("C", 0, (0.0, 0.0, 0.0)), Atom("C", 0, (1.5, 0.0, 0.0))],
                       [(0, 1, 1, 0)])
        labels = tr.contact_labels(mol)
        assert labels[0, 1] == 1.0 and labels[1, 0] == 1.0

    def test_distant_pair_zero(self):
        mol = molecule("m", [Atom("C", 0, (0.0, 0.0, 0.0)), Atom("C", 0, (10.0, 0.0, 0.0))],
                       [(0, 1, 1, 0)])
        assert tr.contact_labels(mol)[0, 1] == 0.0

    def test_symmetric_zero_diagonal_random(self):
        rng = np.random.default_rng(3)
        mol = synth.make_ligand(rng, "x")
        labels = tr.contact_labels(mol)
        assert (labels == labels.T).all()
        assert np.trace(labels) == 0.0
        heavy = mol.heavy_indices()
        coords = np.asarray([mol.atoms[i].coords for i in heavy])
        for i in range(len(heavy)):
            for j in range(len(heavy)):
                expected = float(i != j and np.linalg.norm(coords[i] - coords[j]) < 4.0)
                assert labels[i, j] == expected

    def test_hydrogens_excluded(self):
        rng = np.random.default_rng(4)
        mol = synth.make_ligand(rng, "x")
        assert tr.contact_labels(mol).shape[0] == len(mol.heavy_indices())


class TestCompositeLoss:
    def test_breakdown_keys_and_term_presence(self):
        records = tiny_records()
        params = net.ModelParams.init(TINY, seed=0)
        total, parts = tr.composite_loss(records, params)
        assert set(parts) == {"aff", "lig", "mdn", "decoy", "atom", "resi", "total"}
        assert parts["total"] == pytest.approx(total.item())
        assert parts["decoy"] > 0.0
        assert parts["mdn"] != 0.0

    def test_decoy_only_terms(self):
        records = [r for r in tiny_records() if r.decoy]
        params = net.ModelParams.init(TINY, seed=0)
        with pytest.raises(TrainingError):
            tr.validate_training_records(records)
        # decoys alone still produce decoy + type terms
        total, parts = tr.composite_loss(records, params)
        assert parts["aff"] == 0.0 and parts["mdn"] == 0.0 and parts["decoy"] > 0.0

    def test_weight_linearity(self):
        records = tiny_records()
        params = net.ModelParams.init(TINY, seed=1)
        base = tr.composite_loss(records, params, tr.LossWeights())[1]
        doubled = tr.composite_loss(records, params,
                                    tr.LossWeights(affinity=4.0))[1]
        assert doubled["aff"] == pytest.approx(base["aff"], rel=1e-12)
        gain = doubled["total"] - base["total"]
        assert gain == pytest.approx(2.0 * base["aff"], rel=1e-9)

    def test_zero_weight_leaves_other_gradients_unchanged(self):
        records = tiny_records()
        params = net.ModelParams.init(TINY, seed=2)
        name = "mdn.p.W_rho"

        def grad_with(weights):
            for t in params.tensors.values():
                t.grad = None
            total, _ = tr.composite_loss(records, params, weights)
            total.backward()
            return params[name].grad.copy()

        g_full = grad_with(tr.LossWeights(decoy=0.2))
        g_nodecoy = grad_with(tr.LossWeights(decoy=0.0))
        # removing one term shifts the gradient by exactly that term's share
        g_decoy_only = grad_with(tr.LossWeights(affinity=0, contact=0, mdn=0,
                                                decoy=0.2, aux=0))
        np.testing.assert_allclose(g_full, g_nodecoy + g_decoy_only, rtol=1e-9, atol=1e-12)

    def test_decoy_term_pose_invariant(self):
        rng = np.random.default_rng(9)
        record = synth.make_decoy_record(rng, "d")
        params = net.ModelParams.init(TINY, seed=3)
        base = tr.record_loss_terms(record, params)["decoy"].item()
        moved_ligand = synth.perturbed_pose(rng, record.ligand)
        from planet2.chemio.pdb import ResidueSet
        from planet2.complexes import build_record
        rebuilt = build_record("d", ResidueSet(tuple(synth._pocket_residues(record))),
                               moved_ligand, pkd=None, decoy=True)
        moved = tr.record_loss_terms(rebuilt, params)["decoy"].item()
        assert moved == pytest.approx(base, abs=1e-12)

    def test_perfect_affinity_prediction_zeroes_term(self):
        records = tiny_records(n_labeled=1, n_decoys=0)
        params = net.ModelParams.init(TINY, seed=4)
        from planet2 import gmm
        with dc.no_grad():
            pair = net.predict_pair_gmm(records[0].lgraph, records[0].pgraph, params)
        records[0].pkd = gmm.affinity(pair)
        _, parts = tr.composite_loss(records, params)
        assert parts["aff"] < 1e-18


class TestGradientFidelity:
    def test_composite_loss_full_gradient(self):
        # 6-atom / 5-residue instance, every named tensor, 64-bit
        rng = np.random.default_rng(11)
        mol = synth.make_ligand(rng, "grad", n_heavy=6)
        pocket_rs = synth.make_pocket(rng, n_residues=5)
        from planet2.complexes import build_record
        labeled = build_record("g1", pocket_rs, mol, pkd=3.0, decoy=False)
        decoy = build_record("g2", pocket_rs, synth.make_ligand(rng, "gd", n_heavy=6),
                             pkd=None, decoy=True)
        cfg = net.NetConfig(hidden_dim=6, heads=2, mixtures=2, msg_layers=2,
                            dan_layers=1, egcl_layers=1, gate_hidden=4, contact_hidden=4)
        params = net.ModelParams.init(cfg, seed=5)
        subset = [
            "ligand.W_atom", "ligand.W_Q", "ligand.W_message", "ligand.W_out",
            "dan.gate.W1", "dan.read.W1", "egcl.0.edge.W1", "egcl.0.inf.W",
            "comm.W_qk_lig", "comm.W_att_pro", "mdn.p.W_rho", "mdn.p.W_sigma",
            "mdn.e.W_rho", "mdn.e.W_mu", "aux.contact.W1", "aux.atom_type.W",
            "aux.resi_type.b", "ligand.b_message", "dan.b_dist",
        ]

        def f():
            return tr.composite_loss([labeled, decoy], params)[0]

        # the full sweep over every named tensor runs in the acceptance suite
        err = dc.grad_check_ladder(f, [params[name] for name in subset])
        assert err < 1e-5


class TestTrainLoop:
    def test_determinism_same_seed(self):
        records = tiny_records()
        cfg = tr.TrainConfig(max_steps=5, batch_size=3, seed=7, learning_rate=1e-3)
        p1, t1 = tr.train(records, TINY, cfg)
        p2, t2 = tr.train(records, TINY, cfg)
        assert p1.to_bytes() == p2.to_bytes()
        assert t1 == t2

    def test_trace_columns_and_csv(self):
        records = tiny_records()
        cfg = tr.TrainConfig(max_steps=3, batch_size=2, seed=1)
        _, trace = tr.train(records, TINY, cfg)
        assert [row["step"] for row in trace] == [1, 2, 3]
        csv = tr.trace_to_csv(trace)
        lines = csv.strip().splitlines()
        assert lines[0] == "step,total,aff,lig,mdn,decoy,atom,resi,lr"
        assert len(lines) == 4

    def test_missing_label_named(self):
        records = tiny_records(n_labeled=1, n_decoys=0)
        records[0].pkd = None
        with pytest.raises(TrainingError, match="a0"):
            tr.validate_training_records(records)

    def test_lr_schedule(self):
        cfg = tr.TrainConfig(learning_rate=1e-3, decay_factor=0.9, decay_interval=10)
        assert tr.learning_rate_at(cfg, 1) == 1e-3
        assert tr.learning_rate_at(cfg, 10) == 1e-3
        assert tr.learning_rate_at(cfg, 11) == pytest.approx(9e-4)
        assert tr.learning_rate_at(cfg, 21) == pytest.approx(8.1e-4)

    def test_loss_decreases_on_small_overfit(self):
        rng = np.random.default_rng(2)
        records = [synth.make_labeled_record(rng, f"c{i}") for i in range(3)]
        cfg = tr.TrainConfig(max_steps=120, batch_size=3, seed=3, learning_rate=3e-3)
        _, trace = tr.train(records, TINY, cfg)
        head = np.mean([row["total"] for row in trace[:20]])
        tail = np.mean([row["total"] for row in trace[-20:]])
        assert tail < head
