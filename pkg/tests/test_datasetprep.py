"""Clustering, leakage filtering, decoy selection, and splitting."""

import numpy as np
import pytest

from planet2 import datasetprep as dp
from planet2.chemio.sdf import Atom, molecule
from planet2.errors import ParseError


class TestAlignmentIdentity:
    def test_identical(self):
        assert dp.global_alignment_identity("ACDEFGH", "ACDEFGH") == 1.0

    def test_disjoint(self):
        assert dp.global_alignment_identity("AAAA", "CCCC") == 0.0

    def test_single_substitution(self):
        assert dp.global_alignment_identity("ACDEFGHIKL", "ACDEFGHIKV") == 0.9

    def test_gap_in_alignment_length(self):
        # one deletion: 9 matches over alignment length 10
        assert dp.global_alignment_identity("ACDEFGHIKL", "ACDEFGHIK") == 0.9

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        aas = "ARNDCQEGHILKMFPSTWYV"
        for _ in range(10):
            a = "".join(rng.choice(list(aas), size=rng.integers(5, 20)))
            b = "".join(rng.choice(list(aas), size=rng.integers(5, 20)))
            assert (dp.global_alignment_identity(a, b)
                    == pytest.approx(dp.global_alignment_identity(b, a)))

    def test_empty_rejected(self):
        with pytest.raises(ParseError):
            dp.global_alignment_identity("", "ACD")


class TestClustering:
    def test_identical_sequences_one_cluster(self):
        seqs = {"p1": "ACDEFGHIKL", "p2": "ACDEFGHIKL", "p3": "ACDEFGHIKL"}
        clusters = dp.cluster_sequences(seqs)
        assert len(clusters) == 1
        assert set(clusters[0].members) == {"p1", "p2", "p3"}

    def test_unrelated_sequences_separate(self):
        clusters = dp.cluster_sequences({"a": "AAAAAAAA", "c": "CCCCCCCC"})
        assert len(clusters) == 2

    def test_planted_identities_match_all_pairs_oracle(self):
        rng = np.random.default_rng(5)
        aas = "ARNDCQEGHILKMFPSTWYV"
        base1 = "".join(rng.choice(list(aas), size=40))
        base2 = "".join(rng.choice(list(aas), size=40))

        def mutate(seq, k):
            out = list(seq)
            for pos in rng.choice(len(seq), size=k, replace=False):
                out[pos] = aas[(aas.index(out[pos]) + 1) % 20]
            return "".join(out)

        seqs = {"a0": base1, "a1": mutate(base1, 2), "a2": mutate(base1, 1),
                "b0": base2, "b1": mutate(base2, 2)}
        for i in range(5):
            seqs[f"r{i}"] = "".join(rng.choice(list(aas), size=40))
        clusters = dp.cluster_sequences(seqs, threshold=0.9)
        idx = dp.cluster_index(clusters)
        # planted 95%+ identities cluster together
        assert idx["a0"] == idx["a1"] == idx["a2"]
        assert idx["b0"] == idx["b1"]
        assert idx["a0"] != idx["b0"]
        # oracle: all-pairs identity agrees with the grouping decisions
        for i in range(5):
            rid = f"r{i}"
            for other in ("a0", "b0"):
                ident = dp.global_alignment_identity(seqs[rid], seqs[other])
                if idx[rid] == idx[other]:
                    assert ident >= 0.9 or rid != clusters[idx[other]].representative
                else:
                    assert ident < 0.9

    def test_every_protein_in_exactly_one_cluster(self):
        rng = np.random.default_rng(2)
        aas = "ARNDCQEGHILKMFPSTWYV"
        seqs = {f"p{i}": "".join(rng.choice(list(aas), size=rng.integers(10, 30)))
                for i in range(12)}
        clusters = dp.cluster_sequences(seqs)
        seen = [pid for c in clusters for pid in c.members]
        assert sorted(seen) == sorted(seqs)


class TestSoftOverlap:
    def test_same_cluster_high_tanimoto_removed(self):
        train = [("t1", 0b1111, 0)]
        test = [(0b1111, 0)]
        retained, removed = dp.soft_overlap_filter(train, test)
        assert removed == [0] and retained == []

    def test_same_cluster_low_tanimoto_retained(self):
        train = [("t1", 0b11110000, 0)]
        test = [(0b00001111, 0)]
        retained, removed = dp.soft_overlap_filter(train, test)
        assert retained == [0] and removed == []

    def test_different_cluster_retained_even_if_identical(self):
        train = [("t1", 0b1111, 1)]
        test = [(0b1111, 0)]
        retained, removed = dp.soft_overlap_filter(train, test)
        assert retained == [0]

    def test_exhaustive_small_cases_never_overremove(self):
        fps = [0b0011, 0b0111, 0b1111, 0b1100]
        for t_fp in fps:
            for cluster_same in (True, False):
                train = [("x", t_fp, 0)]
                test = [(0b0111, 0 if cluster_same else 1)]
                retained, removed = dp.soft_overlap_filter(train, test)
                from planet2.featurize import tanimoto
                should_remove = cluster_same and tanimoto(t_fp, 0b0111) > 0.9
                assert (removed == [0]) == should_remove


class TestDecoySelection:
    def _mol(self, elements):
        atoms = [Atom(e, 0, (float(i), 0.0, 0.0)) for i, e in enumerate(elements)]
        bonds = [(i, i + 1, 1, 0) for i in range(len(elements) - 1)]
        return molecule("m", atoms, bonds)

    def test_boundary_tanimoto_strict(self):
        from planet2.featurize import ecfp4

        active = self._mol(["C", "N", "O"])
        # a candidate identical to the active has Tanimoto 1.0 -> rejected
        assert dp.select_decoys([active], ecfp4(active)) == []

    def test_druglike_dissimilar_accepted(self):
        from planet2.featurize import ecfp4

        active = self._mol(["C", "C", "C", "C"])
        candidate = self._mol(["N", "O", "S", "N", "O"])
        accepted = dp.select_decoys([candidate], ecfp4(active))
        assert accepted == [0]

    def test_rule_failures_rejected(self):
        from planet2.featurize import ecfp4

        active = self._mol(["C", "C"])
        candidate = self._mol(["N", "O", "S"])
        # force two rule failures via a supplied extreme logP plus many donors
        accepted = dp.select_decoys([candidate], ecfp4(active),
                                    candidate_logps=[9.9])
        assert accepted == [0]  # only one rule fails (logp): still >= 3
        big = self._mol(["N"] * 11)  # HBA 11 fails, plus supplied logp fails
        accepted = dp.select_decoys([big], ecfp4(active), candidate_logps=[9.9])
        assert accepted == []  # hbd 11 + hba 11 + logp -> only MW passes


class TestSplit:
    def test_sizes_ten(self):
        train, val = dp.split_records(list(range(10)), seed=1)
        assert len(train) == 8 and len(val) == 2

    def test_ceil_rule(self):
        train, val = dp.split_records(list(range(7)), seed=1)
        assert len(train) == 6 and len(val) == 1

    def test_deterministic(self):
        a = dp.split_records(list(range(20)), seed=5)
        b = dp.split_records(list(range(20)), seed=5)
        assert a == b
        c = dp.split_records(list(range(20)), seed=6)
        assert a != c

    def test_partition(self):
        items = list(range(15))
        train, val = dp.split_records(items, seed=2)
        assert sorted(train + val) == items
        assert not set(train) & set(val)

    def test_too_few_rejected(self):
        with pytest.raises(ParseError):
            dp.split_records([1, 2, 3], seed=0)
