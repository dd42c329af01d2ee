"""Parsers: fixtures, round-trip oracles, and truncation fuzzing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planet2.chemio import (
    Atom,
    parse_ligand_sdf,
    parse_manifest,
    parse_pocket_pdb,
    parse_sdf_multi,
    read_tensor_table,
    write_manifest,
    write_pocket_pdb,
    write_sdf,
    write_sdf_multi,
    write_tensor_table,
)
from planet2.chemio.sdf import molecule
from planet2.errors import ParseError, Planet2Error, WeightsError


def pdb_line(serial, name, resname, chain, seqnum, x, y, z, element=""):
    pad_name = name if len(name) >= 4 else f" {name:<3s}"
    return (
        f"ATOM  {serial:5d} {pad_name:<4.4s} {resname:<3s} {chain}{seqnum:4d}    "
        f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00          {element:>2s}"
    )


METHANE = """methane
  test

  5  4  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    0.6300    0.6300    0.6300 H   0  0  0  0  0  0  0  0  0  0  0  0
   -0.6300   -0.6300    0.6300 H   0  0  0  0  0  0  0  0  0  0  0  0
   -0.6300    0.6300   -0.6300 H   0  0  0  0  0  0  0  0  0  0  0  0
    0.6300   -0.6300   -0.6300 H   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0  0  0  0
  1  3  1  0  0  0  0
  1  4  1  0  0  0  0
  1  5  1  0  0  0  0
M  END
"""


def benzene_text(with_h: bool = False):
    n = 12 if with_h else 6
    nb = 12 if with_h else 6
    lines = ["benzene", "  test", "", f"{n:3d}{nb:3d}  0  0  0  0  0  0  0  0999 V2000"]
    for i in range(6):
        ang = i * np.pi / 3
        lines.append(f"{1.39 * np.cos(ang):10.4f}{1.39 * np.sin(ang):10.4f}{0.0:10.4f}"
                     " C   0  0  0  0  0  0  0  0  0  0  0  0")
    if with_h:
        for i in range(6):
            ang = i * np.pi / 3
            lines.append(f"{2.48 * np.cos(ang):10.4f}{2.48 * np.sin(ang):10.4f}{0.0:10.4f}"
                         " H   0  0  0  0  0  0  0  0  0  0  0  0")
    for i in range(6):
        lines.append(f"{i + 1:3d}{(i + 1) % 6 + 1:3d}  4  0  0  0  0")
    if with_h:
        for i in range(6):
            lines.append(f"{i + 1:3d}{i + 7:3d}  1  0  0  0  0")
    lines.append("M  END")
    return "\n".join(lines) + "\n"


class TestPocketPdb:
    def test_single_ala_ca(self):
        text = pdb_line(1, "CA", "ALA", "A", 1, 1.0, 2.0, 3.0, "C") + "\n"
        rs = parse_pocket_pdb(text)
        assert len(rs.residues) == 1
        assert rs.residues[0].name == "ALA"
        assert len(rs.residues[0].atoms) == 1
        assert rs.residues[0].ca.coords == (1.0, 2.0, 3.0)

    def test_water_skipped(self):
        lines = [
            pdb_line(1, "N", "GLY", "A", 1, 0.0, 0.0, 0.0, "N"),
            pdb_line(2, "CA", "GLY", "A", 1, 1.0, 0.0, 0.0, "C"),
            pdb_line(3, "C", "GLY", "A", 1, 2.0, 0.0, 0.0, "C"),
            pdb_line(4, "O", "GLY", "A", 1, 3.0, 0.0, 0.0, "O"),
            pdb_line(5, "O", "HOH", "A", 2, 9.0, 9.0, 9.0, "O"),
        ]
        rs = parse_pocket_pdb("\n".join(lines))
        assert len(rs.residues) == 1
        assert len(rs.residues[0].atoms) == 4

    def test_residue_missing_ca_dropped(self):
        # hand-built 3-residue fixture: middle residue has no CA
        lines = [
            pdb_line(1, "CA", "ALA", "A", 1, 0.0, 0.0, 0.0, "C"),
            pdb_line(2, "CB", "ALA", "A", 1, 1.0, 0.0, 0.0, "C"),
            pdb_line(3, "N", "SER", "A", 2, 2.0, 0.0, 0.0, "N"),
            pdb_line(4, "OG", "SER", "A", 2, 3.0, 0.0, 0.0, "O"),
            pdb_line(5, "CA", "VAL", "A", 3, 4.0, 0.0, 0.0, "C"),
        ]
        rs = parse_pocket_pdb("\n".join(lines))
        assert [r.name for r in rs.residues] == ["ALA", "VAL"]

    def test_altloc_keeps_first(self):
        a = pdb_line(1, "CA", "ALA", "A", 1, 0.0, 0.0, 0.0, "C")
        b = pdb_line(2, "CA", "ALA", "A", 1, 5.0, 5.0, 5.0, "C")
        a = a[:16] + "A" + a[17:]
        b = b[:16] + "B" + b[17:]
        rs = parse_pocket_pdb(a + "\n" + b)
        assert rs.residues[0].ca.coords == (0.0, 0.0, 0.0)

    def test_order_independent(self):
        lines = [
            pdb_line(1, "CA", "ALA", "A", 2, 0.0, 0.0, 0.0, "C"),
            pdb_line(2, "CA", "GLY", "A", 1, 1.0, 0.0, 0.0, "C"),
            pdb_line(3, "CA", "SER", "B", 1, 2.0, 0.0, 0.0, "C"),
        ]
        rs1 = parse_pocket_pdb("\n".join(lines))
        rs2 = parse_pocket_pdb("\n".join(reversed(lines)))
        assert rs1 == rs2
        assert [(r.chain, r.seqnum) for r in rs1.residues] == [("A", 1), ("A", 2), ("B", 1)]

    def test_malformed_coordinate_reports_line(self):
        bad = pdb_line(1, "CA", "ALA", "A", 1, 0.0, 0.0, 0.0, "C").replace("   0.000", "  x0.000")
        with pytest.raises(ParseError, match="line 1"):
            parse_pocket_pdb(bad)

    def test_empty_set_is_error(self):
        with pytest.raises(ParseError):
            parse_pocket_pdb("REMARK nothing here\n")

    def test_writer_round_trip(self):
        lines = [
            pdb_line(1, "CA", "ALA", "A", 1, 0.1, -0.2, 0.3, "C"),
            pdb_line(2, "CB", "ALA", "A", 1, 1.0, 2.0, 3.0, "C"),
            pdb_line(3, "CA", "TRP", "B", 7, -4.0, 5.5, 6.25, "C"),
        ]
        rs = parse_pocket_pdb("\n".join(lines))
        assert parse_pocket_pdb(write_pocket_pdb(rs)) == rs


class TestLigandSdf:
    def test_methane(self):
        mol = parse_ligand_sdf(METHANE)
        assert mol.name == "methane"
        assert len(mol.atoms) == 5
        assert len(mol.bonds) == 4
        assert len(mol.heavy_indices()) == 1

    def test_benzene_aromatic_and_ring(self):
        mol = parse_ligand_sdf(benzene_text())
        assert len(mol.bonds) == 6
        assert all(b.order == 4 for b in mol.bonds)
        assert all(b.in_ring for b in mol.bonds)

    def test_methane_bonds_not_in_ring(self):
        mol = parse_ligand_sdf(METHANE)
        assert not any(b.in_ring for b in mol.bonds)

    def test_round_trip_identity(self):
        for text in (METHANE, benzene_text()):
            mol = parse_ligand_sdf(text)
            again = parse_ligand_sdf(write_sdf(mol))
            assert again == mol

    def test_canonical_bytes_fixed_point(self):
        mol = parse_ligand_sdf(METHANE)
        out = write_sdf(mol)
        assert write_sdf(parse_ligand_sdf(out)) == out

    def test_charges_round_trip(self):
        atoms = [Atom("N", 1, (0.0, 0.0, 0.0)), Atom("O", -1, (1.3, 0.0, 0.0)),
                 Atom("C", 0, (2.0, 1.0, 0.0))]
        mol = molecule("zwitterion", atoms, [(0, 1, 1, 0), (1, 2, 1, 0)])
        again = parse_ligand_sdf(write_sdf(mol))
        assert [a.charge for a in again.atoms] == [1, -1, 0]

    def test_unknown_element_warns_and_keeps_symbol(self, caplog):
        text = METHANE.replace(" C  ", " Xx ")
        with caplog.at_level("WARNING"):
            mol = parse_ligand_sdf(text)
        assert mol.atoms[0].element == "Xx"
        assert any("unknown element" in r.message for r in caplog.records)

    def test_counts_mismatch(self):
        truncated = "\n".join(METHANE.splitlines()[:6])
        with pytest.raises(ParseError):
            parse_ligand_sdf(truncated)

    def test_self_and_duplicate_bonds_rejected(self):
        bad_self = METHANE.replace("  1  2  1  0  0  0  0", "  1  1  1  0  0  0  0")
        with pytest.raises(ParseError):
            parse_ligand_sdf(bad_self)
        bad_dup = METHANE.replace("  1  3  1  0  0  0  0", "  2  1  1  0  0  0  0")
        with pytest.raises(ParseError):
            parse_ligand_sdf(bad_dup)

    def test_multi_record(self):
        text = write_sdf_multi([parse_ligand_sdf(METHANE), parse_ligand_sdf(benzene_text())])
        mols = parse_sdf_multi(text)
        assert [m.name for m in mols] == ["methane", "benzene"]

    @settings(max_examples=300, deadline=None)
    @given(cut=st.integers(min_value=0, max_value=len(METHANE) - 1))
    def test_truncation_never_escapes_typed_errors(self, cut):
        try:
            parse_ligand_sdf(METHANE[:cut])
        except Planet2Error:
            pass


class TestManifest:
    def test_round_trip(self):
        text = (
            '{"id": "c1", "pocket": "p/c1.pdb", "ligand": "l/c1.sdf", "pkd": 6.2}\n'
            '{"id": "d1", "pocket": "p/c1.pdb", "ligand": "l/d1.sdf", "decoy": true, "logp": 2.5}\n'
        )
        records = parse_manifest(text)
        assert records[0].pkd == 6.2 and not records[0].decoy
        assert records[1].decoy and records[1].pkd is None and records[1].logp == 2.5
        assert parse_manifest(write_manifest(records)) == records

    def test_duplicate_id_rejected(self):
        text = ('{"id": "a", "pocket": "p", "ligand": "l"}\n'
                '{"id": "a", "pocket": "p", "ligand": "l"}\n')
        with pytest.raises(ParseError, match="duplicate"):
            parse_manifest(text)

    def test_decoy_with_label_rejected(self):
        with pytest.raises(ParseError):
            parse_manifest('{"id": "a", "pocket": "p", "ligand": "l", "decoy": true, "pkd": 5}\n')

    def test_non_finite_pkd_rejected(self):
        with pytest.raises(ParseError):
            parse_manifest('{"id": "a", "pocket": "p", "ligand": "l", "pkd": NaN}\n')


class TestWeightsContainer:
    def test_empty_table_round_trips(self):
        blob = write_tensor_table({})
        version, table = read_tensor_table(blob)
        assert version == 1 and table == {}
        assert write_tensor_table(table) == blob

    def test_2x3_zeros_payload_size(self):
        blob = write_tensor_table({"w": np.zeros((2, 3), dtype=np.float32)})
        # magic(4) + version(4) + count(4) + name_len(2) + name(1) + ndim(1) + dims(8) + payload(24)
        assert len(blob) == 4 + 4 + 4 + 2 + 1 + 1 + 8 + 24

    def test_random_table_bit_exact_round_trip(self):
        rng = np.random.default_rng(3)
        table = {
            "a.w": rng.standard_normal((4, 7)).astype(np.float32),
            "a.b": rng.standard_normal(7).astype(np.float32),
            "c": rng.standard_normal((2, 3, 4)).astype(np.float32),
            "scalar": np.float32(1.5).reshape(()),
        }
        blob = write_tensor_table(table)
        _, back = read_tensor_table(blob)
        assert set(back) == set(table)
        for k in table:
            assert back[k].dtype == np.float32
            np.testing.assert_array_equal(back[k], table[k])
        assert write_tensor_table(back) == blob

    def test_bad_magic(self):
        blob = write_tensor_table({})
        with pytest.raises(WeightsError, match="magic"):
            read_tensor_table(b"XXXX" + blob[4:])

    def test_trailing_garbage(self):
        blob = write_tensor_table({"w": np.ones(3, dtype=np.float32)})
        with pytest.raises(WeightsError, match="trailing"):
            read_tensor_table(blob + b"\x00")

    @settings(max_examples=300, deadline=None)
    @given(data=st.data())
    def test_truncation_and_corruption_fuzz(self, data):
        rng = np.random.default_rng(0)
        blob = write_tensor_table({
            "w1": rng.standard_normal((3, 2)).astype(np.float32),
            "w2": rng.standard_normal(5).astype(np.float32),
        })
        cut = data.draw(st.integers(min_value=0, max_value=len(blob)))
        mutated = bytearray(blob[:cut])
        if mutated and data.draw(st.booleans()):
            pos = data.draw(st.integers(min_value=0, max_value=len(mutated) - 1))
            mutated[pos] ^= data.draw(st.integers(min_value=1, max_value=255))
        try:
            read_tensor_table(bytes(mutated))
        except Planet2Error:
            pass
