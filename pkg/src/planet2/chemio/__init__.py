"""Molecular file IO: pocket PDB subset, SDF V2000, JSONL manifests, weights."""

from .pdb import Residue, ResidueAtom, ResidueSet, one_letter_sequence, parse_pocket_pdb, write_pocket_pdb
from .sdf import Atom, Bond, Molecule, parse_ligand_sdf, parse_sdf_multi, write_sdf, write_sdf_multi
from .manifest import ManifestRecord, parse_manifest, write_manifest
from .weights import read_tensor_table, write_tensor_table, read_weights, write_weights

__all__ = [
    "Atom", "Bond", "Molecule", "Residue", "ResidueAtom", "ResidueSet",
    "ManifestRecord", "one_letter_sequence",
    "parse_pocket_pdb", "write_pocket_pdb",
    "parse_ligand_sdf", "parse_sdf_multi", "write_sdf", "write_sdf_multi",
    "parse_manifest", "write_manifest",
    "read_tensor_table", "write_tensor_table", "read_weights", "write_weights",
]
