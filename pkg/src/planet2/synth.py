"""Synthetic corpus generation for tests and acceptance experiments.

Pockets are residues scattered on distance shells around the origin and
ligands are compact random graphs centered there, so atom-residue distances
fall into learnable bands. Affinity labels are planted as a sum of per-pair
short-range energies, which matches the model's additive output head, and
pose benchmarks perturb the native geometry by rigid moves with known RMSD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chemio import ManifestRecord, write_manifest, write_pocket_pdb, write_sdf, write_sdf_multi
from .chemio.pdb import Residue, ResidueAtom, ResidueSet
from .chemio.sdf import Atom, Molecule, molecule
from .complexes import ComplexRecord, build_record
from .evalbench import rmsd

SHELLS = (4.0, 6.5, 9.0)
LIGAND_RADIUS = 2.5
LABEL_SCALE = 0.35
ENERGY_CENTER = 4.0
ENERGY_WIDTH = 0.8

# single-anchor side chains keep generated PDB files small
_RESIDUE_ANCHORS = (
    ("ALA", "CB", "C"), ("VAL", "CB", "C"), ("LEU", "CG", "C"), ("ILE", "CG1", "C"),
    ("MET", "SD", "S"), ("CYS", "SG", "S"), ("SER", "OG", "O"), ("THR", "OG1", "O"),
    ("LYS", "NZ", "N"),
)


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def make_ligand(rng: np.random.Generator, name: str, n_heavy: int | None = None) -> Molecule:
    """Compact random molecule with explicit hydrogens, centered at origin."""
    if n_heavy is None:
        n_heavy = int(rng.integers(7, 13))
    elements = ("C", "C", "C", "N", "O", "S")
    coords = rng.uniform(-LIGAND_RADIUS, LIGAND_RADIUS, size=(n_heavy, 3))
    coords -= coords.mean(axis=0)
    atoms = [Atom(str(rng.choice(elements)), 0, tuple(coords[i])) for i in range(n_heavy)]
    bonds = []
    for i in range(1, n_heavy):
        parent = int(rng.integers(0, i))
        order = 2 if rng.uniform() < 0.15 else 1
        bonds.append((parent, i, order, 0))
    if n_heavy >= 5 and rng.uniform() < 0.6:
        extra = (0, n_heavy - 1)
        if all({extra[0], extra[1]} != {a, b} for a, b, _, _ in bonds):
            bonds.append((extra[0], extra[1], 1, 0))
    n_h = int(rng.integers(2, 5))
    for k in range(n_h):
        parent = int(rng.integers(0, n_heavy))
        pos = coords[parent] + 1.0 * _unit(rng)
        atoms.append(Atom("H", 0, tuple(pos)))
        bonds.append((parent, n_heavy + k, 1, 0))
    return molecule(name, atoms, bonds)


def make_pocket(rng: np.random.Generator, n_residues: int | None = None) -> ResidueSet:
    """Residues on distance shells around the origin, one chain, CA + anchor."""
    if n_residues is None:
        n_residues = int(rng.integers(6, 11))
    residues = []
    for i in range(n_residues):
        shell = float(rng.choice(SHELLS)) + float(rng.normal(0.0, 0.2))
        ca = shell * _unit(rng)
        if rng.uniform() < 0.15:
            residues.append(Residue("GLY", "A", i + 1,
                                    (ResidueAtom("CA", tuple(ca), "C"),)))
            continue
        name, anchor, element = _RESIDUE_ANCHORS[int(rng.integers(0, len(_RESIDUE_ANCHORS)))]
        fc = ca + 0.8 * _unit(rng)
        residues.append(Residue(name, "A", i + 1, (
            ResidueAtom("CA", tuple(ca), "C"),
            ResidueAtom(anchor, tuple(fc), element),
        )))
    return ResidueSet(tuple(residues))


def planted_affinity(pose_dists: np.ndarray) -> float:
    """Label = scaled sum of a short-range Gaussian energy over all pairs."""
    e = np.exp(-((pose_dists - ENERGY_CENTER) ** 2) / (2.0 * ENERGY_WIDTH ** 2))
    return float(LABEL_SCALE * e.sum())


def make_labeled_record(rng: np.random.Generator, rid: str) -> ComplexRecord:
    mol = make_ligand(rng, rid)
    residues = make_pocket(rng)
    record = build_record(rid, residues, mol, pkd=0.0, decoy=False)
    record.pkd = planted_affinity(record.pose_dists)
    return record


def make_decoy_record(rng: np.random.Generator, rid: str) -> ComplexRecord:
    mol = make_ligand(rng, rid)
    residues = make_pocket(rng)
    return build_record(rid, residues, mol, pkd=None, decoy=True)


def perturbed_pose(rng: np.random.Generator, mol: Molecule,
                   min_shift: float = 1.5, max_shift: float = 3.5) -> Molecule:
    """Rigid rotation (<= 20 degrees) plus translation of the whole ligand."""
    coords = np.asarray([a.coords for a in mol.atoms])
    center = coords.mean(axis=0)
    axis = _unit(rng)
    angle = math.radians(float(rng.uniform(5.0, 20.0)))
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    rot = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
    shift = float(rng.uniform(min_shift, max_shift)) * _unit(rng)
    moved = (coords - center) @ rot.T + center + shift
    atoms = [Atom(a.element, a.charge, tuple(moved[i]), a.parity)
             for i, a in enumerate(mol.atoms)]
    return molecule(mol.name, atoms, [(b.a, b.b, b.order, b.stereo) for b in mol.bonds])


@dataclass
class PoseBenchmarkEntry:
    record: ComplexRecord
    poses: list[Molecule]   # native first
    rmsds: list[float]      # matching; 0.0 for the native


def make_pose_benchmark_entry(rng: np.random.Generator, rid: str,
                              n_decoys: int = 20) -> PoseBenchmarkEntry:
    record = make_labeled_record(rng, rid)
    heavy = record.lgraph.heavy_original_atoms
    native_coords = np.asarray([record.ligand.atoms[int(i)].coords for i in heavy])
    poses = [record.ligand]
    rmsds = [0.0]
    for _ in range(n_decoys):
        pose = perturbed_pose(rng, record.ligand)
        coords = np.asarray([pose.atoms[int(i)].coords for i in heavy])
        poses.append(pose)
        rmsds.append(rmsd(native_coords, coords))
    return PoseBenchmarkEntry(record, poses, rmsds)


def write_corpus(out_dir: Path, n_labeled: int, n_decoys: int, seed: int = 0) -> Path:
    """Write pockets/, ligands/ and manifest.jsonl; returns the manifest path."""
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    (out / "pockets").mkdir(parents=True, exist_ok=True)
    (out / "ligands").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_labeled):
        rid = f"active{i:03d}"
        record = make_labeled_record(rng, rid)
        residues = ResidueSet(tuple(
            Residue(r.name, "A", k + 1, tuple(r.atoms))
            for k, r in enumerate(_pocket_residues(record))))
        (out / "pockets" / f"{rid}.pdb").write_text(write_pocket_pdb(residues))
        (out / "ligands" / f"{rid}.sdf").write_text(write_sdf(record.ligand))
        entries.append(ManifestRecord(rid, f"pockets/{rid}.pdb", f"ligands/{rid}.sdf",
                                      pkd=record.pkd))
    for i in range(n_decoys):
        rid = f"decoy{i:03d}"
        mol = make_ligand(rng, rid)
        residues = make_pocket(rng)
        (out / "pockets" / f"{rid}.pdb").write_text(write_pocket_pdb(residues))
        (out / "ligands" / f"{rid}.sdf").write_text(write_sdf(mol))
        entries.append(ManifestRecord(rid, f"pockets/{rid}.pdb", f"ligands/{rid}.sdf",
                                      decoy=True))
    manifest = out / "manifest.jsonl"
    manifest.write_text(write_manifest(entries))
    return manifest


def _pocket_residues(record: ComplexRecord) -> list[Residue]:
    """Rebuild Residue objects from a pocket (generator-internal)."""
    out = []
    for i, res in enumerate(record.pocket.residues):
        atoms = [ResidueAtom("CA", tuple(res.ca), "C")]
        if res.name != "GLY":
            anchor, element = next((an, el) for n, an, el in _RESIDUE_ANCHORS
                                   if n == res.name)
            atoms.append(ResidueAtom(anchor, tuple(res.func_center), element))
        out.append(Residue(res.name, "A", i + 1, tuple(atoms)))
    return out


def write_pose_benchmark(out_dir: Path, n_complexes: int, n_decoys: int = 20,
                         seed: int = 0) -> Path:
    """Training-style corpus plus poses/<id>.sdf and poses/<id>.rmsd.jsonl."""
    import json

    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    for sub in ("pockets", "ligands", "poses"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_complexes):
        rid = f"cpx{i:03d}"
        bench = make_pose_benchmark_entry(rng, rid, n_decoys=n_decoys)
        residues = ResidueSet(tuple(
            Residue(r.name, "A", k + 1, tuple(r.atoms))
            for k, r in enumerate(_pocket_residues(bench.record))))
        (out / "pockets" / f"{rid}.pdb").write_text(write_pocket_pdb(residues))
        (out / "ligands" / f"{rid}.sdf").write_text(write_sdf(bench.record.ligand))
        (out / "poses" / f"{rid}.sdf").write_text(write_sdf_multi(bench.poses))
        with open(out / "poses" / f"{rid}.rmsd.jsonl", "w") as fh:
            for value in bench.rmsds:
                fh.write(json.dumps({"rmsd": value}) + "\n")
        entries.append(ManifestRecord(rid, f"pockets/{rid}.pdb", f"ligands/{rid}.sdf",
                                      pkd=bench.record.pkd))
    manifest = out / "manifest.jsonl"
    manifest.write_text(write_manifest(entries))
    return manifest
