"""Fixed-width PDB ATOM record parsing for pocket structures.

Only ATOM records for the 20 natural amino acids are kept; HETATM lines,
waters, and unknown residues are skipped. Alternate locations resolve to the
first occurrence of each atom name, and residues are keyed (and ordered) by
(chain, sequence number).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from ..errors import ParseError

logger = logging.getLogger(__name__)

AA3 = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)
AA3_SET = frozenset(AA3)
AA3_TO_1 = dict(zip(AA3, "ARNDCQEGHILKMFPSTWYV"))
AA_INDEX = {name: i for i, name in enumerate(AA3)}


@dataclass(frozen=True)
class ResidueAtom:
    name: str
    coords: tuple[float, float, float]
    element: str


@dataclass(frozen=True)
class Residue:
    name: str
    chain: str
    seqnum: int
    atoms: tuple[ResidueAtom, ...]

    def atom(self, name: str) -> ResidueAtom | None:
        for a in self.atoms:
            if a.name == name:
                return a
        return None

    @property
    def ca(self) -> ResidueAtom:
        a = self.atom("CA")
        assert a is not None, "residues are filtered to always carry a CA atom"
        return a

    def heavy_atoms(self) -> tuple[ResidueAtom, ...]:
        return tuple(a for a in self.atoms if a.element != "H")


@dataclass(frozen=True)
class ResidueSet:
    residues: tuple[Residue, ...]


def _element_from_atom_name(name: str) -> str:
    stripped = name.strip().lstrip("0123456789")
    if not stripped:
        return ""
    if stripped[0] == "H":
        return "H"
    first = stripped[0].upper()
    # two-letter elements that occur in amino acids
    if first == "S" or first == "C" or first == "N" or first == "O" or first == "P":
        return first
    return first


def parse_pocket_pdb(text: str) -> ResidueSet:
    """Parse PDB v3.3 ATOM records into a set of natural residues.

    Raises ParseError with a line number on malformed fixed-width fields,
    and when no natural residue with a CA atom survives filtering.
    """
    grouped: dict[tuple[str, int], dict] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith("ATOM"):
            continue
        if len(line) < 54:
            raise ParseError("ATOM record shorter than coordinate fields", line=lineno)
        resname = line[17:20].strip()
        if resname not in AA3_SET:
            continue
        atom_name = line[12:16].strip()
        chain = line[21] if len(line) > 21 else " "
        try:
            seqnum = int(line[22:26])
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except ValueError as exc:
            raise ParseError(f"bad fixed-width field ({exc})", line=lineno) from None
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise ParseError("non-finite coordinate", line=lineno)
        element = line[76:78].strip() if len(line) >= 78 else ""
        if not element:
            element = _element_from_atom_name(atom_name)
        key = (chain, seqnum)
        entry = grouped.get(key)
        if entry is None:
            entry = {"name": resname, "atoms": {}}
            grouped[key] = entry
        elif entry["name"] != resname:
            logger.warning("line %d: residue name %s conflicts with %s at %s%d; line skipped",
                           lineno, resname, entry["name"], chain, seqnum)
            continue
        if atom_name in entry["atoms"]:
            continue  # first altLoc occurrence wins
        entry["atoms"][atom_name] = ResidueAtom(atom_name, (x, y, z), element)

    residues = []
    for (chain, seqnum) in sorted(grouped):
        entry = grouped[(chain, seqnum)]
        if "CA" not in entry["atoms"]:
            logger.warning("residue %s %s%d dropped: no CA atom", entry["name"], chain, seqnum)
            continue
        residues.append(Residue(entry["name"], chain, seqnum, tuple(entry["atoms"].values())))
    if not residues:
        raise ParseError("no natural residues with a CA atom found")
    return ResidueSet(tuple(residues))


def one_letter_sequence(residue_set: ResidueSet) -> str:
    return "".join(AA3_TO_1[r.name] for r in residue_set.residues)


def write_pocket_pdb(residue_set: ResidueSet) -> str:
    """Serialize a ResidueSet back to ATOM records (fixture/corpus helper)."""
    lines = []
    serial = 1
    for res in residue_set.residues:
        for atom in res.atoms:
            name = atom.name if len(atom.name) >= 4 else f" {atom.name:<3s}"
            x, y, z = atom.coords
            lines.append(
                f"ATOM  {serial:5d} {name:<4.4s} {res.name:<3s} {res.chain:1.1s}"
                f"{res.seqnum:4d}    {x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00"
                f"          {atom.element:>2.2s}"
            )
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"
