"""SDF/MOL V2000 reading and writing.

The writer emits a canonical byte layout (fixed program line, charges carried
by ``M  CHG`` properties, atom-block charge codes left at zero), so
parse -> serialize is byte-stable on files this package wrote, and
parse -> serialize -> parse is a fixed point for any valid input.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from ..errors import ParseError

logger = logging.getLogger(__name__)

PROGRAM_LINE = "  planet2          3D"

KNOWN_ELEMENTS = frozenset(
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U D T".split()
)

# V2000 atom-block charge codes; 4 is a doublet radical (charge 0).
_CHARGE_FROM_CODE = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}

BOND_SINGLE, BOND_DOUBLE, BOND_TRIPLE, BOND_AROMATIC = 1, 2, 3, 4
_HYDROGEN_LIKE = frozenset({"H", "D", "T"})


def _norm_symbol(symbol: str) -> str:
    s = symbol.strip()
    if not s:
        return s
    return s[0].upper() + s[1:].lower()


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    coords: tuple[float, float, float] = (0.0, 0.0, 0.0)
    parity: int = 0

    @property
    def heavy(self) -> bool:
        return _norm_symbol(self.element) not in _HYDROGEN_LIKE


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: int  # 1 single, 2 double, 3 triple, 4 aromatic
    stereo: int = 0
    in_ring: bool = False


@dataclass(frozen=True)
class Molecule:
    name: str
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()

    def heavy_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.atoms) if a.heavy)

    def neighbors(self) -> list[list[tuple[int, Bond]]]:
        adj: list[list[tuple[int, Bond]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond))
            adj[bond.b].append((bond.a, bond))
        return adj


def _ring_bond_flags(n_atoms: int, bonds: list[tuple[int, int]]) -> list[bool]:
    """An undirected edge is in a ring iff it is not a bridge."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_atoms)]
    for ei, (a, b) in enumerate(bonds):
        adj[a].append((b, ei))
        adj[b].append((a, ei))
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    is_bridge = [False] * len(bonds)
    timer = 0
    for root in range(n_atoms):
        if disc[root] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            node, in_edge, ptr = stack.pop()
            if ptr == 0:
                disc[node] = low[node] = timer
                timer += 1
            advanced = False
            while ptr < len(adj[node]):
                nxt, ei = adj[node][ptr]
                ptr += 1
                if ei == in_edge:
                    continue
                if disc[nxt] == -1:
                    stack.append((node, in_edge, ptr))
                    stack.append((nxt, ei, 0))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nxt])
            if advanced or stack == []:
                continue
            # node finished: propagate low to parent
            parent, pedge, _ = stack[-1]
            low[parent] = min(low[parent], low[node])
            if low[node] > disc[parent]:
                is_bridge[in_edge] = True
    return [not b for b in is_bridge]


def molecule(name: str, atoms: list[Atom], bonds: list[tuple[int, int, int, int]]) -> Molecule:
    """Build a validated Molecule; bonds are (a, b, order, stereo) tuples."""
    n = len(atoms)
    seen: set[tuple[int, int]] = set()
    for a, b, order, _ in bonds:
        if not (0 <= a < n and 0 <= b < n):
            raise ParseError(f"bond endpoint out of range: {a + 1}-{b + 1}")
        if a == b:
            raise ParseError(f"self-bond on atom {a + 1}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ParseError(f"duplicate bond {a + 1}-{b + 1}")
        seen.add(key)
        if order not in (BOND_SINGLE, BOND_DOUBLE, BOND_TRIPLE, BOND_AROMATIC):
            raise ParseError(f"unsupported bond order code {order}")
    if not any(a.heavy for a in atoms):
        raise ParseError("molecule has no heavy atom")
    for a in atoms:
        if not all(math.isfinite(c) for c in a.coords):
            raise ParseError("non-finite atom coordinate")
    ring = _ring_bond_flags(n, [(a, b) for a, b, _, _ in bonds])
    built = tuple(
        Bond(a, b, order, stereo, ring[i]) for i, (a, b, order, stereo) in enumerate(bonds)
    )
    return Molecule(name, tuple(atoms), built)


def _int_field(line: str, start: int, end: int, lineno: int, what: str, default=None) -> int:
    raw = line[start:end].strip()
    if not raw:
        if default is not None:
            return default
        raise ParseError(f"missing {what}", line=lineno)
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"bad {what} field {raw!r}", line=lineno) from None


def _float_field(line: str, start: int, end: int, lineno: int, what: str) -> float:
    raw = line[start:end].strip()
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"bad {what} field {raw!r}", line=lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what}", line=lineno)
    return value


def parse_ligand_sdf(text: str, lineno_offset: int = 0) -> Molecule:
    """Parse one V2000 record (header, counts, atom/bond blocks, M CHG/M END)."""
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("record shorter than header + counts line",
                         line=lineno_offset + len(lines))
    name = lines[0].strip()
    counts = lines[3]
    counts_lineno = lineno_offset + 4
    n_atoms = _int_field(counts, 0, 3, counts_lineno, "atom count")
    n_bonds = _int_field(counts, 3, 6, counts_lineno, "bond count")
    if n_atoms < 1:
        raise ParseError("atom count must be >= 1", line=counts_lineno)
    if n_bonds < 0:
        raise ParseError("negative bond count", line=counts_lineno)
    if len(lines) < 4 + n_atoms + n_bonds:
        raise ParseError(
            f"counts line declares {n_atoms} atoms / {n_bonds} bonds "
            f"but only {len(lines) - 4} block lines are present",
            line=counts_lineno,
        )

    atoms: list[Atom] = []
    for i in range(n_atoms):
        lineno = counts_lineno + 1 + i
        line = lines[4 + i]
        if len(line) < 34:
            raise ParseError("atom line shorter than coordinate+symbol fields", line=lineno)
        x = _float_field(line, 0, 10, lineno, "x coordinate")
        y = _float_field(line, 10, 20, lineno, "y coordinate")
        z = _float_field(line, 20, 30, lineno, "z coordinate")
        symbol = line[31:34].strip()
        if not symbol:
            raise ParseError("empty element symbol", line=lineno)
        if _norm_symbol(symbol) not in KNOWN_ELEMENTS:
            logger.warning("line %d: unknown element symbol %r kept verbatim; "
                           "it will featurize into the 'other' class", lineno, symbol)
        code = _int_field(line, 36, 39, lineno, "charge code", default=0)
        if code not in _CHARGE_FROM_CODE:
            raise ParseError(f"unsupported charge code {code}", line=lineno)
        if code == 4:
            logger.warning("line %d: doublet radical flag ignored", lineno)
        parity = _int_field(line, 39, 42, lineno, "stereo parity", default=0)
        atoms.append(Atom(symbol, _CHARGE_FROM_CODE[code], (x, y, z), parity))

    bonds: list[tuple[int, int, int, int]] = []
    for i in range(n_bonds):
        lineno = counts_lineno + 1 + n_atoms + i
        line = lines[4 + n_atoms + i]
        if len(line) < 9:
            raise ParseError("bond line shorter than endpoint+order fields", line=lineno)
        a = _int_field(line, 0, 3, lineno, "bond endpoint") - 1
        b = _int_field(line, 3, 6, lineno, "bond endpoint") - 1
        order = _int_field(line, 6, 9, lineno, "bond order")
        stereo = _int_field(line, 9, 12, lineno, "bond stereo", default=0) if len(line) > 9 else 0
        bonds.append((a, b, order, stereo))

    charges: dict[int, int] | None = None
    for j in range(4 + n_atoms + n_bonds, len(lines)):
        lineno = lineno_offset + j + 1
        line = lines[j]
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            if charges is None:
                charges = {}
            count = _int_field(line, 6, 9, lineno, "charge entry count")
            for k in range(count):
                base = 9 + 8 * k
                if len(line) < base + 8:
                    raise ParseError("truncated M CHG entry", line=lineno)
                idx = _int_field(line, base, base + 4, lineno, "charge atom index") - 1
                val = _int_field(line, base + 4, base + 8, lineno, "charge value")
                if not 0 <= idx < n_atoms:
                    raise ParseError(f"charge atom index {idx + 1} out of range", line=lineno)
                charges[idx] = val
    if charges is not None:
        # property-block charges supersede all atom-block charge codes
        atoms = [
            Atom(a.element, charges.get(i, 0), a.coords, a.parity)
            for i, a in enumerate(atoms)
        ]
    try:
        return molecule(name, atoms, bonds)
    except ParseError as exc:
        if exc.line is None:
            raise ParseError(str(exc), line=counts_lineno) from None
        raise


def parse_sdf_multi(text: str) -> list[Molecule]:
    """Parse a multi-record SDF (records separated by ``$$$$`` lines)."""
    mols: list[Molecule] = []
    chunk: list[str] = []
    offset = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "$$$$":
            if any(l.strip() for l in chunk):
                mols.append(parse_ligand_sdf("\n".join(chunk), lineno_offset=offset))
            chunk = []
            offset = lineno
        else:
            chunk.append(line)
    if any(l.strip() for l in chunk):
        mols.append(parse_ligand_sdf("\n".join(chunk), lineno_offset=offset))
    if not mols:
        raise ParseError("no SDF records found")
    return mols


def write_sdf(mol: Molecule) -> str:
    lines = [mol.name, PROGRAM_LINE, ""]
    lines.append(f"{len(mol.atoms):3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for a in mol.atoms:
        x, y, z = a.coords
        lines.append(
            f"{x:10.4f}{y:10.4f}{z:10.4f} {a.element:<3.3s} 0  0{a.parity:3d}"
            "  0  0  0  0  0  0  0  0  0"
        )
    for b in mol.bonds:
        lines.append(f"{b.a + 1:3d}{b.b + 1:3d}{b.order:3d}{b.stereo:3d}  0  0  0")
    charged = [(i, a.charge) for i, a in enumerate(mol.atoms) if a.charge != 0]
    for start in range(0, len(charged), 8):
        group = charged[start:start + 8]
        entries = "".join(f"{i + 1:4d}{c:4d}" for i, c in group)
        lines.append(f"M  CHG{len(group):3d}{entries}")
    lines.append("M  END")
    return "\n".join(lines) + "\n"


def write_sdf_multi(mols: list[Molecule]) -> str:
    return "".join(write_sdf(m) + "$$$$\n" for m in mols)
