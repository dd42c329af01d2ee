"""JSONL dataset manifests: one record object per line.

Keys: id, pocket, ligand, pkd (optional), decoy (optional, default false),
logp (optional precomputed value).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from ..errors import ParseError


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    pocket: str
    ligand: str
    pkd: float | None = None
    decoy: bool = False
    logp: float | None = None


def parse_manifest(text: str) -> list[ManifestRecord]:
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON ({exc.msg})", line=lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("manifest line is not an object", line=lineno)
        try:
            rid = str(obj["id"])
            pocket = str(obj["pocket"])
            ligand = str(obj["ligand"])
        except KeyError as exc:
            raise ParseError(f"missing required key {exc.args[0]!r}", line=lineno) from None
        if rid in seen:
            raise ParseError(f"duplicate record id {rid!r}", line=lineno)
        seen.add(rid)
        pkd = obj.get("pkd")
        if pkd is not None:
            pkd = float(pkd)
            if not math.isfinite(pkd):
                raise ParseError(f"record {rid!r} has non-finite pkd", line=lineno)
        decoy = bool(obj.get("decoy", False))
        if decoy and pkd is not None:
            raise ParseError(f"decoy record {rid!r} must not carry a pkd label", line=lineno)
        logp = obj.get("logp")
        if logp is not None:
            logp = float(logp)
            if not math.isfinite(logp):
                raise ParseError(f"record {rid!r} has non-finite logp", line=lineno)
        records.append(ManifestRecord(rid, pocket, ligand, pkd, decoy, logp))
    return records


def write_manifest(records: list[ManifestRecord]) -> str:
    lines = []
    for r in records:
        obj: dict = {"id": r.id, "pocket": r.pocket, "ligand": r.ligand}
        if r.pkd is not None:
            obj["pkd"] = r.pkd
        if r.decoy:
            obj["decoy"] = True
        if r.logp is not None:
            obj["logp"] = r.logp
        lines.append(json.dumps(obj, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
