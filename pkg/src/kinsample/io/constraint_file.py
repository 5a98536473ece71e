"""Explicit hydrogen-bond lists: ``HBOND chain1 res1 atom1 chain2 res2 atom2``.

A blank chain identifier is written as ``-`` or ``_``.
"""

from __future__ import annotations

import logging
from pathlib import Path

from ..errors import ParseError

log = logging.getLogger(__name__)


def _chain(tok: str) -> str:
    return "" if tok in ("-", "_") else tok


def parse_constraints(path, atoms) -> list[tuple[int, int]]:
    """Resolve each line to a pair of atom ids; duplicates are dropped."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read constraint file: {e.strerror}", path) from None
    lookup = {(a.chain_id, a.residue_id, a.name): a.id for a in atoms}
    out: list[tuple[int, int]] = []
    seen: dict[frozenset, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0].upper() != "HBOND" or len(parts) != 7:
            raise ParseError("expected: HBOND chain1 res1 atom1 chain2 res2 atom2", path, lineno)
        ids = []
        for chain, res, name in (parts[1:4], parts[4:7]):
            try:
                key = (_chain(chain), int(res), name)
            except ValueError:
                raise ParseError(f"residue number {res!r} is not an integer", path, lineno) from None
            if key not in lookup:
                raise ParseError(f"no atom {name} in residue {res} of chain {chain!r}", path, lineno)
            ids.append(lookup[key])
        if ids[0] == ids[1]:
            raise ParseError("constraint joins an atom to itself", path, lineno)
        key = frozenset(ids)
        if key in seen:
            log.warning("%s:%d duplicates line %d; ignored", path, lineno, seen[key])
            continue
        seen[key] = lineno
        out.append((ids[0], ids[1]))
    return out
