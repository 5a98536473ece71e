"""Fixed-column PDB reading and writing (ATOM/HETATM records only)."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..elements import RadiiTable, element_from_atom_name
from ..errors import ModelError, ParseError
from ..linkage import Atom

log = logging.getLogger(__name__)

WATERS = {"HOH", "WAT", "H2O", "DOD", "TIP", "TIP3", "SOL"}


def parse_pdb(path, chains=None, keep_water: bool = False, radii: RadiiTable | None = None) -> list[Atom]:
    """Atoms of the first model, optionally restricted to ``chains``.

    Alternate locations other than ' ' and 'A' are skipped. The serial
    number becomes the atom id.
    """
    path = Path(path)
    radii = radii or RadiiTable()
    if isinstance(chains, str):
        chains = set(chains.split(",")) if "," in chains else set(chains)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read PDB file: {e.strerror}", path) from None
    atoms: list[Atom] = []
    seen_ids: set[int] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        rec = line[:6]
        if rec == "ENDMDL":
            break
        if rec not in ("ATOM  ", "HETATM"):
            continue
        if len(line) < 54:
            raise ParseError("ATOM/HETATM record shorter than 54 columns", path, lineno)
        if line[16] not in (" ", "A"):
            continue
        res_name = line[17:20].strip()
        if not keep_water and res_name in WATERS:
            continue
        chain_id = line[21]
        if chains is not None and chain_id not in chains:
            continue
        try:
            serial = int(line[6:11])
        except ValueError:
            raise ParseError(f"malformed serial number {line[6:11]!r}", path, lineno) from None
        try:
            xyz = [float(line[30:38]), float(line[38:46]), float(line[46:54])]
        except ValueError:
            raise ParseError("malformed coordinate field", path, lineno) from None
        try:
            res_seq = int(line[22:26])
        except ValueError:
            raise ParseError(f"malformed residue number {line[22:26]!r}", path, lineno) from None
        name = line[12:16].strip()
        element = line[76:78].strip().upper() if len(line) >= 78 else ""
        if not element:
            element = element_from_atom_name(name)
        if element not in radii:
            raise ParseError(f"unknown element {element!r} for atom {name!r}; supply radii overrides",
                             path, lineno)
        if serial in seen_ids:
            raise ParseError(f"duplicate atom serial {serial}", path, lineno)
        seen_ids.add(serial)
        try:
            atoms.append(Atom(serial, element, xyz, radii.vdw(element), radii.covalent(element),
                              name=name, residue_name=res_name, residue_id=res_seq, chain_id=chain_id.strip()))
        except ModelError as e:
            raise ParseError(str(e), path, lineno) from None
    if not atoms:
        raise ParseError("no atoms selected", path)
    return atoms


def _atom_name_field(name: str, element: str) -> str:
    # one-letter elements start in column 14 unless the name fills all four
    if len(name) < 4 and len(element) == 1:
        return f" {name:<3}"
    return f"{name:<4}"[:4]


def format_pdb(atoms, positions=None, remark: str = "") -> str:
    positions = np.array([a.position for a in atoms]) if positions is None else np.asarray(positions)
    if np.abs(positions).max(initial=0.0) >= 9999.9995:
        raise ModelError("coordinates exceed the PDB fixed-column range")
    lines = [f"REMARK   1 {line}"[:80] for line in remark.splitlines()]
    for k, (a, p) in enumerate(zip(atoms, positions)):
        serial = a.id if 0 < a.id < 100000 else k + 1
        lines.append(
            f"ATOM  {serial:5d} {_atom_name_field(a.name or a.element, a.element)} "
            f"{(a.residue_name or 'UNK')[:3]:>3} {(a.chain_id or ' ')[:1]}{a.residue_id:4d}    "
            f"{p[0]:8.3f}{p[1]:8.3f}{p[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {a.element:>2}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_pdb(path, atoms, positions=None, remark: str = "") -> None:
    Path(path).write_text(format_pdb(atoms, positions, remark))
