"""Residue templates assigning bond-order tags to covalent bonds.

Only bonds that must be contracted into rigid bodies are listed; anything
not matched stays ``single`` and becomes a candidate revolute joint.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path

from .errors import ParseError


class BondOrder(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    PARTIAL_DOUBLE = "partial-double"
    RING5 = "ring5"

    @property
    def rigid(self) -> bool:
        return self is not BondOrder.SINGLE


D, PD, R5 = BondOrder.DOUBLE, BondOrder.PARTIAL_DOUBLE, BondOrder.RING5

_PHE_RING = [("CG", "CD1"), ("CD1", "CE1"), ("CE1", "CZ"), ("CZ", "CE2"), ("CE2", "CD2"), ("CD2", "CG")]

_RESIDUE_BONDS: dict[str, list[tuple[str, str, BondOrder]]] = {
    "ASP": [("CG", "OD1", D), ("CG", "OD2", D)],
    "GLU": [("CD", "OE1", D), ("CD", "OE2", D)],
    "ASN": [("CG", "OD1", D), ("CG", "ND2", PD)],
    "GLN": [("CD", "OE1", D), ("CD", "NE2", PD)],
    "ARG": [("NE", "CZ", PD), ("CZ", "NH1", PD), ("CZ", "NH2", PD)],
    "PHE": [(a, b, D) for a, b in _PHE_RING],
    "TYR": [(a, b, D) for a, b in _PHE_RING],
    "HIS": [(a, b, D) for a, b in
            [("CG", "ND1"), ("ND1", "CE1"), ("CE1", "NE2"), ("NE2", "CD2"), ("CD2", "CG")]],
    "TRP": [(a, b, D) for a, b in
            [("CG", "CD1"), ("CD1", "NE1"), ("NE1", "CE2"), ("CE2", "CD2"), ("CD2", "CG"),
             ("CE2", "CZ2"), ("CZ2", "CH2"), ("CH2", "CZ3"), ("CZ3", "CE3"), ("CE3", "CD2")]],
    "PRO": [(a, b, R5) for a, b in [("N", "CA"), ("CA", "CB"), ("CB", "CG"), ("CG", "CD"), ("CD", "N")]],
}
for _alias, _res in (("HID", "HIS"), ("HIE", "HIS"), ("HIP", "HIS"), ("ASH", "ASP"), ("GLH", "GLU")):
    _RESIDUE_BONDS[_alias] = _RESIDUE_BONDS[_res]

_PROTEIN_COMMON = {frozenset(("C", "O")): D, frozenset(("C", "OXT")): D}

NUCLEOTIDES = {"A", "G", "C", "U", "T", "DA", "DG", "DC", "DT", "DU",
               "ADE", "GUA", "CYT", "URA", "THY", "RA", "RG", "RC", "RU"}
_RIBOSE = [("C1'", "C2'"), ("C2'", "C3'"), ("C3'", "C4'"), ("C4'", "O4'"), ("O4'", "C1'")]
_PHOSPHATE_O = {"OP1", "OP2", "O1P", "O2P"}


def _is_base_atom(name: str, element: str) -> bool:
    return ("'" not in name and "*" not in name and element != "H"
            and not name.startswith("P") and name not in _PHOSPHATE_O)


class TemplateTable:
    """Maps (residue, atom name pair) to a bond order.

    ``overrides`` entries win over the built-in table.
    """

    def __init__(self, overrides: dict[tuple[str, frozenset], BondOrder] | None = None):
        self._table: dict[tuple[str, frozenset], BondOrder] = {}
        for res, bonds in _RESIDUE_BONDS.items():
            for a, b, order in bonds:
                self._table[(res, frozenset((a, b)))] = order
        for res in NUCLEOTIDES:
            for a, b in _RIBOSE:
                self._table[(res, frozenset((a, b)))] = R5
            for o in _PHOSPHATE_O:
                self._table[(res, frozenset(("P", o)))] = D
        self._overrides = dict(overrides or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "TemplateTable":
        """Read ``RESNAME ATOM1 ATOM2 ORDER`` lines (``*`` matches any residue)."""
        overrides = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError("expected RESNAME ATOM1 ATOM2 ORDER", path, lineno)
            try:
                order = BondOrder(parts[3])
            except ValueError:
                raise ParseError(f"unknown bond order {parts[3]!r}", path, lineno) from None
            overrides[(parts[0].upper(), frozenset((parts[1], parts[2])))] = order
        return cls(overrides)

    def order(self, a, b) -> BondOrder:
        """Bond order for a bond between two atoms (objects with residue info)."""
        names = frozenset((a.name, b.name))
        same_residue = (a.chain_id, a.residue_id) == (b.chain_id, b.residue_id)
        if same_residue:
            for key in ((a.residue_name, names), ("*", names)):
                if key in self._overrides:
                    return self._overrides[key]
            res = a.residue_name
            if (res, names) in self._table:
                return self._table[(res, names)]
            if res in NUCLEOTIDES:
                if _is_base_atom(a.name, a.element) and _is_base_atom(b.name, b.element):
                    return D
                return BondOrder.SINGLE
            if names in _PROTEIN_COMMON and res not in NUCLEOTIDES:
                return _PROTEIN_COMMON[names]
            return BondOrder.SINGLE
        # peptide bond C(i)-N(i+1)
        if a.chain_id == b.chain_id and {a.name, b.name} == {"C", "N"}:
            return PD
        return BondOrder.SINGLE
