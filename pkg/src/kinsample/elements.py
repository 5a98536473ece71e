"""Per-element atomic radii (van der Waals, covalent) in Angstrom."""

from __future__ import annotations

import json
from pathlib import Path

# Bondi van der Waals / Pyykko single-bond covalent radii.
DEFAULT_RADII: dict[str, tuple[float, float]] = {
    "H": (1.20, 0.31),
    "C": (1.70, 0.77),
    "N": (1.55, 0.70),
    "O": (1.52, 0.66),
    "S": (1.80, 1.05),
    "P": (1.80, 1.07),
}


class RadiiTable:
    def __init__(self, overrides: dict[str, tuple[float, float]] | None = None):
        self._table = dict(DEFAULT_RADII)
        if overrides:
            for element, (vdw, cov) in overrides.items():
                if vdw <= 0 or cov <= 0:
                    raise ValueError(f"radii for {element} must be positive")
                self._table[element.upper()] = (float(vdw), float(cov))

    @classmethod
    def from_file(cls, path: str | Path) -> "RadiiTable":
        """Load overrides from JSON: ``{"Se": [1.90, 1.20], ...}``."""
        data = json.loads(Path(path).read_text())
        return cls({k: tuple(v) for k, v in data.items()})

    def __contains__(self, element: str) -> bool:
        return element.upper() in self._table

    def vdw(self, element: str) -> float:
        return self._lookup(element)[0]

    def covalent(self, element: str) -> float:
        return self._lookup(element)[1]

    def _lookup(self, element: str) -> tuple[float, float]:
        try:
            return self._table[element.upper()]
        except KeyError:
            raise KeyError(f"no radii known for element {element!r}") from None

    def as_dict(self) -> dict[str, list[float]]:
        return {k: list(v) for k, v in sorted(self._table.items())}


def element_from_atom_name(name: str) -> str:
    # PDB names like "1HB2" or "HG12": first letter after leading digits
    for ch in name.strip():
        if ch.isalpha():
            return ch.upper()
    return ""
