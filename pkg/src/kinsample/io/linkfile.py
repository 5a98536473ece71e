"""Plain-text linkage files.

    # comment
    [atoms]
    # id element x y z [vdw covalent [name]]
    1 C 0.0 0.0 0.0
    [bonds]
    # id_a id_b [single|double|partial-double|ring5]
    1 2 single
    [constraints]
    # id_a id_b   (a leading HBOND keyword is allowed)
    2 10
    [obstacles]
    # x y z radius
    4.0 1.0 0.0 1.5

Coordinates are written with ``repr`` so a file round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..elements import RadiiTable
from ..errors import ModelError, ParseError
from ..linkage import Atom
from ..templates import BondOrder

SECTIONS = ("atoms", "bonds", "constraints", "obstacles")


@dataclass
class LinkageDescription:
    atoms: list[Atom]
    bonds: list[tuple[int, int, str]] | None
    constraints: list[tuple[int, int]] = field(default_factory=list)
    obstacle_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    obstacle_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    source: str = ""


def _floats(parts, path, lineno, what):
    try:
        vals = [float(x) for x in parts]
    except ValueError:
        raise ParseError(f"malformed number in {what}", path, lineno) from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"non-finite value in {what}", path, lineno)
    return vals


def _int(tok, path, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected integer atom id, got {tok!r}", path, lineno) from None


def parse_linkfile(path, radii: RadiiTable | None = None) -> LinkageDescription:
    path = Path(path)
    radii = radii or RadiiTable()
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read linkage file: {e.strerror}", path) from None
    atoms: list[Atom] = []
    bonds: list[tuple[int, int, str]] = []
    saw_bonds = False
    constraints: list[tuple[int, int]] = []
    centers, obst_r = [], []
    pair_lines: list[tuple[int, int, int]] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip().lower()
            if not line.endswith("]") or name not in SECTIONS:
                raise ParseError(f"unknown section {line!r}", path, lineno)
            section = name
            saw_bonds |= name == "bonds"
            continue
        parts = line.split()
        if section is None:
            raise ParseError("data before the first section header", path, lineno)
        if section == "atoms":
            if len(parts) not in (5, 7, 8):
                raise ParseError("atom line needs: id element x y z [vdw covalent [name]]", path, lineno)
            aid = _int(parts[0], path, lineno)
            element = parts[1].upper()
            xyz = _floats(parts[2:5], path, lineno, "atom position")
            if len(parts) >= 7:
                vdw, cov = _floats(parts[5:7], path, lineno, "atom radii")
            elif element in radii:
                vdw, cov = radii.vdw(element), radii.covalent(element)
            else:
                raise ParseError(f"unknown element {parts[1]!r} and no radii given", path, lineno)
            try:
                atoms.append(Atom(aid, element, xyz, vdw, cov, name=parts[7] if len(parts) == 8 else ""))
            except ModelError as e:
                raise ParseError(str(e), path, lineno) from None
        elif section == "bonds":
            if len(parts) not in (2, 3):
                raise ParseError("bond line needs: id_a id_b [order]", path, lineno)
            order = parts[2].lower().replace("_", "-") if len(parts) == 3 else "single"
            if order not in {b.value for b in BondOrder}:
                raise ParseError(f"unknown bond order {parts[2]!r}", path, lineno)
            bonds.append((_int(parts[0], path, lineno), _int(parts[1], path, lineno), order))
            pair_lines.append((*bonds[-1][:2], lineno))
        elif section == "constraints":
            if parts[0].upper() == "HBOND":
                parts = parts[1:]
            if len(parts) != 2:
                raise ParseError("constraint line needs: id_a id_b", path, lineno)
            constraints.append((_int(parts[0], path, lineno), _int(parts[1], path, lineno)))
            pair_lines.append((*constraints[-1], lineno))
        else:
            if len(parts) != 4:
                raise ParseError("obstacle line needs: x y z radius", path, lineno)
            x, y, z, rad = _floats(parts, path, lineno, "obstacle")
            if rad <= 0:
                raise ParseError("obstacle radius must be positive", path, lineno)
            centers.append((x, y, z))
            obst_r.append(rad)
    if not atoms:
        raise ParseError("no atoms", path)
    ids = {a.id for a in atoms}
    if len(ids) != len(atoms):
        raise ParseError("duplicate atom ids", path)
    for a, b, lineno in pair_lines:
        if a not in ids or b not in ids:
            raise ParseError(f"reference to unknown atom in pair ({a}, {b})", path, lineno)
        if a == b:
            raise ParseError(f"atom {a} paired with itself", path, lineno)
    return LinkageDescription(atoms, bonds if saw_bonds else None, constraints,
                              np.array(centers, dtype=float).reshape(-1, 3), np.array(obst_r, dtype=float),
                              str(path))


def format_linkfile(atoms, positions=None, bonds=None, constraints=(), obstacle_centers=None,
                    obstacle_radii=None, header: str = "") -> str:
    positions = np.array([a.position for a in atoms]) if positions is None else np.asarray(positions)
    lines = [f"# {line}" for line in header.splitlines()]
    lines.append("[atoms]")
    for a, p in zip(atoms, positions):
        name = f" {a.name}" if a.name and " " not in a.name else ""
        lines.append(f"{a.id} {a.element} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r} "
                     f"{a.vdw_radius!r} {a.covalent_radius!r}{name}")
    if bonds is not None:
        lines.append("[bonds]")
        for b in bonds:
            order = b[2] if len(b) > 2 else "single"
            lines.append(f"{b[0]} {b[1]} {getattr(order, 'value', order)}")
    if len(constraints):
        lines.append("[constraints]")
        lines.extend(f"{a} {b}" for a, b in constraints)
    if obstacle_centers is not None and len(obstacle_centers):
        lines.append("[obstacles]")
        for c, r in zip(obstacle_centers, obstacle_radii):
            lines.append(f"{float(c[0])!r} {float(c[1])!r} {float(c[2])!r} {float(r)!r}")
    return "\n".join(lines) + "\n"


def write_linkfile(path, desc: LinkageDescription, positions=None, header: str = "") -> None:
    Path(path).write_text(format_linkfile(desc.atoms, positions, desc.bonds, desc.constraints,
                                          desc.obstacle_centers, desc.obstacle_radii, header))
