"""Synthetic linkages used by the tests, the acceptance suite and the CLI demo."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .elements import RadiiTable
from .linkage import Atom

CC_BOND = 1.53
CC_ANGLE = math.radians(111.0)


def place_atom(a, b, c, bond: float, angle: float, torsion: float) -> np.ndarray:
    """Position of d with |cd| = bond, angle bcd, and dihedral abcd (NeRF)."""
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    d2 = np.array([-bond * math.cos(angle), bond * math.sin(angle) * math.cos(torsion),
                   bond * math.sin(angle) * math.sin(torsion)])
    return c + d2[0] * bc + d2[1] * m + d2[2] * n


def nerf_chain(torsions, bond: float = CC_BOND, angle: float = CC_ANGLE) -> np.ndarray:
    """Zig-zag chain with len(torsions) + 3 atoms."""
    pts = [np.zeros(3), np.array([bond, 0.0, 0.0])]
    pts.append(pts[1] + bond * np.array([-math.cos(angle), math.sin(angle), 0.0]))
    for t in torsions:
        pts.append(place_atom(pts[-3], pts[-2], pts[-1], bond, angle, t))
    return np.array(pts)


@dataclass
class SyntheticLinkage:
    atoms: list[Atom]
    bonds: list[tuple[int, int, str]]
    constraints: list[tuple[int, int]] = field(default_factory=list)
    obstacle_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    obstacle_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))


def chain_atoms(positions, element: str = "C", radii: RadiiTable | None = None) -> list[Atom]:
    radii = radii or RadiiTable()
    return [Atom(k + 1, element, p, radii.vdw(element), radii.covalent(element), name=f"{element}{k + 1}")
            for k, p in enumerate(positions)]


def chain_bonds(n: int) -> list[tuple[int, int, str]]:
    return [(k, k + 1, "single") for k in range(1, n)]


def _min_gap(positions, radii, scale, skip_bonded: int = 3) -> float:
    """Smallest (distance - scaled radius sum) over non-excluded atom pairs."""
    n = len(positions)
    d = np.linalg.norm(positions[:, None] - positions[None], axis=-1)
    lim = scale * (radii[:, None] + radii[None])
    idx = np.arange(n)
    far = np.abs(idx[:, None] - idx[None]) > skip_bonded
    return float(np.min(np.where(far, d - lim, np.inf))) if far.any() else np.inf


def random_chain(n_atoms: int, rng, spread: float = math.radians(60), scale: float = 0.75,
                 tries: int = 200) -> np.ndarray:
    """Clash-free chain with torsions drawn around trans."""
    radius = RadiiTable().vdw("C")
    for _ in range(tries):
        tors = math.pi + rng.uniform(-spread, spread, n_atoms - 3)
        pos = nerf_chain(tors)
        if _min_gap(pos, np.full(n_atoms, radius), scale) > 0.3:
            return pos
    raise RuntimeError("could not build a clash-free chain")


def dense_chain(n_atoms: int = 52, n_obstacles: int = 40, obstacle_radius: float = 1.5,
                fraction: float = 0.8, scale: float = 0.75, seed: int = 7) -> SyntheticLinkage:
    """Chain threaded through obstacle spheres.

    Each obstacle sits next to a chain atom at distance ``threshold /
    fraction``, where threshold is the scaled radius sum, and clears every
    other atom by at least the same margin.
    """
    rng = np.random.default_rng(seed)
    pos = random_chain(n_atoms, rng)
    atoms = chain_atoms(pos)
    radius = atoms[0].vdw_radius
    thr = scale * (radius + obstacle_radius)
    dist = thr / fraction
    centers: list[np.ndarray] = []
    anchors = rng.permutation(np.arange(2, n_atoms))
    k = 0
    while len(centers) < n_obstacles and k < 50 * n_obstacles:
        a = anchors[k % len(anchors)]
        k += 1
        v = rng.standard_normal(3)
        c = pos[a] + dist * v / np.linalg.norm(v)
        if np.min(np.linalg.norm(pos - c, axis=1)) < dist - 1e-9:
            continue
        centers.append(c)
    if len(centers) < n_obstacles:
        raise RuntimeError("could not place obstacles")
    return SyntheticLinkage(atoms, chain_bonds(n_atoms), [], np.array(centers),
                            np.full(n_obstacles, obstacle_radius))


def elongated_chain(n_atoms: int = 30, n_hinges: int = 3, seed: int = 3) -> SyntheticLinkage:
    """Long extended rod of rigid segments joined by ``n_hinges`` rotatable bonds."""
    rng = np.random.default_rng(seed)
    pos = random_chain(n_atoms, rng, spread=math.radians(20))
    hinges = {int(round((h + 1) * (n_atoms - 1) / (n_hinges + 1))) for h in range(n_hinges)}
    bonds = [(k, k + 1, "single" if k in hinges else "double") for k in range(1, n_atoms)]
    return SyntheticLinkage(chain_atoms(pos), bonds)


def looped_chain(n_loops: int = 5, loop: int = 8, seed: int = 11) -> SyntheticLinkage:
    """Chain with ``n_loops`` constraints, each tying atom i to atom i + loop."""
    rng = np.random.default_rng(seed)
    spacer = loop + 4
    n_atoms = n_loops * spacer + 4
    pos = random_chain(n_atoms, rng)
    cons = [(2 + s * spacer, 2 + s * spacer + loop) for s in range(n_loops)]
    return SyntheticLinkage(chain_atoms(pos), chain_bonds(n_atoms), cons)


# -- poly-alanine helix with backbone hydrogens ------------------------------

HELIX_PHI = math.radians(-57.0)
HELIX_PSI = math.radians(-47.0)
OMEGA = math.pi
N_CA, CA_C, C_N, C_O, N_H, CA_CB = 1.458, 1.525, 1.329, 1.231, 1.01, 1.53


def alpha_helix(n_res: int = 12, chain_id: str = "A", radii: RadiiTable | None = None) -> list[Atom]:
    """Ideal poly-Ala helix (N, H, CA, CB, C, O per residue; no H on residue 1)."""
    radii = radii or RadiiTable()
    bb = [np.array([0.0, 0.0, 0.0]), np.array([N_CA, 0.0, 0.0])]
    ang_ca = math.radians(111.2)
    bb.append(bb[1] + CA_C * np.array([-math.cos(ang_ca), math.sin(ang_ca), 0.0]))
    for r in range(1, n_res):
        bb.append(place_atom(bb[-3], bb[-2], bb[-1], C_N, math.radians(116.2), HELIX_PSI))
        bb.append(place_atom(bb[-3], bb[-2], bb[-1], N_CA, math.radians(121.7), OMEGA))
        bb.append(place_atom(bb[-3], bb[-2], bb[-1], CA_C, ang_ca, HELIX_PHI))
    out: list[Atom] = []

    def add(name, element, p, r):
        out.append(Atom(len(out) + 1, element, p, radii.vdw(element), radii.covalent(element),
                        name=name, residue_name="ALA", residue_id=r + 1, chain_id=chain_id))

    for r in range(n_res):
        n, ca, c = bb[3 * r], bb[3 * r + 1], bb[3 * r + 2]
        add("N", "N", n, r)
        if r > 0:
            prev_c = bb[3 * r - 1]
            u = (n - prev_c) / np.linalg.norm(n - prev_c) + (n - ca) / np.linalg.norm(n - ca)
            add("H", "H", n + N_H * u / np.linalg.norm(u), r)
        add("CA", "C", ca, r)
        add("CB", "C", place_atom(c, n, ca, CA_CB, math.radians(110.5), math.radians(-122.5)), r)
        add("C", "C", c, r)
        if r + 1 < n_res:
            nxt = bb[3 * r + 3]
            u = (c - ca) / np.linalg.norm(c - ca) + (c - nxt) / np.linalg.norm(c - nxt)
            add("O", "O", c + C_O * u / np.linalg.norm(u), r)
        else:
            add("O", "O", place_atom(n, ca, c, C_O, math.radians(120.5), math.radians(-45.0)), r)
    return out


# -- bundled files -------------------------------------------------------------

DATA_DIR = Path(__file__).parent / "data"
HELIX_HBONDS = [(2, 6), (4, 8), (6, 10)]  # (O residue, H residue) pairs for the bundled file


def data_path(name: str) -> Path:
    return DATA_DIR / name


def write_bundled(directory=DATA_DIR) -> list[Path]:
    """Regenerate the fixture files shipped with the package."""
    from .io.linkfile import format_linkfile
    from .io.pdb import format_pdb

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fx, note in (
            ("dense_chain.lnk", dense_chain(), "52-atom chain (50 free torsions) among 40 obstacle spheres"),
            ("elongated.lnk", elongated_chain(), "30-atom rod with 3 rotatable bonds"),
            ("looped_chain.lnk", looped_chain(), "64-atom chain with 5 loop-closing constraints")):
        path = directory / name
        path.write_text(format_linkfile(fx.atoms, None, fx.bonds, fx.constraints, fx.obstacle_centers,
                                        fx.obstacle_radii, note))
        out.append(path)
    path = directory / "helix.pdb"
    path.write_text(format_pdb(alpha_helix(12), remark="ideal poly-Ala helix, 12 residues"))
    out.append(path)
    path = directory / "helix_hbonds.txt"
    path.write_text("# backbone O(i) to H(i+4)\n"
                    + "".join(f"HBOND A {o} O A {h} H\n" for o, h in HELIX_HBONDS))
    out.append(path)
    return out
