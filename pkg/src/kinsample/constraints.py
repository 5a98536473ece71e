"""Holonomic and clash-avoiding constraints, constraint Jacobian, nullspace.

A holonomic constraint between atoms i (body A) and j (body B) fixes the
pose of B relative to A up to a rotation about the i-j axis: three rows
for the relative linear velocity at p_j and two rows for the relative
angular velocity perpendicular to the axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .collision import neighbor_pairs
from .errors import ModelError, NumericalDegeneracyError

log = logging.getLogger(__name__)

HBOND_MAX_DISTANCE = 2.5
HBOND_MIN_ANGLE = math.radians(100.0)
HBOND_ELEMENTS = ("N", "O")


def orthonormal_completion(axis) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``axis`` to a right-handed frame.

    The helper axis is the coordinate axis of the smallest component of
    ``axis`` (eliminating its largest component), so the choice is
    deterministic and well conditioned.
    """
    a = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(a)
    if norm < 1e-12:
        raise NumericalDegeneracyError("zero-length constraint axis")
    a = a / norm
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(a)))] = 1.0
    t1 = np.cross(a, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(a, t1)
    return t1, t2


@dataclass(frozen=True, eq=False)
class HolonomicConstraint:
    kind: str                  # "hydrogen_bond" | "covalent_closure"
    atoms: tuple[int, int]     # (i, j): acceptor/hydrogen or bond endpoints
    length: float
    angles: tuple[float, float]
    j_in_a: np.ndarray = field(repr=False)  # p_j in body(i) reference coordinates
    i_in_b: np.ndarray = field(repr=False)  # p_i in body(j) reference coordinates
    explicit: bool = False

    @property
    def rows(self) -> int:
        return 5

    def key(self) -> tuple[int, int]:
        i, j = self.atoms
        return (min(i, j), max(i, j))


def _to_body(frames, body: int, point) -> np.ndarray:
    return frames.rotations[body].T @ (np.asarray(point) - frames.translations[body])


def _adjacent_angle(linkage, frames, center: int, other: int) -> float:
    """Angle at ``center`` between ``other`` and the first covalent neighbor."""
    atom_id = linkage.atoms[center].id
    for nb in linkage.adjacency[atom_id]:
        k = linkage.index_of[nb]
        if k == other:
            continue
        u = frames.positions[k] - frames.positions[center]
        v = frames.positions[other] - frames.positions[center]
        c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        return float(math.acos(max(-1.0, min(1.0, c))))
    return float("nan")


def make_constraint(linkage, frames, i: int, j: int, kind: str = "hydrogen_bond",
                    explicit: bool = False) -> HolonomicConstraint:
    """Constraint freezing the current relative geometry of atoms i and j."""
    ba, bb = int(linkage.atom_body[i]), int(linkage.atom_body[j])
    if ba == bb:
        raise ModelError(f"constraint atoms {linkage.atoms[i].id}, {linkage.atoms[j].id} "
                         "lie in the same rigid body")
    pi, pj = frames.positions[i], frames.positions[j]
    length = float(np.linalg.norm(pj - pi))
    if length < 1e-9:
        raise NumericalDegeneracyError("constraint atoms coincide")
    return HolonomicConstraint(
        kind=kind, atoms=(i, j), length=length,
        angles=(_adjacent_angle(linkage, frames, i, j), _adjacent_angle(linkage, frames, j, i)),
        j_in_a=_to_body(frames, ba, pj), i_in_b=_to_body(frames, bb, pi), explicit=explicit)


def residuals(linkage, frames, constraints) -> np.ndarray:
    """Nonlinear violation Phi(q), 5 entries per constraint, in Angstrom."""
    out = np.zeros(5 * len(constraints))
    for k, c in enumerate(constraints):
        i, j = c.atoms
        ba, bb = int(linkage.atom_body[i]), int(linkage.atom_body[j])
        out[5 * k:5 * k + 3] = _to_body(frames, ba, frames.positions[j]) - c.j_in_a
        drift = _to_body(frames, bb, frames.positions[i]) - c.i_in_b
        t1, t2 = orthonormal_completion(c.i_in_b - linkage.ref_positions[j])
        out[5 * k + 3] = drift @ t1
        out[5 * k + 4] = drift @ t2
    return out


@dataclass(frozen=True, eq=False)
class ClashConstraint:
    atoms: tuple[int, int]   # indices; values >= n_atoms denote static obstacles
    normal: np.ndarray       # unit (p_j - p_i) at creation

    def key(self) -> tuple[int, int]:
        return self.atoms


def make_clash_constraint(positions, i: int, j: int) -> ClashConstraint:
    d = np.asarray(positions[j]) - np.asarray(positions[i])
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise NumericalDegeneracyError(f"clashing atoms {i}, {j} coincide")
    return ClashConstraint((int(i), int(j)), d / norm)


@dataclass
class ConstraintJacobian:
    matrix: np.ndarray
    row_map: list[tuple[object, int]]
    n_holonomic: int
    n_clash: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def rank(self) -> int:
        return nullspace(self.matrix).rank


def _atom_jacobian(linkage, frames, idx: int) -> np.ndarray:
    if idx >= linkage.n_atoms:
        return np.zeros((3, linkage.dof_count))
    return linkage.position_jacobian(frames, idx)


def holonomic_rows(linkage, frames, c: HolonomicConstraint) -> np.ndarray:
    i, j = c.atoms
    ba, bb = int(linkage.atom_body[i]), int(linkage.atom_body[j])
    pi, pj = frames.positions[i], frames.positions[j]
    axis = pj - pi
    if np.linalg.norm(axis) < 1e-12:
        raise NumericalDegeneracyError(f"zero-length constraint axis between atoms {i} and {j}")
    t1, t2 = orthonormal_completion(axis)
    lin = linkage.point_jacobian(frames, bb, pj) - linkage.point_jacobian(frames, ba, pj)
    ang = linkage.angular_jacobian(frames, bb) - linkage.angular_jacobian(frames, ba)
    return np.vstack([lin, t1 @ ang, t2 @ ang])


def clash_row(linkage, frames, c: ClashConstraint) -> np.ndarray:
    i, j = c.atoms
    return c.normal @ (_atom_jacobian(linkage, frames, j) - _atom_jacobian(linkage, frames, i))


def assemble_jacobian(linkage, frames, constraints=(), clash_constraints=()) -> ConstraintJacobian:
    blocks, row_map = [], []
    for c in constraints:
        blocks.append(holonomic_rows(linkage, frames, c))
        row_map.extend((c, r) for r in range(5))
    for c in clash_constraints:
        blocks.append(clash_row(linkage, frames, c)[None, :])
        row_map.append((c, 0))
    matrix = np.vstack(blocks) if blocks else np.zeros((0, linkage.dof_count))
    return ConstraintJacobian(matrix, row_map, len(constraints), len(clash_constraints))


@dataclass
class NullspaceBasis:
    basis: np.ndarray
    singular_value_cutoff: float
    rank: int
    singular_values: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def nullspace(J, active=None, rtol: float = 1e-10) -> NullspaceBasis:
    """Orthonormal nullspace basis from the SVD of J.

    With an ``active`` DOF mask only those columns may move: the basis
    spans the nullspace of ``J[:, active]`` embedded with zeros elsewhere.
    """
    J = np.asarray(getattr(J, "matrix", J), dtype=float)
    m, n = J.shape
    cols = np.arange(n) if active is None else np.flatnonzero(active)
    sub = J[:, cols]
    if m == 0 or len(cols) == 0:
        basis = np.zeros((n, len(cols)))
        basis[cols, np.arange(len(cols))] = 1.0
        return NullspaceBasis(basis, 0.0, 0)
    _, s, vt = np.linalg.svd(sub, full_matrices=True)
    cutoff = rtol * max(float(s[0]) if len(s) else 0.0, 1.0)
    rank = int(np.sum(s > cutoff))
    basis = np.zeros((n, len(cols) - rank))
    basis[cols] = vt[rank:].T
    return NullspaceBasis(basis, cutoff, rank, s)


def project(basis, delta) -> np.ndarray:
    N = getattr(basis, "basis", basis)
    return N @ (N.T @ np.asarray(delta, dtype=float))


def detect_hydrogen_bonds(linkage, frames, exclusions=None, max_distance: float = HBOND_MAX_DISTANCE,
                          min_angle: float = HBOND_MIN_ANGLE, explicit=(),
                          include_closures: bool = True, geometric: bool = True) -> list[HolonomicConstraint]:
    """Geometric hydrogen bonds, explicit pairs, and cycle-closure bonds.

    Each hydrogen keeps at most its closest qualifying acceptor. Explicit
    pairs (index tuples) are included regardless of geometry; with
    ``geometric=False`` they are the only hydrogen bonds.
    """
    atoms = linkage.atoms
    adj = linkage.adjacency
    donor_of: dict[int, int] = {}
    for k, a in enumerate(atoms):
        if a.element != "H":
            continue
        for nb in adj[a.id]:
            if linkage.atoms[linkage.index_of[nb]].element in HBOND_ELEMENTS:
                donor_of[k] = linkage.index_of[nb]
                break
    polar = [k for k, a in enumerate(atoms) if a.element in HBOND_ELEMENTS]
    if geometric and polar and not donor_of:
        log.warning("no polar hydrogens present; hydrogen bonds only from explicit constraints")

    out: list[HolonomicConstraint] = []
    seen: set[tuple[int, int]] = set()

    def add(i, j, kind, is_explicit):
        key = (min(i, j), max(i, j))
        if key in seen:
            return
        seen.add(key)
        out.append(make_constraint(linkage, frames, i, j, kind, is_explicit))

    hs = sorted(donor_of)
    if geometric and hs and polar:
        cand = np.array(hs + polar)
        pos = frames.positions[cand]
        ii, jj, dd = neighbor_pairs(pos, max_distance)
        nh = len(hs)
        best: dict[int, tuple[float, int]] = {}
        for a, b, d in zip(ii.tolist(), jj.tolist(), dd.tolist()):
            if a < nh <= b:
                h, acc = cand[a], cand[b]
            elif b < nh <= a:
                h, acc = cand[b], cand[a]
            else:
                continue
            donor = donor_of[h]
            if acc == donor or linkage.atom_body[h] == linkage.atom_body[acc]:
                continue
            if exclusions is not None and (min(h, acc), max(h, acc)) in exclusions:
                continue
            u = frames.positions[donor] - frames.positions[h]
            v = frames.positions[acc] - frames.positions[h]
            ang = math.acos(max(-1.0, min(1.0, float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v))))))
            if ang < min_angle:
                continue
            if h not in best or (d, acc) < best[h]:
                best[h] = (d, acc)
        for h in sorted(best, key=lambda h: (best[h][1], h)):
            add(best[h][1], h, "hydrogen_bond", False)
    for i, j in explicit:
        add(i, j, "hydrogen_bond", True)
    if include_closures:
        for u, v in linkage.leftover_edges:
            add(u, v, "covalent_closure", False)
    return out
