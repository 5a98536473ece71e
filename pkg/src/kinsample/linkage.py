"""Kinematic model of a molecule: graphs, spanning tree, forward kinematics.

Atoms carry an external ``id`` (PDB serial or linkage-file id); everything
past graph construction works with atom *indices* into
``KinematicLinkage.atoms``. Reference positions define the zero
conformation: all DOFs at 0 reproduce the input coordinates.

DOF layout: each chain contributes its 6 global DOFs
``[tx, ty, tz, rx, ry, rz]`` followed by its revolute joints in
breadth-first order from the chain root.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .collision import neighbor_pairs
from .errors import ModelError
from .templates import BondOrder, TemplateTable

log = logging.getLogger(__name__)

BOND_SLACK = 0.4
GLOBAL_KINDS = ("tx", "ty", "tz", "rx", "ry", "rz")


@dataclass
class Atom:
    id: int
    element: str
    position: np.ndarray
    vdw_radius: float
    covalent_radius: float
    name: str = ""
    residue_name: str = ""
    residue_id: int = 0
    chain_id: str = ""

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not self.vdw_radius > 0 or not self.covalent_radius > 0:
            raise ModelError(f"atom {self.id}: radii must be positive")

    @property
    def label(self) -> str:
        if self.name:
            return f"{self.chain_id}{self.residue_id}/{self.name}".lstrip()
        return str(self.id)


@dataclass
class MolecularGraph:
    atoms: list[Atom]
    edges: dict[tuple[int, int], BondOrder]

    @property
    def vertices(self) -> set[int]:
        return {a.id for a in self.atoms}

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {a.id: [] for a in self.atoms}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for v in adj.values():
            v.sort()
        return adj


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def build_molecular_graph(atoms: list[Atom], bonds=None, templates: TemplateTable | None = None,
                          slack: float = BOND_SLACK) -> MolecularGraph:
    """Covalent graph from explicit bonds or from interatomic distances.

    ``bonds`` entries are ``(id_a, id_b)`` or ``(id_a, id_b, order)``.
    Inferred bonds connect atoms within the sum of covalent radii plus
    ``slack``; their orders come from ``templates`` when given.
    """
    if not atoms:
        raise ModelError("no atoms")
    ids = [a.id for a in atoms]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise ModelError(f"duplicate atom id {dup}")
    positions = np.array([a.position for a in atoms])
    if not np.all(np.isfinite(positions)):
        raise ModelError("non-finite atom position")
    by_id = {a.id: a for a in atoms}

    def tag(a: Atom, b: Atom) -> BondOrder:
        return templates.order(a, b) if templates is not None else BondOrder.SINGLE

    edges: dict[tuple[int, int], BondOrder] = {}
    if bonds is not None:
        for bond in bonds:
            a, b = bond[0], bond[1]
            if a == b:
                raise ModelError(f"self-bond on atom {a}")
            if a not in by_id or b not in by_id:
                raise ModelError(f"bond ({a}, {b}) references unknown atom")
            key = _edge_key(a, b)
            if key in edges:
                raise ModelError(f"duplicate bond {key}")
            order = BondOrder(bond[2]) if len(bond) > 2 and bond[2] is not None else tag(by_id[a], by_id[b])
            edges[key] = order
    else:
        cov = np.array([a.covalent_radius for a in atoms])
        bound = 2 * cov.max() + slack
        i, j, _ = neighbor_pairs(positions, (lambda i, j: cov[i] + cov[j] + slack, bound))
        for ii, jj in sorted(zip(i.tolist(), j.tolist())):
            a, b = atoms[ii], atoms[jj]
            edges[_edge_key(a.id, b.id)] = tag(a, b)
        degree = {a.id: 0 for a in atoms}
        for a, b in edges:
            degree[a] += 1
            degree[b] += 1
        isolated = [k for k, d in degree.items() if d == 0]
        if isolated:
            log.warning("%d atoms have no covalent bonds (first: %s); treated as isolated bodies",
                        len(isolated), isolated[0])
    return MolecularGraph(atoms=list(atoms), edges=dict(sorted(edges.items())))


@dataclass
class RigidBodyGraph:
    graph: MolecularGraph
    bodies: list[tuple[int, ...]]
    # (body_u, body_v, atom_u, atom_v) with atom_u in body_u
    edges: list[tuple[int, int, int, int]]
    atom_body: dict[int, int]


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def pentameric_ring_edges(g: MolecularGraph) -> set[tuple[int, int]]:
    """Edges lying on some simple cycle of exactly five atoms."""
    adj = g.adjacency()
    ring: set[tuple[int, int]] = set()
    for u, v in g.edges:
        # simple path v -> ... -> w of 3 edges, closed by w-u and u-v
        stack = [(v, (v,))]
        while stack:
            node, path = stack.pop()
            if len(path) == 4:
                if u in adj[node]:
                    cyc = (u,) + path
                    for k in range(5):
                        ring.add(_edge_key(cyc[k], cyc[(k + 1) % 5]))
                continue
            for nb in adj[node]:
                if nb != u and nb not in path:
                    stack.append((nb, path + (nb,)))
    return ring


def contract_to_rigid_bodies(g: MolecularGraph) -> RigidBodyGraph:
    ring5 = pentameric_ring_edges(g)
    uf = _UnionFind(sorted(g.vertices))
    for key, order in g.edges.items():
        if order.rigid or key in ring5:
            uf.union(*key)
    groups: dict[int, list[int]] = {}
    for a in sorted(g.vertices):
        groups.setdefault(uf.find(a), []).append(a)
    bodies = sorted((tuple(v) for v in groups.values()), key=lambda b: b[0])
    atom_body = {a: bi for bi, body in enumerate(bodies) for a in body}
    edges = []
    for (a, b), order in g.edges.items():
        if order.rigid or (a, b) in ring5:
            continue
        ba, bb = atom_body[a], atom_body[b]
        if ba != bb:
            edges.append((ba, bb, a, b))
    return RigidBodyGraph(graph=g, bodies=bodies, edges=edges, atom_body=atom_body)


@dataclass(frozen=True)
class Joint:
    dof: int
    parent_body: int
    child_body: int
    parent_atom: int   # atom index
    child_atom: int    # atom index
    anchor: np.ndarray  # reference position of parent_atom
    axis: np.ndarray    # unit vector parent_atom -> child_atom (reference frame)


@dataclass(frozen=True)
class Chain:
    root_body: int
    dof_offset: int
    center: np.ndarray  # rotation center for the global DOFs (reference frame)


@dataclass
class Conformation:
    dofs: np.ndarray
    id: int = 0
    parent_id: int | None = None
    positions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=float)


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2 * math.pi) - math.pi
    return np.where(y == -math.pi, math.pi, y)


def rotation_matrices(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotation, batched: axes (k, 3) unit, angles (k,)."""
    k = len(angles)
    c, s = np.cos(angles), np.sin(angles)
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    C = 1 - c
    R = np.empty((k, 3, 3))
    R[:, 0, 0] = c + x * x * C
    R[:, 0, 1] = x * y * C - z * s
    R[:, 0, 2] = x * z * C + y * s
    R[:, 1, 0] = y * x * C + z * s
    R[:, 1, 1] = c + y * y * C
    R[:, 1, 2] = y * z * C - x * s
    R[:, 2, 0] = z * x * C - y * s
    R[:, 2, 1] = z * y * C + x * s
    R[:, 2, 2] = c + z * z * C
    return R


def euler_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rz @ Ry @ Rx: x applied first, all about world axes."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


@dataclass
class Frames:
    """Forward-kinematics state at one conformation."""
    dofs: np.ndarray
    rotations: np.ndarray     # (bodies, 3, 3)
    translations: np.ndarray  # (bodies, 3)
    positions: np.ndarray     # (atoms, 3)
    joint_axes: np.ndarray    # (n, 3) world axis per DOF (unit translation axis for tx..tz)
    joint_anchors: np.ndarray  # (n, 3) world point on the axis (rotation DOFs)


class KinematicLinkage:
    """Rooted kinematic tree over rigid bodies; immutable after construction."""

    def __init__(self, rigid: RigidBodyGraph, tree_edges, leftover_edges, chains_roots):
        self.rigid = rigid
        self.graph = rigid.graph
        self.atoms: list[Atom] = list(rigid.graph.atoms)
        self.index_of = {a.id: k for k, a in enumerate(self.atoms)}
        self.adjacency = self.graph.adjacency()
        self.ref_positions = np.array([a.position for a in self.atoms])
        n_bodies = len(rigid.bodies)
        self.n_bodies = n_bodies
        self.atom_body = np.array([rigid.atom_body[a.id] for a in self.atoms], dtype=np.int64)
        self.body_atoms = [np.array([self.index_of[a] for a in body], dtype=np.int64)
                           for body in rigid.bodies]

        adj: dict[int, list[tuple[int, int, int]]] = {b: [] for b in range(n_bodies)}
        for bu, bv, au, av in tree_edges:
            adj[bu].append((bv, au, av))
            adj[bv].append((bu, av, au))
        for v in adj.values():
            v.sort()

        self.body_parent = np.full(n_bodies, -1, dtype=np.int64)
        self.body_joint = np.full(n_bodies, -1, dtype=np.int64)
        self.body_chain = np.full(n_bodies, -1, dtype=np.int64)
        self.body_order: list[int] = []
        self.joints: list[Joint] = []
        self.chains: list[Chain] = []
        kinds: list[str] = []
        for ci, root in enumerate(chains_roots):
            offset = len(kinds)
            kinds.extend(GLOBAL_KINDS)
            center = self.ref_positions[self.body_atoms[root]].mean(axis=0)
            self.chains.append(Chain(root_body=root, dof_offset=offset, center=center))
            self.body_chain[root] = ci
            self.body_order.append(root)
            queue = deque([root])
            while queue:
                b = queue.popleft()
                for nb, a_par, a_child in adj[b]:
                    if self.body_chain[nb] >= 0:
                        continue
                    self.body_chain[nb] = ci
                    self.body_parent[nb] = b
                    pi, ci_ = self.index_of[a_par], self.index_of[a_child]
                    anchor = self.ref_positions[pi].copy()
                    vec = self.ref_positions[ci_] - anchor
                    norm = np.linalg.norm(vec)
                    if norm == 0:
                        raise ModelError(f"zero-length bond {a_par}-{a_child}")
                    dof = len(kinds)
                    kinds.append("rev")
                    self.joints.append(Joint(dof, b, nb, pi, ci_, anchor, vec / norm))
                    self.body_joint[nb] = dof
                    self.body_order.append(nb)
                    queue.append(nb)
        self.dof_kinds = np.array(kinds)
        self.dof_count = len(kinds)
        self.revolute_mask = self.dof_kinds == "rev"
        self.translation_mask = np.isin(self.dof_kinds, GLOBAL_KINDS[:3])
        self.rotation_mask = np.isin(self.dof_kinds, GLOBAL_KINDS[3:])
        self.joint_of_dof = {j.dof: j for j in self.joints}
        self.leftover_edges = [(self.index_of[a], self.index_of[b]) for a, b in leftover_edges]

        self.body_path: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * n_bodies
        for b in self.body_order:
            p = self.body_parent[b]
            if p < 0:
                self.body_path[b] = np.empty(0, dtype=np.int64)
            else:
                self.body_path[b] = np.append(self.body_path[p], self.body_joint[b])
        self.subtree_atoms = self._subtree_atoms()
        self.null_dofs = self._find_null_dofs()

        self._ref_axes = np.zeros((self.dof_count, 3))
        self._ref_anchors = np.zeros((self.dof_count, 3))
        for j in self.joints:
            self._ref_axes[j.dof] = j.axis
            self._ref_anchors[j.dof] = j.anchor
        self._rev_dofs = np.array([j.dof for j in self.joints], dtype=np.int64)

    # -- structure -----------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def tree_edges(self) -> list[tuple[int, int]]:
        return [(j.parent_atom, j.child_atom) for j in self.joints]

    def _subtree_atoms(self) -> list[np.ndarray]:
        children: dict[int, list[int]] = {b: [] for b in range(self.n_bodies)}
        for b in self.body_order:
            if self.body_parent[b] >= 0:
                children[self.body_parent[b]].append(b)
        sub: dict[int, np.ndarray] = {}
        for b in reversed(self.body_order):
            parts = [self.body_atoms[b]] + [sub[c] for c in children[b]]
            sub[b] = np.concatenate(parts)
        return [sub[b] for b in range(self.n_bodies)]

    def _find_null_dofs(self) -> np.ndarray:
        """Revolute DOFs whose moving subtree lies on the rotation axis."""
        mask = np.zeros(self.dof_count, dtype=bool)
        for j in self.joints:
            pts = self.ref_positions[self.subtree_atoms[j.child_body]] - j.anchor
            perp = pts - np.outer(pts @ j.axis, j.axis)
            if np.all(np.linalg.norm(perp, axis=1) < 1e-9):
                mask[j.dof] = True
        return mask

    def zero_conformation(self, id: int = 0) -> Conformation:
        return Conformation(np.zeros(self.dof_count), id=id)

    def wrap(self, q) -> np.ndarray:
        q = np.array(q, dtype=float)
        q[self.revolute_mask] = wrap_angle(q[self.revolute_mask])
        return q

    # -- kinematics ----------------------------------------------------
    def frames(self, q) -> Frames:
        q = np.asarray(getattr(q, "dofs", q), dtype=float)
        if q.shape != (self.dof_count,):
            raise ValueError(f"expected {self.dof_count} DOFs, got {q.shape}")
        R = np.empty((self.n_bodies, 3, 3))
        t = np.empty((self.n_bodies, 3))
        axes = self._ref_axes.copy()
        anchors = self._ref_anchors.copy()
        rev = self._rev_dofs
        Rj = rotation_matrices(self._ref_axes[rev], q[rev]) if len(rev) else np.empty((0, 3, 3))
        Rj_of = {int(d): k for k, d in enumerate(rev)}
        for chain in self.chains:
            o = chain.dof_offset
            tx, ty, tz, rx, ry, rz = q[o:o + 6]
            Rg = euler_xyz(rx, ry, rz)
            c = chain.center
            R[chain.root_body] = Rg
            t[chain.root_body] = c + np.array([tx, ty, tz]) - Rg @ c
            axes[o:o + 3] = np.eye(3)
            cz, sz = math.cos(rz), math.sin(rz)
            Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
            cy, sy = math.cos(ry), math.sin(ry)
            Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
            axes[o + 5] = (0.0, 0.0, 1.0)
            axes[o + 4] = Rz[:, 1]
            axes[o + 3] = (Rz @ Ry)[:, 0]
            anchors[o:o + 6] = c + np.array([tx, ty, tz])
        for b in self.body_order:
            p = self.body_parent[b]
            if p < 0:
                continue
            d = int(self.body_joint[b])
            Rp, tp = R[p], t[p]
            Rk = Rj[Rj_of[d]]
            cref = self._ref_anchors[d]
            R[b] = Rp @ Rk
            t[b] = Rp @ (cref - Rk @ cref) + tp
            axes[d] = Rp @ self._ref_axes[d]
            anchors[d] = Rp @ cref + tp
        ab = self.atom_body
        positions = np.einsum("aij,aj->ai", R[ab], self.ref_positions) + t[ab]
        return Frames(q.copy(), R, t, positions, axes, anchors)

    def forward_kinematics(self, q) -> np.ndarray:
        return self.frames(q).positions

    def point_jacobian(self, frames: Frames, body: int, point) -> np.ndarray:
        """3 x n Jacobian of a world point rigidly attached to ``body``."""
        J = np.zeros((3, self.dof_count))
        path = self.body_path[body]
        if len(path):
            J[:, path] = np.cross(frames.joint_axes[path], point - frames.joint_anchors[path]).T
        o = self.chains[self.body_chain[body]].dof_offset
        J[:, o:o + 3] = np.eye(3)
        rot = np.arange(o + 3, o + 6)
        J[:, rot] = np.cross(frames.joint_axes[rot], point - frames.joint_anchors[rot]).T
        return J

    def angular_jacobian(self, frames: Frames, body: int) -> np.ndarray:
        """3 x n map from DOF rates to the body's angular velocity."""
        J = np.zeros((3, self.dof_count))
        path = self.body_path[body]
        if len(path):
            J[:, path] = frames.joint_axes[path].T
        o = self.chains[self.body_chain[body]].dof_offset
        J[:, o + 3:o + 6] = frames.joint_axes[o + 3:o + 6].T
        return J

    def position_jacobian(self, q_or_frames, atom: int) -> np.ndarray:
        frames = q_or_frames if isinstance(q_or_frames, Frames) else self.frames(q_or_frames)
        return self.point_jacobian(frames, int(self.atom_body[atom]), frames.positions[atom])

    # -- inverse: coordinates -> DOFs -------------------------------------
    def infer_conformation(self, positions, template=None, refine: int = 3) -> np.ndarray:
        """DOF vector reproducing ``positions`` (least squares per joint).

        Global DOFs are fitted by superposing each root body; with fewer
        than three non-collinear points the fit falls back to
        ``template``'s global values. Joint-by-joint fitting lets rounding
        noise accumulate along long chains, so ``refine`` Gauss-Newton
        steps on all atom positions follow.
        """
        from .analysis import kabsch

        positions = np.asarray(positions, dtype=float)
        q = np.zeros(self.dof_count) if template is None else np.array(getattr(template, "dofs", template), float)
        children: dict[int, list[Joint]] = {b: [] for b in range(self.n_bodies)}
        for j in self.joints:
            children[j.parent_body].append(j)

        def rigid_points(body):
            idx = list(self.body_atoms[body]) + [j.child_atom for j in children[body]]
            return np.array(idx, dtype=np.int64)

        R = np.empty((self.n_bodies, 3, 3))
        t = np.empty((self.n_bodies, 3))
        for chain in self.chains:
            idx = rigid_points(chain.root_body)
            ref = self.ref_positions[idx]
            o = chain.dof_offset
            c = chain.center
            if len(idx) >= 3 and np.linalg.matrix_rank(ref - ref.mean(0), tol=1e-6) >= 2:
                Rg, _ = kabsch(ref, positions[idx])
                T = positions[idx].mean(0) - Rg @ ref.mean(0)
                ry = -math.asin(max(-1.0, min(1.0, Rg[2, 0])))
                rx = math.atan2(Rg[2, 1], Rg[2, 2])
                rz = math.atan2(Rg[1, 0], Rg[0, 0])
                q[o + 3:o + 6] = (rx, ry, rz)
                q[o:o + 3] = T - c + Rg @ c
            Rg = euler_xyz(*q[o + 3:o + 6])
            R[chain.root_body] = Rg
            t[chain.root_body] = c + q[o:o + 3] - Rg @ c
        for b in self.body_order:
            p = self.body_parent[b]
            if p < 0:
                continue
            d = int(self.body_joint[b])
            cref = self._ref_anchors[d]
            a = R[p] @ self._ref_axes[d]
            c = R[p] @ cref + t[p]
            idx = rigid_points(b)
            u = self.ref_positions[idx] @ R[p].T + t[p] - c
            v = positions[idx] - c
            u -= np.outer(u @ a, a)
            v -= np.outer(v @ a, a)
            s = float(np.sum(np.cross(u, v) @ a))
            cc = float(np.sum(np.einsum("ij,ij->i", u, v)))
            q[d] = math.atan2(s, cc) if (abs(s) + abs(cc)) > 1e-12 else 0.0
            Rk = rotation_matrices(self._ref_axes[d][None], np.array([q[d]]))[0]
            R[b] = R[p] @ Rk
            t[b] = R[p] @ (cref - Rk @ cref) + t[p]
        for _ in range(refine):
            frames = self.frames(q)
            resid = (positions - frames.positions).ravel()
            if np.abs(resid).max() < 1e-12:
                break
            J = np.vstack([self.position_jacobian(frames, k) for k in range(self.n_atoms)])
            q = self.wrap(q + np.linalg.lstsq(J, resid, rcond=None)[0])
        return q


def build_kinematic_tree(g: RigidBodyGraph) -> KinematicLinkage:
    """Minimum spanning forest (weight = atom-id sum), one chain per component."""
    if not g.bodies:
        raise ModelError("empty rigid-body graph")
    ordered = sorted(g.edges, key=lambda e: (e[2] + e[3], _edge_key(e[2], e[3])))
    uf = _UnionFind(range(len(g.bodies)))
    tree, leftover = [], []
    for bu, bv, au, av in ordered:
        if uf.union(bu, bv):
            tree.append((bu, bv, au, av))
        else:
            leftover.append(_edge_key(au, av))
    comps: dict[int, list[int]] = {}
    for b in range(len(g.bodies)):
        comps.setdefault(uf.find(b), []).append(b)
    # bodies are sorted by lowest atom id, so min body index holds the lowest id
    roots = sorted(min(c) for c in comps.values())
    return KinematicLinkage(g, tree, leftover, roots)


def build_linkage(atoms: list[Atom], bonds=None, templates: TemplateTable | None = None) -> KinematicLinkage:
    g = build_molecular_graph(atoms, bonds=bonds, templates=templates)
    return build_kinematic_tree(contract_to_rigid_bodies(g))


def forward_kinematics(linkage: KinematicLinkage, q) -> np.ndarray:
    return linkage.forward_kinematics(q)


def position_jacobian(linkage: KinematicLinkage, q, atom: int) -> np.ndarray:
    return linkage.position_jacobian(q, atom)
