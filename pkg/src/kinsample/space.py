"""Conformation-space metric and the exploration tree with BVH pruning."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KinsampleError, ParseError


@dataclass
class MetricConfig:
    revolute_weight: float = 1.0
    global_translation_weight: float = 0.0
    global_rotation_weight: float = 0.0
    wrap: bool = True

    def __post_init__(self):
        if min(self.revolute_weight, self.global_translation_weight, self.global_rotation_weight) < 0:
            raise ValueError("metric weights must be non-negative")


class Metric:
    """Weighted L2 distance on the DOF torus.

    Revolute differences are wrapped to (-pi, pi] before weighting; all
    other DOFs use raw differences.
    """

    def __init__(self, config: MetricConfig | None = None, linkage=None, *, revolute_mask=None,
                 translation_mask=None, rotation_mask=None):
        self.config = config or MetricConfig()
        if linkage is not None:
            revolute_mask = linkage.revolute_mask
            translation_mask = linkage.translation_mask
            rotation_mask = linkage.rotation_mask
        if revolute_mask is None:
            raise ValueError("need a linkage or an explicit revolute mask")
        rev = np.asarray(revolute_mask, dtype=bool)
        tr = np.zeros_like(rev) if translation_mask is None else np.asarray(translation_mask, bool)
        rot = np.zeros_like(rev) if rotation_mask is None else np.asarray(rotation_mask, bool)
        c = self.config
        self.weights = (rev * c.revolute_weight + tr * c.global_translation_weight
                        + rot * c.global_rotation_weight).astype(float)
        self.wrap_mask = rev if c.wrap else np.zeros_like(rev)
        self.sqrt_w = np.sqrt(self.weights)

    @property
    def size(self) -> int:
        return len(self.weights)

    def diff(self, a, b) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if d.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} DOFs, got {d.shape[-1]}")
        if self.wrap_mask.any():
            w = d[..., self.wrap_mask]
            w = np.mod(w + math.pi, 2 * math.pi) - math.pi
            w[w == -math.pi] = math.pi
            d[..., self.wrap_mask] = w
        return d

    def distance(self, a, b) -> float:
        a = getattr(a, "dofs", a)
        b = getattr(b, "dofs", b)
        if np.shape(a) != np.shape(b):
            raise ValueError("conformations differ in length")
        d = self.diff(a, b) * self.sqrt_w
        return float(np.sqrt(d @ d))

    def distances(self, Q, b) -> np.ndarray:
        """Distances from each row of ``Q`` to ``b``."""
        d = self.diff(Q, np.asarray(b)[None, :]) * self.sqrt_w
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def norm(self, v) -> float:
        v = np.asarray(v, dtype=float) * self.sqrt_w
        return float(np.sqrt(v @ v))


def distance(q_a, q_b, metric: Metric) -> float:
    return metric.distance(q_a, q_b)


@dataclass
class BvhNode:
    conformation_id: int
    parent_id: int | None
    children: list[int]
    enclosing_radius: float


class ExplorationTree:
    """Sampled conformations linked to their seeds, with enclosing radii.

    ``radius[c]`` bounds the metric distance from node c to each of its
    descendants; it only ever grows.
    """

    def __init__(self, root_dofs, metric: Metric):
        self.metric = metric
        root = np.asarray(getattr(root_dofs, "dofs", root_dofs), dtype=float)
        self._dofs = np.empty((64, len(root)))
        self._dofs[0] = root
        self.parent: list[int] = [-1]
        self.children: list[list[int]] = [[]]
        self.radius: list[float] = [0.0]
        self.distance_computations = 0
        self.root_id = 0
        self.meta: dict = {}

    def __len__(self) -> int:
        return len(self.parent)

    def __contains__(self, node_id) -> bool:
        return isinstance(node_id, (int, np.integer)) and 0 <= node_id < len(self)

    @property
    def dofs(self) -> np.ndarray:
        return self._dofs[:len(self)]

    def conformation(self, node_id: int) -> np.ndarray:
        return self._dofs[node_id].copy()

    def node(self, node_id: int) -> BvhNode:
        p = self.parent[node_id]
        return BvhNode(node_id, None if p < 0 else p, list(self.children[node_id]), self.radius[node_id])

    def ancestors(self, node_id: int) -> list[int]:
        out = []
        p = self.parent[node_id]
        while p >= 0:
            out.append(p)
            p = self.parent[p]
        return out

    def insert(self, q_new, parent: int) -> int:
        if parent not in self:
            raise KinsampleError(f"parent {parent} not in tree")
        q_new = np.asarray(getattr(q_new, "dofs", q_new), dtype=float)
        nid = len(self)
        if nid == len(self._dofs):
            grown = np.empty((2 * nid, self._dofs.shape[1]))
            grown[:nid] = self._dofs
            self._dofs = grown
        self._dofs[nid] = q_new
        self.parent.append(parent)
        self.children.append([])
        self.radius.append(0.0)
        self.children[parent].append(nid)
        anc = self.ancestors(nid)
        d = self.metric.distances(self._dofs[anc], q_new)
        for a, da in zip(anc, d.tolist()):
            if da > self.radius[a]:
                self.radius[a] = da
        return nid

    def bvh_collect(self, seed_id: int, r: float) -> list[int]:
        """Nodes that may conflict with a sample placed within 2r of the seed.

        A node c and its subtree are skipped when
        ``d(c, seed) > 3r + radius[c]``. Nodes are evaluated one tree level
        at a time; since the prune test of a node depends only on that node,
        the result equals a depth-first traversal's.
        """
        if seed_id not in self:
            raise KinsampleError(f"seed {seed_id} not in tree")
        seed = self._dofs[seed_id]
        radius = np.asarray(self.radius)
        out: list[int] = []
        frontier = np.array([self.root_id])
        while len(frontier):
            d = self.metric.distances(self._dofs[frontier], seed)
            self.distance_computations += len(frontier)
            keep = frontier[d <= 3 * r + radius[frontier]]
            out.extend(keep.tolist())
            nxt = [c for k in keep.tolist() for c in self.children[k]]
            frontier = np.array(nxt, dtype=np.int64)
        out.sort()
        return out

    def linear_collect(self, seed_id: int, r: float) -> list[int]:
        """Every node; costs one distance computation per node."""
        if seed_id not in self:
            raise KinsampleError(f"seed {seed_id} not in tree")
        self.distance_computations += len(self)
        return list(range(len(self)))

    def collect(self, seed_id: int, r: float, method: str = "bvh") -> list[int]:
        if method == "bvh":
            return self.bvh_collect(seed_id, r)
        if method == "linear":
            return self.linear_collect(seed_id, r)
        raise ValueError(f"unknown neighbor search {method!r}")

    # -- serialization ---------------------------------------------------
    def dumps(self, open_ids=None, meta: dict | None = None) -> str:
        lines = ["# kinsample exploration tree: id parent_id RB dofs..."]
        if open_ids is not None:
            lines.append("# open " + " ".join(str(i) for i in open_ids))
        meta = dict(meta or {}, distance_computations=self.distance_computations)
        lines.append("# meta " + json.dumps(meta, sort_keys=True))
        for nid in range(len(self)):
            vals = " ".join(repr(float(x)) for x in self._dofs[nid])
            lines.append(f"{nid} {self.parent[nid]} {self.radius[nid]!r} {vals}")
        return "\n".join(lines) + "\n"

    def save(self, path, open_ids=None, meta: dict | None = None) -> None:
        Path(path).write_text(self.dumps(open_ids, meta))

    @classmethod
    def load(cls, path, metric: Metric) -> tuple["ExplorationTree", list[int] | None]:
        """Tree plus the stored open set; extra run state lands in ``tree.meta``."""
        open_ids = None
        meta: dict = {}
        rows = []
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ParseError(f"cannot read tree file: {e.strerror}", path) from None
        for lineno, raw in enumerate(text.splitlines(), 1):
            if raw.startswith("# open"):
                try:
                    open_ids = [int(x) for x in raw.split()[2:]]
                except ValueError:
                    raise ParseError("malformed open-set line", path, lineno) from None
                continue
            if raw.startswith("# meta "):
                try:
                    meta = json.loads(raw[7:])
                except ValueError:
                    raise ParseError("malformed meta line", path, lineno) from None
                continue
            if not raw.strip() or raw.startswith("#"):
                continue
            parts = raw.split()
            try:
                rows.append((int(parts[0]), int(parts[1]), float(parts[2]),
                             np.array([float(x) for x in parts[3:]])))
            except (ValueError, IndexError):
                raise ParseError("malformed tree line", path, lineno) from None
        if not rows or rows[0][0] != 0 or rows[0][1] != -1:
            raise ParseError("tree must start with root id 0, parent -1", path)
        tree = cls(rows[0][3], metric)
        tree.radius[0] = rows[0][2]
        for k, (nid, parent, rb, dofs) in enumerate(rows[1:], 1):
            if nid != k or not 0 <= parent < k:
                raise ParseError(f"node {nid}: ids must be consecutive with earlier parents", path)
            tree.insert(dofs, parent)
        for nid, _, rb, _ in rows:
            tree.radius[nid] = max(tree.radius[nid], rb)
        tree.distance_computations = int(meta.get("distance_computations", 0))
        tree.meta = meta
        if open_ids is not None and any(i not in tree for i in open_ids):
            raise ParseError("open set refers to unknown nodes", path)
        return tree, open_ids
