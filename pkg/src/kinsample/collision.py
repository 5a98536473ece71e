"""Steric clash detection on a uniform 3D spatial hash grid.

Atoms are referred to by index into the positions array handed to the
grid. Queries are vectorized: every atom's neighbor-cell keys are
generated at once and resolved with a binary search over the sorted
occupied-cell keys, so the cost per query is a handful of numpy calls
rather than a Python loop over cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np


def cell_of(position, cell_size: float = 1.0) -> tuple[int, int, int]:
    c = np.floor(np.asarray(position, dtype=float) / cell_size).astype(np.int64)
    return int(c[0]), int(c[1]), int(c[2])


class SpatialHashGrid:
    """Immutable hash of point positions into cubic cells of ``cell_size``."""

    def __init__(self, positions, cell_size: float = 1.0):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        self.cell_size = float(cell_size)
        self.positions = pos
        self.cell_coords = np.floor(pos / self.cell_size).astype(np.int64)
        self._cells: dict[tuple[int, int, int], list[int]] | None = None

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def cells(self) -> dict[tuple[int, int, int], list[int]]:
        if self._cells is None:
            cells: dict[tuple[int, int, int], list[int]] = {}
            for idx, c in enumerate(map(tuple, self.cell_coords.tolist())):
                cells.setdefault(c, []).append(idx)
            self._cells = cells
        return self._cells

    def candidate_pairs(self, shell: int) -> tuple[np.ndarray, np.ndarray]:
        """All index pairs (i < j) whose cells differ by at most ``shell`` per axis."""
        n = len(self.positions)
        if n < 2:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        lo = self.cell_coords.min(axis=0) - shell
        dims = self.cell_coords.max(axis=0) - lo + shell + 1
        c = self.cell_coords - lo
        keys = (c[:, 0] * dims[1] + c[:, 1]) * dims[2] + c[:, 2]

        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        ukeys, starts, counts = np.unique(sorted_keys, return_index=True, return_counts=True)

        offsets = _half_shell(shell)
        off_codes = (offsets[:, 0] * dims[1] + offsets[:, 1]) * dims[2] + offsets[:, 2]
        nkeys = (keys[:, None] + off_codes[None, :]).ravel()
        slot = np.searchsorted(ukeys, nkeys)
        np.minimum(slot, len(ukeys) - 1, out=slot)
        found = ukeys[slot] == nkeys

        src = np.repeat(np.arange(n), len(off_codes))[found]
        same_cell = np.tile(off_codes == 0, n)[found]
        cell = slot[found]
        cnt = counts[cell]
        total = int(cnt.sum())
        i = np.repeat(src, cnt)
        within = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = order[np.repeat(starts[cell], cnt) + within]
        zero = np.repeat(same_cell, cnt)
        keep = ~zero | (i < j)
        i, j = i[keep], j[keep]
        lo_ij = np.minimum(i, j)
        hi_ij = np.maximum(i, j)
        return lo_ij, hi_ij


def _half_shell(shell: int) -> np.ndarray:
    # one representative of each {o, -o} pair plus the zero offset
    offs = [o for o in product(range(-shell, shell + 1), repeat=3) if o >= (0, 0, 0)]
    return np.array(offs, dtype=np.int64)


def build_grid(positions, cell_size: float = 1.0) -> SpatialHashGrid:
    return SpatialHashGrid(positions, cell_size)


def neighbor_pairs(positions, cutoff, cell_size: float = 1.0):
    """Pairs (i < j) with |p_i - p_j| <= cutoff, plus their distances.

    ``cutoff`` is either a scalar or a callable ``f(i, j) -> per-pair
    cutoffs`` together with a scalar upper bound given as ``(f, bound)``.
    """
    if isinstance(cutoff, tuple):
        fn, bound = cutoff
    else:
        fn, bound = None, float(cutoff)
    grid = SpatialHashGrid(positions, cell_size)
    shell = max(1, math.ceil(bound / grid.cell_size))
    i, j = grid.candidate_pairs(shell)
    d = np.linalg.norm(grid.positions[i] - grid.positions[j], axis=1)
    limit = fn(i, j) if fn is not None else bound
    keep = d <= limit
    return i[keep], j[keep], d[keep]


@dataclass
class ClashReport:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    distance_computations: int = 0

    @property
    def clash_free(self) -> bool:
        return not self.pairs

    def pair_set(self) -> set[tuple[int, int]]:
        return {(i, j) for i, j, _ in self.pairs}


class Exclusions:
    """Pairs never reported as clashes.

    Explicit pairs are stored as sorted int64 codes ``i * n + j``; pairs
    sharing a group label (a rigid body, or the static-obstacle group)
    are excluded without enumeration.
    """

    def __init__(self, n: int, pairs=(), groups=None):
        self.n = int(n)
        codes = [min(a, b) * self.n + max(a, b) for a, b in pairs if a != b]
        self.codes = np.unique(np.asarray(codes, dtype=np.int64))
        self.groups = None if groups is None else np.asarray(groups, dtype=np.int64)

    def mask(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """True where the pair is excluded."""
        out = np.zeros(len(i), dtype=bool)
        if len(self.codes):
            codes = i * self.n + j
            slot = np.searchsorted(self.codes, codes)
            np.minimum(slot, len(self.codes) - 1, out=slot)
            out |= self.codes[slot] == codes
        if self.groups is not None:
            gi, gj = self.groups[i], self.groups[j]
            out |= (gi == gj) & (gi >= 0)
        return out

    def __contains__(self, pair) -> bool:
        a, b = pair
        a, b = min(a, b), max(a, b)
        return bool(self.mask(np.array([a]), np.array([b]))[0])


def find_clashes(grid: SpatialHashGrid, radii, scale: float = 0.75,
                 exclusions: Exclusions | None = None) -> ClashReport:
    """Report pairs with |p_i - p_j| < scale * (r_i + r_j).

    Pairs are sorted by descending overlap depth, ties by index.
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) != len(grid):
        raise ValueError("radii and grid size differ")
    if len(radii) < 2:
        return ClashReport()
    r_max = float(radii.max())
    shell = max(1, math.ceil(scale * 2.0 * r_max / grid.cell_size))
    i, j = grid.candidate_pairs(shell)
    n_checked = len(i)
    if exclusions is not None and len(i):
        keep = ~exclusions.mask(i, j)
        i, j = i[keep], j[keep]
    pos = grid.positions
    d = np.linalg.norm(pos[i] - pos[j], axis=1)
    limit = scale * (radii[i] + radii[j])
    hit = d < limit
    i, j, overlap = i[hit], j[hit], (limit - d)[hit]
    order = np.lexsort((j, i, -overlap))
    pairs = [(int(i[k]), int(j[k]), float(overlap[k])) for k in order]
    return ClashReport(pairs=pairs, distance_computations=n_checked)


class ClashDetector:
    """Clash checks for a fixed atom set plus static obstacle spheres.

    Obstacles are appended after the atoms (indices ``n_atoms ..``) and
    share one exclusion group, so obstacle-obstacle pairs never report.
    """

    def __init__(self, radii, exclusions: Exclusions, obstacle_centers=None,
                 obstacle_radii=None, scale: float = 0.75, cell_size: float = 1.0):
        self.n_atoms = len(radii)
        centers = np.zeros((0, 3)) if obstacle_centers is None else np.asarray(obstacle_centers, float).reshape(-1, 3)
        orad = np.zeros(0) if obstacle_radii is None else np.asarray(obstacle_radii, float)
        self.obstacle_centers = centers
        self.radii = np.concatenate([np.asarray(radii, float), orad])
        self.exclusions = exclusions
        self.scale = float(scale)
        self.cell_size = float(cell_size)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacle_centers)

    def all_positions(self, atom_positions) -> np.ndarray:
        if self.n_obstacles == 0:
            return np.asarray(atom_positions, float)
        return np.vstack([atom_positions, self.obstacle_centers])

    def check(self, atom_positions) -> ClashReport:
        grid = SpatialHashGrid(self.all_positions(atom_positions), self.cell_size)
        return find_clashes(grid, self.radii, self.scale, self.exclusions)
