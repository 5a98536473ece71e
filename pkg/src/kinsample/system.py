"""Everything a perturbation needs about one molecule and its environment."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .collision import ClashDetector, ClashReport, Exclusions
from .constraints import HolonomicConstraint
from .errors import PreconditionError
from .linkage import KinematicLinkage
from .space import Metric, MetricConfig

DEFAULT_EXCLUSION_DEPTH = 3
DEFAULT_DCC_CAP = 10


def bonded_pairs(linkage: KinematicLinkage, depth: int = DEFAULT_EXCLUSION_DEPTH) -> list[tuple[int, int]]:
    """Atom index pairs separated by at most ``depth`` covalent bonds."""
    adj = [[linkage.index_of[n] for n in linkage.adjacency[a.id]] for a in linkage.atoms]
    pairs = []
    for start in range(linkage.n_atoms):
        seen = {start: 0}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            if seen[v] == depth:
                continue
            for nb in adj[v]:
                if nb not in seen:
                    seen[nb] = seen[v] + 1
                    queue.append(nb)
        pairs.extend((start, v) for v in seen if v > start)
    return pairs


@dataclass
class SamplingSystem:
    linkage: KinematicLinkage
    constraints: list[HolonomicConstraint]
    detector: ClashDetector
    metric: Metric
    active: np.ndarray
    dcc_cap: int = DEFAULT_DCC_CAP
    _ctx_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, linkage: KinematicLinkage, constraints=(), obstacle_centers=None,
              obstacle_radii=None, scale: float = 0.75, cell_size: float = 1.0,
              exclusion_depth: int = DEFAULT_EXCLUSION_DEPTH, metric: MetricConfig | None = None,
              free_globals: bool = False, dcc_cap: int = DEFAULT_DCC_CAP) -> "SamplingSystem":
        constraints = list(constraints)
        pairs = bonded_pairs(linkage, exclusion_depth)
        # constrained pairs sit at fixed, often sub-vdW distances
        pairs += [c.atoms for c in constraints]
        n_obst = 0 if obstacle_centers is None else len(obstacle_centers)
        groups = np.concatenate([linkage.atom_body, np.full(n_obst, linkage.n_bodies)])
        exclusions = Exclusions(linkage.n_atoms + n_obst, pairs, groups)
        radii = np.array([a.vdw_radius for a in linkage.atoms])
        detector = ClashDetector(radii, exclusions, obstacle_centers, obstacle_radii, scale, cell_size)
        active = linkage.revolute_mask & ~linkage.null_dofs
        if free_globals:
            active = active | ~linkage.revolute_mask
        return cls(linkage, constraints, detector, Metric(metric or MetricConfig(), linkage),
                   active, dcc_cap)

    @property
    def n_atoms(self) -> int:
        return self.linkage.n_atoms

    def clashes(self, positions) -> ClashReport:
        return self.detector.check(positions)

    def require_feasible(self, q) -> None:
        report = self.clashes(self.linkage.forward_kinematics(q))
        if not report.clash_free:
            shown = ", ".join(f"({self.atom_label(i)}, {self.atom_label(j)})" for i, j, _ in report.pairs[:10])
            raise PreconditionError(f"initial conformation has {len(report.pairs)} clashing pairs: {shown}")

    def atom_label(self, idx: int) -> str:
        if idx >= self.n_atoms:
            return f"obstacle{idx - self.n_atoms}"
        return self.linkage.atoms[idx].label

    def trial_weights(self) -> np.ndarray:
        return np.where(self.active, self.metric.weights, 0.0)
