"""PoissonExplore, binned RRT, and the MCl random-walk baseline.

Every perturbation attempt draws from its own random stream, keyed by
(rng_seed, attempt index), so runs that differ only in neighbor search or
in parallel evaluation consume identical randomness per attempt.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .nik import ACCEPTED, DEGENERATE, SeedContext, nik_perturb, seed_context
from .space import ExplorationTree
from .system import SamplingSystem

OUTCOMES = ("accepted", "clash_rejected", "disk_rejected", "degenerate")
N_BINS = 101
MODES = ("poisson", "binned_rrt", "mcl")
CONTEXT_CACHE = 64


@dataclass
class PlannerConfig:
    mode: str = "poisson"
    r: float = 0.5
    P: int = 20
    R: float = 5.0
    sigma: float = 0.1
    I: int = 1000
    k: int = 5
    max_samples: int = 10_000
    rng_seed: int = 0
    neighbor_search: str = "bvh"
    workers: int = 1

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown planner mode {self.mode!r}")
        if self.neighbor_search not in ("bvh", "linear"):
            raise ValueError(f"unknown neighbor search {self.neighbor_search!r}")
        if self.mode == "poisson" and not self.r > 0:
            raise ValueError("poisson radius r must be positive")
        if self.mode == "binned_rrt" and not self.R > 0:
            raise ValueError("exploration radius R must be positive")
        if self.mode in ("binned_rrt", "mcl") and not (self.sigma > 0 and self.I > 0):
            raise ValueError("sigma and I must be positive")
        if self.P < 0:
            raise ValueError("P must be non-negative")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.max_samples < 1:
            raise ValueError("max_samples must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class AttemptRecord:
    attempt: int
    seed_id: int
    outcome: str
    distance_to_init: float
    distance_computations_cumulative: int
    dcc_rounds: int


@dataclass
class PlannerRun:
    tree: ExplorationTree
    config: PlannerConfig
    attempts: list[AttemptRecord] = field(default_factory=list)
    open_ids: list[int] = field(default_factory=list)
    closed_ids: list[int] = field(default_factory=list)
    wall_time: float = 0.0
    label: str = ""
    bins: list[list[int]] | None = None
    state: object = None

    @property
    def stats(self) -> dict[str, int]:
        out = dict.fromkeys(OUTCOMES, 0)
        for a in self.attempts:
            out[a.outcome] += 1
        return out

    @property
    def distance_computations(self) -> int:
        return self.tree.distance_computations

    @property
    def ensemble_ids(self) -> list[int]:
        return list(range(len(self.tree)))

    def outcome_sequence(self) -> list[str]:
        return [a.outcome for a in self.attempts]


def attempt_rng(rng_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(index,)))


def _outcome(status: str) -> str:
    if status == ACCEPTED:
        return "accepted"
    if status == DEGENERATE:
        return "degenerate"
    return "clash_rejected"


@dataclass
class PoissonState:
    """Loop state needed to continue a Poisson run exactly where it stopped."""
    open_ids: list[int]
    attempts_made: int
    rng_state: dict
    pending: tuple[int, int, list[int]] | None = None   # (seed, attempts done, neighbors)

    def to_meta(self) -> dict:
        return {"attempts_made": self.attempts_made, "rng_state": self.rng_state,
                "pending": list(self.pending) if self.pending else None}

    @classmethod
    def from_meta(cls, open_ids, meta: dict) -> "PoissonState":
        pending = meta.get("pending")
        return cls(list(open_ids), int(meta["attempts_made"]), meta["rng_state"],
                   (int(pending[0]), int(pending[1]), [int(x) for x in pending[2]]) if pending else None)


def poisson_explore(system: SamplingSystem, q_init, cfg: PlannerConfig,
                    resume: tuple[ExplorationTree, PoissonState] | None = None,
                    progress=None) -> PlannerRun:
    """Poisson-disk exploration with annulus [r, 2r] around each seed.

    ``resume`` = (tree, state) continues a run stopped by ``max_samples``;
    the continuation makes the same decisions as an uninterrupted run.
    """
    cfg.validate()
    t0 = time.perf_counter()
    metric = system.metric
    r = cfg.r
    master = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    if resume is None:
        q_init = np.asarray(getattr(q_init, "dofs", q_init), dtype=float)
        system.require_feasible(q_init)
        tree = ExplorationTree(q_init, metric)
        open_ids, attempt_idx, pending = [tree.root_id], 0, None
    else:
        tree, state = resume
        open_ids, attempt_idx, pending = list(state.open_ids), state.attempts_made, state.pending
        master.bit_generator.state = state.rng_state
        q_init = tree.conformation(tree.root_id)
    run = PlannerRun(tree, cfg, open_ids=open_ids, label=cfg.mode)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def perturb(ctx: SeedContext, index: int):
        rng = attempt_rng(cfg.rng_seed, index)
        target = rng.uniform(r, 2 * r)
        return nik_perturb(system, None, 1.5 * r, cfg.k, rng, target_length=target, context=ctx)

    try:
        while True:
            if pending is not None:
                seed_id, done, neighbors = pending
                pending = None
            else:
                if not run.open_ids or len(tree) >= cfg.max_samples:
                    break
                seed_id = run.open_ids.pop(int(master.integers(len(run.open_ids))))
                if cfg.P == 0:
                    run.closed_ids.append(seed_id)
                    continue
                neighbors = tree.collect(seed_id, r, cfg.neighbor_search)
                done = 0
            ctx = seed_context(system, tree.conformation(seed_id), validate=False)
            seed_q = ctx.dofs
            if pool is not None:
                base = attempt_idx - done
                results = iter(pool.map(lambda p: perturb(ctx, base + p), range(done, cfg.P)))
            for p in range(done, cfg.P):
                if len(tree) >= cfg.max_samples:
                    pending = (seed_id, p, neighbors)
                    break
                res = next(results) if pool is not None else perturb(ctx, attempt_idx)
                outcome = _outcome(res.status)
                if outcome == "accepted":
                    d_seed = metric.distance(res.dofs, seed_q)
                    near = metric.distances(tree.dofs[neighbors], res.dofs)
                    if r <= d_seed <= 2 * r and near.min() > r:
                        nid = tree.insert(res.dofs, seed_id)
                        neighbors.append(nid)
                        run.open_ids.append(nid)
                    else:
                        outcome = "disk_rejected"
                run.attempts.append(AttemptRecord(
                    attempt_idx, seed_id, outcome, metric.distance(res.dofs, q_init),
                    tree.distance_computations, res.iterations_used))
                if progress is not None:
                    progress(run.attempts[-1])
                attempt_idx += 1
            if pending is not None:
                break
            run.closed_ids.append(seed_id)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    run.state = PoissonState(list(run.open_ids), attempt_idx, master.bit_generator.state, pending)
    if pending is not None:
        run.open_ids.append(pending[0])
    run.wall_time = time.perf_counter() - t0
    return run


def bin_index(d: float, R: float) -> int | None:
    """Bin for distance-to-init ``d``; None beyond the exploration radius."""
    if d > R:
        return None
    return min(int(math.floor(d * (N_BINS - 1) / R)), N_BINS - 1)


def binned_rrt(system: SamplingSystem, q_init, cfg: PlannerConfig, progress=None) -> PlannerRun:
    cfg.validate()
    t0 = time.perf_counter()
    metric = system.metric
    lk = system.linkage
    q_init = np.asarray(getattr(q_init, "dofs", q_init), dtype=float)
    system.require_feasible(q_init)
    tree = ExplorationTree(q_init, metric)
    run = PlannerRun(tree, cfg, label=cfg.mode)
    bins: list[list[int]] = [[] for _ in range(N_BINS)]
    bins[0].append(tree.root_id)
    contexts: dict[int, SeedContext] = {}
    for i in range(cfg.I):
        rng = attempt_rng(cfg.rng_seed, i)
        q_rand = q_init.copy()
        q_rand[lk.revolute_mask] = lk.wrap(rng.uniform(-math.pi, math.pi, lk.dof_count))[lk.revolute_mask]
        filled = [b for b in range(N_BINS) if bins[b]]
        members = bins[filled[int(rng.integers(len(filled)))]]
        d = metric.distances(tree.dofs[members], q_rand)
        tree.distance_computations += len(members)
        seed_id = members[int(np.argmin(d))]
        if seed_id not in contexts:
            if len(contexts) >= CONTEXT_CACHE:
                contexts.clear()
            contexts[seed_id] = seed_context(system, tree.conformation(seed_id), validate=False)
        res = nik_perturb(system, None, cfg.sigma, cfg.k, rng, context=contexts[seed_id])
        outcome = _outcome(res.status)
        d_init = metric.distance(res.dofs, q_init)
        if outcome == "accepted":
            tree.distance_computations += 1
            b = bin_index(d_init, cfg.R)
            if b is None:
                outcome = "disk_rejected"
            else:
                bins[b].append(tree.insert(res.dofs, seed_id))
        run.attempts.append(AttemptRecord(i, seed_id, outcome, d_init,
                                          tree.distance_computations, res.iterations_used))
        if progress is not None:
            progress(run.attempts[-1])
        if len(tree) >= cfg.max_samples:
            break
    run.bins = bins
    run.wall_time = time.perf_counter() - t0
    return run


def mcl_walk(system: SamplingSystem, q_init, cfg: PlannerConfig, progress=None) -> PlannerRun:
    """Random walk keeping the current state whenever a step is rejected."""
    cfg.validate()
    t0 = time.perf_counter()
    metric = system.metric
    q_init = np.asarray(getattr(q_init, "dofs", q_init), dtype=float)
    system.require_feasible(q_init)
    tree = ExplorationTree(q_init, metric)
    run = PlannerRun(tree, cfg, label=cfg.mode)
    current = tree.root_id
    ctx = seed_context(system, q_init, validate=False)
    for i in range(cfg.I):
        if len(tree) >= cfg.max_samples:
            break
        rng = attempt_rng(cfg.rng_seed, i)
        res = nik_perturb(system, None, cfg.sigma, cfg.k, rng, context=ctx)
        outcome = _outcome(res.status)
        run.attempts.append(AttemptRecord(i, current, outcome, metric.distance(res.dofs, q_init),
                                          tree.distance_computations, res.iterations_used))
        if progress is not None:
            progress(run.attempts[-1])
        if outcome == "accepted":
            current = tree.insert(res.dofs, current)
            ctx = seed_context(system, res.dofs, validate=False)
    run.wall_time = time.perf_counter() - t0
    return run


def run_planner(system: SamplingSystem, q_init, cfg: PlannerConfig, progress=None) -> PlannerRun:
    cfg.validate()
    if cfg.mode == "poisson":
        return poisson_explore(system, q_init, cfg, progress=progress)
    return {"binned_rrt": binned_rrt, "mcl": mcl_walk}[cfg.mode](system, q_init, cfg, progress)


def config_dict(cfg: PlannerConfig) -> dict:
    return asdict(cfg)
