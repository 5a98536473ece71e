"""Nullspace perturbations with dynamic clash-avoiding constraints (NIK_k)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import ClashReport
from .constraints import (ClashConstraint, ConstraintJacobian, NullspaceBasis, assemble_jacobian,
                          clash_row, make_clash_constraint, nullspace, project)
from .errors import PreconditionError
from .linkage import Frames
from .system import SamplingSystem

ACCEPTED = "accepted"
CLASH_UNRESOLVED = "clash_unresolved"
DEGENERATE = "degenerate"
DEFAULT_DCC_ROUNDS = 5


@dataclass
class SeedContext:
    """Per-seed quantities shared by every perturbation attempt from it."""
    dofs: np.ndarray
    frames: Frames
    jacobian: ConstraintJacobian
    basis: NullspaceBasis


def seed_context(system: SamplingSystem, q, validate: bool = True) -> SeedContext:
    dofs = np.asarray(getattr(q, "dofs", q), dtype=float)
    frames = system.linkage.frames(dofs)
    if validate:
        report = system.clashes(frames.positions)
        if not report.clash_free:
            raise PreconditionError(f"seed conformation clashes ({len(report.pairs)} pairs)")
    J = assemble_jacobian(system.linkage, frames, system.constraints)
    return SeedContext(dofs, frames, J, nullspace(J, system.active))


@dataclass
class PerturbationResult:
    delta_trial: np.ndarray
    delta_admissible: np.ndarray
    clash_constraints_added: list[ClashConstraint]
    iterations_used: int
    status: str
    dofs: np.ndarray
    frames: Frames | None = field(default=None, repr=False)
    basis: NullspaceBasis | None = field(default=None, repr=False)
    jacobian: ConstraintJacobian | None = field(default=None, repr=False)
    report: ClashReport | None = field(default=None, repr=False)

    @property
    def accepted(self) -> bool:
        return self.status == ACCEPTED


def random_direction(system: SamplingSystem, sigma: float, rng) -> np.ndarray:
    """Uniform draw on {x : |x|_w = sigma} over the perturbable DOFs."""
    w = system.trial_weights()
    g = rng.standard_normal(len(w))
    support = w > 0
    g[~support] = 0.0
    norm = np.linalg.norm(g)
    delta = np.zeros(len(w))
    if norm > 0:
        delta[support] = sigma * g[support] / (np.sqrt(w[support]) * norm)
    return delta


def nik_perturb(system: SamplingSystem, seed, sigma: float, k: int = DEFAULT_DCC_ROUNDS, rng=None,
                target_length: float | None = None, context: SeedContext | None = None,
                validate: bool = True) -> PerturbationResult:
    """One NIK_k perturbation attempt from ``seed``.

    The trial step is projected onto the nullspace of the holonomic
    constraints and rescaled to ``target_length`` (default ``sigma``) in
    the metric norm. When the result clashes, one clash constraint per
    clashing pair (at most ``system.dcc_cap`` per round, worst overlap
    first) is frozen at the seed geometry and the original trial step is
    projected again, for at most ``k`` rounds.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = np.random.default_rng() if rng is None else rng
    ctx = context if context is not None else seed_context(system, seed, validate)
    lk = system.linkage
    metric = system.metric
    length = sigma if target_length is None else float(target_length)

    delta = random_direction(system, sigma, rng)
    J, basis = ctx.jacobian, ctx.basis
    added: list[ClashConstraint] = []
    constrained: set[tuple[int, int]] = set()
    rounds = 0
    seed_positions = system.detector.all_positions(ctx.frames.positions)
    while True:
        step = project(basis, delta)
        norm = metric.norm(step)
        if norm < 1e-8 * sigma:
            return PerturbationResult(delta, step, added, rounds, DEGENERATE, ctx.dofs.copy(),
                                      None, basis, J, None)
        step *= length / norm
        q_new = lk.wrap(ctx.dofs + step)
        frames = lk.frames(q_new)
        report = system.clashes(frames.positions)
        if report.clash_free:
            return PerturbationResult(delta, step, added, rounds, ACCEPTED, q_new, frames, basis, J, report)
        fresh = [(i, j) for i, j, _ in report.pairs if (i, j) not in constrained][:system.dcc_cap]
        if rounds >= k or not fresh:
            return PerturbationResult(delta, step, added, rounds, CLASH_UNRESOLVED, q_new, frames,
                                      basis, J, report)
        rounds += 1
        new_rows = []
        for i, j in fresh:
            c = make_clash_constraint(seed_positions, i, j)
            constrained.add((i, j))
            added.append(c)
            new_rows.append(clash_row(lk, ctx.frames, c))
        J = ConstraintJacobian(np.vstack([J.matrix, np.array(new_rows)]),
                               J.row_map + [(c, 0) for c in added[-len(new_rows):]],
                               J.n_holonomic, J.n_clash + len(new_rows))
        basis = nullspace(J, system.active)
