"""Ensemble statistics: motion correlation, RMSD, rejection-rate tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR = 1e-12


def kabsch(P, Q) -> tuple[np.ndarray, float]:
    """Rotation R minimizing |R (P - mean P) - (Q - mean Q)|, and that RMSD."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Pc = P - P.mean(axis=0)
    Qc = Q - Q.mean(axis=0)
    H = Pc.T @ Qc
    U, S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    diff = Pc @ R.T - Qc
    return R, float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def rmsd(a, b, selection=None, superpose: bool = True) -> float:
    """RMSD between two coordinate sets (N x 3), optionally after superposition."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if selection is not None:
        selection = np.asarray(selection, dtype=np.int64)
        if selection.size == 0:
            raise ValueError("empty atom selection")
        a, b = a[selection], b[selection]
    if len(a) == 0:
        raise ValueError("empty atom selection")
    if superpose:
        return kabsch(a, b)[1]
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def conformation_rmsd(linkage, q_a, q_b, selection=None, superpose: bool = True) -> float:
    return rmsd(linkage.forward_kinematics(q_a), linkage.forward_kinematics(q_b), selection, superpose)


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    atom_selection: list[int]
    labels: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        labels = self.labels or [str(a) for a in self.atom_selection]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + labels)
        for lab, row in zip(labels, self.values):
            w.writerow([lab] + [f"{v:.6f}" for v in row])
        return buf.getvalue()


def correlation_matrix(ensemble, atom_selection, superpose: bool = False,
                       labels=None) -> CorrelationMatrix:
    """Normalized covariance of atom displacements over an ensemble.

    ``ensemble`` is an (M, N, 3) coordinate array. Atoms whose mean squared
    displacement is below the variance floor get zero correlation with
    everything, themselves included.
    """
    X = np.asarray(ensemble, dtype=float)
    if X.ndim != 3 or X.shape[2] != 3:
        raise ValueError("ensemble must be (conformations, atoms, 3)")
    if X.shape[0] < 2:
        raise ValueError("need at least two conformations")
    sel = list(atom_selection)
    if not sel:
        raise ValueError("empty atom selection")
    if superpose:
        ref = X[0]
        aligned = []
        for frame in X:
            R, _ = kabsch(frame, ref)
            aligned.append((frame - frame.mean(0)) @ R.T + ref.mean(0))
        X = np.array(aligned)
    P = X[:, sel, :]
    dP = P - P.mean(axis=0)
    cov = np.einsum("mid,mjd->ij", dP, dP) / X.shape[0]
    var = np.diag(cov).copy()
    moving = var >= VARIANCE_FLOOR
    denom = np.sqrt(np.outer(np.where(moving, var, 1.0), np.where(moving, var, 1.0)))
    C = np.where(np.outer(moving, moving), cov / denom, 0.0)
    C = 0.5 * (C + C.T)
    return CorrelationMatrix(C, sel, list(labels) if labels is not None else [])


OUTCOMES = ("accepted", "clash_rejected", "disk_rejected", "degenerate")


@dataclass
class EnsembleStats:
    rows: list[dict]

    def table(self) -> str:
        header = f"{'run':<28}{'attempts':>10}{'accepted':>10}{'clash rate':>12}{'disk reject rate':>18}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r['label']:<28}{r['attempts']:>10}{r['accepted']:>10}"
                         f"{_pct(r['clash_rate']):>12}{_pct(r['disk_reject_rate']):>18}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["label", "attempts", *OUTCOMES, "clash_rate", "disk_reject_rate"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({**r, "clash_rate": _fmt(r["clash_rate"]),
                        "disk_reject_rate": _fmt(r["disk_reject_rate"])})
        return buf.getvalue()


def _pct(x) -> str:
    return "n/a" if x is None else f"{100 * x:.0f}%"


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.6f}"


def rejection_table(runs, labels=None) -> EnsembleStats:
    """Clash and disk rejection rates per run (objects with a ``stats`` mapping)."""
    if not runs:
        raise ValueError("need at least one run")
    rows = []
    for k, run in enumerate(runs):
        stats = run.stats if hasattr(run, "stats") else run
        attempts = sum(int(stats.get(o, 0)) for o in OUTCOMES)
        row = {"label": labels[k] if labels else getattr(run, "label", f"run{k}"),
               "attempts": attempts}
        row.update({o: int(stats.get(o, 0)) for o in OUTCOMES})
        row["clash_rate"] = stats.get("clash_rejected", 0) / attempts if attempts else None
        row["disk_reject_rate"] = stats.get("disk_rejected", 0) / attempts if attempts else None
        rows.append(row)
    return EnsembleStats(rows)
