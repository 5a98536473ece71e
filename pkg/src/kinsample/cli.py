"""Command line entry point: ``kinsample sample|correlate|stats|rmsd``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import conformation_rmsd, correlation_matrix, rejection_table
from .collision import Exclusions
from .constraints import HBOND_MAX_DISTANCE, detect_hydrogen_bonds
from .elements import RadiiTable
from .errors import KinsampleError
from .io.constraint_file import parse_constraints
from .io.linkfile import LinkageDescription, format_linkfile, parse_linkfile
from .io.pdb import format_pdb, parse_pdb
from .linkage import KinematicLinkage, build_linkage
from .planners import AttemptRecord, PlannerConfig, PlannerRun, PoissonState, poisson_explore, run_planner
from .space import ExplorationTree, MetricConfig
from .system import SamplingSystem, bonded_pairs
from .templates import TemplateTable

log = logging.getLogger("kinsample")

OUTPUT_ENV = "KINSAMPLE_OUTPUT"
STATS_HEADER = ["attempt", "seed_id", "outcome", "distance_to_init",
                "distance_computations_cumulative", "dcc_rounds"]
PLANNER_MODES = {"poisson": "poisson", "rrt": "binned_rrt", "mcl": "mcl"}
# flags that only mean something to some planners
PLANNER_FLAGS = {
    "radius": {"poisson"}, "attempts": {"poisson"}, "neighbor_search": {"poisson"},
    "sigma": {"rrt", "mcl"}, "iterations": {"rrt", "mcl"}, "exploration_radius": {"rrt"},
}


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- inputs -----------------------------------------------------------------

@dataclass
class Model:
    desc: LinkageDescription
    kind: str                     # "pdb" | "linkage"
    linkage: KinematicLinkage
    system: SamplingSystem
    q_init: np.ndarray


def load_model(settings: dict) -> Model:
    inp = settings["input"]
    radii = RadiiTable(settings.get("radii_overrides") or None)
    if inp["kind"] == "pdb":
        atoms = parse_pdb(inp["path"], inp.get("chain"), radii=radii)
        desc = LinkageDescription(atoms, None, source=inp["path"])
    else:
        desc = parse_linkfile(inp["path"], radii)
    templates = TemplateTable.from_file(settings["templates"]) if settings.get("templates") else TemplateTable()
    lk = build_linkage(desc.atoms, desc.bonds, templates)
    explicit = list(desc.constraints)
    if settings.get("constraints"):
        explicit += parse_constraints(settings["constraints"]["path"], desc.atoms)
    pairs = [(lk.index_of[a], lk.index_of[b]) for a, b in explicit]
    q0 = lk.zero_conformation().dofs
    frames = lk.frames(q0)
    hb = settings["hbond"]
    excl = Exclusions(lk.n_atoms, bonded_pairs(lk))
    cons = detect_hydrogen_bonds(lk, frames, excl, hb["max_distance"], math.radians(hb["min_angle_deg"]),
                                 explicit=pairs, geometric=hb["detect"])
    metric = MetricConfig(**settings["metric"])
    system = SamplingSystem.build(lk, cons, desc.obstacle_centers, desc.obstacle_radii,
                                  scale=settings["collision_scale"], cell_size=settings["cell_size"],
                                  metric=metric, free_globals=settings["free_globals"])
    return Model(desc, inp["kind"], lk, system, q0)


# -- outputs ----------------------------------------------------------------

def _stats_row(a: AttemptRecord) -> list:
    return [a.attempt, a.seed_id, a.outcome, repr(float(a.distance_to_init)),
            a.distance_computations_cumulative, a.dcc_rounds]


def write_ensemble(model: Model, tree: ExplorationTree, outdir: Path) -> int:
    ens = outdir / "ensemble"
    ens.mkdir(parents=True, exist_ok=True)
    for old in ens.iterdir():
        if old.suffix in (".pdb", ".lnk"):
            old.unlink()
    width = max(5, len(str(len(tree) - 1)))
    for nid in range(len(tree)):
        pos = model.linkage.forward_kinematics(tree.conformation(nid))
        header = f"conformation {nid} parent {tree.parent[nid]}"
        if model.kind == "pdb":
            (ens / f"conf_{nid:0{width}d}.pdb").write_text(format_pdb(model.desc.atoms, pos, header))
        else:
            d = model.desc
            (ens / f"conf_{nid:0{width}d}.lnk").write_text(format_linkfile(
                d.atoms, pos, d.bonds, d.constraints, d.obstacle_centers, d.obstacle_radii, header))
    return len(tree)


def _summary(run: PlannerRun) -> dict:
    return {"samples": len(run.tree), "attempts": len(run.attempts), "outcomes": run.stats,
            "distance_computations": run.distance_computations,
            "open": len(run.open_ids), "closed": len(run.closed_ids)}


# -- sample -----------------------------------------------------------------

def settings_from_args(args) -> dict:
    if args.manifest:
        for flag in ("pdb", "linkage", "constraints", "resume"):
            if getattr(args, flag):
                raise UsageError(f"--manifest cannot be combined with --{flag}")
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            settings = manifest["settings"]
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"cannot read manifest {args.manifest}: {e}") from None
        for entry in (settings["input"], settings.get("constraints")):
            if entry and Path(entry["path"]).exists() and _sha256(entry["path"]) != entry["sha256"]:
                raise UsageError(f"{entry['path']} changed since the manifest was written")
        return settings
    if bool(args.pdb) == bool(args.linkage):
        raise UsageError("give exactly one of --pdb, --linkage or --manifest")
    if args.chain and not args.pdb:
        raise UsageError("--chain applies to --pdb input only")
    planner = args.planner or "poisson"
    for flag, allowed in PLANNER_FLAGS.items():
        if getattr(args, flag) is not None and planner not in allowed:
            raise UsageError(f"--{flag.replace('_', '-')} is not used by the {planner} planner")
    if args.no_dcc and args.dcc_rounds not in (None, 0):
        raise UsageError("--no-dcc conflicts with --dcc-rounds")
    if planner == "poisson" and args.radius is None:
        raise UsageError("the poisson planner needs --radius")
    if planner in ("rrt", "mcl") and args.sigma is None:
        raise UsageError(f"the {planner} planner needs --sigma")
    if planner == "rrt" and args.exploration_radius is None:
        raise UsageError("the rrt planner needs --exploration-radius")
    k = 0 if args.no_dcc else (5 if args.dcc_rounds is None else args.dcc_rounds)
    cfg = PlannerConfig(
        mode=PLANNER_MODES[planner],
        r=args.radius if args.radius is not None else PlannerConfig.r,
        P=args.attempts if args.attempts is not None else 20,
        R=args.exploration_radius if args.exploration_radius is not None else PlannerConfig.R,
        sigma=args.sigma if args.sigma is not None else PlannerConfig.sigma,
        I=args.iterations if args.iterations is not None else 1000,
        k=k, max_samples=args.max_samples, rng_seed=args.seed,
        neighbor_search=args.neighbor_search or "bvh", workers=args.workers)
    for name, val, ok in (("--collision-scale", args.collision_scale, args.collision_scale > 0),
                          ("--cell-size", args.cell_size, args.cell_size > 0),
                          ("--hbond-distance", args.hbond_distance, args.hbond_distance > 0),
                          ("--radius", cfg.r, cfg.r > 0), ("--sigma", cfg.sigma, cfg.sigma > 0),
                          ("--exploration-radius", cfg.R, cfg.R > 0),
                          ("--iterations", cfg.I, cfg.I > 0), ("--attempts", cfg.P, cfg.P >= 0),
                          ("--dcc-rounds", cfg.k, cfg.k >= 0)):
        if not (ok and math.isfinite(val)):
            raise UsageError(f"{name} out of range: {val}")
    try:
        cfg.validate()
        metric = MetricConfig(args.revolute_weight, args.translation_weight, args.rotation_weight)
    except ValueError as e:
        raise UsageError(str(e)) from None
    path = Path(args.pdb or args.linkage).resolve()
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    settings = {
        "input": {"kind": "pdb" if args.pdb else "linkage", "path": str(path),
                  "sha256": _sha256(path), "chain": args.chain},
        "constraints": None,
        "planner": asdict(cfg),
        "metric": asdict(metric),
        "collision_scale": args.collision_scale,
        "cell_size": args.cell_size,
        "hbond": {"detect": not args.no_hbond_detection, "max_distance": args.hbond_distance,
                  "min_angle_deg": args.hbond_angle},
        "free_globals": args.free_globals,
        "templates": str(Path(args.templates).resolve()) if args.templates else None,
        "radii_overrides": None,
    }
    if args.constraints:
        cpath = Path(args.constraints).resolve()
        if not cpath.is_file():
            raise UsageError(f"constraint file not found: {cpath}")
        settings["constraints"] = {"path": str(cpath), "sha256": _sha256(cpath)}
    if args.radii:
        try:
            settings["radii_overrides"] = RadiiTable.from_file(args.radii).as_dict()
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read radii file {args.radii}: {e}") from None
    return settings


def _prepare_output(outdir: Path) -> None:
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise UsageError(f"output directory {outdir} is not writable: {e.strerror}") from None


def cmd_sample(args) -> int:
    outdir = Path(args.output or os.environ.get(OUTPUT_ENV) or "kinsample_out")
    resume = None
    if args.resume:
        rdir = Path(args.resume)
        try:
            manifest = json.loads((rdir / "manifest.json").read_text())
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot resume from {rdir}: {e}") from None
        settings = manifest["settings"]
        if settings["planner"]["mode"] != "poisson":
            raise UsageError("only poisson runs can be resumed")
        if args.max_samples_given:
            settings["planner"]["max_samples"] = args.max_samples
    else:
        settings = settings_from_args(args)
    cfg = PlannerConfig(**settings["planner"])
    _prepare_output(outdir)
    model = load_model(settings)
    if args.resume:
        tree, open_ids = ExplorationTree.load(Path(args.resume) / "tree.txt", model.system.metric)
        if open_ids is None or "rng_state" not in tree.meta:
            raise UsageError("tree.txt has no planner state; cannot resume")
        resume = (tree, PoissonState.from_meta(open_ids, tree.meta))
    log.info("%d atoms, %d rigid bodies, %d DOFs, %d constraints", model.linkage.n_atoms,
             model.linkage.n_bodies, model.linkage.dof_count, len(model.system.constraints))

    append = resume is not None and Path(args.resume).resolve() == outdir.resolve()
    with open(outdir / "stats.csv", "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append:
            writer.writerow(STATS_HEADER)

        def progress(rec):
            writer.writerow(_stats_row(rec))
            if args.progress:
                print(",".join(str(x) for x in _stats_row(rec)), flush=True)

        if resume is not None:
            run = poisson_explore(model.system, None, cfg, resume=resume, progress=progress)
        else:
            run = run_planner(model.system, model.q_init, cfg, progress)

    if cfg.mode == "poisson":
        run.tree.save(outdir / "tree.txt", run.state.open_ids, run.state.to_meta())
    else:
        run.tree.save(outdir / "tree.txt")
    n = write_ensemble(model, run.tree, outdir)
    prior = resume[1].attempts_made if resume is not None else 0
    summary = _summary(run)
    summary["attempts_total"] = prior + len(run.attempts)
    manifest = {"tool": "kinsample", "version": __version__, "settings": settings, "summary": summary}
    if resume is not None:
        manifest["resumed_from"] = str(Path(args.resume).resolve())
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    st = run.stats
    print(f"{n} conformations written to {outdir}; attempts {len(run.attempts)} "
          f"(accepted {st['accepted']}, clash {st['clash_rejected']}, disk {st['disk_rejected']}, "
          f"degenerate {st['degenerate']}); distance computations {run.distance_computations}")
    return 0


# -- analysis commands -------------------------------------------------------

def _load_run(rundir):
    rundir = Path(rundir)
    try:
        manifest = json.loads((rundir / "manifest.json").read_text())
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read {rundir}/manifest.json: {e}") from None
    model = load_model(manifest["settings"])
    tree, _ = ExplorationTree.load(rundir / "tree.txt", model.system.metric)
    return manifest, model, tree


def _read_stats(rundir) -> PlannerRun:
    path = Path(rundir) / "stats.csv"
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    run = PlannerRun(tree=None, config=None, label=Path(rundir).name)
    for row in rows:
        try:
            run.attempts.append(AttemptRecord(int(row["attempt"]), int(row["seed_id"]), row["outcome"],
                                              float(row["distance_to_init"]),
                                              int(row["distance_computations_cumulative"]),
                                              int(row["dcc_rounds"])))
        except (KeyError, ValueError):
            raise UsageError(f"{path}: malformed row {row}") from None
    return run


def _selection(model: Model, selection: str | None) -> list[int]:
    if not selection:
        return list(range(model.linkage.n_atoms))
    out = []
    for tok in selection.split(","):
        tok = tok.strip()
        if tok.upper() == "CA":
            out += [k for k, a in enumerate(model.linkage.atoms) if a.name == "CA"]
            continue
        try:
            out.append(model.linkage.index_of[int(tok)])
        except (ValueError, KeyError):
            raise UsageError(f"unknown atom id {tok!r} in --atoms") from None
    return out


def cmd_correlate(args) -> int:
    _, model, tree = _load_run(args.run)
    sel = _selection(model, args.atoms)
    ens = np.array([model.linkage.forward_kinematics(tree.conformation(i)) for i in range(len(tree))])
    labels = [model.linkage.atoms[i].label for i in sel]
    cm = correlation_matrix(ens, sel, superpose=args.superpose, labels=labels)
    text = cm.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_rmsd(args) -> int:
    _, model, tree = _load_run(args.run)
    sel = _selection(model, args.atoms)
    if args.reference not in tree:
        raise UsageError(f"no conformation {args.reference} in the tree")
    ref = tree.conformation(args.reference)
    lines = ["conformation,rmsd"]
    for i in range(len(tree)):
        d = conformation_rmsd(model.linkage, ref, tree.conformation(i), sel, superpose=not args.no_superpose)
        lines.append(f"{i},{d!r}")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    runs = [_read_stats(d) for d in args.runs]
    table = rejection_table(runs, [Path(d).name for d in args.runs])
    sys.stdout.write(table.to_csv() if args.csv else table.table() + "\n")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinsample", description="Constrained conformational sampling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="run a planner and write an ensemble")
    src = s.add_argument_group("input")
    src.add_argument("--pdb", help="PDB file")
    src.add_argument("--chain", help="chain id(s) to keep, comma separated")
    src.add_argument("--linkage", help="synthetic linkage file")
    src.add_argument("--constraints", help="HBOND constraint file")
    src.add_argument("--templates", help="bond-order template overrides")
    src.add_argument("--radii", help="JSON radii overrides {element: [vdw, covalent]}")
    src.add_argument("--manifest", help="rerun exactly the run described by this manifest")
    src.add_argument("--resume", help="continue the poisson run stored in this directory")
    pl = s.add_argument_group("planner")
    pl.add_argument("--planner", choices=sorted(PLANNER_MODES))
    pl.add_argument("--radius", type=float, help="poisson disk radius r")
    pl.add_argument("--attempts", type=int, help="perturbations per seed P (default 20)")
    pl.add_argument("--sigma", type=float, help="perturbation size")
    pl.add_argument("--exploration-radius", type=float, help="binned RRT radius R")
    pl.add_argument("--iterations", type=int, help="iterations I (default 1000)")
    pl.add_argument("--dcc-rounds", type=int, help="clash-avoiding constraint rounds k (default 5)")
    pl.add_argument("--no-dcc", action="store_true", help="same as --dcc-rounds 0")
    pl.add_argument("--neighbor-search", choices=["bvh", "linear"])
    pl.add_argument("--max-samples", type=int, default=10_000)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--workers", type=int, default=1, help="threads for per-seed attempts")
    ph = s.add_argument_group("physics")
    ph.add_argument("--collision-scale", type=float, default=0.75)
    ph.add_argument("--cell-size", type=float, default=1.0)
    ph.add_argument("--hbond-distance", type=float, default=HBOND_MAX_DISTANCE)
    ph.add_argument("--hbond-angle", type=float, default=100.0, help="minimum donor-H-acceptor angle, degrees")
    ph.add_argument("--no-hbond-detection", action="store_true")
    ph.add_argument("--free-globals", action="store_true", help="let the six global DOFs move")
    ph.add_argument("--revolute-weight", type=float, default=1.0)
    ph.add_argument("--translation-weight", type=float, default=0.0)
    ph.add_argument("--rotation-weight", type=float, default=0.0)
    s.add_argument("--output", "-o", help=f"output directory (default ${OUTPUT_ENV} or ./kinsample_out)")
    s.add_argument("--progress", action="store_true", help="echo stats rows to stdout")
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("correlate", help="displacement correlation matrix of a run")
    c.add_argument("run")
    c.add_argument("--atoms", help="comma separated atom ids, or CA")
    c.add_argument("--superpose", action="store_true")
    c.add_argument("--output", "-o")
    c.set_defaults(func=cmd_correlate)

    r = sub.add_parser("rmsd", help="RMSD of every conformation to a reference")
    r.add_argument("run")
    r.add_argument("--reference", type=int, default=0)
    r.add_argument("--atoms")
    r.add_argument("--no-superpose", action="store_true")
    r.add_argument("--output", "-o")
    r.set_defaults(func=cmd_rmsd)

    t = sub.add_parser("stats", help="rejection-rate table for one or more runs")
    t.add_argument("runs", nargs="+")
    t.add_argument("--csv", action="store_true")
    t.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "sample":
        args.max_samples_given = any(a == "--max-samples" or a.startswith("--max-samples=") for a in argv)
        if args.max_samples < 1 or args.workers < 1:
            print("kinsample: error: --max-samples and --workers must be at least 1", file=sys.stderr)
            return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="kinsample: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"kinsample: error: {e}", file=sys.stderr)
        return 2
    except KinsampleError as e:
        print(f"kinsample: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as e:
        print(f"kinsample: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # last resort: report, never dump a traceback
        print(f"kinsample: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
