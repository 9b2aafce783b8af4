"""Command-line entry point: ``alsgt <verb> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dataio.bundle import load_bundle
from .dataio.las import read_las_points, write_las
from .dataio.poses import read_trajectory_csv, write_pose_file, write_trajectory_csv
from .dataio.projection import project_als_to_image, render_depth_overlay
from .errors import AlsgtError, StageError
from .evaluation import EmbeddingSet, ate, recall_at_k, rre_rte
from .pipeline import export_sequence, run_pipeline, stage
from .registration.aerial import prepare_aerial_reference
from .sim.scenario import Scenario, simulate

log = logging.getLogger("alsgt")


def _scenario(args):
    overrides = {"seed": args.seed} if args.seed is not None else {}
    return Scenario.load(args.config, **overrides)


def _out(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    with stage("load"):
        sc = _scenario(args)
        data = simulate(sc)
    out = _out(args)
    write_las(out / "als.las", data.als)
    write_trajectory_csv(out / "truth.csv", data.frame_times, [s.pose for s in data.true_states])
    write_pose_file(out / "odometry.txt", data.odometry)
    imu = data.imu
    np.savetxt(out / "imu.csv", np.column_stack([imu.timestamps, imu.gyro, imu.acc]),
               delimiter=",", header="t,gx,gy,gz,ax,ay,az", comments="", fmt="%.17g")
    np.savetxt(out / "gnss.csv", np.array([[g.timestamp, *g.position, g.sigma] for g in data.gnss]
                                          ).reshape(-1, 5),
               delimiter=",", header="t,x,y,z,sigma", comments="", fmt="%.17g")
    print(f"simulated {len(data.true_states)} frames into {out}")
    return 0


def cmd_extract(args):
    out = _out(args)
    with stage("load"):
        als = read_las_points(args.als) if args.als else simulate(_scenario(args)).als
    with stage("extract"):
        ref = prepare_aerial_reference(als, args.seed_resolution)
    write_las(out / "reference.las", ref.cloud)
    counts = np.bincount(ref.cloud.labels, minlength=4)
    (out / "extract_report.txt").write_text(
        f"roof_regions = {ref.n_roofs}\nskipped_roofs = {ref.skipped_roofs}\n"
        f"ground_points = {counts[1]}\nroof_points = {counts[2]}\nfacade_points = {counts[3]}\n")
    print(f"{ref.n_roofs} roof regions, {counts[3]} facade points")
    return 0


def cmd_register(args):
    res = run_pipeline(_scenario(args), stop_after="register", out_dir=args.out_dir)
    out = Path(args.out_dir)
    with open(out / "aerial.txt", "w") as fh:
        for m in res.aerial:
            M = " ".join(repr(float(v)) for v in m.pose.as_matrix().ravel())
            fh.write(f"{m.anchor} {m.inlier_fraction:.6f} {m.rms:.6f} {M}\n")
    with open(out / "loops.txt", "w") as fh:
        for m in res.loops:
            M = " ".join(repr(float(v)) for v in m.transform.as_matrix().ravel())
            fh.write(f"{m.i} {m.j} {m.inlier_fraction:.6f} {m.method} {M}\n")
    print(f"{len(res.submaps)} submaps, {len(res.aerial)} aerial and {len(res.loops)} loop measurements")
    return 0


def cmd_optimize(args):
    res = run_pipeline(_scenario(args), stop_after="optimize", out_dir=args.out_dir)
    print(f"LM {res.solve.termination} in {res.solve.iterations} iterations "
          f"(cost {res.solve.initial_cost:.6g} -> {res.solve.final_cost:.6g})")
    return 0


def cmd_run(args):
    res = run_pipeline(_scenario(args), out_dir=args.out_dir)
    if args.export_bundle:
        export_sequence(res, Path(args.out_dir) / "bundle", res.data.als)
    sys.stdout.write(res.report_text())
    return 0


def cmd_evaluate(args):
    lines = []
    with stage("evaluate"):
        if args.estimate and args.reference:
            _, est = read_trajectory_csv(args.estimate)
            _, ref = read_trajectory_csv(args.reference)
            a = ate(est, ref)
            err = np.array([rre_rte(g, e) for g, e in zip(ref, est)])
            lines += [f"ate.{k} = {v:.6g}" for k, v in a.items()]
            lines += [f"rre.mean_deg = {err[:, 0].mean():.6g}", f"rte.mean = {err[:, 1].mean():.6g}"]
        if args.queries and args.database:
            rec = recall_at_k(EmbeddingSet.load(args.queries), EmbeddingSet.load(args.database),
                              args.k, args.radius)
            lines += [f"recall@{k} = {v:.6g}" for k, v in rec.items()]
        if not lines:
            raise ValueError("give --estimate/--reference and/or --queries/--database")
    text = "\n".join(lines) + "\n"
    if args.out_dir:
        (_out(args) / "evaluation.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_project(args):
    with stage("load"):
        bundle = load_bundle(args.bundle)
    out = _out(args) / "overlays"
    out.mkdir(exist_ok=True)
    rows = range(len(bundle.entries)) if args.index is None else [args.index]
    cam, T_ext = bundle.calibration.camera, bundle.calibration.T_ext
    for i in rows:
        e, T = bundle.entries[i], bundle.poses[i]
        proj = project_als_to_image(bundle.load_patch(e.patch), T, T_ext, cam)
        (out / (Path(e.image).stem + ".ppm")).write_bytes(render_depth_overlay(proj, cam))
    print(f"wrote {len(rows)} overlay(s) to {out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="alsgt", description="ALS-referenced ground-truth trajectories")
    p.add_argument("--config", default="nominal_city",
                   help="scenario name or path to a scenario script (default: nominal_city)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out-dir", default="out", help="output directory (default: ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", help="render all sensor streams of a scenario").set_defaults(fn=cmd_simulate)
    e = sub.add_parser("extract", help="label ALS ground/roofs and complete façades")
    e.add_argument("--als", help="LAS file to use instead of the simulated ALS")
    e.add_argument("--seed-resolution", type=float, default=2.0)
    e.set_defaults(fn=cmd_extract)
    sub.add_parser("register", help="submaps, aerial and loop measurements").set_defaults(fn=cmd_register)
    sub.add_parser("optimize", help="assemble and solve the pose graph").set_defaults(fn=cmd_optimize)
    ev = sub.add_parser("evaluate", help="trajectory and retrieval metrics")
    ev.add_argument("--estimate")
    ev.add_argument("--reference")
    ev.add_argument("--queries")
    ev.add_argument("--database")
    ev.add_argument("--k", type=int, nargs="+", default=[1, 5, 20])
    ev.add_argument("--radius", type=float, default=20.0)
    ev.set_defaults(fn=cmd_evaluate)
    pr = sub.add_parser("project", help="depth overlays for a sequence bundle")
    pr.add_argument("bundle")
    pr.add_argument("--index", type=int, default=None)
    pr.set_defaults(fn=cmd_project)
    r = sub.add_parser("run", help="full pipeline with run report")
    r.add_argument("--export-bundle", action="store_true", help="also write a sequence bundle")
    r.set_defaults(fn=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (AlsgtError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
