"""Command-line entry point: ``osteonav <command> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.  Set OSTEONAV_LOG to a
logging level name (DEBUG, INFO, ...) for diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import PosePair, handeye_residual, solve_handeye
from .errors import OsteonavError
from .fiducial import TrackerModel, extract_centers, sort_centers
from .fixtures import DEFAULT_TRACKER_CENTERS
from .geometry import RigidTransform
from .ingest import PointCloud, read_stl_file, sample_vertices
from .registration import register_paired_points

log = logging.getLogger("osteonav")


def _dump(obj, out: str | None):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise OsteonavError(f"{path}: invalid JSON ({exc})") from None


def transform_to_json(t: RigidTransform):
    return {"matrix": t.as_matrix().tolist(), "pose7": list(t.to_pose7())}


def transform_from_json(v) -> RigidTransform:
    if isinstance(v, dict):
        v = v.get("matrix", v.get("pose7"))
    a = np.asarray(v, float)
    if a.shape == (7,):
        return RigidTransform.from_pose7(a)
    if a.shape == (4, 4):
        return RigidTransform.from_matrix(a)
    raise OsteonavError(f"cannot read a transform from shape {a.shape}")


def _centers_from_json(d):
    c = np.asarray(d["centers"] if isinstance(d, dict) else d, float)
    if c.ndim != 2 or c.shape[1] != 3:
        raise OsteonavError("centers must be a list of [x, y, z]")
    return c


def _vector(text):
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return np.array(v)


def _seed_range(text):
    a, sep, b = text.partition("..")
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None
    if not sep or hi < lo:
        raise argparse.ArgumentTypeError(f"expected a..b with a <= b, got {text!r}")
    return range(lo, hi + 1)


# --- commands ---------------------------------------------------------------

def cmd_fit_fiducials(args):
    clouds = []
    for path in args.stl:
        mesh = read_stl_file(path)
        clouds.append(sample_vertices(mesh, visible_from=args.visible_from).points)
    cloud = PointCloud(np.vstack(clouds))
    fits = extract_centers(cloud, args.k, seed=args.seed)
    centers = np.array([f.center for f in fits])
    order = list(range(len(fits)))
    disc = None
    if args.k == 4:
        model = TrackerModel(_centers_from_json(_load_json(args.model)) if args.model
                             else DEFAULT_TRACKER_CENTERS)
        perm, disc = sort_centers(centers, model)
        order = list(perm)
    _dump({"schema": "osteonav/centers@1", "frame": "image",
           "centers": centers[order].tolist(),
           "radii_mm": [fits[i].radius for i in order],
           "fit_rms_mm": [fits[i].rms_residual for i in order],
           "sorting_discrepancy_mm": disc}, args.out)
    return 0


def cmd_register(args):
    img = _centers_from_json(_load_json(args.img))
    cam = _centers_from_json(_load_json(args.cam))
    reg = register_paired_points(img, cam)
    _dump({"schema": "osteonav/registration@1", "camera_T_img": transform_to_json(reg.transform),
           "residuals_mm": reg.residuals.tolist(), "rms_mm": reg.rms}, args.out)
    print("residuals: " + ", ".join(f"{r:.2f}mm" for r in reg.residuals), file=sys.stderr)
    return 0


def _pairs_from_json(d):
    items = d["pairs"] if isinstance(d, dict) else d
    return [PosePair(transform_from_json(p["robot"]), transform_from_json(p["tracker"]),
                     p.get("t_robot"), p.get("t_tracker")) for p in items]


def cmd_calibrate(args):
    pairs = _pairs_from_json(_load_json(args.pairs))
    result = solve_handeye(pairs)
    out = {"schema": "osteonav/handeye@1", "base_T_camera": transform_to_json(result.x),
           "max_residual_mm": result.max_translation_residual}
    if args.test:
        res = handeye_residual(result.x, _pairs_from_json(_load_json(args.test)))
        out["test_residuals_mm"] = res.tolist()
        out["max_test_residual_mm"] = float(res.max())
    _dump(out, args.out)
    return 0


def _scenario(args):
    from .sim.scenario import load_config, preset
    if args.scenario:
        cfg = load_config(args.scenario)
    else:
        cfg = preset(args.preset or "static")
    if args.seed is not None:
        cfg = _with_seed(cfg, args.seed)
    if getattr(args, "duration", None):
        cfg = replace(cfg, duration=args.duration)
    return cfg


def _with_seed(cfg, seed):
    ph = cfg.phantom
    if ph.kind == "random_walk":
        ph = replace(ph, seed=seed)
    return replace(cfg, seed=seed, phantom=ph)


def _simulate_one(cfg, out_dir):
    from .sim.scenario import run_scenario
    report = run_scenario(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "summary.json").write_text(report.summary_json() + "\n")
    return report.summary


def cmd_simulate(args):
    cfg = _scenario(args)
    out = Path(args.out)
    if args.seeds is None:
        s = _simulate_one(cfg, out)
        log.info("drilling error %.3f mm", s["drilling_error_mm"])
        return 0
    jobs = {seed: (_with_seed(cfg, seed), out / f"seed_{seed}") for seed in args.seeds}
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = {seed: pool.submit(_simulate_one, *job) for seed, job in jobs.items()}
        summaries = {seed: f.result() for seed, f in futures.items()}
    errs = [summaries[s]["drilling_error_mm"] for s in sorted(summaries)]
    _dump({"schema": "osteonav/batch@1", "seeds": sorted(summaries),
           "drilling_error_mm": errs, "mean_drilling_error_mm": float(np.mean(errs)),
           "max_drilling_error_mm": float(np.max(errs))}, str(out / "batch.json"))
    return 0


def cmd_serve_nav(args):
    from .navlink.transport import NavStream, parse_address, serve_nav
    from .sim.ots import OtsMeasurement, ots_observe
    from .sim.scenario import prepare
    cfg = _scenario(args)
    setup = prepare(cfg)

    def source(t):
        m = ots_observe(setup.cam_T_tp, setup.ots, t)
        return m.pose if isinstance(m, OtsMeasurement) else None

    host, port = parse_address(args.listen)
    stream = NavStream(source, cfg.duration, setup.tp_T_target_est, cfg.gains)
    log.info("serving navigation stream on %s:%d", host, port)
    asyncio.run(serve_nav(host, port, stream, connections=args.connections))
    return 0


def cmd_run_controller(args):
    from .navlink.transport import parse_address, run_session
    from .sim.scenario import CSV_COLUMNS, DrillController, prepare
    cfg = _scenario(args)
    setup = prepare(cfg)
    ctrl = DrillController(setup.world.arm, cfg.gains, cfg.limits, cfg.control_rate)
    rows = []
    state = {"seq": None, "target": None, "vel": np.zeros(3)}

    def tick(session, now):
        if now > cfg.duration:
            return True
        if session.gains is not None:
            ctrl.gains = session.gains
        if session.stale_reason(now) is not None or session.target is None:
            session.gate(np.zeros(7), now)  # counted as a zeroed tick
            ctrl.hold()
            return False
        target = setup.handeye.x @ session.pose @ session.target
        if session.pose_t_ns != state["seq"]:
            if state["target"] is not None and state["seq"] is not None:
                dt = (session.pose_t_ns - state["seq"]) * 1e-9
                state["vel"] = (target.translation - state["target"].translation) / dt if dt > 0 else np.zeros(3)
            state["seq"], state["target"] = session.pose_t_ns, target
        f = cfg.force_at(now)
        _, (planar, rot, axial) = ctrl.step(target, state["vel"], f, cfg.lateral_force, now)
        rows.append((now, planar, rot, f, axial))
        return False

    host, port = parse_address(args.connect)
    session = asyncio.run(run_session(host, port, tick, cfg.control_rate, timeout=cfg.duration + 5.0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)] + [f"{r[0]:.4f},{r[1]:.6f},{r[2]:.8f},{r[3]:.4f},{r[4]:.6f}" for r in rows]
    (out / "controller.csv").write_text("\n".join(lines) + "\n")
    s = session.stats
    _dump({"schema": "osteonav/controller-run@1", "active_ticks": len(rows),
           "zeroed_ticks": s.zeroed_ticks, "poses": s.poses, "occluded": s.occluded,
           "heartbeats": s.heartbeats, "out_of_order": s.out_of_order,
           "decode_errors": session.decode_errors,
           "final_planar_mm": rows[-1][1] if rows else None}, str(out / "controller.json"))
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osteonav", description="Robot-assisted drilling navigation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit-fiducials", help="find lens centres in STL segmentations")
    f.add_argument("stl", nargs="+")
    f.add_argument("--out")
    f.add_argument("--k", type=int, default=4, help="number of lenses (default 4)")
    f.add_argument("--model", help="tracker model JSON with 'centers'")
    f.add_argument("--visible-from", type=_vector, metavar="X,Y,Z")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit_fiducials)

    r = sub.add_parser("register", help="paired-point registration image -> camera")
    r.add_argument("--img", required=True)
    r.add_argument("--cam", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_register)

    c = sub.add_parser("calibrate", help="hand-eye calibration from pose pairs")
    c.add_argument("--pairs", required=True)
    c.add_argument("--test")
    c.add_argument("--out")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_calibrate)

    def scenario_args(q):
        src = q.add_mutually_exclusive_group()
        src.add_argument("--scenario", help="scenario JSON")
        src.add_argument("--preset", help="built-in scenario name")
        q.add_argument("--seed", type=int)
        q.add_argument("--duration", type=float)

    s = sub.add_parser("simulate", help="run a closed-loop drilling scenario")
    scenario_args(s)
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", type=_seed_range, metavar="A..B")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("serve-nav", help="navigation process: stream tracker poses")
    scenario_args(n)
    n.add_argument("--listen", default="127.0.0.1:5757")
    n.add_argument("--connections", type=int, default=1)
    n.set_defaults(func=cmd_serve_nav)

    k = sub.add_parser("run-controller", help="robot process: consume poses and drive the arm")
    scenario_args(k)
    k.add_argument("--connect", default="127.0.0.1:5757")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_run_controller)
    return p


def main(argv=None) -> int:
    level = logging.getLevelName(os.environ.get("OSTEONAV_LOG", "WARNING").upper())
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.func(args)
    except (OsteonavError, OSError, ValueError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
