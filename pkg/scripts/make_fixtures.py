"""Write example inputs for the CLI: lens STLs, centre files, pose pairs, plan and scenarios."""
import argparse
import json
from pathlib import Path

import numpy as np

from osteonav.cli import transform_to_json
from osteonav.fixtures import DEFAULT_TRACKER_CENTERS, fiducial_scene
from osteonav.geometry import RigidTransform
from osteonav.ingest import write_ascii_stl, write_binary_stl
from osteonav.sim.experiments import collect_pose_pairs
from osteonav.sim.scenario import preset
from osteonav.sim.world import build_world, default_plan_points, random_configurations


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")
    print("wrote", path)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="fixtures")
    p.add_argument("--scenarios", default="scenarios")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    out, scn = Path(args.out), Path(args.scenarios)
    out.mkdir(parents=True, exist_ok=True)
    scn.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    img_T_tp = RigidTransform.from_rotvec([0.2, -0.1, 0.4], [95.0, 40.0, 70.0])
    mesh = fiducial_scene(pose=img_T_tp, noise=0.05, rng=rng)
    (out / "lenses_binary.stl").write_bytes(write_binary_stl(mesh))
    (out / "lenses_ascii.stl").write_bytes(write_ascii_stl(mesh))
    dump(out / "lenses_truth.json", {"centers": img_T_tp.apply(DEFAULT_TRACKER_CENTERS).tolist()})
    cam_T_tp = RigidTransform.from_rotvec([0.1, 0.3, -0.2], [20.0, -40.0, 950.0])
    cam = cam_T_tp.apply(DEFAULT_TRACKER_CENTERS) + rng.normal(0, 0.1, (4, 3))
    dump(out / "centers_cam.json", {"centers": cam.tolist()})
    dump(out / "tracker_model.json", {"centers": DEFAULT_TRACKER_CENTERS.tolist()})

    world = build_world()
    configs = random_configurations(rng, 10)
    for name, part in (("pairs.json", configs[:5]), ("test_pairs.json", configs[5:])):
        pairs = collect_pose_pairs(world, part, rng, 0.15, 0.05)
        dump(out / name, {"pairs": [{"robot": transform_to_json(pp.robot)["pose7"],
                                     "tracker": transform_to_json(pp.tracker)["pose7"]} for pp in pairs]})

    dump(scn / "plan.json", {"points_img": default_plan_points().tolist(),
                             "tracker_model": {"centers": DEFAULT_TRACKER_CENTERS.tolist()}})
    for name in ("step", "sinusoid", "random_walk", "drilling"):
        d = preset(name).to_dict()
        d["plan"] = "plan.json"
        dump(scn / f"{name}.json", d)


if __name__ == "__main__":
    main()
