"""End-to-end drilling error with the component error budget injected."""
import argparse

import numpy as np

from osteonav.sim.scenario import preset, run_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=5)
    args = p.parse_args()
    errs = []
    for seed in range(args.seeds):
        s = run_scenario(preset("drilling", seed)).summary
        errs.append(s["drilling_error_mm"])
        print(f"seed {seed}: drilling error {s['drilling_error_mm']:.2f} mm | registration rms "
              f"{s['registration_rms_mm']:.2f} mm | calibration max residual "
              f"{s['calibration_max_residual_mm']:.2f} mm | depth {s['max_depth_mm']:.1f} mm")
    print(f"mean {np.mean(errs):.2f} mm, max {np.max(errs):.2f} mm")
    exact = run_scenario(preset("noiseless")).summary["drilling_error_mm"]
    print(f"noiseless drilling error {exact:.2e} mm")


if __name__ == "__main__":
    main()
