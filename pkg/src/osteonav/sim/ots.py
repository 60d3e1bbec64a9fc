"""Optical tracking system model: 30 Hz frames, latency, seeded Gaussian noise, occlusion.

Noise magnitudes are RMS values of the 3-D error (translation in mm,
rotation angle in degrees), split evenly over the three axes.  Rotation
noise is applied about the tracker origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import RigidTransform, so3_exp

FRAME_RATE = 30.0


@dataclass(frozen=True)
class OtsModel:
    frame_rate: float = FRAME_RATE
    latency_frames: int = 1
    sigma_t: float = 0.1   # mm, 3-D RMS
    sigma_r: float = 0.05  # deg, RMS angle
    occlusions: tuple = ()  # ((t_start, t_end), ...) in seconds
    seed: int = 0

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_r < 0:
            raise ValueError("noise levels must be non-negative")
        if self.latency_frames < 0:
            raise ValueError("latency must be non-negative")
        object.__setattr__(self, "occlusions", tuple(tuple(map(float, o)) for o in self.occlusions))

    @classmethod
    def from_dict(cls, d) -> OtsModel:
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def to_dict(self):
        return {"frame_rate": self.frame_rate, "latency_frames": self.latency_frames,
                "sigma_t": self.sigma_t, "sigma_r": self.sigma_r,
                "occlusions": [list(o) for o in self.occlusions], "seed": self.seed}


@dataclass(frozen=True, eq=False)
class OtsMeasurement:
    pose: RigidTransform
    frame: int
    t: float  # time the frame is delivered
    tracker_id: int = 0


@dataclass(frozen=True)
class Occluded:
    frame: int
    t: float
    tracker_id: int = 0


def frame_index(model: OtsModel, t: float) -> int:
    # small slack so t = k / rate lands on frame k despite round-off
    return int(np.floor(t * model.frame_rate + 1e-9))


def perturb(pose: RigidTransform, rng: np.random.Generator, sigma_t: float, sigma_r_deg: float):
    dt = rng.normal(0.0, sigma_t / np.sqrt(3.0), 3)
    dr = rng.normal(0.0, np.deg2rad(sigma_r_deg) / np.sqrt(3.0), 3)
    return RigidTransform(pose.rotation @ so3_exp(dr), pose.translation + dt)


def ots_observe(true_pose, model: OtsModel, t: float, tracker_id: int = 0):
    """Measurement available at time t.

    ``true_pose`` is either a RigidTransform (static) or a callable of time.
    The reported pose is the true pose `latency_frames` frames earlier,
    sampled on the frame grid, with noise drawn from a generator keyed by
    (seed, tracker_id, frame) so results do not depend on call order.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    f = frame_index(model, t)
    t_frame = f / model.frame_rate
    for start, end in model.occlusions:
        if start <= t_frame < end:
            return Occluded(f, t_frame, tracker_id)
    t_sample = max(0.0, (f - model.latency_frames) / model.frame_rate)
    pose = true_pose(t_sample) if callable(true_pose) else true_pose
    if model.sigma_t > 0 or model.sigma_r > 0:
        rng = np.random.default_rng([model.seed, tracker_id, f])
        pose = perturb(pose, rng, model.sigma_t, model.sigma_r)
    return OtsMeasurement(pose, f, t_frame, tracker_id)
