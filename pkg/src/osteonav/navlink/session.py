"""Session rules on top of the codec, independent of any transport or clock."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import StaleMeasurement
from ..geometry import RigidTransform
from .codec import GainUpdate, Heartbeat, TargetUpdate, TrackerOccluded, TrackerPose, encode_frame

POSE_RATE_HZ = 30.0
HEARTBEAT_PERIOD_S = 1.0
MAX_MISSED_HEARTBEATS = 3
MAX_POSE_AGE_S = 0.100


class NavSender:
    """Navigation side: stamps outgoing messages with per-stream sequence numbers."""

    def __init__(self, tracker_id=0):
        self.tracker_id = tracker_id
        self._pose_seq = 0
        self._hb_seq = 0

    def pose(self, t_ns: int, pose: RigidTransform | None) -> bytes:
        seq, self._pose_seq = self._pose_seq, self._pose_seq + 1
        if pose is None:
            return encode_frame(TrackerOccluded(self.tracker_id, seq, t_ns))
        return encode_frame(TrackerPose(self.tracker_id, seq, t_ns, pose.to_pose7()))

    def heartbeat(self) -> bytes:
        seq, self._hb_seq = self._hb_seq, self._hb_seq + 1
        return encode_frame(Heartbeat(seq))


@dataclass
class SessionStats:
    poses: int = 0
    occluded: int = 0
    heartbeats: int = 0
    out_of_order: int = 0
    zeroed_ticks: int = 0


class ControllerSession:
    """Controller side: tracks freshness and gates every command.

    ``now`` is the receiver's clock in seconds; sender timestamps are only
    carried through, never compared against it.
    """

    def __init__(self, start: float = 0.0, tracker_id: int = 0,
                 max_pose_age=MAX_POSE_AGE_S, max_missed=MAX_MISSED_HEARTBEATS):
        self.tracker_id = tracker_id
        self.max_pose_age = max_pose_age
        self.max_missed = max_missed
        self.stats = SessionStats()
        self.pose: RigidTransform | None = None
        self.pose_t_ns: int | None = None
        self.target: RigidTransform | None = None
        self.gains = None
        self._pose_seq = -1
        self._hb_seq = -1
        self._pose_rx: float | None = None
        self._hb_rx = start

    def receive(self, msg, now: float) -> bool:
        """Apply one message; returns False if it was dropped."""
        if isinstance(msg, (TrackerPose, TrackerOccluded)):
            if msg.id != self.tracker_id:
                return False
            if msg.seq <= self._pose_seq:
                self.stats.out_of_order += 1
                return False
            self._pose_seq = msg.seq
            if isinstance(msg, TrackerOccluded):
                self.stats.occluded += 1
                self.pose = None
                return True
            self.pose = RigidTransform.from_pose7(msg.pose)
            self.pose_t_ns = msg.t_ns
            self._pose_rx = now
            self.stats.poses += 1
        elif isinstance(msg, Heartbeat):
            if msg.seq <= self._hb_seq:
                self.stats.out_of_order += 1
                return False
            self._hb_seq = msg.seq
            self._hb_rx = now
            self.stats.heartbeats += 1
        elif isinstance(msg, TargetUpdate):
            self.target = RigidTransform.from_pose7(msg.pose)
        elif isinstance(msg, GainUpdate):
            self.gains = msg.to_gains()
        return True

    def missed_heartbeats(self, now: float) -> int:
        return math.floor((now - self._hb_rx) / HEARTBEAT_PERIOD_S + 1e-12)

    def pose_age(self, now: float) -> float:
        return math.inf if self._pose_rx is None else now - self._pose_rx

    def stale_reason(self, now: float) -> str | None:
        if self.missed_heartbeats(now) > self.max_missed:
            return f"{self.missed_heartbeats(now)} heartbeats missed"
        if self.pose is None:
            return "no patient tracker pose"
        if self.pose_age(now) > self.max_pose_age:
            return f"pose is {1e3 * self.pose_age(now):.0f} ms old"
        return None

    def fresh_pose(self, now: float) -> RigidTransform:
        reason = self.stale_reason(now)
        if reason:
            raise StaleMeasurement(reason)
        return self.pose

    def gate(self, qdot, now: float) -> np.ndarray:
        """Pass the command through only while the data behind it is fresh."""
        if self.stale_reason(now) is not None:
            self.stats.zeroed_ticks += 1
            return np.zeros_like(np.asarray(qdot, float))
        return np.asarray(qdot, float)
