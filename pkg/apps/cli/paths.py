"""
Camera paths for fly-throughs.

JSON, either a bare keyframe array or ``{"frame_rate": 24, "keyframes": [...]}``;
a keyframe is ``{"time": s, "position": [x, y, z], "look_at": [x, y, z]}``.
Poses between keyframes are interpolated linearly, position and look-at alike.
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

Vec3 = tuple[float, float, float]

DEFAULT_FRAME_RATE = 24.0


class CameraPathError(ValueError):
    pass


@dataclass(frozen=True)
class Keyframe:
    time: float
    position: Vec3
    look_at: Vec3


@dataclass(frozen=True)
class CameraPath:
    keyframes: tuple[Keyframe, ...]
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        if not self.keyframes:
            raise CameraPathError("a camera path needs at least one keyframe")
        if not self.frame_rate > 0:
            raise CameraPathError(f"frame rate must be positive, got {self.frame_rate}")
        times = [k.time for k in self.keyframes]
        for i, (a, b) in enumerate(zip(times, times[1:]), start=1):
            if not b > a:
                raise CameraPathError(
                    f"keyframe times must be strictly increasing (keyframe {i}: {a} then {b})")

    @property
    def duration(self) -> float:
        return self.keyframes[-1].time - self.keyframes[0].time

    @property
    def frame_count(self) -> int:
        return int(math.floor(self.duration * self.frame_rate + 1e-9)) + 1

    def frame_time(self, frame: int) -> float:
        return self.keyframes[0].time + frame / self.frame_rate

    def pose_at(self, time: float) -> tuple[Vec3, Vec3]:
        """(position, look_at) at ``time``, clamped to the path's ends."""
        keys = self.keyframes
        if time <= keys[0].time:
            return keys[0].position, keys[0].look_at
        if time >= keys[-1].time:
            return keys[-1].position, keys[-1].look_at
        times = [k.time for k in keys]
        i = int(np.searchsorted(times, time, side="right")) - 1
        a, b = keys[i], keys[i + 1]
        w = (time - a.time) / (b.time - a.time)

        def lerp(p, q):
            return tuple(float(x + (y - x) * w) for x, y in zip(p, q))

        return lerp(a.position, b.position), lerp(a.look_at, b.look_at)

    def poses(self):
        for frame in range(self.frame_count):
            yield self.pose_at(self.frame_time(frame))


def _vec3(value, what: str) -> Vec3:
    try:
        out = tuple(float(c) for c in value)
    except (TypeError, ValueError):
        raise CameraPathError(f"{what} must be a list of three numbers") from None
    if len(out) != 3 or not all(math.isfinite(c) for c in out):
        raise CameraPathError(f"{what} must be three finite numbers")
    return out


def parse_camera_path(text: str, frame_rate: Optional[float] = None) -> CameraPath:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CameraPathError(f"invalid JSON: {e}") from None
    rate = DEFAULT_FRAME_RATE
    if isinstance(data, dict):
        rate = data.get("frame_rate", rate)
        data = data.get("keyframes")
    if not isinstance(data, list):
        raise CameraPathError("expected a keyframe array")

    keyframes = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise CameraPathError(f"keyframe {i} is not an object")
        try:
            time = float(item["time"])
            keyframes.append(Keyframe(
                time=time,
                position=_vec3(item["position"], f"keyframe {i} position"),
                look_at=_vec3(item["look_at"], f"keyframe {i} look_at"),
            ))
        except CameraPathError:
            raise
        except KeyError as e:
            raise CameraPathError(f"keyframe {i} is missing {e}") from None
        except (TypeError, ValueError):
            raise CameraPathError(f"keyframe {i} time is not a number") from None
    try:
        rate = float(frame_rate if frame_rate is not None else rate)
    except (TypeError, ValueError):
        raise CameraPathError(f"frame rate {rate!r} is not a number") from None
    return CameraPath(tuple(keyframes), rate)


def load_camera_path(path: Union[str, Path], frame_rate: Optional[float] = None) -> CameraPath:
    path = Path(path)
    if not path.exists():
        raise CameraPathError(f"camera path {path} not found")
    return parse_camera_path(path.read_text(encoding="utf-8"), frame_rate)
