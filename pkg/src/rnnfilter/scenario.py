"""Synthetic range/bearing multi-target scenario with Poisson clutter.

Steps are numbered ``1..steps``. A target exists from ``birth_step`` through
``death_step`` inclusive; at its birth step it sits at ``position`` and every
later step it first rotates its velocity by the segment's turn rate and then
moves by it. After its last segment a target keeps its final velocity.
"""
import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rnnfilter.lstm import ConfigError

STREAMS = ("weights", "noise", "detect", "clutter", "shuffle")


def streams(seed):
    """Independent named generators derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass(frozen=True)
class Segment:
    steps: int
    velocity: tuple
    turn_rate: float = 0.0


@dataclass(frozen=True)
class TargetScript:
    birth_step: int
    death_step: int
    position: tuple
    segments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "segments", tuple(
            s if isinstance(s, Segment) else Segment(int(s["steps"]), tuple(map(float, s["velocity"])),
                                                     float(s.get("turn_rate", 0.0)))
            for s in self.segments
        ))
        if not self.birth_step < self.death_step:
            raise ConfigError([("birth_step/death_step",
                                f"need birth_step < death_step, got {self.birth_step}, {self.death_step}")])

    def trajectory(self):
        """Positions for steps ``birth_step..death_step`` as a dict step -> (x, y)."""
        pos = np.array(self.position, dtype=np.float64)
        out = {self.birth_step: pos.copy()}
        vel = np.zeros(2)
        plan = [n for n, seg in enumerate(self.segments) for _ in range(seg.steps)]
        current = None
        for k in range(self.birth_step + 1, self.death_step + 1):
            idx = k - self.birth_step - 1
            if idx < len(plan):
                seg = self.segments[plan[idx]]
                if plan[idx] != current:
                    current = plan[idx]
                    vel = np.array(seg.velocity, dtype=np.float64)
                if seg.turn_rate:
                    cw, sw = math.cos(seg.turn_rate), math.sin(seg.turn_rate)
                    vel = np.array([cw * vel[0] - sw * vel[1], sw * vel[0] + cw * vel[1]])
            pos = pos + vel
            out[k] = pos.copy()
        return out


@dataclass(frozen=True)
class SensorModel:
    sigma_r: float = 10.0
    sigma_theta: float = math.pi / 90
    noise: bool = True
    p_detect: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        problems = []
        if not self.sigma_r > 0:
            problems.append(("sigma_r", "must be > 0"))
        if not self.sigma_theta > 0:
            problems.append(("sigma_theta", "must be > 0"))
        if not 0 <= self.p_detect <= 1:
            problems.append(("p_detect", "must lie in [0, 1]"))
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class ClutterModel:
    lambda_c: float = 20.0
    range_interval: tuple = (0.0, 1414.0)
    azimuth_interval: tuple = (-math.pi, math.pi)

    def __post_init__(self):
        problems = []
        if not self.lambda_c >= 0:
            problems.append(("lambda_c", f"must be >= 0, got {self.lambda_c!r}"))
        lo, hi = self.range_interval
        if not 0 <= lo < hi:
            problems.append(("range_interval", f"need 0 <= low < high, got {self.range_interval}"))
        lo, hi = self.azimuth_interval
        if not lo < hi:
            problems.append(("azimuth_interval", f"need low < high, got {self.azimuth_interval}"))
        if problems:
            raise ConfigError(problems)


@dataclass
class Frame:
    step: int
    truth_ids: np.ndarray      # (n_truth,)
    truth: np.ndarray          # (n_truth, 2)
    meas: np.ndarray           # (N, 2) Cartesian, shuffled
    polar: np.ndarray          # (N, 2) (r, theta), same order as meas
    source: np.ndarray         # (N,) originating target id, -1 for clutter


@dataclass
class ScenarioTrace:
    frames: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.frames)

    def measurements(self):
        return [f.meas for f in self.frames]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for fr in self.frames:
                for tid, p in zip(fr.truth_ids, fr.truth):
                    r, th = measure(p, None, None)
                    w.writerow([fr.step, "truth", int(tid), repr(float(p[0])), repr(float(p[1])),
                                repr(r), repr(th)])
                for sid, z, (r, th) in zip(fr.source, fr.meas, fr.polar):
                    w.writerow([fr.step, "meas", int(sid), repr(float(z[0])), repr(float(z[1])),
                                repr(float(r)), repr(float(th))])


TRACE_COLUMNS = ("step", "kind", "target_id", "x", "y", "r", "theta")


def measure(p, sensor, rng):
    """Range and bearing of ``p`` from the origin, noisy unless ``sensor`` says otherwise.

    ``sensor=None`` or ``sensor.noise == False`` gives the exact values.
    """
    x, y = float(p[0]), float(p[1])
    if x == 0.0 and y == 0.0:
        raise ValueError("bearing is undefined at the sensor origin")
    r = math.hypot(x, y)
    theta = math.atan2(y, x)
    if sensor is not None and sensor.noise:
        r = max(0.0, r + sensor.sigma_r * rng.standard_normal())
        theta = theta + sensor.sigma_theta * rng.standard_normal()
    return r, theta


def to_cartesian(polar):
    r, theta = polar
    if r < 0:
        raise ValueError(f"range must be >= 0, got {r}")
    return np.array([r * math.cos(theta), r * math.sin(theta)])


def generate(scripts, sensor, clutter, steps, seed):
    if steps < 1:
        raise ValueError("need at least one step")
    rngs = streams(seed)
    paths = [s.trajectory() for s in scripts]
    trace = ScenarioTrace()
    for k in range(1, steps + 1):
        ids, truth, meas, polar, source = [], [], [], [], []
        for tid, path in enumerate(paths):
            if k not in path:
                continue
            p = path[k]
            ids.append(tid)
            truth.append(p)
            detected = rngs["detect"].random() < sensor.p_detect if sensor.p_detect < 1 else True
            if not detected:
                continue
            rt = measure(p, sensor, rngs["noise"])
            polar.append(rt)
            # noiseless detections are the position itself, not a round trip through polar
            meas.append(to_cartesian(rt) if sensor.noise else p.copy())
            source.append(tid)
        n_clutter = int(rngs["clutter"].poisson(clutter.lambda_c))
        for _ in range(n_clutter):
            r = rngs["clutter"].uniform(*clutter.range_interval)
            th = rngs["clutter"].uniform(*clutter.azimuth_interval)
            polar.append((r, th))
            meas.append(to_cartesian((r, th)))
            source.append(-1)
        order = rngs["shuffle"].permutation(len(meas))
        meas_arr = np.array(meas, dtype=np.float64).reshape(-1, 2)[order]
        polar_arr = np.array(polar, dtype=np.float64).reshape(-1, 2)[order]
        src_arr = np.array(source, dtype=np.int64)[order]
        trace.frames.append(Frame(
            step=k,
            truth_ids=np.array(ids, dtype=np.int64),
            truth=np.array(truth, dtype=np.float64).reshape(-1, 2),
            meas=meas_arr,
            polar=polar_arr,
            source=src_arr,
        ))
    return trace


@dataclass
class Scenario:
    """Contents of a scenario file."""

    scripts: list
    sensor: SensorModel
    clutter: ClutterModel
    steps: int
    scene: tuple = (-1000.0, 1000.0, -1000.0, 1000.0)

    def generate(self, seed, lambda_c=None, steps=None):
        clutter = self.clutter if lambda_c is None else ClutterModel(
            lambda_c, self.clutter.range_interval, self.clutter.azimuth_interval)
        return generate(self.scripts, self.sensor, clutter, steps or self.steps, seed)

    def check(self):
        """Return ``(field, message)`` problems (trajectories leaving the scene, ...)."""
        problems = []
        if self.steps < 1:
            problems.append(("steps", "must be >= 1"))
        x0, x1, y0, y1 = self.scene
        for n, s in enumerate(self.scripts):
            for k, p in s.trajectory().items():
                if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                    problems.append((f"targets[{n}]", f"leaves the scene at step {k}: {tuple(p)}"))
                    break
        return problems

    def to_dict(self):
        return {
            "steps": self.steps,
            "scene": list(self.scene),
            "sensor": {k: v for k, v in asdict(self.sensor).items() if k != "origin"},
            "clutter": {
                "lambda_c": self.clutter.lambda_c,
                "range": list(self.clutter.range_interval),
                "azimuth": list(self.clutter.azimuth_interval),
            },
            "targets": [
                {
                    "birth_step": s.birth_step,
                    "death_step": s.death_step,
                    "position": list(s.position),
                    "segments": [
                        {"steps": g.steps, "velocity": list(g.velocity), "turn_rate": g.turn_rate}
                        for g in s.segments
                    ],
                }
                for s in self.scripts
            ],
        }

    def script_hash(self):
        """Hash of everything except the clutter intensity."""
        d = self.to_dict()
        d["clutter"].pop("lambda_c")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        sensor = SensorModel(**{k: v for k, v in d.get("sensor", {}).items()})
        c = d.get("clutter", {})
        clutter = ClutterModel(
            float(c.get("lambda_c", 20.0)),
            tuple(c.get("range", (0.0, 1414.0))),
            tuple(c.get("azimuth", (-math.pi, math.pi))),
        )
        scripts = [
            TargetScript(int(t["birth_step"]), int(t["death_step"]), tuple(t["position"]),
                         tuple(t.get("segments", ())))
            for t in d.get("targets", [])
        ]
        return cls(scripts, sensor, clutter, int(d["steps"]), tuple(d.get("scene", cls.scene)))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_SCENARIO = Path(__file__).parent / "data" / "default_scenario.json"
