"""Deterministic synthetic world and 2D lidar model.

Scenes are made of axis-aligned boxes (hit from inside or outside, so a box
can be a room or an obstacle) and infinite planes ``n . p = d``. All noise
is drawn from numpy's PCG64 generator; each noise source gets its own
substream ``SeedSequence(seed, spawn_key=(index,))`` so adding one source
never shifts the draws of another.

On the trolley, the mapping scanner is assumed to sweep a vertical plane
perpendicular to the direction of travel; real mountings may differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from lidarmap import geometry
from lidarmap.errors import InputDomainError, ParameterError
from lidarmap.geometry import (
    TWO_PI,
    GaussianScalarEstimate,
    PositionEstimate,
    ScannerPose,
    ScanSample,
    TrolleyPose,
    wrap_pi,
    wrap_two_pi,
)
from lidarmap.octree import BoundingBox, OccupancyOctree, from_dense

# substream indices
RANGE_NOISE, YAW_A, YAW_B, GYRO, POSITION = range(5)


def substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    id: int = 0

    def __post_init__(self) -> None:
        if not all(s > 0 for s in self.size):
            raise InputDomainError(f"box sizes must be positive, got {self.size}")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center, float) - 0.5 * np.asarray(self.size, float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center, float) + 0.5 * np.asarray(self.size, float)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Nearest positive hit distance per ray (inf on miss), slab method."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (self.lo - origins) * inv
            t2 = (self.hi - origins) * inv
        # a ray parallel to a slab is inside it for all t or never
        par = dirs == 0.0
        inside = (origins >= self.lo) & (origins <= self.hi)
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        tnear = np.max(tmin, axis=1)
        tfar = np.min(tmax, axis=1)
        hit = tnear <= tfar
        t = np.where(tnear > 0, tnear, tfar)
        return np.where(hit & (t > 0), t, np.inf)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = self.lo, self.hi
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        d_out = np.linalg.norm(outside, axis=1)
        d_in = np.min(np.minimum(pts - lo, hi - pts), axis=1)
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.where(inside, d_in, d_out)

    def shell_mask(self, lo_idx, shape, resolution: float) -> np.ndarray:
        """Voxels (half-open cells) touching the box surface."""
        mask = np.zeros(shape, dtype=bool)
        clo = [_cell(v, resolution) for v in self.lo]
        chi = [_cell(v, resolution) for v in self.hi]
        for axis in range(3):
            for face in (clo[axis], chi[axis]):
                sl = []
                for a in range(3):
                    first, last = (face, face) if a == axis else (clo[a], chi[a])
                    s = max(first - lo_idx[a], 0)
                    e = min(last + 1 - lo_idx[a], shape[a])
                    sl.append(slice(s, max(s, e)))
                mask[tuple(sl)] = True
        return mask


def _cell(v: float, resolution: float) -> int:
    # values a hair below a cell boundary are treated as on it
    return math.floor(v / resolution + 1e-9)


@dataclass(frozen=True)
class Plane:
    """Infinite plane ``normal . p = d`` (normal stored unit length)."""

    normal: tuple[float, float, float]
    d: float
    id: int = 0

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, float)
        norm = float(np.linalg.norm(n))
        if norm == 0.0 or not math.isfinite(norm):
            raise InputDomainError("plane normal must be non-zero")
        object.__setattr__(self, "normal", tuple(float(v) for v in n / norm))
        object.__setattr__(self, "d", float(self.d) / norm)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.d - origins @ n) / denom
        return np.where((denom != 0.0) & (t > 0), t, np.inf)

    def distance(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(pts @ np.asarray(self.normal) - self.d)

    def shell_mask(self, lo_idx, shape, resolution: float) -> np.ndarray:
        n = np.asarray(self.normal)
        axes = [(np.arange(shape[a]) + lo_idx[a] + 0.5) * resolution for a in range(3)]
        c = (
            axes[0][:, None, None] * n[0]
            + axes[1][None, :, None] * n[1]
            + axes[2][None, None, :] * n[2]
        )
        h = 0.5 * resolution * float(np.sum(np.abs(n)))
        return (c - h <= self.d) & (self.d < c + h)


Primitive = Box | Plane


@dataclass(frozen=True)
class Scene:
    primitives: tuple[Primitive, ...]
    bounds: BoundingBox

    def __post_init__(self) -> None:
        if not self.primitives:
            raise InputDomainError("scene is empty")

    def raycast_batch(self, origins, dirs) -> np.ndarray:
        origins = np.asarray(origins, float).reshape(-1, 3)
        dirs = np.asarray(dirs, float).reshape(-1, 3)
        best = np.full(len(origins), np.inf)
        for prim in self.primitives:
            best = np.minimum(best, prim.intersect(origins, dirs))
        return best

    def distance_to_surfaces(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, 3)
        return np.min([p.distance(pts) for p in self.primitives], axis=0)


def raycast(scene: Scene, origin, direction) -> float | None:
    """Distance to the nearest surface along a unit ray, or None on a miss."""
    d = np.asarray(direction, float)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise InputDomainError("ray direction must be a unit vector")
    t = float(scene.raycast_batch(origin, d)[0])
    return t if math.isfinite(t) else None


# -- sensor ------------------------------------------------------------------


@dataclass(frozen=True)
class SensorModel:
    min_range: float
    max_range: float
    samples_per_rev: int
    rev_frequency: float
    relative_sigma: float = 0.02
    absolute_sigma_floor: float = 0.03

    def __post_init__(self) -> None:
        if not 0 < self.min_range < self.max_range:
            raise ParameterError("sensor needs 0 < min_range < max_range")
        if self.samples_per_rev < 1 or self.rev_frequency <= 0:
            raise ParameterError("sensor needs samples_per_rev >= 1 and rev_frequency > 0")
        if self.relative_sigma < 0 or self.absolute_sigma_floor < 0:
            raise ParameterError("noise parameters must be non-negative")

    @property
    def sample_rate(self) -> float:
        return self.samples_per_rev * self.rev_frequency

    def sigma(self, true_range):
        return np.maximum(self.absolute_sigma_floor, self.relative_sigma * np.asarray(true_range))

    def noiseless(self) -> "SensorModel":
        return replace(self, relative_sigma=0.0, absolute_sigma_floor=0.0)


# (samples/s, min range, software max range, frequency band)
SENSOR_PRESETS = {
    "sweep_like": (1000, 0.1, 10.0, (1.0, 10.0)),
    "rplidar_like": (4000, 0.15, 6.0, (1.0, 11.0)),
}


def sensor_preset(name: str, rev_frequency: float = 1.0, **overrides) -> SensorModel:
    try:
        rate, lo, hi, (fmin, fmax) = SENSOR_PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown sensor preset {name!r}") from None
    if not fmin <= rev_frequency <= fmax:
        raise ParameterError(f"{name} rotates at {fmin}-{fmax} Hz, got {rev_frequency}")
    base = dict(
        min_range=lo,
        max_range=hi,
        samples_per_rev=int(round(rate / rev_frequency)),
        rev_frequency=rev_frequency,
    )
    base.update(overrides)
    return SensorModel(**base)


def noisy_ranges(model: SensorModel, true_ranges, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`apply_noise`; dropouts come back as NaN.

    One normal draw is consumed per input, dropout or not, so the stream
    position never depends on the scene.
    """
    r = np.asarray(true_ranges, dtype=np.float64)
    z = rng.standard_normal(r.shape)
    with np.errstate(invalid="ignore"):
        out = r + z * model.sigma(np.where(np.isfinite(r), r, 0.0))
        valid = (r >= model.min_range) & (r <= model.max_range)
    return np.where(valid, out, np.nan)


def apply_noise(model: SensorModel, true_range: float, rng: np.random.Generator) -> float | None:
    """Measured range for one return, or None for a dropout."""
    if not true_range > 0:
        raise InputDomainError("true range must be positive")
    v = float(noisy_ranges(model, [true_range], rng)[0])
    return None if math.isnan(v) else v


# -- static scans --------------------------------------------------------------


def check_motor_step(dphi: float) -> int:
    """Number of steps per full turn; ``dphi`` must divide 2*pi evenly."""
    if not dphi > 0:
        raise ParameterError(f"motor step must be positive, got {dphi}")
    n = TWO_PI / dphi
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ParameterError(f"motor step {dphi} does not divide a full turn")
    return int(round(n))


def simulate_static_scan(
    scene: Scene,
    pose: ScannerPose,
    model: SensorModel,
    motor_step: float,
    revolutions: int,
    seed: int = 0,
    t0: float = 0.0,
) -> list[ScanSample]:
    """Scan from a fixed station while the motor turns the scan plane.

    Each revolution sweeps bearings ``k * 2*pi / samples_per_rev``. The motor
    steps by ``motor_step`` while the beam crosses bearing pi, so bearings
    above pi already see the new yaw; the next revolution starts there.
    """
    check_motor_step(motor_step)
    if revolutions < 0:
        raise ParameterError("revolutions must be non-negative")
    n = model.samples_per_rev
    k = np.arange(n)
    bearings = k * (TWO_PI / n)
    rev = np.repeat(np.arange(revolutions), n)
    theta = np.tile(bearings, revolutions)
    start_yaw = pose.yaw + rev * motor_step
    yaw = np.where(theta <= math.pi, start_yaw, start_yaw + motor_step)
    s = np.sin(theta)
    dirs = np.stack([-s * np.sin(yaw), s * np.cos(yaw), np.cos(theta)], axis=1)
    origins = np.broadcast_to(np.asarray(pose.origin, float), dirs.shape)
    ranges = noisy_ranges(model, scene.raycast_batch(origins, dirs), substream(seed, RANGE_NOISE))
    times = t0 + (rev + np.tile(k, revolutions) / n) / model.rev_frequency
    return [
        ScanSample(float(t), float(th), float(r), wrap_two_pi(float(y0)), motor_step)
        for t, th, r, y0 in zip(times, theta, ranges, start_yaw)
    ]


# -- moving platform -----------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySpec:
    """Piecewise-linear trajectory through ``(x, y, yaw, t)`` waypoints."""

    waypoints: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self) -> None:
        wps = tuple(tuple(float(v) for v in w) for w in self.waypoints)
        if not wps:
            raise ParameterError("trajectory needs at least one waypoint")
        if any(len(w) != 4 for w in wps):
            raise ParameterError("waypoints are (x, y, yaw, t)")
        if any(b[3] <= a[3] for a, b in zip(wps, wps[1:])):
            raise ParameterError("waypoint times must be strictly increasing")
        object.__setattr__(self, "waypoints", wps)

    @property
    def t_start(self) -> float:
        return self.waypoints[0][3]

    @property
    def t_end(self) -> float:
        return self.waypoints[-1][3]

    def pose_at(self, t: float) -> TrolleyPose:
        x, y, yaw = self.arrays_at(np.array([t]))
        return TrolleyPose(float(x[0]), float(y[0]), float(yaw[0]), t)

    def arrays_at(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.asarray(self.waypoints)
        if len(w) == 1:
            ones = np.ones_like(t)
            return w[0, 0] * ones, w[0, 1] * ones, wrap_pi(w[0, 2]) * ones
        # unwrap yaw so interpolation takes the short way round
        yaw = np.concatenate([[w[0, 2]], w[0, 2] + np.cumsum([wrap_pi(d) for d in np.diff(w[:, 2])])])
        x = np.interp(t, w[:, 3], w[:, 0])
        y = np.interp(t, w[:, 3], w[:, 1])
        th = np.interp(t, w[:, 3], yaw)
        return x, y, math.pi - np.mod(math.pi - th, TWO_PI)

    def yaw_rate_at(self, t: np.ndarray) -> np.ndarray:
        w = np.asarray(self.waypoints)
        if len(w) == 1:
            return np.zeros_like(t)
        rates = np.array([wrap_pi(d) for d in np.diff(w[:, 2])]) / np.diff(w[:, 3])
        seg = np.clip(np.searchsorted(w[:, 3], t, side="right") - 1, 0, len(rates) - 1)
        return rates[seg]


@dataclass(frozen=True)
class TrolleyNoise:
    yaw_a_sigma: float = 0.03
    yaw_b_sigma: float = 0.04
    gyro_drift_rate: float = 0.005
    gyro_noise: float = 0.002
    position_sigma: float = 0.02
    stream_rate: float = 50.0


@dataclass
class TrolleyRun:
    scan: list[ScanSample]
    yaw_a: list[GaussianScalarEstimate]
    yaw_b: list[GaussianScalarEstimate]
    yaw_drift: list[GaussianScalarEstimate]
    position: list[PositionEstimate]
    truth: list[TrolleyPose]
    mount_height: float = field(default=0.0)


VARIANCE_FLOOR = 1e-12


def simulate_trolley_run(
    scene: Scene,
    traj: TrajectorySpec,
    model: SensorModel,
    noise: TrolleyNoise = TrolleyNoise(),
    seed: int = 0,
    mount_height: float = 0.5,
    scan: bool = True,
) -> TrolleyRun:
    """Push a trolley along ``traj`` with the mapping scanner sweeping a
    vertical plane perpendicular to the heading.

    Emits the scan log, two noisy yaw streams (orientation filter and scan
    matcher stand-ins), an integrated-gyro yaw stream that drifts, a noisy
    position stream and the true poses.
    """
    b = scene.bounds
    for x, y, _, _ in traj.waypoints:
        if not (b.min_corner.x <= x <= b.max_corner.x and b.min_corner.y <= y <= b.max_corner.y):
            raise ParameterError(f"waypoint ({x}, {y}) lies outside the scene bounds")

    samples: list[ScanSample] = []
    if scan:
        n = model.samples_per_rev
        count = int(math.floor((traj.t_end - traj.t_start) * model.sample_rate + 1e-9)) + 1
        k = np.arange(count)
        times = traj.t_start + k / model.sample_rate
        theta = (k % n) * (TWO_PI / n)
        x, y, yaw = traj.arrays_at(times)
        s = np.sin(theta)
        dirs = np.stack([-s * np.sin(yaw), s * np.cos(yaw), np.cos(theta)], axis=1)
        origins = np.stack([x, y, np.full_like(x, mount_height)], axis=1)
        ranges = noisy_ranges(model, scene.raycast_batch(origins, dirs), substream(seed, RANGE_NOISE))
        samples = [
            ScanSample(float(t), float(th), float(r), 0.0, 0.0)
            for t, th, r in zip(times, theta, ranges)
        ]

    m = int(math.floor((traj.t_end - traj.t_start) * noise.stream_rate + 1e-9)) + 1
    ts = traj.t_start + np.arange(m) / noise.stream_rate
    x, y, yaw = traj.arrays_at(ts)
    dt = 1.0 / noise.stream_rate

    def yaw_stream(index: int, sigma: float) -> list[GaussianScalarEstimate]:
        z = substream(seed, index).standard_normal(m)
        var = max(sigma * sigma, VARIANCE_FLOOR)
        return [
            GaussianScalarEstimate(wrap_pi(float(v)), var, float(t))
            for v, t in zip(yaw + sigma * z, ts)
        ]

    yaw_a = yaw_stream(YAW_A, noise.yaw_a_sigma)
    yaw_b = yaw_stream(YAW_B, noise.yaw_b_sigma)

    # integrated gyro: true rate plus constant bias plus white rate noise
    rate = traj.yaw_rate_at(ts) + noise.gyro_drift_rate
    rate = rate + noise.gyro_noise / math.sqrt(dt) * substream(seed, GYRO).standard_normal(m)
    integ = yaw[0] + np.concatenate([[0.0], np.cumsum(rate[:-1] * dt)])
    drift_var = np.maximum(noise.gyro_noise**2 * (ts - ts[0]), VARIANCE_FLOOR)
    yaw_drift = [
        GaussianScalarEstimate(wrap_pi(float(v)), float(pv), float(t))
        for v, pv, t in zip(integ, drift_var, ts)
    ]

    zp = substream(seed, POSITION).standard_normal((m, 2))
    pvar = max(noise.position_sigma**2, VARIANCE_FLOOR)
    position = [
        PositionEstimate(float(px), float(py), pvar, float(t))
        for px, py, t in zip(x + noise.position_sigma * zp[:, 0], y + noise.position_sigma * zp[:, 1], ts)
    ]
    truth = [TrolleyPose(float(a), float(b_), float(c), float(t)) for a, b_, c, t in zip(x, y, yaw, ts)]
    return TrolleyRun(samples, yaw_a, yaw_b, yaw_drift, position, truth, mount_height)


# -- ground truth --------------------------------------------------------------


def surface_mask(scene: Scene, box: BoundingBox, resolution: float) -> tuple[np.ndarray, tuple]:
    lo, hi = box.index_range(resolution)
    shape = tuple(b - a for a, b in zip(lo, hi))
    mask = np.zeros(shape, dtype=bool)
    for prim in scene.primitives:
        mask |= prim.shell_mask(lo, shape, resolution)
    return mask, lo


def ground_truth_octree(scene: Scene, resolution: float, box: BoundingBox | None = None, **params) -> OccupancyOctree:
    """Occupied (upper clamp) where a voxel touches a surface, free (lower
    clamp) elsewhere inside ``box``, unknown outside it."""
    box = scene.bounds if box is None else box
    mask, lo = surface_mask(scene, box, resolution)
    values = np.where(mask, 1e9, -1e9)
    return from_dense(values, lo, resolution, **params)


# -- files ---------------------------------------------------------------------


def read_scene(path: str | Path) -> Scene:
    """Parse ``box cx cy cz sx sy sz`` / ``plane nx ny nz d`` / ``bounds ...`` records."""
    prims: list[Primitive] = []
    bounds = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            kind, vals = line[0], line[1:]
            try:
                nums = [float(v) for v in vals]
            except ValueError:
                raise InputDomainError(f"{path}:{lineno}: non-numeric field") from None
            if kind == "box" and len(nums) == 6:
                prims.append(Box(tuple(nums[:3]), tuple(nums[3:]), len(prims)))
            elif kind == "plane" and len(nums) == 4:
                prims.append(Plane(tuple(nums[:3]), nums[3], len(prims)))
            elif kind == "bounds" and len(nums) == 6:
                bounds = BoundingBox(tuple(nums[:3]), tuple(nums[3:]))
            else:
                raise InputDomainError(f"{path}:{lineno}: bad record {raw.strip()!r}")
    return make_scene(prims, bounds)


def make_scene(prims: Sequence[Primitive], bounds: BoundingBox | None = None) -> Scene:
    if bounds is None:
        boxes = [p for p in prims if isinstance(p, Box)]
        if not boxes:
            raise InputDomainError("scene without boxes needs an explicit bounds record")
        lo = np.min([b.lo for b in boxes], axis=0)
        hi = np.max([b.hi for b in boxes], axis=0)
        bounds = BoundingBox(tuple(lo), tuple(hi))
    return Scene(tuple(prims), bounds)


def write_scene(path: str | Path, scene: Scene) -> None:
    with open(path, "w") as fh:
        b = scene.bounds
        fh.write("bounds " + " ".join(f"{v:.9g}" for v in (*b.min_corner, *b.max_corner)) + "\n")
        for p in scene.primitives:
            if isinstance(p, Box):
                fh.write("box " + " ".join(f"{v:.9g}" for v in (*p.center, *p.size)) + "\n")
            else:
                fh.write("plane " + " ".join(f"{v:.9g}" for v in (*p.normal, p.d)) + "\n")


def room_scene(size=(6.0, 5.0, 3.0), corner=(-2.95, -2.45, 0.0), obstacles=()) -> Scene:
    """A closed room (one box seen from inside) plus optional box obstacles."""
    c = tuple(a + 0.5 * s for a, s in zip(corner, size))
    prims: list[Primitive] = [Box(c, tuple(size), 0)]
    for i, (oc, osz) in enumerate(obstacles, 1):
        prims.append(Box(tuple(oc), tuple(osz), i))
    return make_scene(prims)


# -- sessions --------------------------------------------------------------------


def read_kv(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` comments, blank lines ignored)."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputDomainError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _tuples(text: str, width: tuple[int, ...]) -> tuple[tuple[float, ...], ...]:
    out = []
    for chunk in text.split(";"):
        vals = [float(v) for v in chunk.replace(",", " ").split()]
        if not vals:
            continue
        if len(vals) not in width:
            raise ParameterError(f"expected {' or '.join(map(str, width))} numbers in {chunk.strip()!r}")
        out.append(tuple(vals))
    return tuple(out)


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to replay a simulated capture session.

    ``stations`` are ``(x, y[, yaw])`` tripod positions for static mode;
    ``waypoints`` are ``(x, y, yaw, t)`` for trolley mode.
    """

    mode: str = "static"
    sensor: str = "sweep_like"
    rev_frequency: float = 2.0
    relative_sigma: float = 0.02
    absolute_sigma: float = 0.03
    seed: int = 0
    stations: tuple[tuple[float, ...], ...] = ((0.0, 0.0),)
    height: float = 1.0
    motor_step: float = TWO_PI / 72
    revolutions: int = 0
    waypoints: tuple[tuple[float, ...], ...] = ()
    yaw_a_sigma: float = TrolleyNoise.yaw_a_sigma
    yaw_b_sigma: float = TrolleyNoise.yaw_b_sigma
    gyro_drift_rate: float = TrolleyNoise.gyro_drift_rate
    gyro_noise: float = TrolleyNoise.gyro_noise
    position_sigma: float = TrolleyNoise.position_sigma
    stream_rate: float = TrolleyNoise.stream_rate

    def __post_init__(self) -> None:
        if self.mode not in ("static", "trolley"):
            raise ParameterError(f"mode must be static or trolley, got {self.mode!r}")
        if self.mode == "static":
            check_motor_step(self.motor_step)
            if not self.stations:
                raise ParameterError("static mode needs at least one station")
        elif len(self.waypoints) < 1:
            raise ParameterError("trolley mode needs waypoints")

    @property
    def full_turn_revolutions(self) -> int:
        return self.revolutions or check_motor_step(self.motor_step)

    def sensor_model(self) -> SensorModel:
        return sensor_preset(
            self.sensor,
            self.rev_frequency,
            relative_sigma=self.relative_sigma,
            absolute_sigma_floor=self.absolute_sigma,
        )

    def trolley_noise(self) -> TrolleyNoise:
        return TrolleyNoise(
            self.yaw_a_sigma,
            self.yaw_b_sigma,
            self.gyro_drift_rate,
            self.gyro_noise,
            self.position_sigma,
            self.stream_rate,
        )

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "SessionConfig":
        kwargs: dict = {}
        for f in fields_of(cls):
            if f not in kv:
                continue
            raw = kv[f]
            if f in ("mode", "sensor"):
                kwargs[f] = raw
            elif f in ("seed", "revolutions"):
                kwargs[f] = int(raw)
            elif f == "stations":
                kwargs[f] = _tuples(raw, (2, 3))
            elif f == "waypoints":
                kwargs[f] = _tuples(raw, (4,))
            else:
                kwargs[f] = float(raw)
        unknown = set(kv) - set(fields_of(cls))
        if unknown:
            raise ParameterError(f"unknown session keys: {', '.join(sorted(unknown))}")
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for f in fields_of(type(self)):
            v = getattr(self, f)
            if f in ("stations", "waypoints"):
                v = "; ".join(" ".join(format(x, ".12g") for x in t) for t in v)
            elif isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{f} = {v}")
        return "\n".join(lines) + "\n"


def fields_of(cls) -> list[str]:
    return [f.name for f in fields(cls)]


SESSION_FILE = "session.cfg"


def station_log_name(i: int) -> str:
    return f"scan_{i:02d}.log"


def run_session(scene: Scene, cfg: SessionConfig, out_dir: str | Path) -> list[Path]:
    """Simulate a session and write its logs plus ``session.cfg`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.sensor_model()
    written = []
    if cfg.mode == "static":
        for i, st in enumerate(cfg.stations):
            yaw = st[2] if len(st) > 2 else 0.0
            pose = ScannerPose(st[0], st[1], yaw, cfg.height)
            # each station draws from its own seed so stations are independent
            samples = simulate_static_scan(
                scene, pose, model, cfg.motor_step, cfg.full_turn_revolutions, seed=cfg.seed + 7919 * i
            )
            p = out / station_log_name(i)
            geometry.write_scan_log(p, samples)
            written.append(p)
    else:
        run = simulate_trolley_run(
            scene,
            TrajectorySpec(cfg.waypoints),
            model,
            cfg.trolley_noise(),
            seed=cfg.seed,
            mount_height=cfg.height,
        )
        files = {
            "scan.log": lambda p: geometry.write_scan_log(p, run.scan),
            "yaw_a.txt": lambda p: geometry.write_estimate_stream(p, run.yaw_a),
            "yaw_b.txt": lambda p: geometry.write_estimate_stream(p, run.yaw_b),
            "yaw_drift.txt": lambda p: geometry.write_estimate_stream(p, run.yaw_drift),
            "position.txt": lambda p: geometry.write_position_stream(p, run.position),
            "truth.txt": lambda p: geometry.write_trajectory(p, run.truth),
        }
        for name, writer in files.items():
            writer(out / name)
            written.append(out / name)
    (out / SESSION_FILE).write_text(cfg.to_text())
    written.append(out / SESSION_FILE)
    return written
