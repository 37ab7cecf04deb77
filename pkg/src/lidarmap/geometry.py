"""Scan geometry, motor-yaw bookkeeping, yaw fusion and stream matching.

Angles are radians throughout. The scanner's beam sweeps a vertical plane;
the plane itself is turned about the vertical axis by an external yaw
(stepper motor on a tripod, or the heading of a trolley).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple, Sequence

from lidarmap.errors import InputDomainError, ParameterError

TWO_PI = 2.0 * math.pi


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def wrap_two_pi(angle: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    a = math.fmod(angle, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    # fmod of a tiny negative value can round up to exactly 2*pi
    if a >= TWO_PI:
        a = 0.0
    return a


def wrap_pi(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.pi - wrap_two_pi(math.pi - angle)
    return a


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InputDomainError(f"non-finite input: {v!r}")


@dataclass(frozen=True)
class ScannerPose:
    """Position of the scanner on the ground plus its accumulated yaw.

    ``z`` is the height of the scanner's optical center above the ground.
    """

    x: float
    y: float
    yaw: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        _check_finite(self.x, self.y, self.yaw, self.z)
        object.__setattr__(self, "yaw", wrap_two_pi(self.yaw))

    @property
    def origin(self) -> Point3:
        return Point3(self.x, self.y, self.z)


@dataclass(frozen=True)
class ScanSample:
    """One lidar return.

    ``motor_yaw`` is the yaw the scanner had when the revolution started and
    ``motor_step`` is the step applied before the second half-revolution.
    A dropout is stored with ``range_m`` set to NaN.
    """

    timestamp: float
    bearing: float
    range_m: float
    motor_yaw: float = 0.0
    motor_step: float = 0.0

    @property
    def is_dropout(self) -> bool:
        return math.isnan(self.range_m)


@dataclass(frozen=True)
class GaussianScalarEstimate:
    mean: float
    variance: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        _check_finite(self.mean, self.variance, self.timestamp)
        if self.variance <= 0.0:
            raise InputDomainError(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class TrolleyPose:
    x: float
    y: float
    yaw: float
    timestamp: float


def beam_direction(bearing: float, yaw: float) -> tuple[float, float, float]:
    """Unit direction of a beam at ``bearing`` in a scan plane turned by ``yaw``."""
    s = math.sin(bearing)
    return (-s * math.sin(yaw), s * math.cos(yaw), math.cos(bearing))


def transform_scan_sample(pose: ScannerPose, sample: ScanSample) -> Point3:
    """Map a (range, bearing) return into the global frame.

    Bearings in [0, pi] use the pose yaw; bearings in (pi, 2*pi) use the
    yaw after the pending motor step, since the motor turns while the beam
    points into the device base.
    """
    _check_finite(sample.bearing, sample.range_m, sample.motor_step)
    theta = sample.bearing
    if not 0.0 <= theta < TWO_PI:
        raise InputDomainError(f"bearing must lie in [0, 2*pi), got {theta}")
    yaw = pose.yaw if theta <= math.pi else pose.yaw + sample.motor_step
    lr = sample.range_m
    dx, dy, dz = beam_direction(theta, yaw)
    return Point3(pose.x + lr * dx, pose.y + lr * dy, pose.z + lr * dz)


def advance_motor_yaw(pose: ScannerPose, dphi: float) -> ScannerPose:
    if dphi < 0.0:
        raise InputDomainError(f"motor step must be non-negative, got {dphi}")
    return replace(pose, yaw=pose.yaw + dphi)


def _ci(a: GaussianScalarEstimate, b: GaussianScalarEstimate, omega: float) -> GaussianScalarEstimate:
    # b's mean is moved onto the branch nearest a's mean before mixing
    mu_b = a.mean + wrap_pi(b.mean - a.mean)
    info = (1.0 - omega) / a.variance + omega / b.variance
    var = 1.0 / info
    mean = var * ((1.0 - omega) / a.variance * a.mean + omega / b.variance * mu_b)
    return GaussianScalarEstimate(wrap_pi(mean), var, max(a.timestamp, b.timestamp))


def ci_fuse(a: GaussianScalarEstimate, b: GaussianScalarEstimate, omega: float) -> GaussianScalarEstimate:
    """Covariance-intersection fusion of two scalar angle estimates.

    ``omega`` weights the information of ``b``; ``1 - omega`` weights ``a``.
    The fused mean is wrapped into (-pi, pi].
    """
    if not 0.0 < omega <= 0.5:
        raise ParameterError(f"omega must lie in (0, 0.5], got {omega}")
    return _ci(a, b, omega)


def select_omega(p_var: float, q_var: float) -> float:
    """Weight for the second source: Q / (P + Q), capped at 0.5."""
    if p_var <= 0.0 or q_var <= 0.0:
        raise InputDomainError("variances must be positive")
    if math.isinf(p_var):
        return 0.0 if math.isfinite(q_var) else 0.5
    return min(0.5, q_var / (p_var + q_var))


def _stamp(item: Any) -> float:
    return float(getattr(item, "timestamp", item))


def match_streams(
    a: Sequence[Any],
    b: Sequence[Any],
    max_skew: float,
    key: Callable[[Any], float] = _stamp,
) -> list[tuple[Any, Any]]:
    """Pair each element of ``a`` with the nearest-in-time element of ``b``.

    Pairs further apart than ``max_skew`` are dropped. When several elements
    of ``a`` pick the same ``b`` element, only the closest one keeps it
    (ties go to the earlier ``a``). The result is ordered by ``a``.
    """
    ta = [key(x) for x in a]
    tb = [key(x) for x in b]
    for name, ts in (("a", ta), ("b", tb)):
        if any(t1 < t0 for t0, t1 in zip(ts, ts[1:])):
            raise InputDomainError(f"stream {name} is not sorted by timestamp")

    claims: dict[int, tuple[float, int]] = {}
    for i, t in enumerate(ta):
        j = bisect.bisect_left(tb, t)
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(tb):
                d = abs(tb[cand] - t)
                if best is None or d < best[0]:
                    best = (d, cand)
        if best is None or best[0] > max_skew:
            continue
        d, jb = best
        held = claims.get(jb)
        if held is None or d < held[0]:
            claims[jb] = (d, i)

    pairs = sorted((i, jb) for jb, (_, i) in claims.items())
    return [(a[i], b[jb]) for i, jb in pairs]


# -- line-oriented logs -----------------------------------------------------


def _data_lines(path: Path) -> Iterable[tuple[int, list[str]]]:
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_scan_log(path: str | Path) -> list[ScanSample]:
    """Read ``timestamp bearing range motor_yaw motor_step`` records."""
    out = []
    for lineno, cols in _data_lines(Path(path)):
        if len(cols) != 5:
            raise InputDomainError(f"{path}:{lineno}: expected 5 columns, got {len(cols)}")
        t, th, r, yaw, step = map(float, cols)
        out.append(ScanSample(t, th, r, yaw, step))
    return out


def write_scan_log(path: str | Path, samples: Iterable[ScanSample]) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp bearing_rad range_m motor_yaw_rad motor_step_rad\n")
        for s in samples:
            fh.write(
                f"{s.timestamp:.9f} {s.bearing:.12g} {s.range_m:.9g} "
                f"{s.motor_yaw:.12g} {s.motor_step:.12g}\n"
            )


def read_estimate_stream(path: str | Path) -> list[GaussianScalarEstimate]:
    """Read ``timestamp mean variance`` records."""
    out = []
    for lineno, cols in _data_lines(Path(path)):
        if len(cols) != 3:
            raise InputDomainError(f"{path}:{lineno}: expected 3 columns, got {len(cols)}")
        t, mean, var = map(float, cols)
        out.append(GaussianScalarEstimate(mean, var, t))
    return out


def write_estimate_stream(path: str | Path, estimates: Iterable[GaussianScalarEstimate]) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp mean_rad variance\n")
        for e in estimates:
            fh.write(f"{e.timestamp:.9f} {e.mean:.12g} {e.variance:.12g}\n")


@dataclass(frozen=True)
class PositionEstimate:
    x: float
    y: float
    variance: float
    timestamp: float


def read_position_stream(path: str | Path) -> list[PositionEstimate]:
    """Read ``timestamp x y variance`` records."""
    out = []
    for lineno, cols in _data_lines(Path(path)):
        if len(cols) != 4:
            raise InputDomainError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
        t, x, y, var = map(float, cols)
        out.append(PositionEstimate(x, y, var, t))
    return out


def write_position_stream(path: str | Path, estimates: Iterable[PositionEstimate]) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp x_m y_m variance\n")
        for e in estimates:
            fh.write(f"{e.timestamp:.9f} {e.x:.12g} {e.y:.12g} {e.variance:.12g}\n")


def read_trajectory(path: str | Path) -> list[TrolleyPose]:
    """Read ``timestamp x y yaw`` records."""
    out = []
    for lineno, cols in _data_lines(Path(path)):
        if len(cols) != 4:
            raise InputDomainError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
        t, x, y, yaw = map(float, cols)
        out.append(TrolleyPose(x, y, yaw, t))
    return out


def write_trajectory(path: str | Path, poses: Iterable[TrolleyPose]) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp x_m y_m yaw_rad\n")
        for p in poses:
            fh.write(f"{p.timestamp:.9f} {p.x:.12g} {p.y:.12g} {p.yaw:.12g}\n")


# -- moving-platform pose reconstruction ---------------------------------------


def fuse_yaw_streams(
    primary: Sequence[GaussianScalarEstimate],
    secondary: Sequence[GaussianScalarEstimate],
    max_skew: float,
) -> list[GaussianScalarEstimate]:
    """Time-match two yaw streams and fuse each pair by covariance intersection.

    ``primary`` plays the role of the orientation filter, ``secondary`` the
    scan-matcher; the weight comes from :func:`select_omega`.
    """
    fused = []
    for a, b in match_streams(primary, secondary, max_skew):
        omega = select_omega(a.variance, b.variance)
        if omega == 0.0:
            fused.append(a)
            continue
        f = ci_fuse(a, b, omega)
        fused.append(GaussianScalarEstimate(f.mean, f.variance, a.timestamp))
    return fused


def compose_poses(
    yaw: Sequence[GaussianScalarEstimate],
    position: Sequence[PositionEstimate],
    max_skew: float,
) -> list[TrolleyPose]:
    return [
        TrolleyPose(p.x, p.y, y.mean, y.timestamp)
        for y, p in match_streams(yaw, position, max_skew)
    ]


@dataclass
class PoseInterpolator:
    """Look up a platform pose at arbitrary times from a sorted pose stream.

    Times further than ``max_skew`` from every stream sample are gaps.
    """

    poses: Sequence[TrolleyPose]
    max_skew: float
    _times: list[float] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._times = [p.timestamp for p in self.poses]

    def __call__(self, t: float) -> TrolleyPose | None:
        ts = self._times
        j = bisect.bisect_left(ts, t)
        near = [k for k in (j - 1, j) if 0 <= k < len(ts)]
        if not near or min(abs(ts[k] - t) for k in near) > self.max_skew:
            return None
        if len(near) == 1 or ts[j] == t:
            k = j if j < len(ts) and ts[j] == t else near[0]
            return self.poses[k]
        p0, p1 = self.poses[j - 1], self.poses[j]
        w = (t - p0.timestamp) / (p1.timestamp - p0.timestamp)
        return TrolleyPose(
            p0.x + w * (p1.x - p0.x),
            p0.y + w * (p1.y - p0.y),
            p0.yaw + w * wrap_pi(p1.yaw - p0.yaw),
            t,
        )
