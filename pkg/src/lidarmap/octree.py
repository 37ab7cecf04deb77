"""Occupancy octree with clamped log-odds updates.

The tree is stored as one dictionary per level: level 0 holds finest voxels,
level ``k`` holds pruned leaves covering ``2**k`` voxels per axis, and the
single root sits at level ``depth``. Keys are non-negative integer triples
local to that level. Inner nodes are implicit: a node is inner exactly when
some leaf lies below it.

The voxel grid is anchored at the world origin (voxel ``i`` spans
``[i * res, (i + 1) * res)``) and the root cube is centered on the origin,
so any two trees of the same resolution share one grid regardless of depth.
Log-odds values are kept at float32 precision so that the binary format
round-trips exactly.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

from lidarmap.errors import IncompatibleMapsError, InputDomainError, ParameterError
from lidarmap.geometry import Point3

MAGIC = b"OCTQ1"
_HEADER = struct.Struct("<5sBd3dd4fd")
_F32 = struct.Struct("<f")
_MASK = struct.Struct("<H")
_EMPTY, _LEAF, _INNER = 0, 1, 2

Key = tuple[int, int, int]


def logodds(p: float) -> float:
    return math.log(p / (1.0 - p))


def probability(l: float) -> float:
    return 1.0 / (1.0 + math.exp(-l))


def f32(x: float) -> float:
    """Round to the nearest float32 value."""
    return _F32.unpack(_F32.pack(x))[0]


class VoxelState(enum.Enum):
    OCCUPIED = "occupied"
    FREE = "free"
    UNKNOWN = "unknown"


class QueryResult(NamedTuple):
    state: VoxelState
    probability: float | None


class Leaf(NamedTuple):
    center: Point3
    side: float
    probability: float


def _snap(v: float, up: bool) -> int:
    r = round(v)
    if abs(v - r) < 1e-9:
        return int(r)
    return math.ceil(v) if up else math.floor(v)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in meters; snapped outward onto a voxel grid on use."""

    min_corner: Point3
    max_corner: Point3

    def __post_init__(self) -> None:
        lo, hi = Point3(*map(float, self.min_corner)), Point3(*map(float, self.max_corner))
        if not all(math.isfinite(v) for v in (*lo, *hi)):
            raise InputDomainError("bounding box corners must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InputDomainError(f"bounding box needs min < max per axis, got {lo} / {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def index_range(self, resolution: float) -> tuple[Key, Key]:
        """Global voxel index range ``[lo, hi)`` covering the box."""
        lo = tuple(_snap(v / resolution, up=False) for v in self.min_corner)
        hi = tuple(_snap(v / resolution, up=True) for v in self.max_corner)
        return lo, hi  # type: ignore[return-value]

    def snapped(self, resolution: float) -> "BoundingBox":
        lo, hi = self.index_range(resolution)
        return BoundingBox(
            Point3(*(i * resolution for i in lo)), Point3(*(i * resolution for i in hi))
        )

    def voxel_shape(self, resolution: float) -> Key:
        lo, hi = self.index_range(resolution)
        return tuple(b - a for a, b in zip(lo, hi))  # type: ignore[return-value]

    @classmethod
    def from_indices(cls, lo: Key, hi: Key, resolution: float) -> "BoundingBox":
        return cls(Point3(*(i * resolution for i in lo)), Point3(*(i * resolution for i in hi)))

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        vals = [float(v) for v in text.replace(",", " ").split()]
        if len(vals) != 6:
            raise InputDomainError(f"bounding box needs 6 numbers, got {len(vals)}")
        return cls(Point3(*vals[:3]), Point3(*vals[3:]))


@dataclass(frozen=True)
class VoxelCounts:
    n_occ: int
    n_free: int
    n_no: int
    leaf_count: int

    @property
    def total(self) -> int:
        return self.n_occ + self.n_free + self.n_no


@dataclass(frozen=True)
class _LevelArrays:
    level: int
    gmin: np.ndarray  # (n, 3) global index of each leaf's min corner voxel
    logodds: np.ndarray


class OccupancyOctree:
    """Log-odds occupancy octree over a cube of side ``resolution * 2**depth``."""

    def __init__(
        self,
        resolution: float,
        depth: int = 16,
        *,
        prob_hit: float = 0.7,
        prob_miss: float = 0.4,
        clamp: tuple[float, float] = (0.12, 0.97),
        threshold: float = 0.5,
    ) -> None:
        if not (resolution > 0 and math.isfinite(resolution)):
            raise ParameterError(f"resolution must be positive, got {resolution}")
        if not 1 <= depth <= 30:
            raise ParameterError(f"depth must lie in [1, 30], got {depth}")
        if not 0.0 < clamp[0] < clamp[1] < 1.0:
            raise ParameterError(f"bad clamping bounds {clamp}")
        self.resolution = float(resolution)
        self.depth = depth
        self.l_hit = f32(logodds(prob_hit))
        self.l_miss = f32(logodds(prob_miss))
        self.clamp_min = f32(logodds(clamp[0]))
        self.clamp_max = f32(logodds(clamp[1]))
        self.threshold = float(threshold)
        self._levels: list[dict[Key, float]] = [dict() for _ in range(depth + 1)]
        self._n_coarse = 0
        self._sealed = False
        self._cache: list[_LevelArrays] | None = None
        self._step_cache: dict[tuple[float, float], float] = {}

    # -- geometry ------------------------------------------------------------

    @property
    def offset(self) -> int:
        return 1 << (self.depth - 1)

    @property
    def half_size(self) -> float:
        return self.resolution * self.offset

    @property
    def center(self) -> Point3:
        return Point3(0.0, 0.0, 0.0)

    def global_index(self, p) -> Key:
        r = self.resolution
        return (math.floor(p[0] / r), math.floor(p[1] / r), math.floor(p[2] / r))

    def _local(self, g: Key) -> Key | None:
        o, n = self.offset, 1 << self.depth
        k = (g[0] + o, g[1] + o, g[2] + o)
        if 0 <= k[0] < n and 0 <= k[1] < n and 0 <= k[2] < n:
            return k
        return None

    def key_of(self, p) -> Key | None:
        """Local finest-level key of the voxel containing ``p``, or None outside the root."""
        return self._local(self.global_index(p))

    def voxel_center(self, g: Key) -> Point3:
        r = self.resolution
        return Point3((g[0] + 0.5) * r, (g[1] + 0.5) * r, (g[2] + 0.5) * r)

    def is_compatible(self, other: "OccupancyOctree") -> bool:
        return self.resolution == other.resolution

    def check_compatible(self, other: "OccupancyOctree") -> None:
        if not self.is_compatible(other):
            raise IncompatibleMapsError(
                f"resolution mismatch: {self.resolution} vs {other.resolution}"
            )

    # -- mutation ------------------------------------------------------------

    def _touch(self) -> None:
        if self._sealed:
            raise RuntimeError("octree is sealed; updates are not allowed")
        self._cache = None

    def _split_to(self, key: Key) -> float | None:
        """Expand a pruned ancestor of ``key`` down to level 0; return its value."""
        levels = self._levels
        for k in range(1, self.depth + 1):
            anc = (key[0] >> k, key[1] >> k, key[2] >> k)
            val = levels[k].get(anc)
            if val is None:
                continue
            del levels[k][anc]
            self._n_coarse -= 1
            for j in range(k, 0, -1):
                parent = (key[0] >> j, key[1] >> j, key[2] >> j)
                x, y, z = parent[0] << 1, parent[1] << 1, parent[2] << 1
                below = levels[j - 1]
                for ci in range(8):
                    below[(x + (ci & 1), y + ((ci >> 1) & 1), z + (ci >> 2))] = val
                if j - 1 > 0:
                    self._n_coarse += 7
                    del below[(key[0] >> (j - 1), key[1] >> (j - 1), key[2] >> (j - 1))]
            return val
        return None

    def _clamped_step(self, l: float, delta: float) -> float:
        cached = self._step_cache.get((l, delta))
        if cached is None:
            cached = f32(min(self.clamp_max, max(self.clamp_min, l + delta)))
            self._step_cache[(l, delta)] = cached
        return cached

    def _update_key(self, key: Key, delta: float) -> float:
        lv0 = self._levels[0]
        l = lv0.get(key)
        if l is None:
            if self._n_coarse:
                l = self._split_to(key)
            if l is None:
                l = 0.0
        new = self._clamped_step(l, delta)
        lv0[key] = new
        return new

    def update_voxel(self, p, hit: bool) -> float:
        """Apply one hit or miss update to the voxel containing ``p``."""
        self._touch()
        key = self.key_of(p)
        if key is None:
            raise InputDomainError(f"point {tuple(p)} lies outside the map volume")
        return self._update_key(key, self.l_hit if hit else self.l_miss)

    def set_voxel(self, g: Key, value: float) -> None:
        """Set the log-odds of finest voxel with global index ``g`` (clamped)."""
        self._touch()
        key = self._local(g)
        if key is None:
            raise InputDomainError(f"voxel {g} lies outside the map volume")
        lv0 = self._levels[0]
        if key not in lv0 and self._n_coarse:
            self._split_to(key)
        lv0[key] = f32(min(self.clamp_max, max(self.clamp_min, value)))

    def traverse(self, origin, endpoint) -> tuple[list[Key], Key]:
        """Voxels crossed by the segment, in order, and the endpoint voxel.

        Incremental grid traversal: at each step the segment leaves the
        current voxel through the face it reaches first. Keys are local.
        """
        inv = 1.0 / self.resolution
        o = self.offset
        u0 = [origin[i] * inv + o for i in range(3)]
        u1 = [endpoint[i] * inv + o for i in range(3)]
        cur = [math.floor(v) for v in u0]
        end = [math.floor(v) for v in u1]
        n = 1 << self.depth
        for c in (cur, end):
            if not all(0 <= v < n for v in c):
                raise InputDomainError("ray leaves the map volume")
        step = [0, 0, 0]
        tmax = [math.inf] * 3
        tdelta = [math.inf] * 3
        remaining = [0, 0, 0]
        for i in range(3):
            d = u1[i] - u0[i]
            remaining[i] = abs(end[i] - cur[i])
            if remaining[i] == 0:
                continue
            if d > 0:
                step[i] = 1
                tmax[i] = (cur[i] + 1 - u0[i]) / d
                tdelta[i] = 1.0 / d
            else:
                step[i] = -1
                tmax[i] = (cur[i] - u0[i]) / d
                tdelta[i] = -1.0 / d
        visited = []
        for _ in range(sum(remaining)):
            visited.append((cur[0], cur[1], cur[2]))
            if tmax[0] <= tmax[1] and tmax[0] <= tmax[2]:
                i = 0
            elif tmax[1] <= tmax[2]:
                i = 1
            else:
                i = 2
            cur[i] += step[i]
            remaining[i] -= 1
            tmax[i] = tmax[i] + tdelta[i] if remaining[i] else math.inf
        return visited, (end[0], end[1], end[2])

    def insert_ray(self, origin, endpoint) -> None:
        """Miss-update every voxel the segment crosses, hit-update the endpoint voxel."""
        if not all(math.isfinite(v) for v in (*origin, *endpoint)):
            raise InputDomainError("ray endpoints must be finite")
        if tuple(origin) == tuple(endpoint):
            raise InputDomainError("zero-length ray")
        self._touch()
        visited, end = self.traverse(origin, endpoint)
        for key in visited:
            self._update_key(key, self.l_miss)
        self._update_key(end, self.l_hit)

    def prune(self) -> None:
        """Merge complete groups of eight equal sibling leaves, bottom-up."""
        self._touch()
        levels = self._levels
        for k in range(self.depth):
            groups: dict[Key, int] = {}
            for key in levels[k]:
                parent = (key[0] >> 1, key[1] >> 1, key[2] >> 1)
                groups[parent] = groups.get(parent, 0) + 1
            cur, up = levels[k], levels[k + 1]
            for parent, count in groups.items():
                if count != 8:
                    continue
                x, y, z = parent[0] << 1, parent[1] << 1, parent[2] << 1
                children = [(x + (ci & 1), y + ((ci >> 1) & 1), z + (ci >> 2)) for ci in range(8)]
                val = cur[children[0]]
                if all(cur[c] == val for c in children):
                    for c in children:
                        del cur[c]
                    up[parent] = val
        self._n_coarse = sum(len(d) for d in levels[1:])

    def seal(self) -> "OccupancyOctree":
        """Prune and freeze the tree; later updates raise."""
        self.prune()
        self._sealed = True
        return self

    @property
    def sealed(self) -> bool:
        return self._sealed

    # -- read access ---------------------------------------------------------

    def __len__(self) -> int:
        return sum(len(d) for d in self._levels)

    leaf_count = property(__len__)

    def is_empty(self) -> bool:
        return len(self) == 0

    def classify(self, l: float) -> VoxelState:
        return VoxelState.OCCUPIED if probability(l) > self.threshold else VoxelState.FREE

    def query(self, p) -> QueryResult:
        key = self.key_of(p)
        if key is None:
            return QueryResult(VoxelState.UNKNOWN, None)
        return self.query_key(key)

    def query_key(self, key: Key) -> QueryResult:
        for k, level in enumerate(self._levels):
            val = level.get((key[0] >> k, key[1] >> k, key[2] >> k))
            if val is not None:
                return QueryResult(self.classify(val), probability(val))
        return QueryResult(VoxelState.UNKNOWN, None)

    def query_index(self, g: Key) -> QueryResult:
        key = self._local(g)
        if key is None:
            return QueryResult(VoxelState.UNKNOWN, None)
        return self.query_key(key)

    def _inner_sets(self) -> list[set[Key]]:
        inner: list[set[Key]] = [set() for _ in range(self.depth + 1)]
        for k in range(self.depth):
            for key in self._levels[k]:
                for j in range(k + 1, self.depth + 1):
                    s = j - k
                    anc = (key[0] >> s, key[1] >> s, key[2] >> s)
                    if anc in inner[j]:
                        break
                    inner[j].add(anc)
        return inner

    def _walk(self) -> Iterator[tuple[int, Key, float]]:
        """Depth-first leaves as ``(level, key, logodds)``, children in index order."""
        levels = self._levels
        root = (0, 0, 0)
        if root in levels[self.depth]:
            yield self.depth, root, levels[self.depth][root]
            return
        inner = self._inner_sets()
        if root not in inner[self.depth]:
            return
        stack = [(self.depth, root)]
        while stack:
            k, key = stack.pop()
            val = levels[k].get(key)
            if val is not None:
                yield k, key, val
                continue
            x, y, z = key[0] << 1, key[1] << 1, key[2] << 1
            below_leaf, below_inner = levels[k - 1], inner[k - 1]
            children = []
            for ci in range(8):
                c = (x + (ci & 1), y + ((ci >> 1) & 1), z + (ci >> 2))
                if c in below_leaf or c in below_inner:
                    children.append((k - 1, c))
            stack.extend(reversed(children))

    def iterate_leaves(self) -> Iterator[Leaf]:
        """Every leaf once, depth-first with child index ascending (x bit first)."""
        r, o = self.resolution, self.offset
        for k, key, val in self._walk():
            size = 1 << k
            side = r * size
            center = Point3(*((key[i] * size - o) * r + 0.5 * side for i in range(3)))
            yield Leaf(center, side, probability(val))

    def level_arrays(self) -> list[_LevelArrays]:
        """Per-level numpy views of the leaves (global min-corner indices)."""
        if self._cache is None:
            out = []
            o = self.offset
            for k, level in enumerate(self._levels):
                if not level:
                    continue
                keys = np.array(list(level.keys()), dtype=np.int64).reshape(-1, 3)
                vals = np.fromiter(level.values(), dtype=np.float64, count=len(level))
                out.append(_LevelArrays(k, (keys << k) - o, vals))
            self._cache = out
        return self._cache

    def known_index_bounds(self) -> tuple[Key, Key] | None:
        """Global index range ``[lo, hi)`` of all known voxels, or None when empty."""
        arrs = self.level_arrays()
        if not arrs:
            return None
        lo = np.min([a.gmin.min(axis=0) for a in arrs], axis=0)
        hi = np.max([(a.gmin + (1 << a.level)).max(axis=0) for a in arrs], axis=0)
        return tuple(int(v) for v in lo), tuple(int(v) for v in hi)  # type: ignore[return-value]

    def known_bounds(self) -> BoundingBox | None:
        b = self.known_index_bounds()
        if b is None:
            return None
        return BoundingBox.from_indices(b[0], b[1], self.resolution)

    def rasterize(self, lo: Key, hi: Key) -> np.ndarray:
        """Dense log-odds array over voxels ``[lo, hi)``; NaN where unknown."""
        shape = tuple(b - a for a, b in zip(lo, hi))
        grid = np.full(shape, np.nan)
        lo_a, hi_a = np.asarray(lo), np.asarray(hi)
        for arr in self.level_arrays():
            size = 1 << arr.level
            if arr.level == 0:
                inside = np.all((arr.gmin >= lo_a) & (arr.gmin < hi_a), axis=1)
                idx = arr.gmin[inside] - lo_a
                grid[idx[:, 0], idx[:, 1], idx[:, 2]] = arr.logodds[inside]
                continue
            a = np.maximum(arr.gmin, lo_a) - lo_a
            b = np.minimum(arr.gmin + size, hi_a) - lo_a
            hit = np.all(b > a, axis=1)
            for (ax, ay, az), (bx, by, bz), v in zip(a[hit], b[hit], arr.logodds[hit]):
                grid[ax:bx, ay:by, az:bz] = v
        return grid

    # -- comparison ----------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OccupancyOctree):
            return NotImplemented
        return self._params() == other._params() and self._levels == other._levels

    __hash__ = None  # type: ignore[assignment]

    def _params(self) -> tuple:
        return (
            self.resolution,
            self.depth,
            self.l_hit,
            self.l_miss,
            self.clamp_min,
            self.clamp_max,
            self.threshold,
        )

    def copy(self) -> "OccupancyOctree":
        t = OccupancyOctree.__new__(OccupancyOctree)
        t.__dict__.update(self.__dict__)
        t._levels = [dict(d) for d in self._levels]
        t._sealed = False
        t._cache = None
        t._step_cache = {}
        return t

    # -- serialization -------------------------------------------------------

    def write(self, fh: BinaryIO) -> None:
        c = self.center
        fh.write(
            _HEADER.pack(
                MAGIC,
                self.depth,
                self.resolution,
                c.x,
                c.y,
                c.z,
                self.half_size,
                self.clamp_min,
                self.clamp_max,
                self.l_hit,
                self.l_miss,
                self.threshold,
            )
        )
        levels = self._levels
        root = (0, 0, 0)
        if root in levels[self.depth]:
            fh.write(bytes([_LEAF]))
            fh.write(_F32.pack(levels[self.depth][root]))
            return
        inner = self._inner_sets()
        if root not in inner[self.depth]:
            fh.write(bytes([_EMPTY]))
            return
        fh.write(bytes([_INNER]))

        def node(k: int, key: Key) -> None:
            x, y, z = key[0] << 1, key[1] << 1, key[2] << 1
            mask = 0
            kinds = []
            for ci in range(8):
                c = (x + (ci & 1), y + ((ci >> 1) & 1), z + (ci >> 2))
                if c in levels[k - 1]:
                    mask |= _LEAF << (2 * ci)
                    kinds.append((_LEAF, c))
                elif c in inner[k - 1]:
                    mask |= _INNER << (2 * ci)
                    kinds.append((_INNER, c))
            fh.write(_MASK.pack(mask))
            for kind, c in kinds:
                if kind == _LEAF:
                    fh.write(_F32.pack(levels[k - 1][c]))
                else:
                    node(k - 1, c)

        node(self.depth, root)

    def to_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        self.write(buf)
        return buf.getvalue()

    @classmethod
    def read(cls, fh: BinaryIO) -> "OccupancyOctree":
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise InputDomainError("truncated octree header")
        (magic, depth, res, cx, cy, cz, half, cmin, cmax, lhit, lmiss, thr) = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise InputDomainError(f"bad magic {magic!r}")
        if (cx, cy, cz) != (0.0, 0.0, 0.0) or half != res * (1 << (depth - 1)):
            raise InputDomainError("root cube inconsistent with resolution and depth")
        tree = cls(res, depth, threshold=thr)
        tree.clamp_min, tree.clamp_max, tree.l_hit, tree.l_miss = cmin, cmax, lhit, lmiss
        levels = tree._levels

        def take(n: int) -> bytes:
            b = fh.read(n)
            if len(b) != n:
                raise InputDomainError("truncated octree body")
            return b

        kind = take(1)[0]
        if kind == _LEAF:
            levels[depth][(0, 0, 0)] = _F32.unpack(take(4))[0]
        elif kind == _INNER:

            def node(k: int, key: Key) -> None:
                (mask,) = _MASK.unpack(take(2))
                x, y, z = key[0] << 1, key[1] << 1, key[2] << 1
                for ci in range(8):
                    kind_c = (mask >> (2 * ci)) & 3
                    c = (x + (ci & 1), y + ((ci >> 1) & 1), z + (ci >> 2))
                    if kind_c == _LEAF:
                        levels[k - 1][c] = _F32.unpack(take(4))[0]
                    elif kind_c == _INNER:
                        if k - 1 == 0:
                            raise InputDomainError("inner node below the finest level")
                        node(k - 1, c)
                    elif kind_c != _EMPTY:
                        raise InputDomainError(f"bad child code {kind_c}")

            node(depth, (0, 0, 0))
        elif kind != _EMPTY:
            raise InputDomainError(f"bad root code {kind}")
        tree._n_coarse = sum(len(d) for d in levels[1:])
        return tree

    @classmethod
    def from_bytes(cls, data: bytes) -> "OccupancyOctree":
        import io

        return cls.read(io.BytesIO(data))

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            self.write(fh)

    @classmethod
    def load(cls, path: str | Path) -> "OccupancyOctree":
        with open(path, "rb") as fh:
            return cls.read(fh)

    def dump_ascii(self, fh) -> None:
        """One leaf per line: ``cx cy cz side logodds probability``."""
        r, o = self.resolution, self.offset
        fh.write(f"# resolution {r!r} depth {self.depth} leaves {len(self)}\n")
        for k, key, val in self._walk():
            size = 1 << k
            side = r * size
            c = [(key[i] * size - o) * r + 0.5 * side for i in range(3)]
            fh.write(f"{c[0]:.9g} {c[1]:.9g} {c[2]:.9g} {side:.9g} {val:.9g} {probability(val):.9g}\n")


def depth_for_extent(resolution: float, lo: Key, hi: Key) -> int:
    """Smallest depth whose origin-centered root holds voxel indices ``[lo, hi)``."""
    need = max(max(-v for v in lo), max(hi))
    d = 1
    while (1 << (d - 1)) < need:
        d += 1
    return d


def count_voxels(tree: OccupancyOctree, box: BoundingBox) -> VoxelCounts:
    """Count finest voxels of the box as occupied, free or unknown.

    A pruned leaf contributes the number of finest voxels it shares with
    the box. ``leaf_count`` is the number of structural leaves touching it.
    """
    lo, hi = box.index_range(tree.resolution)
    lo_a, hi_a = np.asarray(lo), np.asarray(hi)
    total = int(np.prod(hi_a - lo_a))
    n_occ = n_free = leaves = 0
    for arr in tree.level_arrays():
        size = 1 << arr.level
        ext = np.clip(np.minimum(arr.gmin + size, hi_a) - np.maximum(arr.gmin, lo_a), 0, None)
        vol = np.prod(ext, axis=1)
        occ = 1.0 / (1.0 + np.exp(-arr.logodds)) > tree.threshold
        n_occ += int(vol[occ].sum())
        n_free += int(vol[~occ].sum())
        leaves += int(np.count_nonzero(vol))
    return VoxelCounts(n_occ, n_free, total - n_occ - n_free, leaves)


def from_pointcloud(
    cloud,
    resolution: float,
    origin=None,
    box: BoundingBox | None = None,
    **params,
) -> OccupancyOctree:
    """Cast one ray per point into a new tree, then prune.

    Per-point sensor origins are used when the cloud has them; otherwise
    ``origin`` is used for every ray. The root is the smallest cube (voxel
    grid anchored at the world origin) holding the data and ``box``.
    """
    pts = cloud.points
    if cloud.origins is not None:
        org = cloud.origins
    elif origin is not None:
        org = np.broadcast_to(np.asarray(origin, dtype=np.float64), pts.shape)
    else:
        raise InputDomainError("cloud has no sensor origins and no fallback origin was given")
    chunks = [pts, org]
    if box is not None:
        chunks.append(np.array([box.min_corner, box.max_corner]))
    allp = np.concatenate(chunks) if len(pts) or box is not None else np.zeros((1, 3))
    lo = tuple(int(v) for v in np.floor(allp.min(axis=0) / resolution))
    hi = tuple(int(v) + 1 for v in np.floor(allp.max(axis=0) / resolution))
    tree = OccupancyOctree(resolution, depth_for_extent(resolution, lo, hi), **params)
    for o, p in zip(org.tolist(), pts.tolist()):
        if o == p:
            continue
        tree.insert_ray(o, p)
    tree.prune()
    return tree


def from_dense(
    values: np.ndarray,
    lo: Key,
    resolution: float,
    depth: int | None = None,
    **params,
) -> OccupancyOctree:
    """Tree whose finest voxels ``lo + (i, j, k)`` take ``values[i, j, k]`` (NaN = unknown)."""
    values = np.asarray(values, dtype=np.float64)
    hi = tuple(a + s for a, s in zip(lo, values.shape))
    if depth is None:
        depth = depth_for_extent(resolution, lo, hi)  # type: ignore[arg-type]
    tree = OccupancyOctree(resolution, depth, **params)
    idx = np.argwhere(~np.isnan(values))
    vals = values[~np.isnan(values)]
    lv0 = tree._levels[0]
    o = tree.offset
    n = 1 << depth
    if len(idx):
        keys = idx + np.asarray(lo) + o
        if keys.min() < 0 or keys.max() >= n:
            raise InputDomainError("dense block lies outside the map volume")
        for key, v in zip(map(tuple, keys.tolist()), vals.tolist()):
            lv0[key] = f32(min(tree.clamp_max, max(tree.clamp_min, v)))
    tree.prune()
    return tree
