"""Non-learned point cloud math: normalization, sampling, partitioning, cuts, Chamfer."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    degenerate: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise GeometryError("point cloud must contain at least one point")
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("point cloud contains non-finite coordinates")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.points):
                raise GeometryError(
                    f"{len(self.labels)} labels for {len(self.points)} points"
                )

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "PointCloud":
        labels = None if self.labels is None else self.labels[idx]
        return PointCloud(self.points[idx], labels)


@dataclass(frozen=True)
class Plane:
    """A plane through the origin, stored by its normal."""

    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if not np.linalg.norm(n) > 0:
            raise GeometryError("plane normal must be non-zero")
        object.__setattr__(self, "normal", n)


@dataclass
class LocalPointSet:
    centroid: np.ndarray
    radius: float
    relative_points: np.ndarray
    source_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError("face index out of range")

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center on the mean point and scale so the farthest point has norm 1.

    A cloud whose points all coincide is returned centered but unscaled with
    ``degenerate`` set.
    """
    centered = cloud.points - cloud.points.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).max()
    labels = None if cloud.labels is None else cloud.labels.copy()
    if scale <= 1e-12:
        return PointCloud(np.zeros_like(centered), labels, degenerate=True)
    return PointCloud(centered / scale, labels)


def farthest_point_sampling(
    cloud: PointCloud, k: int, seed: int = 0, first: Optional[int] = None
) -> np.ndarray:
    """Greedy max-min selection of ``k`` point indices, in selection order.

    The first index is ``first`` if given, otherwise drawn from ``seed``.
    """
    pts = cloud.points
    n = len(pts)
    if not 1 <= k <= n:
        raise GeometryError(f"cannot sample {k} centroids from {n} points")
    if first is None:
        first = int(np.random.default_rng(seed).integers(n))
    selected = np.empty(k, dtype=np.int64)
    selected[0] = first
    min_d = np.sum((pts - pts[first]) ** 2, axis=1)
    min_d[first] = -1.0
    for i in range(1, k):
        # argmax returns the lowest index among ties
        nxt = int(np.argmax(min_d))
        selected[i] = nxt
        # earlier picks stay at -1 through the minimum
        min_d = np.minimum(min_d, np.sum((pts - pts[nxt]) ** 2, axis=1))
        min_d[nxt] = -1.0
    return selected


def ball_query(
    cloud: PointCloud, n_sets: int, radius: float, seed: int = 0, max_points_per_set: int = 64
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour indices of FPS centroids as a padded [S, max_points] array.

    Each row lists the in-radius points nearest first (ties by index) and is
    padded by repeating its first entry, the centroid itself. Also returns the
    centroid indices and the true row lengths.
    """
    if n_sets < 1:
        raise GeometryError("n_sets must be >= 1")
    if radius <= 0:
        raise GeometryError("radius must be positive")
    centers = farthest_point_sampling(cloud, n_sets, seed)
    pts = cloud.points
    d = np.sqrt(np.sum((pts[centers][:, None, :] - pts[None, :, :]) ** 2, axis=-1))
    d[np.arange(n_sets), centers] = 0.0
    d[d > radius] = np.inf
    width = min(max_points_per_set, len(pts))
    order = np.argsort(d, axis=1, kind="stable")[:, :width]
    counts = np.minimum(np.isfinite(d).sum(1), width)
    pad = np.arange(width)[None, :] >= counts[:, None]
    order = np.where(pad, order[:, :1], order)
    if width < max_points_per_set:
        order = np.concatenate([order, np.repeat(order[:, :1], max_points_per_set - width, 1)], 1)
    return order, centers, counts


def build_partition(
    cloud: PointCloud,
    n_sets: int,
    radius: float,
    seed: int = 0,
    max_points_per_set: int = 64,
) -> list[LocalPointSet]:
    """Overlapping local sets: every point within ``radius`` of each FPS centroid.

    Sets larger than ``max_points_per_set`` keep their nearest members.
    """
    order, centers, counts = ball_query(cloud, n_sets, radius, seed, max_points_per_set)
    sets = []
    for row, c, n in zip(order, centers, counts):
        idx = row[:n]
        centroid = cloud.points[c]
        sets.append(
            LocalPointSet(
                centroid=centroid.copy(),
                radius=float(radius),
                relative_points=cloud.points[idx] - centroid,
                source_indices=idx,
            )
        )
    return sets


def simulate_plane_cut(
    cloud: PointCloud, seed: int = 0, minimum_points: int = 32
) -> tuple[PointCloud, Plane]:
    """Keep the points strictly on the positive side of a random plane through the origin."""
    rng = np.random.default_rng(seed)
    need = min(minimum_points, len(cloud))
    for _ in range(11):
        normal = rng.standard_normal(3)
        norm = np.linalg.norm(normal)
        if norm == 0:
            continue
        normal = normal / norm
        for sign in (1.0, -1.0):
            keep = np.flatnonzero(cloud.points @ (sign * normal) > 0)
            if len(keep) >= max(need, 1):
                return cloud.subset(keep), Plane(sign * normal)
    raise GeometryError(
        f"plane cut kept fewer than {need} points after 10 resamples"
    )


def _nn_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(b).query(a, k=1)
    return d**2


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Mean squared nearest-neighbour distance, summed over both directions."""
    pa = a.points if isinstance(a, PointCloud) else np.asarray(a, dtype=np.float64)
    pb = b.points if isinstance(b, PointCloud) else np.asarray(b, dtype=np.float64)
    return float(_nn_sq_dists(pa, pb).mean() + _nn_sq_dists(pb, pa).mean())


def sample_mesh_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> PointCloud:
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise GeometryError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / total)
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    tri = mesh.vertices[mesh.faces[face]]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return PointCloud(pts)


# ---------------------------------------------------------------- file formats


def read_xyz(path) -> PointCloud:
    """Read whitespace-separated ``x y z [label]`` lines."""
    path = Path(path)
    pts, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) not in (3, 4):
                raise GeometryError(f"{path}:{lineno}: expected 3 or 4 columns, got {len(fields)}")
            try:
                pts.append([float(f) for f in fields[:3]])
                if len(fields) == 4:
                    labels.append(int(fields[3]))
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: {exc}") from None
    if labels and len(labels) != len(pts):
        raise GeometryError(f"{path}: label column present on some lines only")
    if not pts:
        raise GeometryError(f"{path}: no points")
    return PointCloud(np.array(pts), np.array(labels) if labels else None)


def write_xyz(path, cloud: PointCloud, with_labels: bool = True) -> None:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    labels = cloud.labels if isinstance(cloud, PointCloud) and with_labels else None
    with open(path, "w") as fh:
        for i, p in enumerate(pts):
            line = f"{p[0]:.8f} {p[1]:.8f} {p[2]:.8f}"
            if labels is not None:
                line += f" {int(labels[i])}"
            fh.write(line + "\n")


def read_off(path) -> TriangleMesh:
    path = Path(path)
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.append(line)
    if not tokens or not tokens[0].startswith("OFF"):
        raise GeometryError(f"{path}: missing OFF header")
    head = tokens[0][3:].split()
    rest = tokens[1:]
    # some ModelNet files glue the counts onto the header line
    counts = head if head else rest.pop(0).split()
    nv, nf = int(counts[0]), int(counts[1])
    verts = np.array([[float(x) for x in rest[i].split()[:3]] for i in range(nv)])
    faces = []
    for line in rest[nv : nv + nf]:
        vals = [int(x) for x in line.split()]
        k, idx = vals[0], vals[1 : 1 + vals[0]]
        faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, k - 1))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))
