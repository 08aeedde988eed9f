"""Datasets: XYZ/OFF directory loaders, procedural shapes with part labels, splits, completion pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qsl, urlparse

import numpy as np

from . import geometry
from .geometry import PointCloud

FAMILIES = ("sphere", "box", "cylinder", "cone", "torus")

# default size parameters per family, before normalization
DEFAULT_SIZES = {
    "sphere": {"radius": 1.0},
    "box": {"x": 1.0, "y": 0.7, "z": 0.5},
    "cylinder": {"radius": 0.5, "height": 1.0},
    "cone": {"radius": 0.6, "height": 1.2},
    "torus": {"major": 1.0, "minor": 0.35},
}

N_PARTS = {"sphere": 2, "box": 3, "cylinder": 2, "cone": 2, "torus": 2}


class DataError(ValueError):
    pass


@dataclass
class Sample:
    cloud: PointCloud
    label: int
    complete: Optional[PointCloud] = None
    name: str = ""

    @property
    def part_labels(self):
        return self.cloud.labels


@dataclass
class ProceduralShapeSpec:
    family: str
    sizes: dict = field(default_factory=dict)
    n_points: int = 256
    jitter: float = 0.01
    size_variation: float = 0.2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown shape family {self.family!r}")
        if self.n_points < 64:
            raise DataError("procedural clouds need at least 64 points")
        merged = dict(DEFAULT_SIZES[self.family])
        merged.update(self.sizes)
        if any(v <= 0 for v in merged.values()):
            raise DataError("shape size parameters must be positive")
        self.sizes = merged


# ------------------------------------------------------------------ surface samplers
# each returns (points [n, 3], part labels [n])


def _sphere(rng, n, radius):
    p = rng.standard_normal((n, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return radius * p, (p[:, 2] < 0).astype(np.int64)


def _box(rng, n, x, y, z):
    half = np.array([x, y, z]) / 2
    # faces normal to axis a come in pairs with area 4 * (other two half sides)
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    p = rng.uniform(-1, 1, (n, 3)) * half
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    p[np.arange(n), axis] = sign * half[axis]
    return p, axis.astype(np.int64)


def _cylinder(rng, n, radius, height):
    side, caps = 2 * np.pi * radius * height, 2 * np.pi * radius**2
    on_cap = rng.random(n) < caps / (side + caps)
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.where(on_cap, radius * np.sqrt(rng.random(n)), radius)
    z = np.where(on_cap, np.where(rng.random(n) < 0.5, -height / 2, height / 2),
                 rng.uniform(-height / 2, height / 2, n))
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], 1), on_cap.astype(np.int64)


def _cone(rng, n, radius, height):
    lateral = np.pi * radius * np.hypot(radius, height)
    base = np.pi * radius**2
    on_base = rng.random(n) < base / (lateral + base)
    theta = rng.uniform(0, 2 * np.pi, n)
    s = np.sqrt(rng.random(n))
    r = radius * s
    # lateral points: distance from apex ~ sqrt(u); apex at +h/2
    z = np.where(on_base, -height / 2, height / 2 - height * s)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], 1), on_base.astype(np.int64)


def _torus(rng, n, major, minor):
    out_u, out_v = [], []
    need = n
    while need > 0:
        u = rng.uniform(0, 2 * np.pi, 2 * need)
        v = rng.uniform(0, 2 * np.pi, 2 * need)
        ok = rng.random(2 * need) < (major + minor * np.cos(v)) / (major + minor)
        out_u.append(u[ok])
        out_v.append(v[ok])
        need -= ok.sum()
    u = np.concatenate(out_u)[:n]
    v = np.concatenate(out_v)[:n]
    ring = major + minor * np.cos(v)
    p = np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], 1)
    return p, (np.cos(v) < 0).astype(np.int64)


_SAMPLERS = {"sphere": _sphere, "box": _box, "cylinder": _cylinder, "cone": _cone, "torus": _torus}


def generate_procedural(
    spec: ProceduralShapeSpec, n_clouds: int, seed: int = 0, label: int = 0
) -> list[Sample]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_clouds):
        scale = 1 + spec.size_variation * rng.uniform(-1, 1, len(spec.sizes))
        sizes = {k: v * s for (k, v), s in zip(spec.sizes.items(), scale)}
        pts, parts = _SAMPLERS[spec.family](rng, spec.n_points, **sizes)
        if spec.jitter > 0:
            pts = pts + rng.normal(0, spec.jitter, pts.shape)
        cloud = geometry.normalize_unit_sphere(PointCloud(pts, parts))
        out.append(Sample(cloud, label, name=f"{spec.family}_{i:04d}"))
    return out


def shapes_dataset(
    families=FAMILIES, per_class: int = 100, n_points: int = 256, seed: int = 0, jitter: float = 0.01
) -> list[Sample]:
    """Class-interleaved procedural corpus, one class per family."""
    by_class = [
        generate_procedural(
            ProceduralShapeSpec(fam, n_points=n_points, jitter=jitter), per_class,
            seed=seed * 1000 + c, label=c,
        )
        for c, fam in enumerate(families)
    ]
    return [s for group in zip(*by_class) for s in group]


def split(samples: list, train_fraction: float, seed: int = 0) -> tuple[list, list]:
    if not 0 < train_fraction < 1:
        raise DataError("train_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(train_fraction * len(samples)))
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def make_completion_pairs(samples: list[Sample], seed: int = 0, minimum_points: int = 32) -> list[Sample]:
    """Pair each complete cloud with a plane-cut partial of itself."""
    out = []
    for i, s in enumerate(samples):
        partial, _ = geometry.simulate_plane_cut(s.cloud, seed=seed * 100003 + i, minimum_points=minimum_points)
        out.append(Sample(partial, s.label, complete=s.cloud, name=s.name))
    return out


# ------------------------------------------------------------------ file datasets


def _class_dirs(path: Path):
    if not path.is_dir():
        raise DataError(f"{path}: not a directory")
    return sorted(p for p in path.iterdir() if p.is_dir())


def load_xyz_dir(path, class_map: Optional[dict] = None) -> list[Sample]:
    """Load ``<path>/<class>/*.xyz``; class ids come from ``class_map`` or sorted directory names."""
    path = Path(path)
    dirs = _class_dirs(path)
    if class_map is None:
        class_map = {d.name: i for i, d in enumerate(dirs)}
    out = []
    for d in dirs:
        if d.name not in class_map:
            raise DataError(f"{d}: class not in class map")
        for f in sorted(d.glob("*.xyz")):
            out.append(Sample(geometry.read_xyz(f), class_map[d.name], name=f"{d.name}/{f.stem}"))
    return out


def load_off_dir(path, n_points: int = 1024, seed: int = 0, class_map: Optional[dict] = None) -> list[Sample]:
    """Load ``<path>/<class>/*.off`` meshes, sampled and normalized to the unit sphere."""
    path = Path(path)
    dirs = _class_dirs(path)
    if class_map is None:
        class_map = {d.name: i for i, d in enumerate(dirs)}
    out = []
    for d in dirs:
        for j, f in enumerate(sorted(d.glob("*.off"))):
            cloud = geometry.sample_mesh_surface(geometry.read_off(f), n_points, seed + j)
            out.append(Sample(geometry.normalize_unit_sphere(cloud), class_map[d.name], name=f"{d.name}/{f.stem}"))
    return out


def load_completion_dir(path, class_map: Optional[dict] = None) -> list[Sample]:
    """Load stem-paired ``NNNN_partial.xyz`` / ``NNNN_complete.xyz`` files per class directory."""
    path = Path(path)
    dirs = _class_dirs(path)
    if class_map is None:
        class_map = {d.name: i for i, d in enumerate(dirs)}
    out = []
    for d in dirs:
        for f in sorted(d.glob("*_partial.xyz")):
            stem = f.name[: -len("_partial.xyz")]
            twin = d / f"{stem}_complete.xyz"
            if not twin.exists():
                raise DataError(f"{f}: missing pair file {twin.name}")
            out.append(
                Sample(geometry.read_xyz(f), class_map[d.name], complete=geometry.read_xyz(twin),
                       name=f"{d.name}/{stem}")
            )
    return out


def save_xyz_dir(samples: list[Sample], path, class_names: list[str]) -> None:
    path = Path(path)
    for s in samples:
        d = path / class_names[s.label]
        d.mkdir(parents=True, exist_ok=True)
        stem = s.name.split("/")[-1] or "cloud"
        geometry.write_xyz(d / f"{stem}.xyz", s.cloud)


# ------------------------------------------------------------------ toy:// URIs

TOY_DATASETS = {
    # name: (families, task)
    "shapes5": (FAMILIES, "classify"),
    "cylinder-parts": (("cylinder",), "segment"),
    "completion2": (("cylinder", "cone"), "complete"),
}


@dataclass
class Dataset:
    samples: list[Sample]
    class_names: list[str]
    n_parts: int = 0


def load_toy(uri: str) -> Dataset:
    """Build a procedural dataset from ``toy://<name>?per_class=..&points=..&seed=..&split=train|test|all``."""
    parsed = urlparse(uri)
    name = parsed.netloc or parsed.path.lstrip("/")
    if name not in TOY_DATASETS:
        raise DataError(f"unknown toy dataset {name!r}; choose from {sorted(TOY_DATASETS)}")
    q = dict(parse_qsl(parsed.query))
    unknown = set(q) - {"per_class", "points", "seed", "split", "train_fraction", "jitter"}
    if unknown:
        raise DataError(f"unknown toy dataset option(s): {sorted(unknown)}")
    families, task = TOY_DATASETS[name]
    per_class = int(q.get("per_class", 100))
    seed = int(q.get("seed", 0))
    samples = shapes_dataset(families, per_class, int(q.get("points", 256)), seed, float(q.get("jitter", 0.01)))
    which = q.get("split", "all")
    if which != "all":
        train, test = split(samples, float(q.get("train_fraction", 0.8)), seed)
        samples = {"train": train, "test": test}.get(which)
        if samples is None:
            raise DataError(f"split must be train, test or all, got {which!r}")
    if task == "complete":
        samples = make_completion_pairs(samples, seed)
    n_parts = max(N_PARTS[f] for f in families)
    return Dataset(samples, list(families), n_parts)


def load_dataset(spec: str, task: str) -> Dataset:
    """Resolve a ``toy://`` URI or a directory path for the given task."""
    if spec.startswith("toy://"):
        return load_toy(spec)
    path = Path(spec)
    if not path.exists():
        raise DataError(f"{path}: dataset path does not exist")
    names = [d.name for d in _class_dirs(path)]
    if task == "complete":
        samples = load_completion_dir(path)
    elif any(path.glob("*/*.off")):
        samples = load_off_dir(path)
    else:
        samples = load_xyz_dir(path)
    n_parts = 0
    if task == "segment":
        if any(s.cloud.labels is None for s in samples):
            raise DataError("segmentation data needs a fourth (part label) column")
        n_parts = int(max(s.cloud.labels.max() for s in samples)) + 1
    return Dataset(samples, names, n_parts)
