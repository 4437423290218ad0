"""Point-cloud files, procedural ground-truth shapes and toy completion datasets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CloudError, SeededRng, as_cloud, center_and_scale
from .view import ViewParams, sample_view, synthesize_partial

SHAPE_KINDS = ("sphere", "cuboid", "cylinder", "capsule")
# one z-buffer cell per ~8 points of a 2048-point cloud keeps back faces hidden
TOY_GRID = 16
MANIFEST_VERSION = 1


class DataError(ValueError):
    """Malformed point-cloud file or dataset manifest."""


# --- XYZ ----------------------------------------------------------------------

def write_xyz(cloud, path) -> None:
    pts = as_cloud(cloud)
    with open(path, "w") as f:
        for x, y, z in pts:
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def read_xyz(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            fields_ = line.split()
            if not fields_:
                continue
            if len(fields_) != 3:
                raise DataError(f"line {lineno}: expected 3 fields, got {len(fields_)}")
            try:
                rows.append([float(v) for v in fields_])
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric field") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    try:
        return as_cloud(rows)
    except CloudError as exc:
        raise DataError(f"{path}: {exc}") from None


# --- ASCII PLY ------------------------------------------------------------------

def write_ply(cloud, path) -> None:
    pts = as_cloud(cloud)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(pts)}\n")
        f.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for x, y, z in pts:
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def read_ply(path) -> np.ndarray:
    """Vertex positions of an ASCII PLY file; other elements and properties are skipped."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path}: missing PLY header")

    elements = []  # (name, count, [property names])
    fmt = None
    body_start = None
    for i, raw in enumerate(lines[1:], 1):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise DataError(f"line {i + 1}: malformed element declaration")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise DataError(f"{path}: property before any element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise DataError(f"{path}: missing end_header")
    if fmt != "ascii":
        raise DataError(f"{path}: unsupported encoding {fmt!r}")

    cursor = body_start
    for name, count, props in elements:
        if name != "vertex":
            cursor += count
            continue
        missing = [p for p in ("x", "y", "z") if p not in props]
        if missing:
            raise DataError(f"{path}: vertex element lacks properties {missing}")
        cols = [props.index(p) for p in ("x", "y", "z")]
        rows = []
        for lineno in range(cursor, cursor + count):
            if lineno >= len(lines):
                raise DataError(f"{path}: truncated vertex list")
            vals = lines[lineno].split()
            try:
                rows.append([float(vals[c]) for c in cols])
            except (ValueError, IndexError):
                raise DataError(f"line {lineno + 1}: malformed vertex") from None
        if not rows:
            raise DataError(f"{path}: no vertices")
        return as_cloud(rows)
    raise DataError(f"{path}: no vertex element")


def read_cloud(path) -> np.ndarray:
    return read_ply(path) if str(path).lower().endswith(".ply") else read_xyz(path)


def write_cloud(cloud, path) -> None:
    (write_ply if str(path).lower().endswith(".ply") else write_xyz)(cloud, path)


# --- procedural shapes --------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """A primitive centred at the origin with ``y`` up.

    ``size`` holds half-extents: sphere ``(r,)``, cuboid ``(a, b, c)``,
    cylinder ``(r, h)``, capsule ``(r, h)`` where ``h`` is the half-length of
    the straight section.
    """
    kind: str
    size: tuple[float, ...]
    n_points: int = 2048
    seed: int = 0

    def __post_init__(self):
        arity = {"sphere": 1, "cuboid": 3, "cylinder": 2, "capsule": 2}
        if self.kind not in arity:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if len(self.size) != arity[self.kind] or min(self.size) <= 0:
            raise ValueError(f"{self.kind} needs {arity[self.kind]} positive sizes")
        if self.n_points < 2 or self.n_points % 2:
            raise ValueError("n_points must be a positive even number")


def _sphere_dirs(gen, n):
    v = gen.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_half(spec: ShapeSpec, gen, n: int) -> np.ndarray:
    """``n`` uniform surface samples, the first being a point of maximal |coordinate|."""
    if spec.kind == "sphere":
        (r,) = spec.size
        pts = r * _sphere_dirs(gen, n)
        pts[0] = (r, 0.0, 0.0)
        return pts

    if spec.kind == "cuboid":
        a, b, c = spec.size
        areas = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
        face = gen.choice(6, size=n, p=areas / areas.sum())
        uv = gen.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        ext = np.array([a, b, c])
        for f in range(6):
            sel = face == f
            ax = f // 2
            others = [k for k in range(3) if k != ax]
            pts[sel, ax] = ext[ax] * (1.0 if f % 2 == 0 else -1.0)
            pts[sel, others[0]] = uv[sel, 0] * ext[others[0]]
            pts[sel, others[1]] = uv[sel, 1] * ext[others[1]]
        pts[0] = ext
        return pts

    r, h = spec.size
    if spec.kind == "cylinder":
        side, cap = 2 * np.pi * r * 2 * h, np.pi * r * r
        part = gen.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
        theta = gen.uniform(0.0, 2 * np.pi, n)
        rad = np.where(part == 0, r, r * np.sqrt(gen.uniform(0.0, 1.0, n)))
        y = np.where(part == 0, gen.uniform(-h, h, n), np.where(part == 1, h, -h))
        pts = np.stack([rad * np.cos(theta), y, rad * np.sin(theta)], axis=1)
        pts[0] = (r, h, 0.0)
        return pts

    # capsule: straight section plus two hemispherical caps
    side, caps = 2 * np.pi * r * 2 * h, 4 * np.pi * r * r
    on_side = gen.uniform(0.0, 1.0, n) < side / (side + caps)
    theta = gen.uniform(0.0, 2 * np.pi, n)
    pts = np.stack([r * np.cos(theta), gen.uniform(-h, h, n), r * np.sin(theta)], axis=1)
    d = _sphere_dirs(gen, n) * r
    d[:, 1] += np.where(d[:, 1] >= 0, h, -h)
    pts[~on_side] = d[~on_side]
    pts[0] = (0.0, h + r, 0.0)
    return pts


def gen_procedural_shape(spec: ShapeSpec) -> np.ndarray:
    """Uniform surface samples of ``spec``, normalized by :func:`center_and_scale`.

    Samples come in antipodal pairs and include a point of maximal extent, so
    normalization maps the primitive's own centre to the origin and its own
    extent to 0.5. A normalized sphere therefore has radius exactly 0.5.
    """
    gen = SeededRng(spec.seed).gen
    half = _sample_half(spec, gen, spec.n_points // 2)
    pts = np.empty((spec.n_points, 3))
    pts[0::2] = half
    pts[1::2] = -half
    return center_and_scale(pts)


def random_shape_spec(kind: str, rng: SeededRng, n_points: int = 2048) -> ShapeSpec:
    u = rng.gen.uniform
    sizes = {
        "sphere": lambda: (1.0,),
        "cuboid": lambda: tuple(u(0.3, 1.0, 3)),
        "cylinder": lambda: (u(0.3, 1.0), u(0.3, 1.0)),
        "capsule": lambda: (u(0.2, 0.6), u(0.2, 0.8)),
    }
    return ShapeSpec(kind, tuple(float(s) for s in sizes[kind]()), n_points,
                     int(rng.integers(0, 2**63 - 1)))


# --- toy datasets ------------------------------------------------------------------

@dataclass
class Sample:
    id: str
    partial: np.ndarray
    gt: np.ndarray | None = None
    shape_id: str = ""
    kind: str = ""
    view: ViewParams | None = None


def make_toy_samples(n_shapes: int, views_per_shape: int, n_partial_points: int, seed: int,
                     kinds=SHAPE_KINDS, n_gt_points: int = 2048,
                     grid_resolution: int = TOY_GRID) -> list[Sample]:
    """In-memory toy dataset: ``views_per_shape`` synthetic partial views of each shape.

    Kinds cycle through ``kinds`` so every class is equally represented.
    """
    if min(n_shapes, views_per_shape, n_partial_points) < 1:
        raise ValueError("counts must be >= 1")
    root = SeededRng(seed)
    out = []
    for s in range(n_shapes):
        rng = root.fork(s)
        kind = kinds[s % len(kinds)]
        gt = gen_procedural_shape(random_shape_spec(kind, rng, n_gt_points))
        shape_id = f"shape{s:04d}"
        for v in range(views_per_shape):
            view = sample_view(rng, grid_resolution)
            partial = synthesize_partial(gt, view, n_partial_points, rng)
            out.append(Sample(f"{shape_id}_v{v}", partial, gt, shape_id, kind, view))
    return out


@dataclass
class ManifestRecord:
    id: str
    partial: str
    gt: str | None = None
    view: dict | None = None
    kind: str | None = None


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    root: Path = field(default_factory=Path)
    format_version: int = MANIFEST_VERSION

    def to_json(self) -> dict:
        recs = []
        for r in self.records:
            d = {"id": r.id, "partial": r.partial}
            for key in ("gt", "view", "kind"):
                if getattr(r, key) is not None:
                    d[key] = getattr(r, key)
            recs.append(d)
        return {"format_version": self.format_version, "records": recs}

    def load_samples(self) -> list[Sample]:
        out = []
        for r in self.records:
            gt = read_cloud(self.root / r.gt) if r.gt else None
            try:
                view = ViewParams(**r.view) if r.view else None
            except (TypeError, ValueError) as exc:
                raise DataError(f"record {r.id}: bad view parameters ({exc})") from None
            out.append(Sample(r.id, read_cloud(self.root / r.partial), gt,
                              kind=r.kind or "", view=view))
        return out


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest.to_json(), f, indent=1)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DataError(f"no manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if raw.get("format_version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest version {raw.get('format_version')}")
    records = []
    for d in raw.get("records", []):
        unknown = set(d) - {"id", "partial", "gt", "view", "kind"}
        if unknown or "id" not in d or "partial" not in d:
            raise DataError(f"{path}: malformed record {d!r}")
        records.append(ManifestRecord(d["id"], d["partial"], d.get("gt"), d.get("view"), d.get("kind")))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate record ids")
    root = path.parent
    for r in records:
        for rel in (r.partial, r.gt):
            if rel is not None and not (root / rel).exists():
                raise DataError(f"{path}: record {r.id} references missing file {rel}")
    return DatasetManifest(records, root)


def build_toy_dataset(n_shapes: int, views_per_shape: int, n_partial_points: int, seed: int,
                      out_dir, kinds=SHAPE_KINDS, n_gt_points: int = 2048,
                      grid_resolution: int = TOY_GRID) -> DatasetManifest:
    """Write a toy dataset (GT and partial XYZ files plus manifest.json) to ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    (out_dir / "partial").mkdir(parents=True, exist_ok=True)
    samples = make_toy_samples(n_shapes, views_per_shape, n_partial_points, seed, kinds,
                               n_gt_points, grid_resolution)
    records = []
    written = set()
    for s in samples:
        gt_rel = f"gt/{s.shape_id}.xyz"
        if gt_rel not in written:
            write_xyz(s.gt, out_dir / gt_rel)
            written.add(gt_rel)
        part_rel = f"partial/{s.id}.xyz"
        write_xyz(s.partial, out_dir / part_rel)
        records.append(ManifestRecord(s.id, part_rel, gt_rel, s.view.to_dict(), s.kind))
    manifest = DatasetManifest(records, out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
