"""File formats: the binary cloud snapshot, the scene annotation text file,
and ASCII PLY exports for viewers.

Cloud file (magic "SHPC1", little-endian):
  header:  5-byte magic, u64 point count, u16 class count, then per class a
           u16 byte length plus UTF-8 name bytes.
  points:  3 x f64 position, C x f32 probs, C x f32 uncerts,
           u32 measurement count.

Probabilities/uncertainties are quantized to f32 on write; the loader keeps
the raw f32 values (no renormalization), so write-read-write is
byte-identical. Loaded prob sums therefore hold to f32 precision.

Scene file (text):
  line 1: "SHPC-SCENE 1"
  line 2: class tokens "name:S" / "name:U" (the safety annotation)
  lines:  "x y z class_id" per surface point.
"""

from __future__ import annotations

import struct

import numpy as np

from .fusion import SIGMA_FLOOR
from .regions import RegionSet
from .semantic_cloud import (ClassCatalog, SafetyLabel, SafetyPartition,
                             SemanticPointCloud)

CLOUD_MAGIC = b"SHPC1"
SCENE_MAGIC = "SHPC-SCENE 1"

# argmax-class palette for PLY exports (cycled when C exceeds it); documented
# in the README.
CLASS_PALETTE = [
    (102, 204, 102),   # class 0
    (153, 153, 102),   # class 1
    (51, 102, 204),    # class 2
    (153, 102, 51),    # class 3
    (204, 102, 204),
    (102, 204, 204),
    (204, 204, 51),
    (128, 128, 128),
]
NO_PREDICTION_COLOR = (255, 165, 0)


def _point_dtype(num_classes: int) -> np.dtype:
    return np.dtype([("pos", "<f8", 3), ("p", "<f4", num_classes),
                     ("s", "<f4", num_classes), ("count", "<u4")])


def save_cloud(cloud: SemanticPointCloud, path) -> None:
    C = cloud.num_classes
    with open(path, "wb") as f:
        f.write(CLOUD_MAGIC)
        f.write(struct.pack("<QH", len(cloud), C))
        for name in cloud.catalog.class_names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        body = np.empty(len(cloud), dtype=_point_dtype(C))
        body["pos"] = cloud.positions
        body["p"] = cloud.probs.astype("<f4")
        body["s"] = cloud.uncerts.astype("<f4")
        body["count"] = cloud.measurement_count.astype("<u4")
        f.write(body.tobytes())


def load_cloud(path, catalog: ClassCatalog) -> SemanticPointCloud:
    """Read a cloud snapshot; `catalog` supplies the safe/unsafe annotation
    (the file stores class names only) and must match the stored names."""
    with open(path, "rb") as f:
        magic = f.read(len(CLOUD_MAGIC))
        if magic != CLOUD_MAGIC:
            raise ValueError(f"not a cloud file (magic {magic!r})")
        n, C = struct.unpack("<QH", f.read(10))
        names = []
        for _ in range(C):
            (ln,) = struct.unpack("<H", f.read(2))
            names.append(f.read(ln).decode("utf-8"))
        if tuple(names) != catalog.class_names:
            raise ValueError(f"class names {names} do not match the catalog "
                             f"{list(catalog.class_names)}")
        body = np.frombuffer(f.read(), dtype=_point_dtype(C))
        if len(body) != n:
            raise ValueError("truncated cloud file")

    cloud = SemanticPointCloud(np.array(body["pos"], dtype=np.float64), catalog)
    cloud.probs = np.array(body["p"], dtype=np.float64)
    cloud.uncerts = np.array(body["s"], dtype=np.float64)
    cloud.measurement_count = np.array(body["count"], dtype=np.int64)
    # Rebuild fusion statistics from the stored state (see module docstring).
    cloud._precision = np.maximum(cloud.uncerts, SIGMA_FLOOR) ** -2.0
    cloud._weighted = cloud._precision * cloud.probs
    return cloud


def save_scene(positions: np.ndarray, true_classes: np.ndarray,
               catalog: ClassCatalog, path) -> None:
    with open(path, "w") as f:
        f.write(SCENE_MAGIC + "\n")
        tokens = []
        for i, name in enumerate(catalog.class_names):
            tokens.append(f"{name}:{'S' if i in catalog.safe_set else 'U'}")
        f.write(" ".join(tokens) + "\n")
        for (x, y, z), c in zip(positions, true_classes):
            f.write(f"{x:.17g} {y:.17g} {z:.17g} {int(c)}\n")


def load_scene(path):
    """Parse a scene file; returns (positions, true_classes, catalog)."""
    with open(path) as f:
        header = f.readline().strip()
        if header != SCENE_MAGIC:
            raise ValueError(f"not a scene file (header {header!r})")
        names, safe, unsafe = [], set(), set()
        for i, token in enumerate(f.readline().split()):
            if ":" not in token:
                raise ValueError(f"malformed class token {token!r}")
            name, flag = token.rsplit(":", 1)
            names.append(name)
            if flag == "S":
                safe.add(i)
            elif flag == "U":
                unsafe.add(i)
            else:
                raise ValueError(f"class flag must be S or U, got {flag!r}")
        positions, classes = [], []
        for line_no, line in enumerate(f, start=3):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"line {line_no}: expected 'x y z class_id'")
            positions.append([float(parts[0]), float(parts[1]), float(parts[2])])
            classes.append(int(parts[3]))
    catalog = ClassCatalog(tuple(names), frozenset(safe), frozenset(unsafe))
    return (np.asarray(positions, dtype=np.float64),
            np.asarray(classes, dtype=np.int64), catalog)


def _region_color(region_id: int):
    # deterministic hash of the id onto a bright-ish color
    h = (region_id * 2654435761) & 0xFFFFFFFF
    return (64 + (h & 0x7F), 64 + ((h >> 8) & 0x7F), 64 + ((h >> 16) & 0x7F))


def export_ply(cloud: SemanticPointCloud, path, color_by: str = "class",
               partition: SafetyPartition | None = None,
               region_set: RegionSet | None = None) -> None:
    """ASCII PLY with per-point RGB.

    color_by="class": fixed palette over the argmax class (orange for
    unmeasured points). color_by="safety": safe white, unsafe black,
    unclear hashed by region id (requires partition; region_set optional).
    """
    n = len(cloud)
    colors = np.zeros((n, 3), dtype=np.uint8)
    if color_by == "class":
        argmax = cloud.probs.argmax(axis=1)
        for i in range(n):
            if cloud.measurement_count[i] == 0:
                colors[i] = NO_PREDICTION_COLOR
            else:
                colors[i] = CLASS_PALETTE[argmax[i] % len(CLASS_PALETTE)]
    elif color_by == "safety":
        if partition is None:
            raise ValueError("safety coloring needs a partition")
        for i in range(n):
            label = SafetyLabel(int(partition.labels[i]))
            if label is SafetyLabel.SAFE:
                colors[i] = (255, 255, 255)
            elif label is SafetyLabel.UNSAFE:
                colors[i] = (0, 0, 0)
            else:
                rid = region_set.region_of(i) if region_set is not None else None
                colors[i] = _region_color(rid) if rid is not None else NO_PREDICTION_COLOR
    else:
        raise ValueError(f"unknown color_by {color_by!r}")

    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {n}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        f.write("end_header\n")
        for (x, y, z), (r, g, b) in zip(cloud.positions, colors):
            f.write(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n")


def read_ply_vertex_count(path) -> int:
    """Minimal PLY consumer used by round-trip checks."""
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        count = None
        for line in f:
            line = line.strip()
            if line.startswith("element vertex"):
                count = int(line.split()[-1])
            if line == "end_header":
                break
        if count is None:
            raise ValueError("no vertex element found")
        return count
