"""Low-level file formats: ASCII OBJ meshes, binary PGM masks, DTF distance grids.

Floats are written with repr-level precision so that save/load round trips
are bit-exact.
"""

import json
import os

import numpy as np

from .errors import LoadError


def _open_or_load_error(path, mode="r"):
    try:
        return open(path, mode)
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc


def write_obj(path, vertices, triangles):
    """Write a triangle mesh as ASCII OBJ (v/f records only)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    with open(path, "w") as fh:
        for v in vertices:
            fh.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for t in triangles:
            fh.write("f %d %d %d\n" % (t[0] + 1, t[1] + 1, t[2] + 1))


def read_obj(path):
    """Read an ASCII OBJ file. Returns (vertices (N,3) float64, triangles (T,3) int64).

    Only v and f records are honored; f records may carry v/vt/vn slashes and
    must be triangles.
    """
    vertices = []
    triangles = []
    with _open_or_load_error(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise LoadError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise LoadError(f"{path}:{lineno}: only triangle faces are supported")
                idx = [int(p.split("/")[0]) for p in parts[1:4]]
                if any(i == 0 for i in idx):
                    raise LoadError(f"{path}:{lineno}: OBJ face indices are 1-based")
                triangles.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    return verts, tris


def write_pgm(path, mask):
    """Write a binary mask as binary PGM (P5), foreground=255, background=0."""
    mask = np.asarray(mask)
    data = np.where(mask.astype(bool), 255, 0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def read_pgm(path):
    """Read a binary PGM mask. Returns a bool array (H,W); nonzero = foreground."""
    with _open_or_load_error(path, "rb") as fh:
        raw = fh.read()
    fields = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise LoadError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval > 255:
        raise LoadError(f"{path}: 16-bit PGM not supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    if pixels.size != w * h:
        raise LoadError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w) != 0


DTF_MAGIC = b"DTF1"


def write_dtf(path, image):
    """Write a float32 distance grid: magic, uint32 width/height, row-major data."""
    image = np.ascontiguousarray(image, dtype=np.float32)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(DTF_MAGIC)
        fh.write(np.asarray([w, h], dtype="<u4").tobytes())
        fh.write(image.astype("<f4").tobytes())


def read_dtf(path):
    """Read a DTF distance grid back as float32 (H,W)."""
    with _open_or_load_error(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != DTF_MAGIC:
        raise LoadError(f"{path}: bad magic {raw[:4]!r}")
    w, h = np.frombuffer(raw, dtype="<u4", count=2, offset=4)
    data = np.frombuffer(raw, dtype="<f4", count=int(w) * int(h), offset=12)
    if data.size != int(w) * int(h):
        raise LoadError(f"{path}: truncated data")
    return data.reshape(int(h), int(w)).copy()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"{path}: {exc}") from exc


def require_fields(record, fields, where):
    """Raise LoadError naming the first missing field of a JSON record."""
    for f in fields:
        if f not in record:
            raise LoadError(f"{where}: missing field '{f}'")
    return record


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
