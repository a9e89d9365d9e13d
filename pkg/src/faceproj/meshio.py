"""Triangle meshes and surface file formats.

Two interchange formats are supported:

* PLY, ASCII or binary little-endian: element ``vertex`` with float or
  double properties x, y, z and optionally nx, ny, nz (plus uchar
  red/green/blue, used by colormap exports), and an optional element
  ``face`` with a (uchar count, int32 indices) list property. Triangles
  only.
* An OBJ subset: ``v``, ``vn``, and ``f`` lines, faces as ``f a b c`` or
  ``f a//an b//bn c//cn`` with 1-based indices.

Writers keep full float64 precision (double properties in PLY, %.17g in
text formats), so save/load round-trips are bit-exact. Parse errors carry
the byte offset of the offending content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import MeshFormatError
from .geometry import SurfacePointSet, as_points


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable indexed triangle mesh, optionally with vertex normals."""

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int32]
    normals: NDArray[np.float64] | None = None

    def __post_init__(self):
        v = as_points(self.vertices)
        t = np.asarray(self.triangles, dtype=np.int32)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (M, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError(
                f"triangle indices must lie in [0, {len(v)}), "
                f"got range [{t.min()}, {t.max()}]"
            )
        if t.size:
            a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            bad = np.nonzero(area2 == 0.0)[0]
            if len(bad):
                raise ValueError(f"zero-area triangle at row {bad[0]}")
        n = self.normals
        if n is not None:
            n = as_points(n)
            if n.shape != v.shape:
                raise ValueError("normals shape must match vertices")
            n = np.ascontiguousarray(n)
            n.flags.writeable = False
        v = np.ascontiguousarray(v)
        t = np.ascontiguousarray(t)
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def area(self) -> float:
        """Total surface area."""
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())


def mesh_to_point_set(
    m: TriangleMesh, fallback_direction=(0.0, 1.0, 0.0)
) -> SurfacePointSet:
    """Vertices of ``m`` as a point set with area-weighted vertex normals.

    Each triangle contributes its (unnormalized) face normal to its three
    vertices; the cross-product magnitude supplies the area weighting.
    Vertices referenced by no triangle get the unit fallback direction.
    """
    if m.n_vertices == 0:
        raise ValueError("empty mesh")
    acc = np.zeros_like(m.vertices)
    if m.n_triangles:
        a = m.vertices[m.triangles[:, 0]]
        b = m.vertices[m.triangles[:, 1]]
        c = m.vertices[m.triangles[:, 2]]
        face = np.cross(b - a, c - a)
        for k in range(3):
            np.add.at(acc, m.triangles[:, k], face)
    norms = np.linalg.norm(acc, axis=1)
    silent = norms == 0.0
    fb = np.asarray(fallback_direction, dtype=np.float64)
    fb = fb / np.linalg.norm(fb)
    acc[silent] = fb
    norms[silent] = 1.0
    return SurfacePointSet(m.vertices, acc / norms[:, None])


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_SCALARS = {
    "char": ("<i1", 1), "int8": ("<i1", 1),
    "uchar": ("<u1", 1), "uint8": ("<u1", 1),
    "short": ("<i2", 2), "int16": ("<i2", 2),
    "ushort": ("<u2", 2), "uint16": ("<u2", 2),
    "int": ("<i4", 4), "int32": ("<i4", 4),
    "uint": ("<u4", 4), "uint32": ("<u4", 4),
    "float": ("<f4", 4), "float32": ("<f4", 4),
    "double": ("<f8", 8), "float64": ("<f8", 8),
}


def _parse_ply_header(raw: bytes, path):
    """Returns (format, elements, payload_offset); elements preserve order."""
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply"):
        raise MeshFormatError(f"{path}: missing 'ply' magic", offset=0)
    if end < 0:
        raise MeshFormatError(f"{path}: unterminated header", offset=len(raw))
    header = raw[:end].decode("ascii", "replace")
    fmt = None
    elements = []  # (name, count, [(prop_name, scalar) or ("__list__", count_t, item_t)])
    offset = 0
    for line in header.split("\n"):
        line_offset = offset
        offset += len(line) + 1
        words = line.split()
        if not words or words[0] in ("ply", "comment", "obj_info"):
            continue
        if words[0] == "format":
            if words[1] == "ascii":
                fmt = "ascii"
            elif words[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise MeshFormatError(f"{path}: unsupported format {words[1]!r}", offset=line_offset)
        elif words[0] == "element":
            try:
                elements.append([words[1], int(words[2]), []])
            except (IndexError, ValueError):
                raise MeshFormatError(f"{path}: bad element line {line!r}", offset=line_offset) from None
        elif words[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}: property before any element", offset=line_offset)
            if words[1] == "list":
                if words[2] not in _PLY_SCALARS or words[3] not in _PLY_SCALARS:
                    raise MeshFormatError(f"{path}: bad list types in {line!r}", offset=line_offset)
                elements[-1][2].append(("__list__", words[2], words[3], words[4]))
            else:
                if words[1] not in _PLY_SCALARS:
                    raise MeshFormatError(
                        f"{path}: unsupported property type {words[1]!r}", offset=line_offset
                    )
                elements[-1][2].append((words[2], words[1]))
        else:
            raise MeshFormatError(f"{path}: unrecognized header line {line!r}", offset=line_offset)
    if fmt is None:
        raise MeshFormatError(f"{path}: header lacks a format line", offset=0)
    return fmt, elements, end + len(b"end_header\n")


def _ascii_tokens(raw: bytes, start: int):
    """Yields (token, byte_offset) for whitespace-separated ASCII payload."""
    pos = start
    n = len(raw)
    while pos < n:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            return
        tok_start = pos
        while pos < n and not raw[pos : pos + 1].isspace():
            pos += 1
        yield raw[tok_start:pos], tok_start


def load_ply(path):
    """Parse a PLY file into (vertices, normals, colors, triangles)."""
    with open(path, "rb") as f:
        raw = f.read()
    fmt, elements, payload = _parse_ply_header(raw, path)

    columns: dict[str, np.ndarray] = {}
    faces = None
    if fmt == "ascii":
        tokens = _ascii_tokens(raw, payload)

        def next_token(what):
            try:
                return next(tokens)
            except StopIteration:
                raise MeshFormatError(
                    f"{path}: truncated payload while reading {what}", offset=len(raw)
                ) from None

        for name, count, props in elements:
            if any(p[0] == "__list__" for p in props):
                if len(props) != 1:
                    raise MeshFormatError(f"{path}: mixed list element {name!r}", offset=payload)
                rows = []
                for row in range(count):
                    tok, off = next_token(f"{name} row {row}")
                    try:
                        k = int(tok)
                    except ValueError:
                        raise MeshFormatError(
                            f"{path}: bad list count {tok!r} in {name} row {row}", offset=off
                        ) from None
                    entry = []
                    for _ in range(k):
                        tok, off2 = next_token(f"{name} row {row}")
                        try:
                            entry.append(int(tok))
                        except ValueError:
                            raise MeshFormatError(
                                f"{path}: bad index {tok!r} in {name} row {row}", offset=off2
                            ) from None
                    rows.append((row, off, entry))
                if name == "face":
                    faces = rows
            else:
                data = np.empty((count, len(props)))
                for row in range(count):
                    for j, (pname, _) in enumerate(props):
                        tok, off = next_token(f"{name} row {row}")
                        try:
                            data[row, j] = float(tok)
                        except ValueError:
                            raise MeshFormatError(
                                f"{path}: bad {pname} value {tok!r} in {name} row {row}", offset=off
                            ) from None
                if name == "vertex":
                    for j, (pname, _) in enumerate(props):
                        columns[pname] = data[:, j]
    else:
        pos = payload
        for name, count, props in elements:
            if any(p[0] == "__list__" for p in props):
                if len(props) != 1:
                    raise MeshFormatError(f"{path}: mixed list element {name!r}", offset=pos)
                _, count_t, item_t, _ = props[0]
                cdt, csz = _PLY_SCALARS[count_t]
                idt, isz = _PLY_SCALARS[item_t]
                rows = []
                for row in range(count):
                    if pos + csz > len(raw):
                        raise MeshFormatError(
                            f"{path}: truncated payload in {name} row {row}", offset=pos
                        )
                    k = int(np.frombuffer(raw, cdt, 1, pos)[0])
                    pos += csz
                    if pos + k * isz > len(raw):
                        raise MeshFormatError(
                            f"{path}: truncated payload in {name} row {row}", offset=pos
                        )
                    entry = np.frombuffer(raw, idt, k, pos).tolist()
                    pos += k * isz
                    rows.append((row, pos - csz - k * isz, entry))
                if name == "face":
                    faces = rows
            else:
                dtype = np.dtype([(p, _PLY_SCALARS[t][0]) for p, t in props])
                need = dtype.itemsize * count
                if pos + need > len(raw):
                    raise MeshFormatError(f"{path}: truncated {name} payload", offset=pos)
                table = np.frombuffer(raw, dtype, count, pos)
                pos += need
                if name == "vertex":
                    for pname, _ in props:
                        columns[pname] = table[pname].astype(np.float64)

    for axis in ("x", "y", "z"):
        if axis not in columns:
            raise MeshFormatError(f"{path}: vertex element lacks property {axis!r}", offset=0)
    vertices = np.column_stack([columns["x"], columns["y"], columns["z"]])
    normals = None
    if all(k in columns for k in ("nx", "ny", "nz")):
        normals = np.column_stack([columns["nx"], columns["ny"], columns["nz"]])
    colors = None
    if all(k in columns for k in ("red", "green", "blue")):
        colors = np.column_stack(
            [columns["red"], columns["green"], columns["blue"]]
        ).astype(np.uint8)

    triangles = None
    if faces is not None:
        tri = np.empty((len(faces), 3), dtype=np.int32)
        for row, off, entry in faces:
            if len(entry) != 3:
                raise MeshFormatError(
                    f"{path}: face row {row} has {len(entry)} vertices; triangles only", offset=off
                )
            if min(entry) < 0 or max(entry) >= len(vertices):
                raise MeshFormatError(
                    f"{path}: face row {row} references vertex {max(entry)} "
                    f"of {len(vertices)}", offset=off
                )
            tri[row] = entry
        triangles = tri
    return vertices, normals, colors, triangles


def save_ply(path, vertices, triangles=None, normals=None, colors=None, binary=True):
    """Write a PLY file; coordinates are stored as double (lossless)."""
    v = as_points(vertices)
    props = [("x", v[:, 0]), ("y", v[:, 1]), ("z", v[:, 2])]
    if normals is not None:
        n = as_points(normals)
        if n.shape != v.shape:
            raise ValueError("normals shape must match vertices")
        props += [("nx", n[:, 0]), ("ny", n[:, 1]), ("nz", n[:, 2])]
    if colors is not None:
        c = np.asarray(colors, dtype=np.uint8)
        if c.shape != (len(v), 3):
            raise ValueError("colors must be (N, 3) uint8")
        props += [("red", c[:, 0]), ("green", c[:, 1]), ("blue", c[:, 2])]

    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    header.append(f"element vertex {len(v)}")
    for name, col in props:
        header.append(f"property {'uchar' if col.dtype == np.uint8 else 'double'} {name}")
    t = None
    if triangles is not None:
        t = np.asarray(triangles, dtype=np.int32)
        header.append(f"element face {len(t)}")
        header.append("property list uchar int32 vertex_indices")
    header.append("end_header")

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            dtype = np.dtype(
                [(name, "<u1" if col.dtype == np.uint8 else "<f8") for name, col in props]
            )
            table = np.empty(len(v), dtype=dtype)
            for name, col in props:
                table[name] = col
            f.write(table.tobytes())
            if t is not None:
                face_dtype = np.dtype([("n", "<u1"), ("idx", "<i4", (3,))])
                rows = np.empty(len(t), dtype=face_dtype)
                rows["n"] = 3
                rows["idx"] = t
                f.write(rows.tobytes())
        else:
            for row in range(len(v)):
                fields = [
                    str(int(col[row])) if col.dtype == np.uint8 else f"{col[row]:.17g}"
                    for _, col in props
                ]
                f.write((" ".join(fields) + "\n").encode("ascii"))
            if t is not None:
                for tri in t:
                    f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode("ascii"))


# ---------------------------------------------------------------------------
# OBJ subset
# ---------------------------------------------------------------------------

def load_obj(path):
    """Parse the v/vn/f OBJ subset into (vertices, normals, triangles)."""
    vertices = []
    normals = []
    faces = []
    offset = 0
    with open(path, "rb") as f:
        raw = f.read()
    for line in raw.split(b"\n"):
        line_offset = offset
        offset += len(line) + 1
        text = line.decode("utf-8", "replace").strip()
        if not text or text.startswith("#"):
            continue
        words = text.split()
        if words[0] == "v":
            if len(words) != 4:
                raise MeshFormatError(f"{path}: bad vertex line {text!r}", offset=line_offset)
            vertices.append([float(w) for w in words[1:]])
        elif words[0] == "vn":
            if len(words) != 4:
                raise MeshFormatError(f"{path}: bad normal line {text!r}", offset=line_offset)
            normals.append([float(w) for w in words[1:]])
        elif words[0] == "f":
            if len(words) != 4:
                raise MeshFormatError(
                    f"{path}: face {text!r} is not a triangle", offset=line_offset
                )
            entry = []
            for w in words[1:]:
                head = w.split("/")[0]
                try:
                    idx = int(head)
                except ValueError:
                    raise MeshFormatError(
                        f"{path}: bad face vertex {w!r}", offset=line_offset
                    ) from None
                if idx < 1:
                    raise MeshFormatError(
                        f"{path}: face indices are 1-based, got {idx}", offset=line_offset
                    )
                entry.append(idx - 1)
            faces.append((entry, line_offset))
        else:
            raise MeshFormatError(
                f"{path}: unsupported OBJ directive {words[0]!r}", offset=line_offset
            )
    v = np.array(vertices, dtype=np.float64).reshape(len(vertices), 3)
    tri = None
    if faces:
        tri = np.empty((len(faces), 3), dtype=np.int32)
        for row, (entry, line_offset) in enumerate(faces):
            if max(entry) >= len(v):
                raise MeshFormatError(
                    f"{path}: face row {row} references vertex {max(entry) + 1} "
                    f"of {len(v)}", offset=line_offset
                )
            tri[row] = entry
    n = np.array(normals, dtype=np.float64) if normals else None
    if n is not None and n.shape != v.shape:
        # the subset ties vn to v one-to-one; anything else is out of scope
        raise MeshFormatError(f"{path}: expected one vn per v, got {len(n)}", offset=0)
    return v, n, tri


def save_obj(path, vertices, triangles=None, normals=None):
    v = as_points(vertices)
    with open(path, "w", encoding="ascii") as f:
        for p in v:
            f.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        if normals is not None:
            n = as_points(normals)
            for p in n:
                f.write(f"vn {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        if triangles is not None:
            for t in np.asarray(triangles, dtype=np.int64):
                if normals is not None:
                    f.write(f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}\n")
                else:
                    f.write(f"f {t[0]+1} {t[1]+1} {t[2]+1}\n")


# ---------------------------------------------------------------------------
# format-dispatching entry points
# ---------------------------------------------------------------------------

def _format_for(path, fmt):
    if fmt is not None:
        return fmt
    name = str(path).lower()
    if name.endswith(".ply"):
        return "ply"
    if name.endswith(".obj"):
        return "obj"
    raise ValueError(f"cannot infer surface format from {path!r}; pass fmt explicitly")


def load_surface(path, fmt: str | None = None):
    """Load a surface file: TriangleMesh when faces exist, else SurfacePointSet."""
    fmt = _format_for(path, fmt)
    if fmt == "ply":
        vertices, normals, _, triangles = load_ply(path)
    elif fmt == "obj":
        vertices, normals, triangles = load_obj(path)
    else:
        raise ValueError(f"unsupported surface format {fmt!r}")
    if triangles is not None:
        return TriangleMesh(vertices, triangles, normals)
    if normals is not None:
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(lengths == 0.0):
            raise MeshFormatError(f"{path}: zero-length vertex normal", offset=0)
        # float32 files carry rounded normals; renormalize those, but leave
        # already-unit float64 normals bit-identical
        if np.abs(lengths - 1.0).max() > 1e-9:
            normals = normals / lengths
    return SurfacePointSet(vertices, normals)


def save_surface(obj, path, fmt: str | None = None, binary: bool = True):
    """Write a TriangleMesh or SurfacePointSet to PLY or OBJ."""
    fmt = _format_for(path, fmt)
    if isinstance(obj, TriangleMesh):
        vertices, triangles, normals = obj.vertices, obj.triangles, obj.normals
    elif isinstance(obj, SurfacePointSet):
        vertices, triangles, normals = obj.points, None, obj.normals
    else:
        raise TypeError(f"cannot save {type(obj).__name__} as a surface")
    if fmt == "ply":
        save_ply(path, vertices, triangles, normals, binary=binary)
    elif fmt == "obj":
        save_obj(path, vertices, triangles, normals)
    else:
        raise ValueError(f"unsupported surface format {fmt!r}")
