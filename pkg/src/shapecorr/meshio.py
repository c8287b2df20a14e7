"""Mesh file I/O: OFF, ASCII/binary PLY and OBJ (positions + faces only).

Vertex and face order is preserved bit-exactly on load; binary PLY stores
positions as float64 so save -> load round-trips are lossless.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .meshes import Mesh, MeshValidationError

_FORMATS = ("off", "ply", "obj")


class MeshFormatError(ValueError):
    """Parse failure; carries the offending line number when known."""

    def __init__(self, path, message, line=None):
        loc = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{loc}: {message}")
        self.path = str(path)
        self.line = line


def load_mesh(path, id=None):
    """Load a mesh, dispatching on the file extension."""
    path = Path(path)
    ext = path.suffix.lower().lstrip(".")
    if ext not in _FORMATS:
        raise MeshFormatError(path, f"unsupported extension {ext!r} (want off/ply/obj)")
    if not path.exists():
        raise FileNotFoundError(path)
    if ext == "off":
        v, f = _read_off(path)
    elif ext == "ply":
        v, f = _read_ply(path)
    else:
        v, f = _read_obj(path)
    return Mesh(v, f, id=id if id is not None else path.stem)


def save_mesh(mesh, path, format=None):
    """Write a mesh; format inferred from the extension unless given.

    PLY is written in binary little-endian with float64 positions.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in _FORMATS:
        raise MeshFormatError(path, f"unsupported format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "off":
        _write_off(mesh, path)
    elif fmt == "ply":
        _write_ply(mesh, path)
    else:
        _write_obj(mesh, path)


# --- OFF ---

def _data_lines(path):
    """Yield (lineno, stripped line) skipping blanks and comments."""
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _read_off(path):
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshFormatError(path, "empty file")
    counts = None
    if header.upper().startswith("OFF"):
        rest = header[3:].strip()
        if rest:  # counts on the same line as the keyword
            counts = (lineno, rest)
    else:
        counts = (lineno, header)  # headerless OFF variant
    if counts is None:
        try:
            counts = next(lines)
        except StopIteration:
            raise MeshFormatError(path, "missing count line")
    lineno, line = counts
    parts = line.split()
    if len(parts) < 2:
        raise MeshFormatError(path, f"bad count line {line!r}", lineno)
    try:
        nv, nf = int(parts[0]), int(parts[1])
    except ValueError:
        raise MeshFormatError(path, f"bad count line {line!r}", lineno)

    vertices = np.empty((nv, 3))
    for i in range(nv):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(path, f"expected {nv} vertices, got {i}")
        parts = line.split()
        if len(parts) < 3:
            raise MeshFormatError(path, f"bad vertex line {line!r}", lineno)
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            raise MeshFormatError(path, f"bad vertex line {line!r}", lineno)

    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(path, f"expected {nf} faces, got {i}")
        parts = line.split()
        try:
            k = int(parts[0])
            idx = [int(p) for p in parts[1:1 + k]]
        except (ValueError, IndexError):
            raise MeshFormatError(path, f"bad face line {line!r}", lineno)
        if k != 3 or len(idx) != 3:
            raise MeshFormatError(path, f"only triangles supported, got {k}-gon", lineno)
        faces[i] = idx
    return vertices, faces


def _write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for v in mesh.vertices:
            fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


# --- PLY ---

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshFormatError(path, "not a PLY file", 1)
        fmt = None
        elements = []  # (name, count, [(prop_name, type, list_count_type|None)])
        lineno = 1
        while True:
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise MeshFormatError(path, "unterminated header", lineno)
            line = raw.decode("ascii", "replace").strip()
            if not line or line.startswith("comment") or line.startswith("obj_info"):
                continue
            parts = line.split()
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise MeshFormatError(path, "property before element", lineno)
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], parts[3], parts[2]))
                else:
                    elements[-1][2].append((parts[2], parts[1], None))
            elif parts[0] == "end_header":
                break
            else:
                raise MeshFormatError(path, f"unknown header line {line!r}", lineno)
        if fmt is None:
            raise MeshFormatError(path, "missing format line")
        if fmt == "ascii":
            return _read_ply_ascii(path, fh, elements, lineno)
        if fmt in ("binary_little_endian", "binary_big_endian"):
            endian = "<" if fmt == "binary_little_endian" else ">"
            return _read_ply_binary(path, fh, elements, endian)
        raise MeshFormatError(path, f"unsupported PLY format {fmt!r}")


def _ply_extract(path, elements, data):
    vertices = faces = None
    for (name, count, props), rows in zip(elements, data):
        if name == "vertex":
            names = [p[0] for p in props]
            try:
                ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
            except ValueError:
                raise MeshFormatError(path, "vertex element lacks x/y/z")
            vertices = np.array([[r[ix], r[iy], r[iz]] for r in rows], dtype=np.float64)
            vertices = vertices.reshape(count, 3)
        elif name == "face":
            out = np.empty((count, 3), dtype=np.int64)
            for i, r in enumerate(rows):
                idx = r[0]
                if len(idx) != 3:
                    raise MeshFormatError(path, f"face {i} is a {len(idx)}-gon")
                out[i] = idx
            faces = out
    if vertices is None or faces is None:
        raise MeshFormatError(path, "PLY lacks vertex or face element")
    return vertices, faces


def _read_ply_ascii(path, fh, elements, lineno):
    data = []
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise MeshFormatError(path, f"truncated {name} data", lineno)
            parts = raw.decode("ascii", "replace").split()
            row, k = [], 0
            for pname, ptype, list_type in props:
                if list_type is not None:
                    n = int(parts[k]); k += 1
                    vals = [int(float(p)) for p in parts[k:k + n]]; k += n
                    row.append(vals)
                else:
                    row.append(float(parts[k])); k += 1
            rows.append(row)
        data.append(rows)
    return _ply_extract(path, elements, data)


def _read_ply_binary(path, fh, elements, endian):
    data = []
    for name, count, props in elements:
        rows = []
        fixed = all(p[2] is None for p in props)
        if fixed:
            fmt = endian + "".join(_PLY_TYPES[p[1]] for p in props)
            size = struct.calcsize(fmt)
            buf = fh.read(size * count)
            if len(buf) != size * count:
                raise MeshFormatError(path, f"truncated {name} data")
            rows = [list(struct.unpack_from(fmt, buf, i * size)) for i in range(count)]
        else:
            for _ in range(count):
                row = []
                for pname, ptype, list_type in props:
                    if list_type is None:
                        code = _PLY_TYPES[ptype]
                        size = struct.calcsize(code)
                        row.append(struct.unpack(endian + code, fh.read(size))[0])
                    else:
                        ccode = _PLY_TYPES[list_type]
                        n = struct.unpack(endian + ccode, fh.read(struct.calcsize(ccode)))[0]
                        icode = _PLY_TYPES[ptype]
                        isize = struct.calcsize(icode)
                        buf = fh.read(isize * n)
                        if len(buf) != isize * n:
                            raise MeshFormatError(path, f"truncated {name} data")
                        row.append(list(struct.unpack(endian + icode * n, buf)))
                rows.append(row)
        data.append(rows)
    return _ply_extract(path, elements, data)


def _write_ply(mesh, path):
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        face_rec = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", 3)])
        face_rec["n"] = 3
        face_rec["idx"] = mesh.faces
        fh.write(face_rec.tobytes())


def save_colored_ply(mesh, colors, path):
    """Binary PLY with per-vertex uchar RGB (visualization output only)."""
    colors = np.asarray(colors)
    if colors.shape != (mesh.n_vertices, 3):
        raise ValueError("colors must be (n_vertices, 3)")
    if colors.dtype != np.uint8:
        colors = np.clip(np.rint(colors * 255.0), 0, 255).astype(np.uint8)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    vert_rec = np.empty(mesh.n_vertices,
                        dtype=[("xyz", "<f8", 3), ("rgb", "u1", 3)])
    vert_rec["xyz"] = mesh.vertices
    vert_rec["rgb"] = colors
    face_rec = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", 3)])
    face_rec["n"] = 3
    face_rec["idx"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vert_rec.tobytes())
        fh.write(face_rec.tobytes())


# --- OBJ ---

def _read_obj(path):
    vertices, faces = [], []
    for lineno, line in _data_lines_obj(path):
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshFormatError(path, f"bad vertex line {line!r}", lineno)
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise MeshFormatError(path, f"bad vertex line {line!r}", lineno)
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshFormatError(path, "only triangle faces supported", lineno)
            try:
                # v, v/vt, v/vt/vn and v//vn forms; normals/UVs ignored
                idx = [int(p.split("/")[0]) for p in parts[1:]]
            except ValueError:
                raise MeshFormatError(path, f"bad face line {line!r}", lineno)
            faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
        # vn/vt/usemtl/groups silently ignored
    if not vertices:
        raise MeshFormatError(path, "no vertices found")
    return np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def _data_lines_obj(path):
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def _write_obj(mesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# --- validation report ---

def validation_report(mesh):
    """Line-oriented structural report: non-manifold edges, boundary size,
    winding consistency per connected component.

    Non-manifold input is accepted; this report is how violations surface.
    """
    from .geometry import connected_components

    lines = [f"mesh {mesh.id}: {mesh.n_vertices} vertices, {mesh.n_faces} faces"]
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(und, axis=0, return_inverse=True,
                                       return_counts=True)
    n_boundary = int((counts == 1).sum())
    nonmanifold = np.where(counts > 2)[0]
    lines.append(f"edges: {len(edges)} total, {n_boundary} boundary, "
                 f"{len(nonmanifold)} non-manifold")
    for e in nonmanifold[:20]:
        lines.append(f"non-manifold edge ({edges[e][0]}, {edges[e][1]}) "
                     f"shared by {counts[e]} faces")

    comps = connected_components(mesh)
    lines.append(f"components: {len(comps)}")
    # winding: an interior edge of a consistently wound surface appears once
    # in each direction
    flipped = 0
    order = np.argsort(inverse, kind="stable")
    start = 0
    sorted_dirs = directed[order]
    for ei, cnt in enumerate(counts):
        if cnt == 2:
            d0, d1 = sorted_dirs[start], sorted_dirs[start + 1]
            if d0[0] == d1[0]:
                flipped += 1
        start += cnt
    if flipped:
        lines.append(f"winding: {flipped} interior edges with inconsistent "
                     f"face orientation")
    else:
        lines.append("winding: consistent")
    return "\n".join(lines)
