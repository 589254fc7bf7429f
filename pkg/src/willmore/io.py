"""ASCII OBJ and OFF reading and writing.

OBJ indices are 1-based on disk and 0-based in memory. Coordinates are written
with 17 significant digits so a write/read cycle reproduces every float64.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import TriMesh


class MeshFormatError(ValueError):
    def __init__(self, path, line: int | None, msg: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")
        self.path = str(path)
        self.line = line


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _guess_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("obj", "off"):
        raise MeshFormatError(path, None, f"unsupported mesh format {fmt!r} (use obj or off)")
    return fmt


def read_mesh(path, fmt: str | None = None) -> TriMesh:
    path = Path(path)
    fmt = _guess_format(path, fmt)
    text = path.read_text()
    if fmt == "obj":
        return _read_obj(path, text)
    return _read_off(path, text)


def write_mesh(mesh: TriMesh, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _guess_format(path, fmt)
    lines = []
    if fmt == "obj":
        lines += ["v " + " ".join(_fmt(c) for c in row) for row in mesh.vertices]
        lines += ["f " + " ".join(str(i + 1) for i in row) for row in mesh.faces.tolist()]
    else:
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        lines += [" ".join(_fmt(c) for c in row) for row in mesh.vertices]
        lines += ["3 " + " ".join(str(i) for i in row) for row in mesh.faces.tolist()]
    path.write_text("\n".join(lines) + "\n")


def _read_obj(path: Path, text: str) -> TriMesh:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise MeshFormatError(path, lineno, "vertex record needs 3 coordinates")
            try:
                verts.append([float(t) for t in rest[:3]])
            except ValueError as exc:
                raise MeshFormatError(path, lineno, f"bad coordinate: {exc}") from None
        elif tag == "f":
            if len(rest) != 3:
                raise MeshFormatError(
                    path, lineno, f"face has {len(rest)} vertices; only triangles are supported"
                )
            idx = []
            for tok in rest:
                try:
                    k = int(tok.split("/", 1)[0])
                except ValueError:
                    raise MeshFormatError(path, lineno, f"bad face index {tok!r}") from None
                # negative indices are relative to the vertices read so far
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise MeshFormatError(path, lineno, f"face index {tok} out of range")
                idx.append(k)
            faces.append(idx)
        # other records (vn, vt, g, o, s, usemtl, ...) carry nothing we need
    if not faces:
        raise MeshFormatError(path, None, "no faces found")
    return TriMesh(np.array(verts), np.array(faces))


def _read_off(path: Path, text: str) -> TriMesh:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines or not lines[0][1].startswith("OFF"):
        raise MeshFormatError(path, lines[0][0] if lines else None, "missing OFF header")
    head_no, head = lines[0]
    tokens = head[3:].split()
    pos = 1
    if not tokens:
        if len(lines) < 2:
            raise MeshFormatError(path, head_no, "missing counts line")
        head_no, head = lines[1]
        tokens = head.split()
        pos = 2
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
    except (ValueError, IndexError):
        raise MeshFormatError(path, head_no, "counts line must be 'nv nf ne'") from None
    body = lines[pos:]
    if len(body) != nv + nf:
        raise MeshFormatError(
            path, head_no, f"header declares {nv} vertices and {nf} faces but {len(body)} records follow"
        )
    verts = []
    for lineno, line in body[:nv]:
        parts = line.split()
        try:
            verts.append([float(t) for t in parts[:3]])
        except ValueError as exc:
            raise MeshFormatError(path, lineno, f"bad coordinate: {exc}") from None
        if len(parts) < 3:
            raise MeshFormatError(path, lineno, "vertex record needs 3 coordinates")
    faces = []
    for lineno, line in body[nv:]:
        try:
            parts = [int(t) for t in line.split()]
        except ValueError:
            raise MeshFormatError(path, lineno, "bad face record") from None
        if not parts or parts[0] != 3 or len(parts) < 4:
            raise MeshFormatError(path, lineno, "only triangular faces are supported")
        idx = parts[1:4]
        if any(not 0 <= k < nv for k in idx):
            raise MeshFormatError(path, lineno, "face index out of range")
        faces.append(idx)
    return TriMesh(np.array(verts), np.array(faces))
