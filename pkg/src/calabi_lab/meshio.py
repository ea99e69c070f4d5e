"""Mesh and field file formats: PLY (ascii / binary little-endian), OBJ, CSV, JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = [
    "dump_json",
    "read_field_csv",
    "read_obj",
    "read_ply",
    "write_field_csv",
    "write_obj",
    "write_ply",
]


def _as_xyz(vertices) -> np.ndarray:
    v = np.asarray(vertices)
    if np.iscomplexobj(v):
        v = np.c_[v.real, v.imag, np.zeros(v.shape[0])]
    v = np.asarray(v, dtype=float)
    if v.ndim == 2 and v.shape[1] == 2:
        v = np.c_[v, np.zeros(len(v))]
    return v


def write_ply(path, vertices, faces, binary: bool = True, vertex_scalars: dict | None = None,
              comments: tuple = ()) -> None:
    """Write a triangle mesh; complex or 2D vertices are lifted to z = 0.

    ``vertex_scalars`` adds named float properties per vertex (e.g. a
    labyrinth overlay mask or a distance field).
    """
    v = _as_xyz(vertices)
    f = np.asarray(faces, dtype=np.int32)
    extra = dict(vertex_scalars or {})
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    header += [f"comment {c}" for c in comments]
    header += [f"element vertex {len(v)}", "property double x", "property double y", "property double z"]
    header += [f"property double {name}" for name in extra]
    header += [f"element face {len(f)}", "property list uchar int vertex_indices", "end_header"]
    cols = [v] + [np.asarray(a, dtype=float).reshape(-1, 1) for a in extra.values()]
    vdata = np.hstack(cols)
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(vdata.astype("<f8").tobytes())
            rec = np.zeros(len(f), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            rec["n"] = 3
            rec["idx"] = f
            fh.write(rec.tobytes())
        else:
            for row in vdata:
                fh.write((" ".join(repr(float(x)) for x in row) + "\n").encode("ascii"))
            for tri in f:
                fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode("ascii"))


def read_ply(path):
    """Read a triangle PLY written by :func:`write_ply` (or any double/float xyz PLY).

    Returns ``(vertices (n, 3), faces (m, 3), scalars dict)``.
    """
    raw = Path(path).read_bytes()
    end = raw.index(b"end_header") + len(b"end_header")
    end = raw.index(b"\n", end) + 1
    lines = raw[:end].decode("ascii").splitlines()
    fmt = next(ln.split()[1] for ln in lines if ln.startswith("format"))
    nv = nf = 0
    props: list[tuple[str, str]] = []
    current = None
    for ln in lines:
        parts = ln.split()
        if parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                nv = int(parts[2])
            elif current == "face":
                nf = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            props.append((parts[2], parts[1]))
    body = raw[end:]
    names = [p[0] for p in props]
    if fmt == "ascii":
        rows = body.decode("ascii").split("\n")
        vdata = np.array([[float(x) for x in rows[i].split()] for i in range(nv)]).reshape(nv, len(props))
        faces = np.array([[int(x) for x in rows[nv + i].split()[1:4]] for i in range(nf)], dtype=np.int64)
    elif fmt == "binary_little_endian":
        tmap = {"double": "<f8", "float": "<f4", "int": "<i4", "uchar": "u1"}
        vdt = np.dtype([(n, tmap[t]) for n, t in props])
        varr = np.frombuffer(body, dtype=vdt, count=nv)
        vdata = np.stack([varr[n].astype(float) for n in names], axis=1) if nv else np.zeros((0, len(props)))
        fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
        farr = np.frombuffer(body, dtype=fdt, count=nf, offset=nv * vdt.itemsize)
        faces = farr["idx"].astype(np.int64)
    else:
        raise ValueError(f"unsupported PLY format {fmt}")
    xyz = vdata[:, [names.index("x"), names.index("y"), names.index("z")]]
    scalars = {n: vdata[:, i] for i, n in enumerate(names) if n not in ("x", "y", "z")}
    return xyz, faces, scalars


def write_obj(path, vertices, faces) -> None:
    v = _as_xyz(vertices)
    with open(path, "w") as fh:
        for x, y, z in v.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in np.asarray(faces).tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for ln in fh:
            parts = ln.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def write_field_csv(path, values) -> None:
    """CSV rows ``vertex_index,re,im``."""
    vals = np.asarray(values, dtype=complex).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_index", "re", "im"])
        for i, c in enumerate(vals):
            w.writerow([i, repr(float(c.real)), repr(float(c.imag))])


def read_field_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.zeros(len(rows), dtype=complex)
    for r in rows:
        out[int(r["vertex_index"])] = complex(float(r["re"]), float(r["im"]))
    return out


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serialisable: {type(obj)!r}")


def dump_json(obj, path=None) -> str:
    """Deterministic JSON (sorted keys, repr floats); writes to ``path`` if given."""
    text = json.dumps(obj, default=_jsonable, sort_keys=True, indent=1, allow_nan=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
