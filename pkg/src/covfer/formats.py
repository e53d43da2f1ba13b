"""On-disk formats: FMAP tensors, OBJ/PLY meshes, dataset manifests.

FMAP is the interchange format for every dense array this pipeline
produces (feature tensors, rendered maps, descriptors, weights):

    magic   4 bytes  b"FMAP"
    version u32 LE   always 1
    ndim    u32 LE
    dims    ndim * u32 LE
    payload prod(dims) * f32 LE, row-major, no padding, no trailer

Loading a file and writing it back reproduces it byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DanglingIndex,
    DimMismatch,
    DuplicateSampleId,
    IoFailure,
    MissingField,
    NonFiniteValue,
    NonTriangleFace,
    ParseError,
    UnknownLabel,
    UnsupportedVersion,
)
from .mesh import TriMesh

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1

EXPRESSION_LABELS = ("HA", "SA", "DI", "SU", "FE", "AN", "NE")


# --------------------------------------------------------------------------
# FMAP tensors
# --------------------------------------------------------------------------


def read_fmap(path) -> np.ndarray:
    """Load an FMAP file as a float32 array of the stored shape."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 4 or blob[:4] != FMAP_MAGIC:
        raise BadMagic(f"{path}: not an FMAP file")
    if len(blob) < 12:
        raise DimMismatch(f"{path}: truncated header")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != FMAP_VERSION:
        raise UnsupportedVersion(f"{path}: FMAP version {version}")
    if ndim == 0:
        raise DimMismatch(f"{path}: zero-dimensional tensor")

    header_end = 12 + 4 * ndim
    if len(blob) < header_end:
        raise DimMismatch(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}I", blob, 12)
    if any(d == 0 for d in dims):
        raise DimMismatch(f"{path}: non-positive extent in {dims}")

    count = 1
    for d in dims:
        count *= d
    payload = blob[header_end:]
    if len(payload) != 4 * count:
        raise DimMismatch(
            f"{path}: dims {dims} need {4 * count} payload bytes, got {len(payload)}"
        )

    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.isfinite(data).all():
        raise NonFiniteValue(f"{path}: payload contains NaN/Inf")
    return np.ascontiguousarray(data)


def write_fmap(tensor, path) -> None:
    """Write an array as FMAP.  Data is stored as little-endian float32."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    if arr.ndim == 0:
        raise DimMismatch("cannot write a zero-dimensional tensor")
    if 0 in arr.shape:
        raise DimMismatch(f"cannot write empty shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("refusing to write NaN/Inf payload")

    header = FMAP_MAGIC + struct.pack("<II", FMAP_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    try:
        Path(path).write_bytes(header + arr.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# Triangle meshes (Wavefront OBJ and ascii PLY)
# --------------------------------------------------------------------------


def read_mesh(path) -> TriMesh:
    """Load a triangle mesh from an OBJ or ascii PLY file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    head = blob.lstrip()[:3]
    if head.lower() == b"ply":
        verts, faces = _parse_ply(blob, path)
    else:
        verts, faces = _parse_obj(blob, path)

    if len(verts) < 3:
        raise ParseError(f"{path}: fewer than 3 vertices")
    vertices = np.asarray(verts, dtype=np.float64)
    faces_arr = (
        np.asarray(faces, dtype=np.int64)
        if faces
        else np.zeros((0, 3), dtype=np.int64)
    )
    return TriMesh(vertices=vertices, faces=faces_arr)


def _parse_obj(blob: bytes, path):
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text OBJ file") from exc

    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "v":
            if len(fields) < 4:
                raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                verts.append((float(fields[1]), float(fields[2]), float(fields[3])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            refs = fields[1:]
            if len(refs) != 3:
                raise NonTriangleFace(
                    f"{path}:{lineno}: face with {len(refs)} vertices"
                )
            idx = []
            for ref in refs:
                token = ref.split("/", 1)[0]
                try:
                    i = int(token)
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad face index {ref!r}") from exc
                if i < 0:  # OBJ relative indexing
                    i = len(verts) + 1 + i
                if not 1 <= i <= len(verts):
                    raise DanglingIndex(f"{path}:{lineno}: vertex index {token}")
                idx.append(i - 1)
            faces.append(tuple(idx))
        # all other record types (vn, vt, g, o, s, mtl...) are ignored
    return verts, faces


def _parse_ply(blob: bytes, path):
    try:
        text = blob.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: binary PLY is not supported (ascii only)") from exc

    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: missing 'ply' header line")

    # header: element declarations in file order
    elements: list[tuple[str, int]] = []  # (name, count)
    vertex_props: list[str] = []
    fmt_seen = False
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        if line == "end_header":
            break
        fields = line.split()
        if fields[0] == "format":
            if len(fields) < 2 or fields[1] != "ascii":
                raise ParseError(f"{path}: binary PLY is not supported (ascii only)")
            fmt_seen = True
        elif fields[0] == "element":
            if len(fields) != 3:
                raise ParseError(f"{path}: malformed element declaration {line!r}")
            try:
                elements.append((fields[1], int(fields[2])))
            except ValueError as exc:
                raise ParseError(f"{path}: bad element count in {line!r}") from exc
        elif fields[0] == "property":
            if elements and elements[-1][0] == "vertex" and fields[1] != "list":
                vertex_props.append(fields[-1])
    else:
        raise ParseError(f"{path}: missing end_header")
    if not fmt_seen:
        raise ParseError(f"{path}: missing format declaration")

    try:
        xi, yi, zi = (vertex_props.index(a) for a in ("x", "y", "z"))
    except ValueError as exc:
        raise ParseError(f"{path}: vertex element lacks x/y/z properties") from exc

    body = [ln for ln in lines[i:] if ln.strip()]
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    cursor = 0
    for name, count in elements:
        if cursor + count > len(body):
            raise ParseError(f"{path}: element {name!r} truncated")
        chunk = body[cursor : cursor + count]
        cursor += count
        if name == "vertex":
            for lineno, line in enumerate(chunk):
                fields = line.split()
                if len(fields) < len(vertex_props):
                    raise ParseError(f"{path}: short vertex line {line!r}")
                try:
                    verts.append(
                        (float(fields[xi]), float(fields[yi]), float(fields[zi]))
                    )
                except ValueError as exc:
                    raise ParseError(f"{path}: bad vertex line {line!r}") from exc
        elif name == "face":
            for line in chunk:
                fields = line.split()
                try:
                    n = int(fields[0])
                except (ValueError, IndexError) as exc:
                    raise ParseError(f"{path}: bad face line {line!r}") from exc
                if n != 3 or len(fields) < 4:
                    raise NonTriangleFace(f"{path}: face with {n} vertices")
                idx = []
                for token in fields[1:4]:
                    try:
                        j = int(token)
                    except ValueError as exc:
                        raise ParseError(f"{path}: bad face index {token!r}") from exc
                    if not 0 <= j < len(verts):
                        raise DanglingIndex(f"{path}: vertex index {j}")
                    idx.append(j)
                faces.append(tuple(idx))
        # other elements are skipped
    return verts, faces


def write_obj(mesh: TriMesh, path) -> None:
    """Write vertices and faces as a minimal Wavefront OBJ."""
    out = []
    for x, y, z in mesh.vertices:
        out.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        out.append(f"f {a + 1} {b + 1} {c + 1}")
    out.append("")
    try:
        Path(path).write_text("\n".join(out))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_pgm(pixels, path) -> None:
    """Debug export of a [0,1] image as binary 8-bit PGM."""
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2:
        raise DimMismatch(f"PGM export needs a 2-D image, got shape {img.shape}")
    gray = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + gray.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# Dataset manifests
# --------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    sample_id: str
    subject_id: str
    label: str
    mesh_path: Path | None = None
    tensor_paths: dict[str, Path] = field(default_factory=dict)


def read_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest file.

    One sample per line::

        sample_id<TAB>subject_id<TAB>LABEL<TAB>mesh=<path or -><TAB>name=<path>...

    Lines starting with ``#`` are comments.  Relative paths are resolved
    against the manifest's directory.  Errors carry the offending line
    number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 4:
            raise MissingField(f"{path}:{lineno}: expected at least 4 fields")
        sample_id, subject_id, label = fields[0], fields[1], fields[2]
        if not sample_id or not subject_id:
            raise MissingField(f"{path}:{lineno}: empty sample or subject id")
        if label not in EXPRESSION_LABELS:
            raise UnknownLabel(f"{path}:{lineno}: unknown label {label!r}")
        if sample_id in seen:
            raise DuplicateSampleId(f"{path}:{lineno}: duplicate id {sample_id!r}")
        seen.add(sample_id)

        if not fields[3].startswith("mesh="):
            raise MissingField(f"{path}:{lineno}: fourth field must be mesh=<path>")
        mesh_token = fields[3][len("mesh=") :]
        mesh_path = None if mesh_token == "-" else _resolve(base, mesh_token, path, lineno)

        tensor_paths: dict[str, Path] = {}
        used_paths = {mesh_path} if mesh_path is not None else set()
        for token in fields[4:]:
            name, eq, value = token.partition("=")
            if not eq or not name or not value:
                raise MissingField(f"{path}:{lineno}: malformed stream field {token!r}")
            if name in tensor_paths:
                raise ParseError(f"{path}:{lineno}: duplicate stream {name!r}")
            p = _resolve(base, value, path, lineno)
            if p in used_paths:
                raise ParseError(f"{path}:{lineno}: path {value!r} referenced twice")
            used_paths.add(p)
            tensor_paths[name] = p
        entries.append(
            ManifestEntry(sample_id, subject_id, label, mesh_path, tensor_paths)
        )
    return entries


def _resolve(base: Path, token: str, path, lineno) -> Path:
    if not token:
        raise MissingField(f"{path}:{lineno}: empty path")
    p = Path(token)
    return p if p.is_absolute() else base / p


def write_manifest(entries, path) -> None:
    """Write manifest entries; paths are emitted relative to the manifest dir
    when possible so the dataset directory stays relocatable."""
    path = Path(path)
    base = path.parent
    lines = []
    for e in entries:
        mesh = _relativize(e.mesh_path, base) if e.mesh_path else "-"
        fields = [e.sample_id, e.subject_id, e.label, f"mesh={mesh}"]
        for name in sorted(e.tensor_paths):
            fields.append(f"{name}={_relativize(e.tensor_paths[name], base)}")
        lines.append("\t".join(fields))
    lines.append("")
    try:
        path.write_text("\n".join(lines))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _relativize(p: Path, base: Path) -> str:
    try:
        return Path(p).relative_to(base).as_posix()
    except ValueError:
        return Path(p).as_posix()


# --------------------------------------------------------------------------
# Key=value sidecars (weights, codebooks, models)
# --------------------------------------------------------------------------


def write_sidecar(pairs: dict, path) -> None:
    lines = [f"{k}={v}" for k, v in pairs.items()]
    lines.append("")
    try:
        Path(path).write_text("\n".join(lines))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_sidecar(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    pairs: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ParseError(f"{path}: malformed sidecar line {line!r}")
        pairs[key] = value
    return pairs
