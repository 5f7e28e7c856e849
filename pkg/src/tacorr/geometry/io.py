"""XYZ / ASCII PLY reading and writing, plus colored correspondence export."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import PointCloud


class CloudFormatError(ValueError):
    """Malformed point-cloud file; the message names the file and line."""


def _fmt(v):
    return repr(float(v))


def _infer_format(path, fmt):
    if fmt is not None:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply"
    if suffix in (".xyz", ".txt"):
        return "xyz"
    raise ValueError(f"cannot infer point-cloud format from {path!s}")


def save_cloud(cloud, path, fmt=None):
    fmt = _infer_format(path, fmt)
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    pts = cloud.positions
    if fmt == "xyz":
        lines = [" ".join(_fmt(v) for v in p) for p in pts]
        Path(path).write_text("\n".join(lines) + "\n")
        return
    if fmt != "ply":
        raise ValueError(f"unknown format {fmt!r}")
    header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
              "property float x", "property float y", "property float z"]
    rows = [[_fmt(v) for v in p] for p in pts]
    if cloud.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        rgb = np.clip(np.rint(cloud.colors * 255), 0, 255).astype(int)
        rows = [r + [str(c) for c in col] for r, col in zip(rows, rgb)]
    header.append("end_header")
    body = [" ".join(r) for r in rows]
    Path(path).write_text("\n".join(header + body) + "\n")


def load_cloud(path, fmt=None):
    fmt = _infer_format(path, fmt)
    lines = Path(path).read_text().splitlines()
    if fmt == "xyz":
        return _parse_xyz(lines, path)
    if fmt == "ply":
        return _parse_ply(lines, path)
    raise ValueError(f"unknown format {fmt!r}")


def _parse_xyz(lines, path):
    pts = []
    for no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CloudFormatError(f"{path}:{no}: expected 'x y z', got {line!r}")
        try:
            pts.append([float(v) for v in parts])
        except ValueError:
            raise CloudFormatError(f"{path}:{no}: non-numeric coordinate in {line!r}") from None
    if not pts:
        raise CloudFormatError(f"{path}: no points")
    return PointCloud(np.array(pts))


def _parse_ply(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError(f"{path}:1: missing 'ply' magic line")
    n_vertex = None
    props = []
    in_vertex = False
    end = None
    for no, line in enumerate(lines[1:], 2):
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise CloudFormatError(f"{path}:{no}: only ASCII PLY is supported: {line!r}")
        elif tok[0] == "element":
            if len(tok) != 3:
                raise CloudFormatError(f"{path}:{no}: malformed element line {line!r}")
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                try:
                    n_vertex = int(tok[2])
                except ValueError:
                    raise CloudFormatError(f"{path}:{no}: bad vertex count {tok[2]!r}") from None
        elif tok[0] == "property":
            if len(tok) < 3:
                raise CloudFormatError(f"{path}:{no}: malformed property line {line!r}")
            if in_vertex:
                props.append(tok[-1])
        elif tok[0] == "end_header":
            end = no
            break
        else:
            raise CloudFormatError(f"{path}:{no}: unexpected header line {line!r}")
    if end is None:
        raise CloudFormatError(f"{path}: missing end_header")
    if n_vertex is None:
        raise CloudFormatError(f"{path}: no 'element vertex' declaration")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise CloudFormatError(f"{path}: vertex element lacks x/y/z properties") from None
    has_color = all(c in props for c in ("red", "green", "blue"))
    ccols = [props.index(c) for c in ("red", "green", "blue")] if has_color else []

    body = [(no, ln) for no, ln in enumerate(lines[end:], end + 1) if ln.strip()]
    if len(body) < n_vertex:
        raise CloudFormatError(
            f"{path}: header declares {n_vertex} vertices but only {len(body)} data lines follow")
    pts = np.empty((n_vertex, 3))
    colors = np.empty((n_vertex, 3)) if has_color else None
    for i, (no, ln) in enumerate(body[:n_vertex]):
        tok = ln.split()
        if len(tok) < len(props):
            raise CloudFormatError(f"{path}:{no}: expected {len(props)} values, got {len(tok)}")
        try:
            pts[i] = [float(tok[c]) for c in cols]
            if has_color:
                colors[i] = [int(tok[c]) / 255.0 for c in ccols]
        except ValueError:
            raise CloudFormatError(f"{path}:{no}: non-numeric value in {ln!r}") from None
    return PointCloud(pts, colors)


def coordinate_colors(positions):
    """Deterministic RGB per point from its bounding-box-normalized coordinates."""
    lo, hi = positions.min(axis=0), positions.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.rint((positions - lo) / span * 255) / 255


GRAY = 128 / 255


def export_correspondence_ply(source, target, corr, out_dir):
    """Write ``source_colored.ply`` and ``target_colored.ply`` into ``out_dir``.

    Source points get coordinate colors; each target point takes the mean color
    of the source points mapped onto it, gray when nothing maps there.
    """
    corr = np.asarray(corr, dtype=int)
    if len(corr) != len(source):
        raise ValueError(f"correspondence length {len(corr)} != source size {len(source)}")
    if corr.size and (corr.min() < 0 or corr.max() >= len(target)):
        raise ValueError(f"correspondence index out of range [0, {len(target)})")
    src_col = coordinate_colors(source.positions)
    acc = np.zeros((len(target), 3))
    hits = np.zeros(len(target))
    np.add.at(acc, corr, src_col)
    np.add.at(hits, corr, 1)
    tgt_col = np.full((len(target), 3), GRAY)
    hit = hits > 0
    tgt_col[hit] = np.rint(acc[hit] / hits[hit, None] * 255) / 255
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    src_path, tgt_path = out / "source_colored.ply", out / "target_colored.ply"
    save_cloud(PointCloud(source.positions, src_col), src_path)
    save_cloud(PointCloud(target.positions, tgt_col), tgt_path)
    return src_path, tgt_path
