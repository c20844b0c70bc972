"""File formats: PFM, 16-bit PNG depth, normal visualisation PNG, intrinsics and report JSON/CSV."""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import sys
from pathlib import Path
from typing import Dict, Union

import numpy as np
from PIL import Image

from .core import CameraIntrinsics, DepthImage, FormatError, NormalMap, ScalarImage

PathLike = Union[str, os.PathLike]


# ---------------------------------------------------------------------------
# PFM


def _read_token(data: bytes, pos: int):
    """Next whitespace-delimited header token and the position after its terminator."""
    n = len(data)
    while pos < n and data[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos or pos >= n:
        raise FormatError(f"truncated PFM header at byte {start}")
    return data[start:pos], start, pos + 1


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode PFM bytes to a float32 array (H x W or H x W x 3), rows top-down."""
    magic, off, pos = _read_token(data, 0)
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM magic {magic!r} at byte {off}")
    tok, off, pos = _read_token(data, pos)
    try:
        width = int(tok)
    except ValueError:
        raise FormatError(f"bad PFM width {tok!r} at byte {off}") from None
    tok, off, pos = _read_token(data, pos)
    try:
        height = int(tok)
    except ValueError:
        raise FormatError(f"bad PFM height {tok!r} at byte {off}") from None
    if width < 1 or height < 1:
        raise FormatError(f"PFM dimensions must be >= 1, got {width} x {height} (byte {off})")
    tok, off, pos = _read_token(data, pos)
    try:
        scale = float(tok)
    except ValueError:
        raise FormatError(f"bad PFM scale {tok!r} at byte {off}") from None
    if scale == 0 or not math.isfinite(scale):
        raise FormatError(f"PFM scale must be finite and non-zero (byte {off})")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    need = count * 4
    if len(data) - pos < need:
        raise FormatError(
            f"truncated PFM payload: expected {need} bytes from byte {pos}, file ends at byte {len(data)}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float32)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape)[::-1].copy()


def encode_pfm(image: np.ndarray, little_endian: bool = True) -> bytes:
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    elif arr.ndim == 2:
        magic = b"Pf"
    else:
        raise FormatError(f"PFM holds H x W or H x W x 3 images, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FormatError("PFM dimensions must be >= 1")
    arr = arr.astype(np.float32, copy=False)
    if np.any(np.isinf(arr)):
        raise FormatError("PFM payload must be finite or NaN")
    dtype = "<f4" if little_endian else ">f4"
    header = b"%s\n%d %d\n%s\n" % (magic, arr.shape[1], arr.shape[0], b"-1.0" if little_endian else b"1.0")
    return header + np.ascontiguousarray(arr[::-1], dtype=dtype).tobytes()


def read_pfm(path: PathLike) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())


def write_pfm(path: PathLike, image: np.ndarray, little_endian: bool = True) -> None:
    Path(path).write_bytes(encode_pfm(image, little_endian))


def write_scalar_pfm(path: PathLike, img: ScalarImage) -> None:
    write_pfm(path, np.where(img.mask, img.values, np.nan))


def read_depth_pfm(path: PathLike) -> DepthImage:
    """Depth from PFM; NaN and non-positive values load as invalid pixels."""
    values = read_pfm(path)
    if values.ndim != 2:
        raise FormatError(f"{path}: expected a 1-channel PFM for depth")
    values = values.astype(np.float64)
    with np.errstate(invalid="ignore"):
        mask = np.isfinite(values) & (values > 0)
    return DepthImage(values, mask)


def write_normals_pfm(path: PathLike, normals: NormalMap) -> None:
    write_pfm(path, np.where(normals.mask[..., None], normals.normals, np.nan))


def read_normals_pfm(path: PathLike) -> NormalMap:
    """Normals from a 3-channel PFM; any NaN channel marks the pixel invalid.

    Stored normals are float32, so they are renormalised on load.
    """
    values = read_pfm(path)
    if values.ndim != 3:
        raise FormatError(f"{path}: expected a 3-channel PFM for normals")
    n = values.astype(np.float64)
    norm = np.linalg.norm(n, axis=2)
    mask = np.isfinite(norm) & (norm > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(mask[..., None], n / norm[..., None], np.nan)
    return NormalMap(n, mask)


# ---------------------------------------------------------------------------
# PNG


def _png_ihdr(path: PathLike):
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        raise FormatError(f"{path}: not a PNG file")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    return width, height, bit_depth, color_type


def read_png16_depth(path: PathLike, scale: float = 0.001) -> DepthImage:
    """Single-channel 16-bit PNG depth; ``depth = raw * scale``, raw 0 is invalid."""
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"scale must be positive, got {scale}")
    _, _, bit_depth, color_type = _png_ihdr(path)
    if bit_depth != 16:
        raise FormatError(f"{path}: expected 16-bit depth, got {bit_depth}-bit")
    if color_type != 0:
        raise FormatError(f"{path}: expected a single-channel greyscale PNG (colour type {color_type})")
    with Image.open(path) as im:
        raw = np.array(im, dtype=np.uint16)
    mask = raw != 0
    return DepthImage(raw.astype(np.float64) * scale, mask)


def write_png16(path: PathLike, raw: np.ndarray) -> None:
    """Write a 16-bit greyscale PNG from integer values in [0, 65535]."""
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.size == 0:
        raise FormatError(f"expected a non-empty 2-D array, got shape {raw.shape}")
    if raw.min() < 0 or raw.max() > 65535:
        raise FormatError("16-bit PNG values must lie in [0, 65535]")
    Image.fromarray(raw.astype(np.uint16)).save(path, format="PNG")


def write_png16_depth(path: PathLike, depth: ScalarImage, scale: float = 0.001) -> None:
    """Quantise depth to ``round(z / scale)``; invalid pixels store 0."""
    raw = np.zeros(depth.shape, dtype=np.int64)
    raw[depth.mask] = np.floor(depth.values[depth.mask] / scale + 0.5).astype(np.int64)
    write_png16(path, raw)


def encode_normal_png(normals: NormalMap) -> np.ndarray:
    """``round(255 * (n + 1) / 2)`` per channel with halves rounded up; invalid -> (0, 0, 0)."""
    n = np.where(normals.mask[..., None], normals.normals, 0.0)
    enc = np.floor(255.0 * (n + 1.0) / 2.0 + 0.5)
    enc = np.clip(enc, 0, 255).astype(np.uint8)
    enc[~normals.mask] = 0
    return enc


def write_normal_png(path: PathLike, normals: NormalMap) -> None:
    Image.fromarray(encode_normal_png(normals)).save(path)


# ---------------------------------------------------------------------------
# JSON


_INTRINSIC_FIELDS = ("fx", "fy", "u0", "v0")


def intrinsics_from_dict(d: Dict) -> CameraIntrinsics:
    if not isinstance(d, dict):
        raise FormatError("intrinsics must be a JSON object")
    unknown = sorted(set(d) - set(_INTRINSIC_FIELDS) - {"t_c"})
    if unknown:
        raise FormatError(f"unknown intrinsics field(s): {', '.join(unknown)}")
    vals = {}
    for name in _INTRINSIC_FIELDS + ("t_c",):
        if name not in d:
            if name == "t_c":
                continue
            raise FormatError(f"missing intrinsics field {name}")
        x = d[name]
        if name == "t_c" and x is None:
            continue
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise FormatError(f"intrinsics field {name} must be a finite number, got {x!r}")
        vals[name] = float(x)
    for name in ("fx", "fy", "t_c"):
        if name in vals and vals[name] <= 0:
            raise FormatError(f"intrinsics field {name} must be positive, got {vals[name]}")
    return CameraIntrinsics(**vals)


def intrinsics_to_dict(K: CameraIntrinsics) -> Dict:
    d = {"fx": K.fx, "fy": K.fy, "u0": K.u0, "v0": K.v0}
    if K.t_c is not None:
        d["t_c"] = K.t_c
    return d


def read_intrinsics_json(path: PathLike) -> CameraIntrinsics:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return intrinsics_from_dict(d)


def write_intrinsics_json(path: PathLike, K: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps(intrinsics_to_dict(K), indent=2) + "\n", encoding="utf-8")


def write_json(path: PathLike, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# reports

CSV_FIELDS = ["method", "dataset", "frame", "e_A", "m", "t_ms", "pi", "error"]


def _rows(report):
    phis = sorted(report.e_P)
    header = CSV_FIELDS[:5] + [f"e_P@{p:g}" for p in phis] + CSV_FIELDS[5:]
    rows = []
    for fr in report.frames:
        row = {"method": report.method, "dataset": report.dataset, "frame": fr.frame,
               "e_A": fr.e_A, "m": fr.m, "t_ms": fr.t, "pi": "", "error": fr.error or ""}
        for p in phis:
            row[f"e_P@{p:g}"] = fr.e_P.get(p, "")
        rows.append(row)
    agg = {"method": report.method, "dataset": report.dataset, "frame": "*",
           "e_A": report.e_A, "m": report.m, "t_ms": report.t, "pi": report.pi, "error": ""}
    for p in phis:
        agg[f"e_P@{p:g}"] = report.e_P[p]
    rows.append(agg)
    return header, rows


def _fmt(x):
    # repr of a float is the shortest string that round-trips exactly
    if isinstance(x, float):
        return repr(x)
    return x


def write_report(reports, path: PathLike, format: str = None) -> None:
    """Write one or more :class:`~normalforge.evaluation.EvalReport` objects as JSON or CSV."""
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    fmt = format or ("csv" if str(path).lower().endswith(".csv") else "json")
    if fmt == "json":
        payload = [r.to_dict() for r in reports]
        Path(path).write_text(json.dumps(payload if len(payload) != 1 else payload[0], indent=2) + "\n",
                              encoding="utf-8")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = None
            for r in reports:
                header, rows = _rows(r)
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=header)
                    writer.writeheader()
                for row in rows:
                    writer.writerow({k: _fmt(row.get(k, "")) for k in writer.fieldnames})
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path: PathLike):
    """Read back a JSON report (single report or a list)."""
    from .evaluation import EvalReport

    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(d, list):
        return [EvalReport.from_dict(x) for x in d]
    return EvalReport.from_dict(d)


def print_table(reports, stream=None) -> None:
    """Plain-text comparison table, one row per report."""
    stream = sys.stdout if stream is None else stream
    phis = sorted({p for r in reports for p in r.e_P})
    cols = ["method", "t(ms)", "e_A(deg)"] + [f"e_P@{p:g}" for p in phis] + ["pi"]
    print("  ".join(f"{c:>14}" for c in cols), file=stream)
    for r in reports:
        vals = [r.method, f"{r.t:.3f}", f"{r.e_A:.4f}"] + [f"{r.e_P.get(p, float('nan')):.4f}" for p in phis]
        vals.append(f"{r.pi:.3f}")
        print("  ".join(f"{v:>14}" for v in vals), file=stream)
