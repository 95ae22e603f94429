"""Minimal NIfTI-1 reader/writer (single-file .nii/.nii.gz, plus .hdr/.img pairs on read)."""

from __future__ import annotations

import gzip
import io
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

HEADER_SIZE = 348
VOX_OFFSET = 352

# (name, struct code); order and sizes follow the NIfTI-1 header layout
_FIELDS = [
    ("sizeof_hdr", "i"), ("data_type", "10s"), ("db_name", "18s"), ("extents", "i"),
    ("session_error", "h"), ("regular", "c"), ("dim_info", "c"), ("dim", "8h"),
    ("intent_p1", "f"), ("intent_p2", "f"), ("intent_p3", "f"), ("intent_code", "h"),
    ("datatype", "h"), ("bitpix", "h"), ("slice_start", "h"), ("pixdim", "8f"),
    ("vox_offset", "f"), ("scl_slope", "f"), ("scl_inter", "f"), ("slice_end", "h"),
    ("slice_code", "c"), ("xyzt_units", "c"), ("cal_max", "f"), ("cal_min", "f"),
    ("slice_duration", "f"), ("toffset", "f"), ("glmax", "i"), ("glmin", "i"),
    ("descrip", "80s"), ("aux_file", "24s"), ("qform_code", "h"), ("sform_code", "h"),
    ("quatern_b", "f"), ("quatern_c", "f"), ("quatern_d", "f"),
    ("qoffset_x", "f"), ("qoffset_y", "f"), ("qoffset_z", "f"),
    ("srow_x", "4f"), ("srow_y", "4f"), ("srow_z", "4f"),
    ("intent_name", "16s"), ("magic", "4s"),
]
_FMT = "".join(code for _, code in _FIELDS)

DTYPES = {2: np.dtype(np.uint8), 4: np.dtype(np.int16), 8: np.dtype(np.int32),
          16: np.dtype(np.float32), 64: np.dtype(np.float64)}
CODES = {v: k for k, v in DTYPES.items()}


class NiftiError(ValueError):
    pass


@dataclass(frozen=True)
class Volume:
    """A 3D scalar volume indexed (x, y, z); `kind` is 'image' or 'mask'."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray | None = None
    kind: str = "image"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.data.shape}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.kind not in ("image", "mask"):
            raise ValueError(f"unknown volume kind {self.kind!r}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)  # type: ignore[return-value]

    @property
    def has_affine(self) -> bool:
        return self.affine is not None

    def world_affine(self) -> np.ndarray:
        return self.affine if self.affine is not None else np.diag([*self.spacing, 1.0])

    def labels(self) -> list[int]:
        vals = np.unique(self.data)
        return [int(v) for v in vals if v != 0]

    def as_mask(self) -> "Volume":
        data = self.data
        if not np.issubdtype(data.dtype, np.integer):
            if np.any(data != np.round(data)) or np.any(data < 0):
                raise NiftiError("mask contains non-integer or negative values")
            data = data.astype(np.int32)
        elif np.any(data < 0):
            raise NiftiError("mask contains negative values")
        return replace(self, data=data, kind="mask")


def _unpack(raw: bytes) -> tuple[dict, str]:
    for endian in ("<", ">"):
        (size,) = struct.unpack(endian + "i", raw[:4])
        if size == HEADER_SIZE:
            break
    else:
        raise NiftiError("not a NIfTI-1 header (sizeof_hdr != 348)")
    values = struct.unpack(endian + _FMT, raw[:HEADER_SIZE])
    hdr: dict = {}
    i = 0
    for name, code in _FIELDS:
        n = int(code[:-1]) if code[:-1].isdigit() and not code.endswith("s") else 1
        if n > 1:
            hdr[name] = list(values[i:i + n])
            i += n
        else:
            hdr[name] = values[i]
            i += 1
    return hdr, endian


def _quaternion_affine(hdr: dict) -> np.ndarray:
    b, c, d = hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"]
    a2 = 1.0 - (b * b + c * c + d * d)
    a = math.sqrt(a2) if a2 > 1e-7 else 0.0
    R = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    pix = hdr["pixdim"]
    qfac = -1.0 if pix[0] < 0 else 1.0
    aff = np.eye(4)
    aff[:3, :3] = R * np.array([pix[1], pix[2], qfac * pix[3]])
    aff[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
    return aff


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise NiftiError(f"truncated or corrupt gzip stream in {path.name}: {exc}") from None
    return raw


def read_nifti(path: str | Path, as_mask: bool = False) -> Volume:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    raw = _read_bytes(p)
    if len(raw) < HEADER_SIZE:
        raise NiftiError(f"truncated header in {p.name}: {len(raw)} bytes")
    hdr, endian = _unpack(raw)
    magic = hdr["magic"].rstrip(b"\x00")
    if magic not in (b"n+1", b"ni1"):
        raise NiftiError(f"bad magic {magic!r} in {p.name}: expected 'n+1' or 'ni1'")
    code = hdr["datatype"]
    if code not in DTYPES:
        raise NiftiError(f"unsupported datatype code {code} in {p.name}")
    dim = hdr["dim"]
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiError(f"invalid dim[0]={ndim} in {p.name}")
    shape = [max(1, d) for d in dim[1:ndim + 1]] + [1] * max(0, 3 - ndim)
    if any(s != 1 for s in shape[3:]):
        raise NiftiError(f"{p.name}: only 3D volumes are supported, got dims {shape}")
    shape = shape[:3]
    if magic == b"n+1":
        payload, offset = raw, int(hdr["vox_offset"])
    else:
        img = p.with_suffix(".img") if p.suffix != ".gz" else Path(str(p)[:-7] + ".img.gz")
        if not img.is_file():
            raise NiftiError(f"'ni1' header {p.name} has no companion .img file")
        payload, offset = _read_bytes(img), int(hdr["vox_offset"])
    dt = DTYPES[code].newbyteorder(endian)
    count = shape[0] * shape[1] * shape[2]
    need = offset + count * dt.itemsize
    if len(payload) < need:
        raise NiftiError(f"truncated payload in {p.name}: need {need} bytes, have {len(payload)}")
    data = np.frombuffer(payload, dtype=dt, count=count, offset=offset)
    data = data.astype(dt.newbyteorder("="), copy=True).reshape(shape, order="F")
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope != 0 and math.isfinite(slope) and not (slope == 1 and inter == 0):
        data = data.astype(np.float64) * slope + inter
    pix = hdr["pixdim"]
    spacing = tuple(float(abs(pix[i])) if pix[i] != 0 else 1.0 for i in (1, 2, 3))
    if hdr["sform_code"] > 0:
        aff = np.eye(4)
        aff[0], aff[1], aff[2] = hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]
    elif hdr["qform_code"] > 0:
        aff = _quaternion_affine(hdr)
    else:
        aff = None
    vol = Volume(data, spacing, aff, "image", {"datatype": code, "path": str(p)})
    return vol.as_mask() if as_mask else vol


def write_nifti(vol: Volume, path: str | Path, datatype: int | None = None) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = vol.data
    if datatype is None:
        datatype = CODES.get(data.dtype)
        if datatype is None:
            datatype = 8 if np.issubdtype(data.dtype, np.integer) else 64
    if datatype not in DTYPES:
        raise NiftiError(f"unsupported datatype code {datatype}")
    dt = DTYPES[datatype].newbyteorder("<")
    hdr = {name: 0 for name, _ in _FIELDS}
    for name, code in _FIELDS:
        if code.endswith("s"):
            hdr[name] = b""
        elif code[:-1].isdigit():
            hdr[name] = [0] * int(code[:-1])
        elif code == "c":
            hdr[name] = b"\x00"
    hdr.update(sizeof_hdr=HEADER_SIZE, regular=b"r", datatype=datatype, bitpix=dt.itemsize * 8,
               vox_offset=float(VOX_OFFSET), scl_slope=1.0, scl_inter=0.0, magic=b"n+1\x00", xyzt_units=b"\x02")
    hdr["dim"] = [3, *vol.dims, 1, 1, 1, 1]
    hdr["pixdim"] = [1.0, *map(float, vol.spacing), 0.0, 0.0, 0.0, 0.0]
    aff = vol.world_affine()
    hdr["sform_code"] = 1 if vol.has_affine else 0
    hdr["srow_x"], hdr["srow_y"], hdr["srow_z"] = (list(map(float, aff[i])) for i in range(3))
    values = []
    for name, code in _FIELDS:
        v = hdr[name]
        values.extend(v if isinstance(v, list) else [v])
    buf = io.BytesIO()
    buf.write(struct.pack("<" + _FMT, *values))
    buf.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
    buf.write(np.asarray(data, dtype=dt).tobytes(order="F"))
    raw = buf.getvalue()
    if p.name.endswith(".gz"):
        raw = gzip.compress(raw, mtime=0)
    p.write_bytes(raw)
    return str(p)


def geometry_matches(a: Volume, b: Volume, tol: float = 1e-3) -> str | None:
    """None when geometries agree, otherwise a short reason."""
    if a.dims != b.dims:
        return f"dims differ: {a.dims} vs {b.dims}"
    if any(abs(x - y) > tol for x, y in zip(a.spacing, b.spacing)):
        return f"spacing differs: {a.spacing} vs {b.spacing}"
    if a.has_affine and b.has_affine and np.max(np.abs(a.affine - b.affine)) > tol:
        return "affines differ"
    return None
