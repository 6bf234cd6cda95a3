"""On-disk formats: HYT1 tensors, PGM/PPM images, CSV metrics, checkpoints, dataset dirs.

Every writer goes through ``atomic_write`` so a failed run never leaves a
half-written file behind.
"""
from __future__ import annotations

import csv
import io
import json
import os
import shutil
import struct
import tempfile
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DomainError

MAGIC = b"HYT1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("<c16")}
_CODES = {dt.newbyteorder("="): code for code, dt in DTYPES.items()}
U32_MAX = 2**32 - 1


def atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- HYT1 tensors -----------------------------------------------------------

def encode_tensor(arr) -> bytes:
    a = np.asarray(arr)
    code = _CODES.get(a.dtype.newbyteorder("="))
    if code is None:
        raise DomainError(f"HYT1 stores f32/f64/c64/c128 only, got {a.dtype}")
    if a.ndim > 255:
        raise DomainError("HYT1 rank is limited to 255")
    if any(d > U32_MAX for d in a.shape):
        raise DomainError("HYT1 dimensions must fit in u32")
    head = MAGIC + struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()


def decode_tensor(buf: bytes, name="<bytes>") -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise DataError(f"{name}: not a HYT1 tensor (bad magic)")
    code, rank = buf[4], buf[5]
    if code not in DTYPES:
        raise DataError(f"{name}: unknown dtype code {code}")
    end = 6 + 4 * rank
    if len(buf) < end:
        raise DataError(f"{name}: header truncated")
    dims = struct.unpack(f"<{rank}I", buf[6:end])
    dt = DTYPES[code]
    n = 1
    for d in dims:
        n *= d
    expected = n * dt.itemsize
    if expected > len(buf):
        raise DataError(f"{name}: payload truncated ({len(buf) - end} of {expected} bytes)")
    if len(buf) - end != expected:
        raise DataError(f"{name}: payload is {len(buf) - end} bytes, header says {expected}")
    return np.frombuffer(buf, dtype=dt, count=n, offset=end).reshape(dims).copy()


def write_tensor(arr, path):
    atomic_write(path, encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    return decode_tensor(buf, str(path))


# --- images -----------------------------------------------------------------

def _header_tokens(buf, count):
    """First ``count`` whitespace-separated header tokens and the offset after them."""
    toks, i = [], 0
    while len(toks) < count:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j:j + 1].isspace():
            j += 1
        if j == i:
            raise DataError("image header truncated")
        toks.append(buf[i:j])
        i = j
    return toks, i + 1  # exactly one whitespace byte before the raster


def write_pgm(img, path, maxval=65535):
    """16-bit binary greymap; ``img`` is scaled from [0, 1] unless it is already integer."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise DomainError("PGM needs a 2-D image")
    if np.issubdtype(a.dtype, np.floating):
        a = np.rint(np.clip(a, 0.0, 1.0) * maxval)
    raster = a.astype(">u2").tobytes()
    atomic_write(path, b"P5\n%d %d\n%d\n" % (a.shape[1], a.shape[0], maxval) + raster)


def read_pgm(path) -> np.ndarray:
    """Greymap as floats in [0, 1]."""
    buf = Path(path).read_bytes()
    toks, off = _header_tokens(buf, 4)
    if toks[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in toks[1:])
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    if len(buf) - off != w * h * dt.itemsize:
        raise DataError(f"{path}: raster size mismatch")
    return np.frombuffer(buf, dt, offset=off).reshape(h, w) / maxval


def write_ppm(rgb, path):
    """8-bit binary pixmap from a ``[3, H, W]`` float image in [0, 1]."""
    a = np.asarray(rgb, dtype=float)
    if a.ndim != 3 or a.shape[0] != 3:
        raise DomainError("PPM needs a [3, H, W] image")
    raster = np.rint(np.clip(np.moveaxis(a, 0, -1), 0, 1) * 255).astype(np.uint8).tobytes()
    atomic_write(path, b"P6\n%d %d\n255\n" % (a.shape[2], a.shape[1]) + raster)


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    toks, off = _header_tokens(buf, 4)
    if toks[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM")
    w, h, maxval = (int(t) for t in toks[1:])
    if maxval > 255 or len(buf) - off != 3 * w * h:
        raise DataError(f"{path}: raster size mismatch")
    return np.moveaxis(np.frombuffer(buf, np.uint8, offset=off).reshape(h, w, 3), -1, 0) / maxval


# --- CSV ----------------------------------------------------------------------

def write_csv(rows, path, fields=None):
    rows = list(rows)
    fields = fields or (list(rows[0]) if rows else [])
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in fields})
    atomic_write(path, out.getvalue().encode())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(params, directory, extra=None):
    """Directory with one HYT1 file per tensor and buffer plus ``manifest.json``."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=directory.parent, prefix=f".{directory.name}."))
    try:
        manifest = dict(format="leafwet-checkpoint", version=1, model=_jsonable(asdict(params.config)),
                        tensors={}, buffers={}, extra=extra or {})
        for kind, store in (("tensors", params.tensors), ("buffers", params.buffers)):
            for name, v in sorted(store.items()):
                fname = f"{kind[0]}_{name}.hyt"
                write_tensor(np.asarray(v, dtype=float), tmp / fname)
                manifest[kind][name] = fname
        atomic_write(tmp / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode())
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def load_checkpoint(directory):
    from .model import ModelConfig, ModelParams

    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, ValueError) as e:
        raise DataError(f"{directory}: unreadable checkpoint manifest ({e})") from e
    if manifest.get("format") != "leafwet-checkpoint":
        raise DataError(f"{directory}: not a checkpoint")
    try:
        cfg = ModelConfig(**manifest["model"])
        tensors = {k: read_tensor(directory / f) for k, f in manifest["tensors"].items()}
        buffers = {k: read_tensor(directory / f) for k, f in manifest["buffers"].items()}
    except (KeyError, TypeError) as e:
        raise DataError(f"{directory}: malformed manifest ({e})") from e
    fresh = ModelParams.init(cfg)
    for k, v in fresh.tensors.items():
        if k not in tensors or tensors[k].shape != v.shape:
            raise DataError(f"{directory}: tensor {k} missing or mis-shaped")
    return ModelParams(cfg, tensors, buffers=buffers)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# --- dataset directories ------------------------------------------------------

def save_dataset(samples, directory, cfg):
    """One sub-directory per sample (raw cube, stack, RGB) and an index CSV.

    Cubes are stored phase-compensated; the geometry comes from the dataset
    config written alongside.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, s in enumerate(samples):
        name = f"s{i:04d}"
        write_tensor(s.raw.data, directory / name / "raw.hyt")
        write_tensor(s.stack.array, directory / name / "stack.hyt")
        write_tensor(s.stack.depths, directory / name / "depths.hyt")
        write_tensor(np.asarray(s.rgb, dtype=float), directory / name / "rgb.hyt")
        rows.append(dict(sample=name, label=int(s.label), seed=s.meta.get("seed", ""),
                         digest=s.digest()))
    atomic_write(directory / "dataset.json",
                 json.dumps(dict(format="leafwet-dataset", version=1, config=_jsonable(asdict(cfg))),
                            indent=2, sort_keys=True).encode())
    write_csv(rows, directory / "index.csv", ["sample", "label", "seed", "digest"])


def load_dataset(directory):
    from .data import DatasetConfig, Sample
    from .radar import RadarConfig
    from .recon import DepthStack, SarSlice, pixel_axes
    from .scene import RawDataCube

    directory = Path(directory)
    try:
        meta = json.loads((directory / "dataset.json").read_text())
        c = dict(meta["config"])
        init = {f.name for f in fields(RadarConfig) if f.init}
        c["radar"] = RadarConfig(**{k: v for k, v in c["radar"].items() if k in init})
        cfg = DatasetConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.items()})
        index = read_csv(directory / "index.csv")
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise DataError(f"{directory}: not a readable dataset directory ({e})") from e
    geom = cfg.geometry
    out = []
    for row in index:
        d = directory / row["sample"]
        try:
            raw = RawDataCube(read_tensor(d / "raw.hyt"), geom, cfg.radar, compensated=True)
        except (ConfigError, DomainError) as e:
            raise DataError(f"{d}: {e}") from e
        arr, depths = read_tensor(d / "stack.hyt"), read_tensor(d / "depths.hyt")
        xs, ys = pixel_axes(raw)
        if arr.ndim != 3 or arr.shape[1:] != (xs.size, ys.size) or depths.shape != arr.shape[:1]:
            raise DataError(f"{d}: stack shape {arr.shape} does not match the geometry")
        stack = DepthStack([SarSlice(a, float(z), xs, ys) for a, z in zip(arr, depths)],
                           cfg.z_min, cfg.z_max, cfg.slice_step)
        seed = int(row["seed"]) if row.get("seed") else None
        out.append(Sample(raw, stack, read_tensor(d / "rgb.hyt"), int(row["label"]), dict(seed=seed)))
    return out, cfg
