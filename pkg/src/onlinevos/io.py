"""On-disk formats: feature tensors, Netpbm frames and masks, run configuration.

Feature file (``.ft``)::

    bytes 0-3    b"FTN1"
    bytes 4-23   uint32 LE: version (=1), channels, height, width, stride (=16)
    bytes 24-    float32 LE payload, channels*height*width values, (c, h, w) order

Frames are binary PPM (P6, maxval 255) and masks binary PGM (P5, maxval 255)
whose gray value is the object id.  Writers emit the canonical header
``P6\\n<w> <h>\\n255\\n``; readers also accept comments and arbitrary
whitespace.

A sequence directory holds ``frames/NNNNN.ppm``, ``masks/NNNNN.pgm`` and
optionally ``features/NNNNN.ft``.
"""

import re
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError

FT_MAGIC = b"FTN1"
FT_VERSION = 1
FT_STRIDE = 16
_FT_HEADER = struct.Struct("<4s5I")


# --------------------------------------------------------------------------
# feature tensors

def encode_feature_tensor(tensor, stride=FT_STRIDE):
    t = np.asarray(tensor)
    if t.ndim != 3:
        raise ValueError(f"feature tensor must be (C, H, W), got {t.shape}")
    c, h, w = t.shape
    header = _FT_HEADER.pack(FT_MAGIC, FT_VERSION, c, h, w, stride)
    return header + np.ascontiguousarray(t, dtype="<f4").tobytes()


def decode_feature_tensor(data, path="<bytes>"):
    """Parse ``.ft`` bytes into a float32 ``(C, H, W)`` array."""
    if len(data) < 4 or data[:4] != FT_MAGIC:
        raise FormatError(path, 0, f"magic {FT_MAGIC!r}")
    if len(data) < _FT_HEADER.size:
        raise FormatError(path, len(data), f"{_FT_HEADER.size}-byte header")
    _, version, c, h, w, stride = _FT_HEADER.unpack_from(data)
    if version != FT_VERSION:
        raise FormatError(path, 4, f"version {FT_VERSION}, found {version}")
    for off, name, val in ((8, "channels", c), (12, "height", h), (16, "width", w)):
        if val == 0:
            raise FormatError(path, off, f"non-zero {name}")
    if stride != FT_STRIDE:
        raise FormatError(path, 20, f"stride {FT_STRIDE}, found {stride}")
    n = c * h * w
    need = _FT_HEADER.size + 4 * n
    if len(data) < need:
        present = len(data) - _FT_HEADER.size
        raise FormatError(path, _FT_HEADER.size + 4 * (present // 4),
                          f"{4 * n} payload bytes for {c}x{h}x{w} floats, found {present}")
    if len(data) > need:
        raise FormatError(path, need, f"end of file after {n} floats")
    return np.frombuffer(data, dtype="<f4", count=n, offset=_FT_HEADER.size).reshape(c, h, w).copy()


def write_feature_file(path, tensor, stride=FT_STRIDE):
    Path(path).write_bytes(encode_feature_tensor(tensor, stride))


def read_feature_file(path):
    return decode_feature_tensor(Path(path).read_bytes(), path)


# --------------------------------------------------------------------------
# Netpbm

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _parse_netpbm(data, magic, path):
    if data[:2] != magic:
        raise FormatError(path, 0, f"magic {magic!r}")
    pos = 2
    vals = []
    for name in ("width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(path, pos, name)
        tok = m.group(1)
        if not tok.isdigit():
            raise FormatError(path, m.start(1), f"decimal {name}")
        vals.append(int(tok))
        pos = m.end(1)
    w, h, maxval = vals
    if w == 0 or h == 0:
        raise FormatError(path, 2, "non-zero image dimensions")
    if maxval != 255:
        raise FormatError(path, pos, f"maxval 255 (8-bit), found {maxval}")
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError(path, pos, "single whitespace before raster")
    return w, h, pos + 1


def _read_raster(data, start, count, path):
    if len(data) < start + count:
        raise FormatError(path, len(data), f"{count} raster bytes from offset {start}")
    if len(data) > start + count:
        raise FormatError(path, start + count, "end of file after raster")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=start)


def decode_ppm(data, path="<bytes>"):
    """P6 bytes -> uint8 array of shape (3, H, W)."""
    w, h, start = _parse_netpbm(data, b"P6", path)
    return _read_raster(data, start, 3 * w * h, path).reshape(h, w, 3).transpose(2, 0, 1).copy()


def encode_ppm(image):
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"PPM image must be (3, H, W), got {img.shape}")
    if img.dtype != np.uint8:
        img = to_uint8(img)
    _, h, w = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img.transpose(1, 2, 0)).tobytes()


def decode_pgm(data, path="<bytes>"):
    """P5 bytes -> uint8 array of shape (H, W)."""
    w, h, start = _parse_netpbm(data, b"P5", path)
    return _read_raster(data, start, w * h, path).reshape(h, w).copy()


def encode_pgm(mask):
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"PGM mask must be 2-D, got {m.shape}")
    if m.min(initial=0) < 0 or m.max(initial=0) > 255:
        raise ValueError("PGM values must lie in [0, 255]")
    h, w = m.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(m, dtype=np.uint8).tobytes()


def read_ppm(path):
    return decode_ppm(Path(path).read_bytes(), path)


def write_ppm(path, image):
    Path(path).write_bytes(encode_ppm(image))


def read_pgm(path):
    return decode_pgm(Path(path).read_bytes(), path)


def write_pgm(path, mask):
    Path(path).write_bytes(encode_pgm(mask))


def to_uint8(image):
    """Quantize a [0, 1] float image to 8 bits."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_float(image):
    return np.asarray(image, dtype=np.float64) / 255.0


def split_objects(label_map):
    """Object ids present in a label map (ascending) and one binary mask per id."""
    ids = [int(i) for i in np.unique(label_map) if i != 0]
    return ids, [(label_map == i).astype(np.float64) for i in ids]


# --------------------------------------------------------------------------
# sequence directories

@dataclass
class Sequence:
    root: Path
    frames: list
    masks: dict
    features_dir: Path = None

    def __len__(self):
        return len(self.frames)

    def frame(self, i):
        """Frame ``i`` as a float (3, H, W) image in [0, 1]."""
        return to_float(read_ppm(self.frames[i]))

    def mask(self, i):
        return read_pgm(self.masks[i])


def _indexed(directory, suffix):
    out = {}
    for p in sorted(Path(directory).glob(f"*{suffix}")):
        stem = p.stem
        if stem.isdigit():
            out[int(stem)] = p
    return out


def open_sequence(root):
    """Index a sequence directory, checking contiguous frame numbers and mask 0."""
    root = Path(root)
    frames = _indexed(root / "frames", ".ppm")
    if not frames:
        raise FormatError(root / "frames", 0, "at least one NNNNN.ppm frame")
    n = len(frames)
    if sorted(frames) != list(range(n)):
        missing = sorted(set(range(max(frames) + 1)) - set(frames))
        raise FormatError(root / "frames", 0, f"contiguous frames from 0, missing {missing[:5]}")
    masks = _indexed(root / "masks", ".pgm")
    if 0 not in masks:
        raise FormatError(root / "masks", 0, "first-frame annotation 00000.pgm")
    feat = root / "features"
    return Sequence(root, [frames[i] for i in range(n)], masks, feat if feat.is_dir() else None)


# --------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    mode: str = "ours"
    t_s: int = None
    eta: float = 0.1
    k_max: int = 80
    kappa_min: float = 0.1
    pixel_weight_rule: str = "balanced_max"
    lambda1: float = 1e-2
    lambda2: float = 1e-2
    n_gn: int = None
    n_cgi: int = None
    n_cg: int = None
    n_cgu: int = None
    c: int = None
    feature_source: str = "toy"
    toy_channels: int = 64
    seed: int = 0


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CHOICES = {
    "mode": ("ours", "fast", "custom"),
    "pixel_weight_rule": ("balanced_max", "literal_min"),
    "feature_source": ("toy", "precomputed"),
}


def _parse_value(key, text, path, offset):
    typ = _CONFIG_TYPES[key]
    try:
        if typ is int:
            val = int(text)
        elif typ is float:
            val = float(text)
            if not np.isfinite(val):
                raise ValueError
        else:
            val = text
    except ValueError:
        raise FormatError(path, offset, f"{typ.__name__} value for {key!r}, found {text!r}")
    if key in _CHOICES and val not in _CHOICES[key]:
        raise FormatError(path, offset, f"{key} in {_CHOICES[key]}, found {val!r}")
    if typ is int and val < 1 and key != "seed":
        raise FormatError(path, offset, f"positive {key}, found {val}")
    if key in ("eta", "kappa_min") and not 0.0 < val < 1.0:
        raise FormatError(path, offset, f"{key} in (0, 1), found {val}")
    if key in ("lambda1", "lambda2") and val < 0:
        raise FormatError(path, offset, f"non-negative {key}, found {val}")
    return val


def parse_run_config(text, path="<config>"):
    """Parse ``key=value`` lines; ``#`` starts a comment, unknown keys are errors."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(path, exc.start, "UTF-8 text")
    cfg = RunConfig()
    seen = set()
    offset = 0
    for line in text.splitlines(keepends=True):
        body = line.split("#", 1)[0].strip()
        if body:
            if "=" not in body:
                raise FormatError(path, offset, f"key=value, found {body!r}")
            key, value = (s.strip() for s in body.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise FormatError(path, offset, f"a known key, found {key!r}")
            if key in seen:
                raise FormatError(path, offset, f"{key!r} only once")
            seen.add(key)
            setattr(cfg, key, _parse_value(key, value, path, offset))
        offset += len(line.encode("utf-8"))
    return cfg


def format_run_config(cfg):
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        lines.append(f"{f.name}={val!r}" if isinstance(val, float) else f"{f.name}={val}")
    return "\n".join(lines) + "\n"


def read_run_config(path):
    return parse_run_config(Path(path).read_bytes(), path)


def write_run_config(path, cfg):
    Path(path).write_text(format_run_config(cfg), encoding="utf-8")
