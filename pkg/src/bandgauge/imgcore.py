"""Image substrate: planar raster type, file I/O, color conversion, tiling.

Images are stored as per-channel 2-D numpy planes, either 8-bit unsigned
(samples in 0..255) or float32 (samples in 0.0..1.0).  All types are frozen
and their arrays are made read-only, so values can be shared freely across
threads; every operation returns new data.

Supported on disk: PNG (8-bit grayscale / RGB, non-interlaced) and binary
PGM (P5) / PPM (P6).
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported, or malformed image files."""


class Label(enum.Enum):
    BANDED = "banded"
    NON_BANDED = "non_banded"


@dataclass(frozen=True)
class PatchLabel:
    """Banded / non-banded verdict with a confidence in [0, 1].

    Ground-truth labels carry confidence 1.0.
    """

    value: Label
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_banded(self) -> bool:
        return self.value is Label.BANDED


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PlanarImage:
    """Decoded raster: 1 or 3 planes of shape (height, width)."""

    width: int
    height: int
    channels: int
    planes: tuple

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if len(self.planes) != self.channels:
            raise ValueError("plane count does not match channel count")
        frozen = []
        for p in self.planes:
            p = np.asarray(p)
            if p.shape != (self.height, self.width):
                raise ValueError(
                    f"plane shape {p.shape} != ({self.height}, {self.width})"
                )
            if p.dtype == np.uint8:
                pass
            elif p.dtype in (np.float32, np.float64):
                p = p.astype(np.float32, copy=False)
                if p.size and (float(p.min()) < 0.0 or float(p.max()) > 1.0):
                    raise ValueError("float samples must lie in [0, 1]")
            else:
                raise ValueError(f"unsupported sample dtype {p.dtype}")
            frozen.append(_freeze(p))
        if len({p.dtype for p in frozen}) != 1:
            raise ValueError("all planes must share one sample depth")
        object.__setattr__(self, "planes", tuple(frozen))

    @property
    def is_float(self) -> bool:
        return self.planes[0].dtype == np.float32

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PlanarImage":
        """Build from (h, w) or (h, w, 3)."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            return cls(arr.shape[1], arr.shape[0], 1, (arr,))
        if arr.ndim == 3 and arr.shape[2] == 3:
            h, w = arr.shape[:2]
            return cls(w, h, 3, tuple(arr[:, :, c] for c in range(3)))
        raise ValueError(f"cannot build image from array of shape {arr.shape}")

    def to_array(self) -> np.ndarray:
        """(h, w) for grayscale, (h, w, 3) for color. Returns a copy."""
        if self.channels == 1:
            return self.planes[0].copy()
        return np.stack(self.planes, axis=-1)

    def plane(self, c: int = 0) -> np.ndarray:
        return self.planes[c]


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping N x N tiling anchored at (0, 0), raster order.

    Right/bottom remainders narrower than N are not covered.
    """

    patch_size: int
    cols: int
    rows: int
    patches: tuple  # ((x, y), ...) raster order
    image_width: int
    image_height: int

    def __post_init__(self):
        if len(self.patches) != self.cols * self.rows:
            raise ValueError("patch list inconsistent with grid shape")
        n = self.patch_size
        for x, y in self.patches:
            if x < 0 or y < 0 or x + n > self.image_width or y + n > self.image_height:
                raise ValueError(f"patch at ({x}, {y}) leaves the image")

    def __len__(self) -> int:
        return len(self.patches)

    def extract(self, arr: np.ndarray, k: int) -> np.ndarray:
        """View of patch k out of a (h, w) array."""
        x, y = self.patches[k]
        n = self.patch_size
        return arr[y : y + n, x : x + n]


def tile(img: PlanarImage, n: int) -> PatchGrid:
    """Tile an image into an N x N grid; remainders are discarded."""
    if n < 8:
        raise ValueError("patch size must be at least 8")
    if n > img.width or n > img.height:
        raise ValueError(f"patch size {n} exceeds image {img.width}x{img.height}")
    cols = img.width // n
    rows = img.height // n
    patches = tuple((c * n, r * n) for r in range(rows) for c in range(cols))
    return PatchGrid(n, cols, rows, patches, img.width, img.height)


# BT.601 luma weights; the synthetic data targets YCbCr 4:2:0 sources.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


def to_luma(img: PlanarImage) -> PlanarImage:
    """Single-channel float image in [0, 1].

    3-channel input is combined with BT.601 weights; 1-channel input is only
    rescaled (8-bit) or passed through (float).
    """
    if img.channels == 3:
        r, g, b = (p.astype(np.float64) for p in img.planes)
        y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
        if not img.is_float:
            y /= 255.0
    else:
        y = img.planes[0].astype(np.float64)
        if not img.is_float:
            y /= 255.0
    y = np.clip(y, 0.0, 1.0).astype(np.float32)
    return PlanarImage(img.width, img.height, 1, (y,))


def rgb_to_ycbcr420(img: PlanarImage):
    """Full-range BT.601 conversion with 2x2 box-averaged chroma.

    Returns (y, cb, cr) as 8-bit single-channel images; cb/cr are half
    resolution. Requires an even-sized 3-channel 8-bit image.
    """
    if img.channels != 3 or img.is_float:
        raise ValueError("expected a 3-channel 8-bit image")
    if img.width % 2 or img.height % 2:
        raise ValueError("dimensions must be even for 4:2:0 subsampling")
    r, g, b = (p.astype(np.float64) for p in img.planes)
    y = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    cb_half = _box2(cb)
    cr_half = _box2(cr)
    mk = lambda a: PlanarImage.from_array(
        np.clip(np.rint(a), 0, 255).astype(np.uint8)
    )
    return mk(y), mk(cb_half), mk(cr_half)


def ycbcr420_to_rgb(y: PlanarImage, cb: PlanarImage, cr: PlanarImage) -> PlanarImage:
    """Inverse of rgb_to_ycbcr420; chroma is upsampled nearest-neighbour."""
    yf = y.planes[0].astype(np.float64)
    cbf = _up2(cb.planes[0].astype(np.float64)) - 128.0
    crf = _up2(cr.planes[0].astype(np.float64)) - 128.0
    r = yf + 1.402 * crf
    g = yf - 0.344136 * cbf - 0.714136 * crf
    b = yf + 1.772 * cbf
    out = np.stack([r, g, b], axis=-1)
    return PlanarImage.from_array(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def _box2(a: np.ndarray) -> np.ndarray:
    return (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) / 4.0


def _up2(a: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)


# ---------------------------------------------------------------------------
# File I/O


def load_image(path) -> PlanarImage:
    """Decode a PNG or binary PGM/PPM file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data[:8] == _PNG_SIGNATURE:
        arr = _png_decode(data)
    elif data[:2] in (b"P5", b"P6"):
        arr = _pnm_decode(data)
    else:
        raise ImageFormatError(f"{path}: not a PNG or binary PGM/PPM file")
    return PlanarImage.from_array(arr)


def save_image(img: PlanarImage, path) -> None:
    """Encode 8-bit image to PNG / PGM / PPM chosen by extension."""
    if img.is_float:
        raise ValueError("only 8-bit images can be saved; quantize first")
    suffix = str(path).lower().rsplit(".", 1)
    ext = suffix[1] if len(suffix) == 2 else ""
    arr = img.to_array()
    if ext == "png":
        blob = _png_encode(arr)
    elif ext == "pgm":
        if img.channels != 1:
            raise ValueError("PGM holds grayscale only")
        blob = _pnm_encode(arr)
    elif ext == "ppm":
        if img.channels != 3:
            raise ValueError("PPM holds RGB only")
        blob = _pnm_encode(arr)
    else:
        raise ValueError(f"unsupported output extension {ext!r}")
    with open(path, "wb") as fh:
        fh.write(blob)


_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    crc = zlib.crc32(tag + body) & 0xFFFFFFFF
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", crc)


def _png_encode(arr: np.ndarray) -> bytes:
    gray = arr.ndim == 2
    h, w = arr.shape[:2]
    color_type = 0 if gray else 2
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    rows = arr.reshape(h, -1).astype(np.uint8)
    raw = b"".join(b"\x00" + rows[r].tobytes() for r in range(h))
    return (
        _PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(raw, 9))
        + _png_chunk(b"IEND", b"")
    )


def _png_decode(data: bytes) -> np.ndarray:
    pos = 8
    ihdr = None
    idat = b""
    while pos < len(data):
        if pos + 8 > len(data):
            raise ImageFormatError("truncated PNG chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise ImageFormatError("truncated PNG chunk body")
        (crc,) = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])
        if zlib.crc32(tag + body) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"PNG chunk {tag!r} CRC mismatch")
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif tag == b"IDAT":
            idat += body
        elif tag == b"IEND":
            break
        pos += 12 + length
    if ihdr is None:
        raise ImageFormatError("PNG missing IHDR")
    w, h, depth, color_type, comp, filt, interlace = ihdr
    if w == 0 or h == 0:
        raise ImageFormatError("PNG has zero dimension")
    if depth != 8 or color_type not in (0, 2):
        raise ImageFormatError(
            "unsupported PNG variant (need 8-bit grayscale or RGB)"
        )
    if comp != 0 or filt != 0 or interlace != 0:
        raise ImageFormatError("unsupported PNG compression/interlace mode")
    nch = 1 if color_type == 0 else 3
    try:
        raw = zlib.decompress(idat)
    except zlib.error as exc:
        raise ImageFormatError(f"PNG data stream corrupt: {exc}") from exc
    stride = w * nch
    if len(raw) != h * (stride + 1):
        raise ImageFormatError("PNG data stream has wrong length")
    out = np.empty((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for r in range(h):
        ftype = raw[r * (stride + 1)]
        line = np.frombuffer(
            raw, dtype=np.uint8, count=stride, offset=r * (stride + 1) + 1
        )
        out[r] = _png_unfilter_row(ftype, line, prev, nch)
        prev = out[r]
    if nch == 1:
        return out.reshape(h, w)
    return out.reshape(h, w, 3)


def _png_unfilter_row(ftype, line, prev, nch):
    if ftype == 0:
        return line.copy()
    if ftype == 2:
        return (line.astype(np.int32) + prev).astype(np.uint8)
    cur = line.astype(np.int32)
    up = prev.astype(np.int32)
    out = np.zeros_like(cur)
    # Sub/average/Paeth need the reconstructed left byte; go bytewise.
    for i in range(len(cur)):
        left = out[i - nch] if i >= nch else 0
        above = up[i]
        upleft = up[i - nch] if i >= nch else 0
        if ftype == 1:
            out[i] = (cur[i] + left) & 0xFF
        elif ftype == 3:
            out[i] = (cur[i] + ((left + above) >> 1)) & 0xFF
        elif ftype == 4:
            p = left + above - upleft
            pa, pb, pc = abs(p - left), abs(p - above), abs(p - upleft)
            if pa <= pb and pa <= pc:
                pred = left
            elif pb <= pc:
                pred = above
            else:
                pred = upleft
            out[i] = (cur[i] + pred) & 0xFF
        else:
            raise ImageFormatError(f"unknown PNG filter type {ftype}")
    return out.astype(np.uint8)


def _pnm_encode(arr: np.ndarray) -> bytes:
    gray = arr.ndim == 2
    h, w = arr.shape[:2]
    magic = b"P5" if gray else b"P6"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + arr.astype(np.uint8).tobytes()


def _pnm_decode(data: bytes) -> np.ndarray:
    magic = data[:2]
    nch = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PNM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ImageFormatError("malformed PNM header") from exc
    if w == 0 or h == 0:
        raise ImageFormatError("PNM has zero dimension")
    if maxval != 255:
        raise ImageFormatError("only 8-bit PNM supported")
    need = w * h * nch
    body = data[pos : pos + need]
    if len(body) != need:
        raise ImageFormatError("PNM pixel data truncated")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape(h, w) if nch == 1 else arr.reshape(h, w, 3)
