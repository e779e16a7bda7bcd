"""Image files: PNG (self-contained zlib codec) and binary PPM.

Images are ``(H, W, 3)`` float32 arrays in [0, 1]. Files are 8-bit RGB.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
SUFFIXES = (".png", ".ppm")


class ImageError(Exception):
    kind = "image"


class UnsupportedFormatError(ImageError):
    kind = "unsupported_format"


class CorruptImageError(ImageError):
    kind = "corrupt_image"


class ImageWriteError(ImageError):
    kind = "unwritable_path"


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round half up to 8-bit."""
    v = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptImageError(f"{path}: cannot read ({exc.strerror})") from exc
    if raw.startswith(PNG_SIGNATURE):
        pixels = decode_png(raw)
    elif raw[:2] == b"P6":
        pixels = decode_ppm(raw)
    else:
        raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM file")
    return pixels.astype(np.float32) / np.float32(255.0)


def save_image(image: np.ndarray, path):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUFFIXES:
        raise UnsupportedFormatError(f"{path}: cannot encode {suffix or 'files without suffix'}")
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    pixels = quantize(arr)
    data = encode_png(pixels) if suffix == ".png" else encode_ppm(pixels)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise ImageWriteError(f"{path}: cannot write ({exc.strerror})") from exc


def list_images(directory) -> list:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in SUFFIXES and p.is_file())


# --------------------------------------------------------------------------
# PPM


def _ppm_tokens(raw: bytes, count: int):
    tokens, i = [], 2
    while len(tokens) < count:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace() and raw[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise CorruptImageError("truncated PPM header")
        tokens.append(raw[start:i])
    return tokens, i + 1  # one whitespace byte ends the header


def decode_ppm(raw: bytes) -> np.ndarray:
    try:
        (w, h, maxval), offset = _ppm_tokens(raw, 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise CorruptImageError(f"bad PPM header: {exc}") from exc
    if not 0 < maxval < 65536:
        raise CorruptImageError(f"bad PPM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    need = w * h * 3 * dtype.itemsize
    body = raw[offset : offset + need]
    if len(body) < need:
        raise CorruptImageError(f"PPM body has {len(body)} bytes, expected {need}")
    arr = np.frombuffer(body, dtype=dtype).reshape(h, w, 3).astype(np.float64)
    if maxval != 255:
        arr = np.floor(arr * 255.0 / maxval + 0.5)
    return arr.astype(np.uint8)


def encode_ppm(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


# --------------------------------------------------------------------------
# PNG


@dataclass
class _PngHeader:
    width: int
    height: int
    bit_depth: int
    color_type: int
    interlace: int

    @property
    def channels(self) -> int:
        return {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}[self.color_type]


def _chunks(raw: bytes):
    pos = len(PNG_SIGNATURE)
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise CorruptImageError("truncated PNG chunk header")
        length, ctype = struct.unpack(">I4s", raw[pos : pos + 8])
        data = raw[pos + 8 : pos + 8 + length]
        crc = raw[pos + 8 + length : pos + 12 + length]
        if len(data) < length or len(crc) < 4:
            raise CorruptImageError(f"truncated PNG chunk {ctype!r}")
        if zlib.crc32(ctype + data) != struct.unpack(">I", crc)[0]:
            raise CorruptImageError(f"CRC mismatch in PNG chunk {ctype!r}")
        yield ctype, data
        pos += 12 + length


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(data: bytes, height: int, stride: int, bpp: int) -> np.ndarray:
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for y in range(height):
        if pos + 1 + stride > len(data):
            raise CorruptImageError("PNG image data shorter than declared size")
        ftype = data[pos]
        line = np.frombuffer(data, dtype=np.uint8, count=stride, offset=pos + 1)
        pos += 1 + stride
        if ftype == 0:
            row = line.copy()
        elif ftype == 1:
            row = np.cumsum(line.reshape(-1, bpp).astype(np.int64), axis=0).astype(np.uint8).reshape(-1)
        elif ftype == 2:
            row = line + prev
        elif ftype in (3, 4):
            cur = bytearray(line.tobytes())
            up = prev.tobytes()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                if ftype == 3:
                    pred = (left + up[i]) >> 1
                else:
                    pred = _paeth(left, up[i], up[i - bpp] if i >= bpp else 0)
                cur[i] = (cur[i] + pred) & 0xFF
            row = np.frombuffer(bytes(cur), dtype=np.uint8)
        else:
            raise CorruptImageError(f"unknown PNG filter type {ftype}")
        out[y] = row
        prev = out[y]
    return out


def decode_png(raw: bytes) -> np.ndarray:
    header, palette, idat = None, None, []
    for ctype, data in _chunks(raw):
        if ctype == b"IHDR":
            w, h, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", data)
            header = _PngHeader(w, h, depth, color, interlace)
        elif ctype == b"PLTE":
            palette = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3)
        elif ctype == b"IDAT":
            idat.append(data)
        elif ctype == b"IEND":
            break
    if header is None or not idat:
        raise CorruptImageError("PNG missing IHDR or IDAT")
    if header.color_type not in (0, 2, 3, 4, 6):
        raise CorruptImageError(f"invalid PNG color type {header.color_type}")
    if header.interlace:
        raise UnsupportedFormatError("interlaced PNG is not supported")
    if header.bit_depth not in (8, 16) or (header.color_type == 3 and header.bit_depth != 8):
        raise UnsupportedFormatError(f"PNG bit depth {header.bit_depth} is not supported")
    try:
        data = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise CorruptImageError(f"bad PNG compressed stream: {exc}") from exc

    nbytes = header.bit_depth // 8
    bpp = header.channels * nbytes
    rows = _unfilter(data, header.height, header.width * bpp, bpp)
    if nbytes == 2:
        vals = rows.view(">u2").astype(np.float64).reshape(header.height, header.width, header.channels)
        vals = np.floor(vals * 255.0 / 65535.0 + 0.5).astype(np.uint8)
    else:
        vals = rows.reshape(header.height, header.width, header.channels)

    if header.color_type == 3:
        if palette is None:
            raise CorruptImageError("palette PNG without PLTE chunk")
        idx = vals[..., 0]
        if idx.max(initial=0) >= len(palette):
            raise CorruptImageError("palette index out of range")
        return palette[idx]
    if header.color_type in (0, 4):
        return np.repeat(vals[..., :1], 3, axis=2)
    return np.ascontiguousarray(vals[..., :3])


def _chunk(ctype: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", zlib.crc32(ctype + data))


def encode_png(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    rows = np.ascontiguousarray(pixels, dtype=np.uint8).reshape(h, w * 3)
    body = np.concatenate([np.zeros((h, 1), dtype=np.uint8), rows], axis=1).tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return PNG_SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(body, 6)) + _chunk(b"IEND", b"")


# --------------------------------------------------------------------------
# paired datasets


class DatasetError(Exception):
    kind = "dataset"


def paired_dataset(root) -> list:
    """``(hazy, clean)`` path pairs from ``root/hazy`` and ``root/clean``, sorted by basename."""
    root = Path(root)
    hazy_dir, clean_dir = root / "hazy", root / "clean"
    if not hazy_dir.is_dir() or not clean_dir.is_dir():
        raise DatasetError(f"{root}: expected hazy/ and clean/ subdirectories")
    hazy = {p.name: p for p in list_images(hazy_dir)}
    clean = {p.name: p for p in list_images(clean_dir)}
    missing = sorted(set(hazy) ^ set(clean))
    if missing:
        raise DatasetError(f"{root}: unpaired files: {', '.join(missing)}")
    if not hazy:
        raise DatasetError(f"{root}: no image pairs found")
    return [(hazy[n], clean[n]) for n in sorted(hazy)]


def load_pairs(root) -> list:
    """Decoded ``(hazy, clean)`` arrays; dimensions must agree within a pair."""
    pairs = []
    for hp, cp in paired_dataset(root):
        h, c = load_image(hp), load_image(cp)
        if h.shape != c.shape:
            raise DatasetError(f"{hp.name}: hazy {h.shape} and clean {c.shape} differ in size")
        pairs.append((h, c))
    return pairs
