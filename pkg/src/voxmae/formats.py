"""File formats: PPM/PGM images, PFM depth maps, ASCII PLY point clouds.

All parsers are hand-rolled so files are bit-exact and malformed input is
reported with the byte offset where parsing failed. Conventions:

* PPM is binary P6 with maxval 255; pixel values map to [0, 1] by /255.
* PGM is binary P5; a maxval above 255 means two bytes per sample,
  most significant byte first. Sample values are used as raw depth.
* PFM is the grayscale 'Pf' variant; a negative scale marks little-endian
  float32 data and scanlines are stored bottom-to-top.
* PLY is ASCII with float x/y/z and uchar red/green/blue; colors are
  rescaled to 0-255 on write and /255 on read.
"""

from __future__ import annotations

import numpy as np

from .exceptions import FormatError
from .lift import DepthImage
from .types import PointCloud

PLY_PROPERTIES = (
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
)


class _Reader:
    """Byte cursor over a file's contents with offset-aware errors."""

    def __init__(self, path):
        self.path = path
        with open(path, "rb") as f:
            self.data = f.read()
        self.pos = 0

    def fail(self, message: str, at: int | None = None):
        raise FormatError(self.path, self.pos if at is None else at, message)

    def read_line(self) -> str:
        start = self.pos
        end = self.data.find(b"\n", start)
        if end < 0:
            self.fail("unexpected end of file inside header", at=start)
        self.pos = end + 1
        return self.data[start:end].decode("latin-1").rstrip("\r")

    def read_exact(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated {what}: wanted {n} bytes")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def next_token(self) -> str:
        """Netpbm header token: skips whitespace and '#' comments."""
        data = self.data
        while self.pos < len(data):
            c = data[self.pos : self.pos + 1]
            if c == b"#":
                end = data.find(b"\n", self.pos)
                self.pos = len(data) if end < 0 else end + 1
            elif c.isspace():
                self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < len(data) and not data[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if self.pos == start:
            self.fail("expected header token", at=start)
        return data[start : self.pos].decode("latin-1")

    def next_int(self, what: str) -> int:
        at = self.pos
        token = self.next_token()
        try:
            return int(token)
        except ValueError:
            self.fail(f"bad {what}: {token!r}", at=at)


# ----------------------------------------------------------------------
# PPM / PGM
# ----------------------------------------------------------------------


def read_ppm(path) -> np.ndarray:
    """Binary P6 image as (H, W, 3) float64 in [0, 1]."""
    r = _Reader(path)
    magic = r.next_token()
    if magic != "P6":
        r.fail(f"not a binary PPM (magic {magic!r})", at=0)
    width = r.next_int("width")
    height = r.next_int("height")
    maxval = r.next_int("maxval")
    if maxval != 255:
        r.fail(f"only maxval 255 is supported, got {maxval}")
    r.read_exact(1, "pixel-data separator")
    raw = r.read_exact(width * height * 3, "pixel data")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return img.astype(np.float64) / 255.0


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write (H, W, 3) values in [0, 1] as binary P6."""
    img = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 image as (H, W) float64 of raw sample values."""
    r = _Reader(path)
    magic = r.next_token()
    if magic != "P5":
        r.fail(f"not a binary PGM (magic {magic!r})", at=0)
    width = r.next_int("width")
    height = r.next_int("height")
    maxval = r.next_int("maxval")
    if not 0 < maxval < 65536:
        r.fail(f"maxval out of range: {maxval}")
    r.read_exact(1, "pixel-data separator")
    if maxval > 255:
        raw = r.read_exact(width * height * 2, "pixel data")
        img = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    else:
        raw = r.read_exact(width * height, "pixel data")
        img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return img.astype(np.float64)


def write_pgm(path, depth: np.ndarray, maxval: int = 65535) -> None:
    """Write (H, W) integer sample values as binary P5 (16-bit by default)."""
    img = np.asarray(depth)
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else np.uint8
    data = np.clip(np.rint(img), 0, maxval).astype(dtype)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(data.tobytes())


# ----------------------------------------------------------------------
# PFM
# ----------------------------------------------------------------------


def read_pfm(path) -> np.ndarray:
    """Grayscale PFM as (H, W) float64, top row first."""
    r = _Reader(path)
    magic = r.read_line()
    if magic == "PF":
        r.fail("color PFM not supported, expected grayscale 'Pf'", at=0)
    if magic != "Pf":
        r.fail(f"not a PFM (magic {magic!r})", at=0)
    dims_at = r.pos
    dims = r.read_line().split()
    if len(dims) != 2:
        r.fail("expected 'width height'", at=dims_at)
    try:
        width, height = int(dims[0]), int(dims[1])
    except ValueError:
        r.fail(f"bad dimensions {dims!r}", at=dims_at)
    scale_at = r.pos
    try:
        scale = float(r.read_line())
    except ValueError:
        r.fail("bad scale line", at=scale_at)
    dtype = "<f4" if scale < 0 else ">f4"
    raw = r.read_exact(width * height * 4, "float32 data")
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    if not np.isfinite(img).all():
        r.fail("non-finite depth values")
    return np.flipud(img).astype(np.float64)  # PFM rows are bottom-to-top


def write_pfm(path, depth: np.ndarray) -> None:
    """Write (H, W) float data as little-endian grayscale PFM."""
    img = np.asarray(depth, dtype=np.float64)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(np.flipud(img).astype("<f4").tobytes())


# ----------------------------------------------------------------------
# PLY
# ----------------------------------------------------------------------


def write_ply(path, pc: PointCloud) -> None:
    """ASCII PLY with float coordinates and uchar colors (one LF per line)."""
    colors = np.clip(np.rint(pc.colors * 255.0), 0, 255).astype(np.int64)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pc.count}",
        *PLY_PROPERTIES,
        "end_header",
    ]
    for (x, y, z), (cr, cg, cb) in zip(pc.coords, colors):
        lines.append(f"{x:.8f} {y:.8f} {z:.8f} {cr} {cg} {cb}")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())


def read_ply(path) -> PointCloud:
    """Read an ASCII PLY written by write_ply (or equivalent layout)."""
    r = _Reader(path)
    if r.read_line() != "ply":
        r.fail("not a PLY file", at=0)
    fmt_at = r.pos
    if r.read_line() != "format ascii 1.0":
        r.fail("only 'format ascii 1.0' is supported", at=fmt_at)

    count = None
    properties = []
    while True:
        line_at = r.pos
        line = r.read_line()
        if line == "end_header":
            break
        if line.startswith("comment"):
            continue
        if line.startswith("element vertex "):
            try:
                count = int(line.split()[-1])
            except ValueError:
                r.fail(f"bad vertex count in {line!r}", at=line_at)
        elif line.startswith("element"):
            r.fail(f"unsupported element {line!r}", at=line_at)
        elif line.startswith("property"):
            properties.append(line)
        else:
            r.fail(f"unexpected header line {line!r}", at=line_at)
    if count is None:
        r.fail("missing 'element vertex' declaration")
    if tuple(properties) != PLY_PROPERTIES:
        r.fail(f"unsupported property layout {properties!r}")

    points = np.empty((count, 6))
    for i in range(count):
        row_at = r.pos
        fields = r.read_line().split()
        if len(fields) != 6:
            r.fail(f"vertex {i}: expected 6 fields, got {len(fields)}", at=row_at)
        try:
            points[i, :3] = [float(v) for v in fields[:3]]
            points[i, 3:] = [int(v) for v in fields[3:]]
        except ValueError:
            r.fail(f"vertex {i}: malformed values", at=row_at)
    points[:, 3:] /= 255.0
    return PointCloud(points=points)


def load_depth_image(image_path, depth_path) -> DepthImage:
    """Read a PPM image and its PFM/PGM depth map into one DepthImage.

    The depth format is sniffed from the file's magic bytes; a resolution
    mismatch between image and depth surfaces as DepthImage's ValueError.
    """
    rgb = read_ppm(image_path)
    with open(depth_path, "rb") as f:
        magic = f.read(2)
    if magic == b"Pf" or magic == b"PF":
        depth = read_pfm(depth_path)
    elif magic == b"P5":
        depth = read_pgm(depth_path)
    else:
        raise FormatError(depth_path, 0, f"unknown depth format (magic {magic!r})")
    return DepthImage(rgb=rgb, depth=depth)
