"""File formats: PGM images, raw GFT1 tensors, and the CSV dialects."""
from __future__ import annotations

import struct

import numpy as np

from .errors import ShapeError
from .kernel import KernelGrid

TENSOR_MAGIC = b"GFT1"


class FormatError(ValueError):
    """A file does not follow its declared format."""


# -- PGM ---------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last one.
    """
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM and map samples linearly onto [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file (magic {magic!r})")
    (_, w, h, maxval), offset = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[offset:offset + w * h * dtype.itemsize]
        if len(raw) != w * h * dtype.itemsize:
            raise FormatError(f"{path}: truncated PGM payload")
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        fields = data[offset - 1:].split()
        if len(fields) < w * h:
            raise FormatError(f"{path}: truncated PGM payload")
        values = np.array([int(v) for v in fields[:w * h]], dtype=np.float64)
    if values.max(initial=0) > maxval:
        raise FormatError(f"{path}: sample exceeds maxval")
    return values.reshape(h, w) / maxval


def write_pgm(path, image, maxval: int = 65535, binary: bool = True) -> None:
    """Clamp to [0, 1], quantize to ``maxval`` levels and write P5 (or P2)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"PGM images are 2-D, got shape {img.shape}")
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = img.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
            fh.write(q.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            fh.write(b"P2\n%d %d\n%d\n" % (w, h, maxval))
            for row in q:
                fh.write(" ".join(str(v) for v in row).encode() + b"\n")


# -- raw tensors -------------------------------------------------------------


def write_tensor(path, array) -> None:
    a = np.ascontiguousarray(array, dtype="<f8")
    if a.ndim not in (1, 2, 3):
        raise ShapeError(f"tensor files hold 1 to 3 dimensions, got {a.ndim}")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        fh.write(a.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad tensor magic {data[:4]!r}")
    if len(data) < 8:
        raise FormatError(f"{path}: truncated tensor header")
    (ndim,) = struct.unpack_from("<I", data, 4)
    if ndim not in (1, 2, 3):
        raise FormatError(f"{path}: tensor ndim must be 1..3, got {ndim}")
    head = 8 + 4 * ndim
    if len(data) < head:
        raise FormatError(f"{path}: truncated tensor header")
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    count = int(np.prod(dims))
    if len(data) - head != 8 * count:
        raise FormatError(
            f"{path}: payload is {len(data) - head} bytes, expected {8 * count} for dims {dims}"
        )
    return np.frombuffer(data, dtype="<f8", offset=head).astype(np.float64).reshape(dims)


# -- CSV ---------------------------------------------------------------------


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def format_kernel_csv(kernel: KernelGrid) -> str:
    lines = [f"# ry={kernel.ry} rx={kernel.rx} kind={kernel.kind}"]
    lines += [",".join(_fmt(v) for v in row) for row in kernel.coeffs]
    return "\n".join(lines) + "\n"


def write_kernel_csv(path, kernel: KernelGrid) -> None:
    with open(path, "w") as fh:
        fh.write(format_kernel_csv(kernel))


def read_kernel_csv(path) -> KernelGrid:
    """Read a kernel CSV; the header is optional and checked against the grid when present."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    header[key] = value
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise FormatError(f"{path}: non-numeric kernel entry in {line!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: kernel rows are missing or ragged")
    kernel = KernelGrid(np.array(rows), header.get("kind", "freeform"))
    for key, actual in (("ry", kernel.ry), ("rx", kernel.rx)):
        if key in header and int(header[key]) != actual:
            raise FormatError(f"{path}: header says {key}={header[key]} but grid has {actual}")
    return kernel


def read_weights_csv(path) -> np.ndarray:
    """Numbers separated by commas and/or newlines; ``#`` lines are comments."""
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise FormatError(f"{path}: non-numeric weight {tok!r}") from None
    return np.array(values)


def format_trajectory_csv(trajectory) -> str:
    d = len(trajectory[0].params) if trajectory else 1
    header = ["step", "loss", "grad_norm"] + [f"p{i + 1}" for i in range(d)]
    lines = [",".join(header)]
    for pt in trajectory:
        lines.append(",".join([str(pt.step), _fmt(pt.loss), _fmt(pt.grad_norm)]
                              + [_fmt(v) for v in pt.params.p]))
    return "\n".join(lines) + "\n"
