"""Readers and writers: FDT1 tensors, CSV matrices and tables, PGM/PPM images.

FDT1 layout (little endian): ``b"FDT1"``, one version byte (1), four uint64
dimensions ``n, J, K, p``, then ``n*J*K*p`` float64 values in
(observation, j, k, channel) order.  NaN in every channel of a cell marks it
missing.
"""

import csv
import glob
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FormatError, InsufficientDataError, InvalidInputError, UnsupportedFormatError
from .preprocess import missing_cells

MAGIC = b"FDT1"
VERSION = 1
_HEADER = struct.Struct("<4sB4Q")
RESULT_COLUMNS = ("id", "fao", "vao", "cfo", "lcfo", "zscore", "flagged")
IMAGE_SUFFIXES = (".pgm", ".ppm")


@dataclass
class Dataset:
    """n grid functions on a shared J x K grid with p channels."""

    values: np.ndarray
    ids: list = field(default_factory=list)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 3:
            v = v[..., None]
        if v.ndim != 4:
            raise InvalidInputError(f"dataset values must be (n, J, K[, p]), got {v.shape}")
        self.values = v
        if not self.ids:
            self.ids = [str(i + 1) for i in range(v.shape[0])]
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != v.shape[0]:
            raise InvalidInputError("one id per observation is required")
        if len(set(self.ids)) != len(self.ids):
            raise InvalidInputError("observation ids must be unique")

    @property
    def shape(self):
        return self.values.shape

    @property
    def mask(self):
        """(n, J, K) booleans, True where a cell is missing."""
        return np.stack([missing_cells(g) for g in self.values]) if self.values.size else np.zeros(self.shape[:3], bool)

    @property
    def has_missing(self):
        return bool(np.isnan(self.values).any())


def _fmt(x):
    return repr(float(x)) if not np.isfinite(x) else f"{x:.17g}"


# -- FDT1 -----------------------------------------------------------------


def write_tensor(values, path):
    x = np.asarray(values.values if isinstance(values, Dataset) else values, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4 or min(x.shape) < 1:
        raise InvalidInputError(f"tensor must be (n, J, K, p) with all dims >= 1, got {x.shape}")
    missing_cells_all(x)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, *x.shape))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def missing_cells_all(x):
    nan = np.isnan(x)
    partial = nan.any(axis=-1) & ~nan.all(axis=-1)
    if partial.any():
        i, j, k = np.argwhere(partial)[0]
        raise InvalidInputError(f"observation {i}, cell ({j}, {k}) is missing in some channels only")


def read_tensor(path, ids=None):
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"file too short for an FDT1 header ({len(data)} bytes)", offset=len(data), path=path)
    magic, version, n, J, K, p = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0, path=path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4, path=path)
    for pos, dim in enumerate((n, J, K, p)):
        if dim < 1:
            raise FormatError("dimensions must be >= 1", offset=5 + 8 * pos, path=path)
    count = n * J * K * p
    if count >= 2**61:
        raise FormatError("dimension product overflows", offset=5, path=path)
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        what = "truncated payload" if len(data) < expected else "trailing bytes after payload"
        raise FormatError(f"{what}: expected {expected} bytes, got {len(data)}", offset=min(len(data), expected), path=path)
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(n, J, K, p)
    try:
        missing_cells_all(values)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path=path) from exc
    return Dataset(values, ids or [])


# -- CSV matrices ---------------------------------------------------------


def write_csv_matrix(matrix, path):
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([_fmt(v) for v in row])


def read_csv_matrix(path):
    """Numeric CSV matrix; empty fields and NaN become missing."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) if c.strip() else np.nan for c in row])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", path=path) from exc
    if not rows:
        raise FormatError("empty CSV matrix", path=path)
    if len({len(r) for r in rows}) != 1:
        raise FormatError("ragged CSV matrix", path=path)
    return np.array(rows)


def read_csv_dir(path, pattern="*.csv"):
    files = sorted(glob.glob(os.path.join(path, pattern)))
    if not files:
        raise FormatError(f"no files matching {pattern}", path=path)
    mats = []
    for f in files:
        m = read_csv_matrix(f)
        if mats and m.shape != mats[0].shape:
            raise FormatError(f"shape {m.shape} differs from {mats[0].shape}", path=f)
        mats.append(m)
    return Dataset(np.stack(mats)[..., None], [Path(f).stem for f in files])


# -- PGM / PPM ------------------------------------------------------------


def _netpbm_tokens(data, count, path):
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and (chr(data[pos]).isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in (10, 13):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and not chr(data[pos]).isspace() and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise FormatError("truncated header", offset=pos, path=path)
        tokens.append(data[start:pos])
    return tokens, pos


def read_image(path):
    """Binary PGM (P5, p = 1) or PPM (P6, p = 3) as a (J, K, p) float array.

    Rows of the image map to j and columns to k; values stay in 0..maxval.
    """
    data = Path(path).read_bytes()
    if len(data) < 2:
        raise FormatError("not a netpbm file", offset=0, path=path)
    magic = data[:2]
    if magic in (b"P2", b"P3", b"P1", b"P4"):
        raise UnsupportedFormatError(f"{magic.decode()} images are not supported; use binary P5/P6", offset=0, path=path)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"bad magic {magic!r}", offset=0, path=path)
    channels = 1 if magic == b"P5" else 3
    tokens, pos = _netpbm_tokens(data, 4, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad header field: {exc}", path=path) from exc
    if width < 1 or height < 1:
        raise FormatError("image dimensions must be positive", path=path)
    if maxval > 255 or maxval < 1:
        raise UnsupportedFormatError(f"maxval {maxval} not supported (must be 1..255)", path=path)
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    if len(data) - pos < need:
        raise FormatError(f"truncated pixel data: need {need} bytes", offset=len(data), path=path)
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return px.reshape(height, width, channels).astype(np.float64)


def write_image(grid, path, maxval=255):
    """Write a (J, K) or (J, K, 1) grid as P5 and a (J, K, 3) grid as P6."""
    g = np.asarray(grid)
    if g.ndim == 2:
        g = g[..., None]
    if g.ndim != 3 or g.shape[2] not in (1, 3):
        raise InvalidInputError(f"image must be (J, K), (J, K, 1) or (J, K, 3), got {g.shape}")
    if np.isnan(g).any() or g.min() < 0 or g.max() > maxval:
        raise InvalidInputError(f"pixel values must lie in 0..{maxval}")
    magic = b"P5" if g.shape[2] == 1 else b"P6"
    header = b"%s\n%d %d\n%d\n" % (magic, g.shape[1], g.shape[0], maxval)
    with open(path, "wb") as fh:
        fh.write(header + np.rint(g).astype(np.uint8).tobytes())


def _image_files(path, pattern):
    if pattern is not None:
        return sorted(glob.glob(os.path.join(path, pattern)))
    return sorted(f for f in glob.glob(os.path.join(path, "*")) if f.lower().endswith(IMAGE_SUFFIXES))


def read_frame_dir(path, pattern=None, min_frames=4):
    """Frames of a directory in lexicographic file-name order.

    Observation ids are the file stems.  All frames must share dimensions.
    """
    files = _image_files(path, pattern)
    if len(files) < min_frames:
        raise InsufficientDataError(f"{path}: need at least {min_frames} frames, found {len(files)}")
    frames = []
    for f in files:
        img = read_image(f)
        if frames and img.shape != frames[0].shape:
            raise FormatError(f"frame shape {img.shape} differs from {frames[0].shape}", path=f)
        frames.append(img)
    return Dataset(np.stack(frames), [Path(f).stem for f in files])


# -- results --------------------------------------------------------------


def write_heatmap(field, path, fmt="csv", cap=None):
    """Write one AO field as a CSV matrix or as an 8-bit PGM scaled by ``cap``."""
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise InvalidInputError("heatmap field must be 2-d")
    if fmt == "csv":
        write_csv_matrix(f if cap is None else np.minimum(f, cap), path)
    elif fmt == "pgm":
        if cap is None or not cap > 0:
            raise InvalidInputError("PGM heatmaps need a positive cap")
        px = np.floor(255.0 * np.minimum(f, cap) / cap + 0.5)
        write_image(px, path)
    else:
        raise InvalidInputError(f"unknown heatmap format {fmt!r}")


def write_result_table(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in result.records():
            w.writerow([r.id, _fmt(r.fao), _fmt(r.vao), _fmt(r.cfo), _fmt(r.lcfo), _fmt(r.zscore), int(r.flagged)])


def read_result_table(path):
    """Rows of a result table as a dict of columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_COLUMNS:
            raise FormatError(f"expected header {','.join(RESULT_COLUMNS)}", offset=0, path=path)
        rows = [r for r in reader if r]
    if not rows:
        raise FormatError("result table has no rows", path=path)
    cols = {name: [r[i] for r in rows] for i, name in enumerate(RESULT_COLUMNS)}
    out = {"id": cols["id"]}
    try:
        for name in RESULT_COLUMNS[1:-1]:
            out[name] = np.array([float(v) for v in cols[name]])
        out["flagged"] = np.array([v == "1" for v in cols["flagged"]])
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from exc
    if len(set(out["id"])) != len(out["id"]):
        raise FormatError("duplicate ids", path=path)
    return out


def read_weights(path, shape):
    """J x K weight grid from CSV, rescaled to sum to 1."""
    w = read_csv_matrix(path)
    if w.shape != tuple(shape):
        raise FormatError(f"weights shape {w.shape} does not match grid {tuple(shape)}", path=path)
    if not np.all(np.isfinite(w)) or (w < 0).any() or not w.sum() > 0:
        raise FormatError("weights must be finite, nonnegative and not all zero", path=path)
    return w / w.sum()
