"""Image containers, binarization, bounding-box normalization and dataset I/O.

Pixel arrays are row-major ``uint8`` numpy arrays.  Binary images hold 0 for
background and 1 for foreground (ink).
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from celledproj.errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    EmptyImage,
    MissingFile,
    ParseError,
    TruncatedFile,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image, ``pixels[row, col]`` in 0..255."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise DimensionMismatch(f"expected a non-empty 2-D array, got shape {px.shape}")
        if px.min() < 0 or px.max() > 255:
            raise ValueError("gray intensities must lie in 0..255")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Binary image with ``rows`` (m) by ``cols`` (n) pixels in {0, 1}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise DimensionMismatch(f"expected a non-empty 2-D array, got shape {px.shape}")
        if px.dtype == bool:
            px = px.astype(np.uint8)
        elif not np.isin(px, (0, 1)).all():
            raise ValueError("binary image pixels must be 0 or 1")
        object.__setattr__(self, "pixels", _frozen(px))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int] | str]) -> "BinaryImage":
        """Build from nested lists or strings such as ``"0110"`` / ``".##."``."""
        parsed = []
        for row in rows:
            if isinstance(row, str):
                parsed.append([0 if ch in "0. " else 1 for ch in row])
            else:
                parsed.append(list(row))
        return cls(np.array(parsed, dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def foreground_count(self) -> int:
        return int(self.pixels.sum())

    def transpose(self) -> "BinaryImage":
        return BinaryImage(self.pixels.T)

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"BinaryImage({self.rows}x{self.cols}, fg={self.foreground_count()})"


def as_pixels(img) -> np.ndarray:
    """Return the 0/1 pixel array of a BinaryImage or array-like."""
    if isinstance(img, BinaryImage):
        return img.pixels
    return BinaryImage(img).pixels


@dataclass
class LabeledDataset:
    samples: list = field(default_factory=list)
    class_count: int = 10
    name: str = ""

    def __post_init__(self):
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        for idx, (img, label) in enumerate(self.samples):
            if not isinstance(img, BinaryImage):
                raise TypeError(f"sample {idx} is not a BinaryImage")
            if not 0 <= label < self.class_count:
                raise ValueError(f"sample {idx}: label {label} outside [0, {self.class_count})")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def images(self) -> list[BinaryImage]:
        return [img for img, _ in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.samples], dtype=np.int64)

    def normalized(self, rows: int = 16, cols: int = 16) -> "LabeledDataset":
        samples = [(normalize(img, rows, cols), label) for img, label in self.samples]
        return LabeledDataset(samples, self.class_count, self.name)


def binarize(img: GrayImage, threshold: int = 128, dark_foreground: bool = True) -> BinaryImage:
    """Threshold a gray image.

    With ``dark_foreground`` (the default, ink darker than background) a pixel is
    foreground iff its intensity is below ``threshold``; otherwise iff it is
    at or above ``threshold``.
    """
    px = img.pixels if isinstance(img, GrayImage) else GrayImage(img).pixels
    if dark_foreground:
        return BinaryImage(px < threshold)
    return BinaryImage(px >= threshold)


def bounding_rect(img) -> tuple[int, int, int, int]:
    """Minimal ``(top, left, bottom, right)`` box around foreground, 0-based inclusive."""
    px = as_pixels(img)
    rows = np.flatnonzero(px.any(axis=1))
    if rows.size == 0:
        raise EmptyImage("image has no foreground pixel")
    cols = np.flatnonzero(px.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


def normalize(img, target_rows: int = 16, target_cols: int = 16) -> BinaryImage:
    """Crop to the bounding rectangle and resample by nearest neighbour.

    Output pixel ``(i, j)`` copies cropped pixel ``(i*h // target_rows, j*w // target_cols)``.
    """
    if target_rows < 1 or target_cols < 1:
        raise ValueError("target dimensions must be >= 1")
    px = as_pixels(img)
    top, left, bottom, right = bounding_rect(px)
    crop = px[top : bottom + 1, left : right + 1]
    h, w = crop.shape
    src_r = np.arange(target_rows) * h // target_rows
    src_c = np.arange(target_cols) * w // target_cols
    return BinaryImage(crop[np.ix_(src_r, src_c)])


# --- plain PBM ------------------------------------------------------------

def _pbm_tokens(data: bytes):
    """Yield ``(offset, token)`` for header tokens, skipping comments."""
    i, n = 0, len(data)
    while i < n:
        ch = data[i : i + 1]
        if ch.isspace():
            i += 1
        elif ch == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            start = i
            while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            yield start, data[start:i]


def parse_pbm(data: bytes) -> BinaryImage:
    tokens = _pbm_tokens(data)
    try:
        off, magic = next(tokens)
    except StopIteration:
        raise ParseError("empty PBM data", 0) from None
    if magic != b"P1":
        raise ParseError(f"expected magic 'P1', found {magic[:8]!r}", off)
    dims = []
    for what in ("width", "height"):
        try:
            off, tok = next(tokens)
        except StopIteration:
            raise ParseError(f"missing {what}", len(data)) from None
        if not tok.isdigit() or int(tok) < 1:
            raise ParseError(f"invalid {what} {tok[:16]!r}", off)
        dims.append(int(tok))
    cols, rows = dims
    bits = []
    # raster: every '0'/'1' character is one pixel, whitespace optional
    for off, tok in tokens:
        for j, b in enumerate(tok):
            if b not in (0x30, 0x31):
                raise ParseError(f"invalid raster character {chr(b)!r}", off + j)
            bits.append(b - 0x30)
    if len(bits) != rows * cols:
        raise DimensionMismatch(f"PBM declares {cols}x{rows} = {rows * cols} pixels, found {len(bits)}")
    return BinaryImage(np.array(bits, dtype=np.uint8).reshape(rows, cols))


def load_pbm(path) -> BinaryImage:
    return parse_pbm(Path(path).read_bytes())


def format_pbm(img) -> str:
    px = as_pixels(img)
    lines = ["P1", f"{px.shape[1]} {px.shape[0]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in px]
    return "\n".join(lines) + "\n"


def save_pbm(img, path) -> None:
    Path(path).write_text(format_pbm(img), encoding="ascii")


# --- IDX ubyte ------------------------------------------------------------

def _read_header(data: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(data) < 4:
        raise TruncatedFile(f"{path}: file shorter than the magic number")
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(data) < need:
        raise TruncatedFile(f"{path}: header truncated")
    return struct.unpack_from(f">{ndim}I", data, 4)


def load_idx_pair(images_path, labels_path, threshold: int = 128,
                  dark_foreground: bool = True, class_count: int = 10) -> LabeledDataset:
    """Read an IDX image/label file pair and binarize every record."""
    img_data = Path(images_path).read_bytes()
    lbl_data = Path(labels_path).read_bytes()
    count, rows, cols = _read_header(img_data, IDX_IMAGES_MAGIC, 3, images_path)
    (n_labels,) = _read_header(lbl_data, IDX_LABELS_MAGIC, 1, labels_path)
    if count != n_labels:
        raise CountMismatch(f"{count} images but {n_labels} labels")
    body = img_data[16:]
    if len(body) < count * rows * cols:
        raise TruncatedFile(f"{images_path}: expected {count * rows * cols} pixel bytes, found {len(body)}")
    if len(lbl_data) - 8 < count:
        raise TruncatedFile(f"{labels_path}: expected {count} label bytes, found {len(lbl_data) - 8}")
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=count, offset=8)
    samples = []
    if count:
        grays = np.frombuffer(body, dtype=np.uint8, count=count * rows * cols).reshape(count, rows, cols)
        for gray, label in zip(grays, labels):
            samples.append((binarize(GrayImage(gray), threshold, dark_foreground), int(label)))
    return LabeledDataset(samples, class_count, name=Path(images_path).name)


def save_idx_pair(dataset: LabeledDataset, images_path, labels_path) -> None:
    """Write ``dataset`` as IDX; foreground is stored dark (0) on white (255)."""
    images = dataset.images
    rows, cols = images[0].shape if images else (0, 0)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(images), rows, cols))
        for img in images:
            if img.shape != (rows, cols):
                raise DimensionMismatch("IDX requires all images to share one size")
            fh.write(((1 - img.pixels) * 255).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(images)))
        fh.write(bytes(int(label) for label in dataset.labels))


# --- manifest of PBM files -------------------------------------------------

def load_manifest(directory, manifest_path, class_count: int = 10) -> LabeledDataset:
    """Load ``filename,label`` rows of PBM files relative to ``directory``.

    A first row reading ``filename,label`` is taken as a header.
    """
    directory = Path(directory)
    samples = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["filename", "label"]:
                continue
            if len(row) != 2:
                raise ParseError(f"{manifest_path}:{lineno}: expected 'filename,label'")
            name, label = row[0].strip(), row[1].strip()
            path = directory / name
            if not path.is_file():
                raise MissingFile(f"{manifest_path}:{lineno}: file {name!r} not found")
            try:
                label = int(label)
            except ValueError:
                raise ParseError(f"{manifest_path}:{lineno}: bad label {label!r}") from None
            samples.append((load_pbm(path), label))
    return LabeledDataset(samples, class_count, name=Path(manifest_path).name)


def save_manifest(dataset: LabeledDataset, directory, manifest_name: str = "manifest.csv",
                  stem: str = "sample") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(dataset))))
    rows = ["filename,label\n"]
    for idx, (img, label) in enumerate(dataset.samples):
        name = f"{stem}{idx:0{width}d}.pbm"
        save_pbm(img, directory / name)
        rows.append(f"{name},{label}\n")
    manifest = directory / manifest_name
    manifest.write_text("".join(rows), encoding="utf-8")
    return manifest


def load_dataset(path, threshold: int = 128, dark_foreground: bool = True,
                 class_count: int = 10) -> LabeledDataset:
    """Open a dataset by path.

    Accepted forms: a directory holding ``manifest.csv``; a manifest file;
    an IDX images file ``X-images.idx3-ubyte`` whose labels sit next to it
    as ``X-labels.idx1-ubyte``.
    """
    path = Path(path)
    if path.is_dir():
        return load_manifest(path, path / "manifest.csv", class_count)
    if not path.exists():
        raise MissingFile(f"{path} does not exist")
    name = path.name
    if name.endswith("-images.idx3-ubyte"):
        labels = path.with_name(name[: -len("-images.idx3-ubyte")] + "-labels.idx1-ubyte")
        if not labels.exists():
            raise MissingFile(f"label file {labels} does not exist")
        return load_idx_pair(path, labels, threshold, dark_foreground, class_count)
    if path.suffix == ".pbm":
        return LabeledDataset([(load_pbm(path), 0)], class_count, name=name)
    return load_manifest(path.parent, path, class_count)


def idx_paths(stem) -> tuple[str, str]:
    stem = os.fspath(stem)
    if stem.endswith(".idx"):
        stem = stem[:-4]
    return f"{stem}-images.idx3-ubyte", f"{stem}-labels.idx1-ubyte"


def stack(images: Sequence[BinaryImage]) -> np.ndarray:
    return np.stack([as_pixels(img) for img in images]) if images else np.zeros((0, 0, 0), np.uint8)
