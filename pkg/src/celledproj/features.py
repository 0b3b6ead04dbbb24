"""Feature extractors for binary character images.

The celled projection yields bit vectors packed into 64-bit words; every
other extractor yields a float64 numpy vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from celledproj.errors import (
    BadCellCount,
    BadGrid,
    ConfigError,
    EmptyImage,
    ImageTooSmall,
    LengthMismatch,
    ParseError,
)
from celledproj.imagecore import as_pixels

WORD_BITS = 64

CENTRAL_MOMENT_ORDERS = (
    (0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 2),
    (3, 0), (0, 3), (2, 1), (1, 2), (3, 1), (1, 3), (4, 0), (0, 4),
)


@dataclass(frozen=True, eq=False)
class BitFeatureVector:
    """Fixed-length bit vector.

    Bit ``b`` lives in ``words[b // 64]`` at position ``b % 64`` (least
    significant first).  Bits at positions ``>= bit_length`` are zero.
    """

    bit_length: int
    words: np.ndarray

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.ndim != 1 or words.size != -(-self.bit_length // WORD_BITS):
            raise ValueError(f"{words.size} words cannot hold exactly {self.bit_length} bits")
        tail = self.bit_length % WORD_BITS
        if tail and int(words[-1]) >> tail:
            raise ValueError("bits beyond bit_length must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits) -> "BitFeatureVector":
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        return cls(len(bits), pack_bits(bits[None, :])[0])

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words[None, :], self.bit_length)[0]

    def __len__(self):
        return self.bit_length

    def __eq__(self, other):
        return (isinstance(other, BitFeatureVector) and self.bit_length == other.bit_length
                and np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.bit_length, self.words.tobytes()))

    def __repr__(self):
        return f"BitFeatureVector({''.join(map(str, self.to_bits()))})"

    def concat(self, other: "BitFeatureVector") -> "BitFeatureVector":
        return BitFeatureVector.from_bits(np.concatenate([self.to_bits(), other.to_bits()]))


@dataclass(frozen=True)
class RealFeatureVector:
    values: np.ndarray
    descriptor: str = ""

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class CelledProjectionConfig:
    k_horizontal: int = 4
    k_vertical: int = 4

    def __post_init__(self):
        if self.k_horizontal < 0 or self.k_vertical < 0:
            raise BadCellCount("cell counts must be non-negative")
        if self.k_horizontal + self.k_vertical < 1:
            raise BadCellCount("at least one horizontal or vertical cell is required")

    def bit_length(self, rows: int, cols: int) -> int:
        return rows * self.k_horizontal + cols * self.k_vertical


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack an ``(N, L)`` 0/1 array into ``(N, ceil(L/64))`` little-endian uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, length = bits.shape
    n_words = -(-length // WORD_BITS)
    padded = np.zeros((n, n_words * WORD_BITS), dtype=np.uint8)
    padded[:, :length] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64).reshape(n, n_words)


def unpack_bits(words: np.ndarray, bit_length: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :bit_length]


# --- celled projection -------------------------------------------------------

def _check_cells(size: int, k: int, axis: str) -> int:
    if k < 1 or size % k:
        raise BadCellCount(f"cell count {k} must be >= 1 and divide the {axis} count {size}")
    return size // k


def celled_projection_h(img, k: int) -> BitFeatureVector:
    """Horizontal celled projection of an ``m x n`` image into ``k`` column cells.

    Bit ``r*m + i`` (0-based) is set iff row ``i`` has ink inside cell ``r``.
    Each row is scanned once; after a hit the scan jumps to the next cell
    because the rest of the current cell cannot change the bit.
    """
    px = as_pixels(img)
    m, n = px.shape
    q = _check_cells(n, k, "column")
    bits = bytearray(m * k)
    for i, row in enumerate(px.tolist()):
        j = 0
        while j < n:
            if row[j]:
                cell = j // q
                bits[i + m * cell] = 1
                j = (cell + 1) * q
            else:
                j += 1
    return BitFeatureVector.from_bits(np.frombuffer(bytes(bits), dtype=np.uint8))


def celled_projection_v(img, k: int) -> BitFeatureVector:
    """Vertical celled projection: ``k`` row cells, one bit per column per cell."""
    px = as_pixels(img)
    _check_cells(px.shape[0], k, "row")
    return celled_projection_h(px.T, k)


def celled_projection_naive(img, k: int, orientation: str = "h") -> BitFeatureVector:
    """Reference evaluation: OR over every pixel of every cell."""
    px = as_pixels(img)
    if orientation == "v":
        px = px.T
    elif orientation != "h":
        raise ValueError("orientation must be 'h' or 'v'")
    m, n = px.shape
    q = _check_cells(n, k, "column" if orientation == "h" else "row")
    # cells[i, r, :] are the q pixels of row i inside cell r
    cells = px.reshape(m, k, q)
    hits = np.bitwise_or.reduce(cells, axis=2)
    return BitFeatureVector.from_bits(hits.T.ravel())


def celled_projection(img, cfg: CelledProjectionConfig) -> BitFeatureVector:
    """Horizontal bits followed by vertical bits."""
    px = as_pixels(img)
    parts = []
    if cfg.k_horizontal:
        parts.append(celled_projection_h(px, cfg.k_horizontal).to_bits())
    if cfg.k_vertical:
        parts.append(celled_projection_v(px, cfg.k_vertical).to_bits())
    return BitFeatureVector.from_bits(np.concatenate(parts))


# --- real-valued extractors --------------------------------------------------

def crossings(img) -> np.ndarray:
    """Background-to-foreground transitions per row (left to right), then per column.

    The border outside the image counts as background, so each entry equals
    the number of strokes the scan line crosses.
    """
    px = as_pixels(img).astype(np.int8)
    padded = np.pad(px, ((1, 0), (1, 0)))
    rows = ((padded[1:, 1:] == 1) & (padded[1:, :-1] == 0)).sum(axis=1)
    cols = ((padded[1:, 1:] == 1) & (padded[:-1, 1:] == 0)).sum(axis=0)
    return np.concatenate([rows, cols]).astype(np.float64)


def fourier_low(img) -> np.ndarray:
    """Magnitudes of the 8x8 lowest-frequency DFT window centred on DC.

    Frequencies ``u, v`` run over -4..3 (mod the image size), row-major with
    ``(-4, -4)`` first, so DC sits at index 36.
    """
    px = as_pixels(img)
    m, n = px.shape
    if m < 8 or n < 8:
        raise ImageTooSmall(f"Fourier window needs at least 8x8 pixels, image is {m}x{n}")
    spectrum = np.fft.fft2(px.astype(np.float64))
    u = np.arange(-4, 4) % m
    v = np.arange(-4, 4) % n
    return np.abs(spectrum[np.ix_(u, v)]).ravel()


def _centred_coords(px: np.ndarray):
    total = float(px.sum())
    if total == 0:
        raise EmptyImage("moments are undefined for an image without foreground")
    ys, xs = np.nonzero(px)
    # measured from the bounding-box corner so translated copies agree bit for bit
    xs = (xs - xs.min()).astype(np.float64)
    ys = (ys - ys.min()).astype(np.float64)
    return total, xs - xs.mean(), ys - ys.mean()


def central_moment(img, p: int, q: int) -> float:
    _, dx, dy = _centred_coords(as_pixels(img))
    return float(np.sum(dx**p * dy**q))


def central_moments(img) -> np.ndarray:
    """The fifteen central moments up to fourth order (x = column, y = row).

    Order: mu00, mu10, mu01, mu11, mu20, mu02, mu22, mu30, mu03, mu21, mu12,
    mu31, mu13, mu40, mu04.
    """
    _, dx, dy = _centred_coords(as_pixels(img))
    return np.array([np.sum(dx**p * dy**q) for p, q in CENTRAL_MOMENT_ORDERS])


def hu_moments(img) -> np.ndarray:
    """Hu's seven rotation invariants of the scale-normalized central moments."""
    total, dx, dy = _centred_coords(as_pixels(img))

    def eta(p, q):
        return np.sum(dx**p * dy**q) / total ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a, b = n30 + n12, n21 + n03
    c, d = n30 - 3 * n12, 3 * n21 - n03
    return np.array([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11**2,
        c**2 + d**2,
        a**2 + b**2,
        c * a * (a**2 - 3 * b**2) + d * b * (3 * a**2 - b**2),
        (n20 - n02) * (a**2 - b**2) + 4 * n11 * a * b,
        d * a * (a**2 - 3 * b**2) - c * b * (3 * a**2 - b**2),
    ])


def projection_histograms(img) -> np.ndarray:
    """Foreground count per row followed by foreground count per column."""
    px = as_pixels(img)
    return np.concatenate([px.sum(axis=1), px.sum(axis=0)]).astype(np.float64)


def zoning(img, grid_rows: int = 4, grid_cols: int = 4) -> np.ndarray:
    """Foreground density of each zone of a regular grid, row-major."""
    px = as_pixels(img)
    m, n = px.shape
    if grid_rows < 1 or grid_cols < 1 or m % grid_rows or n % grid_cols:
        raise BadGrid(f"a {grid_rows}x{grid_cols} grid does not tile a {m}x{n} image")
    zr, zc = m // grid_rows, n // grid_cols
    counts = px.reshape(grid_rows, zr, grid_cols, zc).sum(axis=(1, 3))
    return (counts / (zr * zc)).ravel().astype(np.float64)


def hamming_distance(a: BitFeatureVector, b: BitFeatureVector) -> int:
    """Number of differing bits, one XOR and popcount per 64-bit word."""
    if a.bit_length != b.bit_length:
        raise LengthMismatch(f"bit lengths differ: {a.bit_length} vs {b.bit_length}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


# --- named extraction ----------------------------------------------------------

FEATURE_NAMES = ("cp", "crossings", "fourier", "moments", "hu", "hist", "zoning")


def parse_params(text: str | None) -> dict[str, int]:
    """Parse ``"kh=4,kv=4"`` into ``{"kh": 4, "kv": 4}``; ``""``/``"-"`` is empty."""
    params = {}
    if not text or text.strip() in ("", "-"):
        return params
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"bad parameter {item!r}; expected key=value")
        try:
            params[key] = int(value)
        except ValueError:
            raise ConfigError(f"parameter {key!r} must be an integer, got {value!r}") from None
    return params


def format_params(params: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in params.items()) or "-"


_ALLOWED = {
    "cp": {"kh", "kv"},
    "crossings": set(),
    "fourier": set(),
    "moments": set(),
    "hu": set(),
    "hist": set(),
    "zoning": {"rows", "cols"},
}


def canonical_params(name: str, params: dict | None = None) -> dict[str, int]:
    if name not in _ALLOWED:
        raise ConfigError(f"unknown feature {name!r}; choose from {', '.join(FEATURE_NAMES)}")
    params = dict(params or {})
    unknown = set(params) - _ALLOWED[name]
    if unknown:
        raise ConfigError(f"feature {name!r} does not accept {', '.join(sorted(unknown))}")
    if name == "cp":
        return {"kh": params.get("kh", 4), "kv": params.get("kv", 4)}
    if name == "zoning":
        return {"rows": params.get("rows", 4), "cols": params.get("cols", 4)}
    return {}


def is_binary_feature(name: str) -> bool:
    return name == "cp"


def extract(img, name: str, params: dict | None = None):
    """Compute feature ``name``; returns a BitFeatureVector for ``cp``, else a RealFeatureVector."""
    params = canonical_params(name, params)
    if name == "cp":
        return celled_projection(img, CelledProjectionConfig(params["kh"], params["kv"]))
    if name == "zoning":
        values = zoning(img, params["rows"], params["cols"])
    else:
        fn = {
            "crossings": crossings,
            "fourier": fourier_low,
            "moments": central_moments,
            "hu": hu_moments,
            "hist": projection_histograms,
        }[name]
        values = fn(img)
    return RealFeatureVector(values, f"{name} {format_params(params)}")


def extract_matrix(images: Sequence, name: str, params: dict | None = None) -> np.ndarray:
    """Stack features of many images.

    Returns packed ``uint64`` words of shape ``(N, W)`` for ``cp`` and a float
    matrix ``(N, L)`` otherwise.
    """
    vecs = [extract(img, name, params) for img in images]
    if is_binary_feature(name):
        if not vecs:
            return np.zeros((0, 0), dtype=np.uint64)
        return np.stack([v.words for v in vecs])
    if not vecs:
        return np.zeros((0, 0), dtype=np.float64)
    return np.stack([v.values for v in vecs])


# --- text serialization ----------------------------------------------------------

def _format_value(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def format_vector(vec, name: str, params: dict | None = None) -> str:
    """Two lines: ``<name> <params> <length>`` then the values."""
    if isinstance(vec, BitFeatureVector):
        body = " ".join(str(int(b)) for b in vec.to_bits())
    else:
        values = vec.values if isinstance(vec, RealFeatureVector) else np.asarray(vec)
        body = " ".join(_format_value(v) for v in values)
    return f"{name} {format_params(params or {})} {len(vec)}\n{body}\n"


def write_vectors(path, records: Iterable[tuple[str, dict, object]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, params, vec in records:
            fh.write(format_vector(vec, name, params))


def parse_vectors(text: str) -> list[tuple[str, dict, object]]:
    """Inverse of :func:`format_vector`, for one or more concatenated records."""
    tokens = text.split()
    out = []
    pos = 0
    while pos < len(tokens):
        if pos + 3 > len(tokens):
            raise ParseError(f"truncated vector header at token {pos}")
        name, ptext, length = tokens[pos : pos + 3]
        try:
            length = int(length)
        except ValueError:
            raise ParseError(f"bad vector length {length!r}") from None
        values = tokens[pos + 3 : pos + 3 + length]
        if len(values) != length:
            raise ParseError(f"vector {name!r} declares {length} values, found {len(values)}")
        params = parse_params(ptext)
        if is_binary_feature(name):
            if any(v not in ("0", "1") for v in values):
                raise ParseError(f"bit vector {name!r} holds non-bit values")
            vec = BitFeatureVector.from_bits([int(v) for v in values])
        else:
            vec = RealFeatureVector(np.array([float(v) for v in values]), f"{name} {ptext}")
        out.append((name, params, vec))
        pos += 3 + length
    return out


def read_vectors(path) -> list[tuple[str, dict, object]]:
    with open(path, encoding="utf-8") as fh:
        return parse_vectors(fh.read())

