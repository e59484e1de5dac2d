"""Grayscale image loading, dataset manifests, and the synthetic corpus generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CODE_ALPHABET = "0123456789abcdefghijklmnopqrstuvwxyz"
AXIS_LENGTHS = (4, 3, 3, 3)
SPLITS = ("train", "test")

_WHITESPACE = b" \t\n\r\x0b\x0c"

# Synthetic corpus design: near-uniform background, one strongly textured
# block per class.  Background noise stays within +-2 intensity levels so
# block variance separates region-of-interest blocks from background by
# more than an order of magnitude.
BACKGROUND_LEVEL = 120
BACKGROUND_NOISE = 2
ROI_LOW = 64
ROI_HIGH = 192
ROI_NOISE = 20


class ImageFormatError(ValueError):
    """Raised for rasters the loader cannot or will not read."""


class ManifestError(ValueError):
    """Raised for malformed manifest files."""


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster, row-major, at least 3x3 pixels."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width), dtype uint8

    def __post_init__(self) -> None:
        if self.width < 3 or self.height < 3:
            raise ValueError(
                f"image must be at least 3x3 pixels, got {self.width}x{self.height}"
            )
        if not isinstance(self.data, np.ndarray) or self.data.dtype != np.uint8:
            raise ValueError("pixel data must be a uint8 array")
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.data.shape} does not match "
                f"{self.height}x{self.width}"
            )


@dataclass(frozen=True)
class IrmaCode:
    """13-character hierarchical label: 4 axes of lengths 4, 3, 3, 3."""

    axes: tuple[str, str, str, str]

    def __post_init__(self) -> None:
        if len(self.axes) != len(AXIS_LENGTHS):
            raise ValueError("code must have exactly 4 axes")
        for axis, expected in zip(self.axes, AXIS_LENGTHS):
            if len(axis) != expected:
                raise ValueError(
                    f"axis {axis!r} must have length {expected}"
                )
            for ch in axis:
                if ch not in CODE_ALPHABET:
                    raise ValueError(f"invalid character {ch!r} in code axis {axis!r}")

    def __str__(self) -> str:
        return "-".join(self.axes)


def parse_irma_code(text: str) -> IrmaCode:
    """Parse 'TTTT-DDD-AAA-BBB'; the 13-character hyphen-free form is accepted too."""
    if "-" in text:
        parts = text.split("-")
        if len(parts) != 4:
            raise ValueError(f"expected 4 hyphen-separated segments, got {len(parts)}: {text!r}")
    else:
        if len(text) != 13:
            raise ValueError(f"code without hyphens must be 13 characters, got {len(text)}: {text!r}")
        parts = [text[0:4], text[4:7], text[7:10], text[10:13]]
    return IrmaCode((parts[0], parts[1], parts[2], parts[3]))


def format_irma_code(code: IrmaCode) -> str:
    return str(code)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    split: str
    label: str
    class_index: int  # dense, 1-based
    code: IrmaCode | None = None


@dataclass
class DatasetManifest:
    """Validated dataset listing with dense 1..C class indices."""

    entries: list[ManifestEntry]
    root: Path
    label_index: dict[str, int]

    @property
    def num_classes(self) -> int:
        return len(self.label_index)

    def label_of(self, class_index: int) -> str:
        for label, index in self.label_index.items():
            if index == class_index:
                return label
        raise KeyError(f"no class with index {class_index}")

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def train_entries(self) -> list[ManifestEntry]:
        return self.split_entries("train")

    def test_entries(self) -> list[ManifestEntry]:
        return self.split_entries("test")

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.root / path

    def class_counts(self, split: str) -> dict[int, int]:
        counts = {index: 0 for index in self.label_index.values()}
        for entry in self.split_entries(split):
            counts[entry.class_index] += 1
        return counts


def _pgm_header_tokens(buf: bytes, path: Path) -> tuple[list[bytes], int]:
    """Collect the 4 header tokens (magic, width, height, maxval), skipping # comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the header.
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(buf):
            raise ImageFormatError(f"truncated graymap header: {path}")
        ch = buf[i]
        if ch in _WHITESPACE:
            i += 1
            continue
        if ch == ord("#"):
            while i < len(buf) and buf[i] != ord("\n"):
                i += 1
            continue
        start = i
        while i < len(buf) and buf[i] not in _WHITESPACE and buf[i] != ord("#"):
            i += 1
        tokens.append(buf[start:i])
    return tokens, i


def load_image(path: str | Path) -> GrayImage:
    """Load a portable graymap (P2 ascii or P5 binary, maxval <= 255).

    Color rasters (P3/P6) are rejected outright rather than converted.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    buf = path.read_bytes()
    magic = bytes(buf[:2])
    if magic in (b"P3", b"P6"):
        raise ImageFormatError(f"color raster rejected, grayscale required: {path}")
    if magic not in (b"P2", b"P5"):
        raise ImageFormatError(f"not a portable graymap: {path}")

    tokens, header_end = _pgm_header_tokens(buf, path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"malformed graymap header: {path}") from None
    if width < 1 or height < 1 or maxval < 1:
        raise ImageFormatError(f"malformed graymap header: {path}")
    if maxval > 255:
        raise ImageFormatError(f"unsupported bit depth (maxval {maxval}): {path}")

    count = width * height
    if magic == b"P5":
        start = header_end + 1
        raster = buf[start : start + count]
        if len(raster) < count:
            raise ImageFormatError(f"truncated pixel data: {path}")
        pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()
    else:
        fields = buf[header_end:].split()
        if len(fields) < count:
            raise ImageFormatError(f"truncated pixel data: {path}")
        try:
            values = [int(f) for f in fields[:count]]
        except ValueError:
            raise ImageFormatError(f"malformed pixel value: {path}") from None
        if any(v < 0 or v > maxval for v in values):
            raise ImageFormatError(f"pixel value outside [0, {maxval}]: {path}")
        pixels = np.array(values, dtype=np.uint8).reshape(height, width)
    return GrayImage(width, height, pixels)


def save_image(image: GrayImage, path: str | Path, ascii_format: bool = False) -> None:
    """Write a portable graymap with maxval 255 (binary P5 unless ascii_format)."""
    path = Path(path)
    if ascii_format:
        lines = [f"P2\n{image.width} {image.height}\n255\n"]
        for row in image.data:
            lines.append(" ".join(str(int(v)) for v in row) + "\n")
        path.write_text("".join(lines))
    else:
        header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
        path.write_bytes(header + image.data.tobytes())


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a comma-separated manifest: path,split,class[,code]; '#' comments allowed."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    raw: list[tuple[str, str, str, IrmaCode | None]] = []
    seen_paths: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split(",")]
        if len(parts) not in (3, 4):
            raise ManifestError(f"line {lineno}: expected 3 or 4 fields, got {len(parts)}")
        entry_path, split, label = parts[0], parts[1], parts[2]
        if not entry_path or not label:
            raise ManifestError(f"line {lineno}: empty path or class label")
        if split not in SPLITS:
            raise ManifestError(f"line {lineno}: unknown split {split!r}")
        if entry_path in seen_paths:
            raise ManifestError(f"line {lineno}: duplicate path {entry_path!r}")
        seen_paths.add(entry_path)
        code = None
        if len(parts) == 4 and parts[3]:
            try:
                code = parse_irma_code(parts[3])
            except ValueError as exc:
                raise ManifestError(f"line {lineno}: {exc}") from None
        raw.append((entry_path, split, label, code))
    if not raw:
        raise ManifestError(f"manifest has no entries: {path}")

    label_index: dict[str, int] = {}
    for _, _, label, _ in raw:
        if label not in label_index:
            label_index[label] = len(label_index) + 1
    entries = [
        ManifestEntry(p, s, label, label_index[label], code)
        for p, s, label, code in raw
    ]
    manifest = DatasetManifest(entries, path.parent, label_index)
    for label, index in label_index.items():
        if not any(e.class_index == index and e.split == "train" for e in entries):
            raise ManifestError(f"class {label!r} has no train-split entries")
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = []
    for entry in manifest.entries:
        fields = [entry.path, entry.split, entry.label]
        if entry.code is not None:
            fields.append(str(entry.code))
        lines.append(",".join(fields))
    path.write_text("\n".join(lines) + "\n")


def roi_block_positions(class_index: int) -> tuple[int, ...]:
    """Designated textured block positions (0-based, row-major) for a synthetic class."""
    return (class_index - 1,)


def _base36(value: int, width: int) -> str:
    digits = ""
    v = value
    while v:
        v, rem = divmod(v, 36)
        digits = CODE_ALPHABET[rem] + digits
    digits = digits or "0"
    return digits[-width:].rjust(width, "0")


def synthetic_class_code(class_index: int) -> IrmaCode:
    c = class_index
    return IrmaCode((_base36(c, 4), _base36(2 * c + 1, 3), _base36(3 * c + 7, 3), _base36(5 * c + 11, 3)))


def generate_synthetic_corpus(
    seed: int,
    num_classes: int,
    per_class: int,
    image_size: int,
    grid_k: int,
    out_dir: str | Path,
    train_fraction: float = 0.8,
) -> DatasetManifest:
    """Write a deterministic synthetic corpus and its manifest under out_dir.

    Every class places a 2-pixel-period checkerboard texture (plus seeded
    noise in [-20, 20]) into its designated block; the rest of the image is
    a near-constant background.  The per-image sub-seed mixes the corpus
    seed with the global image index, so generation is reproducible and
    parallelizable per image.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if num_classes < 1 or per_class < 1:
        raise ValueError("need at least one class and one image per class")
    if num_classes > grid_k * grid_k:
        raise ValueError(
            f"{num_classes} classes exceed the {grid_k}x{grid_k} grid "
            f"({grid_k * grid_k} block positions)"
        )
    if image_size % grid_k != 0:
        raise ValueError(f"image size {image_size} not divisible by grid order {grid_k}")
    block = image_size // grid_k
    if block < 3:
        raise ValueError(f"{image_size}x{image_size} image gives degenerate {block}x{block} blocks")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_train = max(1, math.floor(per_class * train_fraction))

    entries: list[ManifestEntry] = []
    label_index: dict[str, int] = {}
    for c in range(1, num_classes + 1):
        label = f"c{c:02d}"
        label_index[label] = c
        code = synthetic_class_code(c)
        for j in range(per_class):
            image_index = (c - 1) * per_class + j
            rng = np.random.default_rng(np.random.SeedSequence((seed, image_index)))
            pixels = BACKGROUND_LEVEL + rng.integers(
                -BACKGROUND_NOISE, BACKGROUND_NOISE + 1, size=(image_size, image_size)
            )
            for pos in roi_block_positions(c):
                row, col = divmod(pos, grid_k)
                ys = slice(row * block, (row + 1) * block)
                xs = slice(col * block, (col + 1) * block)
                parity = (
                    np.add.outer(np.arange(row * block, (row + 1) * block),
                                 np.arange(col * block, (col + 1) * block))
                    % 2
                )
                texture = np.where(parity == 0, ROI_HIGH, ROI_LOW)
                noise = rng.integers(-ROI_NOISE, ROI_NOISE + 1, size=(block, block))
                pixels[ys, xs] = np.clip(texture + noise, 0, 255)
            name = f"img_c{c:02d}_{j:03d}.pgm"
            save_image(
                GrayImage(image_size, image_size, pixels.astype(np.uint8)),
                out_dir / name,
            )
            split = "train" if j < n_train else "test"
            entries.append(ManifestEntry(name, split, label, c, code))

    manifest = DatasetManifest(entries, out_dir, label_index)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
