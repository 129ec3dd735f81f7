"""Dataset ingestion: folder layout, YOLO labels, image loading, augmentation, splitting.

Expected layout::

    <root>/Healthy/*.jpg
    <root>/Diseased/*.jpg

An image may have a sibling ``.txt`` file of YOLO label lines
(``class cx cy w h``, coordinates normalised to [0, 1]).
"""

import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DataError, ImageLoadError, ParameterError, ParseError
from .model import CLASS_NAMES, INPUT_SIZE

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.80, 0.15, 0.05)


@dataclass(frozen=True)
class Box:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class Sample:
    path: str
    label: str
    boxes: tuple = ()
    split: str = "unassigned"


@dataclass
class DatasetManifest:
    samples: list
    seed: int = 0
    ratios: tuple = DEFAULT_RATIOS

    def split(self, name):
        return [s for s in self.samples if s.split == name]

    def counts(self, class_names=CLASS_NAMES):
        """``{label: {split: count}}``"""
        out = {c: {s: 0 for s in SPLITS} for c in class_names}
        for s in self.samples:
            out.setdefault(s.label, {k: 0 for k in SPLITS})[s.split] += 1
        return out

    def to_text(self):
        return "".join(f"{s.path}\t{s.label}\t{s.split}\n" for s in self.samples)

    def write(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path, load_boxes=False):
        samples = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected path<TAB>label<TAB>split, got {line!r}", lineno)
            img, label, split = parts
            if split not in SPLITS + ("unassigned",):
                raise ParseError(f"unknown split {split!r}", lineno)
            boxes = read_yolo_file(_label_path(img)) if load_boxes else ()
            samples.append(Sample(img, label, boxes, split))
        return cls(samples)


# -- YOLO labels ------------------------------------------------------------


def parse_yolo_label(line, line_number=None):
    """Parse ``"class cx cy w h"`` into a :class:`Box`."""
    fields = line.split()
    if len(fields) != 5:
        raise ParseError(f"expected 5 fields, got {len(fields)}", line_number)
    try:
        class_id = int(fields[0])
        coords = [float(f) for f in fields[1:]]
    except ValueError:
        raise ParseError(f"non-numeric field in {line.strip()!r}", line_number) from None
    if class_id < 0:
        raise ParseError(f"negative class id {class_id}", line_number)
    for name, v in zip(("cx", "cy", "w", "h"), coords):
        if not 0.0 <= v <= 1.0:
            raise ParseError(f"{name}={v} outside [0, 1]", line_number)
    return Box(class_id, *coords)


def format_yolo_label(box):
    return f"{box.class_id} {box.cx:g} {box.cy:g} {box.w:g} {box.h:g}"


def read_yolo_file(path):
    path = Path(path)
    if not path.exists():
        return ()
    lines = path.read_text().splitlines()
    return tuple(parse_yolo_label(line, i) for i, line in enumerate(lines, 1) if line.strip())


def union_box(boxes):
    """Pixel-free union of boxes as normalised ``(x0, y0, x1, y1)``, clipped to [0, 1]."""
    x0 = min(b.cx - b.w / 2 for b in boxes)
    y0 = min(b.cy - b.h / 2 for b in boxes)
    x1 = max(b.cx + b.w / 2 for b in boxes)
    y1 = max(b.cy + b.h / 2 for b in boxes)
    return max(x0, 0.0), max(y0, 0.0), min(x1, 1.0), min(y1, 1.0)


def _label_path(image_path):
    return Path(image_path).with_suffix(".txt")


# -- images -----------------------------------------------------------------


def _to_tensor(img, size, crop=None):
    img = img.convert("RGB")
    if crop is not None:
        x0, y0, x1, y1 = crop
        w, h = img.size
        left, top = int(math.floor(x0 * w)), int(math.floor(y0 * h))
        right, bottom = max(int(math.ceil(x1 * w)), left + 1), max(int(math.ceil(y1 * h)), top + 1)
        img = img.crop((left, top, right, bottom))
    if img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def load_image(path, size=INPUT_SIZE, crop=None):
    """Decode an image file to a ``[size, size, 3]`` float32 tensor in [0, 1].

    ``crop`` is an optional normalised ``(x0, y0, x1, y1)`` region taken
    before the bilinear resize.
    """
    try:
        with Image.open(path) as img:
            return _to_tensor(img, size, crop)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageLoadError(path, exc) from exc


def decode_image(data, size=INPUT_SIZE, source="<bytes>"):
    """Like :func:`load_image` but from encoded bytes."""
    if not data:
        raise ImageLoadError(source, "empty image data")
    try:
        with Image.open(io.BytesIO(data)) as img:
            return _to_tensor(img, size)
    except (OSError, UnidentifiedImageError, ValueError, Image.DecompressionBombError) as exc:
        raise ImageLoadError(source, exc) from exc


def save_image(path, x):
    """Write a [H, W, 3] tensor in [0, 1] as an 8-bit image (format from suffix)."""
    arr = np.clip(np.rint(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path)


# -- augmentation -----------------------------------------------------------


@dataclass(frozen=True)
class AugmentSpec:
    """Random geometric augmentation.

    ``rescale`` is the factor the loader applies to 8-bit pixels; the
    geometric transforms never rescale values. ``zoom`` is a magnification
    range (1.1 enlarges content by 10%).
    """

    rescale: float = 1 / 255
    rotation_deg: float = 20.0
    shift_frac: float = 0.10
    zoom: tuple = (0.9, 1.1)
    hflip_prob: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "zoom", tuple(self.zoom))
        lo, hi = self.zoom
        if self.rotation_deg < 0 or self.shift_frac < 0 or not 0 < lo <= hi:
            raise ParameterError(f"invalid augmentation ranges: {self}")
        if not 0 <= self.hflip_prob <= 1:
            raise ParameterError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")

    @classmethod
    def identity(cls):
        return cls(rotation_deg=0.0, shift_frac=0.0, zoom=(1.0, 1.0), hflip_prob=0.0)


def apply_transform(x, flip=False, angle_deg=0.0, shift=(0.0, 0.0), zoom=1.0):
    """Flip, rotate (counter-clockwise), shift ``(dy, dx)`` pixels, then zoom about the centre.

    Bilinear resampling; pixels that come from outside the frame are 0.
    """
    if not flip and angle_deg == 0 and shift[0] == 0 and shift[1] == 0 and zoom == 1:
        return x.copy()
    if flip and angle_deg == 0 and shift[0] == 0 and shift[1] == 0 and zoom == 1:
        return x[:, ::-1].copy()
    h, w = x.shape[:2]
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    # forward map on (row, col) offsets from the centre: p' = Z (R F p + s)
    f = np.diag([1.0, -1.0 if flip else 1.0])
    t = math.radians(angle_deg)
    # counter-clockwise on screen with rows pointing down
    r = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    forward = zoom * r @ f
    inverse = np.linalg.inv(forward)
    # input = inverse @ (out - c - zoom*s) + c
    offset = centre - inverse @ (centre + zoom * np.asarray(shift, dtype=float))
    out = np.empty_like(x)
    for ch in range(x.shape[2]):
        out[..., ch] = ndimage.affine_transform(
            x[..., ch], inverse, offset=offset, order=1, mode="grid-constant", cval=0.0
        )
    return out


def draw_augmentation(spec, seed, index, epoch=0, size=INPUT_SIZE):
    """Transform parameters for one sample; a pure function of ``(seed, epoch, index)``."""
    rng = np.random.default_rng([seed, epoch, index])
    flip = bool(rng.random() < spec.hflip_prob)
    angle = float(rng.uniform(-spec.rotation_deg, spec.rotation_deg))
    shift = tuple(float(v) * size for v in rng.uniform(-spec.shift_frac, spec.shift_frac, 2))
    zoom = float(rng.uniform(*spec.zoom))
    return {"flip": flip, "angle_deg": angle, "shift": shift, "zoom": zoom}


def augment(x, spec, seed, index, epoch=0):
    """Randomly transform one image; identical calls give identical output."""
    return apply_transform(x, **draw_augmentation(spec, seed, index, epoch, size=x.shape[0]))


# -- splitting --------------------------------------------------------------


def split_counts(n, ratios=DEFAULT_RATIOS):
    """Floor each split's share of ``n``; the remainder goes to the first (train) split."""
    counts = [math.floor(Fraction(r).limit_denominator(10**6) * n) for r in ratios]
    counts[0] += n - sum(counts)
    return counts


def split_dataset(samples, ratios=DEFAULT_RATIOS, seed=0, class_names=CLASS_NAMES):
    """Stratified, seeded train/val/test assignment.

    Within each class the samples are shuffled with ``[seed, class_index]``
    and cut into contiguous runs of :func:`split_counts` sizes. The returned
    manifest keeps the input order.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1) > 1e-9 or min(ratios) < 0:
        raise ParameterError(f"ratios must be three non-negative shares summing to 1, got {ratios}")
    labels = list(class_names) + sorted({s.label for s in samples} - set(class_names))
    assigned = {}
    for k, label in enumerate(labels):
        members = [i for i, s in enumerate(samples) if s.label == label]
        if not members:
            raise DataError(f"empty class: {label}")
        order = np.random.default_rng([seed, k]).permutation(len(members))
        bounds = np.cumsum([0] + split_counts(len(members), ratios))
        for split, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
            for j in order[lo:hi]:
                assigned[members[j]] = split
    out = [replace(s, split=assigned[i]) for i, s in enumerate(samples)]
    return DatasetManifest(out, seed=seed, ratios=tuple(ratios))


def scan_dataset(root, class_names=CLASS_NAMES):
    """List samples under ``root/<class>/``, sorted by path, with any YOLO boxes."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    samples = []
    for label in class_names:
        folder = root / label
        files = sorted(p for p in folder.glob("*") if p.suffix.lower() in IMAGE_SUFFIXES) if folder.is_dir() else []
        if not files:
            raise DataError(f"empty class: {label} (no images in {folder})")
        for p in files:
            samples.append(Sample(str(p), label, read_yolo_file(_label_path(p))))
    return samples


# -- datasets consumed by training and evaluation --------------------------


class ArrayDataset:
    """In-memory images ``x`` of shape [N, H, W, 3] with integer labels ``y``."""

    def __init__(self, x, y, augment_spec=None, seed=0):
        if len(x) != len(y):
            raise DataError(f"{len(x)} images but {len(y)} labels")
        self.x = np.asarray(x, dtype=np.float32)
        self.labels = np.asarray(y, dtype=np.int64)
        self.augment_spec = augment_spec
        self.seed = seed

    def __len__(self):
        return len(self.labels)

    def batch(self, indices, epoch=0):
        x = self.x[indices]
        if self.augment_spec is not None:
            x = np.stack([augment(img, self.augment_spec, self.seed, int(i), epoch) for img, i in zip(x, indices)])
        return x, self.labels[indices]


@dataclass
class ImageDataset:
    """Samples decoded lazily from disk."""

    samples: list
    augment_spec: AugmentSpec = None
    seed: int = 0
    crop_boxes: bool = False
    class_names: tuple = CLASS_NAMES
    size: int = INPUT_SIZE
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        try:
            self.labels = np.array([self.class_names.index(s.label) for s in self.samples], dtype=np.int64)
        except ValueError as exc:
            raise DataError(f"unknown label: {exc}") from None

    def __len__(self):
        return len(self.samples)

    def load(self, i):
        s = self.samples[i]
        crop = union_box(s.boxes) if self.crop_boxes and s.boxes else None
        return load_image(s.path, self.size, crop)

    def batch(self, indices, epoch=0):
        images = []
        for i in indices:
            x = self.load(int(i))
            if self.augment_spec is not None:
                x = augment(x, self.augment_spec, self.seed, int(i), epoch)
            images.append(x)
        return np.stack(images), self.labels[np.asarray(indices)]
