"""PNG-backed paired-image pipeline.

Images travel as float arrays shaped [3,H,W] with values in [0,1]. Decoding
accepts 8-bit RGB or RGBA PNGs only (alpha is dropped); anything else fails
with the offending file named. Dataset roots hold ``input/*.png`` with a
same-named file under ``target/`` for every input.
"""

import io
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, DecodeError, ParameterError, ShapeError


@dataclass
class ImagePair:
    """One degraded/reference pair; both arrays share [3,H,W]."""
    input: np.ndarray
    target: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.input.shape != self.target.shape:
            raise ShapeError(
                f"pair {self.name or '<unnamed>'}: input {self.input.shape} "
                f"vs target {self.target.shape}")
        if self.input.ndim != 3 or self.input.shape[0] != 3:
            raise ShapeError(f"pair {self.name or '<unnamed>'}: expected [3,H,W], "
                             f"got {self.input.shape}")


@dataclass
class DatasetSpec:
    root: str
    patch: int = 64
    flips: bool = True
    seed: int = 0


def decode_png(data, context=""):
    """Bytes -> float32 [3,H,W] in [0,1]. RGB or RGBA, 8 bits per channel."""
    where = f" ({context})" if context else ""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode PNG{where}: {exc}") from None
    if img.format != "PNG":
        raise DecodeError(f"not a PNG file{where}: format={img.format}")
    if img.mode == "RGBA":
        img = img.convert("RGB")   # alpha dropped
    if img.mode != "RGB":
        raise DecodeError(f"unsupported PNG mode {img.mode}{where}; need 8-bit RGB or RGBA")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def encode_png(arr):
    """Float [3,H,W] -> PNG bytes; values clamped then quantised by
    floor(v*255 + 0.5) so 0.5 ulp ties round up."""
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected [3,H,W] array, got {arr.shape}")
    clamped = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    bytes_hwc = np.floor(clamped * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    out = io.BytesIO()
    Image.fromarray(bytes_hwc, mode="RGB").save(out, format="PNG")
    return out.getvalue()


def load_image(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from None
    return decode_png(data, context=path)


def area_down2(arr):
    """Half-resolution area average of a [C,H,W] array; H and W must be even."""
    c, h, w = arr.shape
    if h % 2 != 0 or w % 2 != 0:
        raise ShapeError(f"area_down2 needs even sides, got {h}x{w}")
    return arr.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4), dtype=arr.dtype)


def gt_pyramid(target):
    """[full, half, quarter] area-averaged targets; sides must divide by 4."""
    _, h, w = target.shape
    if h % 4 != 0 or w % 4 != 0:
        raise ShapeError(f"pyramid needs sides divisible by 4, got {h}x{w}")
    half = area_down2(target)
    return [target, half, area_down2(half)]


def sample_patch(pair, patch, rng):
    """Crop the same random patch x patch window from both images."""
    _, h, w = pair.input.shape
    if patch < 1 or patch > h or patch > w:
        raise ParameterError(f"patch {patch} does not fit {h}x{w} image {pair.name}")
    i = int(rng.integers(0, h - patch + 1))
    j = int(rng.integers(0, w - patch + 1))
    return ImagePair(
        input=pair.input[:, i:i + patch, j:j + patch].copy(),
        target=pair.target[:, i:i + patch, j:j + patch].copy(),
        name=pair.name,
    )


def augment_flip(pair, rng):
    """Independent horizontal/vertical flips, each with probability 0.5,
    applied identically to input and target."""
    inp, tgt = pair.input, pair.target
    if rng.random() < 0.5:
        inp, tgt = inp[:, :, ::-1], tgt[:, :, ::-1]
    if rng.random() < 0.5:
        inp, tgt = inp[:, ::-1, :], tgt[:, ::-1, :]
    return ImagePair(np.ascontiguousarray(inp), np.ascontiguousarray(tgt), pair.name)


def load_pairs(spec):
    """Enumerate and decode every pair under spec.root, failing fast with a
    list of all offending files rather than skipping any."""
    input_dir = os.path.join(spec.root, "input")
    target_dir = os.path.join(spec.root, "target")
    if not os.path.isdir(input_dir) or not os.path.isdir(target_dir):
        raise DatasetError(f"dataset root {spec.root} needs input/ and target/ directories")
    names = sorted(n for n in os.listdir(input_dir) if n.lower().endswith(".png"))
    if not names:
        raise DatasetError(f"no PNG files under {input_dir}")
    problems = []
    pairs = []
    for name in names:
        in_path = os.path.join(input_dir, name)
        tgt_path = os.path.join(target_dir, name)
        if not os.path.isfile(tgt_path):
            problems.append(f"{tgt_path}: missing target")
            continue
        try:
            pairs.append(ImagePair(load_image(in_path), load_image(tgt_path), name=name))
        except (DecodeError, ShapeError) as exc:
            problems.append(str(exc))
    if problems:
        raise DatasetError("dataset errors:\n  " + "\n  ".join(problems), files=problems)
    return pairs


def iter_batches(pairs, patch, flips, batch, epoch_seed):
    """Yield lists of (input_patch, [gt0, gt1, gt2], name). Order is a
    seeded shuffle of the pair list; a trailing partial batch is dropped."""
    if batch < 1:
        raise ParameterError(f"batch must be >= 1, got {batch}")
    rng = np.random.default_rng(epoch_seed)
    order = rng.permutation(len(pairs))
    items = []
    for idx in order:
        pair = sample_patch(pairs[int(idx)], patch, rng)
        if flips:
            pair = augment_flip(pair, rng)
        items.append((pair.input, gt_pyramid(pair.target), pair.name))
        if len(items) == batch:
            yield items
            items = []
    # leftover items are dropped so every step sees a full batch


def batch_iter(spec, batch, epoch_seed):
    """Load pairs fresh and stream one epoch of batches; two calls with the
    same epoch_seed produce identical batch compositions."""
    yield from iter_batches(load_pairs(spec), spec.patch, spec.flips, batch, epoch_seed)
