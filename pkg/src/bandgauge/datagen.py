"""Synthetic labeled banding data.

Banding is induced the dependency-free way: bit-depth reduction followed by
promotion back to 8 bits (mid-rise reconstruction levels), applied to smooth
synthetic bases.  A pixel ground-truth mask marks the smooth regions where
quantization plateaus become visible; a patch is labeled banded when the
masked fraction of its area exceeds 30% (strictly).

Image-to-split assignment happens at the image level so no patch of one
image can leak across splits.  Every image derives its own RNG stream from
(root seed, image index).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .classifier import PatchSample
from .freq import PwsConfig, pws_lfm, sobel_hfm
from .imgcore import (
    Label,
    PatchGrid,
    PatchLabel,
    PlanarImage,
    load_image,
    save_image,
    tile,
    to_luma,
)

KINDS = ("linear_ramp", "radial_ramp", "sky_gradient", "noise_texture", "mixed_scene")
_SMOOTH_KINDS = ("linear_ramp", "radial_ramp", "sky_gradient")

# Depth levels used for generated corpora; the deepest still-banded depth is
# configurable through banded_max_depth.
DEFAULT_DEPTHS = (2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    size: int = 256
    bit_depth: int = 4
    noise_sigma: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not 1 <= self.bit_depth <= 8:
            raise ValueError("bit depth must lie in 1..8")
        if self.size < 16:
            raise ValueError("image size too small")


@dataclass(frozen=True)
class GeneratedSample:
    image: PlanarImage
    banded_mask: np.ndarray
    spec: SynthSpec

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.banded_mask, dtype=bool))
        if m.shape != (self.image.height, self.image.width):
            raise ValueError("mask dimensions must match the image")
        m.flags.writeable = False
        object.__setattr__(self, "banded_mask", m)


def gen_base(spec: SynthSpec) -> PlanarImage:
    """Clean 8-bit grayscale base image for a spec."""
    s = spec.size
    rng = np.random.default_rng([spec.seed, 0x5EED])
    if spec.kind == "linear_ramp":
        field = _linear_ramp(s, rng)
    elif spec.kind == "radial_ramp":
        field = _radial_ramp(s)
    elif spec.kind == "sky_gradient":
        field = _sky_gradient(s, rng)
    elif spec.kind == "noise_texture":
        field = _noise_texture(s, rng, spec.noise_sigma)
    else:  # mixed_scene: smooth upper half, noise lower half
        top = _linear_ramp(s, rng)[: s // 2]
        bottom = _noise_texture(s, rng, spec.noise_sigma)[s - s // 2 :]
        field = np.vstack([top, bottom])
    arr = np.clip(np.rint(field), 0, 255).astype(np.uint8)
    return PlanarImage.from_array(arr)


def _linear_ramp(s: int, rng) -> np.ndarray:
    # Row-constant, monotone 0..255.  A seeded phase wobble keeps the slope
    # between 0.75 and 1.25 levels per row so quantization contours never
    # land systematically on tile boundaries.
    t = np.linspace(0.0, 1.0, s)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wobble = np.sin(2.0 * np.pi * t + phase) - np.sin(phase)
    col = 255.0 * (t + 0.04 * wobble)
    return np.repeat(col[:, None], s, axis=1)


def _radial_ramp(s: int) -> np.ndarray:
    c = (s - 1) / 2.0
    yy, xx = np.indices((s, s))
    r = np.hypot(yy - c, xx - c)
    # Normalize over the realized radii so the center pixel is exactly 255
    # even when the geometric center falls between pixels.
    return 255.0 * (r.max() - r) / (r.max() - r.min())


def _sky_gradient(s: int, rng) -> np.ndarray:
    # A slow ramp plus two image-scale cosine swells; slope stays around one
    # gray level per pixel, so the base itself shows no banding.
    yy, xx = np.indices((s, s), dtype=np.float64)
    u, v = yy / s, xx / s
    field = 0.9 * u + 0.35 * v
    for _ in range(2):
        fu, fv = rng.uniform(0.3, 1.0, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.08, 0.2)
        field = field + amp * np.cos(2 * np.pi * (fu * u + fv * v) + phase)
    field -= field.min()
    return field * (255.0 / field.max())


def _noise_texture(s: int, rng, sigma: float) -> np.ndarray:
    return 128.0 + rng.normal(0.0, max(sigma, 1.0), size=(s, s))


def quantize_bitdepth(img: PlanarImage, d: int) -> PlanarImage:
    """Reduce to d bits then promote back with mid-rise reconstruction."""
    if img.is_float:
        raise ValueError("quantization expects an 8-bit image")
    if not 1 <= d <= 8:
        raise ValueError("bit depth must lie in 1..8")
    if d == 8:
        return img
    step = 1 << (8 - d)
    half = 1 << (7 - d)
    planes = tuple(
        ((p.astype(np.int32) // step) * step + half).astype(np.uint8)
        for p in img.planes
    )
    return PlanarImage(img.width, img.height, img.channels, planes)


def quantize_ycbcr(img: PlanarImage, d: int, chroma: bool = False) -> PlanarImage:
    """Quantize an RGB image in YCbCr 4:2:0 space: luma always, chroma on
    request. Grayscale content should use quantize_bitdepth directly."""
    from .imgcore import rgb_to_ycbcr420, ycbcr420_to_rgb

    y, cb, cr = rgb_to_ycbcr420(img)
    y = quantize_bitdepth(y, d)
    if chroma:
        cb = quantize_bitdepth(cb, d)
        cr = quantize_bitdepth(cr, d)
    return ycbcr420_to_rgb(y, cb, cr)


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation of a boolean mask by `radius` pixels (separable)."""
    h, w = mask.shape
    rows = np.zeros_like(mask)
    padded = np.pad(mask, ((radius, radius), (0, 0)), mode="constant")
    for dy in range(2 * radius + 1):
        rows |= padded[dy : dy + h]
    out = np.zeros_like(mask)
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="constant")
    for dx in range(2 * radius + 1):
        out |= padded[:, dx : dx + w]
    return out


def make_sample(
    spec: SynthSpec, banded_max_depth: int = 6, contour_radius: int = 16
) -> GeneratedSample:
    """Quantized image plus its pixel-level ground truth.

    A pixel counts as banded when it is smooth in the base, the depth is at
    most banded_max_depth, and a quantization plateau boundary passes within
    contour_radius: flat patches deep inside one plateau carry no visible
    contour and stay non-banded.
    """
    base = gen_base(spec)
    image = quantize_bitdepth(base, spec.bit_depth)
    s = spec.size
    mask = np.zeros((s, s), dtype=bool)
    if spec.bit_depth <= banded_max_depth and spec.kind != "noise_texture":
        q = image.planes[0]
        contour = np.zeros((s, s), dtype=bool)
        contour[:, :-1] |= q[:, 1:] != q[:, :-1]
        contour[:-1, :] |= q[1:, :] != q[:-1, :]
        mask = _dilate(contour, contour_radius)
        if spec.kind == "mixed_scene":
            mask[s // 2 :, :] = False
    return GeneratedSample(image, mask, spec)


def label_patches(sample: GeneratedSample, grid: PatchGrid):
    """Banded iff strictly more than 30% of the patch area is masked."""
    n = grid.patch_size
    area = float(n * n)
    labels = []
    for k in range(len(grid)):
        frac = float(grid.extract(sample.banded_mask, k).sum()) / area
        val = Label.BANDED if frac > 0.30 else Label.NON_BANDED
        labels.append(PatchLabel(val, 1.0))
    return tuple(labels)


@dataclass(frozen=True)
class ManifestRow:
    image_path: str
    patch_x: int
    patch_y: int
    patch_size: int
    label: Label
    split: str


@dataclass(frozen=True)
class DatasetBundle:
    train: tuple
    val: tuple
    test: tuple
    manifest: tuple  # ManifestRow per patch

    def split(self, name: str):
        return getattr(self, name)


def make_dataset(
    n_images: int,
    seed: int,
    split=(0.8, 0.1, 0.1),
    patch_size: int = 64,
    image_size: int = 256,
    depths=DEFAULT_DEPTHS,
    out_dir=None,
    pws_cfg: PwsConfig | None = None,
) -> DatasetBundle:
    """Generate images, label patches, and precompute frequency maps.

    Whole images are assigned to train/val/test; when out_dir is given the
    images are written as PNG and a manifest.csv alongside them.
    """
    if n_images < 10:
        raise ValueError("need at least 10 images for a meaningful split")
    if len(split) != 3 or abs(sum(split) - 1.0) > 1e-9 or min(split) < 0:
        raise ValueError("split must be three non-negative fractions summing to 1")
    pws_cfg = pws_cfg or PwsConfig(max_iters=120, tol=1e-5)

    n_train = int(round(split[0] * n_images))
    n_val = int(round(split[1] * n_images))
    split_names = ["train"] * n_train + ["val"] * n_val
    split_names += ["test"] * (n_images - len(split_names))
    order = np.random.default_rng([seed, 0xA55]).permutation(n_images)
    assigned = [""] * n_images
    for pos, img_idx in enumerate(order):
        assigned[img_idx] = split_names[pos]

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    buckets = {"train": [], "val": [], "test": []}
    manifest = []
    for i in range(n_images):
        kind = KINDS[i % len(KINDS)]
        depth = depths[i % len(depths)]
        spec = SynthSpec(
            kind, size=image_size, bit_depth=depth, seed=_image_seed(seed, i)
        )
        sample = make_sample(spec)
        name = f"img_{i:04d}_{kind}_d{depth}.png"
        if out_dir is not None:
            save_image(sample.image, os.path.join(out_dir, name))
        grid = tile(sample.image, patch_size)
        labels = label_patches(sample, grid)
        luma = to_luma(sample.image).planes[0].astype(np.float64)
        for k, (x, y) in enumerate(grid.patches):
            patch = grid.extract(luma, k)
            ps = PatchSample(sobel_hfm(patch), pws_lfm(patch, pws_cfg), labels[k])
            buckets[assigned[i]].append(ps)
            manifest.append(
                ManifestRow(name, x, y, patch_size, labels[k].value, assigned[i])
            )
    if out_dir is not None:
        write_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return DatasetBundle(
        tuple(buckets["train"]),
        tuple(buckets["val"]),
        tuple(buckets["test"]),
        tuple(manifest),
    )


def _image_seed(root_seed: int, index: int) -> int:
    # Stable per-image stream id; SeedSequence keeps streams independent.
    return int(np.random.SeedSequence([root_seed, index]).generate_state(1)[0])


def write_manifest(rows, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_path", "patch_x", "patch_y", "N", "label", "split"])
        for r in rows:
            writer.writerow(
                [r.image_path, r.patch_x, r.patch_y, r.patch_size, r.label.value, r.split]
            )


class ManifestError(ValueError):
    """Malformed manifest; the message carries the offending line number."""


def read_manifest(path):
    rows = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_path", "patch_x", "patch_y", "N", "label", "split"]:
            raise ManifestError(f"{path}:1: unexpected manifest header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise ManifestError(f"{path}:{line_no}: expected 6 fields, got {len(row)}")
            try:
                x, y, n = int(row[1]), int(row[2]), int(row[3])
            except ValueError as exc:
                raise ManifestError(f"{path}:{line_no}: non-integer coordinate") from exc
            try:
                label = Label(row[4])
            except ValueError as exc:
                raise ManifestError(f"{path}:{line_no}: unknown label {row[4]!r}") from exc
            if row[5] not in ("train", "val", "test"):
                raise ManifestError(f"{path}:{line_no}: unknown split {row[5]!r}")
            rows.append(ManifestRow(row[0], x, y, n, label, row[5]))
    return rows


def load_dataset(manifest_path, pws_cfg: PwsConfig | None = None):
    """Rebuild split patch-sample lists from a manifest and its images."""
    pws_cfg = pws_cfg or PwsConfig(max_iters=120, tol=1e-5)
    rows = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    buckets = {"train": [], "val": [], "test": []}
    lumas = {}
    for r in rows:
        if r.image_path not in lumas:
            img = load_image(os.path.join(base, r.image_path))
            lumas[r.image_path] = to_luma(img).planes[0].astype(np.float64)
        luma = lumas[r.image_path]
        n = r.patch_size
        patch = luma[r.patch_y : r.patch_y + n, r.patch_x : r.patch_x + n]
        if patch.shape != (n, n):
            raise ManifestError(
                f"{manifest_path}: patch at ({r.patch_x}, {r.patch_y}) leaves {r.image_path}"
            )
        ps = PatchSample(
            sobel_hfm(patch), pws_lfm(patch, pws_cfg), PatchLabel(r.label, 1.0)
        )
        buckets[r.split].append(ps)
    return DatasetBundle(
        tuple(buckets["train"]), tuple(buckets["val"]), tuple(buckets["test"]), tuple(rows)
    )
