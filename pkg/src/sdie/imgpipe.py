"""Turning a labelled reference image and a target image into a graph problem.

Every pixel becomes a vertex described by its 3x3 neighbourhood (replication
padded at the border) weighted by a 3x3 Gaussian kernel. The reference pixels
come first in the vertex order, followed by the target pixels.
"""
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .exceptions import InputError
from .graph import FidelityData, GaussianSimilarity, GaussianWeights

PIXEL_SCALES = {"unit": 1.0, "byte": 255.0}
INITIAL_VALUE = 0.49


@dataclass(frozen=True)
class ImageTensor:
    """Pixel data of shape ``(height, width, channels)`` with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise InputError("images must have 1 or 3 channels")
        if np.any(~np.isfinite(data)) or data.min() < 0 or data.max() > 1:
            raise InputError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def n_pixels(self):
        return self.height * self.width


def gaussian_kernel3(std=1.0):
    """3x3 Gaussian kernel normalised to sum 1."""
    x = np.arange(-1, 2)
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * std ** 2))
    return g / g.sum()


def extract_features(img, pixel_scale="byte"):
    """Feature matrix of shape ``(height*width, 9*channels)``.

    Row ``i`` (row-major pixel order) holds, for each channel in turn, the
    3x3 patch around pixel ``i`` multiplied by ``9 * kernel``.
    """
    if pixel_scale not in PIXEL_SCALES:
        raise InputError(f"pixel_scale must be one of {list(PIXEL_SCALES)}")
    x = img.data * PIXEL_SCALES[pixel_scale]
    h, w, c = x.shape
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    weights = 9.0 * gaussian_kernel3()
    feats = np.empty((h, w, c, 3, 3))
    for a in range(3):
        for b in range(3):
            feats[:, :, :, a, b] = padded[a:a + h, b:b + w, :] * weights[a, b]
    return feats.reshape(h * w, c * 9)


@dataclass
class SegmentationProblem:
    """Graph weights, fidelity data and initial state for one image pair."""

    weight: GaussianWeights
    fid: FidelityData
    u0: np.ndarray
    n_ref: int
    target_shape: tuple

    @property
    def n(self):
        return self.weight.n

    @property
    def target(self):
        return slice(self.n_ref, self.n)

    def target_labels(self, u):
        """Threshold the target block of ``u`` at 1/2 into an image mask."""
        return (np.asarray(u)[self.target] >= 0.5).reshape(self.target_shape)


def _binary_mask(labels):
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels
    values = np.unique(labels)
    if not np.all(np.isin(values, (0, 1))):
        raise InputError("label mask must be binary (0 and 1)")
    return labels.astype(bool)


def assemble_problem(ref_img, ref_labels, target_img, mu_hat, sim=None,
                     sigma=None, pixel_scale="byte"):
    """Joint graph over reference and target pixels.

    Fidelity ``mu_hat`` acts on every reference pixel with the reference
    labels as targets; the initial state is the labels on the reference and
    0.49 on the target.
    """
    labels = _binary_mask(ref_labels)
    if labels.shape != (ref_img.height, ref_img.width):
        raise InputError("reference labels and image differ in size")
    if ref_img.channels != target_img.channels:
        raise InputError("reference and target have different channel counts")
    if not mu_hat > 0:
        raise InputError(f"mu_hat must be positive, got {mu_hat}")
    feats = np.vstack([extract_features(ref_img, pixel_scale),
                       extract_features(target_img, pixel_scale)])
    if sim is None:
        sim = GaussianSimilarity(sigma=sigma, ell=feats.shape[1])
    weight = GaussianWeights(feats, sim)
    n_ref = ref_img.n_pixels
    n = feats.shape[0]
    fid = FidelityData.from_labels(n, np.arange(n_ref),
                                   labels.ravel().astype(float), mu_hat)
    u0 = np.full(n, INITIAL_VALUE)
    u0[:n_ref] = fid.f_tilde[:n_ref]
    return SegmentationProblem(weight, fid, u0, n_ref,
                               (target_img.height, target_img.width))


def segmentation_error(mask, truth):
    """Fraction of mislabelled pixels."""
    mask, truth = np.asarray(mask, bool), _binary_mask(truth)
    if mask.shape != truth.shape:
        raise InputError("mask and ground truth differ in size")
    return float(np.mean(mask != truth))


def load_image(path):
    """Read an 8- or 16-bit grey or RGB raster into an :class:`ImageTensor`."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=float)
                top = 65535.0
            else:
                if mode not in ("L", "RGB"):
                    im = im.convert("RGB" if mode in ("RGBA", "P", "CMYK")
                                    else "L")
                arr = np.asarray(im, dtype=float)
                top = 255.0
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return ImageTensor(np.clip(arr / top, 0.0, 1.0))


def load_mask(path):
    """Single-channel mask: 0 is background, the maximum value is the class."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except OSError as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from exc
    if arr.ndim == 3:
        if not np.all(arr == arr[:, :, :1]):
            raise InputError("label mask must be single-channel")
        arr = arr[:, :, 0]
    values = np.unique(arr)
    if values.size > 2 or (values.size == 2 and values[0] != 0):
        raise InputError("label mask must contain only 0 and one other value")
    return arr == values[-1] if values[-1] != 0 else np.zeros(arr.shape, bool)


def save_image(arr, path):
    """Write values in [0, 1] (grey or RGB) as an 8-bit image."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)).save(
        path)


BACKGROUND = np.array([0.4, 0.5, 0.35])
FOREGROUND = BACKGROUND + 0.5 * np.array([1.0, -0.5, 0.0])


def _ellipse(h, w, cy, cx, ry, rx):
    y, x = np.mgrid[:h, :w]
    return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0


def _paint(mask, noise, rng):
    # soft edges and smooth shading keep the feature distribution
    # continuous, as in natural photographs
    h, w = mask.shape
    y, x = np.mgrid[:h, :w] / max(h, w)
    shade = 0.75 + 0.25 * np.sin(2.5 * x + 1.5 * y)
    m = ndimage.gaussian_filter(mask.astype(float), 1.0)[:, :, None]
    img = (m * FOREGROUND + (1 - m) * BACKGROUND) * shade[:, :, None]
    if noise:
        img = img + noise * rng.standard_normal(img.shape)
    return ImageTensor(np.clip(img, 0.0, 1.0))


def synthetic_pair(size=40, noise=0.05, seed=0):
    """Two-tone reference/target pair with exact labels.

    Returns ``(ref_img, ref_labels, target_img, target_truth)``. The target
    object is a displaced ellipse; ``noise`` is the standard deviation of
    additive Gaussian noise relative to the full intensity range.
    """
    rng = np.random.default_rng(seed)
    ref_mask = _ellipse(size, size, size * 0.5, size * 0.45, size * 0.3,
                        size * 0.25)
    tgt_mask = _ellipse(size, size, size * 0.45, size * 0.55, size * 0.25,
                        size * 0.32)
    return (_paint(ref_mask, noise, rng), ref_mask,
            _paint(tgt_mask, noise, rng), tgt_mask)


def synthetic_image(size=80, noise=0.05, seed=0):
    """Single two-tone test image (for low-rank benchmarks)."""
    rng = np.random.default_rng(seed)
    mask = _ellipse(size, size, size * 0.5, size * 0.5, size * 0.3,
                    size * 0.35)
    return _paint(mask, noise, rng)
