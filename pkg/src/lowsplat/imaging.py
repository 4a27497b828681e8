"""Image container conventions, convolution, quality metrics, and pixel losses.

Images are ``float64`` arrays of shape ``(H, W, 3)`` with intensities in
``[0, 1]``. Files on disk are 8-bit RGB PNG; quantization is
``code = floor(clip(v, 0, 1) * 255 + 0.5)`` (round half up).

All functions here are pure; none mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage
from PIL import UnidentifiedImageError
from scipy import ndimage, signal

from .errors import (
    CorruptDataError,
    DimensionMismatchError,
    InvalidConfigError,
    MissingInputError,
    UnsupportedFormatError,
)

PSNR_CAP_DB = 99.0
PSNR_MSE_FLOOR = 1e-12

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

CHARBONNIER_EPS = 1e-3


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the (H, W, 3) float convention and return the array as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatchError(f"{name}: expected (H, W, 3), got {arr.shape}")
    return arr


def clip_image(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as a float64 image in [0, 1].

    Grayscale PNGs are promoted to three channels. Alpha, palette, and
    high-bit-depth files are rejected: the on-disk contract is 8-bit RGB.
    """
    try:
        f = open(path, "rb")
    except FileNotFoundError as e:
        raise MissingInputError(f"image file not found: {path}") from e
    with f:
        try:
            pil = _PILImage.open(f)
            if pil.format != "PNG":
                raise UnsupportedFormatError(
                    f"{path}: unsupported format {pil.format!r}, expected PNG"
                )
            if pil.mode not in ("RGB", "L"):
                raise UnsupportedFormatError(
                    f"{path}: unsupported PNG mode {pil.mode!r}, expected 8-bit RGB"
                )
            pil.load()
        except UnidentifiedImageError as e:
            raise UnsupportedFormatError(f"{path}: not a recognized raster file") from e
        except OSError as e:
            raise CorruptDataError(f"{path}: corrupt image data ({e})") from e
    if pil.mode == "L":
        pil = pil.convert("RGB")
    codes = np.asarray(pil, dtype=np.float64)
    return codes / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Quantize to 8-bit codes (round half up) and write an RGB PNG."""
    arr = validate_image(img)
    codes = np.floor(clip_image(arr) * 255.0 + 0.5).astype(np.uint8)
    try:
        _PILImage.fromarray(codes, mode="RGB").save(path, format="PNG")
    except (FileNotFoundError, PermissionError) as e:
        raise MissingInputError(f"cannot write image to {path}: {e}") from e


def gaussian_kernel(sigma: float, ksize: int) -> np.ndarray:
    """Normalized 2D Gaussian taps on a ksize x ksize grid centered at the middle.

    taps[i, j] are proportional to exp(-(dx^2 + dy^2) / (2 sigma^2)) on the
    integer offset grid and sum to 1.
    """
    if ksize % 2 == 0 or ksize < 1:
        raise InvalidConfigError(f"kernel size must be odd and >= 1, got {ksize}")
    if not sigma > 0:
        raise InvalidConfigError(f"sigma must be > 0, got {sigma}")
    r = ksize // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    dx2 = ax[None, :] ** 2 + ax[:, None] ** 2
    taps = np.exp(-dx2 / (2.0 * sigma * sigma))
    return taps / taps.sum()


def validate_kernel(kernel: np.ndarray) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise InvalidConfigError(f"kernel must be square with odd size, got {k.shape}")
    return k


def convolve2d(img: np.ndarray, kernel: np.ndarray, border: str = "replicate") -> np.ndarray:
    """Per-channel 2D correlation with replicate border padding.

    Output has the same shape as the input.
    """
    arr = validate_image(img)
    k = validate_kernel(kernel)
    if border != "replicate":
        raise InvalidConfigError(f"unsupported border mode {border!r}")
    out = np.empty_like(arr)
    for c in range(3):
        out[:, :, c] = ndimage.correlate(arr[:, :, c], k, mode="nearest")
    return out


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = validate_image(a, "first image")
    b = validate_image(b, "second image")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, cap_db: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB against peak value 1.0.

    Returns ``cap_db`` when the MSE is below 1e-12 (identical images would
    otherwise give +inf).
    """
    a, b = _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < PSNR_MSE_FLOOR:
        return cap_db
    return -10.0 * math.log10(mse)


def _luma(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=2)


def _ssim_stats(x: np.ndarray, y: np.ndarray):
    """Windowed means/variances/covariance over all fully-contained windows."""
    w = gaussian_kernel(SSIM_SIGMA, SSIM_WINDOW)
    corr = lambda z: signal.correlate2d(z, w, mode="valid")
    ux = corr(x)
    uy = corr(y)
    sxx = corr(x * x) - ux * ux
    syy = corr(y * y) - uy * uy
    sxy = corr(x * y) - ux * uy
    return w, ux, uy, sxx, syy, sxy


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity on the channel-mean luma.

    11x11 Gaussian window (sigma 1.5), constants C1 = 0.01^2 and C2 = 0.03^2;
    only windows fully inside the image contribute, so inputs must be at
    least 11x11. Symmetric in its arguments.
    """
    a, b = _check_same_shape(a, b)
    h, wd = a.shape[:2]
    if h < SSIM_WINDOW or wd < SSIM_WINDOW:
        raise DimensionMismatchError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {h}x{wd}"
        )
    x, y = _luma(a), _luma(b)
    _, ux, uy, sxx, syy, sxy = _ssim_stats(x, y)
    num = (2.0 * ux * uy + SSIM_C1) * (2.0 * sxy + SSIM_C2)
    den = (ux * ux + uy * uy + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass
class LossValue:
    """A scalar loss with its gradient w.r.t. the predicted image."""

    value: float
    gradient: np.ndarray


def pixel_loss(
    pred: np.ndarray,
    target: np.ndarray,
    kind: str = "l2",
    eps: float = CHARBONNIER_EPS,
) -> LossValue:
    """Mean pixel penalty between prediction and target.

    ``l2`` is the mean squared difference; ``charbonnier`` is the mean of
    sqrt(diff^2 + eps^2), a smooth l1 surrogate. The gradient is the analytic
    derivative with respect to ``pred``.
    """
    pred, target = _check_same_shape(pred, target)
    diff = pred - target
    n = diff.size
    if kind == "l2":
        value = float(np.mean(diff * diff))
        grad = 2.0 * diff / n
    elif kind == "charbonnier":
        if not eps > 0:
            raise InvalidConfigError(f"charbonnier eps must be > 0, got {eps}")
        root = np.sqrt(diff * diff + eps * eps)
        value = float(np.mean(root))
        grad = diff / root / n
    else:
        raise InvalidConfigError(f"unknown pixel loss kind {kind!r}")
    return LossValue(value, grad)


def ssim_loss(pred: np.ndarray, target: np.ndarray) -> LossValue:
    """1 - ssim(pred, target) with the analytic gradient w.r.t. ``pred``.

    The gradient scatters each window's closed-form derivative back through
    the Gaussian taps and the channel-mean luma.
    """
    pred, target = _check_same_shape(pred, target)
    h, wd = pred.shape[:2]
    if h < SSIM_WINDOW or wd < SSIM_WINDOW:
        raise DimensionMismatchError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {h}x{wd}"
        )
    x, y = _luma(pred), _luma(target)
    w, ux, uy, sxx, syy, sxy = _ssim_stats(x, y)
    a1 = 2.0 * ux * uy + SSIM_C1
    a2 = 2.0 * sxy + SSIM_C2
    b1 = ux * ux + uy * uy + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    n_windows = s.size

    # d ssim / d x_j for pixel j in window p:
    #   w[j-p] * (g0(p) + y_j * g1(p) + x_j * g2(p))
    # with the per-window fields below; scattering over all windows is a
    # full-mode convolution of those fields with the (symmetric) taps.
    g1 = 2.0 * a1 / (b1 * b2)
    g2 = -2.0 * s / b2
    g0 = 2.0 * uy * (a2 - a1) / (b1 * b2) - 2.0 * s * ux / b1 - g2 * ux

    scatter = lambda g: signal.convolve2d(g, w, mode="full")
    dluma = (scatter(g0) + y * scatter(g1) + x * scatter(g2)) / n_windows

    value = 1.0 - float(np.mean(s))
    grad = np.repeat((-dluma / 3.0)[:, :, None], 3, axis=2)
    return LossValue(value, grad)
