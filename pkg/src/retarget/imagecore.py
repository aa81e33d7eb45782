"""Image arrays, PNG/PPM I/O, bilinear resize and agent observations.

An image is a float64 array of shape (H, W, 3) with samples in [0, 1].
Operators and distances work on floats; quantisation to 8 bits happens only
in :func:`save_image`.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

OBS_SIZE = 40
U_DIM = 20

_FORMATS = {".png": "PNG", ".ppm": "PPM", ".pnm": "PPM"}


class ImageError(ValueError):
    pass


def check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected (H, W, 3) array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError("zero-dimension image")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ImageError("samples must be finite and within [0, 1]")
    return img


def load_image(path):
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise ImageError(f"{path}: unsupported format {im.format}")
            if im.format == "PPM" and im.mode != "RGB":
                # P4/P5 (bitmap/greymap) come back as 1/L; only P6 is accepted
                raise ImageError(f"{path}: only binary RGB PPM (P6) is supported")
            if im.width < 1 or im.height < 1:
                raise ImageError(f"{path}: zero-dimension image")
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ImageError:
        raise
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"{path}: cannot read image ({exc})") from exc
    return rgb.astype(np.float64) / 255.0


def to_uint8(img):
    # round half up; v*255 is never negative here
    return np.floor(np.asarray(img) * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


def save_image(img, path):
    path = Path(path)
    fmt = _FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ImageError(f"{path}: extension must be .png or .ppm")
    img = check_image(img)
    PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format=fmt)


def _sample_positions(n_in, n_out):
    # align-corners; a single output sample sits at the centre of the input
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.floor(pos).astype(np.int64)
    i0 = np.clip(i0, 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    return i0, i1, frac


def resize_bilinear(img, new_width, new_height):
    """Separable bilinear resample (align-corners, edge clamp)."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    img = np.asarray(img)
    h, w = img.shape[:2]
    out = img
    if new_width != w:
        i0, i1, f = _sample_positions(w, new_width)
        f = f[None, :, None].astype(img.dtype)
        out = out[:, i0] * (1 - f) + out[:, i1] * f
    if new_height != h:
        i0, i1, f = _sample_positions(h, new_height)
        f = f[:, None, None].astype(img.dtype)
        out = out[i0] * (1 - f) + out[i1] * f
    if out is img:
        out = img.copy()
    return out


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def encoded_height(width, height):
    """Row count of the 40-wide encoding of a width x height image."""
    return min(OBS_SIZE, max(1, _round_half_up(OBS_SIZE * height / width)))


def encode_original(original):
    """Original resized to width 40 and zero-padded to 40x40x3."""
    h, w = original.shape[:2]
    eh = encoded_height(w, h)
    block = np.zeros((OBS_SIZE, OBS_SIZE, 3), dtype=np.float32)
    block[:eh, :, :] = resize_bilinear(original, OBS_SIZE, eh)
    return block


def encode_current(current, original_width, original_height):
    eh = encoded_height(original_width, original_height)
    ew = max(1, _round_half_up(OBS_SIZE * current.shape[1] / original_width))
    block = np.zeros((OBS_SIZE, OBS_SIZE, 3), dtype=np.float32)
    block[:eh, :ew, :] = resize_bilinear(current, ew, eh)
    return block


def initial_u(i_max):
    """Step vector at the start of an episode: (20 - i_max) zeros then i_max ones."""
    if not 1 <= i_max <= U_DIM:
        raise ValueError(f"i_max must be in 1..{U_DIM}")
    u = np.zeros(U_DIM, dtype=np.float32)
    u[U_DIM - i_max:] = 1.0
    return u


def step_u(u, i_max, i):
    """Vector after finishing step ``i`` (0-based): clears element 20 - i_max + i."""
    u = u.copy()
    u[U_DIM - i_max + i] = 0.0
    return u


@dataclass(frozen=True)
class Observation:
    pixels: np.ndarray  # (40, 40, 6) float32: original RGB then current RGB
    u: np.ndarray       # (20,) float32, ones = remaining steps


def make_observation(original, current, u, original_block=None):
    """Stack the encodings of ``original`` and ``current`` channel-wise.

    ``original_block`` may carry a cached :func:`encode_original` result.
    """
    oh, ow = original.shape[:2]
    if current.shape[0] != oh:
        raise ValueError("current image must keep the original height")
    if current.shape[1] > ow:
        raise ValueError("current image is wider than the original")
    u = np.asarray(u, dtype=np.float32)
    if u.shape != (U_DIM,):
        raise ValueError(f"u must have {U_DIM} entries")
    if original_block is None:
        original_block = encode_original(original)
    pixels = np.concatenate([original_block, encode_current(current, ow, oh)], axis=2)
    return Observation(pixels=pixels, u=u.copy())
