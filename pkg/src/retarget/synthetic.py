"""Tiny synthetic corpus with a known best operator per image class.

``ramp`` images are smooth horizontal colour ramps: linear resampling keeps
them nearly intact, while every column removal concentrates error at one
spot, so scaling wins once more than a couple of units are removed.
``band`` images have a flat colour band on the left (wider than the 20
units ever removed) next to column noise: cropping the band is free under
the column-warping distance and everything else is not. Seam carving lands
in the flat band too and ends up with the same image as cropping.
"""
import numpy as np

from .operators import Action

RAMP = "ramp"
BAND = "band"
BEST_ACTION = {RAMP: Action.SCL, BAND: Action.CRL}


def ramp_image(rng, width=40, height=24):
    x = np.arange(width) / (width - 1)
    slope = rng.uniform(0.4, 0.7) * rng.choice([-1.0, 1.0])
    curve = rng.uniform(-0.15, 0.15)
    rows = rng.random(height) * 0.2
    img = np.empty((height, width, 3))
    for c in range(3):
        img[:, :, c] = rng.uniform(0.1, 0.3) + (slope * x + curve * x * x)[None, :] + rows[:, None]
    img -= img.min()
    img /= img.max()
    return img


def band_image(rng, width=40, height=24):
    min_band = width // 2 + 1
    img = np.repeat(rng.random((height, width))[:, :, None], 3, axis=2) * 0.8 + 0.1
    band = int(rng.integers(min_band, min_band + max(1, width // 6)))
    img[:, :band] = rng.uniform(0.2, 0.8, 3)
    return img


def make_corpus(n=64, seed=0, width=40, height=24):
    """``n`` images alternating ramp / band. Returns (images, labels)."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for k in range(n):
        kind = RAMP if k % 2 == 0 else BAND
        gen = ramp_image if kind == RAMP else band_image
        images.append(gen(rng, width, height))
        labels.append(kind)
    return images, labels
