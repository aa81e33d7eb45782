"""Bi-directional warping distance and pluggable scorers.

The distance aligns the columns of two equal-height images with a monotone,
boundary-anchored warp (steps (i-1, j-1), (i-1, j), (i, j-1)); a column pair
costs the summed squared luminance difference over rows. The score is the
larger of the two directional costs.
"""
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np

from . import kernels
from .imagecore import save_image

LOWER_IS_BETTER = "lower"
HIGHER_IS_BETTER = "higher"


class ScorerError(RuntimeError):
    pass


def _check_heights(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"height mismatch: {a.shape[0]} vs {b.shape[0]}")


def _as_lum(img):
    img = np.asarray(img)
    return img if img.ndim == 2 else kernels.luminance(img)


def directional_warp_cost(source, target):
    _check_heights(source, target)
    cost = kernels.pair_cost(_as_lum(source), _as_lum(target))
    return float(kernels.dtw(cost))


def bdw(original, retargeted):
    _check_heights(original, retargeted)
    cost = kernels.pair_cost(_as_lum(original), _as_lum(retargeted))
    # the reverse direction aligns over the transposed pair-cost table
    forward = float(kernels.dtw(cost))
    backward = float(kernels.dtw(np.ascontiguousarray(cost.T)))
    return max(forward, backward)


@dataclass(frozen=True)
class Scorer:
    """``kind`` is ``"bdw"`` (distance, lower wins) or ``"external"``.

    An external scorer runs ``command <image.ppm>`` and reads one number
    from stdout; higher wins.
    """
    kind: str = "bdw"
    command: str = None

    def __post_init__(self):
        if self.kind not in ("bdw", "external"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external scorer needs a command")

    @property
    def orientation(self):
        return LOWER_IS_BETTER if self.kind == "bdw" else HIGHER_IS_BETTER

    @classmethod
    def parse(cls, spec):
        """``"bdw"`` or ``"external:<command>"``."""
        if spec == "bdw":
            return cls()
        if spec.startswith("external:") and spec[len("external:"):].strip():
            return cls("external", spec[len("external:"):].strip())
        raise ValueError(f"reward must be 'bdw' or 'external:<cmd>', got {spec!r}")

    def better(self, a, b):
        """True if score ``a`` strictly beats ``b``."""
        return a < b if self.orientation == LOWER_IS_BETTER else a > b


def _run_external(command, img):
    fd, path = tempfile.mkstemp(suffix=".ppm")
    os.close(fd)
    try:
        save_image(img, path)
        try:
            proc = subprocess.run(shlex.split(command) + [path],
                                  capture_output=True, text=True, check=False)
        except OSError as exc:
            raise ScorerError(f"cannot run scorer {command!r}: {exc}") from exc
    finally:
        os.unlink(path)
    if proc.returncode != 0:
        raise ScorerError(
            f"scorer {command!r} exited {proc.returncode}: {proc.stderr.strip()}")
    out = proc.stdout.strip()
    try:
        value = float(out)
    except ValueError:
        raise ScorerError(f"scorer {command!r} printed non-numeric output {out!r}") from None
    if not np.isfinite(value):
        raise ScorerError(f"scorer {command!r} printed {out!r}")
    return value


def score(scorer, original, candidate):
    """Return ``(value, orientation)`` for ``candidate``."""
    if scorer.kind == "bdw":
        return bdw(original, candidate), LOWER_IS_BETTER
    return _run_external(scorer.command, candidate), HIGHER_IS_BETTER
