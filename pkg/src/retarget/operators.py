"""The four width-reducing operators and the 2.5 % step schedule."""
from enum import IntEnum

import numpy as np

from . import kernels
from .imagecore import resize_bilinear

N_STEPS = 20


class Action(IntEnum):
    CRL = 0  # crop left
    CRR = 1  # crop right
    SCL = 2  # uniform horizontal scaling
    SC = 3   # forward-energy seam carving


ACTIONS = tuple(Action)


class ScheduleError(ValueError):
    """Image width does not match the schedule (corrupted trajectory)."""


class StepSchedule:
    """Cumulative width targets: step i ends at round(W * (1 - 0.025 (i + 1)))."""

    def __init__(self, original_width):
        if original_width < 1:
            raise ValueError("original_width must be >= 1")
        self.original_width = int(original_width)
        w = self.original_width
        # exact integer arithmetic, halves round up
        self.targets = tuple(
            max(1, (w * (1000 - 25 * (i + 1)) + 500) // 1000) for i in range(N_STEPS)
        )

    def width_before(self, step):
        return self.original_width if step == 0 else self.targets[step - 1]

    def __repr__(self):
        return f"StepSchedule({self.original_width})"


def crop_left(img, k):
    if not 0 <= k < img.shape[1]:
        raise ValueError(f"cannot crop {k} columns from width {img.shape[1]}")
    return img[:, k:]


def crop_right(img, k):
    if not 0 <= k < img.shape[1]:
        raise ValueError(f"cannot crop {k} columns from width {img.shape[1]}")
    return img[:, :img.shape[1] - k]


def scale_to(img, new_width):
    if not 1 <= new_width <= img.shape[1]:
        raise ValueError(f"scale target {new_width} outside 1..{img.shape[1]}")
    return resize_bilinear(img, new_width, img.shape[0])


def remove_seam(img, seam):
    h, w = img.shape[:2]
    keep = np.ones((h, w), dtype=bool)
    keep[np.arange(h), seam] = False
    return img[keep].reshape((h, w - 1) + img.shape[2:])


def carve_seams(img, k):
    """Remove ``k`` vertical seams one at a time, re-solving after each."""
    h, w = img.shape[:2]
    if not 0 <= k <= w - 1:
        raise ValueError(f"cannot carve {k} seams from width {w}")
    if k == 0:
        return img
    lum = kernels.luminance(img)
    for _ in range(k):
        seam = kernels.find_seam(lum)
        img = remove_seam(img, seam)
        lum = remove_seam(lum, seam)
    return img


def apply_operator(img, action, schedule, step):
    """One operator unit: shrink ``img`` to ``schedule.targets[step]``."""
    if not 0 <= step < N_STEPS:
        raise ScheduleError(f"step {step} outside 0..{N_STEPS - 1}")
    expected = schedule.width_before(step)
    if img.shape[1] != expected:
        raise ScheduleError(
            f"step {step}: image width {img.shape[1]}, schedule expects {expected}")
    target = schedule.targets[step]
    k = img.shape[1] - target
    if k == 0:
        return img
    action = Action(action)
    if action is Action.CRL:
        return crop_left(img, k)
    if action is Action.CRR:
        return crop_right(img, k)
    if action is Action.SCL:
        return scale_to(img, target)
    return carve_seams(img, k)


def rollout(img, actions, schedule):
    """Apply ``actions`` for steps 0, 1, ... and return the final image."""
    for step, a in enumerate(actions):
        img = apply_operator(img, a, schedule, step)
    return img
