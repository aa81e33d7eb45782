import numpy as np
import pytest

import dataclasses

from retarget.neural import DESK

# the desk net shrunk to two conv layers, 8-wide FCs and an 8-unit LSTM,
# small enough for finite differences
TINY_NET = dataclasses.replace(DESK, conv_channels=(6, 3, 3), conv_strides=(2, 2),
                               fc_sizes=(8, 8, 8), lstm_size=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, w, h):
    return rng.random((h, w, 3))


def write_ppm(path, rgb):
    """Hand-rolled P6 writer, independent of the package's codec."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


# acceptance results, filled by tests/test_acceptance.py: number -> (passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
