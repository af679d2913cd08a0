import numpy as np
import pytest

ACCEPTANCE_LINES = []


def central_diff(fn, x, step):
    """Plain central differences; deliberately separate from the package's gradcheck module."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return out


def brute_conv(image, kernel, mode="zero"):
    """Direct-definition convolution out(p) = sum_o k(o) I(p - o) with zero or symmetric padding."""
    image = np.asarray(image, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    h, w = image.shape
    ry, rx = k.shape[0] // 2, k.shape[1] // 2

    def pix(y, x):
        if mode == "reflect":
            y = y % (2 * h)
            y = 2 * h - 1 - y if y >= h else y
            x = x % (2 * w)
            x = 2 * w - 1 - x if x >= w else x
            return image[y, x]
        if 0 <= y < h and 0 <= x < w:
            return image[y, x]
        return 0.0

    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            s = 0.0
            for dy in range(-ry, ry + 1):
                for dx in range(-rx, rx + 1):
                    s += k[dy + ry, dx + rx] * pix(y - dy, x - dx)
            out[y, x] = s
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
