from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def camera():
    from skimage import data

    return data.camera().astype(float)


def natural_crops(n, size=32, seed=0):
    """``n`` textured crops from bundled grayscale images, each with a 1 px margin."""
    from skimage import data
    from skimage.color import rgb2gray

    imgs = [data.camera().astype(float), rgb2gray(data.astronaut()) * 255,
            data.moon().astype(float), rgb2gray(data.coffee()) * 255]
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        img = imgs[len(out) % len(imgs)]
        y = rng.integers(0, img.shape[0] - size - 2)
        x = rng.integers(0, img.shape[1] - size - 2)
        crop = img[y:y + size + 1, x:x + size + 1]
        if crop.std() > 12:
            out.append(crop)
    return out


# -- acceptance verdicts ---------------------------------------------------------

_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """``verdict(tag, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary.

    ``ok=None`` records an informational line (soft bands, measured tables).
    """
    def record(tag, ok, detail=""):
        word = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"{tag} {word} {detail}".rstrip()
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
