import numpy as np
import pytest

from hypersharp.core import ImageCube, PanImage, SensorModel
from hypersharp.synth import SceneSpec, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scene():
    """432 px PAN, 72 px HS, 8 bands."""
    spec = SceneSpec(seed=7, size=432, bands=8)
    hs, pan = generate_scene(spec)
    return spec, hs, pan


def random_pair(rng, h=12, w=12, bands=4, ratio=6):
    hs = ImageCube(rng.random((h, w, bands)) + 0.5)
    pan = PanImage(rng.random((h * ratio, w * ratio)) + 0.5)
    return hs, pan, SensorModel.default(bands, ratio)


# acceptance criteria: one pass/fail line per criterion in the terminal summary
_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    n, text = mark.args
    entry = _criteria.setdefault(n, {"text": text, "ok": True, "notes": []})
    if not report.passed:
        entry["ok"] = False
    if report.when == "call":
        entry["notes"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        tr.write_line(f"criterion {n}: {'PASS' if e['ok'] else 'FAIL'} - {e['text']}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")
