import numpy as np
import pytest

from doorsom.imgcore import GrayImage
from doorsom.synthcorpus import Rect, SceneSpec, render_scene


def step_image(width=40, height=30, boundary=20, lo=0, hi=255, noise=0.0, seed=0):
    """Vertical step: columns < boundary are ``lo``, the rest ``hi``, plus uniform noise."""
    a = np.full((height, width), float(lo))
    a[:, boundary:] = hi
    if noise:
        a += np.random.default_rng(seed).uniform(-noise, noise, a.shape)
    return GrayImage(np.clip(np.rint(a), 0, 255).astype(np.uint8))


def door_spec(**kw) -> SceneSpec:
    """A plain daylight door scene; keyword arguments override fields."""
    base = dict(floor_y=190, concavity=6, gap_height=3, gap_polarity="dark", gap_delta=40.0,
                wall=130.0, door_lum=180.0, floor=80.0)
    base.update(kw)
    if "door" not in base:
        x0, x1 = base.pop("door_x", (120, 180))
        base["door"] = Rect(x0, 40, x1, base["floor_y"] - base["concavity"])
    return SceneSpec(**base)


@pytest.fixture
def door_render():
    return render_scene(door_spec())


@pytest.fixture(scope="session")
def small_corpus():
    from doorsom.synthcorpus import generate_corpus
    return generate_corpus(6, 3)


@pytest.fixture(scope="session")
def small_model(small_corpus):
    from doorsom.pipeline import fit_model, PipelineConfig
    return fit_model(small_corpus, PipelineConfig(), seed=1).model


# one PASS/FAIL line per acceptance criterion at the end of the run
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    num_title = getattr(report, "criterion", None)
    if num_title is None:
        return
    ok = _CRITERIA.get(num_title, True) and report.outcome == "passed"
    _CRITERIA[num_title] = ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}")
