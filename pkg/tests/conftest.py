import numpy as np
import pytest

from coughlab.audio import AudioClip, write_wav
from coughlab.dataset import synth_corpus

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        _criteria.append((marker, report.outcome, report.duration))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _criteria:
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{tag}] {name} ({duration:.1f} s)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def wav_file(tmp_path):
    """Factory writing a clip to a temp WAV and returning its path."""
    counter = iter(range(10 ** 6))

    def make(samples, rate=44100, encoding="pcm16"):
        path = tmp_path / f"clip{next(counter)}.wav"
        write_wav(path, AudioClip(samples, rate), encoding)
        return path

    return make


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three subjects each of healthy and asthma, 3-4 coughs apiece."""
    out = tmp_path_factory.mktemp("small_corpus")
    entries = synth_corpus(out, {"healthy": 3, "asthma": 3}, coughs_per_subject=(3, 4), seed=5)
    return out, entries
