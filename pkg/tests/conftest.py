import numpy as np
import pytest

from scoredec.audio_io import Waveform
from scoredec.sde import OuveParams


@pytest.fixture
def params():
    return OuveParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def tone(freq_hz, n, rate=8000, amp=0.5, phase=0.0):
    t = np.arange(n) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * t + phase), rate)


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
