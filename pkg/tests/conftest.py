import numpy as np
import pytest

from hetalloc.model import DeviceType, Kind, RadioConstants, dbm_to_watts

NOISE = dbm_to_watts(-90.8)


@pytest.fixture
def rc():
    return RadioConstants(bandwidth=1e8, period=3e-3, noise=NOISE, epsilon=1e-4)


@pytest.fixture
def mtd1():
    return DeviceType(Kind.MTD, power=0.1, alpha2=0.1, packet_bits=1024, deadline=5e-3, name="mtd1")


@pytest.fixture
def mtd2():
    return DeviceType(Kind.MTD, power=0.1, alpha2=0.1, packet_bits=400, deadline=1.0, name="mtd2")


@pytest.fixture
def htd():
    return DeviceType(Kind.HTD, power=0.5, alpha2=0.1, energy_budget=0.5e-6, name="htd")


def unit_radio(snr=1.0, eps=0.5):
    """W = 1, T = 1, noise chosen so alpha2 * P / noise = snr for P = alpha2 = 1."""
    return RadioConstants(bandwidth=1.0, period=1.0, noise=1.0 / snr, epsilon=eps)


def unit_mtd(bits=1.0, deadline=1.0, **kw):
    return DeviceType(Kind.MTD, power=1.0, alpha2=1.0, packet_bits=bits, deadline=deadline, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in list(sys.modules.items())
                if name.endswith("test_acceptance") and hasattr(m, "ACCEPTANCE_RESULTS")), None)
    if mod is None or not mod.ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.ACCEPTANCE_RESULTS, key=str):
        passed, detail = mod.ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
