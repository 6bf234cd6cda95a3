import numpy as np
import pytest

from leafwet.radar import RadarConfig
from leafwet.scene import ScanGeometry


@pytest.fixture
def small_cfg():
    return RadarConfig(n_freq=16)


@pytest.fixture
def small_geom():
    # 16 x 12 samples at 2 mm, bistatic offset on
    return ScanGeometry.uniform(30.0, 22.0, nx=16, ny=12, delta_T=2.0, z_ref=250.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import report
    if not report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(report.RESULTS, key=lambda c: int(c[1:])):
        ok, detail = report.RESULTS[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
