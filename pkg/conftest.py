import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "narmax_vmp"))

collect_ignore = ["examples"]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale experiment acceptance runs")
