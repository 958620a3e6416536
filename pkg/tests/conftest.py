import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from heleshaw.rand_fields import FieldModel

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def two(a, b):
    return {"levels": [a, b], "probs": [0.5, 0.5]}


def checkerboard(A=1.0, B=1.0, F=1.0, G=0.0, cell=1.0, **extra):
    params = {"cell": cell, "A": A, "B": B, "F": F, "G": G, **extra}
    return FieldModel.from_json({"kind": "Checkerboard", "params": params})


def constant(A=1.0, B=0.5, F=2.0, G=0.0):
    data = {"kind": "Constant", "params": {"A": A, "B": B, "F": F, "G": G}}
    if G > 0:
        data["g_mode"] = {"StrictlyPositive": {"G_min": G}}
    return FieldModel.from_json(data)


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"))
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
