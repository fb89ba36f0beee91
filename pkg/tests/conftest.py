import os
from pathlib import Path

import numpy as np
import pytest

from fclg.graphs import load_tu_dataset
from fclg.synthetic import make_graph_set

DATA_DIR = Path(os.environ.get("FCLG_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))

# criterion number -> (title, status, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def have_dataset(name):
    return any((base / f"{name}_A.txt").exists() for base in (DATA_DIR / name, DATA_DIR))


@pytest.fixture(scope="session")
def tu():
    cache = {}

    def get(name):
        if not have_dataset(name):
            pytest.skip(f"{name} not found under {DATA_DIR} (set FCLG_DATA_DIR)")
        if name not in cache:
            cache[name] = load_tu_dataset(DATA_DIR, name)
        return cache[name]

    return get


@pytest.fixture
def small_set():
    return make_graph_set((12, 12), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status:7s}] {number:2d}. {title}: {detail}")
