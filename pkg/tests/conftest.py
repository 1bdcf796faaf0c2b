import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from enfloc.cascade import PipelineConfig, TrainingItem, train
from enfloc.synth import default_panel, file_seed, synth_recording

SMALL_GRIDS = ("S-A", "S-B", "S-C", "S-D")


def small_corpus(grids=SMALL_GRIDS, types=("power", "audio"), n_files=2, duration=300.0,
                 master=0):
    """In-memory recordings for a few panel grids: list of (Recording, grid, type)."""
    panel = {p.label: p for p in default_panel()}
    out = []
    idx = 0
    for g in grids:
        for dt in types:
            for _ in range(n_files):
                rec, _ = synth_recording(panel[g], dt, duration, 1000, file_seed(master, idx))
                idx += 1
                out.append((rec, g, dt))
    return out


@pytest.fixture(scope="session")
def small_model():
    corpus = small_corpus()
    items = [TrainingItem(rec, g, dt) for rec, g, dt in corpus]
    return train(items, PipelineConfig(cv_folds=2))


@pytest.fixture(scope="session")
def small_tests():
    return small_corpus(n_files=1, duration=200.0, master=1)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for the terminal summary (and echo it for ``-s`` runs)."""

    def record(number, passed, text):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
