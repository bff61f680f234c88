import pytest
import torch

from mdba.data import load_dataset, load_meta, split_dataset
from mdba.synthetic import FixtureSpec, make_synthetic_dataset

torch.set_num_threads(1)

TINY = FixtureSpec(n_simple=24, n_complex=12, n_val_simple=6, n_val_complex=6,
                   dilation_prob=0.3, extra_blob_prob=0.2, miss_prob=0.5)


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    make_synthetic_dataset(TINY, 0, root)
    return root


@pytest.fixture(scope="session")
def tiny_data(tiny_root):
    meta = load_meta(tiny_root)
    split = split_dataset(load_dataset(tiny_root))
    val = load_dataset(tiny_root, "val")
    return meta, split, val


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
