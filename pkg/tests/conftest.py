import numpy as np
import pytest

from mers.embeddings import DistanceMatrix


def line_distances(xs):
    """Euclidean distance matrix for 1-D points."""
    x = np.asarray(xs, dtype=float)
    return DistanceMatrix(np.abs(x[:, None] - x[None, :]), "euclidean")


@pytest.fixture
def line013():
    return line_distances([0.0, 1.0, 3.0])


@pytest.fixture
def line0110():
    return line_distances([0.0, 1.0, 10.0])


def write_pool(directory, seed=0, labels=(0, 1, 2), per_class=12, fmt="csv", views=2):
    """Write a synthetic two-view pool to disk; returns the CLI pool arguments."""
    from mers.embeddings import save_embedding
    from mers.synthetic import two_view_classes

    pool = two_view_classes(np.random.default_rng(seed), list(labels), per_class)
    argv = []
    for v in pool.views[:views]:
        path = directory / f"{v.name}.{fmt}"
        save_embedding(v, path)
        argv += ["--embedding", f"{path}:{v.name}"]
    lab = directory / "labels.txt"
    lab.write_text("".join(f"{int(y)}\n" for y in pool.labels))
    return argv + ["--labels", str(lab)]


@pytest.fixture
def pool_args(tmp_path):
    return write_pool(tmp_path)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
