import numpy as np
import pytest

from irt_ensemble.data import ColumnSpec, Dataset


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def make_dataset(X, y, n_classes=None, name="toy"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    k = n_classes or int(max(y.max() + 1, 2))
    schema = tuple(ColumnSpec(f"f{i}") for i in range(X.shape[1]))
    return Dataset(X, y, schema, tuple(str(c) for c in range(k)), name=name)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
