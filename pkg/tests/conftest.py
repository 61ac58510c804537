import numpy as np
import pytest

from neuralmaps.autodiff import Tape, gradient


def central_difference(f, x, h=1e-6):
    """Gradient of scalar ``f`` at flat ``x`` by central differences."""
    x = np.asarray(x, dtype=np.float64).copy()
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def taped_gradient(nmap, loss_of_layers):
    """(value, flat gradient) of ``loss_of_layers(layers)`` w.r.t. the map's parameters."""
    tape = Tape()
    layers = nmap.bind(tape)
    loss = loss_of_layers(layers)
    return float(loss.value), gradient(loss, layers)


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
