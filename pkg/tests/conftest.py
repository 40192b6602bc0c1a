import pytest

from hyperinv.data import glyph_splits
from hyperinv.hypernet import Architecture, ConvLayer
from hyperinv.training import PRETRAIN, pretrain_multitask, synthetic_tasks

# a cheap encoder for 28x28 inputs, shared by the analysis and cli tests
TINY_ARCH = Architecture((ConvLayer(3, 4, 5, stride=4, padding=2),), image_shape=(3, 28, 28))
TINY_TRAIN = PRETRAIN.but(epochs=3, batch_size=32, lr=3e-3)


@pytest.fixture(scope="session")
def tiny_source():
    return glyph_splits("source", 12, 4, seed=5)


@pytest.fixture(scope="session")
def tiny_target():
    return glyph_splits("target", 12, 5, seed=9)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_source):
    return pretrain_multitask(synthetic_tasks(tiny_source[0]), TINY_TRAIN, arch=TINY_ARCH, hidden=8)


# acceptance criteria report: number -> "PASS ..." / "FAIL ..."
ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
