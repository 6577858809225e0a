import numpy as np
import pytest

from itsecagg.rngs import FieldSampler


class ScriptedSampler:
    """Sampler returning preset values in order (for pinned examples)."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self, modulus, shape):
        shape = (int(shape),) if np.ndim(shape) == 0 else tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        out = [self.values.pop(0) % modulus.p for _ in range(size)]
        return np.array(out, dtype=object).reshape(shape)

    def nonzero(self, modulus):
        return self.uniform(modulus, 1)[0]


@pytest.fixture
def sampler():
    return FieldSampler(np.random.default_rng(1234))


ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def record():
    """``record(key, ok, detail)`` stores one acceptance line."""

    def _record(key: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE[key])

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k[0]), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
