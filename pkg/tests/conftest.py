import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def fixture_path():
    def _path(name):
        return os.path.join(FIXTURE_DIR, name)

    return _path


@pytest.fixture
def fresh_runtime(monkeypatch):
    """Reset the roofline runtime with a controlled environment.

    Returns a function(mode=None, filter=None, out=None) that sets the env
    vars, rebuilds the registry, and hands it back. Registries created here
    are marked finalized at teardown so their atexit hooks never write
    stray report files when the test process exits.
    """
    from mperf.roofline import runtime

    created = []

    def _reset(mode=None, loop_filter=None, out=None):
        for var, value in (
            (runtime.ENV_MODE, mode),
            (runtime.ENV_FILTER, loop_filter),
            (runtime.ENV_OUT, out),
        ):
            if value is None:
                monkeypatch.delenv(var, raising=False)
            else:
                monkeypatch.setenv(var, value)
        reg = runtime._reset_state()
        created.append(reg)
        return reg

    yield _reset
    for reg in created:
        reg._finalized = True
    runtime._reset_state()
