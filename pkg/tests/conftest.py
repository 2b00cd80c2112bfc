import hashlib
import os
import pickle
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

import qndsqueeze

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# "full" runs the acceptance ensembles at their stated sizes; "smoke" shrinks
# trajectory counts and R so the whole file finishes in a couple of minutes.
SCALE = os.environ.get("ACCEPTANCE_SCALE", "full")

# Optional pickle cache for expensive ensembles. Off unless the variable is
# set; keys include a digest of the package sources so edits invalidate it.
_CACHE_DIR = os.environ.get("QNDSQUEEZE_TEST_CACHE")


def _source_digest() -> str:
    h = hashlib.sha256()
    root = Path(qndsqueeze.__file__).parent
    for path in sorted(root.glob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria")
    config.stash[_REPORT] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section(f"acceptance criteria (scale={SCALE})")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``criterion(number, ok, detail)`` logs one pass/fail line and returns ``ok``."""
    lines = request.config.stash[_REPORT]

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


@pytest.fixture(scope="session")
def scale():
    if SCALE not in ("full", "smoke"):
        raise pytest.UsageError("ACCEPTANCE_SCALE must be 'full' or 'smoke'")
    return SCALE


@pytest.fixture(scope="session")
def cached():
    """``cached(key, fn)`` returns ``fn()``, memoised on disk when enabled."""
    digest = _source_digest()

    def get(key, fn):
        if not _CACHE_DIR:
            return fn()
        name = hashlib.sha256(repr((key, digest)).encode()).hexdigest()[:24]
        path = Path(_CACHE_DIR) / f"{name}.pkl"
        if path.exists():
            return pickle.loads(path.read_bytes())
        value = fn()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(pickle.dumps(value))
        return value

    return get
