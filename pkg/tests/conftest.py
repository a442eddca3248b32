import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from regkrylov import problems
from regkrylov.linalg import symmetric_eig

_PROBLEMS = {}
_DECOMPS = {}


@pytest.fixture(scope="session")
def get_problem():
    def _get(name, n, **kw):
        key = (name, n, tuple(sorted(kw.items())))
        if key not in _PROBLEMS:
            _PROBLEMS[key] = problems.generate(name, n, **kw)
        return _PROBLEMS[key]

    return _get


@pytest.fixture(scope="session")
def get_decomp(get_problem):
    def _get(name, n, **kw):
        key = (name, n, tuple(sorted(kw.items())))
        if key not in _DECOMPS:
            _DECOMPS[key] = symmetric_eig(get_problem(name, n, **kw).a)
        return _DECOMPS[key]

    return _get
