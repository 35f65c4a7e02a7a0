from __future__ import annotations

import functools

import numpy as np
import pytest
import scipy.sparse as sp

from lumpedtet.assembly import AssembledSystem
from lumpedtet.reference_element import build_nodal_basis
from lumpedtet.tables import BUILTIN_IDS, build_element_table

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def table(ident: str):
    return build_element_table(ident)


@functools.lru_cache(maxsize=None)
def basis(ident: str):
    return build_nodal_basis(table(ident))


@pytest.fixture(params=BUILTIN_IDS)
def element_id(request):
    return request.param


def toy_system(mass, stiffness) -> AssembledSystem:
    """Small system from dense arrays, all nodes interior."""
    m = np.atleast_1d(np.asarray(mass, dtype=float))
    a = sp.csr_matrix(np.atleast_2d(np.asarray(stiffness)))
    return AssembledSystem(m, a, np.ones(len(m), dtype=bool))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
