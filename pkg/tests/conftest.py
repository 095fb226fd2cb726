from functools import lru_cache

import pytest

from epproute.circuit import SurfaceCodeSpec, build_memory_experiment
from epproute.embedder import emit_physical_circuit
from epproute.noise import apply_noise_model
from epproute.surface_router import golden_round

LATTICES = ("heavy_hexagonal", "hexagonal")


@lru_cache(maxsize=None)
def tiled(kind, d):
    return golden_round(kind, d)


@lru_cache(maxsize=None)
def physical(kind, d, cancel=False, basis="Z", pack=True):
    tr = tiled(kind, d)
    spec = SurfaceCodeSpec(d, logical_basis=basis)
    return emit_physical_circuit(tr.schedule, spec, tr.device, cancel_cnots=cancel, pack=pack)


@lru_cache(maxsize=None)
def abstract(d, basis="Z"):
    return build_memory_experiment(SurfaceCodeSpec(d, logical_basis=basis), reverse_odd_rounds=True)


def noisy(circuit, p=1e-3, p_swap=None):
    return apply_noise_model(circuit, p, p_swap)


@pytest.fixture(params=LATTICES)
def lattice(request):
    return request.param


# acceptance criteria report: tests call record(), the summary prints one line per criterion
_CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, label: str, ok: bool, detail: str = "") -> bool:
    _CRITERIA.setdefault(criterion, []).append((label, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(_CRITERIA):
        checks = _CRITERIA[c]
        n_ok = sum(ok for _, ok, _ in checks)
        verdict = "PASS" if n_ok == len(checks) else "FAIL"
        tr.write_line(f"criterion {c:2d}: {verdict} ({n_ok}/{len(checks)} checks)")
        for label, ok, detail in checks:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {label}: {detail}")
