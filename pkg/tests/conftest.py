import pytest

from nvqhl.cli import compare_scans
from nvqhl.config import desk_config
from nvqhl.pipeline import make_truth, run_experiment

ACCEPTANCE_LINES: list[str] = []
SCAN_SEEDS = 5


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line per criterion, live and in the final summary."""
    def emit(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


@pytest.fixture(scope="session")
def desk_truth():
    return make_truth(desk_config())


@pytest.fixture(scope="session")
def desk_run(desk_truth):
    """The desk-scale H+V run shared by several criteria."""
    return run_experiment(desk_config(), desk_truth)


@pytest.fixture(scope="session")
def scan_comparison(desk_run):
    """Final RMSE per scan for SCAN_SEEDS consecutive master seeds."""
    base = desk_config()
    out = []
    for k in range(SCAN_SEEDS):
        cfg = base.with_overrides({"run.seed": base.run.seed + k})
        if k == 0:
            truth = desk_run.truth
            final = {"H+V": desk_run.summaries[-1].rmse_T}
            for name, dirs in (("H", ("H",)), ("V", ("V",))):
                sub = cfg.with_overrides({"grid.directions": dirs})
                final[name] = run_experiment(sub, truth).summaries[-1].rmse_T
        else:
            final = {name: summ[-1].rmse_T for name, summ in compare_scans(cfg).items()}
        out.append((cfg.run.seed, final))
    return out
