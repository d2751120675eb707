from __future__ import annotations

import datetime as dt
import io
from pathlib import Path

import pytest

from pecwe.cli import main
from pecwe.model import CweId, PecweSeries

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"
E2E_FROM, E2E_TO = "2022-01-05", "2022-03-16"


def weekly_series(values, start=dt.date(2021, 4, 14), cwe=CweId(79)) -> PecweSeries:
    return PecweSeries(cwe, tuple((start + dt.timedelta(weeks=i), v) for i, v in enumerate(values)))


def run_cli(*argv, env=None) -> tuple:
    """Run the CLI in-process; returns ``(exit code, stdout text)``."""
    out = io.StringIO()
    code = main([str(a) for a in argv], stdout=out, env={} if env is None else env)
    return code, out.getvalue()


def populate_e2e_cache(cache_dir: Path) -> list:
    """Ingest the end-to-end fixture into ``cache_dir``; returns the ingest outputs."""
    outputs = []
    for argv in (
        ["ingest", "catalog", "--catalog-source", E2E / "catalog" / "view1003.tsv"],
        ["ingest", "nvd", "--nvd-source", E2E / "nvd"],
        ["ingest", "epss", "--epss-source", E2E / "epss", "--from", E2E_FROM, "--to", E2E_TO, "--weekly"],
    ):
        code, out = run_cli(*argv, "--cache-dir", cache_dir)
        assert code == 0, out
        outputs.append(out)
    return outputs


@pytest.fixture(scope="session")
def e2e_cache(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e-cache")
    populate_e2e_cache(root)
    return root


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
