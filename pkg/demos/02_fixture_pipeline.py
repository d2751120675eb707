"""Ingest the bundled toy dataset and print every report.

The fixture under tests/fixtures/e2e holds a four-node catalog, an NVD
export of about fifty CVEs and ten weekly EPSS files with one week missing.
Everything runs offline through the same entry point as the ``pecwe`` CLI,
against a throwaway cache directory.

Run: python3 demos/02_fixture_pipeline.py
"""
from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from pecwe.cli import main

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "e2e"
SPAN = ["--from", "2022-01-05", "--to", "2022-03-16"]


def pecwe(*argv):
    print(f"\n$ pecwe {' '.join(argv)}")
    sys.stdout.flush()
    code = main([*argv, "--cache-dir", cache])
    sys.stdout.flush()
    if code:
        print(f"(exit {code})")


with tempfile.TemporaryDirectory() as cache:
    pecwe("ingest", "catalog", "--catalog-source", str(FIXTURE / "catalog" / "view1003.tsv"))
    pecwe("ingest", "nvd", "--nvd-source", str(FIXTURE / "nvd"))
    # 2022-02-23 is absent from the feed and gets remembered as unpublished
    pecwe("ingest", "epss", "--epss-source", str(FIXTURE / "epss"), "--weekly", *SPAN)

    pecwe("compute", "--cwe", "CWE-89", *SPAN)
    pecwe("classify", *SPAN)
    # the 2022-02-04 model change shows up as its own row, not as a Jump
    pecwe("patterns", "--cwe", "CWE-89", *SPAN)
    pecwe("correlate", *SPAN)
    # a single weakness cannot be ranked against anything: exit 2
    pecwe("correlate", "--cwe", "CWE-79", *SPAN)
