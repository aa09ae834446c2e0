"""Shared fixtures: a session-wide cache of experiment reports.

Several test modules need the same default-config reports (hard verdicts,
term counts, determinism baselines). Running each experiment once and
sharing the result keeps the suite inside its time budget; the runs are
pure functions of (config, seed), so caching cannot mask anything.
"""

from __future__ import annotations

import pytest

from qflab.lab_cli.experiments import run_experiment


@pytest.fixture(scope="session")
def reports():
    cache: dict = {}

    def get(name: str, threads: int = 1) -> dict:
        key = (name, threads)
        if key not in cache:
            cache[key] = run_experiment(name, threads=threads)
        return cache[key]

    return get
