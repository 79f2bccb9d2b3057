import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from schedkit import ExperimentConfig, PoolKind, load_config  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


def walkability() -> ExperimentConfig:
    return load_config(CONFIGS / "walkability.toml")


def walkability_transfer() -> ExperimentConfig:
    return load_config(CONFIGS / "walkability_transfer.toml")


def local_only(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, pools=tuple(p for p in cfg.pools if p.kind is PoolKind.LOCAL))


def baseline() -> ExperimentConfig:
    """FIFO on the single 8-slot worker, no deadline."""
    cfg = local_only(walkability()).with_overrides(algorithm="fifo")
    return replace(cfg, workload=replace(cfg.workload, deadline=None))
