"""Experiment configuration: TOML loading, validation and overrides.

A config file looks like::

    schema = 1
    seed = 1

    [algorithm]
    name = "deadline_priority"

    [[pools]]
    id = "local"
    kind = "local"
    slots_per_instance = 8

    [[pools]]
    id = "azure"
    kind = "on_demand"
    latency = 120
    cost_rate = 0.01

    [workload]
    task_count = 55
    compute_demand = 396
    deadline = "40m"

Durations accept plain seconds or strings such as ``"2100s"``, ``"35m"``
or ``"1h30m"``. Ranges accept a single number or a ``[low, high]`` pair.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algorithms import registered_algorithms
from .errors import ConfigInvalid
from .model import Spread
from .provisioning import PoolKind, ResourcePoolSpec
from .workload import FaultEntry, FaultScript, WorkloadSpec

SCHEMA_VERSION = 1

_DURATION_RE = re.compile(r"((?:\d+(?:\.\d*)?|\.\d+)(?:e[+-]?\d+)?)\s*(h|ms|m|s)?")
_UNIT = {"h": 3600.0, "m": 60.0, "s": 1.0, "ms": 0.001, None: 1.0}


def parse_duration(value: Any) -> float:
    """Seconds from a number or a string like ``"35m"``, ``"90s"``, ``"1h30m"``."""
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, (int, float)):
        if value < 0:
            raise ValueError("durations cannot be negative")
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"not a duration: {value!r}")
    text = value.strip().lower()
    pos, total = 0, 0.0
    while pos < len(text):
        m = _DURATION_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"not a duration: {value!r}")
        total += float(m.group(1)) * _UNIT[m.group(2)]
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    if not text:
        raise ValueError("empty duration")
    return total


def format_duration(seconds: float) -> str:
    if seconds % 60 == 0:
        return f"{int(seconds // 60)}m"
    return f"{seconds!r}s"


@dataclass(frozen=True)
class AlgorithmConfig:
    name: str = "fifo"
    pool: Optional[str] = None
    ceil_ratio: bool = False
    include_transfer_in_mean: Optional[bool] = None
    grow_step: int = 1
    tick_period: float = 30.0
    max_retries: int = 3
    prior_mean: float = 60.0

    def algorithm_options(self) -> dict[str, Any]:
        return {
            "pool": self.pool,
            "ceil_ratio": self.ceil_ratio,
            "grow_step": self.grow_step,
            "tick_period": self.tick_period,
        }


def default_pools() -> tuple[ResourcePoolSpec, ...]:
    """The calibration defaults: one 8-slot local worker plus two cloud pools.

    Latency and price figures are illustrative defaults, not measurements.
    """
    return (
        ResourcePoolSpec("local", PoolKind.LOCAL, slots_per_instance=8),
        ResourcePoolSpec(
            "azure",
            PoolKind.ON_DEMAND,
            slots_per_instance=1,
            speed_factor=0.7,
            deployment_latency=Spread(120.0),
            cost_rate=0.01,
        ),
        ResourcePoolSpec(
            "spot",
            PoolKind.SPOT_LIKE,
            slots_per_instance=1,
            speed_factor=0.7,
            deployment_latency=Spread(180.0, 420.0),
            cost_rate=0.003,
        ),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    workload: WorkloadSpec
    algorithm: AlgorithmConfig = AlgorithmConfig()
    pools: tuple[ResourcePoolSpec, ...] = field(default_factory=default_pools)
    faults: FaultScript = FaultScript()
    seed: int = 0
    output_dir: str = "out"
    horizon: float = 1e7
    sweep_deadlines: tuple[float, ...] = ()
    sweep_algorithms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        validate(self)

    def with_overrides(
        self,
        algorithm: Optional[str] = None,
        deadline: Optional[float] = None,
        seed: Optional[int] = None,
        output_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Command-line values win over file values."""
        cfg = self
        if algorithm is not None:
            cfg = replace(cfg, algorithm=replace(cfg.algorithm, name=algorithm))
        if deadline is not None:
            cfg = replace(cfg, workload=replace(cfg.workload, deadline=deadline))
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg

    def to_dict(self) -> dict[str, Any]:
        w = self.workload
        return {
            "schema": SCHEMA_VERSION,
            "seed": self.seed,
            "algorithm": {k: v for k, v in vars(self.algorithm).items()},
            "pools": [_pool_dict(p) for p in self.pools],
            "workload": {
                "application_id": w.application_id,
                "task_count": w.task_count,
                "compute_demand": _spread_value(w.compute_demand),
                "input_data_size": _spread_value(w.input_data_size),
                "arrival_rate": w.arrival_rate,
                "deadline": w.deadline,
            },
            "faults": [vars(e) for e in self.faults],
        }


def _spread_value(s: Spread):
    return s.low if s.high is None else [s.low, s.high]


def _pool_dict(p: ResourcePoolSpec) -> dict[str, Any]:
    return {
        "id": p.pool_id,
        "kind": p.kind.value,
        "instances": p.instances,
        "slots_per_instance": p.slots_per_instance,
        "speed_factor": p.speed_factor,
        "latency": _spread_value(p.deployment_latency),
        "cost_rate": p.cost_rate,
        "capacity_cap": p.capacity_cap,
        "denial_probability": p.denial_probability,
        "bandwidth": None if math.isinf(p.bandwidth) else p.bandwidth,
    }


def validate(cfg: ExperimentConfig) -> None:
    problems = []
    if cfg.algorithm.name not in registered_algorithms():
        problems.append(
            f"algorithm.name: unknown algorithm {cfg.algorithm.name!r}; "
            f"registered: {', '.join(registered_algorithms())}"
        )
    local = [p for p in cfg.pools if p.kind is PoolKind.LOCAL]
    if len(local) != 1:
        problems.append(f"pools: exactly one local pool required, found {len(local)}")
    ids = [p.pool_id for p in cfg.pools]
    if len(set(ids)) != len(ids):
        problems.append("pools: duplicate pool ids")
    if cfg.algorithm.pool is not None and cfg.algorithm.pool not in ids:
        problems.append(f"algorithm.pool: unknown pool {cfg.algorithm.pool!r}")
    if cfg.algorithm.grow_step < 1:
        problems.append("algorithm.grow_step: must be >= 1")
    if cfg.algorithm.tick_period <= 0:
        problems.append("algorithm.tick_period: must be positive")
    if cfg.algorithm.max_retries < 0:
        problems.append("algorithm.max_retries: must be >= 0")
    if cfg.algorithm.prior_mean < 0:
        problems.append("algorithm.prior_mean: must be >= 0")
    if cfg.horizon <= 0:
        problems.append("horizon: must be positive")
    for name in cfg.sweep_algorithms:
        if name not in registered_algorithms():
            problems.append(f"sweep.algorithms: unknown algorithm {name!r}")
    if problems:
        raise ConfigInvalid(problems)


class _Reader:
    """Pulls typed values out of a parsed TOML table, collecting diagnostics."""

    def __init__(self, problems: list[str]):
        self.problems = problems

    def get(self, table: dict, key: str, path: str, conv, default=None):
        if key not in table:
            return default
        try:
            return conv(table[key])
        except (TypeError, ValueError) as err:
            self.problems.append(f"{path}.{key}: {err}" if path else f"{key}: {err}")
            return default

    def unknown(self, table: dict, allowed: set[str], path: str) -> None:
        for key in sorted(set(table) - allowed):
            self.problems.append(f"{path}.{key}: unknown field" if path else f"{key}: unknown field")


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _str(v) -> str:
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _spread(v) -> Spread:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("a range needs exactly [low, high]")
        return Spread(_float(v[0]), _float(v[1]))
    return Spread(_float(v))


def _duration_spread(v) -> Spread:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("a range needs exactly [low, high]")
        return Spread(parse_duration(v[0]), parse_duration(v[1]))
    return Spread(parse_duration(v))


_POOL_FIELDS = {
    "id", "kind", "instances", "slots_per_instance", "speed_factor", "latency",
    "cost_rate", "capacity_cap", "denial_probability", "bandwidth",
}
_ALGO_FIELDS = {
    "name", "pool", "ceil_ratio", "include_transfer_in_mean", "grow_step",
    "tick_period", "max_retries", "prior_mean",
}
_WORKLOAD_FIELDS = {
    "application_id", "task_count", "compute_demand", "input_data_size", "arrival", "deadline",
}
_TOP_FIELDS = {"schema", "seed", "output", "horizon", "algorithm", "pools", "workload", "faults", "sweep"}


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    problems: list[str] = []
    r = _Reader(problems)
    r.unknown(data, _TOP_FIELDS, "")
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        problems.append(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")

    a = data.get("algorithm", {})
    r.unknown(a, _ALGO_FIELDS, "algorithm")
    algorithm = AlgorithmConfig(
        name=r.get(a, "name", "algorithm", _str, "fifo"),
        pool=r.get(a, "pool", "algorithm", _str),
        ceil_ratio=r.get(a, "ceil_ratio", "algorithm", _bool, False),
        include_transfer_in_mean=r.get(a, "include_transfer_in_mean", "algorithm", _bool),
        grow_step=r.get(a, "grow_step", "algorithm", _int, 1),
        tick_period=r.get(a, "tick_period", "algorithm", parse_duration, 30.0),
        max_retries=r.get(a, "max_retries", "algorithm", _int, 3),
        prior_mean=r.get(a, "prior_mean", "algorithm", parse_duration, 60.0),
    )

    pools = []
    raw_pools = data.get("pools")
    if raw_pools is None:
        pools = list(default_pools())
    for i, p in enumerate(raw_pools or []):
        path = f"pools[{i}]"
        r.unknown(p, _POOL_FIELDS, path)
        pid = r.get(p, "id", path, _str)
        kind = r.get(p, "kind", path, lambda v: PoolKind(_str(v)))
        if pid is None or kind is None:
            problems.append(f"{path}: 'id' and 'kind' are required")
            continue
        bandwidth = r.get(p, "bandwidth", path, _float)
        try:
            pools.append(
                ResourcePoolSpec(
                    pool_id=pid,
                    kind=kind,
                    instances=r.get(p, "instances", path, _int, 1),
                    slots_per_instance=r.get(p, "slots_per_instance", path, _int, 1),
                    speed_factor=r.get(p, "speed_factor", path, _float, 1.0),
                    deployment_latency=r.get(p, "latency", path, _duration_spread, Spread()),
                    cost_rate=r.get(p, "cost_rate", path, _float, 0.0),
                    capacity_cap=r.get(p, "capacity_cap", path, _int),
                    denial_probability=r.get(p, "denial_probability", path, _float, 0.0),
                    bandwidth=math.inf if bandwidth is None else bandwidth,
                )
            )
        except ValueError as err:
            problems.append(f"{path}: {err}")

    w = data.get("workload")
    workload = None
    if not isinstance(w, dict):
        problems.append("workload: section is required")
    else:
        r.unknown(w, _WORKLOAD_FIELDS, "workload")
        arrival_rate = None
        arrival = w.get("arrival", "all_at_start")
        if isinstance(arrival, dict) and set(arrival) == {"poisson"}:
            arrival_rate = r.get(arrival, "poisson", "workload.arrival", _float)
        elif arrival != "all_at_start":
            problems.append("workload.arrival: expected \"all_at_start\" or {poisson = rate}")
        task_count = r.get(w, "task_count", "workload", _int)
        demand = r.get(w, "compute_demand", "workload", _duration_spread)
        if task_count is None or demand is None:
            problems.append("workload: 'task_count' and 'compute_demand' are required")
        else:
            try:
                workload = WorkloadSpec(
                    task_count=task_count,
                    compute_demand=demand,
                    input_data_size=r.get(w, "input_data_size", "workload", _spread, Spread()),
                    arrival_rate=arrival_rate,
                    deadline=r.get(w, "deadline", "workload", parse_duration),
                    application_id=r.get(w, "application_id", "workload", _str, "app"),
                )
            except ValueError as err:
                problems.append(f"workload: {err}")

    entries = []
    for i, f in enumerate(data.get("faults", [])):
        path = f"faults[{i}]"
        r.unknown(f, {"time", "action", "resource"}, path)
        try:
            entries.append(
                FaultEntry(parse_duration(f["time"]), _str(f["action"]), _str(f["resource"]))
            )
        except (KeyError, TypeError, ValueError) as err:
            problems.append(f"{path}: {err}")
    faults = FaultScript()
    try:
        faults = FaultScript(tuple(entries))
    except ValueError as err:
        problems.append(f"faults: {err}")

    s = data.get("sweep", {})
    r.unknown(s, {"deadlines", "algorithms"}, "sweep")
    deadlines = r.get(s, "deadlines", "sweep", lambda v: tuple(parse_duration(x) for x in v), ())
    sweep_algos = r.get(s, "algorithms", "sweep", lambda v: tuple(_str(x) for x in v), ())

    output = r.get(data, "output", "", _str, "out")

    if problems or workload is None:
        raise ConfigInvalid(problems)
    try:
        return ExperimentConfig(
            workload=workload,
            algorithm=algorithm,
            pools=tuple(pools),
            faults=faults,
            seed=r.get(data, "seed", "", _int, 0),
            output_dir=output,
            horizon=r.get(data, "horizon", "", parse_duration, 1e7),
            sweep_deadlines=deadlines,
            sweep_algorithms=sweep_algos,
        )
    except ValueError as err:
        raise ConfigInvalid(str(err)) from None


def load_config(path) -> ExperimentConfig:
    """Parse a TOML config file; relative ``output`` paths stay relative to the working directory."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ConfigInvalid(f"{path}: {err}") from None
    return config_from_dict(data)
