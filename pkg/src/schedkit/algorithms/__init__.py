"""Scheduling algorithms and the name registry used by configs and the CLI.

Third-party algorithms subclass :class:`AlgorithmBase` (or one of the
concrete policies) and register a constructor under a new name::

    @register_algorithm("smallest_first")
    class SmallestFirst(FIFOSchedulingAlgorithm):
        ...
"""

from __future__ import annotations

import inspect
from typing import Any, Callable

from ..errors import ConfigInvalid
from .base import AlgorithmBase, AlgorithmDescriptor
from .fifo import FIFOSchedulingAlgorithm
from .provisioning import (
    DataAwareProvisioningAlgorithm,
    DeadlinePriorityProvisioningAlgorithm,
    DefaultProvisioningAlgorithm,
    ProvisionDecision,
    ProvisioningAlgorithm,
    capacity_check,
    estimated_completion,
    exceed_resource_capacity,
)

_REGISTRY: dict[str, Callable[..., AlgorithmBase]] = {}


def register_algorithm(name: str, factory: Callable[..., AlgorithmBase] | None = None):
    """Register ``factory`` under ``name``; usable as a class decorator."""

    def _register(f):
        if name in _REGISTRY:
            raise ValueError(f"algorithm {name!r} is already registered")
        _REGISTRY[name] = f
        return f

    if factory is not None:
        return _register(factory)
    return _register


def unregister_algorithm(name: str) -> None:
    _REGISTRY.pop(name, None)


def registered_algorithms() -> list[str]:
    return sorted(_REGISTRY)


def _accepted_options(factory) -> set[str]:
    inits = []
    if inspect.isclass(factory):
        inits = [k.__dict__["__init__"] for k in factory.__mro__ if "__init__" in k.__dict__]
    else:
        inits = [factory]
    names: set[str] = set()
    for init in inits:
        for pname, param in inspect.signature(init).parameters.items():
            if param.kind not in (param.VAR_KEYWORD, param.VAR_POSITIONAL) and pname != "self":
                names.add(pname)
    return names


def create_algorithm(name: str, **options: Any) -> AlgorithmBase:
    """Build a registered algorithm, dropping options its constructor does not take."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigInvalid(
            f"algorithm.name: unknown algorithm {name!r}; registered: {', '.join(registered_algorithms())}"
        ) from None
    accepted = _accepted_options(factory)
    return factory(**{k: v for k, v in options.items() if k in accepted})


for _cls in (
    FIFOSchedulingAlgorithm,
    DefaultProvisioningAlgorithm,
    DeadlinePriorityProvisioningAlgorithm,
    DataAwareProvisioningAlgorithm,
):
    register_algorithm(_cls.name, _cls)

__all__ = [
    "AlgorithmBase",
    "AlgorithmDescriptor",
    "DataAwareProvisioningAlgorithm",
    "DeadlinePriorityProvisioningAlgorithm",
    "DefaultProvisioningAlgorithm",
    "FIFOSchedulingAlgorithm",
    "ProvisionDecision",
    "ProvisioningAlgorithm",
    "capacity_check",
    "create_algorithm",
    "estimated_completion",
    "exceed_resource_capacity",
    "register_algorithm",
    "registered_algorithms",
    "unregister_algorithm",
]
