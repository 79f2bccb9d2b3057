"""Pluggable task scheduling for hybrid-cloud bag-of-tasks workloads."""

from .algorithms import (
    AlgorithmBase,
    DataAwareProvisioningAlgorithm,
    DeadlinePriorityProvisioningAlgorithm,
    DefaultProvisioningAlgorithm,
    FIFOSchedulingAlgorithm,
    create_algorithm,
    exceed_resource_capacity,
    register_algorithm,
    registered_algorithms,
)
from .config import AlgorithmConfig, ExperimentConfig, load_config
from .context import ApplicationStore, SchedulerContext
from .events import EventBus, EventKind, SchedulingEvent
from .model import QosContract, Resource, SchedulingData, Spread, TaskState, TaskUnit
from .provisioning import PoolKind, ResourcePoolSpec, ResourceProvisioner
from .sim import Simulation, run_experiment
from .workload import FaultEntry, FaultScript, WorkloadSpec, generate_workload

__version__ = "0.1.0"
